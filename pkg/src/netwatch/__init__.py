"""Change-point monitoring of directed temporal networks.

Window estimates of a temporal ERGM (pseudolikelihood coefficients or
averaged network statistics) are tracked with multivariate MCUSUM and
MEWMA control charts whose limits are calibrated by simulation.
"""

from .graph import DirectedGraph, GraphSeries, from_edge_list, new_graph, read_edge_list, set_edge, write_edge_list
from .stats import MONITORED, Term, TermSet, change_stats, compute_stats, descriptive
from .tergm import CharEstimate, Estimator, TergmFit, estimate_series, gof_summary, mple_fit, sbar_estimate, simulate_from_fit
from .simgen import AnomalySpec, GenConfig, TransitionMatrix, convert_asym_to_mutual, generate_series, sample_base_network, stationary_distribution, step_markov
from .charts import ChartConfig, ChartTarget, McusumState, MewmaState, mahalanobis, mcusum_step, mewma_step
from .calib import CalibrationSetup, Pipeline, acf, calibrate_ucl, estimate_arl, estimate_ced, phase1_summary, run_length

__version__ = "0.1.0"

__all__ = [
    "AnomalySpec", "CalibrationSetup", "CharEstimate", "ChartConfig", "ChartTarget", "DirectedGraph",
    "Estimator", "GenConfig", "GraphSeries", "MONITORED", "McusumState", "MewmaState", "Pipeline",
    "Term", "TermSet", "TergmFit", "TransitionMatrix", "acf", "calibrate_ucl", "change_stats",
    "compute_stats", "convert_asym_to_mutual", "descriptive", "estimate_arl", "estimate_ced",
    "estimate_series", "from_edge_list", "generate_series", "gof_summary", "mahalanobis",
    "mcusum_step", "mewma_step", "mple_fit", "new_graph", "phase1_summary", "read_edge_list",
    "run_length", "sample_base_network", "sbar_estimate", "set_edge", "simulate_from_fit",
    "stationary_distribution", "step_markov", "write_edge_list",
]
