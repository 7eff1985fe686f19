import csv
import math

import numpy as np
import pytest

from netwatch.calib import (
    CalibResult,
    CalibrationSetup,
    Pipeline,
    ReplicationBank,
    acf,
    calibrate_ucl,
    ced_study,
    estimate_arl,
    estimate_ced,
    phase1_summary,
    run_length,
    write_ucl_table,
)
from netwatch.charts import ChartConfig, ChartTarget
from netwatch.errors import BracketFailure, NoValidRuns, SingularCovariance, UndefinedAcf
from netwatch.simgen import AnomalySpec, GenConfig, TransitionMatrix
from netwatch.stats import TermSet

SMALL = GenConfig(n_nodes=20, phi=0.05, burn_in=50, base_sweeps=5)
TERMS = TermSet.parse("edges,asymmetric,stability")


def small_setup(seed=1, kind="sbar", jobs=1):
    return CalibrationSetup(SMALL, Pipeline(TERMS, z=3, kind=kind), seed=seed, phase1_series=10, phase1_length=40, jobs=jobs)


def test_phase1_rank_one_and_constant_are_singular():
    with pytest.raises(SingularCovariance):
        phase1_summary([np.array([0.0, 0.0]), np.array([2.0, 2.0])])
    x = [np.array([0.0, 0.0]), np.array([2.0, 2.0])]
    assert np.cov(np.array(x), rowvar=False, ddof=1).tolist() == [[2.0, 2.0], [2.0, 2.0]]
    with pytest.raises(SingularCovariance):
        phase1_summary([np.ones(3)] * 10)


def test_phase1_recovers_spherical_distribution():
    rng = np.random.default_rng(0)
    mu = np.array([1.0, -2.0, 0.5, 3.0])
    s = phase1_summary(rng.normal(mu, 1.0, size=(500, 4)))
    assert np.all(np.abs(s.c_bar - mu) < 3 / math.sqrt(500))
    off = s.s - np.diag(np.diag(s.s))
    assert np.all(np.abs(off).sum(axis=1) < np.diag(s.s))
    assert s.n_samples == 500


def test_run_length_edge_cases():
    target = ChartTarget(np.zeros(2), np.eye(2))
    xs = np.random.default_rng(1).normal(size=(50, 2))
    cfg = ChartConfig("mewma", 0.5)
    assert run_length(cfg, target, iter(xs), 0.0, 50) == (1, False)
    assert run_length(cfg, target, iter(xs), math.inf, 30) == (30, True)
    assert run_length(cfg, target, iter(xs), 3.0, 50) == run_length(cfg, target, iter(xs), 3.0, 50)
    with pytest.raises(ValueError):
        run_length(cfg, target, iter(xs), 1.0, 0)


def test_bank_streams_depend_only_on_replication_index():
    setup = small_setup()
    cfg = ChartConfig("mewma", 1.0)
    a = ReplicationBank(SMALL, setup.pipeline, 6, 1).run_lengths(cfg, setup.target, 6.0, 200)[0]
    b = ReplicationBank(SMALL, setup.pipeline, 10, 1).run_lengths(cfg, setup.target, 6.0, 200)[0]
    assert a.tolist() == b[:6].tolist()


def test_arl_is_monotone_in_ucl_under_common_random_numbers():
    setup = small_setup()
    cfg = ChartConfig("mcusum", 0.5)
    arls = [estimate_arl(cfg, setup, u, 40, 400).arl for u in (0.5, 1.0, 2.0, 3.0, 4.0, 6.0)]
    assert all(a <= b for a, b in zip(arls, arls[1:]))
    assert arls[-1] > arls[0]


def test_censoring_warning():
    setup = small_setup()
    with pytest.warns(UserWarning, match="censored"):
        est = estimate_arl(ChartConfig("mewma", 1.0), setup, 1e9, 5, 10)
    assert est.censored == 5 and est.arl == 10


def test_degenerate_target_gives_zero_ucl():
    res = calibrate_ucl(ChartConfig("mewma", 0.5), small_setup(), 1.0, replications=20)
    assert res.ucl == 0.0 and res.arl_hat == 1.0


def test_calibration_fixed_point_on_fresh_seeds():
    cfg = ChartConfig("mewma", 0.5)
    setup = small_setup(seed=3)
    res = calibrate_ucl(cfg, setup, 10.0, replications=400, tolerance=0.1)
    assert res.bracket[0] <= res.ucl <= res.bracket[1]
    assert abs(res.arl_hat - 10.0) <= 1.0
    fresh = small_setup(seed=4)
    fresh.use_target(setup.target)
    check = estimate_arl(cfg, fresh, res.ucl, 400, 200)
    assert abs(check.arl - 10.0) <= 2 * 0.1 * 10.0
    back = CalibResult.from_dict(res.to_dict())
    assert back.ucl == res.ucl and back.bracket == res.bracket


@pytest.mark.filterwarnings("ignore::netwatch.errors.UnreliableEstimate")
def test_bracket_failure_when_horizon_caps_arl():
    with pytest.raises(BracketFailure):
        calibrate_ucl(ChartConfig("mewma", 1.0), small_setup(), 50.0, replications=5, horizon=20, max_doublings=3)


def test_parallel_and_sequential_agree():
    seq, par = small_setup(jobs=1), small_setup(jobs=2)
    assert np.array_equal(seq.target.sigma, par.target.sigma)
    charts = {ChartConfig("mewma", 1.0): 8.0}
    a = ced_study(charts, seq, [None], replications=6, horizon=50, tau=15)
    b = ced_study(charts, par, [None], replications=6, horizon=50, tau=15)
    ra, rb = a["none"][ChartConfig("mewma", 1.0)], b["none"][ChartConfig("mewma", 1.0)]
    assert ra.delays == rb.delays and ra.valid_runs == rb.valid_runs


def test_extreme_anomaly_is_detected_immediately():
    flip = AnomalySpec("A", tau=15, m1=TransitionMatrix(0.0, 1.0, 1.0, 0.0), name="flip")
    setup = small_setup()
    res = estimate_ced(ChartConfig("mewma", 1.0), setup, flip, 15.0, replications=20, horizon=50)
    assert res.ced == 1.0 and res.valid_runs + res.discarded_false_alarm_runs == 20


def test_all_runs_false_alarm():
    with pytest.raises(NoValidRuns):
        estimate_ced(ChartConfig("mewma", 1.0), small_setup(), AnomalySpec.case("C.3", tau=30), 0.0, replications=5)


def test_grid_ced_reports_every_parameter():
    setup = small_setup()
    grid = {0.5: 9.0, 1.0: 12.0}
    res = estimate_ced(ChartConfig("mewma", 0.7), setup, AnomalySpec.case("B.3", tau=20), grid, replications=10, horizon=100)
    assert set(res.per_param) == {0.5, 1.0}
    assert res.chart["param"] == res.best_param
    assert '"per_param"' in res.to_json()


def test_acf_properties():
    rng = np.random.default_rng(0)
    x = rng.normal(size=2000)
    rho = acf(x, 20)
    assert rho[0] == 1.0
    assert np.mean(np.abs(rho[1:]) < 3 / math.sqrt(2000)) >= 0.95
    with pytest.raises(UndefinedAcf):
        acf(np.full(50, 3.0), 5)
    with pytest.raises(ValueError):
        acf(x[:5], 5)


def test_ucl_table_layout(tmp_path):
    rows = [
        CalibResult(u, 50, 1, 10, (0, 1), arl0, {"kind": "mewma", "param": lam})
        for arl0, lam, u in [(50, 0.5, 22.5), (50, 1.0, 10.4), (100, 0.5, 27.6)]
    ]
    path = tmp_path / "t.csv"
    write_ucl_table(rows, path)
    table = list(csv.reader(path.open()))
    assert table == [["arl0/lambda", "0.5", "1"], ["50", "22.50", "10.40"], ["100", "27.60", ""]]
