"""Sliding-window TERGM estimation, conditional simulation and goodness of fit.

Pseudolikelihood fits treat every dyad cell of every transition
``Y_{u-v} -> Y_u`` in a window as one logistic-regression row with the
change statistics as covariates.  Rows are integer valued, so they are
collapsed into distinct covariate patterns with trial and success counts
before Newton's method runs.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.special import expit

from . import _kernels
from .errors import NonConvergence, WindowTooShort
from .graph import DirectedGraph, GraphSeries
from .stats import (
    TRIAD_NAMES,
    TermSet,
    change_stat_matrices,
    compute_stats,
    degree_distribution,
    esp_distribution,
    geodesic_distribution,
    triad_census,
)

GRAD_TOL = 1e-8
MAX_ITER = 100
MAX_HALVINGS = 20


class Estimator(str, enum.Enum):
    THETA = "theta"
    SBAR = "sbar"


@dataclass(frozen=True)
class CharEstimate:
    values: np.ndarray
    kind: Estimator
    t: int
    z: int
    v: int = 1

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"non-finite estimate at t={self.t}: {values}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", Estimator(self.kind))


@dataclass(frozen=True)
class TergmFit:
    theta: np.ndarray
    iterations: int
    converged: bool
    pooled_dyads: int
    loglik: float
    gradient: np.ndarray
    log: tuple[dict, ...] = field(default=(), repr=False)


@dataclass
class DyadTable:
    """Distinct change-statistic rows with trial counts and successes."""

    x: np.ndarray
    trials: np.ndarray
    successes: np.ndarray

    @property
    def n_rows(self) -> int:
        return int(self.trials.sum())

    @classmethod
    def concat(cls, tables: Iterable[DyadTable]) -> DyadTable:
        tables = list(tables)
        return _compress(
            np.vstack([t.x for t in tables]),
            np.concatenate([t.trials for t in tables]),
            np.concatenate([t.successes for t in tables]),
        )


def _compress(x: np.ndarray, trials: np.ndarray, successes: np.ndarray) -> DyadTable:
    xi = np.rint(x).astype(np.int64)
    lo = xi.min(axis=0)
    span = xi.max(axis=0) - lo + 1
    strides = np.concatenate(([1], np.cumprod(span[:-1])))
    keys = (xi - lo) @ strides
    uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return DyadTable(
        xi[first].astype(float),
        np.bincount(inverse, weights=trials, minlength=uniq.size),
        np.bincount(inverse, weights=successes, minlength=uniq.size),
    )


def transition_table(terms: TermSet, y: DirectedGraph, y_prev: DirectedGraph | None) -> DyadTable:
    delta = change_stat_matrices(terms, y, y_prev)
    off = ~np.eye(y.n_nodes, dtype=bool)
    x = delta[:, off].T
    resp = y.adjacency[off].astype(float)
    return _compress(x, np.ones_like(resp), resp)


def _loglik(table: DyadTable, theta: np.ndarray) -> float:
    eta = table.x @ theta
    return float(table.successes @ eta - table.trials @ np.logaddexp(0.0, eta))


def _separated(table: DyadTable) -> bool:
    """Whether some non-zero direction separates successes from failures."""
    pure_one = table.successes == table.trials
    pure_zero = table.successes == 0
    mixed = ~(pure_one | pure_zero)
    sign = np.where(pure_one, 1.0, -1.0)
    p = table.x.shape[1]
    a_pure = table.x[~mixed] * sign[~mixed, None]
    # maximize sum of signed margins subject to margins >= 0, mixed rows orthogonal
    res = linprog(
        -a_pure.sum(axis=0),
        A_ub=-a_pure,
        b_ub=np.zeros(a_pure.shape[0]),
        A_eq=table.x[mixed] if mixed.any() else None,
        b_eq=np.zeros(int(mixed.sum())) if mixed.any() else None,
        bounds=[(-1, 1)] * p,
        method="highs",
    )
    return bool(res.status == 0 and -res.fun > 1e-9)


def fit_table(table: DyadTable, theta0: np.ndarray | None = None, tol: float = GRAD_TOL, max_iter: int = MAX_ITER) -> TergmFit:
    """Maximize the grouped logistic log-likelihood by damped Newton steps."""
    p = table.x.shape[1]
    theta = np.zeros(p) if theta0 is None else np.array(theta0, dtype=float)
    x, n, s = table.x, table.trials, table.successes
    history: list[dict] = []
    ll = _loglik(table, theta)
    converged = False
    for it in range(max_iter + 1):
        prob = expit(x @ theta)
        grad = x.T @ (s - n * prob)
        w = n * prob * (1.0 - prob)
        info = x.T @ (x * w[:, None])
        gmax = float(np.max(np.abs(grad)))
        history.append({
            "iteration": it,
            "loglik": ll,
            "grad_max": gmax,
            "hessian_max_eig": float(np.linalg.eigvalsh(-info).max()),
        })
        if gmax < tol:
            converged = True
            break
        if it == max_iter:
            break
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise NonConvergence("singular information matrix (collinear terms or separation)", history) from None
        if not np.all(np.isfinite(step)):
            raise NonConvergence("non-finite Newton step", history)
        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = theta + scale * step
            ll_new = _loglik(table, cand)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            scale *= 0.5
        else:
            raise NonConvergence("step halving failed to increase the pseudolikelihood", history)
        history[-1]["step_scale"] = scale
        theta, ll = cand, ll_new

    if not converged:
        raise NonConvergence(f"no convergence after {max_iter} Newton iterations", history)
    if np.max(np.abs(x @ theta)) > 20.0 and _separated(table):
        raise NonConvergence("responses are separated by the change statistics; the estimate diverges", history)
    return TergmFit(theta, len(history) - 1, True, table.n_rows, ll, grad, tuple(history))


def window_tables(window: GraphSeries, terms: TermSet, v: int = 1) -> list[DyadTable]:
    if v < 1:
        raise ValueError("lag v must be >= 1")
    if len(window) < v + 1:
        raise WindowTooShort(f"window of {len(window)} graphs has no transition at lag {v}")
    return [transition_table(terms, window[u], window[u - v]) for u in range(v, len(window))]


def mple_fit(window: GraphSeries, terms: TermSet, v: int = 1) -> TergmFit:
    """Pooled pseudolikelihood fit over all lag-``v`` transitions inside ``window``."""
    return fit_table(DyadTable.concat(window_tables(window, terms, v)))


def sbar_estimate(window: GraphSeries, terms: TermSet, v: int = 1) -> CharEstimate:
    """Average statistic over the responses of ``window``.

    The first ``v`` graphs only serve as predecessors, so a window of
    ``z + v`` graphs averages ``z`` statistic vectors.
    """
    if len(window) < v + 1:
        raise WindowTooShort(f"window of {len(window)} graphs has no transition at lag {v}")
    vecs = [compute_stats(terms, window[u], window[u - v]) for u in range(v, len(window))]
    return CharEstimate(np.mean(vecs, axis=0), Estimator.SBAR, window.end, len(vecs), v)


class EstimateStream:
    """Online window estimator fed one graph at a time.

    After ``z + v`` graphs have arrived, every ``stride``-th call to
    :meth:`push` returns the estimate for the newest time point.
    Per-transition work is cached, so each push costs one transition.
    """

    def __init__(self, terms: TermSet, z: int, v: int = 1, kind: Estimator | str = Estimator.THETA, stride: int = 1, start: int = 1):
        if z < 1:
            raise WindowTooShort(f"window size z must be >= 1, got {z}")
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.terms, self.z, self.v, self.stride = terms, z, v, stride
        self.kind = Estimator(kind)
        self.t = start - 1
        self.first_t = start + z + v - 1
        self._graphs: deque[DirectedGraph] = deque(maxlen=v + 1)
        self._items: deque = deque(maxlen=z)
        self._theta = None

    def push(self, graph: DirectedGraph) -> CharEstimate | None:
        self.t += 1
        self._graphs.append(graph)
        if len(self._graphs) <= self.v:
            return None
        prev = self._graphs[0]
        emit = self.t >= self.first_t and (self.t - self.first_t) % self.stride == 0
        # transitions that can never reach an emitted window are skipped
        next_emit = self.first_t if self.t < self.first_t else self.t + (-(self.t - self.first_t)) % self.stride
        if next_emit - self.t >= self.z:
            self._items.append(None)
            return None
        if self.kind is Estimator.THETA:
            self._items.append(transition_table(self.terms, graph, prev))
        else:
            self._items.append(compute_stats(self.terms, graph, prev))
        if not emit:
            return None
        if self.kind is Estimator.THETA:
            fit = fit_table(DyadTable.concat(self._items), theta0=self._theta)
            self._theta = fit.theta
            values = fit.theta
        else:
            values = np.mean(self._items, axis=0)
        return CharEstimate(values, self.kind, self.t, self.z, self.v)

    def feed(self, graphs: Iterable[DirectedGraph]) -> Iterator[CharEstimate]:
        for g in graphs:
            est = self.push(g)
            if est is not None:
                yield est


def estimate_series(series: GraphSeries, terms: TermSet, z: int, v: int = 1, kind: Estimator | str = Estimator.THETA, stride: int = 1) -> list[CharEstimate]:
    """Window estimates at ``start+z+v-1, start+z+v-1+stride, ...``.

    Each estimate at ``t`` uses graphs ``t-z-v+1 .. t``: ``z`` transitions
    (or ``z`` statistic vectors) plus ``v`` leading predecessors.
    """
    if len(series) < z + v:
        raise WindowTooShort(f"series of length {len(series)} is shorter than z + v = {z + v}")
    stream = EstimateStream(terms, z, v, kind, stride, start=series.start)
    return list(stream.feed(series))


# conditional simulation


def simulate_from_fit(fit: TergmFit | np.ndarray, terms: TermSet, y_prev: DirectedGraph, sweeps: int, rng: np.random.Generator, y_start: DirectedGraph | None = None) -> DirectedGraph:
    """Gibbs sampler on dyad cells conditional on ``y_prev``.

    Starts from ``y_start`` (default ``y_prev``); each sweep updates every
    cell once in random order from its full conditional.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    theta = fit.theta if isinstance(fit, TergmFit) else np.asarray(fit, dtype=float)
    coef = terms.slot_coefficients(theta)
    n = y_prev.n_nodes
    y = (y_start if y_start is not None else y_prev).adjacency.astype(np.uint8)
    yp = y_prev.adjacency.astype(np.uint8)
    rows, cols = np.nonzero(~np.eye(n, dtype=bool))
    rows, cols = rows.astype(np.int64), cols.astype(np.int64)
    for _ in range(sweeps):
        _kernels.gibbs_sweep(y, yp, coef, rows, cols, rng.permutation(rows.shape[0]), rng.random(rows.shape[0]))
    return DirectedGraph(y.astype(bool), copy=False)


# goodness of fit

GOF_FAMILIES = ("idegree", "odegree", "esp", "distance", "triadcensus")


def _gof_vectors(g: DirectedGraph) -> dict[str, np.ndarray]:
    return {
        "idegree": degree_distribution(g, "in"),
        "odegree": degree_distribution(g, "out"),
        "esp": esp_distribution(g),
        "distance": geodesic_distribution(g),
        "triadcensus": triad_census(g),
    }


def _gof_labels(family: str, size: int) -> list[str]:
    if family == "triadcensus":
        return list(TRIAD_NAMES)
    if family == "distance":
        return [str(d) for d in range(1, size)] + ["inf"]
    return [str(d) for d in range(size)]


@dataclass(frozen=True)
class GofBin:
    label: str
    min: float
    q1: float
    median: float
    q3: float
    max: float
    observed: float

    @property
    def covered(self) -> bool:
        return self.q1 <= self.observed <= self.q3


@dataclass
class GofReport:
    families: dict[str, list[GofBin]]
    n_sims: int
    transitions: int

    def coverage(self) -> float:
        bins = [b for fam in self.families.values() for b in fam]
        return sum(b.covered for b in bins) / len(bins)

    def to_dict(self) -> dict:
        return {
            "n_sims": self.n_sims,
            "transitions": self.transitions,
            "coverage": self.coverage(),
            "families": {
                name: [vars(b) for b in bins] for name, bins in self.families.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_text(self) -> str:
        lines = []
        for name, bins in self.families.items():
            lines.append(f"[{name}]")
            lines.append("bin,min,q1,median,q3,max,observed_median")
            for b in bins:
                lines.append(f"{b.label},{b.min:g},{b.q1:g},{b.median:g},{b.q3:g},{b.max:g},{b.observed:g}")
            lines.append("")
        return "\n".join(lines)


def gof_summary(fit: TergmFit | np.ndarray, terms: TermSet, observed: GraphSeries, n_sims: int, rng: np.random.Generator, v: int = 1, sweeps: int = 10) -> GofReport:
    """Simulated-versus-observed distributions of structural statistics.

    For every transition in ``observed``, ``n_sims`` networks are drawn
    conditional on the predecessor; simulated values are pooled per bin and
    summarized by five quantiles next to the median of the observed graphs.
    Trailing bins that are zero everywhere are trimmed (the unreachable
    bucket of the distance family is always kept).
    """
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    if len(observed) < v + 1:
        raise WindowTooShort("goodness of fit needs at least one transition")
    sims: dict[str, list[np.ndarray]] = {f: [] for f in GOF_FAMILIES}
    obs: dict[str, list[np.ndarray]] = {f: [] for f in GOF_FAMILIES}
    for u in range(v, len(observed)):
        for fam, vec in _gof_vectors(observed[u]).items():
            obs[fam].append(vec)
        for _ in range(n_sims):
            g = simulate_from_fit(fit, terms, observed[u - v], sweeps, rng)
            for fam, vec in _gof_vectors(g).items():
                sims[fam].append(vec)
    families = {}
    for fam in GOF_FAMILIES:
        s = np.array(sims[fam], dtype=float)
        o = np.median(np.array(obs[fam], dtype=float), axis=0)
        labels = _gof_labels(fam, s.shape[1])
        keep = s.shape[1]
        if fam in ("idegree", "odegree", "esp"):
            nz = np.flatnonzero((s.max(axis=0) > 0) | (o > 0))
            keep = int(nz[-1]) + 2 if nz.size else 1
            keep = min(keep, s.shape[1])
        elif fam == "distance":
            finite = s[:, :-1]
            nz = np.flatnonzero((finite.max(axis=0) > 0) | (o[:-1] > 0))
            cut = int(nz[-1]) + 1 if nz.size else 0
            s = np.hstack([finite[:, :cut], s[:, -1:]])
            o = np.append(o[:cut], o[-1])
            labels = labels[:cut] + ["inf"]
            keep = s.shape[1]
        q = np.quantile(s[:, :keep], [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)
        families[fam] = [
            GofBin(labels[b], *(float(v_) for v_ in q[:, b]), float(o[b])) for b in range(keep)
        ]
    return GofReport(families, n_sims, len(observed) - v)
