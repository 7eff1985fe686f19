"""Phase-I targets, Monte-Carlo run lengths, UCL calibration and delay studies.

Every replication draws from its own seed stream, so results do not depend
on evaluation order or on the number of worker processes.  Calibration
keeps one lazily extended estimate stream per replication and re-uses it
for every candidate UCL (common random numbers); without resets a chart's
statistic does not depend on the UCL, so the empirical ARL is an exactly
monotone step function of the UCL.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import warnings
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .charts import ChartConfig, ChartKind, ChartTarget, chart_step, statistic_trace
from .errors import BracketFailure, NoValidRuns, SingularCovariance, UndefinedAcf, UnreliableEstimate
from .simgen import AnomalySpec, GenConfig, MarkovNetworkProcess, replication_rng
from .stats import MONITORED, TermSet
from .tergm import CharEstimate, EstimateStream, Estimator

log = logging.getLogger(__name__)

STREAM_PHASE1 = 1
STREAM_ARL = 2
STREAM_CED = 3

MEWMA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))
MCUSUM_GRID = tuple(round(0.5 + 0.1 * i, 1) for i in range(11))


@dataclass(frozen=True)
class Pipeline:
    """How estimates are produced from a graph stream."""

    terms: TermSet = MONITORED
    z: int = 7
    v: int = 1
    kind: Estimator = Estimator.THETA

    def __post_init__(self):
        object.__setattr__(self, "kind", Estimator(self.kind))
        if not isinstance(self.terms, TermSet):
            object.__setattr__(self, "terms", TermSet.parse(self.terms))
        if self.z < 1 or self.v < 1:
            raise ValueError("z and v must be >= 1")

    def stream(self, start: int = 1) -> EstimateStream:
        return EstimateStream(self.terms, self.z, self.v, self.kind, 1, start)

    def to_dict(self) -> dict:
        return {"terms": list(self.terms.names), "z": self.z, "v": self.v, "kind": self.kind.value}


def default_jobs() -> int:
    return os.cpu_count() or 1


def _pmap(fn: Callable, items: Sequence, jobs: int | None) -> list:
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


# Phase I


@dataclass(frozen=True)
class PhaseISummary:
    c_bar: np.ndarray
    s: np.ndarray
    n_samples: int

    def target(self) -> ChartTarget:
        return ChartTarget(self.c_bar, self.s)

    def to_dict(self) -> dict:
        return {"c_bar": self.c_bar.tolist(), "s": self.s.tolist(), "n_samples": self.n_samples}


def phase1_summary(estimates: Sequence) -> PhaseISummary:
    """Sample mean and unbiased sample covariance of Phase-I estimates."""
    kinds = {getattr(e, "kind", None) for e in estimates}
    if len(kinds) > 1:
        raise ValueError(f"Phase-I estimates mix kinds {sorted(str(k) for k in kinds)}")
    x = np.array([np.asarray(getattr(e, "values", e), dtype=float) for e in estimates])
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("Phase-I summary needs at least two estimates of equal dimension")
    n, p = x.shape
    c_bar = x.mean(axis=0)
    s = np.cov(x, rowvar=False, ddof=1).reshape(p, p)
    if n <= p or np.linalg.matrix_rank(s) < p:
        raise SingularCovariance(
            f"Phase-I covariance is singular ({n} samples, dimension {p}); "
            "add a ridge to its diagonal or collect more Phase-I data"
        )
    return PhaseISummary(c_bar, s, n)


def _phase1_series(args) -> np.ndarray:
    gen_cfg, pipeline, length, seed, index = args
    proc = MarkovNetworkProcess(gen_cfg, replication_rng(seed, index, STREAM_PHASE1))
    stream = pipeline.stream()
    return np.array([e.values for e in stream.feed(proc.advance() for _ in range(length))])


def simulate_phase1(gen_cfg: GenConfig, pipeline: Pipeline, n_series: int = 1, length: int = 2500, seed: int = 0, jobs: int | None = 1) -> PhaseISummary:
    """Phase-I target from ``n_series`` independent in-control runs of ``length`` graphs.

    The default is a single long run.  For slowly mixing estimate streams the
    resulting covariance has few effective samples, so UCLs calibrated
    against it vary noticeably with the seed; raise ``n_series`` to
    stabilize it.
    """
    if length < pipeline.z + pipeline.v + 1:
        raise ValueError(f"Phase-I series length {length} leaves fewer than two estimates")
    blocks = _pmap(_phase1_series, [(gen_cfg, pipeline, length, seed, i) for i in range(n_series)], jobs)
    return phase1_summary(np.vstack(blocks))


# run lengths


def run_length(chart_cfg: ChartConfig, target: ChartTarget, estimate_stream: Iterable, ucl: float, horizon: int) -> tuple[int, bool]:
    """First signal index (1-based) of a fresh chart, or ``(horizon, True)`` if censored."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    state = chart_cfg.initial_state(target.p)
    for k, est in enumerate(estimate_stream, start=1):
        state, out = chart_step(state, est, target, ucl, False)
        if out.signal:
            return k, False
        if k >= horizon:
            break
    return horizon, True


class _Replication:
    """In-control graph process plus its cached estimate stream."""

    def __init__(self, gen_cfg: GenConfig, pipeline: Pipeline, rng: np.random.Generator, anomaly: AnomalySpec | None = None):
        self.proc = MarkovNetworkProcess(gen_cfg, rng, anomaly)
        self.stream = pipeline.stream()
        self.values: list[np.ndarray] = []
        self.times: list[int] = []

    def extend(self, n: int) -> None:
        while len(self.values) < n:
            est = self.stream.push(self.proc.advance())
            if est is not None:
                self.values.append(est.values)
                self.times.append(est.t)

    def extend_to_time(self, t: int) -> None:
        while self.proc.t < t:
            est = self.stream.push(self.proc.advance())
            if est is not None:
                self.values.append(est.values)
                self.times.append(est.t)


def _prefill(args) -> _Replication:
    gen_cfg, pipeline, seed, index, n = args
    rep = _Replication(gen_cfg, pipeline, replication_rng(seed, index, STREAM_ARL))
    rep.extend(n)
    return rep


class ReplicationBank:
    """Lazily extended in-control estimate streams shared across UCL candidates."""

    def __init__(self, gen_cfg: GenConfig, pipeline: Pipeline, replications: int, seed: int, jobs: int | None = 1):
        if replications < 2:
            raise ValueError("at least two replications are needed")
        self.gen_cfg, self.pipeline, self.seed, self.jobs = gen_cfg, pipeline, seed, jobs
        self.n = replications
        self._reps: list[_Replication | None] = [None] * replications
        self._traces: dict[tuple, list] = {}

    def prefill(self, length: int) -> None:
        todo = [i for i, r in enumerate(self._reps) if r is None or len(r.values) < length]
        done = _pmap(_prefill, [(self.gen_cfg, self.pipeline, self.seed, i, length) for i in todo if self._reps[i] is None], self.jobs)
        for i, rep in zip([i for i in todo if self._reps[i] is None], done):
            self._reps[i] = rep
        for i in todo:
            self._reps[i].extend(length)

    def replication(self, i: int) -> _Replication:
        if self._reps[i] is None:
            self._reps[i] = _Replication(self.gen_cfg, self.pipeline, replication_rng(self.seed, i, STREAM_ARL))
        return self._reps[i]

    def trace(self, cfg: ChartConfig, target: ChartTarget, i: int, length: int) -> np.ndarray:
        key = (cfg.kind, cfg.param, id(target))
        per_rep = self._traces.setdefault(key, [None] * self.n)
        cached = per_rep[i]
        stats, state = cached if cached is not None else (np.empty(0), None)
        if stats.shape[0] < length:
            rep = self.replication(i)
            rep.extend(length)
            more, state = statistic_trace(cfg, target, rep.values[stats.shape[0]:length], state)
            stats = np.concatenate([stats, more])
            per_rep[i] = (stats, state)
        return stats

    def run_lengths(self, cfg: ChartConfig, target: ChartTarget, ucl: float, cap: int) -> tuple[np.ndarray, np.ndarray]:
        """``min(RL, cap)`` per replication and whether a signal was found."""
        rl = np.empty(self.n, dtype=np.int64)
        found = np.zeros(self.n, dtype=bool)
        for i in range(self.n):
            cached = self._traces.get((cfg.kind, cfg.param, id(target)), [None] * self.n)[i]
            length = cached[0].shape[0] if cached is not None else 0
            length = max(min(length, cap), min(cap, 64))
            while True:
                stats = self.trace(cfg, target, i, length)[:length]
                hit = np.flatnonzero(stats >= ucl)
                if hit.size:
                    rl[i], found[i] = hit[0] + 1, True
                    break
                if length >= cap:
                    rl[i] = cap
                    break
                length = min(cap, 2 * length)
        return rl, found


@dataclass
class ArlEstimate:
    arl: float
    se: float
    replications: int
    censored: int
    horizon: int
    exact: bool = True
    warnings: list[str] = field(default_factory=list)


def _arl_from(rl: np.ndarray, found: np.ndarray, cap: int, exact: bool) -> ArlEstimate:
    n = rl.shape[0]
    censored = int((~found).sum())
    est = ArlEstimate(float(rl.mean()), float(rl.std(ddof=1) / math.sqrt(n)), n, censored, cap, exact)
    if exact and censored >= 0.2 * n:
        msg = f"{censored} of {n} runs censored at horizon {cap}; ARL is underestimated"
        est.warnings.append(msg)
        warnings.warn(msg, UnreliableEstimate, stacklevel=3)
    elif exact and censored:
        est.warnings.append(f"{censored} of {n} runs censored at horizon {cap}")
    return est


@dataclass
class CalibrationSetup:
    """Everything a calibration or delay study needs besides the chart."""

    gen_cfg: GenConfig = field(default_factory=GenConfig)
    pipeline: Pipeline = field(default_factory=Pipeline)
    seed: int = 0
    phase1_series: int = 1
    phase1_length: int = 2500
    jobs: int | None = 1
    _target: ChartTarget | None = field(default=None, repr=False)
    _phase1: PhaseISummary | None = field(default=None, repr=False)
    _banks: dict = field(default_factory=dict, repr=False)

    @property
    def phase1(self) -> PhaseISummary:
        if self._phase1 is None:
            self._phase1 = simulate_phase1(self.gen_cfg, self.pipeline, self.phase1_series, self.phase1_length, self.seed, self.jobs)
        return self._phase1

    @property
    def target(self) -> ChartTarget:
        if self._target is None:
            self._target = self.phase1.target()
        return self._target

    def use_target(self, target: ChartTarget) -> None:
        self._target = target

    def bank(self, replications: int) -> ReplicationBank:
        if replications not in self._banks:
            self._banks[replications] = ReplicationBank(self.gen_cfg, self.pipeline, replications, self.seed, self.jobs)
        return self._banks[replications]


def estimate_arl(chart_cfg: ChartConfig, setup: CalibrationSetup, ucl: float, replications: int, horizon: int) -> ArlEstimate:
    """In-control ARL of a freshly started chart at ``ucl``, with its standard error."""
    if replications < 2:
        raise ValueError("replications must be >= 2")
    bank = setup.bank(replications)
    rl, found = bank.run_lengths(chart_cfg, setup.target, ucl, horizon)
    return _arl_from(rl, found, horizon, True)


@dataclass
class CalibResult:
    ucl: float
    arl_hat: float
    arl_se: float
    replications: int
    bracket: tuple[float, float]
    arl0_target: float = 0.0
    chart: dict = field(default_factory=dict)
    pipeline: dict = field(default_factory=dict)
    target: dict = field(default_factory=dict)
    evaluations: list[tuple[float, float, bool]] = field(default_factory=list)
    converged: bool = True
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> CalibResult:
        d = dict(d)
        d["bracket"] = tuple(d["bracket"])
        d["evaluations"] = [tuple(e) for e in d.get("evaluations", [])]
        return cls(**d)


def calibrate_ucl(chart_cfg: ChartConfig, setup: CalibrationSetup, arl0_target: float, replications: int = 500, tolerance: float = 0.02, horizon: int | None = None, ucl0: float | None = None, max_bisections: int = 30, max_doublings: int = 20) -> CalibResult:
    """Find the UCL whose in-control ARL matches ``arl0_target``.

    The root is bracketed by doubling an upper candidate and then refined by
    bisection until the ARL is within ``tolerance * arl0_target`` of the
    target.  ARL evaluations stop early once a lower bound built from
    partially simulated runs already exceeds the acceptable band.
    """
    if not arl0_target >= 1:
        raise ValueError("arl0_target must be >= 1")
    if not 0 < tolerance <= 0.2:
        raise ValueError("tolerance must lie in (0, 0.2]")
    horizon = int(horizon or 20 * arl0_target)
    target = setup.target
    bank = setup.bank(replications)
    bank.prefill(min(horizon, int(2 * arl0_target) + 1))
    hi_ok = arl0_target * (1 + tolerance)
    lo_ok = arl0_target * (1 - tolerance)
    evaluations = []

    def evaluate(ucl: float) -> ArlEstimate:
        cap = min(horizon, max(64, int(4 * arl0_target)))
        while True:
            rl, found = bank.run_lengths(chart_cfg, target, ucl, cap)
            if found.all() or cap >= horizon:
                est = _arl_from(rl, found, cap, True)
                break
            if rl.mean() > hi_ok:
                est = _arl_from(rl, found, cap, False)
                break
            cap = min(horizon, 2 * cap)
        evaluations.append((float(ucl), est.arl, est.exact))
        log.debug("ucl=%.5g arl=%.4g%s", ucl, est.arl, "" if est.exact else " (lower bound)")
        return est

    def done(est: ArlEstimate) -> bool:
        return est.exact and lo_ok <= est.arl <= hi_ok

    def result(ucl, est, lo, hi, converged=True) -> CalibResult:
        return CalibResult(
            float(ucl), est.arl, est.se, replications, (float(lo), float(hi)), float(arl0_target),
            {"kind": chart_cfg.kind.value, "param": chart_cfg.param}, setup.pipeline.to_dict(),
            target.to_dict(), evaluations, converged, list(est.warnings),
        )

    est0 = evaluate(0.0)
    if done(est0) or est0.arl >= arl0_target:
        return result(0.0, est0, 0.0, 0.0)

    lo, est_lo = 0.0, est0
    hi = ucl0 if ucl0 else _initial_guess(bank, chart_cfg, target)
    for _ in range(max_doublings + 1):
        est_hi = evaluate(hi)
        if done(est_hi):
            return result(hi, est_hi, lo, hi)
        if est_hi.arl > arl0_target:
            break
        lo, est_lo = hi, est_hi
        hi *= 2.0
    else:
        raise BracketFailure(f"no UCL up to {hi / 2:g} reaches ARL {arl0_target:g}")

    best = min(((lo, est_lo), (hi, est_hi)), key=lambda p: abs(p[1].arl - arl0_target))
    for _ in range(max_bisections):
        mid = 0.5 * (lo + hi)
        est = evaluate(mid)
        if done(est):
            return result(mid, est, lo, hi)
        if est.exact and abs(est.arl - arl0_target) < abs(best[1].arl - arl0_target):
            best = (mid, est)
        if est.arl > arl0_target:
            hi = mid
        else:
            lo = mid
    ucl, est = best
    if not est.exact:
        est = evaluate(ucl)
    res = result(ucl, est, lo, hi, converged=False)
    res.warnings.append(f"ARL within tolerance not reached after {max_bisections} bisections (step function of ucl)")
    return res


def _initial_guess(bank: ReplicationBank, cfg: ChartConfig, target: ChartTarget) -> float:
    stats = np.concatenate([bank.trace(cfg, target, i, 16) for i in range(min(bank.n, 50))])
    return float(max(np.quantile(stats, 0.9), 1e-3))


# conditional expected delay


@dataclass
class CedResult:
    ced: float
    valid_runs: int
    discarded_false_alarm_runs: int
    se: float = float("nan")
    censored: int = 0
    anomaly: str = "none"
    chart: dict = field(default_factory=dict)
    per_param: dict[float, float] = field(default_factory=dict)
    per_param_valid: dict[float, int] = field(default_factory=dict)
    delays: list[int] = field(default_factory=list, repr=False)

    @property
    def replications(self) -> int:
        return self.valid_runs + self.discarded_false_alarm_runs

    @property
    def best_param(self) -> float | None:
        finite = {k: v for k, v in self.per_param.items() if math.isfinite(v)}
        return min(finite, key=finite.get) if finite else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_param"] = {str(k): v for k, v in self.per_param.items()}
        d["per_param_valid"] = {str(k): v for k, v in self.per_param_valid.items()}
        d["replications"] = self.replications
        d["best_param"] = self.best_param
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, default=float)


@dataclass(frozen=True)
class _CedJob:
    gen_cfg: GenConfig
    pipeline: Pipeline
    target: ChartTarget
    charts: tuple[tuple[ChartConfig, float], ...]
    anomalies: tuple[AnomalySpec | None, ...]
    tau: int
    horizon: int
    seed: int
    index: int


def _ced_replication(job: _CedJob) -> dict:
    """Delays of one replication for every (anomaly, chart) pair.

    The in-control prefix up to ``tau - 1`` is simulated once; each anomaly
    continues from a copy of that state, so cases share the prefix and the
    post-change cell selections.  ``None`` marks a false alarm before tau.
    """
    rep = _Replication(job.gen_cfg, job.pipeline, replication_rng(job.seed, job.index, STREAM_CED))
    rep.extend_to_time(job.tau - 1)
    pre = [(cfg, ucl, *statistic_trace(cfg, job.target, rep.values)) for cfg, ucl in job.charts]
    out: dict = {}
    alive = [j for j, (_, ucl, stats, _) in enumerate(pre) if not (stats >= ucl).any()]
    for a_idx, anomaly in enumerate(job.anomalies):
        for j in range(len(pre)):
            out[(a_idx, j)] = None
        if not alive:
            continue
        fork = copy.deepcopy(rep)
        fork.proc.anomaly = anomaly
        states = {j: pre[j][3] for j in alive}
        pending = set(alive)
        while pending:
            fork.extend(len(fork.values) + 1)
            t = fork.times[-1]
            for j in list(pending):
                cfg, ucl = pre[j][0], pre[j][1]
                stat, states[j] = statistic_trace(cfg, job.target, fork.values[-1:], states[j])
                if stat[0] >= ucl:
                    out[(a_idx, j)] = (t - job.tau + 1, False)
                    pending.discard(j)
                elif t - job.tau + 1 >= job.horizon:
                    out[(a_idx, j)] = (job.horizon, True)
                    pending.discard(j)
    return out


def ced_study(charts: Mapping[ChartConfig, float], setup: CalibrationSetup, anomalies: Sequence[AnomalySpec | None], replications: int = 100, horizon: int = 1000, tau: int = 101) -> dict[str, dict[ChartConfig, CedResult]]:
    """Conditional expected delays for several charts and anomaly cases on shared replications."""
    if tau < 2:
        raise ValueError("tau must be >= 2")
    taus = {a.tau for a in anomalies if a is not None}
    if taus and taus != {tau}:
        raise ValueError(f"anomalies must all change at tau={tau}, got {sorted(taus)}")
    chart_items = tuple((cfg, float(ucl)) for cfg, ucl in charts.items())
    jobs = [
        _CedJob(setup.gen_cfg, setup.pipeline, setup.target, chart_items, tuple(anomalies), tau, horizon, setup.seed, i)
        for i in range(replications)
    ]
    results = _pmap(_ced_replication, jobs, setup.jobs)
    table: dict[str, dict[ChartConfig, CedResult]] = {}
    for a_idx, anomaly in enumerate(anomalies):
        name = anomaly.name or anomaly.kind if anomaly is not None else "none"
        row = {}
        for j, (cfg, _) in enumerate(chart_items):
            cells = [r[(a_idx, j)] for r in results]
            valid = [c for c in cells if c is not None]
            delays = [d for d, _ in valid]
            ced = float(np.mean(delays)) if delays else float("nan")
            se = float(np.std(delays, ddof=1) / math.sqrt(len(delays))) if len(delays) > 1 else float("nan")
            row[cfg] = CedResult(
                ced, len(valid), len(cells) - len(valid), se, sum(c for _, c in valid), name,
                {"kind": cfg.kind.value, "param": cfg.param}, delays=delays,
            )
        for res in row.values():
            res.per_param = {c.param: r.ced for c, r in row.items() if c.kind.value == res.chart["kind"]}
            res.per_param_valid = {c.param: r.valid_runs for c, r in row.items() if c.kind.value == res.chart["kind"]}
        table[name] = row
    return table


def estimate_ced(chart_cfg: ChartConfig, setup: CalibrationSetup, anomaly: AnomalySpec | None, ucl: float | Mapping[float, float], replications: int = 100, horizon: int = 1000, tau: int | None = None) -> CedResult:
    """CED of one chart; a ``{param: ucl}`` mapping evaluates a whole parameter grid.

    With a grid, ``ced`` refers to ``chart_cfg.param`` when it is on the grid
    and to the best grid point otherwise.
    """
    tau = tau if tau is not None else (anomaly.tau if anomaly is not None else 101)
    grid = ucl if isinstance(ucl, Mapping) else {chart_cfg.param: ucl}
    charts = {ChartConfig(chart_cfg.kind, p): u for p, u in grid.items()}
    row = ced_study(charts, setup, [anomaly], replications, horizon, tau)
    (row,) = row.values()
    by_param = {c.param: r for c, r in row.items()}
    any_res = next(iter(by_param.values()))
    pick = chart_cfg.param if chart_cfg.param in by_param else any_res.best_param
    if pick is None:
        raise NoValidRuns(f"all {replications} replications raised a false alarm before tau={tau}")
    res = by_param[pick]
    if res.valid_runs == 0:
        raise NoValidRuns(f"all {replications} replications raised a false alarm before tau={tau}")
    return res


# diagnostics and output


def acf(series: Sequence[float], max_lag: int) -> np.ndarray:
    """Sample autocorrelation for lags ``0..max_lag`` (mean-centered, lag-0 normalized)."""
    x = np.asarray(series, dtype=float)
    if max_lag < 0 or x.shape[0] <= max_lag:
        raise ValueError(f"series of length {x.shape[0]} is too short for max_lag={max_lag}")
    d = x - x.mean()
    c0 = float(d @ d)
    if c0 <= 1e-12 * max(1.0, float(np.abs(x).max())) ** 2 * x.shape[0]:
        raise UndefinedAcf("autocorrelation of a constant series is undefined")
    n = x.shape[0]
    return np.array([float(d[: n - h] @ d[h:]) / c0 for h in range(max_lag + 1)])


def write_ucl_table(results: Iterable[CalibResult], path) -> None:
    """CSV with one row per ARL0 and one column per chart parameter."""
    results = list(results)
    params = sorted({r.chart["param"] for r in results})
    arls = sorted({r.arl0_target for r in results})
    cell = {(r.arl0_target, r.chart["param"]): r.ucl for r in results}
    kinds = {r.chart["kind"] for r in results}
    name = "k" if kinds == {ChartKind.MCUSUM.value} else "lambda"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"arl0/{name}"] + [f"{p:g}" for p in params])
        for a in arls:
            w.writerow([f"{a:g}"] + [f"{cell[(a, p)]:.2f}" if (a, p) in cell else "" for p in params])


def estimates_array(estimates: Sequence[CharEstimate]) -> np.ndarray:
    return np.array([e.values for e in estimates])
