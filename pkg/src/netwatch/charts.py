"""Multivariate control charts: Hotelling/Mahalanobis, Crosier MCUSUM, MEWMA.

Chart states are small immutable records; every ``*_step`` call returns a
new state together with a :class:`StepOutcome`.  :func:`statistic_trace`
runs a chart over a whole block of estimates without per-step objects and
is what the Monte-Carlo calibration uses.
"""

from __future__ import annotations

import csv
import enum
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import DimensionMismatch, SingularCovariance

COND_LIMIT = 1e12
RIDGE_EPS = 1e-8


def _values(c_hat) -> np.ndarray:
    return np.asarray(getattr(c_hat, "values", c_hat), dtype=float)


@dataclass(frozen=True)
class ChartTarget:
    """In-control mean ``c0`` and covariance ``sigma`` of the estimates."""

    c0: np.ndarray
    sigma: np.ndarray
    sigma_inv: np.ndarray = field(init=False, repr=False)
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c0 = np.atleast_1d(np.asarray(self.c0, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        p = c0.shape[0]
        if sigma.shape != (p, p):
            raise DimensionMismatch(f"sigma has shape {sigma.shape}, expected ({p}, {p})")
        if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(sigma).max())):
            raise ValueError("sigma must be symmetric")
        sigma = (sigma + sigma.T) / 2
        hint = f"add a ridge of {RIDGE_EPS:g} * diag(sigma) or use more Phase-I data"
        try:
            chol, _ = cho_factor(sigma, lower=True)
        except np.linalg.LinAlgError:
            raise SingularCovariance(f"sigma is not positive definite; {hint}") from None
        cond = np.linalg.cond(sigma)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularCovariance(f"sigma is near-singular (condition number {cond:.3g}); {hint}")
        inv = cho_solve((chol, True), np.eye(p))
        for name, arr in (("c0", c0), ("sigma", sigma), ("sigma_inv", inv), ("_chol", np.tril(chol))):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def p(self) -> int:
        return self.c0.shape[0]

    def check(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.p:
            raise DimensionMismatch(f"estimate has dimension {x.shape[-1]}, target has {self.p}")
        return x

    def whiten(self, x: np.ndarray) -> np.ndarray:
        """Map deviations ``x`` (rows) to coordinates where sigma is the identity."""
        return solve_triangular(self._chol, np.atleast_2d(x).T, lower=True).T

    def with_ridge(self, eps: float = RIDGE_EPS) -> ChartTarget:
        return ChartTarget(self.c0, self.sigma + eps * np.diag(np.diag(self.sigma)))

    def to_dict(self) -> dict:
        return {"c0": self.c0.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> ChartTarget:
        return cls(np.array(d["c0"]), np.array(d["sigma"]))


def quad_form(x: np.ndarray, target: ChartTarget) -> float:
    return float(x @ target.sigma_inv @ x)


def mahalanobis(c_hat, target: ChartTarget) -> float:
    """Squared Mahalanobis distance of an estimate from the target mean."""
    d = target.check(_values(c_hat)) - target.c0
    return max(0.0, quad_form(d, target))


class ChartKind(str, enum.Enum):
    MCUSUM = "mcusum"
    MEWMA = "mewma"


@dataclass(frozen=True)
class ChartConfig:
    """Chart type with its tuning parameter (``k`` for MCUSUM, ``lambda`` for MEWMA)."""

    kind: ChartKind
    param: float
    reset_on_signal: bool = False

    def __post_init__(self):
        kind = self.kind if isinstance(self.kind, ChartKind) else ChartKind(str(self.kind).lower())
        object.__setattr__(self, "kind", kind)
        param = float(self.param)
        if self.kind is ChartKind.MCUSUM and not param > 0:
            raise ValueError(f"MCUSUM reference value k must be > 0, got {param}")
        if self.kind is ChartKind.MEWMA and not 0 < param <= 1:
            raise ValueError(f"MEWMA lambda must lie in (0, 1], got {param}")
        object.__setattr__(self, "param", param)

    @property
    def label(self) -> str:
        name = "k" if self.kind is ChartKind.MCUSUM else "lambda"
        return f"{self.kind.value}({name}={self.param:g})"

    def initial_state(self, p: int):
        if self.kind is ChartKind.MCUSUM:
            return McusumState(np.zeros(p), self.param)
        return MewmaState(np.zeros(p), self.param)


@dataclass(frozen=True)
class McusumState:
    r: np.ndarray
    k: float
    t: int = 0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"k must be > 0, got {self.k}")


@dataclass(frozen=True)
class MewmaState:
    l: np.ndarray  # noqa: E741
    lam: float
    t: int = 0

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")


@dataclass(frozen=True)
class StepOutcome:
    statistic: float
    signal: bool
    t: int


def mcusum_step(state: McusumState, c_hat, target: ChartTarget, ucl: float, reset_on_signal: bool = True) -> tuple[McusumState, StepOutcome]:
    """One Crosier MCUSUM update; the statistic is ``sqrt(r' S^-1 r)``."""
    x = target.check(_values(c_hat)) - target.c0
    if state.r.shape != x.shape:
        raise DimensionMismatch(f"state dimension {state.r.shape} vs estimate {x.shape}")
    u = state.r + x
    c = math.sqrt(max(0.0, quad_form(u, target)))
    r = np.zeros_like(u) if c <= state.k else u * (1.0 - state.k / c)
    stat = math.sqrt(max(0.0, quad_form(r, target)))
    t = state.t + 1
    signal = stat >= ucl
    if signal and reset_on_signal:
        r = np.zeros_like(u)
    return McusumState(r, state.k, t), StepOutcome(stat, signal, t)


def mewma_step(state: MewmaState, c_hat, target: ChartTarget, ucl: float, reset_on_signal: bool = True) -> tuple[MewmaState, StepOutcome]:
    """One MEWMA update with the exact finite-``t`` covariance of ``l_t``."""
    x = target.check(_values(c_hat)) - target.c0
    if state.l.shape != x.shape:
        raise DimensionMismatch(f"state dimension {state.l.shape} vs estimate {x.shape}")
    lam = state.lam
    t = state.t + 1
    l = lam * x + (1.0 - lam) * state.l  # noqa: E741
    scale = lam / (2.0 - lam) * (1.0 - (1.0 - lam) ** (2 * t))
    stat = max(0.0, quad_form(l, target)) / scale
    signal = stat >= ucl
    if signal and reset_on_signal:
        return MewmaState(np.zeros_like(l), lam, 0), StepOutcome(stat, signal, t)
    return MewmaState(l, lam, t), StepOutcome(stat, signal, t)


def chart_step(state, c_hat, target: ChartTarget, ucl: float, reset_on_signal: bool):
    if isinstance(state, McusumState):
        return mcusum_step(state, c_hat, target, ucl, reset_on_signal)
    return mewma_step(state, c_hat, target, ucl, reset_on_signal)


def statistic_trace(cfg: ChartConfig, target: ChartTarget, estimates, state=None):
    """Statistics of a chart run without resets over an ``(n, p)`` block.

    Returns ``(statistics, final_state)`` so that a trace can be extended
    block by block.  Works in whitened coordinates, where the quadratic
    forms become squared norms.
    """
    x = np.atleast_2d(np.asarray([_values(e) for e in estimates], dtype=float))
    if x.size == 0:
        return np.empty(0), state if state is not None else cfg.initial_state(target.p)
    target.check(x)
    w = target.whiten(x - target.c0)
    if state is None:
        state = cfg.initial_state(target.p)
    out = np.empty(w.shape[0])
    if cfg.kind is ChartKind.MCUSUM:
        k = cfg.param
        r = target.whiten(state.r)[0]
        for i, xi in enumerate(w):
            u = r + xi
            c = math.sqrt(u @ u)
            r = u * 0.0 if c <= k else u * (1.0 - k / c)
            out[i] = math.sqrt(r @ r)
        back = target._chol @ r
        return out, McusumState(back, k, state.t + len(out))
    lam = cfg.param
    lv = target.whiten(state.l)[0]
    t0 = state.t
    base = lam / (2.0 - lam)
    for i, xi in enumerate(w):
        lv = lam * xi + (1.0 - lam) * lv
        out[i] = (lv @ lv) / (base * (1.0 - (1.0 - lam) ** (2 * (t0 + i + 1))))
    return out, MewmaState(target._chol @ lv, lam, t0 + len(out))


@dataclass(frozen=True)
class SignalRecord:
    t: int
    statistic: float
    ucl: float
    signal: bool
    values: tuple[float, ...] = ()


@dataclass
class SignalLog:
    """Chart trace of a monitoring run, one record per monitored time point."""

    records: list[SignalRecord] = field(default_factory=list)
    chart: str = ""
    term_names: tuple[str, ...] = ()
    labels: dict[int, str] = field(default_factory=dict)

    def append(self, rec: SignalRecord) -> None:
        if self.records and rec.t <= self.records[-1].t:
            raise ValueError(f"time {rec.t} does not follow {self.records[-1].t}")
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def signal_times(self) -> list[int]:
        return [r.t for r in self.records if r.signal]

    def write_csv(self, path, with_values: bool = False) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["t", "statistic", "ucl", "signal"]
            if with_values:
                header += list(self.term_names)
            w.writerow(header)
            for r in self.records:
                row = [r.t, repr(r.statistic), repr(r.ucl), int(r.signal)]
                if with_values:
                    row += [repr(v) for v in r.values]
                w.writerow(row)

    @classmethod
    def read_csv(cls, path) -> SignalLog:
        log = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                log.append(SignalRecord(int(row["t"]), float(row["statistic"]), float(row["ucl"]), row["signal"] in ("1", "True", "true")))
        return log


def monitor(cfg: ChartConfig, target: ChartTarget, estimates: Iterable, ucl: float, term_names: Sequence[str] = ()) -> SignalLog:
    """Run a chart over a stream of estimates, honoring ``cfg.reset_on_signal``."""
    state = cfg.initial_state(target.p)
    log = SignalLog(chart=cfg.label, term_names=tuple(term_names))
    for k, est in enumerate(estimates):
        state, out = chart_step(state, est, target, ucl, cfg.reset_on_signal)
        t = getattr(est, "t", k + 1)
        log.append(SignalRecord(int(t), out.statistic, float(ucl), out.signal, tuple(_values(est).tolist())))
    return log


def with_reset(cfg: ChartConfig, reset: bool) -> ChartConfig:
    return replace(cfg, reset_on_signal=reset)
