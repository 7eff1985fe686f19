"""Synthetic directed network time series with Markov edge dynamics.

A series starts from a base network drawn from a cross-sectional ERGM,
evolves by re-drawing a random fraction of adjacency cells through a 2x2
transition matrix, and optionally carries an injected anomaly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import InvalidAnomaly, NoUniqueStationary
from .graph import DirectedGraph, GraphSeries
from .stats import BASE


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def replication_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent stream for replication ``index`` of a run seeded with ``seed``.

    ``stream`` separates experiment families (Phase-I data, run lengths,
    delays) that share one user seed.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(stream), int(index)]))


@dataclass(frozen=True)
class TransitionMatrix:
    """Cell transition probabilities; ``m01`` is the probability of 0 -> 1."""

    m00: float
    m01: float
    m10: float
    m11: float

    def __post_init__(self):
        vals = (self.m00, self.m01, self.m10, self.m11)
        if any(not (0.0 <= v <= 1.0) for v in vals):
            raise ValueError(f"transition probabilities must lie in [0, 1]: {vals}")
        if not (math.isclose(self.m00 + self.m01, 1.0, abs_tol=1e-12) and math.isclose(self.m10 + self.m11, 1.0, abs_tol=1e-12)):
            raise ValueError(f"transition matrix rows must sum to 1: {vals}")

    @classmethod
    def from_rows(cls, rows) -> TransitionMatrix:
        (a, b), (c, d) = rows
        return cls(float(a), float(b), float(c), float(d))

    def with_entries(self, **entries: float) -> TransitionMatrix:
        """Change listed entries; the other entry of each touched row is renormalized."""
        vals = {"m00": self.m00, "m01": self.m01, "m10": self.m10, "m11": self.m11}
        partner = {"m00": "m01", "m01": "m00", "m10": "m11", "m11": "m10"}
        for key, value in entries.items():
            if key not in vals:
                raise KeyError(key)
            vals[key] = float(value)
            if partner[key] not in entries:
                vals[partner[key]] = 1.0 - float(value)
        return TransitionMatrix(**vals)

    def as_array(self) -> np.ndarray:
        return np.array([[self.m00, self.m01], [self.m10, self.m11]])


M0 = TransitionMatrix(0.9, 0.1, 0.4, 0.6)
PHI0 = 0.01


def stationary_distribution(m: TransitionMatrix) -> tuple[float, float]:
    flow = m.m01 + m.m10
    if flow <= 0.0:
        raise NoUniqueStationary("chain is absorbing in both states (m01 + m10 = 0)")
    pi1 = m.m01 / flow
    return 1.0 - pi1, pi1


@dataclass(frozen=True)
class GenConfig:
    n_nodes: int = 100
    phi: float = PHI0
    m: TransitionMatrix = M0
    base_coeffs: tuple[float, ...] = (logit(0.2), 0.0, 0.0)
    burn_in: int = 1000
    base_sweeps: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be at least 2")
        if not (0.0 < self.phi <= 1.0):
            raise ValueError(f"phi must lie in (0, 1], got {self.phi}")
        if self.burn_in < 0 or self.base_sweeps < 0:
            raise ValueError("burn_in and base_sweeps must be non-negative")
        if len(self.base_coeffs) != BASE.p:
            raise ValueError(f"base_coeffs needs {BASE.p} values (edges, triangles, asymmetric)")
        object.__setattr__(self, "base_coeffs", tuple(float(c) for c in self.base_coeffs))


@dataclass(frozen=True)
class AnomalySpec:
    """Phase-II change injected at time ``tau``.

    Kind ``A`` swaps the transition matrix for ``m1``, kind ``B`` the
    selection fraction for ``phi1`` (both for all ``t >= tau``); kind ``C``
    converts a fraction ``zeta`` of asymmetric dyads into mutual ones at
    ``tau`` only.
    """

    kind: str
    tau: int
    m1: TransitionMatrix | None = None
    phi1: float | None = None
    zeta: float | None = None
    name: str = ""

    def __post_init__(self):
        kind = str(self.kind).upper()
        object.__setattr__(self, "kind", kind)
        if kind not in ("A", "B", "C"):
            raise InvalidAnomaly(f"unknown anomaly kind {self.kind!r}")
        if self.tau < 1:
            raise InvalidAnomaly(f"tau must be >= 1, got {self.tau}")
        if kind == "A" and not isinstance(self.m1, TransitionMatrix):
            raise InvalidAnomaly("type A needs a transition matrix m1")
        if kind == "B" and (self.phi1 is None or not 0.0 < self.phi1 <= 1.0):
            raise InvalidAnomaly(f"type B needs phi1 in (0, 1], got {self.phi1}")
        if kind == "C" and (self.zeta is None or not 0.0 <= self.zeta <= 1.0):
            raise InvalidAnomaly(f"type C needs zeta in [0, 1], got {self.zeta}")

    @classmethod
    def case(cls, name: str, tau: int = 101) -> AnomalySpec:
        """One of the catalogued cases ``A.1`` .. ``C.3`` (plus ``C.2b``, zeta = 0.02)."""
        try:
            kind, params = ANOMALY_CASES[name.upper()]
        except KeyError:
            raise InvalidAnomaly(f"unknown anomaly case {name!r}; known: {sorted(ANOMALY_CASES)}") from None
        return cls(kind, tau, name=name.upper(), **params)


ANOMALY_CASES = {
    "A.1": ("A", {"m1": M0.with_entries(m00=0.89, m01=0.11)}),
    "A.2": ("A", {"m1": M0.with_entries(m10=0.6, m11=0.4)}),
    "A.3": ("A", {"m1": M0.with_entries(m00=0.5, m11=0.5)}),
    "B.1": ("B", {"phi1": 0.009}),
    "B.2": ("B", {"phi1": 0.015}),
    "B.3": ("B", {"phi1": 0.02}),
    "C.1": ("C", {"zeta": 0.005}),
    "C.2": ("C", {"zeta": 0.01}),
    "C.2B": ("C", {"zeta": 0.02}),
    "C.3": ("C", {"zeta": 0.05}),
}


@lru_cache(maxsize=8)
def _offdiag(n: int) -> np.ndarray:
    return np.flatnonzero(~np.eye(n, dtype=bool))


@lru_cache(maxsize=8)
def _cells(n: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.nonzero(~np.eye(n, dtype=bool))
    return rows.astype(np.int64), cols.astype(np.int64)


def metropolis_ergm(y0: np.ndarray, coef: np.ndarray, sweeps: int, rng: np.random.Generator, y_prev: np.ndarray | None = None) -> np.ndarray:
    """Toggle-proposal Metropolis sampler on a ``uint8`` adjacency (modified in place).

    ``coef`` uses the five-slot layout of the compiled kernels.  Each sweep
    proposes every off-diagonal cell once, in random order.
    """
    n = y0.shape[0]
    rows, cols = _cells(n)
    yp = y_prev if y_prev is not None else y0
    for _ in range(sweeps):
        order = rng.permutation(rows.shape[0])
        _kernels.metropolis_sweep(y0, yp, coef, rows, cols, order, rng.random(rows.shape[0]))
    return y0


def sample_base_network(cfg: GenConfig, rng: np.random.Generator) -> DirectedGraph:
    y = np.zeros((cfg.n_nodes, cfg.n_nodes), dtype=np.uint8)
    metropolis_ergm(y, BASE.slot_coefficients(cfg.base_coeffs), cfg.base_sweeps, rng)
    return DirectedGraph(y.astype(bool), copy=False)


def _step_inplace(adj: np.ndarray, phi: float, m: TransitionMatrix, rng: np.random.Generator) -> None:
    n = adj.shape[0]
    cells = _offdiag(n)
    k = round_half_up(phi * cells.shape[0])
    if k == 0:
        return
    sel = cells[rng.choice(cells.shape[0], k, replace=False)]
    flat = adj.reshape(-1)
    p_one = np.where(flat[sel], m.m11, m.m01)
    flat[sel] = rng.random(k) < p_one


def step_markov(y_prev: DirectedGraph, phi: float, m: TransitionMatrix, rng: np.random.Generator) -> DirectedGraph:
    if not 0.0 < phi <= 1.0:
        raise ValueError(f"phi must lie in (0, 1], got {phi}")
    adj = y_prev.adjacency.copy()
    _step_inplace(adj, phi, m, rng)
    return DirectedGraph(adj, copy=False)


def _convert_inplace(adj: np.ndarray, zeta: float, rng: np.random.Generator) -> int:
    iu, ju = np.triu_indices(adj.shape[0], k=1)
    asym = adj[iu, ju] != adj[ju, iu]
    ia, ja = iu[asym], ju[asym]
    count = round_half_up(zeta * ia.shape[0])
    pick = rng.permutation(ia.shape[0])[:count]
    adj[ia[pick], ja[pick]] = True
    adj[ja[pick], ia[pick]] = True
    return count


def convert_asym_to_mutual(y: DirectedGraph, zeta: float, rng: np.random.Generator) -> DirectedGraph:
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"zeta must lie in [0, 1], got {zeta}")
    adj = y.adjacency.copy()
    _convert_inplace(adj, zeta, rng)
    return DirectedGraph(adj, copy=False)


@dataclass
class MarkovNetworkProcess:
    """Stateful generator producing one graph per call to :meth:`advance`.

    Construction draws the base network and runs the burn-in; the first
    retained state is labelled ``t = 1``.  The anomaly uses its own random
    stream so that anomalous and in-control runs sharing a seed coincide
    before ``tau`` and share the cell selections afterwards.
    """

    cfg: GenConfig
    rng: np.random.Generator
    anomaly: AnomalySpec | None = None
    t: int = field(default=0, init=False)
    _adj: np.ndarray = field(init=False, repr=False)
    _aux: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        main, aux = self.rng.spawn(2)
        self.rng, self._aux = main, aux
        self._adj = sample_base_network(self.cfg, self.rng).adjacency.copy()
        for _ in range(self.cfg.burn_in):
            _step_inplace(self._adj, self.cfg.phi, self.cfg.m, self.rng)

    @property
    def state(self) -> DirectedGraph:
        return DirectedGraph(self._adj)

    def advance(self) -> DirectedGraph:
        self.t += 1
        phi, m = self.cfg.phi, self.cfg.m
        a = self.anomaly
        if a is not None and self.t >= a.tau:
            if a.kind == "A":
                m = a.m1
            elif a.kind == "B":
                phi = a.phi1
        _step_inplace(self._adj, phi, m, self.rng)
        if a is not None and a.kind == "C" and self.t == a.tau:
            _convert_inplace(self._adj, a.zeta, self._aux)
        return DirectedGraph(self._adj)


def generate_series(cfg: GenConfig, length: int, anomaly: AnomalySpec | None = None, rng: np.random.Generator | None = None) -> GraphSeries:
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    proc = MarkovNetworkProcess(cfg, rng, anomaly)
    return GraphSeries(tuple(proc.advance() for _ in range(length)), start=1)


def with_overrides(cfg: GenConfig, **kw) -> GenConfig:
    return replace(cfg, **kw)
