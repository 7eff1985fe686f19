"""Network statistics, change statistics and descriptive graph measures.

All counts are computed with integer arithmetic; float conversion happens
only on the returned vectors.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import shortest_path

from . import _kernels
from .errors import MissingPredecessor, OrderMismatch
from .graph import DirectedGraph


class Term(str, enum.Enum):
    EDGES = "edges"
    TRIANGLES = "triangles"
    ASYMMETRIC = "asymmetric"
    MUTUAL = "mutual"
    STABILITY = "stability"

    @property
    def slot(self) -> int:
        return _SLOTS[self]


_SLOTS = {Term.EDGES: 0, Term.TRIANGLES: 1, Term.ASYMMETRIC: 2, Term.MUTUAL: 3, Term.STABILITY: 4}


@dataclass(frozen=True)
class TermSet:
    """Ordered, duplicate-free selection of model terms."""

    terms: tuple[Term, ...]

    def __post_init__(self):
        terms = tuple(Term(t) for t in self.terms)
        if not terms:
            raise ValueError("a term set needs at least one term")
        if len(set(terms)) != len(terms):
            raise ValueError(f"duplicate terms in {[t.value for t in terms]}")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def parse(cls, spec: str | Iterable[str]) -> TermSet:
        if isinstance(spec, str):
            spec = [s for s in spec.replace("+", ",").split(",") if s.strip()]
        return cls(tuple(Term(s.strip().lower()) for s in spec))

    @property
    def p(self) -> int:
        return len(self.terms)

    @property
    def needs_predecessor(self) -> bool:
        return Term.STABILITY in self.terms

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(t.value for t in self.terms)

    def slot_coefficients(self, theta) -> np.ndarray:
        """Scatter ``theta`` into the five-slot layout used by the samplers."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.p,):
            raise ValueError(f"expected {self.p} coefficients, got shape {theta.shape}")
        coef = np.zeros(_kernels.N_SLOTS)
        for term, value in zip(self.terms, theta):
            coef[term.slot] = value
        return coef

    def __len__(self) -> int:
        return self.p

    def __str__(self) -> str:
        return ",".join(self.names)


#: terms monitored throughout the simulation study
MONITORED = TermSet((Term.EDGES, Term.TRIANGLES, Term.ASYMMETRIC, Term.STABILITY))
#: terms of the cross-sectional model used for base networks
BASE = TermSet((Term.EDGES, Term.TRIANGLES, Term.ASYMMETRIC))


def _as_int(g: DirectedGraph) -> np.ndarray:
    return g.adjacency.astype(np.int64)


def _check(terms: TermSet, y: DirectedGraph, y_prev: DirectedGraph | None) -> None:
    if terms.needs_predecessor and y_prev is None:
        raise MissingPredecessor("the stability term needs the previous graph")
    if y_prev is not None and y_prev.n_nodes != y.n_nodes:
        raise OrderMismatch(f"graph orders differ: {y.n_nodes} vs {y_prev.n_nodes}")


def _matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # BLAS float product; exact for counts below 2**53
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.int64)


def triangle_count(a: np.ndarray) -> int:
    """Transitive triples plus cyclic triads of an integer adjacency matrix."""
    a2 = _matmul(a, a)
    transitive = int((a2 * a).sum())
    cyclic = int((a2 * a.T).sum()) // 3
    return transitive + cyclic


def compute_stats(terms: TermSet, y: DirectedGraph, y_prev: DirectedGraph | None = None) -> np.ndarray:
    _check(terms, y, y_prev)
    a = _as_int(y)
    n = a.shape[0]
    out = np.empty(terms.p)
    for k, term in enumerate(terms.terms):
        if term is Term.EDGES:
            val = int(a.sum())
        elif term is Term.TRIANGLES:
            val = triangle_count(a)
        elif term is Term.ASYMMETRIC:
            val = int((a != a.T).sum()) // 2
        elif term is Term.MUTUAL:
            val = int((a * a.T).sum()) // 2
        else:
            b = _as_int(y_prev)
            val = n * (n - 1) - int((a != b).sum())
        out[k] = val
    return out


def change_stat_matrices(terms: TermSet, y: DirectedGraph, y_prev: DirectedGraph | None = None) -> np.ndarray:
    """Change statistics for every dyad cell at once, shape ``(p, n, n)``.

    Entry ``[:, i, j]`` is ``s(y with y_ij=1) - s(y with y_ij=0)``; the
    diagonal is zero.
    """
    _check(terms, y, y_prev)
    a = _as_int(y)
    n = a.shape[0]
    out = np.empty((terms.p, n, n), dtype=np.int64)
    for k, term in enumerate(terms.terms):
        if term is Term.EDGES:
            out[k] = 1
        elif term is Term.TRIANGLES:
            a2 = _matmul(a, a)
            out[k] = _matmul(a, a.T) + _matmul(a.T, a) + a2 + a2.T
        elif term is Term.ASYMMETRIC:
            out[k] = 1 - 2 * a.T
        elif term is Term.MUTUAL:
            out[k] = a.T
        else:
            out[k] = 2 * _as_int(y_prev) - 1
        np.fill_diagonal(out[k], 0)
    return out


def change_stats(terms: TermSet, y: DirectedGraph, y_prev: DirectedGraph | None, i: int, j: int) -> np.ndarray:
    if i == j:
        raise ValueError("change statistics are undefined on the diagonal")
    return change_stat_matrices(terms, y, y_prev)[:, i, j].astype(float)


@dataclass(frozen=True)
class Descriptive:
    density: float
    reciprocity: float
    transitivity: float
    flags: tuple[str, ...] = ()


def descriptive(y: DirectedGraph) -> Descriptive:
    """Density, edge reciprocity and directed transitivity.

    Degenerate cases use conventions recorded in ``flags``: an edgeless
    graph has reciprocity 1, a graph without two-paths has transitivity 0.
    """
    a = _as_int(y)
    n = a.shape[0]
    edges = int(a.sum())
    flags = []
    if edges == 0:
        reciprocity = 1.0
        flags.append("reciprocity: edgeless graph, set to 1")
    else:
        reciprocity = int((a * a.T).sum()) / edges
    a2 = _matmul(a, a)
    np.fill_diagonal(a2, 0)
    paths = int(a2.sum())
    if paths == 0:
        transitivity = 0.0
        flags.append("transitivity: no directed two-paths, set to 0")
    else:
        transitivity = int((a2 * a).sum()) / paths
    return Descriptive(edges / (n * (n - 1)), reciprocity, transitivity, tuple(flags))


# goodness-of-fit measures


def degree_distribution(y: DirectedGraph, mode: str = "in") -> np.ndarray:
    """Node counts by degree, index = degree in ``0..n-1``."""
    a = y.adjacency
    deg = a.sum(axis=0) if mode == "in" else a.sum(axis=1)
    return np.bincount(deg, minlength=y.n_nodes)[: y.n_nodes]


def esp_distribution(y: DirectedGraph) -> np.ndarray:
    """Edgewise shared partners (outgoing two-paths ``i->k->j`` per edge ``i->j``).

    Index = number of shared partners in ``0..n-2``.
    """
    a = _as_int(y)
    partners = _matmul(a, a)[y.adjacency]
    return np.bincount(partners, minlength=y.n_nodes - 1)[: y.n_nodes - 1]


def geodesic_distribution(y: DirectedGraph) -> np.ndarray:
    """Ordered-pair counts by directed shortest-path length.

    Index ``d-1`` holds length ``d`` for ``d = 1..n-1``; the last entry
    counts unreachable pairs.
    """
    n = y.n_nodes
    dist = shortest_path(y.adjacency.astype(np.int8), directed=True, unweighted=True)
    off = ~np.eye(n, dtype=bool)
    d = dist[off]
    finite = np.isfinite(d)
    counts = np.bincount(d[finite].astype(np.int64), minlength=n)[1:n]
    return np.append(counts, np.count_nonzero(~finite))


def triad_census(y: DirectedGraph) -> np.ndarray:
    """Counts of the 16 directed triad classes, ordered as ``TRIAD_NAMES``."""
    return _kernels.triad_census_counts(y.adjacency.astype(np.uint8), _kernels.TRIAD_TABLE)


TRIAD_NAMES = _kernels.TRIAD_NAMES
