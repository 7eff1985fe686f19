"""Compiled inner loops for single-dyad samplers and triad enumeration.

Coefficient vectors passed to the samplers always have five slots in the
order edges, triangles, asymmetric, mutual, stability; absent terms carry a
zero coefficient.  Adjacency arrays are ``uint8``.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from numba import njit

N_SLOTS = 5


@njit(cache=True)
def _eta(y, yp, i, j, coef):
    n = y.shape[0]
    eta = coef[0]
    if coef[1] != 0.0:
        tri = 0
        for k in range(n):
            if k == i or k == j:
                continue
            tri += y[j, k] * y[i, k] + y[k, i] * y[k, j] + y[i, k] * y[k, j] + y[j, k] * y[k, i]
        eta += coef[1] * tri
    yji = y[j, i]
    eta += coef[2] * (1 - 2 * yji) + coef[3] * yji
    eta += coef[4] * (2 * yp[i, j] - 1)
    return eta


@njit(cache=True)
def metropolis_sweep(y, yp, coef, rows, cols, order, uniforms):
    """One pass of toggle proposals over the cells listed in ``order``."""
    accepted = 0
    for q in range(order.shape[0]):
        c = order[q]
        i = rows[c]
        j = cols[c]
        eta = _eta(y, yp, i, j, coef)
        if y[i, j] == 1:
            eta = -eta
        if eta >= 0.0 or uniforms[q] < math.exp(eta):
            y[i, j] = 1 - y[i, j]
            accepted += 1
    return accepted


@njit(cache=True)
def gibbs_sweep(y, yp, coef, rows, cols, order, uniforms):
    """One pass of full-conditional updates over the cells listed in ``order``."""
    for q in range(order.shape[0]):
        c = order[q]
        i = rows[c]
        j = cols[c]
        eta = _eta(y, yp, i, j, coef)
        p = 1.0 / (1.0 + math.exp(-eta))
        y[i, j] = 1 if uniforms[q] < p else 0


TRIAD_NAMES = (
    "003", "012", "102", "021D", "021U", "021C", "111D", "111U",
    "030T", "030C", "201", "120D", "120U", "120C", "210", "300",
)

# representative edge sets on nodes a=0, b=1, c=2
_TRIAD_REPS = {
    "003": (),
    "012": ((0, 1),),
    "102": ((0, 1), (1, 0)),
    "021D": ((1, 0), (1, 2)),
    "021U": ((0, 1), (2, 1)),
    "021C": ((0, 1), (1, 2)),
    "111D": ((0, 1), (1, 0), (2, 1)),
    "111U": ((0, 1), (1, 0), (1, 2)),
    "030T": ((0, 1), (2, 1), (0, 2)),
    "030C": ((1, 0), (2, 1), (0, 2)),
    "201": ((0, 1), (1, 0), (1, 2), (2, 1)),
    "120D": ((1, 0), (1, 2), (0, 2), (2, 0)),
    "120U": ((0, 1), (2, 1), (0, 2), (2, 0)),
    "120C": ((0, 1), (1, 2), (0, 2), (2, 0)),
    "210": ((0, 1), (1, 2), (2, 1), (0, 2), (2, 0)),
    "300": ((0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)),
}
_CODE_BITS = ((0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1))


def _code(edges) -> int:
    es = set(edges)
    return sum(1 << b for b, e in enumerate(_CODE_BITS) if e in es)


def _canonical(code: int) -> int:
    edges = [e for b, e in enumerate(_CODE_BITS) if code >> b & 1]
    return min(_code([(p[a], p[b]) for a, b in edges]) for p in itertools.permutations(range(3)))


def _build_triad_table() -> np.ndarray:
    names = {_canonical(_code(rep)): k for k, rep in enumerate(_TRIAD_REPS.values())}
    if len(names) != 16:
        raise AssertionError("triad representatives are not pairwise non-isomorphic")
    return np.array([names[_canonical(c)] for c in range(64)], dtype=np.int64)


TRIAD_TABLE = _build_triad_table()


@njit(cache=True)
def triad_census_counts(y, table):
    n = y.shape[0]
    out = np.zeros(16, dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            base = y[i, j] + 2 * y[j, i]
            for k in range(j + 1, n):
                code = base + 4 * y[i, k] + 8 * y[k, i] + 16 * y[j, k] + 32 * y[k, j]
                out[table[code]] += 1
    return out
