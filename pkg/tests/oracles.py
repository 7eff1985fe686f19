"""Independent slow reference implementations used as test oracles.

Everything here works on plain nested lists with explicit loops so that it
shares no code path with the vectorized package implementation.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize


def adj_list(g) -> list[list[int]]:
    return [[int(x) for x in row] for row in g.adjacency]


def edges(a) -> int:
    n = len(a)
    return sum(a[i][j] for i in range(n) for j in range(n) if i != j)


def asymmetric(a) -> int:
    n = len(a)
    return sum(1 for i in range(n) for j in range(i + 1, n) if a[i][j] + a[j][i] == 1)


def mutual(a) -> int:
    n = len(a)
    return sum(1 for i in range(n) for j in range(i + 1, n) if a[i][j] and a[j][i])


def stability(a, b) -> int:
    n = len(a)
    return sum(1 for i in range(n) for j in range(n) if i != j and a[i][j] == b[i][j])


def triangles(a) -> int:
    """Transitive triples i->j, j->k, i->k plus cyclic triads counted once."""
    n = len(a)
    transitive = 0
    cyclic = 0
    for i, j, k in itertools.permutations(range(n), 3):
        if a[i][j] and a[j][k] and a[i][k]:
            transitive += 1
        if a[i][j] and a[j][k] and a[k][i]:
            cyclic += 1
    return transitive + cyclic // 3


def transitivity(a) -> float:
    n = len(a)
    closed = paths = 0
    for i, j, k in itertools.permutations(range(n), 3):
        if a[i][j] and a[j][k]:
            paths += 1
            closed += a[i][k]
    return closed / paths if paths else 0.0


def stats(names, a, b=None) -> list[int]:
    out = []
    for name in names:
        if name == "edges":
            out.append(edges(a))
        elif name == "triangles":
            out.append(triangles(a))
        elif name == "asymmetric":
            out.append(asymmetric(a))
        elif name == "mutual":
            out.append(mutual(a))
        elif name == "stability":
            out.append(stability(a, b))
    return out


def all_graphs(n: int):
    cells = [(i, j) for i in range(n) for j in range(n) if i != j]
    for bits in range(1 << len(cells)):
        a = [[0] * n for _ in range(n)]
        for k, (i, j) in enumerate(cells):
            if bits >> k & 1:
                a[i][j] = 1
        yield bits, a


def ergm_probabilities(n: int, names, coef, prev=None) -> dict[int, float]:
    """Exact ERGM (or conditional TERGM) distribution by full enumeration."""
    weights = {}
    for code, a in all_graphs(n):
        s = stats(names, a, prev)
        weights[code] = math.exp(sum(c * x for c, x in zip(coef, s)))
    z = sum(weights.values())
    return {k: w / z for k, w in weights.items()}


def graph_code(a) -> int:
    n = len(a)
    cells = [(i, j) for i in range(n) for j in range(n) if i != j]
    return sum(1 << k for k, (i, j) in enumerate(cells) if a[i][j])


def crosier_scalar(xs, k):
    """Two-sided scalar Crosier CUSUM with unit variance."""
    s = 0.0
    out = []
    for x in xs:
        c = abs(s + x)
        s = 0.0 if c <= k else (s + x) * (1 - k / c)
        out.append(abs(s))
    return out


def exact_conditional_mle(n: int, names, transitions):
    """Maximize the exact conditional likelihood of ``(y, y_prev)`` pairs by enumeration.

    Only the final optimizer step uses numpy; the statistics come from the
    list-based counters above.
    """
    graphs = [a for _, a in all_graphs(n)]
    # statistics do not depend on theta: tabulate them once per transition
    tables = [
        (np.array(stats(names, y, yp), dtype=float), np.array([stats(names, a, yp) for a in graphs], dtype=float))
        for y, yp in transitions
    ]

    def negloglik(theta):
        total = 0.0
        for s_obs, s_all in tables:
            etas = s_all @ theta
            m = etas.max()
            total += theta @ s_obs - (m + math.log(np.exp(etas - m).sum()))
        return -total

    return minimize(negloglik, np.zeros(len(names)), method="BFGS", options={"gtol": 1e-10}).x
