"""Directed graphs, graph time series and edge-list ingestion."""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyIngest, InvalidOrder, NonContiguousSeries, OrderMismatch, SelfLoopRejected

log = logging.getLogger(__name__)


class DirectedGraph:
    """Fixed-order directed graph without self-loops.

    The adjacency matrix is stored densely (row = source, column = target)
    and is read-only; every modifying operation returns a new graph.
    """

    __slots__ = ("_adj",)

    def __init__(self, adjacency, *, copy: bool = True):
        adj = np.array(adjacency, dtype=bool, copy=copy)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        if adj.shape[0] < 2:
            raise InvalidOrder(f"a graph needs at least 2 nodes, got {adj.shape[0]}")
        if adj.diagonal().any():
            raise SelfLoopRejected("adjacency has non-zero diagonal entries")
        adj.flags.writeable = False
        self._adj = adj

    @property
    def adjacency(self) -> np.ndarray:
        return self._adj

    @property
    def n_nodes(self) -> int:
        return self._adj.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self._adj.sum())

    @property
    def n_dyad_cells(self) -> int:
        """Number of possible directed edges, n(n-1)."""
        n = self.n_nodes
        return n * (n - 1)

    @property
    def density(self) -> float:
        return self.n_edges / self.n_dyad_cells

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self._adj[i, j])

    def edges(self) -> Iterator[tuple[int, int]]:
        src, dst = np.nonzero(self._adj)
        return zip(src.tolist(), dst.tolist())

    def complement(self) -> DirectedGraph:
        comp = ~self._adj
        np.fill_diagonal(comp, False)
        return DirectedGraph(comp, copy=False)

    def permuted(self, perm: Sequence[int]) -> DirectedGraph:
        """Relabel nodes so that old node ``perm[k]`` becomes node ``k``."""
        perm = np.asarray(perm)
        return DirectedGraph(self._adj[np.ix_(perm, perm)], copy=False)

    def __eq__(self, other):
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return self._adj.shape == other._adj.shape and bool(np.array_equal(self._adj, other._adj))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self):
        return f"DirectedGraph(n_nodes={self.n_nodes}, n_edges={self.n_edges})"


def new_graph(n_nodes: int) -> DirectedGraph:
    if n_nodes < 2:
        raise InvalidOrder(f"a graph needs at least 2 nodes, got {n_nodes}")
    return DirectedGraph(np.zeros((n_nodes, n_nodes), dtype=bool), copy=False)


def set_edge(g: DirectedGraph, i: int, j: int, present: bool) -> DirectedGraph:
    n = g.n_nodes
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node index out of range for order {n}: ({i}, {j})")
    if i == j:
        raise SelfLoopRejected(f"self-loop at node {i}")
    if g.adjacency[i, j] == bool(present):
        return g
    adj = g.adjacency.copy()
    adj[i, j] = bool(present)
    return DirectedGraph(adj, copy=False)


@dataclass(frozen=True)
class GraphSeries:
    """Consecutively labelled sequence of graphs over one node set.

    ``start`` is the integer time label of ``graphs[0]``; labels increase by
    one per element.  ``node_ids`` maps integer indices back to external
    identifiers when the series came from a file.
    """

    graphs: tuple[DirectedGraph, ...]
    start: int = 1
    node_ids: tuple[str, ...] | None = None
    labels: tuple[str, ...] | None = None
    dropped_self_loops: int = 0

    def __post_init__(self):
        graphs = tuple(self.graphs)
        object.__setattr__(self, "graphs", graphs)
        if graphs:
            n = graphs[0].n_nodes
            for g in graphs[1:]:
                if g.n_nodes != n:
                    raise OrderMismatch(f"series mixes graph orders {n} and {g.n_nodes}")
            if self.node_ids is not None and len(self.node_ids) != n:
                raise ValueError("node_ids length does not match graph order")
        if self.labels is not None and len(self.labels) != len(graphs):
            raise ValueError("labels length does not match series length")

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self) -> Iterator[DirectedGraph]:
        return iter(self.graphs)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            start, stop, step = idx.indices(len(self.graphs))
            if step != 1:
                raise ValueError("series slices must be contiguous")
            return self.window(self.start + start, self.start + stop - 1)
        return self.graphs[idx]

    @property
    def n_nodes(self) -> int:
        return self.graphs[0].n_nodes

    @property
    def end(self) -> int:
        return self.start + len(self.graphs) - 1

    @property
    def times(self) -> range:
        return range(self.start, self.start + len(self.graphs))

    def at(self, t: int) -> DirectedGraph:
        k = t - self.start
        if not 0 <= k < len(self.graphs):
            raise IndexError(f"time {t} outside series [{self.start}, {self.end}]")
        return self.graphs[k]

    def window(self, t_first: int, t_last: int) -> GraphSeries:
        """Sub-series with time labels ``t_first..t_last`` inclusive."""
        if t_first < self.start or t_last > self.end or t_last < t_first:
            raise IndexError(f"window [{t_first}, {t_last}] outside series [{self.start}, {self.end}]")
        a, b = t_first - self.start, t_last - self.start + 1
        labels = self.labels[a:b] if self.labels is not None else None
        return GraphSeries(self.graphs[a:b], t_first, self.node_ids, labels)

    def label(self, t: int) -> str:
        if self.labels is not None:
            return self.labels[t - self.start]
        return str(t)


class NodeRegistry:
    """Maps external node identifiers to consecutive integer indices."""

    def __init__(self, ids: Iterable[str] = ()):
        self._index: dict[str, int] = {}
        for node in ids:
            self.add(node)

    def add(self, node: str) -> int:
        node = str(node)
        if node not in self._index:
            self._index[node] = len(self._index)
        return self._index[node]

    def __getitem__(self, node: str) -> int:
        return self._index[str(node)]

    def __contains__(self, node) -> bool:
        return str(node) in self._index

    def __len__(self) -> int:
        return len(self._index)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self._index)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps({"nodes": list(self.ids)}, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> NodeRegistry:
        return cls(json.loads(Path(path).read_text(encoding="utf-8"))["nodes"])


def _parse_time(value):
    if isinstance(value, (bool, np.bool_)):
        raise ValueError(f"invalid time label {value!r}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        pass
    return dt.date.fromisoformat(text)


def from_edge_list(records: Iterable[tuple], node_map: NodeRegistry | None = None) -> GraphSeries:
    """Build one graph per time label from ``(t, src, dst)`` records.

    Duplicate records collapse to one edge, self-loops are dropped (their
    count is stored on the result).  Time labels may be integers or ISO
    dates; dates become consecutive day numbers starting at 1 and keep
    their original text as series labels.
    """
    rows = [(_parse_time(t), str(s), str(d)) for t, s, d in records]
    if not rows:
        raise EmptyIngest("no edge records")
    kinds = {type(t) for t, _, _ in rows}
    if len(kinds) > 1:
        raise ValueError("time labels mix integers and dates")
    is_date = kinds == {dt.date}

    if node_map is None:
        node_map = NodeRegistry(sorted({s for _, s, _ in rows} | {d for _, _, d in rows}))
    else:
        for _, s, d in rows:
            node_map.add(s)
            node_map.add(d)

    dropped = sum(1 for _, s, d in rows if s == d)
    if dropped:
        log.info("dropped %d self-loop records", dropped)
    if len(node_map) < 2:
        raise EmptyIngest("fewer than two distinct nodes after dropping self-loops", dropped)

    keys = sorted({t.toordinal() if is_date else t for t, _, _ in rows})
    first, last = keys[0], keys[-1]
    present = set(keys)
    missing = [k for k in range(first, last + 1) if k not in present]
    if missing:
        if is_date:
            missing = [dt.date.fromordinal(k).isoformat() for k in missing]
        raise NonContiguousSeries(missing)

    n = len(node_map)
    adj = np.zeros((last - first + 1, n, n), dtype=bool)
    for t, s, d in rows:
        if s == d:
            continue
        k = (t.toordinal() if is_date else t) - first
        adj[k, node_map[s], node_map[d]] = True

    graphs = tuple(DirectedGraph(a, copy=False) for a in adj)
    if is_date:
        labels = tuple(dt.date.fromordinal(k).isoformat() for k in range(first, last + 1))
        start = 1
    else:
        labels = None
        start = first
    return GraphSeries(graphs, start, node_map.ids, labels, dropped)


def to_edge_list(series: GraphSeries) -> list[tuple[str, str, str]]:
    ids = series.node_ids
    out = []
    for t, g in zip(series.times, series.graphs):
        label = series.label(t)
        for i, j in g.edges():
            out.append((label, ids[i] if ids else str(i), ids[j] if ids else str(j)))
    return out


def read_edge_list(path, node_map: NodeRegistry | None = None) -> GraphSeries:
    """Read a ``t,src,dst`` file; a header line is detected and skipped."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields t,src,dst, got {len(row)}")
            if lineno == 1 and not records:
                try:
                    _parse_time(row[0])
                except ValueError:
                    continue
            records.append(tuple(field.strip() for field in row))
    return from_edge_list(records, node_map)


def write_edge_list(series: GraphSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("t", "src", "dst"))
        writer.writerows(to_edge_list(series))
