"""Core data model: similarity graphs with clamped labels and the Potts energy.

A classification of N points with q admissible classes is a state vector in
{1..q}. Labelled points are clamped: no sampler or optimiser ever changes
them, which realises an infinitely strong label field. The energy of a
configuration is the sum of similarities over edges whose endpoints disagree,
so energy 0 means every edge is satisfied.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DataGraph",
    "EnergyBinning",
    "GraphFormatError",
    "check_clamps",
    "component_labels",
    "default_binning",
    "delta_energy",
    "energy",
    "random_configuration",
    "read_graph_file",
    "write_graph_file",
]


class GraphFormatError(ValueError):
    """Malformed graph file."""


class DataGraph:
    """Undirected weighted graph over N points with q classes and a partial labelling.

    Edges carry strictly positive similarities. ``labels`` maps a point index
    to its clamped class in {1..q}; unlabelled points are free. Instances are
    immutable after construction and safe to share across worker processes.

    Attributes:
        n_points: number of points N.
        q: number of admissible classes (>= 2).
        edge_i, edge_j, edge_w: parallel arrays, one entry per undirected edge.
        labels: dict point index -> clamped class.
        label_of: length-N int array, 0 for free points, else the clamped class.
        free_points: indices of unlabelled points.
        total_weight: sum of all edge similarities (upper bound on the energy).
    """

    def __init__(self, n_points, edges, q, labels=None):
        if n_points < 1:
            raise ValueError("graph needs at least one point")
        if q < 2:
            raise ValueError(f"q must be >= 2, got {q}")
        labels = dict(labels) if labels else {}

        ei, ej, ew = [], [], []
        seen = set()
        for i, j, w in edges:
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise ValueError(f"self-edge at point {i}")
            if not (0 <= i < n_points and 0 <= j < n_points):
                raise ValueError(f"edge ({i},{j}) out of range for N={n_points}")
            if w <= 0:
                raise ValueError(f"edge ({i},{j}) has non-positive similarity {w}")
            key = (i, j) if i < j else (j, i)
            if key in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add(key)
            ei.append(i)
            ej.append(j)
            ew.append(w)

        self.n_points = int(n_points)
        self.q = int(q)
        self.edge_i = np.asarray(ei, dtype=np.int64)
        self.edge_j = np.asarray(ej, dtype=np.int64)
        self.edge_w = np.asarray(ew, dtype=np.float64)

        label_of = np.zeros(n_points, dtype=np.int64)
        for k, c in labels.items():
            k, c = int(k), int(c)
            if not 0 <= k < n_points:
                raise ValueError(f"label index {k} out of range")
            if not 1 <= c <= q:
                raise ValueError(f"label class {c} for point {k} not in 1..{q}")
            label_of[k] = c
        self.labels = {int(k): int(c) for k, c in labels.items()}
        self.label_of = label_of
        self.free_points = np.flatnonzero(label_of == 0)
        self.total_weight = float(self.edge_w.sum())

        # CSR adjacency; every undirected edge appears in both directions.
        deg = np.zeros(n_points, dtype=np.int64)
        np.add.at(deg, self.edge_i, 1)
        np.add.at(deg, self.edge_j, 1)
        ptr = np.zeros(n_points + 1, dtype=np.int64)
        np.cumsum(deg, out=ptr[1:])
        nbr = np.empty(2 * len(ei), dtype=np.int64)
        wgt = np.empty(2 * len(ei), dtype=np.float64)
        fill = ptr[:-1].copy()
        for i, j, w in zip(self.edge_i, self.edge_j, self.edge_w):
            nbr[fill[i]] = j
            wgt[fill[i]] = w
            fill[i] += 1
            nbr[fill[j]] = i
            wgt[fill[j]] = w
            fill[j] += 1
        self.adj_ptr = ptr
        self.adj_nbr = nbr
        self.adj_w = wgt

        for arr in (self.edge_i, self.edge_j, self.edge_w, self.label_of,
                    self.free_points, self.adj_ptr, self.adj_nbr, self.adj_w):
            arr.setflags(write=False)

    @property
    def n_edges(self):
        return len(self.edge_i)

    @property
    def n_free(self):
        return len(self.free_points)

    @property
    def n_labelled(self):
        return self.n_points - self.n_free

    def with_labels(self, labels, q=None):
        """New graph with the same edges and a different labelling."""
        edges = zip(self.edge_i.tolist(), self.edge_j.tolist(), self.edge_w.tolist())
        return DataGraph(self.n_points, edges, self.q if q is None else q, labels)

    def __repr__(self):
        return (f"DataGraph(n_points={self.n_points}, n_edges={self.n_edges}, "
                f"q={self.q}, n_labelled={self.n_labelled})")


def check_clamps(graph, states):
    """Raise if a labelled point is not in its clamped state."""
    lab = graph.label_of
    bad = np.flatnonzero((lab != 0) & (states != lab))
    if len(bad):
        k = int(bad[0])
        raise ValueError(f"clamp violated at point {k}: state {int(states[k])} != label {lab[k]}")


def energy(graph, states):
    """Potts energy of a classification: sum of J over disagreeing edges.

    The configuration must satisfy every clamp; a violation signals a caller
    bug and raises. The result is non-negative and zero exactly when all
    edge endpoints agree.
    """
    states = np.asarray(states)
    check_clamps(graph, states)
    return float(graph.edge_w[states[graph.edge_i] != states[graph.edge_j]].sum())


def delta_energy(graph, states, i, new_state):
    """Energy change of flipping free point ``i`` to ``new_state``.

    Touches only edges incident to ``i``; O(deg) per call.
    """
    i = int(i)
    new_state = int(new_state)
    if graph.label_of[i] != 0:
        raise ValueError(f"point {i} is labelled and cannot be flipped")
    if not 1 <= new_state <= graph.q:
        raise ValueError(f"state {new_state} not in 1..{graph.q}")
    old = int(states[i])
    if new_state == old:
        return 0.0
    lo, hi = graph.adj_ptr[i], graph.adj_ptr[i + 1]
    nb = states[graph.adj_nbr[lo:hi]]
    w = graph.adj_w[lo:hi]
    return float(w[nb == old].sum() - w[nb == new_state].sum())


def random_configuration(graph, seed):
    """Random classification: clamps respected, free spins uniform over 1..q."""
    rng = np.random.default_rng(seed)
    states = graph.label_of.copy()
    states.setflags(write=True)
    states[graph.free_points] = rng.integers(1, graph.q + 1, size=graph.n_free)
    return states


def component_labels(n_points, edge_i, edge_j, keep=None):
    """Connected-component index per point, components numbered 0.. in order
    of their smallest member. ``keep`` optionally masks edges."""
    parent = np.arange(n_points, dtype=np.int64)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    if keep is None:
        pairs = zip(edge_i, edge_j)
    else:
        pairs = zip(edge_i[keep], edge_j[keep])
    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
    roots = np.array([find(x) for x in range(n_points)], dtype=np.int64)
    _, comp = np.unique(roots, return_inverse=True)
    return comp


@dataclass(frozen=True)
class EnergyBinning:
    """Uniform binning of the energy axis.

    Bin index of energy E is floor((E - origin) / bin_width); the mapping is
    total for E >= origin. The default origin sits half a bin below zero so
    integer-valued spectra fall on bin centres and are immune to round-off.
    """

    bin_width: float
    origin: float

    def index(self, e):
        idx = np.floor((np.asarray(e, dtype=np.float64) - self.origin) / self.bin_width)
        return idx.astype(np.int64) if idx.ndim else int(idx)

    def lower_edge(self, idx):
        return self.origin + np.asarray(idx, dtype=np.float64) * self.bin_width

    def n_bins(self, max_energy):
        return int(self.index(max_energy)) + 1


def default_binning(graph):
    """Bin width 1 for integer similarities, else 1/200 of the all-disagree bound."""
    integral = bool(np.all(graph.edge_w == np.round(graph.edge_w)))
    width = 1.0 if integral else max(graph.total_weight / 200.0, 1e-12)
    return EnergyBinning(bin_width=width, origin=-width / 2.0)


def write_graph_file(graph, path):
    """Plain-text graph format: ``N q`` header, ``label k c`` lines, ``edge i j J`` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{graph.n_points} {graph.q}\n")
        for k in sorted(graph.labels):
            fh.write(f"label {k} {graph.labels[k]}\n")
        for i, j, w in zip(graph.edge_i, graph.edge_j, graph.edge_w):
            fh.write(f"edge {int(i)} {int(j)} {float(w)!r}\n")


def read_graph_file(path):
    """Parse the plain-text graph format written by :func:`write_graph_file`."""
    labels = {}
    edges = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if header is None:
                    if len(parts) != 2:
                        raise ValueError("expected 'N q'")
                    header = (int(parts[0]), int(parts[1]))
                elif parts[0] == "label":
                    if len(parts) != 3:
                        raise ValueError("expected 'label k c'")
                    labels[int(parts[1])] = int(parts[2])
                elif parts[0] == "edge":
                    if len(parts) != 4:
                        raise ValueError("expected 'edge i j J'")
                    edges.append((int(parts[1]), int(parts[2]), float(parts[3])))
                else:
                    raise ValueError(f"unknown directive {parts[0]!r}")
            except ValueError as exc:
                raise GraphFormatError(f"{path}:{lineno}: {exc}") from exc
    if header is None:
        raise GraphFormatError(f"{path}: empty graph file")
    try:
        return DataGraph(header[0], edges, header[1], labels)
    except ValueError as exc:
        raise GraphFormatError(f"{path}: {exc}") from exc
