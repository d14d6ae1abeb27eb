"""Minimal-energy baselines: exact two-class min-cut and alpha-expansion.

The two-class case reduces to an s-t min cut: labelled points of the two
classes attach to the terminals with capacities no flow can saturate, every
similarity becomes a symmetric pair of arcs, and the cut found by max-flow
(Dinic's algorithm on float capacities, with source-side reachability
deciding ties) is a global minimiser of the clamped energy. For three or
more classes the energy is approximately minimised by alpha-expansion:
repeated binary cuts between "keep the current class" and "switch to
alpha", which never increase the energy and are exact for q=2.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .model import check_clamps, energy

__all__ = [
    "alpha_expansion",
    "error_count",
    "mincut_q2",
    "nearest_label_init",
    "outcome_errors",
]


class _FlowNetwork:
    """Arc-list residual network; paired arcs, deterministic insertion order."""

    def __init__(self, n_nodes, eps):
        self.n = n_nodes
        self.eps = eps
        self.to = []
        self.cap = []
        self.adj = [[] for _ in range(n_nodes)]

    def add_edge(self, u, v, cap_uv, cap_vu=0.0):
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(float(cap_uv))
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(float(cap_vu))

    def max_flow(self, s, t):
        """Dinic's algorithm; residual capacities below eps count as saturated."""
        flow = 0.0
        to, cap, adj, eps = self.to, self.cap, self.adj, self.eps
        n = self.n
        while True:
            level = [-1] * n
            level[s] = 0
            queue = deque([s])
            while queue:
                u = queue.popleft()
                for a in adj[u]:
                    v = to[a]
                    if cap[a] > eps and level[v] < 0:
                        level[v] = level[u] + 1
                        queue.append(v)
            if level[t] < 0:
                return flow
            it = [0] * n

            def dfs(u, pushed):
                if u == t:
                    return pushed
                while it[u] < len(adj[u]):
                    a = adj[u][it[u]]
                    v = to[a]
                    if cap[a] > eps and level[v] == level[u] + 1:
                        got = dfs(v, min(pushed, cap[a]))
                        if got > eps:
                            cap[a] -= got
                            cap[a ^ 1] += got
                            return got
                    it[u] += 1
                return 0.0

            while True:
                pushed = dfs(s, np.inf)
                if pushed <= eps:
                    break
                flow += pushed

    def source_side(self, s):
        """Nodes reachable from the source in the residual graph."""
        seen = np.zeros(self.n, dtype=bool)
        seen[s] = True
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for a in self.adj[u]:
                v = self.to[a]
                if self.cap[a] > self.eps and not seen[v]:
                    seen[v] = True
                    queue.append(v)
        return seen


def mincut_q2(graph):
    """Globally minimal two-class classification under the clamps.

    Requires q=2 and at least one labelled point of each class. The max-flow
    value is asserted against the returned configuration's energy.
    """
    if graph.q != 2:
        raise ValueError(f"mincut_q2 requires q=2, got q={graph.q}")
    have = set(graph.labels.values())
    if have != {1, 2}:
        missing = sorted({1, 2} - have)
        raise ValueError(f"mincut_q2 needs labels of both classes; missing {missing}")

    n = graph.n_points
    s, t = n, n + 1
    inf_cap = graph.total_weight + 1.0  # strictly more than any cut can carry
    eps = 1e-11 * max(1.0, graph.total_weight)
    net = _FlowNetwork(n + 2, eps)
    for i, j, w in zip(graph.edge_i, graph.edge_j, graph.edge_w):
        net.add_edge(int(i), int(j), float(w), float(w))
    for k, c in sorted(graph.labels.items()):
        if c == 1:
            net.add_edge(s, k, inf_cap)
        else:
            net.add_edge(k, t, inf_cap)

    flow = net.max_flow(s, t)
    side = net.source_side(s)
    states = np.where(side[:n], 1, 2).astype(np.int64)
    check_clamps(graph, states)
    cut = energy(graph, states)
    if abs(flow - cut) > 1e-6 * max(1.0, graph.total_weight):
        raise RuntimeError(f"max-flow {flow} does not match cut energy {cut}")
    return states


def nearest_label_init(graph):
    """Each free point takes the class of its nearest labelled point in hops.

    Multi-source BFS, labelled seeds processed in index order so ties are
    deterministic. Points unreachable from any label default to class 1.
    """
    states = np.ones(graph.n_points, dtype=np.int64)
    dist = np.full(graph.n_points, -1, dtype=np.int64)
    queue = deque()
    for k in sorted(graph.labels):
        states[k] = graph.labels[k]
        dist[k] = 0
        queue.append(k)
    while queue:
        u = queue.popleft()
        for a in range(graph.adj_ptr[u], graph.adj_ptr[u + 1]):
            v = int(graph.adj_nbr[a])
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                states[v] = states[u]
                queue.append(v)
    for k, c in graph.labels.items():
        states[k] = c
    return states


def _expansion_move(graph, states, alpha, eps):
    """Best single alpha-expansion of the current configuration.

    Movable points are the free ones not already at alpha; each may keep its
    class or switch to alpha. The binary subproblem is submodular and solved
    exactly as an s-t cut (source side = keep, sink side = alpha) using the
    standard reparametrisation of the pairwise terms.
    """
    movable = [int(i) for i in graph.free_points if states[i] != alpha]
    if not movable:
        return states
    index = {p: x for x, p in enumerate(movable)}
    m = len(movable)
    s, t = m, m + 1
    net = _FlowNetwork(m + 2, eps)
    cost1 = np.zeros(m)  # extra cost of taking alpha
    cost0 = np.zeros(m)  # extra cost of keeping the current class

    for i, j, w in zip(graph.edge_i, graph.edge_j, graph.edge_w):
        i, j, w = int(i), int(j), float(w)
        mi, mj = index.get(i), index.get(j)
        if mi is None and mj is None:
            continue
        if mj is None:
            mi, mj = mj, mi
            i, j = j, i
        if mi is None:
            # j movable, i fixed
            sj = int(states[j])
            si = int(states[i])
            cost0[mj] += w * (si != sj)
            cost1[mj] += w * (si != alpha)
            continue
        # Both movable: with keep costs A = w*(disagree now), switch costs
        # B = C = w and D = 0, the symmetric reparametrisation puts
        # (D - A)/2 on each unary and (B + C - A - D)/2 on each arc direction.
        a_term = w * (states[i] != states[j])
        cost1[mi] += -0.5 * a_term
        cost1[mj] += -0.5 * a_term
        half = 0.5 * (2.0 * w - a_term)
        net.add_edge(mi, mj, half, half)

    for x in range(m):
        c1, c0 = cost1[x], cost0[x]
        base = min(c0, c1)  # shifts into the cut constant, irrelevant to argmin
        if c1 - base > 0:
            net.add_edge(s, x, c1 - base)  # cut when x ends on the alpha side
        if c0 - base > 0:
            net.add_edge(x, t, c0 - base)  # cut when x keeps its class

    net.max_flow(s, t)
    side = net.source_side(s)
    new_states = states.copy()
    for p, x in index.items():
        if not side[x]:
            new_states[p] = alpha
    return new_states


def alpha_expansion(graph, init=None, max_cycles=10):
    """Approximate multi-class energy minimisation by expansion moves.

    Cycles over alpha in ascending class order; each move is a binary min
    cut and never increases the energy. Stops when a full cycle brings no
    improvement or after ``max_cycles``. Exact for q=2.
    """
    if init is None:
        states = nearest_label_init(graph)
    else:
        states = np.asarray(init, dtype=np.int64).copy()
        check_clamps(graph, states)
    eps = 1e-11 * max(1.0, graph.total_weight)
    tol = 1e-12 * max(1.0, graph.total_weight)
    e_cur = energy(graph, states)
    for _ in range(max_cycles):
        improved = False
        for alpha in range(1, graph.q + 1):
            candidate = _expansion_move(graph, states, alpha, eps)
            e_new = energy(graph, candidate)
            if e_new < e_cur - tol:
                states, e_cur = candidate, e_new
                improved = True
        if not improved:
            break
    check_clamps(graph, states)
    return states


def error_count(states, truth):
    """Misclassified points of a configuration against ground truth.

    Returns (total errors, per-true-class error counts).
    """
    states = np.asarray(states)
    truth = np.asarray(truth)
    if states.shape != truth.shape:
        raise ValueError("configuration and truth cover different point sets")
    wrong = states != truth
    per_class = {int(c): int((wrong & (truth == c)).sum()) for c in np.unique(truth)}
    return int(wrong.sum()), per_class


def outcome_errors(outcomes, truth, match_new_classes=False, labelled_classes=None):
    """Misclassifications of an outcome set, confused and new counted as errors.

    With ``match_new_classes`` each new-class id may instead be scored by its
    best-matching true class, restricted to classes absent from
    ``labelled_classes`` when given (the unlabelled-true-class reading).
    Returns (total errors, per-true-class error counts).
    """
    truth = np.asarray(truth)
    if len(outcomes) != len(truth):
        raise ValueError("outcome set and truth cover different point sets")
    assigned = np.zeros(len(truth), dtype=np.int64)  # 0 = counts as error
    for i, o in enumerate(outcomes):
        if o.kind == "assigned":
            assigned[i] = o.label

    if match_new_classes:
        allowed = set(int(c) for c in np.unique(truth))
        if labelled_classes is not None:
            allowed -= set(int(c) for c in labelled_classes)
        new_groups = {}
        for i, o in enumerate(outcomes):
            if o.kind == "new":
                new_groups.setdefault(o.label, []).append(i)
        for members in new_groups.values():
            counts = {}
            for i in members:
                c = int(truth[i])
                if c in allowed:
                    counts[c] = counts.get(c, 0) + 1
            if counts:
                best = max(sorted(counts), key=lambda c: counts[c])
                for i in members:
                    assigned[i] = best

    wrong = assigned != truth
    per_class = {int(c): int((wrong & (truth == c)).sum()) for c in np.unique(truth)}
    return int(wrong.sum()), per_class
