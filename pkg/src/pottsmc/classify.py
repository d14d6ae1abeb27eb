"""Temperature-dependent classification from flat-histogram statistics.

Reweighting turns the per-bin sufficient statistics into Boltzmann marginals
at any temperature: each visited bin enters with log-weight ln D(E) - E/T,
evaluated at the bin's mean sampled energy and combined through a
log-sum-exp shift.

Classification at a temperature is a two-step rule. Points whose top-two
class probabilities differ by more than the confidence gap tau are assigned
outright. For the rest, edges whose endpoint-agreement probability falls
below half way between the random level 1/q and 1 are deleted, and the
surviving connected components decide: a component anchored by confidently
assigned points of a single class adopts that class, one with anchors of
several classes is marked confused between them, and a component with no
anchor at all becomes a new class. With no labelled points every point is
treated as unconfident and the same component rule degrades to plain
correlation clustering.

Scanning a temperature grid gives each point a classification profile; the
selected temperature maximises |c(T)| * s(T), where c(T) are the points
confidently classified differently from the T=0 solution and s(T) the mean
temperature span over which those classifications persist.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import component_labels
from .sampling import MarginalTable

__all__ = [
    "PointOutcome",
    "TemperatureProfile",
    "build_profile",
    "classify",
    "correlation_threshold",
    "default_eta_threshold",
    "default_temperature_grid",
    "outcome_key",
    "reweight",
    "select_temperature",
    "t_zero_table",
    "unsupervised_cluster",
    "write_profile_csv",
]


def correlation_threshold(q):
    """Edge-deletion threshold: half way between random level 1/q and 1."""
    return 0.5 * (1.0 + 1.0 / q)


@dataclass(frozen=True)
class PointOutcome:
    """Classification outcome of one point at one temperature.

    kind is "assigned", "confused" or "new". ``label`` holds the class for
    assigned points and the fresh cluster id (> q) for new-class points;
    ``classes`` holds the sorted confusion set. ``gap`` is the point's own
    top-two probability gap and ``confident`` whether it exceeded tau.
    """

    kind: str
    label: int | None
    classes: tuple = ()
    gap: float = 0.0
    confident: bool = False


def outcome_key(outcome):
    """Identity of an outcome for stability comparisons; the gap is analog
    and deliberately excluded."""
    return (outcome.kind, outcome.label, outcome.classes)


def reweight(dos, acc, temperature):
    """Boltzmann marginals at any temperature from the flat-sample statistics.

    Bins with samples get log-weight ln D - <E>/T; node and edge statistics
    are weight-averaged ratios. If a single bin carries essentially all the
    weight the table is flagged ground-dominated (and still returned).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if dos.binning != acc.binning or dos.n_bins != acc.n_bins:
        raise ValueError("density and accumulator have mismatched binning")
    have = (acc.n > 0) & dos.visited
    if not have.any():
        raise ValueError("accumulator is empty")

    n = acc.n[have].astype(np.float64)
    e_mean = acc.e_sum[have] / n
    log_w = dos.log_density[have] - e_mean / temperature
    w = np.exp(log_w - log_w.max())
    w_sum = w.sum()
    dominated = bool(w.max() / w_sum > 1.0 - 1e-12)

    ratios = acc.node_counts[have].astype(np.float64) / n[:, None, None]
    p = np.tensordot(w, ratios, axes=1) / w_sum
    p /= p.sum(axis=1, keepdims=True)
    edge_ratios = acc.edge_agree[have].astype(np.float64) / n[:, None]
    edge_same = (w @ edge_ratios) / w_sum
    return MarginalTable(temperature=float(temperature), p=p,
                         edge_same=edge_same, ground_dominated=dominated)


def t_zero_table(dos, acc):
    """Ground-state-limit marginals: all weight on the lowest sampled bin."""
    have = np.flatnonzero((acc.n > 0) & dos.visited)
    if not len(have):
        raise ValueError("accumulator is empty")
    b = int(have[0])
    n = float(acc.n[b])
    p = acc.node_counts[b].astype(np.float64) / n
    p /= p.sum(axis=1, keepdims=True)
    edge_same = acc.edge_agree[b].astype(np.float64) / n
    return MarginalTable(temperature=0.0, p=p, edge_same=edge_same,
                         ground_dominated=True)


def _top_two(p_row):
    order = np.argsort(p_row, kind="stable")
    p1 = float(p_row[order[-1]])
    p2 = float(p_row[order[-2]])
    return int(order[-1]) + 1, p1 - p2


def _component_outcomes(table, graph, confident_class, gaps):
    """Shared component step: anchors are the confidently classified points."""
    keep = table.edge_same >= correlation_threshold(graph.q)
    comp = component_labels(graph.n_points, graph.edge_i, graph.edge_j, keep)
    n_comp = int(comp.max()) + 1 if graph.n_points else 0

    anchors = [set() for _ in range(n_comp)]
    for i in range(graph.n_points):
        if confident_class[i] > 0:
            anchors[comp[i]].add(int(confident_class[i]))

    next_new = graph.q + 1
    new_ids = {}
    outcomes = []
    for i in range(graph.n_points):
        if confident_class[i] > 0:
            outcomes.append(PointOutcome("assigned", int(confident_class[i]),
                                         gap=gaps[i], confident=True))
            continue
        cls = anchors[comp[i]]
        if len(cls) == 1:
            outcomes.append(PointOutcome("assigned", next(iter(cls)), gap=gaps[i]))
        elif len(cls) > 1:
            outcomes.append(PointOutcome("confused", None,
                                         classes=tuple(sorted(cls)), gap=gaps[i]))
        else:
            c = comp[i]
            if c not in new_ids:
                new_ids[c] = next_new
                next_new += 1
            outcomes.append(PointOutcome("new", new_ids[c], gap=gaps[i]))
    return outcomes


def classify(table, graph, tau=0.1):
    """Two-step classification of every point at the table's temperature.

    Step one assigns points whose top-two probability gap exceeds tau
    (labelled points always qualify). Step two resolves the rest through
    the connected components of the correlation-thresholded graph, with
    the step-one points acting as anchors.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    n = graph.n_points
    confident_class = np.zeros(n, dtype=np.int64)
    gaps = np.zeros(n)
    for i in range(n):
        best, gap = _top_two(table.p[i])
        gaps[i] = gap
        if gap > tau:
            confident_class[i] = best
    return _component_outcomes(table, graph, confident_class, gaps)


def unsupervised_cluster(table, graph):
    """Correlation clustering for the unlabelled case.

    With no labels every marginal is 1/q, so all points are treated as
    unconfident regardless of sampling noise and each correlation component
    comes out as its own new class.
    """
    if graph.labels:
        raise ValueError("unsupervised clustering expects an unlabelled graph")
    n = graph.n_points
    gaps = np.zeros(n)
    for i in range(n):
        gaps[i] = _top_two(table.p[i])[1]
    return _component_outcomes(table, graph, np.zeros(n, dtype=np.int64), gaps)


@dataclass
class TemperatureProfile:
    """Per-point outcomes across an ascending temperature grid.

    ``spans[g, i]`` is the temperature length of the maximal run of grid
    cells around grid point g over which point i's outcome is unchanged.
    ``eta`` and ``t_star`` are filled by :func:`select_temperature`.
    """

    temperatures: np.ndarray
    tau: float
    outcomes: list                    # [grid index][point] -> PointOutcome
    spans: np.ndarray                 # (grid, N) float
    eta: np.ndarray | None = None
    t_star: float | None = None
    eta_threshold: float | None = None


def _cell_widths(temperatures):
    g = len(temperatures)
    if g == 1:
        return np.zeros(1)
    widths = np.empty(g)
    widths[:-1] = np.diff(temperatures)
    widths[-1] = widths[-2]
    return widths


def build_profile(dos, acc, graph, temperatures, tau=0.1):
    """Classify at every grid temperature and measure outcome stability.

    Stability intervals are maximal runs of grid cells with an identical
    outcome, measured in temperature units (sum of cell widths) so the
    result does not depend on grid resolution.
    """
    temperatures = np.asarray(temperatures, dtype=np.float64)
    if len(temperatures) == 0 or np.any(np.diff(temperatures) <= 0) or temperatures[0] <= 0:
        raise ValueError("temperature grid must be ascending and positive")
    outcomes = [classify(reweight(dos, acc, t), graph, tau) for t in temperatures]

    g, n = len(temperatures), graph.n_points
    widths = _cell_widths(temperatures)
    spans = np.zeros((g, n))
    for i in range(n):
        keys = [outcome_key(outcomes[t][i]) for t in range(g)]
        start = 0
        for t in range(1, g + 1):
            if t == g or keys[t] != keys[start]:
                spans[start:t, i] = widths[start:t].sum()
                start = t
    return TemperatureProfile(temperatures=temperatures, tau=tau,
                              outcomes=outcomes, spans=spans)


def select_temperature(profile, t_zero_outcomes, eta_threshold):
    """Stability score and selected temperature.

    c(T) collects points whose outcome at T is confident and differs from
    the T=0 outcome; eta(T) = |c(T)| times the mean stability span of those
    points. The selected temperature is the grid argmax (ties toward lower
    T), falling back to 0 when the best score is below ``eta_threshold``.
    Returns (t_star, eta array) and records both on the profile.
    """
    zero_keys = [outcome_key(o) for o in t_zero_outcomes]
    g = len(profile.temperatures)
    eta = np.zeros(g)
    for t in range(g):
        spans = [profile.spans[t, i]
                 for i, o in enumerate(profile.outcomes[t])
                 if o.confident and outcome_key(o) != zero_keys[i]]
        if spans:
            eta[t] = len(spans) * float(np.mean(spans))
    best = int(np.argmax(eta))
    t_star = float(profile.temperatures[best]) if eta[best] >= eta_threshold else 0.0
    profile.eta = eta
    profile.t_star = t_star
    profile.eta_threshold = float(eta_threshold)
    return t_star, eta


def default_temperature_grid(graph, t_min=0.05, t_max=2.0, count=40):
    """Linear grid in mean-edge-weight units, so unit-J toys see [t_min, t_max]."""
    mean_j = graph.total_weight / graph.n_edges if graph.n_edges else 1.0
    return np.linspace(t_min, t_max, count) * mean_j


def default_eta_threshold(graph, temperatures):
    """Fallback scale for the stability score: 1% of N times the grid span."""
    span = float(temperatures[-1] - temperatures[0]) if len(temperatures) > 1 else 1.0
    return 0.01 * graph.n_points * span


def _format_outcome(outcome):
    if outcome.kind == "confused":
        return "|".join(str(c) for c in outcome.classes)
    return str(outcome.label)


def write_profile_csv(profile, path, header_comment=None):
    """Profile rows ``point_id,T,outcome_kind,class_or_set,gap`` at 6 digits."""
    n = len(profile.outcomes[0])
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("point_id,T,outcome_kind,class_or_set,gap\n")
        for i in range(n):
            for t, temp in enumerate(profile.temperatures):
                o = profile.outcomes[t][i]
                fh.write(f"{i},{temp:.6g},{o.kind},{_format_outcome(o)},{o.gap:.6g}\n")
