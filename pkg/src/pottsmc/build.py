"""Graph construction: feature matrices, grids and synthetic toy instances.

Feature matrices are (N, d) float arrays with NaN marking missing entries.
Distances between rows with missing entries are computed over the shared
coordinates and rescaled by sqrt(d / d_shared), which is unbiased when
entries are missing at random. Similarities use the Gaussian kernel
J = exp(-d^2 / a^2) with the scale a set to the mean distance over the
retained neighbour edges.

Ground truth for synthetic instances is a length-N int array of classes
numbered from 1; it exists for evaluation only and never enters the model.
"""
from __future__ import annotations

import csv
import warnings

import numpy as np

from .model import DataGraph, component_labels

__all__ = [
    "filament_toy",
    "filter_min_present",
    "grid_graph",
    "knn_similarity_graph",
    "load_feature_csv",
    "load_labels_csv",
    "pairwise_distances",
    "sample_labels",
    "three_class_toy",
    "write_labels_csv",
    "zscore_normalize",
]


def load_feature_csv(path):
    """Feature CSV: header row, first column point id, empty cells = missing.

    Returns (ids, X) with X an (N, d) float array holding NaN for missing.
    """
    ids, rows = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty feature file")
        width = len(header) - 1
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) - 1 != width:
                raise ValueError(f"{path}:{lineno}: expected {width} feature columns")
            ids.append(rec[0])
            rows.append([float(v) if v.strip() else np.nan for v in rec[1:]])
    return ids, np.asarray(rows, dtype=np.float64)


def load_labels_csv(path):
    """Label CSV ``id,class`` -> dict point index -> class."""
    labels = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if not rec or rec[0].startswith("#"):
                continue
            if lineno == 1 and not rec[0].strip().lstrip("-").isdigit():
                continue  # header
            if len(rec) < 2:
                raise ValueError(f"{path}:{lineno}: expected 'id,class'")
            labels[int(rec[0])] = int(rec[1])
    return labels


def write_labels_csv(labels, path, header=("id", "class")):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        if isinstance(labels, dict):
            items = sorted(labels.items())
        else:
            items = list(enumerate(np.asarray(labels).tolist()))
        for k, c in items:
            writer.writerow([k, c])


def filter_min_present(x, min_present):
    """Keep rows with at least ``min_present`` non-missing entries.

    Returns (filtered matrix, indices of kept rows).
    """
    x = np.asarray(x, dtype=np.float64)
    present = (~np.isnan(x)).sum(axis=1)
    kept = np.flatnonzero(present >= min_present)
    return x[kept], kept


def zscore_normalize(x):
    """Centre each feature to mean 0 and scale to population std 1.

    Statistics are taken over present entries only; missing entries stay
    missing. A zero-variance feature is rejected with its column index.
    """
    x = np.asarray(x, dtype=np.float64).copy()
    for col in range(x.shape[1]):
        v = x[:, col]
        present = ~np.isnan(v)
        if not present.any():
            raise ValueError(f"feature {col} has no present entries")
        mu = v[present].mean()
        sigma = v[present].std()  # population std
        if sigma == 0.0:
            raise ValueError(f"feature {col} has zero variance")
        x[:, col] = (v - mu) / sigma
    return x


def pairwise_distances(x):
    """Euclidean distances between rows, rescaled over shared coordinates.

    With no missing entries this is the plain Euclidean distance matrix.
    A pair of rows with no shared coordinates is an error.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if not np.isnan(x).any():
        sq = (x * x).sum(axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.maximum(d2, 0.0, out=d2)
        return np.sqrt(d2)

    filled = np.nan_to_num(x, nan=0.0)
    mask = (~np.isnan(x)).astype(np.float64)
    shared = mask @ mask.T                      # d_shared per pair
    prod = filled @ filled.T
    sq = filled * filled
    # sum over shared coords of (x_i - x_j)^2, missing coords contribute 0
    d2 = (sq @ mask.T) + (mask @ sq.T) - 2.0 * prod
    np.maximum(d2, 0.0, out=d2)
    if np.any((shared == 0) & ~np.eye(n, dtype=bool)):
        i, j = np.argwhere((shared == 0) & ~np.eye(n, dtype=bool))[0]
        raise ValueError(f"points {i} and {j} share no present features")
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = d2 * (d / np.maximum(shared, 1.0))
    return np.sqrt(d2)


def knn_similarity_graph(x, k=10, q=2, labels=None):
    """Symmetrised k-nearest-neighbour graph with Gaussian similarities.

    Each point selects its k nearest neighbours (ties broken by index); the
    edge set is the union over both directions. The kernel scale a is the
    mean distance over the retained edges, so J = exp(-d^2/a^2) lies in
    (0, 1] with duplicates at exactly 1. Disconnected results are reported
    with a warning; classification proceeds per component.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n <= k:
        raise ValueError(f"need more points than k: N={n}, k={k}")
    dist = pairwise_distances(x)

    pairs = set()
    for i in range(n):
        order = np.argsort(dist[i], kind="stable")
        picked = 0
        for j in order:
            if j == i:
                continue
            pairs.add((i, int(j)) if i < j else (int(j), i))
            picked += 1
            if picked == k:
                break
    pairs = sorted(pairs)
    dvals = np.array([dist[i, j] for i, j in pairs])
    a = float(dvals.mean())
    if a > 0:
        similarity = np.exp(-(dvals ** 2) / a ** 2)
    else:
        similarity = np.ones_like(dvals)
    similarity[dvals == 0.0] = 1.0

    edges = [(i, j, s) for (i, j), s in zip(pairs, similarity)]
    graph = DataGraph(n, edges, q, labels)
    comp = component_labels(n, graph.edge_i, graph.edge_j)
    n_comp = int(comp.max()) + 1 if n else 0
    if n_comp > 1:
        warnings.warn(f"knn graph is disconnected: {n_comp} components", stacklevel=2)
    graph.kernel_scale = a
    graph.n_components = n_comp
    return graph


def grid_graph(mask, q=2, labels=None):
    """4-neighbour unit-similarity graph over the true pixels of a 2-D mask.

    Points are numbered over true pixels in row-major order.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or not mask.any():
        raise ValueError("mask must be a non-empty 2-D boolean image")
    h, w = mask.shape
    index = -np.ones((h, w), dtype=np.int64)
    index[mask] = np.arange(mask.sum())
    edges = []
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            if c + 1 < w and mask[r, c + 1]:
                edges.append((int(index[r, c]), int(index[r, c + 1]), 1.0))
            if r + 1 < h and mask[r + 1, c]:
                edges.append((int(index[r, c]), int(index[r + 1, c]), 1.0))
    return DataGraph(int(mask.sum()), edges, q, labels)


def filament_toy(block_w, block_h, filament_len):
    """Two unit-J blocks joined by a one-pixel-wide bridge.

    Ground truth: left block is class 1, right block class 2; bridge pixels
    split at the midpoint, the first ceil(len/2) attaching to the left.
    Returns (graph, truth) with the graph unlabelled (q=2).
    """
    if block_w < 1 or block_h < 1 or filament_len < 0:
        raise ValueError("block dimensions must be >= 1 and filament_len >= 0")
    w, h, flen = int(block_w), int(block_h), int(filament_len)
    gap = max(flen, 1)  # filament_len 0 leaves an empty column: disconnected
    cols = 2 * w + gap
    mask = np.zeros((h, cols), dtype=bool)
    mask[:, :w] = True
    mask[:, w + gap:] = True
    row = h // 2
    mask[row, w:w + flen] = True

    graph = grid_graph(mask, q=2)
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(mask.sum())
    truth = np.zeros(graph.n_points, dtype=np.int64)
    left_cut = w + (flen + 1) // 2
    for r in range(h):
        for c in range(cols):
            if mask[r, c]:
                truth[index[r, c]] = 1 if c < left_cut else 2
    return graph, truth


def three_class_toy(block_w=6, block_h=5):
    """Three unit-J blocks touching at single-pixel contacts, one cluster overall.

    The blocks form a staircase so each adjacent pair shares exactly one
    grid adjacency. Ground truth classes left to right are 1, 3, 2: the
    middle region is the one a labelling of the outer two leaves undiscovered.
    Returns (graph, truth) with the graph unlabelled (q=2).
    """
    w, h = int(block_w), int(block_h)
    if w < 1 or h < 1:
        raise ValueError("block dimensions must be >= 1")
    rows = 3 * h - 2 if h > 1 else 1
    mask = np.zeros((max(rows, h), 3 * w), dtype=bool)
    r0 = [0, h - 1, 2 * h - 2] if h > 1 else [0, 0, 0]
    for b in range(3):
        mask[r0[b]:r0[b] + h, b * w:(b + 1) * w] = True

    graph = grid_graph(mask, q=2)
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(mask.sum())
    truth = np.zeros(graph.n_points, dtype=np.int64)
    block_class = (1, 3, 2)
    for b in range(3):
        for r in range(r0[b], r0[b] + h):
            for c in range(b * w, (b + 1) * w):
                truth[index[r, c]] = block_class[b]
    return graph, truth


def sample_labels(truth, m, classes=None, region=None, seed=0, stratified=True):
    """Uniform label sample without replacement from the allowed points.

    ``classes`` restricts to points of those true classes, ``region`` to a
    point subset. In stratified mode every allowed class is represented at
    least once (requires m >= number of allowed classes). Returns a dict
    point index -> true class, deterministic per seed.
    """
    truth = np.asarray(truth, dtype=np.int64)
    allowed = set(int(c) for c in (classes if classes is not None else np.unique(truth)))
    pool = [i for i in range(len(truth)) if int(truth[i]) in allowed]
    if region is not None:
        region = set(int(p) for p in region)
        pool = [i for i in pool if i in region]
    present = sorted(set(int(truth[i]) for i in pool))
    if m > len(pool):
        raise ValueError(f"requested {m} labels from a pool of {len(pool)}")
    rng = np.random.default_rng(seed)
    if stratified:
        if m < len(present):
            raise ValueError(
                f"stratified draw of {m} cannot cover {len(present)} classes")
        chosen = []
        for c in present:
            members = [i for i in pool if int(truth[i]) == c]
            chosen.append(int(rng.choice(members)))
        rest = [i for i in pool if i not in set(chosen)]
        extra = rng.choice(len(rest), size=m - len(chosen), replace=False) if m > len(chosen) else []
        chosen.extend(rest[int(e)] for e in extra)
    else:
        idx = rng.choice(len(pool), size=m, replace=False)
        chosen = [pool[int(i)] for i in idx]
    return {int(i): int(truth[i]) for i in sorted(chosen)}
