"""Flat-histogram estimation of the density of states and the samplers on top.

The density of states D(E) is estimated with the Wang-Landau recursion:
a single-spin-flip walk accepts moves with min(1, D(E_cur)/D(E_new)),
penalises the current bin by a modification factor ln f after every step,
and halves ln f whenever the visit histogram is flat. Freezing the learned
ln D and running the same walk yields configurations distributed as
1/D(E(S)), i.e. uniformly across energy levels; their per-bin sufficient
statistics can later be reweighted to the Boltzmann distribution at any
temperature. A plain fixed-temperature Metropolis sampler is kept as an
independent cross-check.

Hot loops are numba-compiled. All randomness is drawn from seeded numpy
generators outside the kernels and passed in as arrays, so results are
reproducible bit for bit given a seed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import EnergyBinning, check_clamps, default_binning, energy, random_configuration

__all__ = [
    "DensityOfStates",
    "MarginalAccumulator",
    "MarginalTable",
    "WangLandauParams",
    "dos_from_csv",
    "dos_to_csv",
    "estimate_dos",
    "load_accumulator",
    "merge",
    "metropolis_marginals",
    "multicanonical_sample",
    "save_accumulator",
]

# Full energy recompute cadence (sweeps) and the drift alarm threshold,
# relative to the total edge weight.
RECOMPUTE_SWEEPS = 10_000
DRIFT_TOL = 1e-6

# Stand-in log-density for bins outside the explored spectrum: leaving them
# is always accepted, entering them never is.
_LND_UNSEEN = 1e30


@dataclass
class WangLandauParams:
    """Schedule knobs for the Wang-Landau recursion."""

    ln_f_init: float = 1.0
    ln_f_final: float = 1e-8
    flatness: float = 0.8
    sweeps_per_check: int = 200
    max_sweeps: int = 2_000_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.ln_f_final < self.ln_f_init:
            raise ValueError("need 0 < ln_f_final < ln_f_init")
        if not 0.0 < self.flatness <= 1.0:
            raise ValueError("flatness must be in (0, 1]")


@dataclass
class DensityOfStates:
    """Binned log-density of states, normalised so the total count is q^free.

    ``log_density`` is finite exactly on visited bins and -inf elsewhere;
    ``histogram`` counts every visit over the whole run. ``converged`` is
    False when the sweep guard tripped before the schedule finished.
    """

    binning: EnergyBinning
    log_density: np.ndarray
    histogram: np.ndarray
    converged: bool
    total_sweeps: int
    n_free: int
    q: int

    @property
    def visited(self):
        return self.histogram > 0

    @property
    def n_bins(self):
        return len(self.log_density)


@dataclass
class MarginalAccumulator:
    """Per-energy-bin sufficient statistics gathered by the flat sampler.

    For every bin: the sample count n, how often each point sat in each
    class, how often each edge's endpoints agreed, and the summed energy
    (whose mean is the reweighting representative of the bin).
    """

    binning: EnergyBinning
    n: np.ndarray            # (bins,) int64
    node_counts: np.ndarray  # (bins, N, q) int64
    edge_agree: np.ndarray   # (bins, n_edges) int64
    e_sum: np.ndarray        # (bins,) float64

    @property
    def n_bins(self):
        return len(self.n)


@dataclass
class MarginalTable:
    """Per-point class distribution and per-edge agreement at one temperature."""

    temperature: float
    p: np.ndarray          # (N, q)
    edge_same: np.ndarray  # (n_edges,)
    ground_dominated: bool = False


@njit(cache=True)
def _wl_chunk(states, e0, lnf, lnd, hist, visited,
              adj_ptr, adj_nbr, adj_w, free_idx,
              inv_width, origin, n_bins,
              rand_site, rand_state, rand_u):
    e = e0
    bcur = int((e - origin) * inv_width)
    if bcur < 0:
        bcur = 0
    elif bcur >= n_bins:
        bcur = n_bins - 1
    for t in range(rand_site.shape[0]):
        i = free_idx[rand_site[t]]
        old = states[i]
        new = rand_state[t] + 1
        if new >= old:
            new += 1
        d = 0.0
        for a in range(adj_ptr[i], adj_ptr[i + 1]):
            ns = states[adj_nbr[a]]
            if ns == old:
                d += adj_w[a]
            elif ns == new:
                d -= adj_w[a]
        enew = e + d
        bnew = int((enew - origin) * inv_width)
        if bnew < 0:
            bnew = 0
        elif bnew >= n_bins:
            bnew = n_bins - 1
        diff = lnd[bcur] - lnd[bnew]
        if diff > 0.0:
            diff = 0.0
        if rand_u[t] < math.exp(diff):
            states[i] = new
            e = enew
            bcur = bnew
        lnd[bcur] += lnf
        hist[bcur] += 1
        visited[bcur] = True
    return e


@njit(cache=True)
def _sample_chunk(states, e0, lnd, visited,
                  adj_ptr, adj_nbr, adj_w, free_idx,
                  inv_width, origin, n_bins,
                  thinning_steps, n_records,
                  n_arr, node_counts, edge_agree, e_sum,
                  edge_i, edge_j,
                  rand_site, rand_state, rand_u):
    e = e0
    bcur = int((e - origin) * inv_width)
    if bcur < 0:
        bcur = 0
    elif bcur >= n_bins:
        bcur = n_bins - 1
    t = 0
    for _rec in range(n_records):
        for _ in range(thinning_steps):
            i = free_idx[rand_site[t]]
            old = states[i]
            new = rand_state[t] + 1
            if new >= old:
                new += 1
            d = 0.0
            for a in range(adj_ptr[i], adj_ptr[i + 1]):
                ns = states[adj_nbr[a]]
                if ns == old:
                    d += adj_w[a]
                elif ns == new:
                    d -= adj_w[a]
            enew = e + d
            bnew = int((enew - origin) * inv_width)
            if bnew < 0:
                bnew = 0
            elif bnew >= n_bins:
                bnew = n_bins - 1
            diff = lnd[bcur] - lnd[bnew]
            if diff > 0.0:
                diff = 0.0
            if rand_u[t] < math.exp(diff):
                states[i] = new
                e = enew
                bcur = bnew
            t += 1
        if visited[bcur]:
            n_arr[bcur] += 1
            e_sum[bcur] += e
            for p in range(states.shape[0]):
                node_counts[bcur, p, states[p] - 1] += 1
            for ed in range(edge_i.shape[0]):
                if states[edge_i[ed]] == states[edge_j[ed]]:
                    edge_agree[bcur, ed] += 1
    return e


@njit(cache=True)
def _metropolis_chunk(states, e0, inv_t,
                      adj_ptr, adj_nbr, adj_w, free_idx,
                      n_sweeps, steps_per_sweep, measure,
                      counts, agree, edge_i, edge_j,
                      rand_site, rand_state, rand_u):
    e = e0
    t = 0
    for _sw in range(n_sweeps):
        for _ in range(steps_per_sweep):
            i = free_idx[rand_site[t]]
            old = states[i]
            new = rand_state[t] + 1
            if new >= old:
                new += 1
            d = 0.0
            for a in range(adj_ptr[i], adj_ptr[i + 1]):
                ns = states[adj_nbr[a]]
                if ns == old:
                    d += adj_w[a]
                elif ns == new:
                    d -= adj_w[a]
            if d <= 0.0 or rand_u[t] < math.exp(-d * inv_t):
                states[i] = new
                e = e + d
            t += 1
        if measure:
            for p in range(states.shape[0]):
                counts[p, states[p] - 1] += 1
            for ed in range(edge_i.shape[0]):
                if states[edge_i[ed]] == states[edge_j[ed]]:
                    agree[ed] += 1
    return e


def _rand_arrays(rng, steps, n_free, q):
    return (rng.integers(0, n_free, size=steps),
            rng.integers(0, q - 1, size=steps),
            rng.random(steps))


def _logsumexp(x):
    m = np.max(x)
    return float(m + np.log(np.exp(x - m).sum()))


def estimate_dos(graph, binning=None, params=None):
    """Wang-Landau estimate of the binned density of states.

    Runs the recursion from ln_f_init down to ln_f_final, halving on
    flatness of the per-stage histogram over every bin seen so far. The
    returned log-density is normalised so visited bins sum to q^(free
    spins). If ``max_sweeps`` is exhausted first the partial result is
    returned with ``converged=False``.
    """
    if graph.n_free < 1:
        raise ValueError("graph has no free spins to sample")
    if binning is None:
        binning = default_binning(graph)
    if params is None:
        params = WangLandauParams()
    n_bins = binning.n_bins(graph.total_weight)

    rng = np.random.default_rng(np.random.SeedSequence(params.seed))
    states = random_configuration(graph, rng.integers(0, 2 ** 63))
    e = energy(graph, states)

    lnd = np.zeros(n_bins, dtype=np.float64)
    stage_hist = np.zeros(n_bins, dtype=np.int64)
    total_hist = np.zeros(n_bins, dtype=np.int64)
    visited = np.zeros(n_bins, dtype=np.bool_)

    lnf = float(params.ln_f_init)
    sweeps = 0
    since_recompute = 0
    converged = True
    steps_per_chunk = params.sweeps_per_check * graph.n_free
    inv_width = 1.0 / binning.bin_width
    scale = max(1.0, graph.total_weight)

    while lnf > params.ln_f_final:
        rs, rq, ru = _rand_arrays(rng, steps_per_chunk, graph.n_free, graph.q)
        e = _wl_chunk(states, e, lnf, lnd, stage_hist, visited,
                      graph.adj_ptr, graph.adj_nbr, graph.adj_w, graph.free_points,
                      inv_width, binning.origin, n_bins, rs, rq, ru)
        sweeps += params.sweeps_per_check
        since_recompute += params.sweeps_per_check
        if since_recompute >= RECOMPUTE_SWEEPS:
            check_clamps(graph, states)
            e_true = energy(graph, states)
            if abs(e - e_true) > DRIFT_TOL * scale:
                warnings.warn(f"energy drift {abs(e - e_true):.3e} corrected", stacklevel=2)
            e = e_true
            since_recompute = 0

        h = stage_hist[visited]
        if len(h) and h.min() > 0 and h.min() >= params.flatness * h.mean():
            total_hist += stage_hist
            stage_hist[:] = 0
            lnf *= 0.5
        if sweeps >= params.max_sweeps:
            converged = False
            break

    total_hist += stage_hist
    check_clamps(graph, states)

    log_density = np.full(n_bins, -np.inf)
    vis = total_hist > 0
    if vis.any():
        shift = _logsumexp(lnd[vis]) - graph.n_free * math.log(graph.q)
        log_density[vis] = lnd[vis] - shift
    return DensityOfStates(binning=binning, log_density=log_density,
                           histogram=total_hist, converged=converged,
                           total_sweeps=sweeps, n_free=graph.n_free, q=graph.q)


def multicanonical_sample(graph, dos, n_samples, thinning=2, seed=0):
    """Flat-histogram sample with frozen ln D, filling a MarginalAccumulator.

    Every ``thinning`` sweeps the current configuration's statistics are
    added to its energy bin. Moves into bins the density estimate never
    visited are rejected, so the walk stays on the known spectrum.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    binning = dos.binning
    n_bins = dos.n_bins
    visited = dos.visited.copy()
    lnd = np.where(visited, dos.log_density, _LND_UNSEEN)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    states = random_configuration(graph, rng.integers(0, 2 ** 63))
    e = energy(graph, states)

    acc = MarginalAccumulator(
        binning=binning,
        n=np.zeros(n_bins, dtype=np.int64),
        node_counts=np.zeros((n_bins, graph.n_points, graph.q), dtype=np.int64),
        edge_agree=np.zeros((n_bins, graph.n_edges), dtype=np.int64),
        e_sum=np.zeros(n_bins, dtype=np.float64),
    )

    thinning_steps = max(1, int(thinning)) * graph.n_free
    inv_width = 1.0 / binning.bin_width
    scale = max(1.0, graph.total_weight)
    chunk_records = max(1, min(int(n_samples), 8192))
    done = 0
    while done < n_samples:
        records = min(chunk_records, n_samples - done)
        rs, rq, ru = _rand_arrays(rng, records * thinning_steps, graph.n_free, graph.q)
        e = _sample_chunk(states, e, lnd, visited,
                          graph.adj_ptr, graph.adj_nbr, graph.adj_w, graph.free_points,
                          inv_width, binning.origin, n_bins,
                          thinning_steps, records,
                          acc.n, acc.node_counts, acc.edge_agree, acc.e_sum,
                          graph.edge_i, graph.edge_j, rs, rq, ru)
        done += records
        check_clamps(graph, states)
        e_true = energy(graph, states)
        if abs(e - e_true) > DRIFT_TOL * scale:
            warnings.warn(f"energy drift {abs(e - e_true):.3e} corrected", stacklevel=2)
        e = e_true
    return acc


def merge(a, b):
    """Componentwise sum of two accumulators over the same graph and binning."""
    if (a.binning != b.binning or a.n.shape != b.n.shape
            or a.node_counts.shape != b.node_counts.shape
            or a.edge_agree.shape != b.edge_agree.shape):
        raise ValueError("accumulators have mismatched binning or shapes")
    return MarginalAccumulator(
        binning=a.binning,
        n=a.n + b.n,
        node_counts=a.node_counts + b.node_counts,
        edge_agree=a.edge_agree + b.edge_agree,
        e_sum=a.e_sum + b.e_sum,
    )


def metropolis_marginals(graph, temperature, sweeps=20_000, burn_in=2_000, seed=0):
    """Fixed-temperature Metropolis estimate of marginals and edge agreement.

    Single-spin-flip dynamics accepting with min(1, exp(-dE/T)); node and
    edge statistics are time averages over the sweeps after burn-in. Kept
    as an independent baseline against the reweighted multicanonical
    estimates.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if graph.n_free < 1:
        raise ValueError("graph has no free spins to sample")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    states = random_configuration(graph, rng.integers(0, 2 ** 63))
    e = energy(graph, states)
    inv_t = 1.0 / temperature
    counts = np.zeros((graph.n_points, graph.q), dtype=np.int64)
    agree = np.zeros(graph.n_edges, dtype=np.int64)

    for phase_sweeps, measure in ((burn_in, False), (sweeps, True)):
        done = 0
        while done < phase_sweeps:
            n_sw = min(5_000, phase_sweeps - done)
            rs, rq, ru = _rand_arrays(rng, n_sw * graph.n_free, graph.n_free, graph.q)
            e = _metropolis_chunk(states, e, inv_t,
                                  graph.adj_ptr, graph.adj_nbr, graph.adj_w,
                                  graph.free_points, n_sw, graph.n_free, measure,
                                  counts, agree, graph.edge_i, graph.edge_j,
                                  rs, rq, ru)
            done += n_sw
            check_clamps(graph, states)
            e = energy(graph, states)

    p = counts.astype(np.float64) / float(sweeps)
    edge_same = agree.astype(np.float64) / float(sweeps)
    return MarginalTable(temperature=float(temperature), p=p, edge_same=edge_same)


def dos_to_csv(dos, path):
    """Dump as ``bin_lower_edge,ln_density,histogram_count`` rows, one per bin."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# wl_dos v1 bin_width={float(dos.binning.bin_width)!r} "
                 f"origin={float(dos.binning.origin)!r} n_free={dos.n_free} q={dos.q} "
                 f"converged={int(dos.converged)} total_sweeps={dos.total_sweeps}\n")
        fh.write("bin_lower_edge,ln_density,histogram_count\n")
        for b in range(dos.n_bins):
            fh.write(f"{float(dos.binning.lower_edge(b))!r},"
                     f"{float(dos.log_density[b])!r},{int(dos.histogram[b])}\n")


def dos_from_csv(path):
    """Reload a density-of-states dump written by :func:`dos_to_csv`."""
    meta = {}
    lnd, hist = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
                continue
            if not line or line.startswith("bin_lower_edge"):
                continue
            parts = line.split(",")
            lnd.append(float(parts[1]))
            hist.append(int(parts[2]))
    binning = EnergyBinning(bin_width=float(meta["bin_width"]), origin=float(meta["origin"]))
    return DensityOfStates(binning=binning,
                           log_density=np.asarray(lnd, dtype=np.float64),
                           histogram=np.asarray(hist, dtype=np.int64),
                           converged=bool(int(meta.get("converged", 1))),
                           total_sweeps=int(meta.get("total_sweeps", 0)),
                           n_free=int(meta.get("n_free", 0)),
                           q=int(meta.get("q", 2)))


def save_accumulator(acc, path):
    """Versioned checkpoint; reloadable to resume or merge sampling."""
    np.savez_compressed(path, version=1,
                        bin_width=acc.binning.bin_width, origin=acc.binning.origin,
                        n=acc.n, node_counts=acc.node_counts,
                        edge_agree=acc.edge_agree, e_sum=acc.e_sum)


def load_accumulator(path):
    with np.load(path) as z:
        if int(z["version"]) != 1:
            raise ValueError(f"unsupported accumulator version {z['version']}")
        binning = EnergyBinning(bin_width=float(z["bin_width"]), origin=float(z["origin"]))
        return MarginalAccumulator(binning=binning, n=z["n"].copy(),
                                   node_counts=z["node_counts"].copy(),
                                   edge_agree=z["edge_agree"].copy(),
                                   e_sum=z["e_sum"].copy())
