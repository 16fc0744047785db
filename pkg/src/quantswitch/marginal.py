"""Marginal quantization tree for switching problems on an uncontrolled diffusion.

Each Euler marginal ``X_{t_k}`` gets its own grid ``Gamma_k`` trained by Lloyd
(or CLVQ) on simulated paths. Transition weights between consecutive grids
are then counted on an independent set of paths, and the value is computed
by the backward recursion

    v_m^i = g_i,    v_k^i = max_j [ P_k v_{k+1}^j + h f_j - c_ij ]    on Gamma_k.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import vq
from .euler import check_uncontrolled, iter_uncontrolled
from .model import SwitchingModel, TimeGrid

MAGIC = "MQ1"


class UnvisitedCellWarning(UserWarning):
    pass


def allocate_grid_sizes(tg: TimeGrid, d: int, nbar: int) -> np.ndarray:
    """Sizes ``N_1..N_m`` dispatching ``nbar`` points proportionally to ``t_k^(d / (2 (d + 1)))``.

    Ceilings are kept as is, so the total may exceed ``nbar`` slightly.
    """
    if nbar < tg.m:
        raise ValueError(f"nbar={nbar} smaller than the number of time steps m={tg.m}")
    t = tg.times[1:]
    w = t ** (d / (2.0 * (d + 1)))
    raw = w * nbar / w.sum()
    return np.ceil(raw - 1e-9 * np.maximum(raw, 1.0)).astype(int)


@dataclass
class TrainedGrids:
    grids: list  # Gamma_0..Gamma_m, each (N_k, d)
    distortions: list  # empirical L2 quantization error per layer
    histories: list = field(default_factory=list, repr=False)


def _seeds(seed: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence(seed).generate_state(2)
    return int(a), int(b)


def _init_points(sample: np.ndarray, n: int, rng) -> np.ndarray:
    if sample.shape[1] == 1:
        levels = (np.arange(n) + 0.5) / n
        return np.quantile(sample[:, 0], levels)[:, None]
    return sample[rng.choice(sample.shape[0], size=n, replace=False)]


def train_layer(sample: np.ndarray, n: int, max_iters: int = 200, method: str = "lloyd",
                tol: float = 1e-6, seed: int = 0):
    """Quantization grid of one marginal sample; returns (points, L2 error, history)."""
    sample = np.asarray(sample, dtype=float)
    uniq = np.unique(sample, axis=0)
    if uniq.shape[0] <= n:
        # degenerate marginal: the distinct values are the grid
        return uniq, 0.0, [0.0]
    rng = np.random.default_rng(seed)
    init = np.unique(_init_points(sample, n, rng), axis=0)
    if init.shape[0] < n:
        extra = uniq[rng.choice(uniq.shape[0], size=n, replace=False)]
        init = np.unique(np.vstack([init, extra]), axis=0)[:n]
        if init.shape[0] < n:
            init = extra
    if method == "clvq":
        pts = vq.clvq(sample[rng.permutation(sample.shape[0])], init)
        res = vq.lloyd(sample, pts, max_iters=1, prune_empty=True)
    elif method == "lloyd":
        res = vq.lloyd(sample, init, max_iters=max_iters, tol=tol, prune_empty=True)
    else:
        raise ValueError(f"unknown training method {method!r}")
    pts = res.points
    if pts.shape[1] == 1:
        pts = np.sort(pts, axis=0)
    return pts, float(math.sqrt(res.history[-1])), res.history


def train_marginal_grids(model: SwitchingModel, x0, tg: TimeGrid, sizes, n_train: int,
                         max_iters: int = 200, seed: int = 0, method: str = "lloyd") -> TrainedGrids:
    """Train ``Gamma_1..Gamma_m`` on ``n_train`` Euler paths; ``Gamma_0 = {x0}``."""
    check_uncontrolled(model, x0)
    sizes = np.asarray(sizes, dtype=int)
    if sizes.shape[0] != tg.m:
        raise ValueError(f"need {tg.m} grid sizes, got {sizes.shape[0]}")
    train_seed, _ = _seeds(seed)
    grids, dists, hists = [], [], []
    for k, layer in enumerate(iter_uncontrolled(model, x0, tg, n_train, train_seed)):
        if k == 0:
            pts, err, hist = train_layer(layer, 1, max_iters=max_iters)
        else:
            pts, err, hist = train_layer(layer, int(sizes[k - 1]), max_iters=max_iters, method=method,
                                         seed=train_seed + k)
        grids.append(pts)
        dists.append(err)
        hists.append(hist)
    return TrainedGrids(grids, dists, hists)


@dataclass
class MarginalQuantization:
    grids: list  # (N_k, d) for k = 0..m
    weights: list  # marginal cell probabilities p_k, (N_k,)
    transitions: list  # (N_k, N_{k+1}) row-stochastic, k = 0..m-1
    time_grid: TimeGrid
    n_mc: int
    seed: int
    unvisited: list  # bool (N_k,), rows filled by the nearest-visited rule
    sample_means: list = field(default_factory=list)  # empirical E[X_{t_k}]
    sample_stderr: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    distortions: list = field(default_factory=list)

    @property
    def sizes(self) -> list:
        return [g.shape[0] for g in self.grids]

    def quantized_mean(self, k: int) -> np.ndarray:
        return self.weights[k] @ self.grids[k]


def estimate_transitions(model: SwitchingModel, x0, tg: TimeGrid, grids, n_mc: int,
                         seed: int = 0) -> MarginalQuantization:
    """Count joint Voronoi-cell occupations of consecutive layers on ``n_mc`` fresh paths.

    A cell never visited at time ``k`` gets a point mass on the visited cell of
    ``Gamma_{k+1}`` closest to it and is flagged in ``unvisited``.
    """
    check_uncontrolled(model, x0)
    if isinstance(grids, TrainedGrids):
        grids = grids.grids
    grids = [np.atleast_2d(np.asarray(g, dtype=float)) for g in grids]
    if len(grids) != tg.m + 1:
        raise ValueError(f"need {tg.m + 1} grids, got {len(grids)}")
    _, mc_seed = _seeds(seed)
    weights, trans, means, errs = [], [], [], []
    prev = None
    for k, layer in enumerate(iter_uncontrolled(model, x0, tg, n_mc, mc_seed)):
        cell = vq.assign(grids[k], layer)
        counts = np.bincount(cell, minlength=grids[k].shape[0])
        weights.append(counts / n_mc)
        means.append(layer.mean(axis=0))
        errs.append(layer.std(axis=0, ddof=1) / math.sqrt(n_mc))
        if prev is not None:
            n0, n1 = grids[k - 1].shape[0], grids[k].shape[0]
            joint = np.bincount(prev * n1 + cell, minlength=n0 * n1).reshape(n0, n1).astype(float)
            trans.append(joint)
        prev = cell

    unvisited = []
    for k in range(tg.m):
        joint = trans[k]
        rows = joint.sum(axis=1)
        empty = rows == 0
        with np.errstate(invalid="ignore"):
            pi = joint / np.where(empty, 1.0, rows)[:, None]
        if empty.any():
            visited = np.flatnonzero(weights[k + 1] > 0)
            target = visited[vq.nearest_index(grids[k + 1][visited], grids[k][empty])]
            pi[np.flatnonzero(empty), target] = 1.0
            warnings.warn(f"{int(empty.sum())} cells of layer {k} never visited; "
                          "their rows use a point mass on the nearest visited cell",
                          UnvisitedCellWarning, stacklevel=2)
        trans[k] = pi
        unvisited.append(empty)
    last_empty = weights[tg.m] == 0
    if last_empty.any():
        warnings.warn(f"{int(last_empty.sum())} cells of the last layer never visited",
                      UnvisitedCellWarning, stacklevel=2)
    unvisited.append(last_empty)
    return MarginalQuantization(grids, weights, trans, tg, n_mc, seed, unvisited, means, errs)


def build_quantization_tree(model: SwitchingModel, x0, tg: TimeGrid, nbar: int, n_train: int | None = None,
                            n_mc: int = 10 ** 6, seed: int = 0, max_iters: int = 200,
                            method: str = "lloyd") -> MarginalQuantization:
    """Allocate grid sizes, train the grids and estimate the transitions."""
    sizes = allocate_grid_sizes(tg, model.d, nbar)
    if n_train is None:
        n_train = int(min(10 ** 6, max(200_000, 200 * sizes.max())))
    t0 = time.perf_counter()
    trained = train_marginal_grids(model, x0, tg, sizes, n_train, max_iters=max_iters, seed=seed, method=method)
    t1 = time.perf_counter()
    mq = estimate_transitions(model, x0, tg, trained.grids, n_mc, seed=seed)
    mq.timings = {"training": t1 - t0, "transitions": time.perf_counter() - t1}
    mq.distortions = trained.distortions
    return mq


@dataclass
class QuantizedValueProcess:
    values: list  # (N_k, q) per layer
    policy: list  # (N_k, q) regime chosen from regime i at grid point l
    grids: list

    @property
    def y0(self) -> np.ndarray:
        """Values at the single root point, one per regime."""
        return self.values[0][0]


def tree_solve(model: SwitchingModel, mq: MarginalQuantization) -> QuantizedValueProcess:
    tg = mq.time_grid
    q, h, times = model.q, tg.h, tg.times
    grids = mq.grids
    values = [None] * (tg.m + 1)
    policy = [None] * (tg.m + 1)
    last = grids[tg.m]
    values[tg.m] = np.stack([np.broadcast_to(model.terminal_gain(last, i), last.shape[:1]) for i in range(q)],
                            axis=1).astype(float)
    policy[tg.m] = np.tile(np.arange(q), (last.shape[0], 1))
    for k in range(tg.m - 1, -1, -1):
        x = grids[k]
        cont = mq.transitions[k] @ values[k + 1]
        for j in range(q):
            cont[:, j] += h * np.broadcast_to(model.running_profit(times[k], x, j), x.shape[:1])
        cand = cont[:, None, :] - model.cost_matrix(x)
        best = np.argmax(cand, axis=2)
        policy[k] = best
        values[k] = np.take_along_axis(cand, best[..., None], axis=2)[..., 0]
        if not np.all(np.isfinite(values[k])):
            raise FloatingPointError(f"non-finite value in layer {k}")
    return QuantizedValueProcess(values, policy, grids)


def save_tree(mq: MarginalQuantization, path) -> None:
    """Versioned text dump: layers with points, weights and flags, then sparse transitions."""
    tg = mq.time_grid
    d = mq.grids[0].shape[1]
    out = [MAGIC, f"d {d} m {tg.m} T {tg.horizon!r} n_mc {mq.n_mc} seed {mq.seed}"]
    for k, (g, p, flag) in enumerate(zip(mq.grids, mq.weights, mq.unvisited)):
        out.append(f"layer {k} {g.shape[0]}")
        for row, pk, fl in zip(g, p, flag):
            out.append(" ".join(repr(float(v)) for v in row) + f" {float(pk)!r} {int(fl)}")
    triples = []
    for k, pi in enumerate(mq.transitions):
        for l, lp in zip(*np.nonzero(pi)):
            triples.append(f"{k} {l} {lp} {float(pi[l, lp])!r}")
    out.append(f"transitions {len(triples)}")
    out.extend(triples)
    Path(path).write_text("\n".join(out) + "\n")


def load_tree(path) -> MarginalQuantization:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ValueError(f"missing {MAGIC} header")
    head = lines[1].split()
    meta = dict(zip(head[::2], head[1::2]))
    d, m = int(meta["d"]), int(meta["m"])
    tg = TimeGrid(float(meta["T"]), m)
    pos = 2
    grids, weights, flags = [], [], []
    for k in range(m + 1):
        tag, kk, n = lines[pos].split()
        if tag != "layer" or int(kk) != k:
            raise ValueError(f"expected layer {k} at line {pos + 1}")
        rows = np.array([[float(v) for v in ln.split()] for ln in lines[pos + 1:pos + 1 + int(n)]])
        rows = rows.reshape(int(n), d + 2)
        grids.append(rows[:, :d])
        weights.append(rows[:, d])
        flags.append(rows[:, d + 1].astype(bool))
        pos += 1 + int(n)
    tag, nnz = lines[pos].split()
    if tag != "transitions":
        raise ValueError("missing transitions block")
    trans = [np.zeros((grids[k].shape[0], grids[k + 1].shape[0])) for k in range(m)]
    for ln in lines[pos + 1:pos + 1 + int(nnz)]:
        k, l, lp, v = ln.split()
        trans[int(k)][int(l), int(lp)] = float(v)
    return MarginalQuantization(grids, weights, trans, tg, int(meta["n_mc"]), int(meta["seed"]), flags)
