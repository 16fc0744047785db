"""Backward dynamic programming on a bounded lattice with a quantized Euler transition.

At each grid time ``t_k`` and lattice node ``x``::

    v_i(t_k, x) = max_j [ sum_l pi_l v_j(t_{k+1}, Proj(F_j(x, w_l))) + f_j(t_k, x) h - c_ij(x) ]

with ``v_i(t_m, .) = g_i`` and ``F_j(x, w) = x + b_j(x) h + sigma_j(x) sqrt(h) w``.
The projection indices do not depend on ``k``, so they are tabulated once per
regime and each backward step is a gather followed by a weighted sum.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gammaln, ndtr

from .euler import draw_shocks, euler_step, path_streams
from .gauss_quant import GaussianQuantizer
from .model import SwitchingModel, TimeGrid

DEFAULT_NODE_BUDGET = 10 ** 8
_TABLE_CHUNK = 1 << 18
_BACKWARD_CHUNK = 1 << 16


class LatticeBudgetError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def _ball_integers(d: int, r2: float) -> np.ndarray:
    """Integer vectors with squared norm <= r2, in lexicographic order."""
    r = int(math.floor(math.sqrt(max(r2, 0.0)) + 1e-9))
    while r * r > r2:
        r -= 1
    if d == 1:
        return np.arange(-r, r + 1, dtype=np.int64)[:, None]
    parts = []
    for z1 in range(-r, r + 1):
        sub = _ball_integers(d - 1, r2 - z1 * z1)
        parts.append(np.hstack([np.full((sub.shape[0], 1), z1, dtype=np.int64), sub]))
    return np.vstack(parts)


class LatticeGrid:
    """Nodes ``center + (delta/d) z`` with integer ``z`` inside the closed ball of radius ``R``."""

    def __init__(self, d: int, delta: float, R: float, center=None, node_budget: int = DEFAULT_NODE_BUDGET):
        if not delta > 0:
            raise ValueError(f"delta must be positive, got {delta}")
        self.d = int(d)
        self.delta = float(delta)
        self.R = float(R)
        self.step = self.delta / self.d
        if self.R < self.step * (1 - 1e-12):
            raise ValueError(f"R={R} smaller than the lattice step {self.step}")
        self.center = np.zeros(self.d) if center is None else np.broadcast_to(
            np.asarray(center, dtype=float), (self.d,)).copy()
        ratio = self.R / self.step
        self._r2 = ratio * ratio * (1 + 1e-12) + 1e-9
        self.radius_int = int(math.floor(math.sqrt(self._r2)))
        estimate = self.estimated_count(self.d, ratio)
        if estimate > node_budget:
            raise LatticeBudgetError(f"lattice would hold about {estimate:.3g} nodes (budget {node_budget})")
        self.z = _ball_integers(self.d, self._r2)
        self.nodes = self.center + self.step * self.z
        base = 2 * self.radius_int + 1
        self._weights = base ** np.arange(self.d - 1, -1, -1, dtype=np.int64)
        self._keys = (self.z + self.radius_int) @ self._weights
        self._tree = None

    @staticmethod
    def estimated_count(d: int, ratio: float) -> float:
        if d == 1:
            return 2 * math.floor(ratio + 1e-9) + 1
        logv = (d / 2) * math.log(math.pi) - gammaln(d / 2 + 1) + d * math.log(ratio + math.sqrt(d) / 2)
        return math.exp(logv)

    def __len__(self):
        return self.nodes.shape[0]

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def project(self, x, check: bool = False) -> np.ndarray:
        """Index of the nearest node for each point (ties to the lexicographically smallest node)."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.d)
        rel = (flat - self.center) / self.step
        z = np.ceil(rel - 0.5).astype(np.int64)
        out = np.empty(flat.shape[0], dtype=np.intp)
        r = self.radius_int
        if self.d == 1:
            out[:] = np.clip(z[:, 0], -r, r) + r
        else:
            inside = (z * z).sum(axis=1) <= self._r2
            out[inside] = np.searchsorted(self._keys, (z[inside] + r) @ self._weights)
            if not inside.all():
                out[~inside] = self._nearest_outside(rel[~inside])
        if check:
            self.check_projection_bound(flat, out)
        return out.reshape(x.shape[:-1]) if x.ndim > 1 else out

    def _nearest_outside(self, rel: np.ndarray) -> np.ndarray:
        if self._tree is None:
            self._tree = cKDTree(self.z.astype(float))
        k = min(self.size, 2 * self.d + 2)
        dist, idx = self._tree.query(rel, k=k)
        dist = np.atleast_2d(dist)
        idx = np.atleast_2d(idx)
        best = dist[:, :1]
        tied = dist <= best * (1 + 1e-12) + 1e-12
        return np.where(tied, idx, np.iinfo(np.intp).max).min(axis=1)

    def check_projection_bound(self, x: np.ndarray, idx: np.ndarray) -> None:
        x = x.reshape(-1, self.d)
        err = np.linalg.norm(x - self.nodes[idx], axis=1)
        r = np.linalg.norm(x - self.center, axis=1)
        bound = np.maximum(r - self.R, 0.0) + self.delta
        if np.any(err > bound * (1 + 1e-12) + 1e-12):
            raise AssertionError("projection exceeded |x - Proj(x)| <= max(|x| - R, 0) + delta")


def build_lattice(d: int, delta: float, R: float, center=None, node_budget: int = DEFAULT_NODE_BUDGET) -> LatticeGrid:
    return LatticeGrid(d, delta, R, center=center, node_budget=node_budget)


def project(grid: LatticeGrid, x) -> np.ndarray:
    """Coordinates of the nearest lattice node."""
    x = np.asarray(x, dtype=float)
    return grid.nodes[grid.project(x.reshape(-1, grid.d))].reshape(x.shape if x.ndim else (grid.d,))


@dataclass
class ValueSurface:
    values: np.ndarray  # (m + 1, n_nodes, q)
    policy: np.ndarray  # (m + 1, n_nodes, q), regime chosen at (t_k, node) from regime i
    grid: LatticeGrid
    time_grid: TimeGrid
    timings: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        """Rows ``k, t_k, x_1..x_d, regime, value, policy``."""
        tg, nodes = self.time_grid, self.grid.nodes
        times = tg.times
        q = self.values.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "t_k"] + [f"x_{c + 1}" for c in range(self.grid.d)] + ["regime", "value", "policy"])
            for k in range(tg.m + 1):
                tk = repr(float(times[k]))
                for n in range(nodes.shape[0]):
                    coords = [repr(float(v)) for v in nodes[n]]
                    for i in range(q):
                        w.writerow([k, tk] + coords + [i, repr(float(self.values[k, n, i])),
                                                      int(self.policy[k, n, i])])


def _transition_table(model: SwitchingModel, grid: LatticeGrid, gq: GaussianQuantizer, h: float,
                      j: int) -> np.ndarray:
    n, N = grid.size, gq.N
    table = np.empty((n, N), dtype=np.int32 if n < 2 ** 31 else np.int64)
    chunk = max(1, _TABLE_CHUNK // max(1, N * grid.d))
    for s in range(0, n, chunk):
        x = grid.nodes[s:s + chunk]
        y = euler_step(model, x[:, None, :], j, h, gq.points[None, :, :])
        bad = ~np.isfinite(y).all(axis=-1)
        if bad.any():
            node, l = np.argwhere(bad)[0]
            raise NonFiniteError(f"non-finite Euler transition at k=any, node={s + node} "
                                 f"(x={x[node].tolist()}), j={j}, l={l}")
        table[s:s + chunk] = grid.project(y.reshape(-1, grid.d)).reshape(-1, N)
    return table


def _expect(layer, table, weights, rows, out):
    # row blocks keep the gathered (rows, N) temporary cache-sized
    for s in range(0, table.shape[0], rows):
        out[s:s + rows] = np.take(layer, table[s:s + rows]) @ weights


def _finite_or_raise(arr, what, k, j):
    if not np.all(np.isfinite(arr)):
        node = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise NonFiniteError(f"non-finite {what} at k={k}, node={node}, j={j}, l=n/a")


def solve(model: SwitchingModel, grid: LatticeGrid, tg: TimeGrid, gq: GaussianQuantizer) -> ValueSurface:
    """Fill the value surface backward from the horizon.

    Ties in the maximisation over target regimes go to the smallest index.
    """
    if gq.d != model.d or grid.d != model.d:
        raise ValueError("model, lattice and quantizer dimensions differ")
    q, m, h = model.q, tg.m, tg.h
    nodes = grid.nodes
    n = grid.size
    times = tg.times

    t0 = time.perf_counter()
    tables = [_transition_table(model, grid, gq, h, j) for j in range(q)]
    t1 = time.perf_counter()

    values = np.empty((m + 1, n, q))
    policy = np.empty((m + 1, n, q), dtype=np.int16 if q < 2 ** 15 else np.int64)
    for i in range(q):
        g = np.broadcast_to(model.terminal_gain(nodes, i), (n,))
        _finite_or_raise(g, "terminal gain", m, i)
        values[m, :, i] = g
    policy[m] = np.arange(q)
    cost = model.cost_matrix(nodes)
    _finite_or_raise(cost.reshape(n, -1).sum(axis=1), "switching cost", "any", "any")
    weights = gq.weights
    rows = max(1, _BACKWARD_CHUNK // gq.N)
    cont = np.empty((n, q))
    for k in range(m - 1, -1, -1):
        nxt = values[k + 1]
        for j in range(q):
            f = np.broadcast_to(model.running_profit(times[k], nodes, j), (n,))
            _finite_or_raise(f, "running profit", k, j)
            _expect(nxt[:, j], tables[j], weights, rows, cont[:, j])
            cont[:, j] += h * f
        cand = cont[:, None, :] - cost
        best = np.argmax(cand, axis=2)
        policy[k] = best
        values[k] = np.take_along_axis(cand, best[..., None], axis=2)[..., 0]
    t2 = time.perf_counter()
    return ValueSurface(values, policy, grid, tg, {"tables": t1 - t0, "backward": t2 - t1})


def value_at(surface: ValueSurface, k: int, x, i: int) -> float:
    """Nearest-node lookup of ``v_i(t_k, x)``."""
    if not 0 <= k <= surface.time_grid.m:
        raise IndexError(f"time index {k} outside 0..{surface.time_grid.m}")
    node = surface.grid.project(np.asarray(x, dtype=float).reshape(1, surface.grid.d))[0]
    return float(surface.values[k, node, i])


@dataclass
class PolicyEvaluation:
    mean: float
    stderr: float
    n_paths: int
    mean_switches: float

    def __float__(self):
        return self.mean


def evaluate_policy(model: SwitchingModel, surface: ValueSurface, x0, i0: int, n_paths: int,
                    seed: int = 0, quantizer: GaussianQuantizer | None = None) -> PolicyEvaluation:
    """Monte-Carlo reward of the stored argmax policy started from ``(t_0, x0, i0)``.

    With ``quantizer`` the shocks follow the quantizer's discrete law and the
    state is projected back on the lattice after every step, reproducing the
    chain the solver optimises exactly. Without it, shocks are exact Gaussians
    and the state evolves off-lattice (only decisions use the nearest node).
    """
    grid, tg = surface.grid, surface.time_grid
    h, times, d = tg.h, tg.times, model.d
    x = np.broadcast_to(np.asarray(x0, dtype=float).reshape(1, d), (n_paths, d)).copy()
    if quantizer is not None:
        x = grid.nodes[grid.project(x)]
    reg = np.full(n_paths, int(i0), dtype=np.intp)
    total = np.zeros(n_paths)
    switches = np.zeros(n_paths)
    streams = path_streams(seed, n_paths)
    cdf = None if quantizer is None else np.cumsum(quantizer.weights)
    for k in range(tg.m):
        node = grid.project(x)
        nxt = surface.policy[k, node, reg].astype(np.intp)
        for a in range(model.q):
            for b in range(model.q):
                if a == b:
                    continue
                mask = (reg == a) & (nxt == b)
                if mask.any():
                    total[mask] -= model.switch_cost(x[mask], a, b)
                    switches[mask] += 1
        reg = nxt
        if quantizer is None:
            shock = draw_shocks(streams, n_paths, d)
        else:
            u = draw_shocks(streams, n_paths, 1)[:, 0]
            li = np.minimum(np.searchsorted(cdf, ndtr(u), side="right"), quantizer.N - 1)
            shock = quantizer.points[li]
        new = np.empty_like(x)
        for j in range(model.q):
            mask = reg == j
            if mask.any():
                total[mask] += h * model.running_profit(times[k], x[mask], j)
                new[mask] = euler_step(model, x[mask], j, h, shock[mask])
        x = new if quantizer is None else grid.nodes[grid.project(new)]
    for j in range(model.q):
        mask = reg == j
        if mask.any():
            total[mask] += model.terminal_gain(x[mask], j)
    return PolicyEvaluation(float(total.mean()), float(total.std(ddof=1) / math.sqrt(n_paths)),
                            n_paths, float(switches.mean()))
