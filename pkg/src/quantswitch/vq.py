"""Vector quantization primitives: nearest-neighbour assignment, Lloyd, CLVQ."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


class EmptyCellError(RuntimeError):
    pass


_CHUNK_ELEMS = 1 << 22


def nearest_index(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Exact nearest point for each row of ``x``; ties go to the lowest index.

    Brute force in chunks, meant for moderate point counts.
    """
    points = np.atleast_2d(points)
    x = np.asarray(x, dtype=float).reshape(-1, points.shape[1])
    out = np.empty(x.shape[0], dtype=np.intp)
    step = max(1, _CHUNK_ELEMS // max(1, points.shape[0]))
    for s in range(0, x.shape[0], step):
        blk = x[s:s + step]
        d2 = ((blk[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
        out[s:s + step] = np.argmin(d2, axis=1)
    return out


def assign_sorted_1d(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Nearest index for ascending 1-d ``points``; midpoint ties go to the lower point."""
    p = points.ravel()
    mid = 0.5 * (p[1:] + p[:-1])
    return np.searchsorted(mid, np.asarray(x, dtype=float).ravel(), side="left")


def assign(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Voronoi cell index of each sample.

    1-d grids kept in ascending order use a binary search over midpoints;
    otherwise a k-d tree (ties there are resolved arbitrarily).
    """
    points = np.atleast_2d(points)
    if points.shape[1] == 1 and (points.shape[0] < 2 or np.all(np.diff(points[:, 0]) > 0)):
        return assign_sorted_1d(points, x)
    x = np.asarray(x, dtype=float).reshape(-1, points.shape[1])
    if points.shape[0] <= 64:
        return nearest_index(points, x)
    return cKDTree(points).query(x)[1]


@dataclass
class LloydResult:
    points: np.ndarray
    history: list = field(default_factory=list)  # mean squared distortion per iteration
    counts: np.ndarray | None = None
    n_reseeds: int = 0
    n_pruned: int = 0


def lloyd(sample: np.ndarray, init: np.ndarray, max_iters: int = 200, tol: float = 1e-6,
          prune_empty: bool = False) -> LloydResult:
    """Fixed-sample Lloyd iterations (k-means).

    ``history[t]`` is the empirical mean squared distortion of the ``t``-th
    iterate; it is non-increasing. An empty cell is re-seeded at the sample
    point farthest from its current representative; more than ``N``
    re-seeds raises :class:`EmptyCellError`. When no sample sits away from
    the grid (degenerate sample) empty points are either pruned
    (``prune_empty``) or an error is raised.
    """
    x = np.asarray(sample, dtype=float)
    x = x.reshape(x.shape[0], -1)
    pts = np.array(init, dtype=float).reshape(-1, x.shape[1])
    one_d = x.shape[1] == 1
    if one_d:
        order = np.argsort(x[:, 0], kind="stable")
        xs = x[order, 0]
        pts = np.sort(pts, axis=0)
    res = LloydResult(pts)
    dim = x.shape[1]

    while True:
        n_pts = pts.shape[0]
        if one_d:
            mid = 0.5 * (pts[1:, 0] + pts[:-1, 0])
            bounds = np.concatenate(([0], np.searchsorted(xs, mid, side="right"), [xs.size]))
            counts = np.diff(bounds)
            idx = np.repeat(np.arange(n_pts), counts)
            d2 = (xs - pts[idx, 0]) ** 2
        else:
            idx = assign(pts, x)
            counts = np.bincount(idx, minlength=n_pts)
            d2 = ((x - pts[idx]) ** 2).sum(axis=1)
        dist = float(d2.mean())

        empty = np.flatnonzero(counts == 0)
        if empty.size:
            far = np.argsort(-d2, kind="stable")
            far = far[d2[far] > 0][: empty.size]
            if far.size < empty.size:
                if not prune_empty:
                    raise EmptyCellError(f"{empty.size - far.size} empty cells cannot be re-seeded")
                keep = np.setdiff1d(np.arange(n_pts), empty[far.size:])
                res.n_pruned += n_pts - keep.size
                empty = empty[: far.size]
                pts_new = pts.copy()
                src = xs[far][:, None] if one_d else x[far]
                pts_new[empty] = src
                pts = pts_new[keep]
            else:
                res.n_reseeds += empty.size
                if res.n_reseeds > n_pts:
                    raise EmptyCellError(f"empty-cell re-seeding exhausted after {res.n_reseeds} re-seeds")
                pts = pts.copy()
                pts[empty] = xs[far][:, None] if one_d else x[far]
            if one_d:
                pts = np.sort(pts, axis=0)
            continue

        if res.history:
            prev = res.history[-1]
            res.history.append(dist)
            if prev - dist <= tol * prev or len(res.history) >= max_iters:
                break
        else:
            res.history.append(dist)
            if max_iters <= 1:
                break
        if one_d:
            sums = np.bincount(idx, weights=xs, minlength=n_pts)[:, None]
        else:
            sums = np.stack([np.bincount(idx, weights=x[:, c], minlength=n_pts) for c in range(dim)], axis=1)
        pts = sums / counts[:, None]
        if one_d:
            pts = np.sort(pts, axis=0)

    res.points = pts
    res.counts = counts
    return res


def clvq(samples: np.ndarray, init: np.ndarray, gamma0: float = 0.5, decay: float | None = None) -> np.ndarray:
    """Competitive learning vector quantization (Kohonen with zero neighbourhood).

    One pass over ``samples``; the winning point moves toward each sample with
    step ``gamma0 a / (a + gamma0 t)``.
    """
    x = np.asarray(samples, dtype=float)
    x = x.reshape(x.shape[0], -1)
    pts = np.array(init, dtype=float).reshape(-1, x.shape[1])
    a = float(decay) if decay is not None else float(pts.shape[0])
    for t in range(x.shape[0]):
        xi = x[t]
        w = int(np.argmin(((pts - xi) ** 2).sum(axis=1)))
        gamma = gamma0 * a / (a + gamma0 * t)
        pts[w] += gamma * (xi - pts[w])
    return pts


def cell_weights(points: np.ndarray, sample: np.ndarray) -> tuple[np.ndarray, float]:
    """Voronoi-cell frequencies of ``sample`` and the L2 quantization error."""
    idx = assign(points, sample)
    x = np.asarray(sample, dtype=float).reshape(-1, points.shape[1])
    w = np.bincount(idx, minlength=points.shape[0]) / x.shape[0]
    err = float(np.sqrt(((x - points[idx]) ** 2).sum(axis=1).mean()))
    return w, err
