"""Euler transition of the regime-switching diffusion and uncontrolled path simulation.

Random numbers come from counter-based Philox generators. Paths are split
into fixed blocks of ``BLOCK_PATHS``; block ``b`` draws from the ``b``-th
child of ``SeedSequence(seed)``, so a path's shocks depend only on the seed
and its index, never on how blocks are scheduled. Gaussians use numpy's
ziggurat ``standard_normal``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .model import SwitchingModel, TimeGrid

BLOCK_PATHS = 1 << 16


def euler_step(model: SwitchingModel, x, i: int, h: float, shock) -> np.ndarray:
    """``x + b_i(x) h + sigma_i(x) sqrt(h) shock``, vectorised over leading axes."""
    if not h > 0:
        raise ValueError(f"step h must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    shock = np.asarray(shock, dtype=float)
    sig = np.asarray(model.diffusion(x, i))
    noise = np.einsum("...ab,...b->...a", sig, shock)
    return x + np.asarray(model.drift(x, i)) * h + np.sqrt(h) * noise


def path_streams(seed: int, n_paths: int, block: int = BLOCK_PATHS):
    """``(slice, Generator)`` pairs covering ``range(n_paths)`` in fixed-size blocks."""
    n_blocks = max(1, -(-n_paths // block))
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    return [
        (slice(b * block, min((b + 1) * block, n_paths)), np.random.Generator(np.random.Philox(ss)))
        for b, ss in enumerate(children)
    ]


def draw_shocks(streams, n_paths: int, d: int) -> np.ndarray:
    out = np.empty((n_paths, d))
    for sl, rng in streams:
        out[sl] = rng.standard_normal((sl.stop - sl.start, d))
    return out


def check_uncontrolled(model: SwitchingModel, x0) -> None:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    scale = 1.0 + np.abs(x0)
    probes = np.stack([x0, x0 + 0.37 * scale, x0 - 0.61 * scale, 0.5 * x0 + 1.3])
    if not model.is_uncontrolled(probes):
        raise ValueError("model coefficients depend on the regime; an uncontrolled diffusion is required")


def iter_uncontrolled(model: SwitchingModel, x0, grid: TimeGrid, n_paths: int,
                      seed: int) -> Iterator[np.ndarray]:
    """Yield the Euler chain at ``t_0, ..., t_m`` as ``(n_paths, d)`` arrays.

    Only regime 0 coefficients are used; call :func:`check_uncontrolled` first.
    """
    x = np.broadcast_to(np.asarray(x0, dtype=float).reshape(1, model.d), (n_paths, model.d)).copy()
    streams = path_streams(seed, n_paths)
    yield x
    for _ in range(grid.m):
        x = euler_step(model, x, 0, grid.h, draw_shocks(streams, n_paths, model.d))
        yield x


@dataclass
class PathBundle:
    paths: np.ndarray  # (n_paths, m + 1, d)
    seed: int
    grid: TimeGrid

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    def to_csv(self, path) -> None:
        """Dump as rows ``path_id, k, x_1..x_d``."""
        n, m1, d = self.paths.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "k"] + [f"x_{c + 1}" for c in range(d)])
            for p in range(n):
                for k in range(m1):
                    w.writerow([p, k] + [repr(float(v)) for v in self.paths[p, k]])


def simulate_uncontrolled(model: SwitchingModel, x0, grid: TimeGrid, n_paths: int,
                          seed: int) -> PathBundle:
    check_uncontrolled(model, x0)
    layers = list(iter_uncontrolled(model, x0, grid, n_paths, seed))
    return PathBundle(np.stack(layers, axis=1), seed, grid)
