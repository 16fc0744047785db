"""Near-optimal quantizers of the standard Gaussian N(0, I_d)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from . import vq

MAGIC = "GQ1"
WEIGHT_SUM_TOL = 1e-12


class QuantizerFormatError(ValueError):
    pass


@dataclass
class GaussianQuantizer:
    """Support points ``w_l`` with cell probabilities approximating N(0, I_d)."""

    points: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)
    distortion: float = float("nan")  # L2 error ||theta - theta_hat||_2
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        check_invariants(self.points, self.weights)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def N(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.N

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def quantize(self, v) -> int | np.ndarray:
        """Index of the nearest support point (lowest index on ties)."""
        v = np.asarray(v, dtype=float)
        idx = vq.nearest_index(self.points, v.reshape(-1, self.d))
        return int(idx[0]) if v.ndim <= 1 and v.size == self.d else idx

    def __eq__(self, other):
        if not isinstance(other, GaussianQuantizer):
            return NotImplemented
        return (self.points.shape == other.points.shape
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.weights, other.weights))


def check_invariants(points: np.ndarray, weights: np.ndarray) -> None:
    if points.shape[0] < 1:
        raise QuantizerFormatError("quantizer needs at least one point")
    if weights.shape[0] != points.shape[0]:
        raise QuantizerFormatError(f"{points.shape[0]} points but {weights.shape[0]} weights")
    if not np.all(np.isfinite(points)) or not np.all(np.isfinite(weights)):
        raise QuantizerFormatError("non-finite points or weights")
    if np.any(weights <= 0):
        raise QuantizerFormatError("all weights must be strictly positive")
    s = weights.sum()
    if abs(s - 1.0) > WEIGHT_SUM_TOL:
        raise QuantizerFormatError(f"weights sum to {s!r}, expected 1")
    if np.unique(points, axis=0).shape[0] != points.shape[0]:
        raise QuantizerFormatError("quantizer points are not pairwise distinct")


def _normalise(w: np.ndarray) -> np.ndarray:
    w = w / w.sum()
    # absorb the rounding residue in the largest weight
    w[np.argmax(w)] += 1.0 - w.sum()
    return w


def _phi(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def exact_cells_1d(points: np.ndarray):
    """Cell masses, first moments and distortions of N(0, 1) for sorted 1-d ``points``."""
    w = points.ravel()
    edges = np.concatenate(([-np.inf], 0.5 * (w[1:] + w[:-1]), [np.inf]))
    cdf = ndtr(edges)
    pdf = _phi(edges)
    xpdf = np.where(np.isfinite(edges), edges, 0.0) * pdf
    mass = np.diff(cdf)
    first = -np.diff(pdf)
    second = mass - np.diff(xpdf)
    dist = second - 2.0 * w * first + w * w * mass
    return mass, first, np.maximum(dist, 0.0)


def _lloyd_exact_1d(init: np.ndarray, max_iters: int, tol: float):
    w = np.sort(init.ravel())
    history = []
    for _ in range(max_iters):
        mass, first, dist = exact_cells_1d(w)
        history.append(float(dist.sum()))
        if len(history) > 1 and history[-2] - history[-1] <= tol * history[-2]:
            break
        w = first / mass
    return w[:, None], history


def build_gaussian_quantizer(d: int, N: int, method: str = "auto", n_samples: int | None = None,
                             max_iters: int = 200, seed: int = 0, tol: float = 1e-6) -> GaussianQuantizer:
    """Train an N-point quantizer of N(0, I_d).

    ``lloyd_mc`` runs fixed-sample Lloyd on ``n_samples`` Gaussian draws;
    ``clvq`` runs one competitive-learning pass over them. In both cases the
    weights and the distortion are then estimated on an independent sample of
    the same size, and the grid is re-centred so its weighted mean is zero
    (exactly, by symmetrisation, when ``d == 1``).

    ``lloyd_exact`` (``d == 1`` only) iterates Lloyd against the Gaussian law
    itself, with cell masses and conditional means from the normal CDF, so
    far-tail cells that a finite sample never reaches still get exact weights.
    ``auto`` picks ``lloyd_exact`` in one dimension and ``lloyd_mc`` otherwise.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if N == 1:
        return GaussianQuantizer(np.zeros((1, d)), np.ones(1), float(np.sqrt(d)))
    if method == "auto":
        method = "lloyd_exact" if d == 1 else "lloyd_mc"
    if method == "lloyd_exact":
        if d != 1:
            raise ValueError("lloyd_exact is only available for d == 1")
        init = np.sqrt(3.0) * ndtri((np.arange(N) + 0.5) / N)
        pts, history = _lloyd_exact_1d(init, max(max_iters, 1), tol)
        pts = 0.5 * (pts - pts[::-1])
        mass, _, dist = exact_cells_1d(pts)
        mass = 0.5 * (mass + mass[::-1])
        return GaussianQuantizer(pts, _normalise(mass), float(np.sqrt(dist.sum())), history)
    if n_samples is None:
        n_samples = max(200_000, 1000 * N)
    if n_samples < 10 * N:
        raise ValueError(f"n_samples={n_samples} too small for N={N}")
    ss_train, ss_weights = np.random.SeedSequence(seed).spawn(2)
    train = np.random.Generator(np.random.Philox(ss_train)).standard_normal((n_samples, d))
    held = np.random.Generator(np.random.Philox(ss_weights)).standard_normal((n_samples, d))

    if d == 1:
        # point density of an optimal Gaussian quantizer is close to N(0, 3)
        init = np.sqrt(3.0) * ndtri((np.arange(N) + 0.5) / N)[:, None]
    else:
        init = train[:N].copy()

    history: list = []
    if method == "lloyd_mc":
        res = vq.lloyd(train, init, max_iters=max_iters, tol=tol)
        pts, history = res.points, res.history
    elif method == "clvq":
        pts = vq.clvq(train, init)
    else:
        raise ValueError(f"unknown method {method!r}")

    if d == 1:
        pts = np.sort(pts, axis=0)
        pts = 0.5 * (pts - pts[::-1])
        w, err = vq.cell_weights(pts, held)
        w = 0.5 * (w + w[::-1])
    else:
        w, _ = vq.cell_weights(pts, held)
        pts = pts - w @ pts
        w, err = vq.cell_weights(pts, held)
    if np.any(w == 0):
        raise vq.EmptyCellError(f"{int((w == 0).sum())} quantizer cells received no held-out samples")
    return GaussianQuantizer(pts, _normalise(w), err, history)


def save_quantizer(quantizer: GaussianQuantizer, path) -> None:
    lines = [MAGIC, f"{quantizer.d} {quantizer.N}"]
    for p, w in zip(quantizer.points, quantizer.weights):
        lines.append(" ".join(repr(float(v)) for v in p) + " " + repr(float(w)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_quantizer(path, d: int | None = None) -> GaussianQuantizer:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != MAGIC:
        raise QuantizerFormatError(f"missing {MAGIC} header")
    try:
        dim, n = (int(v) for v in lines[1].split())
        rows = np.array([[float(v) for v in ln.split()] for ln in lines[2:]])
    except (ValueError, IndexError) as exc:
        raise QuantizerFormatError(f"malformed quantizer file: {exc}") from exc
    if d is not None and dim != d:
        raise QuantizerFormatError(f"file has dimension {dim}, expected {d}")
    if rows.shape != (n, dim + 1):
        raise QuantizerFormatError(f"expected {n} rows of {dim + 1} values, got shape {rows.shape}")
    return GaussianQuantizer(rows[:, :dim], rows[:, dim])
