"""Optimal switching problem definition and structural checks.

Regimes are indexed ``0..q-1``. Every coefficient callable is vectorised
over leading axes of ``x``: for ``x`` of shape ``(..., d)``

* ``drift(x, i)``            -> ``(..., d)``
* ``diffusion(x, i)``        -> ``(..., d, d)``
* ``running_profit(t, x, i)`` -> ``(...)``
* ``terminal_gain(x, i)``    -> ``(...)``
* ``switch_cost(x, i, j)``   -> ``(...)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

STRICT_TOL = 1e-12


@dataclass(frozen=True)
class SwitchingModel:
    """Controlled regime-switching diffusion with profits and switching costs."""

    d: int
    q: int
    drift: Callable[[np.ndarray, int], np.ndarray]
    diffusion: Callable[[np.ndarray, int], np.ndarray]
    running_profit: Callable[[float, np.ndarray, int], np.ndarray]
    terminal_gain: Callable[[np.ndarray, int], np.ndarray]
    switch_cost: Callable[[np.ndarray, int, int], np.ndarray]
    horizon: float
    # Declared Lipschitz constant of the coefficients; informational only.
    lipschitz_hint: Optional[float] = None
    name: str = "custom"

    def __post_init__(self):
        if int(self.d) < 1:
            raise ValueError(f"dimension d must be >= 1, got {self.d}")
        if int(self.q) < 1:
            raise ValueError(f"regime count q must be >= 1, got {self.q}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    def cost_matrix(self, x: np.ndarray) -> np.ndarray:
        """Switching costs at points ``x`` (shape ``(n, d)``) as ``(n, q, q)``."""
        x = np.atleast_2d(x)
        out = np.empty((x.shape[0], self.q, self.q))
        for i in range(self.q):
            for j in range(self.q):
                out[:, i, j] = np.broadcast_to(self.switch_cost(x, i, j), x.shape[:1])
        return out

    def is_uncontrolled(self, probes: np.ndarray, rtol: float = 0.0) -> bool:
        """True when drift and diffusion agree across regimes at every probe."""
        probes = np.atleast_2d(np.asarray(probes, dtype=float))
        b0 = np.asarray(self.drift(probes, 0))
        s0 = np.asarray(self.diffusion(probes, 0))
        for i in range(1, self.q):
            if not np.allclose(self.drift(probes, i), b0, rtol=rtol, atol=0.0):
                return False
            if not np.allclose(self.diffusion(probes, i), s0, rtol=rtol, atol=0.0):
                return False
        return True


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k h`` on ``[0, T]`` with ``m`` steps."""

    horizon: float
    m: int

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError(f"number of time steps must be >= 1, got {self.m}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.h > 1.0:
            raise ValueError(f"time step h = T/m = {self.h} exceeds 1")

    @property
    def h(self) -> float:
        return self.horizon / self.m

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.m + 1) * self.h
        t[-1] = self.horizon
        return t

    def t(self, k: int) -> float:
        if not 0 <= k <= self.m:
            raise IndexError(f"time index {k} outside 0..{self.m}")
        return self.horizon if k == self.m else k * self.h


@dataclass
class Violation:
    condition: str
    x: tuple
    regimes: tuple
    margin: float


@dataclass
class ValidationReport:
    passed: bool
    margins: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.passed

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = [f"{k}={v:.6g}" for k, v in self.margins.items()]
        lines = [f"{status} " + " ".join(parts)]
        for v in self.violations[:20]:
            lines.append(f"  {v.condition} regimes={v.regimes} x={v.x} margin={v.margin:.6g}")
        if len(self.violations) > 20:
            lines.append(f"  ... {len(self.violations) - 20} more")
        return "\n".join(lines)


def _samples(model: SwitchingModel, sample_points) -> np.ndarray:
    pts = np.asarray(sample_points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, model.d) if model.d > 1 else pts[:, None]
    if pts.shape[0] == 0:
        raise ValueError("sample_points must be nonempty")
    if pts.shape[1] != model.d:
        raise ValueError(f"sample points have dimension {pts.shape[1]}, model has {model.d}")
    return pts


def _record(violations, name, mask, pts, regimes, margins):
    for n in np.flatnonzero(mask):
        violations.append(Violation(name, tuple(pts[n]), regimes, float(margins[n])))


def validate_costs(model: SwitchingModel, sample_points: Sequence) -> ValidationReport:
    """Check the triangular condition on switching costs at each sample point.

    Three conditions are tested: ``c_ii == 0``, ``c_ij > 0`` for ``j != i`` and
    ``c_ij + c_jk - c_ik > 0`` for ``j != i, k``. "Strictly positive" means a
    margin above ``STRICT_TOL``. The report carries the smallest observed
    cost and triangular margins (``inf`` when the condition set is empty).
    """
    pts = _samples(model, sample_points)
    c = model.cost_matrix(pts)
    q = model.q
    violations: list[Violation] = []
    diag_max = 0.0
    min_cost = math.inf
    min_tri = math.inf
    for i in range(q):
        dev = np.abs(c[:, i, i])
        diag_max = max(diag_max, float(dev.max()))
        _record(violations, "zero_diagonal", dev > STRICT_TOL, pts, (i, i), -dev)
        for j in range(q):
            if j == i:
                continue
            cij = c[:, i, j]
            min_cost = min(min_cost, float(cij.min()))
            _record(violations, "positive_cost", cij <= STRICT_TOL, pts, (i, j), cij)
            for k in range(q):
                if k == j:
                    continue
                tri = cij + c[:, j, k] - c[:, i, k]
                min_tri = min(min_tri, float(tri.min()))
                _record(violations, "triangular", tri <= STRICT_TOL, pts, (i, j, k), tri)
    margins = {"max_diagonal": diag_max, "min_cost": min_cost, "min_triangular": min_tri}
    return ValidationReport(not violations, margins, violations)


def validate_terminal(model: SwitchingModel, sample_points: Sequence) -> ValidationReport:
    """Check that switching at the horizon never pays: ``g_i >= max_j (g_j - c_ij)``."""
    pts = _samples(model, sample_points)
    q = model.q
    g = np.stack([np.broadcast_to(model.terminal_gain(pts, i), pts.shape[:1]) for i in range(q)], axis=1)
    c = model.cost_matrix(pts)
    violations: list[Violation] = []
    worst = math.inf
    for i in range(q):
        for j in range(q):
            if j == i:
                continue
            margin = g[:, i] - (g[:, j] - c[:, i, j])
            worst = min(worst, float(margin.min()))
            _record(violations, "terminal_obstacle", margin < -STRICT_TOL, pts, (i, j), margin)
    return ValidationReport(not violations, {"min_terminal_margin": worst}, violations)


# --------------------------------------------------------------------------
# Built-in model families
# --------------------------------------------------------------------------

def _per_regime(values, q, name) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(q, float(arr))
    if arr.shape[0] != q:
        raise ValueError(f"{name} needs {q} entries, got {arr.shape[0]}")
    return arr


def constant_costs(costs) -> Callable:
    cm = np.asarray(costs, dtype=float)

    def switch_cost(x, i, j):
        x = np.asarray(x)
        return np.full(x.shape[:-1], cm[i, j])

    return switch_cost


def power_profit(k, gamma, beta: float = 0.0) -> Callable:
    """``f_i(t, x) = exp(-beta t) k_i sum_c max(x_c, 0)^gamma_i``."""
    k = np.asarray(k, dtype=float)
    gamma = np.asarray(gamma, dtype=float)

    def running_profit(t, x, i):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return math.exp(-beta * t) * k[i] * np.sum(x ** gamma[i], axis=-1)

    return running_profit


def linear_profit(intercept, slope, beta: float = 0.0) -> Callable:
    """``f_i(t, x) = exp(-beta t) (a_i + p_i . x)``."""
    a = np.asarray(intercept, dtype=float)
    p = np.atleast_2d(np.asarray(slope, dtype=float))

    def running_profit(t, x, i):
        x = np.asarray(x, dtype=float)
        return math.exp(-beta * t) * (a[i] + x @ p[i])

    return running_profit


def linear_gain(intercept, slope) -> Callable:
    a = np.asarray(intercept, dtype=float)
    p = np.atleast_2d(np.asarray(slope, dtype=float))

    def terminal_gain(x, i):
        x = np.asarray(x, dtype=float)
        return a[i] + x @ p[i]

    return terminal_gain


def zero_gain(x, i):
    return np.zeros(np.asarray(x).shape[:-1])


def gbm_model(d: int, q: int, drift, vol, running_profit, terminal_gain, switch_cost,
              horizon: float, name: str = "gbm") -> SwitchingModel:
    """Componentwise geometric Brownian motion: ``b_i(x) = mu_i x``, ``sigma_i(x) = diag(s_i x)``."""
    mu = _per_regime(drift, q, "drift")
    s = _per_regime(vol, q, "vol")

    def b(x, i):
        return mu[i] * np.asarray(x, dtype=float)

    def sigma(x, i):
        x = np.asarray(x, dtype=float)
        return s[i] * x[..., :, None] * np.eye(d)

    return SwitchingModel(d, q, b, sigma, running_profit, terminal_gain, switch_cost,
                          float(horizon), name=name)


def affine_model(d: int, q: int, drift_const, drift_matrix, vol_matrix, running_profit,
                 terminal_gain, switch_cost, horizon: float, name: str = "affine") -> SwitchingModel:
    """``b_i(x) = a_i + B_i x`` with constant diffusion matrix ``S_i``."""
    a = np.asarray(drift_const, dtype=float).reshape(q, d)
    B = np.asarray(drift_matrix, dtype=float).reshape(q, d, d)
    S = np.asarray(vol_matrix, dtype=float).reshape(q, d, d)

    def b(x, i):
        x = np.asarray(x, dtype=float)
        return a[i] + x @ B[i].T

    def sigma(x, i):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(S[i], x.shape[:-1] + (d, d))

    return SwitchingModel(d, q, b, sigma, running_profit, terminal_gain, switch_cost,
                          float(horizon), name=name)
