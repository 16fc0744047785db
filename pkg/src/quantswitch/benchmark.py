"""Two-regime geometric Brownian motion benchmark with a closed-form infinite-horizon value.

Regime 0 earns ``k_0 x^gamma_0`` and regime 1 earns ``k_1 x^gamma_1`` (both
discounted at rate ``beta``) on a regime-independent GBM. The value functions
have the piecewise form

    v_0(x) = A_0 x^m+ + K_0 k_0 x^g0                 x < x0_up
           = B_1 x^m- + K_1 k_1 x^g1 - c_01           x >= x0_up
    v_1(x) = A_1 x^m+ + K_1 k_1 x^g1                 x < x1_low
           = A_0 x^m+ + K_0 k_0 x^g0 - c_10           x1_low <= x <= x1_high
           = B_1 x^m- + K_1 k_1 x^g1                 x > x1_high

whose six constants follow from value matching and smooth pasting at the
three free boundaries.
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq, root

from .gauss_quant import GaussianQuantizer, build_gaussian_quantizer
from .markovian import build_lattice, solve, value_at
from .model import SwitchingModel, TimeGrid, constant_costs, power_profit
from . import marginal

EXACT_VALUE = 2.1285  # reported reference v_1(3.0) of the default parameters
RESIDUAL_TOL = 1e-9


class ClosedFormError(RuntimeError):
    pass


@dataclass(frozen=True)
class GBMSwitchParams:
    b: float = 0.0
    sigma: float = 1.0
    beta: float = 1.0
    k: tuple = (2.0, 1.0)
    gamma: tuple = (1.0 / 3.0, 2.0 / 3.0)
    c01: float = 0.5
    c10: float = 0.5
    x0: float = 3.0
    T: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not (self.c01 > 0 and self.c10 > 0):
            raise ValueError("switching costs must be positive")
        for g in self.gamma:
            if not 0 < g < 1:
                raise ValueError(f"profit exponent {g} outside (0, 1)")
            profit_constant(self.b, self.sigma, self.beta, g)

    @property
    def costs(self) -> np.ndarray:
        return np.array([[0.0, self.c01], [self.c10, 0.0]])


def characteristic_roots(b: float, sigma: float, beta: float) -> tuple[float, float]:
    """Roots ``m- < 0 < m+`` of ``sigma^2 m (m - 1) / 2 + b m - beta = 0``."""
    if not (sigma > 0 and beta > 0):
        raise ValueError("need sigma > 0 and beta > 0")
    a = 0.5 * sigma * sigma
    bb = b - a
    disc = math.sqrt(bb * bb + 4 * a * beta)
    # numerically stable pairing of the two roots
    if bb <= 0:
        m_plus = (-bb + disc) / (2 * a)
        m_minus = -beta / (a * m_plus)
    else:
        m_minus = (-bb - disc) / (2 * a)
        m_plus = -beta / (a * m_minus)
    return m_plus, m_minus


def profit_constant(b: float, sigma: float, beta: float, gamma: float) -> float:
    """``K`` such that ``K k x^gamma`` is the discounted value of earning ``k X_t^gamma`` forever."""
    denom = beta - b * gamma - 0.5 * sigma * sigma * gamma * (gamma - 1.0)
    if not denom > 0:
        raise ValueError(f"divergent perpetuity: beta - b gamma - sigma^2 gamma (gamma - 1)/2 = {denom}")
    return 1.0 / denom


@dataclass
class ClosedFormSolution:
    params: GBMSwitchParams
    m_plus: float
    m_minus: float
    K: tuple
    A0: float
    A1: float
    B1: float
    x0_up: float  # regime 0 switches to 1 at and above this level
    x1_low: float  # regime 1 switches to 0 on [x1_low, x1_high]
    x1_high: float
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def _profit(self, x, i, der=0):
        p = self.params
        c = self.K[i] * p.k[i]
        g = p.gamma[i]
        return c * x ** g if der == 0 else c * g * x ** (g - 1)

    def _branch(self, x, name, der=0):
        mp, mm = self.m_plus, self.m_minus
        if name == "a0":
            return (self.A0 * x ** mp if der == 0 else self.A0 * mp * x ** (mp - 1)) + self._profit(x, 0, der)
        if name == "a1":
            return (self.A1 * x ** mp if der == 0 else self.A1 * mp * x ** (mp - 1)) + self._profit(x, 1, der)
        if name == "b1":
            return (self.B1 * x ** mm if der == 0 else self.B1 * mm * x ** (mm - 1)) + self._profit(x, 1, der)
        raise KeyError(name)

    def value(self, x, i: int) -> np.ndarray:
        """``v_i^inf(x)`` for ``x >= 0`` (vectorised)."""
        x = np.asarray(x, dtype=float)
        p = self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            if i == 0:
                out = np.where(x < self.x0_up, self._branch(x, "a0"), self._branch(x, "b1") - p.c01)
            elif i == 1:
                out = np.where(x < self.x1_low, self._branch(x, "a1"),
                               np.where(x <= self.x1_high, self._branch(x, "a0") - p.c10,
                                        self._branch(x, "b1")))
            else:
                raise IndexError(f"regime {i} not in 0..1")
        return np.where(x == 0, 0.0, out)

    def obstacle_margin(self, x) -> float:
        """``min_x min_i [v_i - (v_j - c_ij)]`` over the sample ``x``."""
        p = self.params
        v0, v1 = self.value(x, 0), self.value(x, 1)
        return float(min(np.min(v0 - (v1 - p.c01)), np.min(v1 - (v0 - p.c10))))

    def generator_margin(self, x) -> float:
        """``min (beta - L) v_i - f_i`` over ``x``, which is >= 0 for the true value."""
        p = self.params
        x = np.asarray(x, dtype=float)
        worst = math.inf
        for i in (0, 1):
            names = self._branches_at(x, i)
            for name, mask, const in names:
                xs = x[mask]
                if xs.size == 0:
                    continue
                v = self._branch(xs, name) - const
                dv = self._branch(xs, name, 1)
                d2v = self._second(xs, name)
                lv = p.b * xs * dv + 0.5 * p.sigma ** 2 * xs ** 2 * d2v
                f = p.k[i] * xs ** p.gamma[i]
                worst = min(worst, float(np.min((p.beta * v - lv - f) / (1 + np.abs(v)))))
        return worst

    def _second(self, x, name):
        mp, mm = self.m_plus, self.m_minus
        i = 0 if name == "a0" else 1
        p = self.params
        g = p.gamma[i]
        prof = self.K[i] * p.k[i] * g * (g - 1) * x ** (g - 2)
        if name == "a0":
            return self.A0 * mp * (mp - 1) * x ** (mp - 2) + prof
        if name == "a1":
            return self.A1 * mp * (mp - 1) * x ** (mp - 2) + prof
        return self.B1 * mm * (mm - 1) * x ** (mm - 2) + prof

    def _branches_at(self, x, i):
        p = self.params
        if i == 0:
            return [("a0", x < self.x0_up, 0.0), ("b1", x >= self.x0_up, p.c01)]
        return [("a1", x < self.x1_low, 0.0),
                ("a0", (x >= self.x1_low) & (x <= self.x1_high), p.c10),
                ("b1", x > self.x1_high, 0.0)]


def _pasting_equations(sol: ClosedFormSolution) -> np.ndarray:
    p = sol.params
    br = sol._branch
    eqs = []
    for x, left, right, shift in ((sol.x0_up, "a0", "b1", -p.c01),
                                  (sol.x1_low, "a1", "a0", -p.c10),
                                  (sol.x1_high, "a0", "b1", p.c10)):
        lhs, rhs = br(x, left), br(x, right) + shift
        eqs.append((lhs - rhs) / (1.0 + abs(lhs) + abs(rhs)))
        dl, dr = br(x, left, 1), br(x, right, 1)
        eqs.append(x * (dl - dr) / (1.0 + abs(x * dl) + abs(x * dr)))
    return np.array(eqs)


def _scan_root(fun, lo=-6.0, hi=6.0, n=2400):
    xs = np.logspace(lo, hi, n)
    with np.errstate(all="ignore"):
        vals = np.array([fun(x) for x in xs])
    roots = []
    for a, b, fa, fb in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if np.isfinite(fa) and np.isfinite(fb) and fa * fb < 0:
            roots.append(brentq(fun, a, b, xtol=1e-14, rtol=1e-14))
    return roots


def solve_closed_form(params: GBMSwitchParams = GBMSwitchParams()) -> ClosedFormSolution:
    """Recover the six constants from value matching and smooth pasting."""
    p = params
    mp, mm = characteristic_roots(p.b, p.sigma, p.beta)
    K = tuple(profit_constant(p.b, p.sigma, p.beta, g) for g in p.gamma)

    def prof(x, i, der=0):
        g = p.gamma[i]
        return K[i] * p.k[i] * (x ** g if der == 0 else g * x ** (g - 1))

    def diff(x, der=0):
        return prof(x, 0, der) - prof(x, 1, der)

    # single-boundary problems seed the coupled pair of outer boundaries
    def one_up(x):
        a = -diff(x, 1) / (mp * x ** (mp - 1))
        return a * x ** mp + diff(x) + p.c01

    def one_down(x):
        bcoef = diff(x, 1) / (mm * x ** (mm - 1))
        return -bcoef * x ** mm + diff(x) - p.c10

    ups = [r for r in _scan_root(one_up) if -diff(r, 1) > 0]
    downs = [r for r in _scan_root(one_down) if diff(r, 1) < 0]

    def outer(z):
        A0, B1, u, l = np.exp(np.clip(z, -700, 700))
        phi = lambda x: A0 * x ** mp - B1 * x ** mm + diff(x)
        dphi = lambda x: A0 * mp * x ** (mp - 1) - B1 * mm * x ** (mm - 1) + diff(x, 1)
        return [phi(u) - p.c10, u * dphi(u), phi(l) + p.c01, l * dphi(l)]

    starts = []
    for l in (ups or [10.0]):
        for u in (downs or [1.0]):
            if u < l:
                A0 = max(-diff(l, 1) / (mp * l ** (mp - 1)), 1e-12)
                B1 = max(diff(u, 1) / (mm * u ** (mm - 1)), 1e-12)
                starts.append([math.log(A0), math.log(B1), math.log(u), math.log(l)])
    for la in np.linspace(-10, 2, 7):
        for lb in np.linspace(-6, 3, 7):
            for lu in np.linspace(-2, 3, 5):
                for dl in (0.5, 1.5, 3.0):
                    starts.append([la, lb, lu, lu + dl])

    best = None
    with np.errstate(all="ignore"):
        for s in starts:
            r = root(outer, s, method="hybr", options={"xtol": 1e-15})
            if r.success and np.all(np.isfinite(r.x)) and np.max(np.abs(outer(r.x))) < 1e-11 and r.x[2] < r.x[3]:
                best = r.x
                break
    if best is None:
        raise ClosedFormError("outer free boundaries not found after multi-start")
    A0, B1, u, l = (math.exp(v) for v in best)

    def inner(z):
        A1, y = z[0], np.exp(np.clip(z[1], -700, 700))
        lhs = A1 * y ** mp + prof(y, 1)
        rhs = A0 * y ** mp + prof(y, 0) - p.c10
        dl = A1 * mp * y ** (mp - 1) + prof(y, 1, 1)
        dr = A0 * mp * y ** (mp - 1) + prof(y, 0, 1)
        return [lhs - rhs, y * (dl - dr)]

    inner_sol = None
    with np.errstate(all="ignore"):
        for ly in np.linspace(math.log(u) - 0.1, math.log(u) - 12, 40):
            r = root(inner, [A0, ly], method="hybr", options={"xtol": 1e-15})
            if r.success and np.max(np.abs(inner(r.x))) < 1e-11 and math.exp(r.x[1]) <= u:
                inner_sol = r.x
                break
    if inner_sol is None:
        raise ClosedFormError("inner free boundary not found after multi-start")

    sol = ClosedFormSolution(p, mp, mm, K, A0, float(inner_sol[0]), B1, l, math.exp(inner_sol[1]), u)

    # joint polish of all six equations
    def full(z):
        s = replace(sol, A0=z[0], A1=z[1], B1=z[2], x0_up=math.exp(z[3]), x1_low=math.exp(z[4]),
                    x1_high=math.exp(z[5]))
        return _pasting_equations(s)

    z0 = [sol.A0, sol.A1, sol.B1, math.log(sol.x0_up), math.log(sol.x1_low), math.log(sol.x1_high)]
    r = root(full, z0, method="hybr", options={"xtol": 1e-15})
    z = r.x if np.max(np.abs(full(r.x))) <= np.max(np.abs(full(z0))) else np.array(z0)
    sol = replace(sol, A0=z[0], A1=z[1], B1=z[2], x0_up=math.exp(z[3]), x1_low=math.exp(z[4]),
                  x1_high=math.exp(z[5]))
    sol.residuals = _pasting_equations(sol)
    if np.max(np.abs(sol.residuals)) > RESIDUAL_TOL:
        raise ClosedFormError(f"smooth-fit residual {np.max(np.abs(sol.residuals)):.3g} above tolerance")
    if not 0 < sol.x1_low <= sol.x1_high < sol.x0_up:
        raise ClosedFormError("free boundaries out of order")
    return sol


def build_finite_horizon_model(params: GBMSwitchParams, solution: ClosedFormSolution,
                               T: float | None = None) -> SwitchingModel:
    """Finite-horizon model whose terminal gain is the discounted infinite-horizon value."""
    T = params.T if T is None else float(T)
    b, s = params.b, params.sigma
    disc = math.exp(-params.beta * T)

    def drift(x, i):
        return b * np.asarray(x, dtype=float)

    def diffusion(x, i):
        x = np.asarray(x, dtype=float)
        return s * x[..., None]

    def terminal_gain(x, i):
        x = np.maximum(np.asarray(x, dtype=float)[..., 0], 0.0)
        return disc * solution.value(x, i)

    return SwitchingModel(1, 2, drift, diffusion, power_profit(params.k, params.gamma, params.beta),
                          terminal_gain, constant_costs(params.costs), T, name="benchmark_gbm")


def benchmark_model(params: GBMSwitchParams = GBMSwitchParams(), T: float | None = None):
    sol = solve_closed_form(params)
    return build_finite_horizon_model(params, sol, T), sol


# --------------------------------------------------------------------------
# Table reproduction
# --------------------------------------------------------------------------

TABLE1_ROWS = [(10, 10, 10), (10, 10, 100), (10, 10, 1000), (10, 100, 1000), (10, 100, 5000),
               (100, 10, 100), (100, 10, 1000), (100, 10, 5000), (100, 100, 100), (100, 100, 1000)]
TABLE2_ROWS = [(10, 100), (10, 1000), (10, 10000), (100, 1000), (100, 10000), (100, 50000),
               (1000, 10000), (1000, 50000)]

_GQ_CACHE: dict = {}


def gaussian_quantizer(N: int, d: int = 1, seed: int = 0) -> GaussianQuantizer:
    key = (N, d, seed)
    if key not in _GQ_CACHE:
        _GQ_CACHE[key] = build_gaussian_quantizer(d, N, seed=seed)
    return _GQ_CACHE[key]


def markovian_value(m: int, delta_inv: float, N: int, params: GBMSwitchParams = GBMSwitchParams(),
                    r_mult: float = 10.0, regime: int = 1, model=None, solution=None) -> dict:
    if model is None:
        model, solution = benchmark_model(params)
    t0 = time.perf_counter()
    gq = gaussian_quantizer(N)
    grid = build_lattice(1, 1.0 / delta_inv, r_mult * params.x0)
    surface = solve(model, grid, TimeGrid(model.horizon, m), gq)
    value = value_at(surface, 0, [params.x0], regime)
    exact = float(solution.value(params.x0, regime))
    return {"m": m, "delta_inv": delta_inv, "N": N, "value": value, "exact": exact,
            "rel_error_pct": 100.0 * abs(value - exact) / exact,
            "seconds": time.perf_counter() - t0, "surface": surface}


def marginal_value(m: int, nbar: int, params: GBMSwitchParams = GBMSwitchParams(), n_mc: int = 10 ** 6,
                   n_train: int | None = None, seed: int = 0, regime: int = 1, model=None,
                   solution=None) -> dict:
    if model is None:
        model, solution = benchmark_model(params)
    t0 = time.perf_counter()
    tg = TimeGrid(model.horizon, m)
    mq = marginal.build_quantization_tree(model, [params.x0], tg, nbar, n_train=n_train, n_mc=n_mc, seed=seed)
    t1 = time.perf_counter()
    proc = marginal.tree_solve(model, mq)
    value = float(proc.y0[regime])
    exact = float(solution.value(params.x0, regime))
    return {"m": m, "nbar": nbar, "seed": seed, "value": value, "exact": exact,
            "rel_error_pct": 100.0 * abs(value - exact) / exact,
            "seconds": time.perf_counter() - t0, "seconds_tree": time.perf_counter() - t1,
            "quantization": mq, "process": proc}


def run_table1(rows: Iterable[Sequence[int]] = TABLE1_ROWS, r_mult: float = 10.0,
               params: GBMSwitchParams = GBMSwitchParams(), threads: int = 1) -> list[dict]:
    model, sol = benchmark_model(params)

    def one(row):
        out = markovian_value(*row, params=params, r_mult=r_mult, model=model, solution=sol)
        out.pop("surface")
        return out

    return _map(one, list(rows), threads)


def run_table2(rows: Iterable[Sequence[int]] = TABLE2_ROWS, n_mc: int = 10 ** 6, seeds=(0, 1, 2),
               params: GBMSwitchParams = GBMSwitchParams(), n_train: int | None = None,
               threads: int = 1) -> list[dict]:
    """One report row per ``(m, nbar)``; the value is the median over ``seeds``."""
    model, sol = benchmark_model(params)

    def one(row):
        runs = [marginal_value(*row, params=params, n_mc=n_mc, n_train=n_train, seed=s,
                               model=model, solution=sol) for s in seeds]
        value = statistics.median(r["value"] for r in runs)
        exact = runs[0]["exact"]
        return {"m": row[0], "nbar": row[1], "value": value, "exact": exact,
                "rel_error_pct": 100.0 * abs(value - exact) / exact,
                "seconds": sum(r["seconds"] for r in runs) / len(runs),
                "seed_values": [r["value"] for r in runs]}

    return _map(one, list(rows), threads)


def _map(fun, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fun(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fun, items))


def write_report_csv(rows: list[dict], path, columns: Sequence[str]) -> None:
    """Write table rows with the given parameter columns then value, error and time."""
    cols = list(columns) + ["value", "rel_error_pct", "seconds"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] if c in columns else f"{r[c]:.6f}" for c in cols])
