import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from quantswitch.gauss_quant import GaussianQuantizer, build_gaussian_quantizer
from quantswitch.markovian import (LatticeBudgetError, NonFiniteError, build_lattice, evaluate_policy, project,
                                   solve, value_at)
from quantswitch.model import (SwitchingModel, TimeGrid, affine_model, constant_costs, linear_gain,
                               linear_profit, zero_gain)

SLOW = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def random_affine(rng, q, f_shift=0.0, g_shift=0.0):
    """d = 1 affine model with constant costs in [1, 1.9] (strict triangular margin)."""
    costs = rng.uniform(1.0, 1.9, (q, q))
    np.fill_diagonal(costs, 0.0)
    f = linear_profit(rng.uniform(-1, 1, q) + f_shift, rng.uniform(-1, 1, (q, 1)))
    slope = rng.uniform(-0.5, 0.5)
    g = linear_gain(rng.uniform(0, 0.9, q) + g_shift, [[slope]] * q)
    return affine_model(1, q, rng.uniform(-0.5, 0.5, (q, 1)), rng.uniform(-0.5, 0.5, (q, 1, 1)),
                        rng.uniform(0.1, 1.0, (q, 1, 1)), f, g, constant_costs(costs),
                        float(rng.uniform(0.3, 1.0)))


def oracle_project(nodes, x):
    return int(np.argmin(((nodes - x) ** 2).sum(axis=1)))


def brute_force_value(model, nodes, tg, gq, k, x):
    """Explicit recursion over every shock sequence from a single node (q = 1)."""
    if k == tg.m:
        return float(model.terminal_gain(x[None], 0)[0])
    h = tg.h
    b = model.drift(x[None], 0)[0]
    s = model.diffusion(x[None], 0)[0]
    total = 0.0
    for w, p in zip(gq.points, gq.weights):
        nxt = nodes[oracle_project(nodes, x + b * h + s @ w * np.sqrt(h))]
        total += p * brute_force_value(model, nodes, tg, gq, k + 1, nxt)
    return total + h * float(model.running_profit(tg.t(k), x[None], 0)[0])


# -- lattice -----------------------------------------------------------------

def test_lattice_examples():
    g = build_lattice(1, 1.0, 2.0)
    np.testing.assert_array_equal(g.nodes.ravel(), [-2, -1, 0, 1, 2])
    g2 = build_lattice(2, 2.0, 1.0)
    assert g2.size == 5
    assert {tuple(n) for n in g2.nodes} == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
    assert build_lattice(1, 0.01, 30.0).size == 6001


def test_lattice_nodes_inside_ball_on_scaled_integers():
    g = build_lattice(3, 0.9, 1.0)
    assert np.all(np.linalg.norm(g.nodes, axis=1) <= 1.0 + 1e-12)
    z = g.nodes / 0.3
    np.testing.assert_allclose(z, np.round(z), atol=1e-9)
    # every integer point of the ball is present
    r = np.arange(-4, 5)
    cube = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3) * 0.3
    assert g.size == int((np.linalg.norm(cube, axis=1) <= 1.0 + 1e-12).sum())


def test_lattice_budget():
    with pytest.raises(LatticeBudgetError):
        build_lattice(2, 0.001, 10.0, node_budget=10 ** 6)


def test_projection_examples():
    g = build_lattice(1, 0.2, 1.0)
    assert project(g, [0.29])[0] == pytest.approx(0.2)
    assert project(g, [5.0])[0] == pytest.approx(1.0)
    assert project(g, [-5.0])[0] == pytest.approx(-1.0)
    np.testing.assert_array_equal(project(g, g.nodes), g.nodes)
    assert project(g, [0.1])[0] == pytest.approx(0.0)  # tie goes to the smaller node


def test_projection_tie_lexicographic_2d():
    g = build_lattice(2, 2.0, 1.0)
    assert tuple(project(g, [0.5, 0.5])) == (0.0, 0.0)
    assert tuple(project(g, [0.5, 3.0])) == (0.0, 1.0)


@SLOW
@given(d=st.integers(1, 3), delta=st.floats(0.05, 2.0), ratio=st.floats(1.0, 12.0),
       c=st.floats(-2, 2), seed=st.integers(0, 2 ** 31))
def test_projection_bound(d, delta, ratio, c, seed):
    R = ratio * delta / d if d > 1 else ratio * delta
    center = np.full(d, c)
    g = build_lattice(d, delta, R, center=center)
    rng = np.random.default_rng(seed)
    x = center + rng.normal(scale=1.5 * R, size=(100_000, d))
    idx = g.project(x)
    gap = np.linalg.norm(x - g.nodes[idx], axis=1)
    bound = np.maximum(np.linalg.norm(x - center, axis=1) - R, 0) + delta
    assert np.all(gap <= bound + 1e-9)


def test_projection_matches_brute_force_nearest():
    g = build_lattice(2, 0.5, 1.3)
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, (3000, 2))
    ref = [oracle_project(g.nodes, p) for p in x]
    np.testing.assert_array_equal(g.project(x), ref)


# -- solver ------------------------------------------------------------------

def test_terminal_layer_and_shapes(bench):
    model, _ = bench
    grid = build_lattice(1, 0.1, 30.0)
    surf = solve(model, grid, TimeGrid(1.0, 4), build_gaussian_quantizer(1, 20))
    assert surf.values.shape == (5, grid.size, 2)
    for i in range(2):
        np.testing.assert_array_equal(surf.values[-1, :, i], model.terminal_gain(grid.nodes, i))


def test_hand_enumeration_three_nodes():
    """q = 1, m = 1, N = 2 quantizer on {-1, 0, 1}."""
    f = linear_profit([0.3], [[0.5]])
    g = linear_gain([0.0], [[2.0]])
    model = affine_model(1, 1, [[0.2]], [[[0.0]]], [[[0.9]]], f, g, constant_costs([[0.0]]), 1.0)
    grid = build_lattice(1, 1.0, 1.0)
    gq = GaussianQuantizer([[-0.8], [0.8]], [0.5, 0.5])
    surf = solve(model, grid, TimeGrid(1.0, 1), gq)
    # F(x, w) = x + 0.2 + 0.9 w
    expect = {
        -1.0: 0.5 * (-2) + 0.5 * 0 + (0.3 - 0.5),  # -1.52 -> -1 (clamp), -0.08 -> 0
        0.0: 0.5 * (-2) + 0.5 * 2 + 0.3,  # -0.52 -> -1, 0.92 -> 1
        1.0: 0.5 * 0 + 0.5 * 2 + (0.3 + 0.5),  # 0.48 -> 0, 1.92 -> 1
    }
    for node, v in zip(grid.nodes.ravel(), surf.values[0, :, 0]):
        assert v == pytest.approx(expect[node], abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31), m=st.integers(1, 3), N=st.integers(1, 4))
def test_single_regime_matches_brute_force(seed, m, N):
    rng = np.random.default_rng(seed)
    f = linear_profit([rng.uniform(-1, 1)], [[rng.uniform(-1, 1)]])
    g = linear_gain([rng.uniform(-1, 1)], [[rng.uniform(-1, 1)]])
    model = affine_model(1, 1, [[rng.uniform(-1, 1)]], [[[rng.uniform(-1, 1)]]], [[[rng.uniform(0.2, 1.5)]]],
                         f, g, constant_costs([[0.0]]), 1.0)
    grid = build_lattice(1, 0.5, 2.5)
    assert grid.size <= 11
    gq = build_gaussian_quantizer(1, N)
    tg = TimeGrid(1.0, m)
    surf = solve(model, grid, tg, gq)
    for n, x in enumerate(grid.nodes):
        assert surf.values[0, n, 0] == pytest.approx(brute_force_value(model, grid.nodes, tg, gq, 0, x),
                                                     abs=1e-12)


@SLOW
@given(seed=st.integers(0, 2 ** 31), q=st.integers(2, 3))
def test_obstacle_inequality_randomized(seed, q):
    rng = np.random.default_rng(seed)
    model = random_affine(rng, q)
    grid = build_lattice(1, 0.25, 3.0)
    surf = solve(model, grid, TimeGrid(model.horizon, 4), build_gaussian_quantizer(1, 5))
    c = model.cost_matrix(grid.nodes)  # (n, q, q)
    v = surf.values  # (m+1, n, q)
    gap = v[:, :, :, None] - (v[:, :, None, :] - c[None])  # [k, n, i, j]
    assert np.all(gap >= -1e-12)
    # equality only where i switches to j; strict wherever j is not chosen from i
    chosen = surf.policy[:, :, :, None] == np.arange(q)
    off = ~np.eye(q, dtype=bool)
    assert np.all(gap[chosen & off] <= 1e-12)
    assert np.all(gap[~chosen & off] > 0)
    np.testing.assert_array_equal(surf.values[-1], np.stack([model.terminal_gain(grid.nodes, i)
                                                              for i in range(q)], -1))


@SLOW
@given(seed=st.integers(0, 2 ** 31), df=st.floats(0, 1), dg=st.floats(0, 1))
def test_monotone_in_profit_and_gain(seed, df, dg):
    lo = random_affine(np.random.default_rng(seed), 2)
    hi = random_affine(np.random.default_rng(seed), 2, f_shift=df, g_shift=dg)
    grid = build_lattice(1, 0.25, 3.0)
    gq = build_gaussian_quantizer(1, 4)
    a = solve(lo, grid, TimeGrid(lo.horizon, 3), gq).values
    b = solve(hi, grid, TimeGrid(hi.horizon, 3), gq).values
    assert np.all(b >= a - 1e-12)


def test_symmetric_model_gives_symmetric_surface():
    def f(t, x, i):
        return (1.0 + i) * np.asarray(x)[..., 0] ** 2

    def gain(x, i):
        return np.abs(np.asarray(x)[..., 0])

    model = SwitchingModel(1, 2, lambda x, i: -0.5 * np.asarray(x), lambda x, i: np.full(np.shape(x) + (1,), 0.7),
                           f, gain, constant_costs([[0, 0.2], [0.3, 0]]), 1.0)
    grid = build_lattice(1, 0.2, 2.0)
    surf = solve(model, grid, TimeGrid(1.0, 5), build_gaussian_quantizer(1, 6))
    np.testing.assert_allclose(surf.values, surf.values[:, ::-1, :], atol=1e-12)


def test_non_finite_coefficients_are_reported():
    def b(x, i):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0.5, np.nan, 0.0)

    model = SwitchingModel(1, 1, b, lambda x, i: np.ones(np.shape(x) + (1,)), lambda t, x, i: 0 * x[..., 0],
                           zero_gain, constant_costs([[0]]), 1.0)
    with pytest.raises(NonFiniteError, match="node"):
        solve(model, build_lattice(1, 0.5, 1.0), TimeGrid(1.0, 2), build_gaussian_quantizer(1, 2))


def test_value_at_lookup(bench):
    model, _ = bench
    grid = build_lattice(1, 0.5, 30.0)
    surf = solve(model, grid, TimeGrid(1.0, 2), build_gaussian_quantizer(1, 10))
    n3 = int(np.flatnonzero(grid.nodes[:, 0] == 3.0)[0])
    assert value_at(surf, 0, [3.0], 1) == surf.values[0, n3, 1]
    assert value_at(surf, 1, [3.2], 0) == surf.values[1, n3, 0]
    with pytest.raises(IndexError):
        value_at(surf, 3, [3.0], 0)


def test_surface_csv(tmp_path, bench):
    model, _ = bench
    grid = build_lattice(1, 1.0, 2.0)
    surf = solve(model, grid, TimeGrid(1.0, 1), build_gaussian_quantizer(1, 3))
    path = tmp_path / "s.csv"
    surf.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,t_k,x_1,regime,value,policy"
    assert len(lines) == 1 + 2 * 5 * 2


def test_solve_deterministic(bench):
    model, _ = bench
    grid = build_lattice(1, 0.1, 30.0)
    gq = build_gaussian_quantizer(1, 30)
    a = solve(model, grid, TimeGrid(1.0, 5), gq)
    b = solve(model, grid, TimeGrid(1.0, 5), gq)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.policy, b.policy)


# -- policy evaluation -------------------------------------------------------

def test_policy_single_regime_matches_value():
    f = linear_profit([0.2], [[0.7]])
    model = affine_model(1, 1, [[0.1]], [[[-0.3]]], [[[1.0]]], f, linear_gain([0.0], [[1.0]]),
                         constant_costs([[0.0]]), 1.0)
    grid = build_lattice(1, 0.25, 4.0)
    gq = build_gaussian_quantizer(1, 6)
    surf = solve(model, grid, TimeGrid(1.0, 4), gq)
    ev = evaluate_policy(model, surf, [0.5], 0, 200_000, seed=1, quantizer=gq)
    assert abs(ev.mean - value_at(surf, 0, [0.5], 0)) <= 3 * ev.stderr
    assert ev.mean_switches == 0


def test_zero_data_policy_never_switches():
    model = affine_model(1, 2, [[0.0], [0.0]], [[[0.0]], [[0.0]]], [[[1.0]], [[1.0]]],
                         linear_profit([0, 0], [[0], [0]]), zero_gain, constant_costs([[0, 1], [1, 0]]), 1.0)
    grid = build_lattice(1, 0.5, 3.0)
    surf = solve(model, grid, TimeGrid(1.0, 3), build_gaussian_quantizer(1, 4))
    ev = evaluate_policy(model, surf, [0.0], 1, 1000, seed=0)
    assert ev.mean <= 0 and ev.mean_switches == 0
    assert np.all(surf.policy[:-1] == np.arange(2))


def test_benchmark_policy_reward_close_to_value(bench):
    model, _ = bench
    grid = build_lattice(1, 0.05, 30.0)
    gq = build_gaussian_quantizer(1, 100)
    surf = solve(model, grid, TimeGrid(1.0, 20), gq)
    v = value_at(surf, 0, [3.0], 1)
    ev = evaluate_policy(model, surf, [3.0], 1, 100_000, seed=2)
    assert ev.mean <= v * 1.02 + 3 * ev.stderr
    assert abs(ev.mean - v) <= 0.02 * v
