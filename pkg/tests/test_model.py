import math

import numpy as np
import pytest

from quantswitch.model import (SwitchingModel, TimeGrid, constant_costs, linear_gain, linear_profit,
                               power_profit, validate_costs, validate_terminal, zero_gain)

from conftest import brownian_model


def test_benchmark_costs_pass_with_margin_half(bench):
    model, _ = bench
    rep = validate_costs(model, np.linspace(0.1, 30, 50)[:, None])
    assert rep.passed
    assert rep.margins["min_cost"] == pytest.approx(0.5)


def test_single_regime_costs_pass_vacuously():
    rep = validate_costs(brownian_model(q=1), [[0.0], [1.0]])
    assert rep.passed
    assert not rep.violations


def test_triangular_violation_margin_minus_one():
    c = [[0, 1, 3], [1, 0, 1], [3, 1, 0]]
    rep = validate_costs(brownian_model(q=3, costs=c), [[0.0]])
    assert not rep.passed
    assert rep.margins["min_triangular"] == pytest.approx(-1.0)
    assert any(v.condition.startswith("triang") for v in rep.violations)


def test_nonzero_diagonal_and_nonpositive_cost_fail():
    rep = validate_costs(brownian_model(q=2, costs=[[0.1, 1], [0, 0]]), [[0.0]])
    assert not rep.passed
    assert rep.margins["max_diagonal"] == pytest.approx(0.1)
    assert rep.margins["min_cost"] == pytest.approx(0.0)


def test_zero_gains_pass_terminal():
    rep = validate_terminal(brownian_model(q=2, costs=[[0, 1], [1, 0]]), [[0.0], [2.0]])
    assert rep.passed


def test_terminal_violation_margin_minus_half():
    gain = linear_gain([0.0, 1.0], [[0.0], [0.0]])
    model = brownian_model(q=2, gain=gain, costs=[[0, 0.5], [0.5, 0]])
    rep = validate_terminal(model, [[0.0]])
    assert not rep.passed
    assert rep.margins["min_terminal_margin"] == pytest.approx(-0.5)
    assert rep.violations[0].regimes[0] == 0


def test_benchmark_terminal_passes_on_range(bench):
    model, _ = bench
    assert validate_terminal(model, np.linspace(0.1, 30, 2000)[:, None]).passed


def test_margins_shrink_when_sample_grows():
    def cost(x, i, j):
        x = np.asarray(x)[..., 0]
        return np.where(i == j, 0.0, 1.0 + x ** 2)

    model = brownian_model(q=2)
    model = SwitchingModel(1, 2, model.drift, model.diffusion, model.running_profit, zero_gain, cost, 1.0)
    small = validate_costs(model, [[1.0], [2.0]])
    big = validate_costs(model, [[1.0], [2.0], [0.1]])
    assert big.margins["min_cost"] <= small.margins["min_cost"]
    assert big.margins["min_triangular"] <= small.margins["min_triangular"]


def test_constant_costs_outcome_independent_of_sample():
    model = brownian_model(q=2, costs=[[0, 0.3], [0.7, 0]])
    a = validate_costs(model, [[0.0]])
    b = validate_costs(model, np.linspace(-5, 5, 11)[:, None])
    assert a.passed == b.passed and a.margins == b.margins


def test_time_grid():
    tg = TimeGrid(1.0, 10)
    assert tg.h == pytest.approx(0.1)
    assert tg.times[-1] == 1.0
    assert tg.t(0) == 0.0
    with pytest.raises(IndexError):
        tg.t(11)
    with pytest.raises(ValueError):
        TimeGrid(5.0, 2)


def test_power_profit_matches_formula():
    f = power_profit([2.0, 1.0], [1 / 3, 2 / 3], beta=1.0)
    assert f(0.0, np.array([[1.0]]), 0)[0] == pytest.approx(2.0)
    assert f(0.5, np.array([[8.0]]), 1)[0] == pytest.approx(math.exp(-0.5) * 4.0)
    assert f(0.0, np.array([[-1.0]]), 0)[0] == 0.0


def test_linear_profit_shapes():
    f = linear_profit([1.0, 2.0], [[1.0, 0.0], [0.0, 1.0]])
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(f(0.0, x, 1), [4.0, 6.0])


def test_model_rejects_bad_sizes():
    m = brownian_model()
    with pytest.raises(ValueError):
        SwitchingModel(0, 1, m.drift, m.diffusion, m.running_profit, zero_gain, constant_costs([[0]]), 1.0)
    with pytest.raises(ValueError):
        SwitchingModel(1, 1, m.drift, m.diffusion, m.running_profit, zero_gain, constant_costs([[0]]), 0.0)
