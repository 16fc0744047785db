import numpy as np
import pytest

from quantswitch.benchmark import GBMSwitchParams, benchmark_model
from quantswitch.model import SwitchingModel, constant_costs, gbm_model, linear_gain, linear_profit, zero_gain


@pytest.fixture(scope="session")
def bench():
    """Default two-regime benchmark model and its closed-form solution."""
    return benchmark_model(GBMSwitchParams())


def brownian_model(q=1, drift=0.0, vol=1.0, profit=None, gain=None, costs=None, T=1.0):
    """Arithmetic Brownian motion in d = 1, identical dynamics in every regime."""
    profit = profit or linear_profit([0.0] * q, [[0.0]] * q)
    gain = gain or zero_gain
    costs = constant_costs(np.zeros((q, q)) if costs is None else costs)

    def b(x, i):
        return np.full(np.shape(x), drift, dtype=float)

    def s(x, i):
        return np.full(np.shape(x) + (1,), vol, dtype=float)

    return SwitchingModel(1, q, b, s, profit, gain, costs, T)


@pytest.fixture
def gbm1():
    """Single-regime GBM with b = 0, sigma = 1."""
    return gbm_model(1, 1, [0.0], [1.0], linear_profit([0.0], [[0.0]]), linear_gain([0.0], [[1.0]]),
                     constant_costs([[0.0]]), 1.0)
