"""Three-regime affine model: validate the costs, solve, and read the switching policy."""

import numpy as np

from quantswitch.gauss_quant import build_gaussian_quantizer
from quantswitch.markovian import build_lattice, solve
from quantswitch.model import (TimeGrid, affine_model, constant_costs, linear_gain, linear_profit,
                               validate_costs, validate_terminal)

# Mean-reverting state; regime 0 is idle, regime 1 profits from high x, regime 2 from low x.
costs = np.array([[0.0, 0.3, 0.3], [0.2, 0.0, 0.4], [0.2, 0.4, 0.0]])
model = affine_model(
    d=1, q=3,
    drift_const=[[0.0]] * 3, drift_matrix=[[[-1.0]]] * 3, vol_matrix=[[[0.6]]] * 3,
    running_profit=linear_profit([0.0, -0.1, -0.1], [[0.0], [1.0], [-1.0]]),
    terminal_gain=linear_gain([0.0, 0.0, 0.0], [[0.0], [0.0], [0.0]]),
    switch_cost=constant_costs(costs), horizon=1.0)

grid = build_lattice(1, 0.05, 3.0)
print(validate_costs(model, grid.nodes).summary())
print(validate_terminal(model, grid.nodes).summary())

surf = solve(model, grid, TimeGrid(1.0, 50), build_gaussian_quantizer(1, 50))
x = grid.nodes[:, 0]
pol = surf.policy[0, :, 0]
for j in range(3):
    sel = x[pol == j]
    if sel.size:
        print(f"from idle at t=0, choose regime {j} on [{sel.min():+.2f}, {sel.max():+.2f}]")
