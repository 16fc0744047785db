"""Quantization tree of the uncontrolled GBM and the switching value on it."""

import warnings

from quantswitch.benchmark import benchmark_model
from quantswitch.marginal import UnvisitedCellWarning, build_quantization_tree, tree_solve
from quantswitch.model import TimeGrid

warnings.simplefilter("ignore", UnvisitedCellWarning)
model, exact = benchmark_model()
target = float(exact.value(3.0, 1))

for m, nbar in [(10, 100), (10, 1000), (100, 1000)]:
    mq = build_quantization_tree(model, [3.0], TimeGrid(1.0, m), nbar, n_mc=10 ** 6, seed=0)
    y0 = tree_solve(model, mq).y0
    t = mq.timings
    print(f"(m, Nbar)=({m}, {nbar}): Y0={y0[1]:.4f}  err {100 * abs(y0[1] - target) / target:.2f}%  "
          f"training {t['training']:.1f}s, transitions {t['transitions']:.1f}s")

print("grid sizes of the last tree:", mq.sizes[:5], "...", mq.sizes[-3:])
print("quantized mean of the final layer:", mq.quantized_mean(m).round(4), "(martingale level 3)")
