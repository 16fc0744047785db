"""Optimal quantizers of the standard normal law, and how their error decays with N."""

import numpy as np

from quantswitch.gauss_quant import build_gaussian_quantizer

# Two points: the conditional means of the two half-lines.
gq = build_gaussian_quantizer(1, 2)
print("N=2 points", gq.points.ravel(), "weights", gq.weights, f"(sqrt(2/pi) = {np.sqrt(2 / np.pi):.6f})")

# L2 error falls roughly like 1/N in one dimension.
ns = np.array([2, 4, 8, 16, 32, 64, 128])
dist = np.array([build_gaussian_quantizer(1, int(n)).distortion for n in ns])
for n, e in zip(ns, dist):
    print(f"N={n:4d}  distortion={e:.5f}  N*distortion={n * e:.3f}")
print("log-log slope:", np.polyfit(np.log(ns), np.log(dist), 1)[0].round(3))

# Sample-based training is available in any dimension.
gq2 = build_gaussian_quantizer(2, 50, method="lloyd_mc", n_samples=200_000, seed=0)
print(f"d=2, N=50: distortion {gq2.distortion:.4f}, mean {gq2.mean().round(4)}")
