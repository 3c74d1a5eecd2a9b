"""How tight are the two-sided bounds on the unit disc?

We walk a pair of points towards the boundary of the unit disc and compare
a Monte Carlo estimate of the Dirichlet kernel with the upper and lower
bounds.  The ratios stay inside a fixed band while the kernel itself drops
by orders of magnitude.

Run:  python demos/ball_bounds.py
"""
import numpy as np

from convexheat.bounds import lower_bound_improved, upper_bound_main
from convexheat.geometry import Ball
from convexheat.kernels import ball_h_factor, gauss_kernel
from convexheat.oracle import mc_kernel

B = Ball(dim=2)
t = 0.05

# %% move both points towards the boundary at a fixed angle apart
print(f"t = {t}")
print(f"{'depth':>8} {'mc':>11} {'mc/lower':>9} {'mc/upper':>9} {'mc/(p h)':>9}")
for depth in (0.5, 0.2, 0.05, 0.01, 0.002):
    x = np.array([1 - depth, 0.0])
    y = (1 - depth) * np.array([np.cos(0.3), np.sin(0.3)])
    est = mc_kernel(B, t, x, y, steps=128, paths=20_000, seed=1, progress=False)
    lo = lower_bound_improved(B, t, x, y)[0].value
    up = upper_bound_main(B, t, x, y).value
    ph = gauss_kernel(t, x, y) * ball_h_factor(t, x, y)
    print(f"{depth:8.3f} {est.mean:11.4e} {est.mean / lo:9.3f} {est.mean / up:9.3f} {est.mean / ph:9.3f}")

# %% the kernel falls like δ(x)δ(y)/t, the ratios do not
