"""Midpoint characteristics of a few convex domains.

For each domain we estimate the smallest ratio between the distance of a
chord's midpoint to the boundary and its distance to the tangent line at
one end.  Round domains keep it away from zero; the flat sides of the
stadium drive it to zero; the parabola region only keeps the relaxed
version positive.

Run:  python demos/domain_characteristics.py
"""
import numpy as np

from convexheat.characteristics import qd_estimate, ratio_profile, rd_estimate
from convexheat.geometry import Ball, Ellipse, PowerDomain, Stadium

# %% ratio along an antipodal chord of the disc: flat at 1, then (1-α)/α
prof = ratio_profile(Ball(dim=2), [1, 0], [-1, 0], grid=8)
print("disc chord profile:", np.round(prof, 4))

# %% estimates
for D in (Ball(dim=2), Ellipse(2, 1), Ellipse(4, 1), Stadium()):
    rep = qd_estimate(D, budget=20_000, seed=0)
    print(f"{D.kind:8s} {str(D.to_spec()['params']):32s} q_hat={rep.q_hat:.4f} r_hat={rep.r_hat:.4f}")

P = PowerDomain(1, 2, 2)
q = qd_estimate(P, budget=5000, seed=0).q_hat
rep = rd_estimate(P, budget=5000, seed=0)
print(f"parabola q_hat={q:.4f} r_hat={rep.r_hat:.4f} truncations={rep.truncation_history}")
