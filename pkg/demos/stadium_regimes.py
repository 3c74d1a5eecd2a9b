"""The stadium: where the square-root and midpoint factors disagree.

Two points near the ends of a flat side of the stadium see the boundary
very differently depending on whether the bound uses the midpoint of the
pair.  The ratio of the two factors grows like t^(γ-1), up to a constant, as t shrinks.

Run:  python demos/stadium_regimes.py
"""
from convexheat.experiments import report_bytes, run_experiment

rep = run_experiment({
    "name": "stadium-demo",
    "preset": "stadium-regimes",
    "grid": {"gamma": [0.55, 0.7], "t": [1e-2, 1e-3, 1e-4]},
    "budget": {"paths": 20_000, "steps": 128},
})

# %% deterministic factor ratios against the predicted power law
print(f"{'gamma':>6} {'t':>8} {'SR/SQ':>11} {'t^(g-1)':>11}")
for r in rep.rows:
    if r["kind"] == "factors":
        print(f"{r['gamma']:6.2f} {r['t']:8.0e} {r['ratio_sr_sq']:11.4e} {r['predicted_ratio']:11.4e}")

# %% Monte Carlo survival, normalised by δ²
fit = rep.summary["mc_fit"]
print("\nMC exponent fit:", {k: fit[k] for k in ("target_slope", "feasible", "slope") if k in fit})

# %% the same numbers, ready for gnuplot
print()
print(report_bytes(rep, "plotdata").decode())
