"""
Radial SLE and Brownian avoidance
=================================

Driving functions, Loewner traces, the capacity normalization and the
probability that Brownian motion avoids an SLE curve.
"""

# %%
import numpy as np

from lerwkit import (bm_sle_avoidance, curve_distance, fit_exponent, forward_flow, lerw_sle_comparison,
                     sample_driving, trace_points)
from lerwkit.sle import capacity_derivative

rng = np.random.default_rng(3)

# %%
U = sample_driving(2.0, 2.0, 1e-3, rng)
tr = trace_points(U)
print("trace starts at", tr.points[0], "and reaches |z| =", np.abs(tr.points).min())

# %%
# g_t'(0) = e^t in the capacity parametrization.
d = capacity_derivative(U)
print("max relative error of g_t'(0) against e^t:", np.abs(d / np.exp(U.times) - 1).max())

# %%
# A point of the trace is swallowed by the forward flow at the time it was drawn.
k = 600
f = forward_flow(U, tr.points[k])
print(f"trace point at t={k * U.dt:.3f} swallowed at t={f.swallow_time:.4f}")

# %%
# Brownian avoidance of SLE_2 up to radius r; the limiting exponent is (kappa + 4) / 8.
reps = bm_sle_avoidance(2.0, [0.5, 0.35, 0.25, 0.18], 400, 0)
for r in reps:
    print(f"r={r.params['r']:.2f}: P = {r.estimate:.4f} +/- {r.stderr:.4f}")
print("slope", round(fit_exponent([(r.params["r"], r.estimate, r.stderr) for r in reps]).slope, 3))

# %%
# Curve distance between two polylines.
seg = np.array([0, 1], dtype=complex)
print("offset segments:", curve_distance(seg, seg + 0.1j))

# %%
# Rescaled loop-erased walk against SLE_2 at matching radii.
cmp = lerw_sle_comparison(64, 2.0, 300, 0, r_grid=(0.25, 0.9))
for row in cmp.rows:
    print(f"r={row.r}: LERW {row.lerw:.3f}, SLE {row.sle:.3f}, z = {row.z:.2f}")
