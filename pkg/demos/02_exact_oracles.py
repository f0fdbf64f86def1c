"""
Exact finite-domain oracles
===========================

Green's functions, hitting probabilities and the exact LERW law are linear
algebra on a finite set. They serve as ground truth for the samplers.
"""

# %%
import math

from lerwkit import Ball, exact_lerw_law, simple_random_walk
from lerwkit.exact import dirichlet_h, green_value, hitting, verify_rwdecomp
from lerwkit.geometry import outer_boundary
from lerwkit.verification import run_all

srw = simple_random_walk()

# %%
# Green's function at the origin grows like (2/pi) log n.
for n in (4, 8, 16, 32, 64):
    print(f"G_{n}(0,0) = {green_value(Ball(n), (0, 0), (0, 0), srw):.5f}")
print("(2/pi) log 2 =", 2 / math.pi * math.log(2))

# %%
# Probability of reaching the right half of the boundary before the left half.
K = Ball(6)
ob = sorted(outer_boundary(K, srw))
right = [p for p in ob if p[0] > 0]
left = [p for p in ob if p[0] <= 0]
h = hitting(right, left, K, srw)
print("P_0[right before left] =", h((0, 0)))

# %%
# The exact law of the loop-erased walk in B_3 is a probability distribution.
law = exact_lerw_law(Ball(3), srw)
print(len(law), "self-avoiding paths, total mass", sum(law.values()))
top = sorted(law.items(), key=lambda kv: -kv[1])[:3]
for path, p in top:
    print(f"{p:.5f}", path)

# %%
# Last-exit factorization of a hitting probability, checked exactly.
chk = verify_rwdecomp((1, 0), [(3, 0), (0, 3)], [(-2, 1)], Ball(8), srw)
print("factorization residual:", chk.residual)

# %%
# A half-plane-like harmonic function with closed-form constants.
print("h(0) =", float(dirichlet_h(0j)))

# %%
# All randomized identity suites at once.
for suite in run_all(srw, instances=10):
    print(f"{suite.name:12s} value={suite.value:.3g} passed={suite.passed}")
