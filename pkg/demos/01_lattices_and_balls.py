"""
Walk specifications and covariance-normalized balls
===================================================

A walk is given by generators and weights. Every step set is mapped to
identity covariance, so balls mean the same thing on every lattice.
"""

# %%
import numpy as np

from lerwkit import Ball, HalfWedge, simple_random_walk, spec_to_json, triangular_walk, validate_spec
from lerwkit.geometry import inner_boundary, outer_boundary
from lerwkit.lattice import covariance

srw = simple_random_walk()
tri = triangular_walk()
print("simple walk steps:", srw.support)
print("diagonal-generator walk steps:", tri.support)

# %%
# The raw covariance differs between the two walks; after normalization both are
# the identity, which is why radii can be compared across lattices.
for name, spec in (("simple", srw), ("diagonal", tri)):
    steps = spec.steps @ spec.embedding.T
    cov_norm = (spec.step_probs[:, None, None] * steps[:, :, None] * steps[:, None, :]).sum(axis=0)
    print(name, "raw covariance\n", covariance(spec), "\nnormalized\n", np.round(cov_norm, 12))

# %%
# In normalized units the unit steps of the simple walk have length sqrt(2), so
# B_2 holds the origin and its four neighbours.
print("B_1:", Ball(1).points(srw).tolist())
print("B_2:", Ball(2).points(srw).tolist())
print("|B_16| on the two lattices:", len(Ball(16).points(srw)), len(Ball(16).points(tri)))

# %%
# Boundaries and wedge-shaped regions.
K = Ball(4)
print("outer boundary size:", len(outer_boundary(K, srw)), "inner boundary size:", len(inner_boundary(K, srw)))
half = Ball(6) | HalfWedge(0, 12, -np.pi / 2, np.pi / 2)
print("ball plus right half-disk:", len(half.points(srw)), "points")

# %%
# Custom walks are validated and serialize to JSON with exact rational weights.
custom = validate_spec([(1, 0), (0, 1), (1, -1)], ["1/4", "1/4", "1/4"])
print(spec_to_json(custom))
print("fingerprint:", custom.fingerprint)
