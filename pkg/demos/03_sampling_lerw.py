"""
Sampling loop-erased walks
==========================

Chronological loop erasure, Monte Carlo sampling against the exact law, the
domain Markov property and the loop measure.
"""

# %%
from collections import Counter

import numpy as np

from lerwkit import Ball, ExplicitSet, exact_lerw_law, loop_erase, measure_mu, sample_lerw, simple_random_walk
from lerwkit.loop_erasure import (chi_square_gof, domain_markov_sample, green_of_path, loop_measure_truncated,
                                  max_ratio, sample_infinite_lerw_restricted)

srw = simple_random_walk()
rng = np.random.default_rng(1)

# %%
# Loop erasure removes loops in the order they are closed.
walk = [(0, 0), (1, 0), (1, 1), (0, 1), (0, 0), (0, 1)]
print(walk, "->", loop_erase(walk).tuples())

# %%
# Monte Carlo against the exact law in B_3.
law = exact_lerw_law(Ball(3), srw)
counts = Counter(sample_lerw(Ball(3), (0, 0), srw, rng).tuples() for _ in range(20_000))
stat, dof, p = chi_square_gof(counts, law)
print(f"chi-square {stat:.1f} on {dof} dof, p = {p:.3f}")

# %%
# Given its first step, the rest of the path is the loop erasure of a walk that
# avoids that step.
cont = Counter(domain_markov_sample([(0, 0), (1, 0)], Ball(3), srw, rng).tuples() for _ in range(2000))
print("most common continuations:", cont.most_common(3))

# %%
# Larger balls barely change the law of the start of the path.
a, b = measure_mu(2, Ball(8), srw), measure_mu(2, Ball(16), srw)
print("max ratio between the laws in B_8 and B_16:", max_ratio(a, b))
eta = sample_infinite_lerw_restricted(4, 8, srw, rng)
print("infinite-walk approximant cut at B_4:", eta.tuples())

# %%
# The truncated loop measure exponentiates to the Green product.
K = ExplicitSet([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)])
target = green_of_path(K, [(0, 0)], srw)
for L in (4, 8, 12):
    m = loop_measure_truncated(K, [(0, 0)], L, srw)
    print(f"L={L:2d}: exp(m) = {m.exp_value:.6f}  (G = {target:.6f})")
