"""
Growth and escape exponents at small scale
==========================================

Quick versions of the exponent estimates. The full-scale runs live behind the
command-line interface (``lerwkit growth``, ``lerwkit escape``).
"""

# %%
from lerwkit import (decomposition_ratio, estimate_es, estimate_es_annulus_sweep, estimate_growth,
                     fit_exponent, separation_statistics, simple_random_walk)

srw = simple_random_walk()

# %%
# Mean length of the loop-erased walk to the boundary of B_n.
growth = [estimate_growth(n, 2000, srw, 0) for n in (16, 32, 64, 128)]
for r in growth:
    print(f"Gr({r.n:g}) = {r.estimate:.1f} +/- {r.stderr:.1f}")
fit = fit_exponent([(r.n, r.estimate, r.stderr) for r in growth])
print(f"growth slope {fit.slope:.3f} +/- {fit.slope_stderr:.3f} (limit 5/4)")

# %%
# Probability that a walk escapes an independent loop-erased walk.
esc = [estimate_es(n, 1000, srw, 1, walks=32) for n in (16, 32, 64, 128)]
for r in esc:
    print(f"Es({r.n:g}) = {r.estimate:.4f} +/- {r.stderr:.4f} ({r.params['route']})")
print("escape slope", round(fit_exponent([(r.n, r.estimate, r.stderr) for r in esc]).slope, 3), "(limit -3/4)")

# %%
# Escape from the outer piece only, at several inner radii from shared samples.
ann = estimate_es_annulus_sweep([8, 16, 32], 64, 1000, srw, 2, walks=32)
for r in ann:
    print(f"Es({r.params['m']:g}, 64) = {r.estimate:.4f}")

# %%
# The escape probability nearly factorizes over scales.
d = decomposition_ratio(8, 32, 1000, srw, 3, walks=32)
print(f"Es(32) / (Es(8) Es(8, 32)) = {d.ratio:.3f} +/- {d.stderr:.3f}")

# %%
# Given that they do not meet, the tips of the two paths stay macroscopically apart.
tab = separation_statistics(16, [0.05, 0.1, 0.2], 300, srw, 4, walks=32)
print("P[D >= c | A] for c in", tab.c_grid, "=", [round(p, 3) for p in tab.probabilities],
      "from", tab.conditioned, "conditioned samples")
