"""
Configured experiments and artifacts
====================================

Every experiment is a JSON config. Unknown keys are rejected, missing keys
take documented defaults, and each run writes a CSV and a JSON artifact.
"""

# %%
import json
import tempfile
from pathlib import Path

from lerwkit.experiment import compare_artifacts, resolve_config, run

# %%
cfg = resolve_config({"kind": "growth", "grid": [8, 16, 32], "trials": 500, "params": {"fit_min": 0}})
print(json.dumps(cfg, indent=2))

# %%
out = Path(tempfile.mkdtemp())
a = run(dict(cfg, seed=1), out / "seed1")
b = run(dict(cfg, seed=2), out / "seed2")
print(a.paths[0].read_text())
print("fit slope", a.fit.slope, "passed", a.passed)

# %%
# Two independent runs on the same walk agree within their joint standard errors.
_, verdicts = compare_artifacts([a.paths[1], b.paths[1]], z=3)
for v in verdicts:
    print(v.name, round(v.value, 2), v.passed)

# %%
# The same experiment from the shell:
#   lerwkit growth --grid 8,16,32 --trials 500 --out results
#   lerwkit compare results/seed1/growth.json results/seed2/growth.json
