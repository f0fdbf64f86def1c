"""End-to-end acceptance checks at full scale.

Each test prints one PASS/FAIL line to the terminal and then asserts.
The Monte Carlo criteria share their configurations with the CLI defaults.
"""
import math
from collections import Counter

import numpy as np
import pytest

from lerwkit.experiment import execute, resolve_config, run
from lerwkit.geometry import Ball
from lerwkit.lattice import simple_random_walk
from lerwkit.loop_erasure import chi_square_gof, domain_markov_sample, exact_lerw_law, sample_lerw
from lerwkit.verification import (
    dirichlet_suite,
    greencondit_suite,
    htransform_suite,
    lerw_mass_suite,
    loop_measure_suite,
    rwdecomp_suite,
)

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def _report(number, title, passed, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {title}: {detail}")
        assert passed, f"criterion {number} ({title}) failed: {detail}"
    return _report


def _verdicts(result):
    return "; ".join(f"{v.name}={v.value:.4g} ({v.target})" for v in result.verdicts)


def test_growth_exponent(report):
    res = execute(resolve_config({"kind": "growth"}))
    report(1, "growth exponent, simple walk", res.passed,
           f"slope {res.fit.slope:.4f} +/- {res.fit.slope_stderr:.4f}; {_verdicts(res)}")


def test_growth_universality(report):
    cfg = resolve_config({"kind": "growth", "lattice": "triangular", "tolerances": {"slope_tol": 0.10}})
    res = execute(cfg)
    report(2, "growth exponent, diagonal-generator walk", res.passed,
           f"slope {res.fit.slope:.4f} +/- {res.fit.slope_stderr:.4f}; {_verdicts(res)}")


def test_escape_exponent(report):
    res = execute(resolve_config({"kind": "escape"}))
    report(3, "escape exponent", res.passed, f"slope {res.fit.slope:.4f} +/- {res.fit.slope_stderr:.4f}")


def test_annulus_exponent(report):
    res = execute(resolve_config({"kind": "annulus"}))
    report(4, "annulus exponent at n = 512", res.passed,
           f"slope {res.fit.slope:.4f} +/- {res.fit.slope_stderr:.4f}")


def test_decomposition(report):
    res = execute(resolve_config({"kind": "decomposition"}))
    report(5, "decomposition ratio", res.passed, _verdicts(res))


def test_separation(report):
    res = execute(resolve_config({"kind": "separation"}))
    report(6, "separation stability", res.passed, _verdicts(res))


def test_sle_exponent(report):
    res = execute(resolve_config({"kind": "sle-nu"}))
    report(7, "SLE intersection exponent", res.passed, _verdicts(res))


def test_exact_identities(report):
    spec = simple_random_walk()
    suites = [rwdecomp_suite(spec, 50), greencondit_suite(spec, 50), lerw_mass_suite(spec, 50),
              htransform_suite(spec, 50)]
    ok = all(s.passed and s.instances >= 50 and s.value < 1e-8 for s in suites)
    report(8, "exact identities", ok, "; ".join(f"{s.name} max residual {s.value:.2e} over {s.instances}"
                                                for s in suites))


def test_loop_measure(report):
    s = loop_measure_suite(simple_random_walk(), lengths=(6, 10, 14), final_tol=0.02)
    gaps = s.details["gaps"]
    report(9, "loop measure exponentiates to the Green product", s.passed,
           "gaps " + ", ".join(f"{g:.4g}" for g in gaps))


def test_dirichlet_constants(report):
    s = dirichlet_suite(simple_random_walk(), ns=(32, 64, 128))
    d = s.details
    ok = (abs(d["h0"] - 0.25) < 1e-12 and abs(d["dh_dx"] - math.sqrt(2) / math.pi) < 1e-6
          and d["decreasing"])
    report(10, "Dirichlet constants", ok,
           f"h(0)={d['h0']!r}, dh/dx={d['dh_dx']:.9f}, errors " + ", ".join(f"{e:.3g}" for e in d["max_errors"]))


def test_lerw_distribution(report):
    spec = simple_random_walk()
    K = Ball(3)
    law = exact_lerw_law(K, spec)
    rng = np.random.default_rng(2024)
    counts = Counter(sample_lerw(K, (0, 0), spec, rng).tuples() for _ in range(100_000))
    _, dof1, p1 = chi_square_gof(counts, law)
    omega = ((0, 0), (1, 0))
    sub = {w[2:]: p for w, p in law.items() if w[:2] == omega}
    z = sum(sub.values())
    sub = {k: v / z for k, v in sub.items()}
    cont = Counter(domain_markov_sample(omega, K, spec, rng).tuples() for _ in range(20_000))
    _, dof2, p2 = chi_square_gof(cont, sub)
    report(11, "LERW law and domain Markov property", p1 > 1e-3 and p2 > 1e-3,
           f"full law p={p1:.3g} (dof {dof1}); continuation p={p2:.3g} (dof {dof2})")


def test_determinism(report, tmp_path):
    same = []
    for kind, over in (("growth", {"trials": 400}), ("escape", {"grid": [16, 32, 64], "trials": 100}),
                       ("separation", {"grid": [16, 32], "trials": 60})):
        cfg = {"kind": kind, "seed": 77, "params": {"fit_min": 0} if kind != "separation" else {}, **over}
        bodies = [run(dict(cfg, workers=w), tmp_path / f"{kind}{w}").paths[0].read_bytes() for w in (1, 4)]
        same.append((kind, bodies[0] == bodies[1]))
    report(12, "determinism across worker counts", all(ok for _, ok in same),
           ", ".join(f"{k} {'identical' if ok else 'differs'}" for k, ok in same))
