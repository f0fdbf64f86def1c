import math

import numpy as np
import pytest

from lerwkit.exact import hitting
from lerwkit.exponents import (
    InsufficientConditionedSamples,
    NonPositiveEstimate,
    decomposition_ratio,
    estimate_es,
    estimate_es_annulus,
    estimate_es_tilde,
    estimate_growth,
    fit_exponent,
    point_on_path_prob,
    separation_statistics,
)
from lerwkit.geometry import Ball, outer_boundary
from lerwkit.loop_erasure import exact_lerw_law


def _joint(a, b):
    return math.hypot(a.stderr, b.stderr)


def test_es_one_is_three_quarters(srw):
    r = estimate_es(1, 100_000, srw, 0, exact=False)
    assert abs(r.estimate - 0.75) < 3 * r.stderr
    exact = estimate_es(1, 100, srw, 0, exact=True)
    assert math.isclose(exact.estimate, 0.75, abs_tol=1e-12)


def test_es_exact_route_matches_enumeration(srw):
    # average over the exact LERW law of the exact avoidance probability;
    # the walk may not return to 0 either
    K = Ball(3)
    law = exact_lerw_law(K, srw)
    ob = outer_boundary(K, srw)
    total = 0.0
    for w, p in law.items():
        body = set(w[1:])
        good = [x for x in ob if x not in body]
        h = hitting(good, list(w), K, srw)
        tip = np.array([0, 0])
        vals = h.evaluate(tip + srw.steps)
        total += p * float(np.dot(srw.step_probs, vals))
    r = estimate_es(3, 20_000, srw, 4)
    assert abs(r.estimate - total) < 4 * r.stderr


def test_es_nonincreasing(srw):
    reps = [estimate_es(n, 4000, srw, 10 + n) for n in (4, 8, 16, 32)]
    for a, b in zip(reps, reps[1:]):
        assert a.estimate - b.estimate > 2 * _joint(a, b)
        assert 0 <= b.estimate <= 1


def test_es_exact_and_plain_routes_agree(srw):
    a = estimate_es(32, 3000, srw, 1)
    b = estimate_es(32, 8000, srw, 2, exact=False)
    assert abs(a.estimate - b.estimate) < 3 * _joint(a, b)


def test_es_annulus_dominates_es(srw):
    full = estimate_es(16, 3000, srw, 3)
    ann = estimate_es_annulus(4, 16, 3000, srw, 4)
    assert ann.estimate - full.estimate > 2 * _joint(ann, full)
    edge = estimate_es_annulus(16, 16, 500, srw, 5)
    assert 0 <= edge.estimate <= 1
    with pytest.raises(ValueError):
        estimate_es_annulus(20, 16, 10, srw, 5)


def test_es_tilde_basic(srw):
    one = estimate_es_tilde(1, 2000, srw, 0)
    assert 0 < one.estimate < 1
    assert one.params["rho"] == 8.0
    a = estimate_es_tilde(16, 3000, srw, 1, rho=8)
    b = estimate_es_tilde(16, 3000, srw, 2, rho=16)
    assert abs(a.estimate - b.estimate) < 2 * _joint(a, b)
    with pytest.raises(ValueError):
        estimate_es_tilde(4, 10, srw, 0, rho=2)


def test_es_tilde_comparable_to_es_four_n(srw):
    for n in (8, 16):
        t = estimate_es_tilde(n, 1500, srw, n)
        e = estimate_es(4 * n, 3000, srw, n + 1, exact=False)
        assert 1 / 5 <= t.estimate / e.estimate <= 5


def test_growth_small_balls(srw):
    assert estimate_growth(1, 500, srw, 0).estimate == 1.0
    law = exact_lerw_law(Ball(4), srw)
    mean = sum((len(w) - 1) * p for w, p in law.items())
    r = estimate_growth(4, 100_000, srw, 1)
    assert abs(r.estimate - mean) < 3 * r.stderr
    assert math.isclose(estimate_growth(2, 1000, srw, 2).estimate,
                        sum((len(w) - 1) * p for w, p in exact_lerw_law(Ball(2), srw).items()))


def test_point_on_path_two_routes(srw):
    res = point_on_path_prob((2, 1), 8, 100_000, srw, 7)
    assert abs(res.direct.estimate - res.formula.estimate) < 3 * res.joint_stderr
    with pytest.raises(ValueError):
        point_on_path_prob((0, 0), 8, 10, srw, 0)


def test_point_on_path_adjacent_matches_enumeration(srw):
    law = exact_lerw_law(Ball(3), srw)
    z = (1, 0)
    exact = sum(p for w, p in law.items() if z in w)
    res = point_on_path_prob(z, 3, 50_000, srw, 8)
    assert abs(res.direct.estimate - exact) < 3 * res.direct.stderr
    assert abs(res.formula.estimate - exact) < 3 * res.formula.stderr + 1e-12


def test_decomposition_precondition(srw):
    with pytest.raises(ValueError):
        decomposition_ratio(16, 16, 10, srw, 0)
    d = decomposition_ratio(4, 16, 1000, srw, 0)
    assert 0.1 <= d.ratio <= 10
    lo, hi = d.ci()
    assert lo < d.ratio < hi


def test_separation_monotone_in_c(srw):
    tab = separation_statistics(8, [0.05, 0.1, 0.2, 0.4], 300, srw, 0, walks=16)
    assert all(b <= a for a, b in zip(tab.probabilities, tab.probabilities[1:]))
    assert tab.conditioned >= 100
    assert len(tab.reports()) == 4
    with pytest.raises(InsufficientConditionedSamples):
        separation_statistics(8, [0.1], 2, srw, 0, walks=2)
    with pytest.raises(ValueError):
        separation_statistics(8, [1.5], 10, srw, 0)


def test_fit_exact_power_law():
    pts = [(x, 2 * x**1.25, 0.0) for x in (16, 32, 64, 128)]
    f = fit_exponent(pts)
    assert abs(f.slope - 1.25) < 1e-12
    assert math.isclose(f.r2, 1.0)
    assert math.isclose(f.intercept, math.log(2), abs_tol=1e-12)


def test_fit_two_points_is_secant():
    f = fit_exponent([(3.0, 5.0, 0.1), (7.0, 2.0, 0.3)])
    assert math.isclose(f.slope, math.log(2 / 5) / math.log(7 / 3), rel_tol=1e-14)


def test_fit_noisy_recovers_slope():
    rng = np.random.default_rng(0)
    xs = np.array([64, 128, 256, 512, 1024], dtype=float)
    slopes = []
    for _ in range(100):
        y = 3 * xs**-0.75 * (1 + 0.01 * rng.standard_normal(len(xs)))
        slopes.append(fit_exponent([(x, v, 0.01 * v) for x, v in zip(xs, y)]).slope)
    assert abs(np.mean(slopes) + 0.75) < 0.02
    assert max(abs(s + 0.75) for s in slopes) < 0.06


def test_fit_errors():
    with pytest.raises(NonPositiveEstimate):
        fit_exponent([(1, 1, 0), (2, 0, 0)])
    with pytest.raises(ValueError):
        fit_exponent([(1, 1, 0)])


def test_fit_recomputable_from_points():
    f = fit_exponent([(16, 30.0, 1.0), (32, 70.0, 2.0), (64, 170.0, 4.0)])
    g = fit_exponent([(math.exp(x), math.exp(y), math.exp(y) / math.sqrt(w)) for x, y, w in zip(f.x, f.y, f.w)])
    assert abs(f.slope - g.slope) < 1e-12


@pytest.mark.parametrize("make", [
    lambda s, seed: estimate_es(4, 300, s, seed, exact=False),
    lambda s, seed: estimate_es(6, 300, s, seed),
    lambda s, seed: estimate_growth(6, 300, s, seed),
], ids=["es-plain", "es-exact", "growth"])
def test_stderr_matches_replication_spread(srw, make):
    reps = [make(srw, 1000 + i) for i in range(100)]
    spread = np.std([r.estimate for r in reps], ddof=1)
    claimed = np.mean([r.stderr for r in reps])
    assert abs(claimed / spread - 1) < 0.2


def test_results_independent_of_worker_count(srw):
    a = estimate_growth(16, 300, srw, 9, workers=1)
    b = estimate_growth(16, 300, srw, 9, workers=2)
    assert (a.estimate, a.stderr) == (b.estimate, b.stderr)
    c = estimate_es(8, 200, srw, 9, workers=1)
    d = estimate_es(8, 200, srw, 9, workers=3)
    assert (c.estimate, c.stderr) == (d.estimate, d.stderr)
