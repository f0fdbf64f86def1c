import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from lerwkit.exact import ZeroConditioning, hitting
from lerwkit.geometry import Ball, ExplicitSet, outer_boundary
from lerwkit.loop_erasure import chi_square_gof
from lerwkit.walks import (DegenerateCurve, ExitOf, HitOf, HitOfWeak, UnboundedDomain, conditioned_sampler,
                           conditioned_walk, radial_slit_escape, run_walk, rw_bm_avoidance_gap,
                           sample_brownian)


def test_exit_of_origin_takes_one_step(srw, rng):
    for _ in range(20):
        p = run_walk((0, 0), ExitOf(Ball(1)), srw, rng)
        assert p.step_count == 1
        assert tuple(p.points[1]) in outer_boundary(Ball(1), srw)


def test_return_to_origin_hits_cap_sometimes(srw):
    rng = np.random.default_rng(1)
    paths = [run_walk((0, 0), HitOf(ExplicitSet([(0, 0)]), cap=200), srw, rng) for _ in range(200)]
    done = [p for p in paths if not p.truncated]
    assert any(p.truncated for p in paths) and done
    for p in done:
        assert tuple(p.points[-1]) == (0, 0)
        assert all(tuple(q) != (0, 0) for q in p.points[1:-1])
    assert all(p.step_count <= 200 for p in paths)


def test_weak_hit_stops_immediately(srw, rng):
    p = run_walk((1, 0), HitOfWeak(ExplicitSet([(1, 0)])), srw, rng)
    assert p.tuples() == ((1, 0),)


def test_exit_paths_respect_the_ball(tri, rng):
    n = 9.5
    for _ in range(50):
        p = run_walk((0, 0), ExitOf(Ball(n)), tri, rng)
        r2 = tri.norm2(p.points)
        assert (r2[:-1] < n * n).all() and r2[-1] >= n * n * (1 - 1e-10)
        inc = np.diff(p.points, axis=0)
        assert all(tuple(d) in tri.support for d in inc.tolist())


def test_run_walk_is_reproducible(srw):
    a = run_walk((0, 0), ExitOf(Ball(10)), srw, np.random.default_rng(5))
    b = run_walk((0, 0), ExitOf(Ball(10)), srw, np.random.default_rng(5))
    assert np.array_equal(a.points, b.points)


def test_conditioned_exit_law_matches_harmonic_measure(srw):
    n = 6
    ball = Ball(n)
    K1 = np.array(sorted(outer_boundary(ball, srw)))
    origin = np.array([[0, 0]])
    sampler = conditioned_sampler(K1, origin, ball, srw)
    start = (1, 0)
    h = sampler.h(start)
    # exact law of the exit point given escape: P_z[hit x first] / h(z), one solve per exit point
    law = {}
    for i, x in enumerate(K1):
        rest = np.vstack([np.delete(K1, i, axis=0), origin])
        law[tuple(x)] = hitting(x.reshape(1, 2), rest, ball, srw)(start) / h
    assert sum(law.values()) == pytest.approx(1.0, abs=1e-10)
    rng = np.random.default_rng(2)
    counts = Counter(tuple(sampler.sample(start, rng).points[-1]) for _ in range(100_000))
    _, _, p = chi_square_gof(counts, law)
    assert p > 1e-3


def test_conditioned_walk_degenerate_start(srw, rng):
    K1 = np.array([[3, 0]])
    path = conditioned_walk((3, 0), K1, np.array([[-3, 0]]), Ball(5), srw, rng)
    assert path.tuples() == ((3, 0),)


def test_conditioned_first_step_on_five_point_domain(srw, rng):
    # domain: the origin and its four neighbours; K1 = {(1,0)}, K2 = {(-1,0)}, killing elsewhere
    dom = ExplicitSet([(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)])
    sampler = conditioned_sampler(np.array([[1, 0]]), np.array([[-1, 0]]), dom, srw)
    # by hand: h(0) = 1/4 + 2 * h(0, 1) / 4 and h(0, 1) = h(0) / 4, so h(0) = 2/7, h(0, 1) = 1/14
    assert sampler.h((0, 0)) == pytest.approx(2 / 7, abs=1e-12)
    assert sampler.h((0, 1)) == pytest.approx(1 / 14, abs=1e-12)
    steps, probs = sampler.solution.step_weights((0, 0))
    law = {tuple(s): p for s, p in zip(steps.tolist(), probs) if p > 0}
    assert law == {(1, 0): pytest.approx(7 / 8), (0, 1): pytest.approx(1 / 16), (0, -1): pytest.approx(1 / 16)}
    # a symmetric-but-tilted case: K1 = {(2,0)} on the segment {-2..2} x {0}
    seg = ExplicitSet([(x, 0) for x in range(-1, 2)])
    s2 = conditioned_sampler(np.array([[2, 0]]), np.array([[-2, 0]]), seg, srw)
    # gambler's ruin restricted to the x-axis with killing off-axis: solve by hand
    # h(x) = (h(x-1) + h(x+1)) / 4 on {-1, 0, 1}, h(2) = 1, h(-2) = 0
    A = np.array([[1, -0.25, 0], [-0.25, 1, -0.25], [0, -0.25, 1]])
    hand = np.linalg.solve(A, [0, 0, 0.25])
    assert [s2.h((x, 0)) for x in (-1, 0, 1)] == pytest.approx(hand.tolist(), abs=1e-12)
    steps, probs = s2.solution.step_weights((0, 0))
    got = {tuple(s): p for s, p in zip(steps.tolist(), probs)}
    assert got[(1, 0)] == pytest.approx(0.25 * hand[2] / hand[1], abs=1e-12)
    assert got[(-1, 0)] == pytest.approx(0.25 * hand[0] / hand[1], abs=1e-12)
    assert got[(1, 0)] + got[(-1, 0)] == pytest.approx(1.0, abs=1e-12)


def test_conditioned_errors(srw, rng):
    with pytest.raises(ZeroConditioning):
        conditioned_walk((0, 0), np.array([[5, 0]]), np.array([[1, 0], [-1, 0], [0, 1], [0, -1]]),
                         Ball(8), srw, rng)
    with pytest.raises(UnboundedDomain):
        conditioned_sampler(np.array([[2, 0]]), np.array([[-2, 0]]), ~Ball(1), srw)


def test_conditioned_path_weights_telescope(srw):
    from lerwkit.exact import htransform_log_ratio

    K1 = np.array(sorted(outer_boundary(Ball(5), srw)))
    sampler = conditioned_sampler(K1, np.array([[0, 0]]), Ball(5), srw)
    rng = np.random.default_rng(9)
    for _ in range(20):
        path = sampler.sample((1, 0), rng)
        a, b = htransform_log_ratio(path.points, sampler.solution, srw)
        assert abs(a - b) < 1e-12 * max(1.0, abs(a))


def test_harnack_ratio_does_not_grow(srw):
    ratios = {}
    for l in (8, 16, 32):
        sol = hitting(np.array([[0, 0]]), np.array(sorted(outer_boundary(Ball(4 * l), srw))), Ball(4 * l), srw)
        ring = np.array(sorted(outer_boundary(Ball(l), srw)))
        h = sol.evaluate(ring)
        ratios[l] = h.max() / h.min()
    assert ratios[32] <= 2 * ratios[8]


def test_brownian_increments_have_variance_t():
    rng = np.random.default_rng(4)
    ends = np.array([sample_brownian(0.7, 0.7, rng).samples[-1] for _ in range(100_000)])
    n = len(ends)
    for coord in (ends.real, ends.imag):
        s2 = coord.var(ddof=1)
        lo, hi = stats.chi2.ppf([0.0015, 0.9985], n - 1) / (n - 1) * 0.7
        assert lo < s2 < hi


def test_brownian_edge_cases():
    z = sample_brownian(0.0, 0.1, np.random.default_rng(0))
    assert z.samples.tolist() == [0j]
    a = sample_brownian(1.0, 0.01, np.random.default_rng(8)).samples
    b = sample_brownian(1.0, 0.01, np.random.default_rng(8)).samples
    assert np.array_equal(a, b)
    path = sample_brownian(1.0, 0.5, np.random.default_rng(8))
    assert path.at(0.25) == pytest.approx((path.samples[0] + path.samples[1]) / 2)


def test_slit_avoidance_matches_closed_form():
    exact = radial_slit_escape(0.5)
    curve = np.linspace(-1, -0.5, 40) + 0j
    rng = np.random.default_rng(11)
    for n in (25, 50):
        g = rw_bm_avoidance_gap(curve, n, 8000, rng)
        assert abs(g.rw - exact) < 3.5 * g.rw_stderr
        assert abs(g.bm - exact) < 3.5 * g.bm_stderr
        assert g.truncations == 0


def test_avoidance_trivial_curves():
    rng = np.random.default_rng(3)
    far = np.array([2 + 0j, 3 + 0j])
    g = rw_bm_avoidance_gap(far, 30, 500, rng)
    assert g.rw == 1.0 and g.bm == 1.0
    circle = 0.5 * np.exp(1j * np.linspace(0, 2 * math.pi, 400))
    g = rw_bm_avoidance_gap(circle, 30, 500, rng)
    assert g.rw == 0.0 and g.bm == 0.0
    with pytest.raises(DegenerateCurve):
        rw_bm_avoidance_gap(np.array([0.5 + 0j]), 30, 10, rng)
