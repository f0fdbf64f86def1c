import math

import numpy as np
import pytest

from lerwkit.exact import (OverlappingAbsorbers, TooLarge, dirichlet_h, dirichlet_h_poisson, dirichlet_htilde,
                           exit_distribution, green, green_value, hitting, load_green_table, poisson_kernel,
                           save_green_table, verify_greencondit, verify_rwdecomp)
from lerwkit.geometry import Annulus, Ball, ExplicitSet, outer_boundary
from lerwkit.verification import greencondit_suite, rwdecomp_suite


def test_green_of_single_point(srw, lazy):
    assert green(ExplicitSet([(0, 0)]), srw)((0, 0), (0, 0)) == pytest.approx(1.0, abs=1e-14)
    assert green(ExplicitSet([(0, 0)]), lazy)((0, 0), (0, 0)) == pytest.approx(2.0, abs=1e-14)


def test_green_log_growth(srw):
    vals = [green_value(Ball(l), (0, 0), (0, 0), srw) for l in (8, 16, 32, 64)]
    diffs = np.diff(vals)
    target = 2 / math.pi * math.log(2)
    assert abs(diffs[-1] - target) < 0.1 * target
    assert abs(diffs[-1] - target) <= abs(diffs[0] - target) + 1e-12


@pytest.mark.parametrize("name", ["srw", "lazy", "tri"])
def test_green_table_invariants(name, request):
    spec = request.getfixturevalue(name)
    t = green(Ball(7) - ExplicitSet([(1, 1)]), spec)
    assert t.residual() < 1e-10
    assert t.asymmetry() < 1e-10
    assert (np.diag(t.G) >= 1 - 1e-12).all()


def test_green_off_domain_convention(srw):
    t = green(Ball(3), srw)
    x = next(iter(outer_boundary(Ball(3), srw)))
    assert t(x, x) == pytest.approx(1.0)
    assert green_value(Ball(3), x, x, srw) == pytest.approx(1.0)


def test_sparse_path_agrees_with_dense(srw):
    big = green(Ball(110), srw)
    assert not big.is_dense
    assert big.residual() < 1e-10
    small = green_value(Ball(110), (3, 1), (0, 0), srw)
    assert big((3, 1), (0, 0)) == pytest.approx(small, rel=1e-10)


def test_too_large_is_refused(srw):
    with pytest.raises(TooLarge):
        green(Ball(30), srw, cap=100)


def test_hitting_symmetry_and_trivial_cases(srw, tri):
    dom = Ball(9)
    for spec in (srw, tri):
        # K2 = -K1 and K1 u K2 is the whole outer boundary, so z -> -z swaps the two events
        bnd = np.array(sorted(outer_boundary(dom, spec)))
        k1 = bnd[[tuple(p) > (0, 0) for p in bnd.tolist()]]
        h = hitting(k1, -k1, dom, spec)
        assert h((0, 0)) == pytest.approx(0.5, abs=1e-10)
        assert h(tuple(k1[0])) == 1.0 and h(tuple(-k1[0])) == 0.0
        assert h.laplacian_residual() < 1e-10
        assert ((h.values >= 0) & (h.values <= 1)).all()
    with pytest.raises(OverlappingAbsorbers):
        hitting(np.array([[1, 0]]), np.array([[1, 0]]), dom, srw)


def test_hitting_gamblers_ruin(srw):
    # walk on the segment {-1, 0, 1} x {0}, killed off-axis, absorbed at +-2
    seg = ExplicitSet([(x, 0) for x in range(-1, 2)])
    h = hitting(np.array([[2, 0]]), np.array([[-2, 0]]), seg, srw)
    A = np.array([[1, -0.25, 0], [-0.25, 1, -0.25], [0, -0.25, 1]])
    hand = np.linalg.solve(A, [0, 0, 0.25])
    assert [h((x, 0)) for x in (-1, 0, 1)] == pytest.approx(hand.tolist(), abs=1e-12)


def test_exit_distribution_is_a_law(tri):
    law = exit_distribution((1, 0), Ball(5), tri)
    assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)
    assert min(law.values()) >= 0


def test_rwdecomp_example_and_degenerate(srw):
    chk = verify_rwdecomp((0, 0), np.array([[3, 0]]), np.array([[-3, 0]]), Ball(12), srw)
    assert chk.residual < 1e-8
    assert 0 < chk.lhs < 1
    deg = verify_rwdecomp((3, 0), np.array([[3, 0]]), np.array([[-3, 0]]), Ball(12), srw)
    assert deg.lhs == deg.rhs == 1.0


@pytest.mark.parametrize("name", ["srw", "tri"])
def test_rwdecomp_randomized(name, request):
    res = rwdecomp_suite(request.getfixturevalue(name), instances=50, seed=1)
    assert res.instances == 50 and res.value < 1e-8


def test_greencondit_examples(srw, lazy):
    rng = np.random.default_rng(0)
    K = Ball(3).points(srw)
    ring = Annulus(4, 6).points(srw)
    perm = rng.permutation(len(ring))
    chk = verify_greencondit(K, ring[perm[:3]], ring[perm[3:6]], srw)
    assert chk.diag_residual < 1e-9 and chk.max_residual < 1e-9
    # h identically 1 on K: K2 empty and the domain is K plus its boundary
    K = Ball(4).points(srw)
    bnd = np.array(sorted(outer_boundary(Ball(4), srw)))
    chk = verify_greencondit(K, bnd, np.zeros((0, 2), dtype=np.int64), srw, domain=Ball(4))
    assert chk.h_min == pytest.approx(1.0) and chk.max_residual < 1e-12
    # single point: G^X = G^Y = 1 / (1 - p(0))
    chk = verify_greencondit(np.array([[0, 0]]), np.array([[2, 0]]), np.array([[-2, 0]]), lazy)
    assert chk.max_residual < 1e-12 and chk.diag_residual < 1e-12


def test_greencondit_randomized(tri):
    res = greencondit_suite(tri, instances=50, seed=2)
    assert res.instances == 50 and res.value < 1e-8


def test_dirichlet_closed_form_constants():
    assert dirichlet_h(0j) == pytest.approx(0.25, abs=1e-15)
    e = 1e-5
    dx = (dirichlet_h(e + 0j) - dirichlet_h(-e + 0j)) / (2 * e)
    dy = (dirichlet_h(1j * e) - dirichlet_h(-1j * e)) / (2 * e)
    assert abs(dx - math.sqrt(2) / math.pi) < 1e-6
    assert abs(dy) < 1e-6


@pytest.mark.parametrize("z", [0.3 + 0.2j, -0.5 + 0.1j, 0.1 - 0.7j, 0.85 + 0.0j])
def test_dirichlet_closed_form_matches_poisson_integral(z):
    assert dirichlet_h(z) == pytest.approx(dirichlet_h_poisson(z), abs=1e-10)


def test_discrete_dirichlet_error_decreases(srw):
    errs = [dirichlet_htilde(n, srw).max_error() for n in (32, 64, 128)]
    assert errs[0] > errs[1] > errs[2]


def test_poisson_kernel_examples():
    th = np.linspace(0, 2 * math.pi, 4001)[:-1]
    assert np.allclose(poisson_kernel(0j, th), 1.0)
    assert poisson_kernel(0.5 + 0j, 0.0) == pytest.approx(3.0)
    z = 0.4 - 0.3j
    assert np.mean(poisson_kernel(z, th)) == pytest.approx(1.0, abs=1e-6)


def test_green_table_cache_round_trip(tmp_path, srw, tri):
    t = green(Ball(5), srw)
    path = save_green_table(t, tmp_path / "b5.bin")
    back = load_green_table(path, srw)
    assert np.array_equal(back.G, t.G)
    assert back((1, 0), (0, 1)) == t((1, 0), (0, 1))
    with pytest.raises(ValueError):
        load_green_table(path, tri)
