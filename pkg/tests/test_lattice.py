import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lerwkit.lattice import (BadGeneratorOrientation, NonGeneratingSet, NotPositiveDefinite,
                             WeightOutOfRange, WeightSumExceedsOne, covariance, normalizing_transform,
                             sample_step, spec_from_json, spec_to_json, validate_spec)


def test_srw_is_valid_with_no_hold(srw):
    assert srw.hold == 0
    assert float(srw.step_probs.sum()) == pytest.approx(1.0, abs=1e-15)


def test_rank_one_generator_set_rejected():
    with pytest.raises(NonGeneratingSet):
        validate_spec([(1, 0)], [Fraction(1, 2)])


def test_weight_sum_over_one_rejected():
    with pytest.raises(WeightSumExceedsOne):
        validate_spec([(1, 0), (0, 1)], [0.6, 0.6])


def test_orientation_and_range_rejected():
    with pytest.raises(BadGeneratorOrientation):
        validate_spec([(-1, 0), (0, 1)], [0.5, 0.5])
    with pytest.raises(WeightOutOfRange):
        validate_spec([(1, 0), (0, 1)], [0.0, 0.5])


def test_validation_is_permutation_invariant():
    a = validate_spec([(1, 0), (0, 1), (1, 1)], [Fraction(1, 3)] * 3)
    b = validate_spec([(1, 1), (1, 0), (0, 1)], [Fraction(1, 3)] * 3)
    assert a.fingerprint == b.fingerprint
    np.testing.assert_allclose(covariance(a), covariance(b), atol=1e-15)


def test_covariance_examples(srw, lazy):
    np.testing.assert_allclose(covariance(srw), 0.5 * np.eye(2), atol=1e-15)
    np.testing.assert_allclose(covariance(lazy), 0.25 * np.eye(2), atol=1e-15)


def test_covariance_matches_direct_sum(tri):
    direct = sum(p * np.outer(x, x) for x, p in zip(tri.steps @ tri.basis.T, tri.step_probs))
    np.testing.assert_allclose(covariance(tri), direct, atol=1e-14)
    g = covariance(tri)
    assert np.allclose(g, g.T)


def test_normalizing_transform_examples():
    np.testing.assert_allclose(normalizing_transform(np.eye(2)).A, np.eye(2), atol=1e-14)
    np.testing.assert_allclose(normalizing_transform(0.5 * np.eye(2)).A, np.eye(2) / np.sqrt(2), atol=1e-14)
    gamma = np.array([[0.5, 0.1], [0.1, 0.3]])
    norm = normalizing_transform(gamma)
    # independent oracle: eigendecomposition reconstruction
    w, v = np.linalg.eigh(gamma)
    np.testing.assert_allclose(norm.A, v @ np.diag(np.sqrt(w)) @ v.T, atol=1e-12)
    np.testing.assert_allclose(norm.A @ norm.A, gamma, atol=1e-12)
    with pytest.raises(NotPositiveDefinite):
        normalizing_transform(np.array([[1.0, 2.0], [2.0, 1.0]]))


@pytest.mark.parametrize("name", ["srw", "lazy", "tri"])
def test_normalized_steps_have_identity_covariance(name, request):
    spec = request.getfixturevalue(name)
    x = spec.embed(spec.steps)
    cov = (spec.step_probs[:, None, None] * np.einsum("ki,kj->kij", x, x)).sum(0)
    np.testing.assert_allclose(cov, np.eye(2), atol=1e-10)
    renorm = normalizing_transform(cov)
    np.testing.assert_allclose(renorm.A, np.eye(2), atol=1e-10)


def test_sample_step_is_reproducible(srw):
    a = [tuple(sample_step(srw, r)) for r in [np.random.default_rng(7)] for _ in range(50)]
    b = [tuple(sample_step(srw, r)) for r in [np.random.default_rng(7)] for _ in range(50)]
    assert a == b


def _frequencies(spec, draws, seed=3):
    rng = np.random.default_rng(seed)
    steps = np.array([sample_step(spec, rng) for _ in range(draws)])
    keys, counts = np.unique(steps, axis=0, return_counts=True)
    return {tuple(k): c / draws for k, c in zip(keys.tolist(), counts)}


def test_sample_step_frequencies(srw, lazy):
    n = 200_000
    f = _frequencies(srw, n)
    assert set(f) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    sigma = np.sqrt(0.25 * 0.75 / n)
    assert all(abs(v - 0.25) < 4 * sigma for v in f.values())
    g = _frequencies(lazy, n)
    assert abs(g[(0, 0)] - 0.5) < 4 * np.sqrt(0.25 / n)


def test_json_round_trip_is_exact(tri):
    text = spec_to_json(tri)
    back = spec_from_json(text)
    assert back.weights == tri.weights
    assert back.fingerprint == tri.fingerprint
    assert json.loads(text)["weights"][0] == {"num": 1, "den": 3}


weights = st.integers(1, 20)


@settings(max_examples=40, deadline=None)
@given(a=weights, b=weights, c=weights, extra=st.integers(0, 20))
def test_step_law_sums_to_one(a, b, c, extra):
    total = a + b + c + extra
    spec = validate_spec([(1, 0), (0, 1), (1, 1)], [Fraction(a, total), Fraction(b, total), Fraction(c, total)])
    assert float(spec.step_probs.sum()) == pytest.approx(1.0, abs=1e-12)
    assert spec.hold == Fraction(extra, total)
    cov = covariance(spec)
    np.testing.assert_allclose(cov, cov.T, atol=1e-15)
