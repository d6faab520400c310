import math

import numpy as np
import pytest

import oracles
from hsiclass.encoding import (
    EmConfig,
    GmmModel,
    SingularFitError,
    encode,
    fisher_encode,
    fit_gmm,
    l2_normalize,
    power_normalize,
)


def test_single_component_closed_form(rng):
    x = rng.normal(size=(200, 3)) * [1.0, 0.5, 0.001] + [1, -2, 3]
    gmm = fit_gmm(x, EmConfig(k=1))
    np.testing.assert_allclose(gmm.weights, [1.0])
    np.testing.assert_allclose(gmm.means[0], x.mean(axis=0), atol=1e-12)
    expected_var = np.maximum(x.var(axis=0), 1e-4)
    np.testing.assert_allclose(gmm.variances[0], expected_var, rtol=1e-9)
    assert gmm.variances[0, 2] == 1e-4  # floored


def test_two_separated_clusters(rng):
    x = np.vstack([rng.normal(0, 0.5, (500, 2)), rng.normal(10, 0.5, (500, 2))])
    gmm = fit_gmm(x, EmConfig(k=2, seed=1))
    order = np.argsort(gmm.means[:, 0])
    np.testing.assert_allclose(gmm.means[order], [[0, 0], [10, 10]], atol=0.15)
    np.testing.assert_allclose(gmm.weights, 0.5, atol=0.05)


def test_em_history_non_decreasing(rng):
    x = rng.random((300, 4))
    gmm = fit_gmm(x, EmConfig(k=5, rel_tol=1e-9, max_iters=60))
    h = np.array(gmm.history)
    assert len(h) > 3
    assert np.all(np.diff(h) >= -1e-8)
    assert abs(h[-1] - gmm.mean_log_likelihood(x)) < 1e-9


def test_fit_is_deterministic(rng):
    x = rng.random((120, 3))
    a = fit_gmm(x, EmConfig(k=3, seed=4))
    b = fit_gmm(x, EmConfig(k=3, seed=4))
    for f in ("weights", "means", "variances"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_gmm(np.zeros((3, 2)), EmConfig(k=4))
    with pytest.raises(SingularFitError):
        fit_gmm(np.ones((10, 2)), EmConfig(k=2))
    with pytest.raises(ValueError):
        EmConfig(k=0)


def test_duplicate_points_leave_weights_valid(rng):
    x = np.vstack([np.zeros((50, 2)), np.ones((50, 2))])
    gmm = fit_gmm(x, EmConfig(k=4))
    assert abs(gmm.weights.sum() - 1.0) < 1e-12
    assert np.all(gmm.variances >= 1e-4)
    assert np.all(np.isfinite(fisher_encode(x, gmm)))


def test_fv_at_the_mean():
    mu = np.array([[0.3, -1.0, 2.0]])
    gmm = GmmModel(np.array([1.0]), mu, np.array([[0.5, 2.0, 1.0]]))
    fv = fisher_encode(np.repeat(mu, 7, axis=0), gmm)
    np.testing.assert_allclose(fv[:3], 0.0, atol=1e-15)
    np.testing.assert_allclose(fv[3:], -1 / math.sqrt(2), atol=1e-12)


def test_fv_empty_input_length():
    gmm = GmmModel(np.full(100, 0.01), np.zeros((100, 128)), np.ones((100, 128)))
    fv = fisher_encode(np.zeros((0, 128)), gmm)
    assert fv.shape == (25600,) and not fv.any()
    assert encode(np.zeros((0, 128)), gmm).shape == (25600,)


def test_fv_matches_naive_oracle(rng):
    x = rng.normal(size=(5, 3))
    gmm = GmmModel(np.array([0.3, 0.7]), rng.normal(size=(2, 3)), rng.uniform(0.5, 2.0, (2, 3)))
    expected, gamma = oracles.fisher_vector(x, gmm.weights, gmm.means, gmm.variances)
    np.testing.assert_allclose(gmm.posteriors(x), gamma, atol=1e-12)
    np.testing.assert_allclose(fisher_encode(x, gmm), expected, atol=1e-12)


def test_fv_permutation_invariant(rng):
    x = rng.normal(size=(40, 3))
    gmm = fit_gmm(x, EmConfig(k=3))
    a = fisher_encode(x, gmm)
    b = fisher_encode(x[rng.permutation(40)], gmm)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_fv_dead_component_is_zeroed(rng):
    gmm = GmmModel(np.array([1.0, 0.0]), np.zeros((2, 2)), np.ones((2, 2)))
    fv = fisher_encode(rng.normal(size=(6, 2)), gmm)
    assert np.all(np.isfinite(fv))
    assert not fv[2:4].any() and not fv[6:8].any()


def test_fv_dim_mismatch():
    gmm = GmmModel(np.array([1.0]), np.zeros((1, 2)), np.ones((1, 2)))
    with pytest.raises(ValueError):
        fisher_encode(np.zeros((3, 5)), gmm)


def test_l2_examples(rng):
    np.testing.assert_allclose(l2_normalize(np.array([3.0, 4.0])), [0.6, 0.8])
    assert not l2_normalize(np.zeros(4)).any()
    v = rng.normal(size=50)
    assert abs(np.linalg.norm(l2_normalize(v)) - 1.0) < 1e-9
    with pytest.raises(ValueError):
        l2_normalize(np.array([1.0, np.nan]))


def test_power_normalisation_keeps_sign():
    np.testing.assert_allclose(power_normalize(np.array([-4.0, 0.0, 9.0])), [-2.0, 0.0, 3.0])


def test_model_save_load(tmp_path, rng):
    gmm = fit_gmm(rng.random((50, 3)), EmConfig(k=2))
    gmm.save(tmp_path / "g.model")
    back = GmmModel.load(tmp_path / "g.model")
    assert (back.k, back.dim) == (2, 3)
    np.testing.assert_allclose(back.means, gmm.means, rtol=1e-6)
    np.testing.assert_allclose(back.variances, gmm.variances, rtol=1e-6)
    assert abs(back.weights.sum() - 1.0) < 1e-12
