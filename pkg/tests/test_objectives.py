"""
Loss value and gradient tests for the one-class, PU and regression objectives.
"""

import numpy as np
import pytest
from scipy.special import expit

from src.learning.objectives import (PuConfig, SvddState, hypersphere_discriminant, loss_nnpu, loss_ours_pu,
                                     loss_regression, loss_soft_svdd, loss_svdd, weight_decay_term)
from src.utils.errors import ConfigError

EPS = 1e-6


def numeric_gradient(fn, x):
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += EPS
        down[idx] -= EPS
        grad[idx] = (fn(up) - fn(down)) / (2.0 * EPS)
    return grad


def relative_error(analytic, numeric, floor=1e-4):
    analytic, numeric = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)))


def test_svdd_embeddings_at_center_leave_only_weight_decay():
    svdd = SvddState(np.array([1.0, -1.0]))
    params = {'embed.W': np.full((2, 2), 2.0), 'embed.b': np.ones(2)}
    result = loss_svdd(np.tile(svdd.center, (4, 1)), svdd, weight_decay=0.1, params=params)
    assert result.value == pytest.approx(0.5 * 0.1 * 16.0)
    assert set(result.d_params) == {'embed.W'}


def test_svdd_unit_distance():
    assert loss_svdd(np.array([[1.0, 0.0]]), SvddState(np.zeros(2))).value == pytest.approx(1.0)


def test_svdd_matches_scalar_recomputation():
    rng = np.random.default_rng(0)
    emb, center = rng.normal(size=(7, 3)), rng.normal(size=3)
    expected = sum(float(np.sum((e - center) ** 2)) for e in emb) / len(emb)
    assert loss_svdd(emb, SvddState(center)).value == pytest.approx(expected, abs=1e-12)


def test_soft_svdd_active_hinge():
    result = loss_soft_svdd(np.array([[1.0, 1.0]]), SvddState(np.zeros(2), radius=1.0, nu=1.0))
    assert result.value == pytest.approx(2.0)


def test_soft_svdd_all_inside_pushes_radius_down():
    svdd = SvddState(np.zeros(2), radius=2.0, nu=0.5)
    result = loss_soft_svdd(np.array([[0.5, 0.0], [0.0, -1.0]]), svdd)
    assert result.value == pytest.approx(4.0)
    assert result.d_radius == pytest.approx(4.0)
    assert np.all(result.d_embeddings == 0.0)
    assert result.terms['inside_fraction'] == 1.0


def test_soft_svdd_mixed_batch_matches_scalar_recomputation():
    rng = np.random.default_rng(1)
    emb = rng.normal(size=(9, 2))
    svdd = SvddState(np.zeros(2), radius=1.0, nu=0.3)
    hinge = sum(max(0.0, float(np.sum(e ** 2)) - 1.0) for e in emb)
    assert loss_soft_svdd(emb, svdd).value == pytest.approx(1.0 + hinge / (0.3 * 9), abs=1e-12)


def test_soft_svdd_gradients():
    rng = np.random.default_rng(2)
    emb = rng.normal(size=(6, 3))
    svdd = SvddState(np.zeros(3), radius=1.1, nu=0.4)
    result = loss_soft_svdd(emb, svdd)
    numeric = numeric_gradient(lambda e: loss_soft_svdd(e, svdd).value, emb)
    assert np.allclose(result.d_embeddings, numeric, atol=1e-6)
    d_r = numeric_gradient(lambda r: loss_soft_svdd(emb, SvddState(np.zeros(3), float(r[0]), 0.4)).value, [1.1])
    assert result.d_radius == pytest.approx(d_r[0], abs=1e-6)


def test_svdd_learnable_center_gradient():
    rng = np.random.default_rng(3)
    emb = rng.normal(size=(5, 2))
    center = np.array([0.3, -0.1])
    result = loss_svdd(emb, SvddState(center, learnable_center=True))
    numeric = numeric_gradient(lambda c: loss_svdd(emb, SvddState(c)).value, center)
    assert np.allclose(result.d_center, numeric, atol=1e-6)


def test_nnpu_limiting_batch():
    pu = PuConfig(class_prior=0.5)
    result = loss_nnpu(np.full(4, 50.0), np.array([50.0, 50.0, 0.0, 0.0]), pu)
    assert result.value == pytest.approx(0.25, abs=1e-9)
    assert result.terms['clamped'] == 0.0


def test_nnpu_clamp():
    logits_p, logits_u = np.full(4, 50.0), np.full(4, -50.0)
    off = loss_nnpu(logits_p, logits_u, PuConfig(0.5, non_negative_correction=False))
    on = loss_nnpu(logits_p, logits_u, PuConfig(0.5))
    assert off.terms['negative_risk'] == pytest.approx(-0.5)
    assert off.value == pytest.approx(-0.5)
    assert on.terms['negative_risk'] == 0.0
    assert on.terms['raw_negative_risk'] == pytest.approx(-0.5)
    assert on.value == pytest.approx(on.terms['positive_risk'])


def test_nnpu_gradients_without_correction():
    rng = np.random.default_rng(4)
    logits_p, logits_u = rng.normal(size=5), rng.normal(size=8)
    pu = PuConfig(0.4, non_negative_correction=False)
    result = loss_nnpu(logits_p, logits_u, pu)
    assert np.allclose(result.d_embeddings, numeric_gradient(lambda z: loss_nnpu(z, logits_u, pu).value, logits_p),
                       atol=1e-7)
    assert np.allclose(result.d_unlabeled, numeric_gradient(lambda z: loss_nnpu(logits_p, z, pu).value, logits_u),
                       atol=1e-7)


def test_clamped_gradient_raises_negative_risk():
    logits_p, logits_u = np.full(3, 2.0), np.full(5, -3.0)
    pu = PuConfig(0.5)
    result = loss_nnpu(logits_p, logits_u, pu)
    assert result.terms['clamped'] == 1.0

    def raw_negative(z):
        return loss_nnpu(logits_p, z, pu).terms['raw_negative_risk']

    assert np.allclose(result.d_unlabeled, -numeric_gradient(raw_negative, logits_u), atol=1e-7)


def test_hypersphere_pu_with_identical_batches_is_two_sided_loss():
    rng = np.random.default_rng(5)
    emb = rng.normal(scale=0.5, size=(6, 2))
    svdd = SvddState(np.zeros(2), radius=0.8)
    g = hypersphere_discriminant(emb, svdd)
    result = loss_ours_pu(emb, emb.copy(), svdd, PuConfig(0.5))
    expected = 0.5 * np.mean(expit(-g)) + 0.5 * np.mean(expit(g))
    assert result.value == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("prior", [0.3, 0.5, 0.7])
def test_hypersphere_pu_degenerate_sphere(prior):
    svdd = SvddState(np.zeros(3), radius=0.0)
    result = loss_ours_pu(np.zeros((4, 3)), np.zeros((6, 3)), svdd, PuConfig(prior))
    assert result.value == pytest.approx(prior * 0.5 + max(0.0, 0.5 - prior * 0.5))


def test_hypersphere_pu_gradients():
    rng = np.random.default_rng(6)
    emb_p, emb_u = rng.normal(size=(4, 3)), rng.normal(size=(7, 3))
    center = rng.normal(scale=0.1, size=3)
    pu = PuConfig(0.4, non_negative_correction=False)

    def value(p=emb_p, u=emb_u, radius=1.2):
        return loss_ours_pu(p, u, SvddState(center, radius), pu).value

    result = loss_ours_pu(emb_p, emb_u, SvddState(center, 1.2), pu)
    assert np.allclose(result.d_embeddings, numeric_gradient(lambda p: value(p=p), emb_p), atol=1e-6)
    assert np.allclose(result.d_unlabeled, numeric_gradient(lambda u: value(u=u), emb_u), atol=1e-6)
    assert result.d_radius == pytest.approx(numeric_gradient(lambda r: value(radius=float(r[0])), [1.2])[0],
                                            abs=1e-6)


def test_compactness_adds_the_mean_squared_distance_of_positives():
    rng = np.random.default_rng(8)
    emb_p, emb_u = rng.normal(size=(5, 3)), rng.normal(size=(6, 3))
    svdd = SvddState(np.zeros(3), radius=1.0)
    plain = loss_ours_pu(emb_p, emb_u, svdd, PuConfig(0.5))
    compact = loss_ours_pu(emb_p, emb_u, svdd, PuConfig(0.5), compactness=2.0)
    expected = 2.0 * np.mean(np.sum(emb_p ** 2, axis=1))
    assert compact.value - plain.value == pytest.approx(expected, abs=1e-12)
    assert compact.terms['compactness'] == pytest.approx(expected, abs=1e-12)
    assert np.allclose(compact.d_embeddings - plain.d_embeddings, 4.0 * emb_p / 5)
    assert np.array_equal(compact.d_unlabeled, plain.d_unlabeled)


def test_negative_compactness_is_rejected():
    with pytest.raises(ConfigError):
        loss_ours_pu(np.zeros((2, 2)), np.zeros((2, 2)), SvddState(np.zeros(2)), PuConfig(0.5), compactness=-0.1)


def _random_batch(rng, n_max=10, dim_max=5):
    dim = int(rng.integers(2, dim_max + 1))
    return rng.normal(size=(int(rng.integers(1, n_max + 1)), dim)), dim


@pytest.mark.parametrize("seed", range(100))
def test_one_class_gradients_on_random_batches(seed):
    rng = np.random.default_rng(seed)
    emb, dim = _random_batch(rng)
    center = rng.normal(scale=0.5, size=dim)
    radius, nu = float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.05, 1.0))

    hard = loss_svdd(emb, SvddState(center, learnable_center=True))
    assert relative_error(hard.d_embeddings, numeric_gradient(lambda e: loss_svdd(e, SvddState(center)).value,
                                                                emb)) < 1e-4
    assert relative_error(hard.d_center, numeric_gradient(lambda c: loss_svdd(emb, SvddState(c)).value,
                                                            center)) < 1e-4

    def soft(e=emb, r=radius):
        return loss_soft_svdd(e, SvddState(center, r, nu)).value

    result = loss_soft_svdd(emb, SvddState(center, radius, nu))
    assert relative_error(result.d_embeddings, numeric_gradient(lambda e: soft(e=e), emb)) < 1e-4
    assert relative_error(result.d_radius, numeric_gradient(lambda r: soft(r=float(r[0])), [radius])[0]) < 1e-4


@pytest.mark.parametrize("seed", range(100))
def test_pu_gradients_on_random_batches(seed):
    rng = np.random.default_rng(seed)
    pu = PuConfig(float(rng.uniform(0.1, 0.9)), non_negative_correction=False)
    logits_p = rng.normal(scale=2.0, size=int(rng.integers(1, 11)))
    logits_u = rng.normal(scale=2.0, size=int(rng.integers(1, 11)))
    result = loss_nnpu(logits_p, logits_u, pu)
    assert relative_error(result.d_embeddings,
                          numeric_gradient(lambda z: loss_nnpu(z, logits_u, pu).value, logits_p)) < 1e-4
    assert relative_error(result.d_unlabeled,
                          numeric_gradient(lambda z: loss_nnpu(logits_p, z, pu).value, logits_u)) < 1e-4


@pytest.mark.parametrize("seed", range(100))
def test_hypersphere_pu_gradients_on_random_batches(seed):
    rng = np.random.default_rng(seed)
    emb_p, dim = _random_batch(rng)
    emb_u = rng.normal(size=(int(rng.integers(1, 11)), dim))
    center = rng.normal(scale=0.3, size=dim)
    radius, compactness = float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.0, 2.0))
    pu = PuConfig(float(rng.uniform(0.1, 0.9)), non_negative_correction=False)

    def value(p=emb_p, u=emb_u, r=radius):
        return loss_ours_pu(p, u, SvddState(center, r), pu, compactness=compactness).value

    result = loss_ours_pu(emb_p, emb_u, SvddState(center, radius), pu, compactness=compactness)
    assert relative_error(result.d_embeddings, numeric_gradient(lambda p: value(p=p), emb_p)) < 1e-4
    assert relative_error(result.d_unlabeled, numeric_gradient(lambda u: value(u=u), emb_u)) < 1e-4
    assert relative_error(result.d_radius, numeric_gradient(lambda r: value(r=float(r[0])), [radius])[0]) < 1e-4


@pytest.mark.parametrize("seed", range(100))
def test_regression_gradients_on_random_batches(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 11))
    pred, targets = rng.uniform(size=n), rng.uniform(size=n)
    mask = rng.uniform(size=n) < 0.7
    result = loss_regression(pred, targets, mask=mask)
    numeric = numeric_gradient(lambda p: loss_regression(p, targets, mask=mask).value, pred)
    assert relative_error(result.d_embeddings, numeric) < 1e-4


def test_weight_decay_gradient():
    params = {'point.0.W': np.array([[1.0, -2.0]]), 'point.0.b': np.array([3.0])}
    value, grads = weight_decay_term(params, 0.2)
    assert value == pytest.approx(0.5)
    assert np.allclose(grads['point.0.W'], [[0.2, -0.4]])


@pytest.mark.parametrize("pred,target,expected", [([0.3, 0.7], [0.3, 0.7], 0.0), ([0.5], [1.0], 0.25)])
def test_regression_examples(pred, target, expected):
    assert loss_regression(np.array(pred), np.array(target)).value == pytest.approx(expected)


def test_regression_mask_isolates_rows():
    pred = np.array([0.2, 0.4, 0.9])
    targets = np.array([0.0, np.nan, 0.5])
    result = loss_regression(pred, targets, mask=np.array([True, True, False]))
    assert result.value == pytest.approx(0.04)
    assert result.d_embeddings.tolist() == [pytest.approx(0.4), 0.0, 0.0]


def test_regression_with_no_targets_is_zero():
    result = loss_regression(np.array([0.1, 0.2]), np.array([np.nan, np.nan]))
    assert result.value == 0.0
    assert np.all(result.d_embeddings == 0.0)


def test_regression_matches_scalar_mse():
    rng = np.random.default_rng(7)
    pred, targets = rng.uniform(size=10), rng.uniform(size=10)
    expected = sum((p - t) ** 2 for p, t in zip(pred, targets)) / 10
    assert loss_regression(pred, targets).value == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("kwargs", [{'class_prior': 0.0}, {'class_prior': 1.0}, {'surrogate': 'hinge'}])
def test_pu_config_validation(kwargs):
    with pytest.raises(ConfigError):
        PuConfig(**kwargs)


def test_svdd_state_validation():
    with pytest.raises(ConfigError):
        SvddState(np.zeros(2), nu=0.0)
    with pytest.raises(ConfigError):
        SvddState(np.zeros(2), radius=-1.0)
