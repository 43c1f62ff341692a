"""
Encoder tests: pooling semantics, head outputs, hand-written gradients and checkpoints.
"""

import numpy as np
import pytest

from src.learning.encoder import (EncoderConfig, ModelState, backward, dense_backward, encode, flatten_params,
                                  forward, forward_heads, init_params, init_state, read_checkpoint,
                                  unflatten_params, write_checkpoint)
from src.learning.objectives import SvddState
from src.utils.errors import ConfigError, UsageError


def _identity_state():
    config = EncoderConfig(k=2, point_widths=(3,), embedding_dim=3, head_widths=(2,))
    params = {name: np.zeros_like(p) for name, p in init_params(config, 0).items()}
    params['point.0.W'] = np.eye(3)
    params['embed.W'] = np.eye(3)
    return ModelState(config, params)


def _finite_difference(state, patches, upstream, eps=1e-6):
    d_emb, d_logit, d_trav = upstream

    def objective(flat):
        trial = ModelState(state.config, unflatten_params(flat, state.params))
        out = forward(trial, patches)
        return float(np.sum(out.embeddings * d_emb) + np.sum(out.class_logit * d_logit)
                     + np.sum(out.trav_pred * d_trav))

    flat = flatten_params(state.params)
    grad = np.zeros_like(flat)
    for i in range(len(flat)):
        step = np.zeros_like(flat)
        step[i] = eps
        grad[i] = (objective(flat + step) - objective(flat - step)) / (2.0 * eps)
    return grad


def relative_error(analytic, numeric, floor=1e-4):
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)))


def test_identity_network_pools_coordinatewise_max():
    state = _identity_state()
    assert encode(np.array([[1.0, 0.0, 0.0], [0.0, 2.0, -1.0]]), state).tolist() == [1.0, 2.0, 0.0]


def test_embedding_is_permutation_invariant(tiny_state):
    rng = np.random.default_rng(0)
    patch = rng.normal(size=(6, 3))
    assert np.array_equal(encode(patch, tiny_state), encode(patch[rng.permutation(6)], tiny_state))


def test_duplicate_points_do_not_change_the_embedding(tiny_state):
    rng = np.random.default_rng(1)
    base = rng.normal(size=(5, 3))
    a = np.vstack([base, base[:1]])
    b = np.vstack([base, base[1:2]])
    assert np.array_equal(encode(a, tiny_state), encode(b, tiny_state))


def test_zero_network_outputs(tiny_config):
    params = {name: np.zeros_like(p) for name, p in init_params(tiny_config, 0).items()}
    out = forward(ModelState(tiny_config, params), np.ones((4, 6, 3)))
    assert np.all(out.embeddings == 0.0)
    assert np.all(out.class_logit == 0.0)
    assert np.all(out.trav_pred == 0.5)


def test_forward_heads_matches_forward(tiny_state):
    patch = np.random.default_rng(2).normal(size=(6, 3))
    out = forward(tiny_state, patch)
    heads = forward_heads(out.embeddings[0], tiny_state)
    assert heads['class_logit'] == pytest.approx(out.class_logit[0])
    assert heads['trav_pred'] == pytest.approx(out.trav_pred[0])
    assert 0.0 <= heads['trav_pred'] <= 1.0


def test_parameter_names_and_bias_option():
    names = init_state(EncoderConfig(k=4, point_widths=(4, 5), embedding_dim=2, head_widths=(3,)), 0).parameter_names()
    assert names[:5] == ['point.0.W', 'point.0.b', 'point.1.W', 'point.1.b', 'embed.W']
    assert 'embed.b' not in names
    with_bias = init_params(EncoderConfig(k=4, embedding_dim=2, final_layer_bias=True), 0)
    assert with_bias['embed.b'].shape == (2,)


@pytest.mark.parametrize("final_layer_bias", [False, True])
def test_backward_matches_finite_differences(final_layer_bias):
    config = EncoderConfig(k=5, point_widths=(6, 4), embedding_dim=3, head_widths=(4,),
                           final_layer_bias=final_layer_bias)
    state = init_state(config, seed=11)
    rng = np.random.default_rng(5)
    patches = rng.normal(size=(3, 5, 3))
    upstream = (rng.normal(size=(3, 3)), rng.normal(size=3), rng.normal(size=3))
    out = forward(state, patches, record=True)
    grads = backward(state, out.tape, *upstream)
    analytic = flatten_params(grads)
    numeric = _finite_difference(state, patches, upstream)
    assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("seed", range(100))
def test_backward_matches_finite_differences_on_random_networks(seed):
    rng = np.random.default_rng(seed)
    config = EncoderConfig(k=int(rng.integers(1, 7)),
                           point_widths=tuple(int(w) for w in rng.integers(2, 7, size=rng.integers(1, 3))),
                           embedding_dim=int(rng.integers(2, 5)),
                           head_widths=tuple(int(w) for w in rng.integers(2, 5, size=rng.integers(1, 3))),
                           final_layer_bias=bool(rng.integers(2)))
    state = init_state(config, seed=seed)
    n = int(rng.integers(1, 4))
    patches = rng.normal(size=(n, config.k, 3))
    upstream = (rng.normal(size=(n, config.embedding_dim)), rng.normal(size=n), rng.normal(size=n))
    out = forward(state, patches, record=True)
    analytic = flatten_params(backward(state, out.tape, *upstream))
    assert relative_error(analytic, _finite_difference(state, patches, upstream)) < 1e-4


def test_zero_upstream_gradient_gives_zero_gradients(tiny_state):
    out = forward(tiny_state, np.random.default_rng(3).normal(size=(4, 6, 3)), record=True)
    grads = backward(tiny_state, out.tape)
    assert list(grads) == tiny_state.parameter_names()
    assert all(np.all(g == 0.0) for g in grads.values())


def test_linear_layer_gradient_of_squared_error():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(1, 3))
    W = rng.normal(size=(3, 2))
    y = rng.normal(size=(1, 2))
    _, dW, _ = dense_backward(2.0 * (x @ W - y), x, W)
    assert np.allclose(dW, 2.0 * x.T @ (x @ W - y))


def test_backward_without_tape(tiny_state):
    out = forward(tiny_state, np.zeros((1, 6, 3)))
    assert out.tape is None
    with pytest.raises(UsageError):
        backward(tiny_state, out.tape)


@pytest.mark.parametrize("patch", [np.zeros((5, 3)), np.zeros((6, 2)), np.full((6, 3), np.nan)])
def test_bad_patches_are_rejected(tiny_state, patch):
    with pytest.raises(ConfigError):
        forward(tiny_state, patch)


def test_unflatten_checks_length(tiny_state):
    flat = flatten_params(tiny_state.params)
    with pytest.raises(ConfigError):
        unflatten_params(flat[:-1], tiny_state.params)


def test_checkpoint_round_trip(tmp_path, tiny_state):
    tiny_state.method = 'ours'
    tiny_state.svdd = SvddState(np.array([0.1, -0.2, 0.3]), radius=0.7, nu=0.05)
    path = tmp_path / "model.ckpt"
    write_checkpoint(path, tiny_state)
    loaded = read_checkpoint(path)
    assert loaded.config == tiny_state.config
    assert (loaded.method, loaded.seed) == ('ours', 3)
    assert all(np.array_equal(loaded.params[n], tiny_state.params[n]) for n in tiny_state.params)
    assert np.array_equal(loaded.svdd.center, tiny_state.svdd.center)
    assert loaded.svdd.radius == 0.7
    patch = np.random.default_rng(6).normal(size=(6, 3))
    assert np.array_equal(encode(patch, loaded), encode(patch, tiny_state))


def test_checkpoint_rejects_other_files(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_text("hello\n")
    with pytest.raises(ConfigError):
        read_checkpoint(path)
