"""Hand-rolled MLP: forward shapes, activations, gradients, data sampling."""
import math

import numpy as np
import pytest

from newton_muon.mlp import (
    ACTIVATIONS,
    MAX_LAYERS,
    MlpSpec,
    forward,
    forward_backward,
    init_params,
    input_scales,
    loss_and_grad_output,
    numeric_gradient,
    sample_batch,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec(widths=(4,))
    with pytest.raises(ValueError):
        MlpSpec(widths=(4, 0, 3))
    with pytest.raises(ValueError):
        MlpSpec(widths=tuple([4] * (MAX_LAYERS + 2)))
    with pytest.raises(ValueError):
        MlpSpec(widths=(4, 3), activation="swish")
    with pytest.raises(ValueError):
        MlpSpec(widths=(4, 3), loss="hinge")
    with pytest.raises(ValueError):
        MlpSpec(widths=(4, 3), data="laplace")
    spec = MlpSpec(widths=(4, 5, 3))
    assert spec.n_layers == 2


def test_init_param_shapes_and_scale():
    spec = MlpSpec(widths=(64, 32, 10))
    params = init_params(spec, np.random.default_rng(0))
    assert [W.shape for W in params] == [(32, 64), (10, 32)]
    # 1/sqrt(fan_in) scaling keeps layer outputs near unit variance
    assert np.std(params[0]) == pytest.approx(1 / math.sqrt(64), rel=0.1)


def test_forward_captures_layer_inputs():
    spec = MlpSpec(widths=(5, 7, 3), activation="relu", residual=False)
    rng = np.random.default_rng(1)
    params = init_params(spec, rng)
    X = rng.standard_normal((5, 11))
    H, zs = forward(spec, params, X)
    assert H.shape == (3, 11)
    assert len(zs) == 2
    np.testing.assert_array_equal(zs[0], X)
    np.testing.assert_allclose(zs[1], np.maximum(params[0] @ X, 0.0), atol=1e-13)
    # final layer is linear
    np.testing.assert_allclose(H, params[1] @ zs[1], atol=1e-13)


def test_residual_applies_only_on_square_hidden_layers():
    spec = MlpSpec(widths=(6, 6, 6), activation="tanh", residual=True)
    rng = np.random.default_rng(2)
    params = init_params(spec, rng)
    X = rng.standard_normal((6, 4))
    H, zs = forward(spec, params, X)
    np.testing.assert_allclose(zs[1], np.tanh(params[0] @ X) + X, atol=1e-13)
    # final layer stays linear even when square
    np.testing.assert_allclose(H, params[1] @ zs[1], atol=1e-13)


def test_gelu_tanh_approximation_values():
    spec = MlpSpec(widths=(1, 1), activation="gelu")
    rng = np.random.default_rng(3)
    x = np.linspace(-3, 3, 41)
    from newton_muon.mlp import _act

    val, _ = _act("gelu", x)
    ref = 0.5 * x * (1 + np.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))
    np.testing.assert_allclose(val, ref, atol=1e-13)
    assert _act("gelu", np.zeros(1))[0][0] == 0.0


def test_activation_derivatives_match_finite_differences():
    from newton_muon.mlp import _act

    x = np.linspace(-2.5, 2.5, 31) + 0.013  # avoid the relu kink
    h = 1e-6
    for name in ACTIVATIONS:
        _, deriv = _act(name, x)
        fd = (_act(name, x + h)[0] - _act(name, x - h)[0]) / (2 * h)
        np.testing.assert_allclose(deriv, fd, atol=1e-8)


def test_loss_values_and_gradients():
    rng = np.random.default_rng(4)
    H = rng.standard_normal((4, 6))
    Y = rng.standard_normal((4, 6))
    loss, dH = loss_and_grad_output("mse", H, Y)
    assert loss == pytest.approx(0.5 * np.sum((H - Y) ** 2) / 6)
    np.testing.assert_allclose(dH, (H - Y) / 6, atol=1e-13)
    labels = np.zeros((4, 6))
    labels[rng.integers(0, 4, 6), np.arange(6)] = 1.0
    loss_ce, dH_ce = loss_and_grad_output("cross-entropy", H, labels)
    P = np.exp(H - H.max(axis=0)) / np.exp(H - H.max(axis=0)).sum(axis=0)
    assert loss_ce == pytest.approx(-np.mean(np.log(P[labels.astype(bool)])))
    np.testing.assert_allclose(dH_ce, (P - labels) / 6, atol=1e-12)


@pytest.mark.parametrize("activation", ACTIVATIONS)
@pytest.mark.parametrize("loss", ["mse", "cross-entropy"])
def test_backprop_matches_numeric_gradient(activation, loss):
    spec = MlpSpec(
        widths=(4, 4, 3), activation=activation, residual=True, loss=loss
    )
    rng = np.random.default_rng(5)
    params = init_params(spec, rng)
    teacher = init_params(spec, rng)
    X, Y = sample_batch(spec, teacher, 6, rng)
    _, grads, zs = forward_backward(spec, params, X, Y)
    assert len(zs) == spec.n_layers
    for layer in range(spec.n_layers):
        ref = numeric_gradient(spec, params, X, Y, layer)
        np.testing.assert_allclose(grads[layer], ref, atol=1e-7)


def test_input_scales_by_data_kind():
    iso = MlpSpec(widths=(6, 3), data="isotropic")
    np.testing.assert_array_equal(input_scales(iso), np.ones(6))
    spiked = MlpSpec(widths=(6, 3), data="spiked", data_kappa=49.0)
    s = input_scales(spiked)
    assert s[0] == pytest.approx(7.0)
    np.testing.assert_array_equal(s[1:], np.ones(5))
    stretched = MlpSpec(widths=(6, 3), data="stretched", data_p=0.3)
    s2 = input_scales(stretched)
    assert s2[0] == pytest.approx(1.0)
    assert np.all(np.diff(s2) < 0)


def test_sample_batch_targets():
    rng = np.random.default_rng(6)
    spec = MlpSpec(widths=(5, 4, 3), loss="cross-entropy")
    teacher = init_params(spec, rng)
    X, Y = sample_batch(spec, teacher, 50, rng)
    assert X.shape == (5, 50) and Y.shape == (3, 50)
    np.testing.assert_array_equal(Y.sum(axis=0), np.ones(50))  # one-hot
    logits, _ = forward(spec, teacher, X)
    np.testing.assert_array_equal(np.argmax(Y, axis=0), np.argmax(logits, axis=0))

    spec_mse = MlpSpec(widths=(5, 4, 3), loss="mse")
    X2, Y2 = sample_batch(spec_mse, teacher, 20, rng)
    ref, _ = forward(spec_mse, teacher, X2)
    np.testing.assert_allclose(Y2, ref, atol=1e-13)


def test_spiked_batch_has_spiked_first_row():
    rng = np.random.default_rng(7)
    spec = MlpSpec(widths=(6, 3), data="spiked", data_kappa=64.0)
    teacher = init_params(spec, rng)
    X, _ = sample_batch(spec, teacher, 4000, rng)
    assert np.var(X[0]) == pytest.approx(64.0, rel=0.2)
    assert np.var(X[1]) == pytest.approx(1.0, rel=0.2)
