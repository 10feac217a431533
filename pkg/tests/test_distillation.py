import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from evadkit.distillation import KDConfig, kd_binary, kd_multiclass, kd_total, softmax, standardize_logits


def test_binary_identity():
    loss, grad = kd_binary([0.3, 0.9], [0.3, 0.9])
    assert loss == 0 and np.all(grad == 0)


def test_binary_max_disagreement():
    assert kd_binary([0, 1], [1, 0])[0] == 1.0


def test_binary_single_frame():
    loss, grad = kd_binary([0.7], [0.2])
    assert loss == pytest.approx(0.25, rel=1e-6)
    assert grad[0] == pytest.approx(1.0, rel=1e-6)


def test_standardize_row():
    out = standardize_logits([[1.0, 2.0, 3.0]])
    assert out[0] == pytest.approx([-1.224744871391589, 0.0, 1.224744871391589], rel=1e-6)


def test_standardize_constant_row_is_zero():
    assert standardize_logits([[5.0, 5.0]]).tolist() == [[0.0, 0.0]]


@given(arrays(np.float64, (3, 4), elements=st.floats(-50, 50)), st.floats(0.1, 10), st.floats(-5, 5))
def test_standardize_invariant_to_affine_rescaling(z, a, b):
    if np.any(min(a, 1.0) * z.std(axis=1) < 1e-2):
        return  # the eps guard dominates nearly constant rows
    assert standardize_logits(a * z + b) == pytest.approx(standardize_logits(z), abs=1e-5)


def test_multiclass_identity():
    z = np.array([[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]])
    loss, grad = kd_multiclass(z, z)
    assert loss == pytest.approx(0.0, abs=1e-15)
    assert np.abs(grad).max() < 1e-12


def test_multiclass_two_class_example():
    # standardised logits +-1, tempered gap 1, p_r = [0.7311, 0.2689], p_e reversed
    loss, _ = kd_multiclass([[0.0, 1.0]], [[1.0, 0.0]], KDConfig(tau=2.0))
    p = 1 / (1 + math.exp(-1))
    kl = p * math.log(p / (1 - p)) + (1 - p) * math.log((1 - p) / p)
    assert kl == pytest.approx(0.4621171572600098, rel=1e-9)
    assert loss == pytest.approx(4 * kl, rel=1e-6)
    assert loss == pytest.approx(1.8484686290400392, rel=1e-6)


def test_multiclass_teacher_scale_invariance():
    # exact as eps_std -> 0; the guard term perturbs the ninth digit
    z_e = np.array([[0.3, -0.1, 2.0]])
    z_r = np.array([[1.0, 0.0, -1.0]])
    assert kd_multiclass(z_e, z_r)[0] == pytest.approx(kd_multiclass(z_e, 7 * z_r + 3)[0], rel=1e-7)


def test_total_combination():
    assert kd_total(0.25, 1.8489, KDConfig(alpha=0.1, beta=9.0)) == pytest.approx(0.025 + 16.6401, rel=1e-9)
    assert kd_total(0.25, 1.8489, KDConfig(alpha=0.0, beta=0.0)) == 0.0
    assert kd_total(0.0, 0.0) == 0.0


def test_softmax_rows_sum_to_one():
    p = softmax(np.array([[1000.0, 0.0], [-3.0, 2.0]]))
    assert p.sum(axis=1) == pytest.approx([1, 1])


def _numeric_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(20))
def test_multiclass_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    T, K = rng.integers(1, 5), rng.integers(3, 7)
    z_e, z_r = rng.standard_normal((T, K)) * 2, rng.standard_normal((T, K)) * 2
    cfg = KDConfig(tau=float(rng.uniform(0.5, 4)))
    _, g = kd_multiclass(z_e, z_r, cfg)
    num = _numeric_grad(lambda z: kd_multiclass(z, z_r, cfg)[0], z_e)
    assert np.linalg.norm(g - num) <= 1e-4 * max(np.linalg.norm(num), 1e-8)


def test_two_class_gradient_vanishes():
    # two standardised logits are always -1, +1: the loss is flat in the raw logits
    rng = np.random.default_rng(0)
    z_e, z_r = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    _, g = kd_multiclass(z_e, z_r)
    assert np.abs(g).max() < 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_binary_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    a_e, a_r = rng.random(6), rng.random(6)
    _, g = kd_binary(a_e, a_r)
    num = _numeric_grad(lambda a: kd_binary(a, a_r)[0], a_e)
    assert np.linalg.norm(g - num) <= 1e-4 * np.linalg.norm(num)
