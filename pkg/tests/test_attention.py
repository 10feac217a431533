import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evadkit.attention import EDAConfig, apply_eda, eda_mass, eda_weights, normalize_timestamps, sequence_weights


@pytest.mark.parametrize("t, expected", [([0, 50, 100], [0, 0.5, 1]), ([7], [0]), ([10, 10, 10], [0, 0, 0])])
def test_normalize_timestamps(t, expected):
    assert normalize_timestamps(t).tolist() == expected


def test_two_tokens_equal_density():
    w = eda_weights([0.0, 1.0], [0.5, 0.5], lam=1.0, eps=0.0)
    assert w[0, 0] == pytest.approx(1 / (1 + math.exp(-2)), rel=1e-6)
    assert w[0, 0] == pytest.approx(0.8807970779778823, rel=1e-6)
    assert w[0, 1] == pytest.approx(0.11920292202211755, rel=1e-6)


def test_denser_token_attracts_more_weight():
    w = eda_weights([0.0, 1.0], [0.5, 1.0], lam=1.0, eps=0.0)
    assert w[0, 1] == pytest.approx(math.exp(-1) / (1 + math.exp(-1)), rel=1e-6)
    assert w[0, 1] == pytest.approx(0.2689414213699951, rel=1e-6)


def test_equal_timestamps_give_uniform_rows():
    eps = 1e-6
    w = eda_weights(np.zeros(4), np.array([0.1, 0.2, 0.3, 0.4]), EDAConfig(eps=eps))
    assert w == pytest.approx(np.full((4, 4), 1 / (4 + eps)), rel=1e-12)


def test_single_token_scales_by_one_over_one_plus_eps():
    x = np.array([[2.0, -4.0]])
    w = eda_weights([0.0], [1.0], EDAConfig(eps=1e-3))
    assert apply_eda(x, w) == pytest.approx(x / 1.001, rel=1e-12)


def test_large_lambda_approaches_identity():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 3))
    w = eda_weights(np.linspace(0, 1, 5), np.full(5, 0.2), lam=500.0, eps=1e-9)
    assert apply_eda(x, w) == pytest.approx(x, abs=1e-8)


def test_uniform_weights_average_rows():
    x = np.arange(12.0).reshape(4, 3)
    out = apply_eda(x, np.full((4, 4), 0.25))
    assert out == pytest.approx(np.tile(x.mean(axis=0), (4, 1)))


def test_residual_adds_input():
    x = np.eye(2)
    assert apply_eda(x, np.full((2, 2), 0.5), residual=True) == pytest.approx(x + 0.5)


def test_shape_errors():
    with pytest.raises(ValueError):
        eda_weights([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        apply_eda(np.zeros((3, 2)), np.zeros((2, 2)))


@given(st.lists(st.floats(0, 1), min_size=1, max_size=12), st.data())
def test_row_sums_bounded(ts, data):
    d = np.array(data.draw(st.lists(st.floats(0.001, 1), min_size=len(ts), max_size=len(ts))))
    d = d / d.sum()
    eps = 1e-6
    mass = eda_mass(ts, d, 1.0, eps)
    w = eda_weights(ts, d, EDAConfig(eps=eps))
    s = mass.sum(axis=1)
    assert w.sum(axis=1) == pytest.approx(s / (s + eps), rel=1e-12)
    assert np.all(np.abs(w.sum(axis=1) - 1) < eps * len(ts))


def test_sequence_weights_renormalise_densities():
    a = sequence_weights([0, 10, 20], [1.0, 2.0, 1.0])
    b = sequence_weights([0, 10, 20], [0.25, 0.5, 0.25])
    assert np.array_equal(a, b)
