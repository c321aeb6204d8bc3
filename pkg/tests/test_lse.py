import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from deeplse.errors import DomainError
from deeplse.lse import lse, lse_weights, sigmoid, softplus, softplus_inv

finite = st.floats(-50, 50, allow_nan=False)
temps = st.floats(1e-3, 10.0)
vectors = arrays(float, st.integers(1, 8), elements=finite)


def test_equal_entries_give_log_m():
    assert lse(1.0, [0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)


def test_singleton_is_identity():
    assert lse(2.0, [3.0]) == 3.0


def test_low_temperature_is_max():
    assert abs(lse(0.01, [1.0, 0.0]) - 1.0) < 1e-12


def test_no_overflow_at_tiny_temperature():
    assert lse(1e-3, [1000.0, 999.0]) == pytest.approx(1000.0)


def test_batched_rows():
    u = np.array([[0.0, 0.0], [3.0, 1.0]])
    out = lse(1.0, u)
    assert out.shape == (2,)
    assert out[0] == pytest.approx(math.log(2))


@pytest.mark.parametrize("u, t", [([], 1.0), ([1.0], 0.0), ([1.0], -1.0), ([np.inf], 1.0), ([np.nan], 1.0)])
def test_invalid_inputs(u, t):
    with pytest.raises(DomainError):
        lse(t, u)
    with pytest.raises(DomainError):
        lse_weights(t, u)


def test_weights_symmetric_and_singleton():
    np.testing.assert_allclose(lse_weights(1.0, [0.0, 0.0]), [0.5, 0.5])
    np.testing.assert_allclose(lse_weights(1.0, [4.2]), [1.0])


def test_weights_against_exact_rational_softmax():
    # normalization carried out exactly in rationals
    u, t = [1.0, 0.0, -1.0], 0.5
    e = [Fraction(math.exp(v / t)) for v in u]
    total = sum(e)
    exact = [float(x / total) for x in e]
    np.testing.assert_allclose(lse_weights(t, u), exact, rtol=0, atol=1e-14)


@given(temps, vectors)
def test_sandwich_between_max_and_max_plus_tlogm(t, u):
    v = lse(t, u)
    assert u.max() - 1e-12 <= v <= u.max() + t * math.log(u.size) + 1e-9


@given(temps, vectors, finite)
def test_translation_equivariance(t, u, c):
    assert lse(t, u + c) == pytest.approx(lse(t, u) + c, abs=1e-10)


@given(temps, vectors, st.data())
def test_monotone(t, u, data):
    bump = data.draw(arrays(float, u.size, elements=st.floats(0, 5)))
    assert lse(t, u) <= lse(t, u + bump) + 1e-12


@given(temps, vectors, st.data())
def test_one_lipschitz(t, u, data):
    w = data.draw(arrays(float, u.size, elements=finite))
    assert abs(lse(t, u) - lse(t, w)) <= np.max(np.abs(u - w)) + 1e-9


@given(temps, vectors)
def test_weights_form_a_distribution(t, u):
    p = lse_weights(t, u)
    assert np.all(p >= 0) and np.all(p <= 1)
    assert abs(p.sum() - 1) < 1e-12


@given(st.floats(0.05, 5.0), arrays(float, st.integers(1, 6), elements=st.floats(-5, 5)))
def test_weights_are_the_gradient(t, u):
    h = 1e-6
    fd = np.array([(lse(t, u + h * e) - lse(t, u - h * e)) / (2 * h) for e in np.eye(u.size)])
    p = lse_weights(t, u)
    assert np.all(np.abs(fd - p) <= 1e-6 * np.maximum(np.abs(p), 1e-3))


def test_softplus_values():
    assert softplus(0.0) == pytest.approx(math.log(2))
    tiny = softplus(-50.0)
    assert tiny > 0 and tiny == pytest.approx(1.9287498479639178e-22, rel=1e-12)
    assert softplus(800.0) == 800.0


def test_softplus_roundtrip_example():
    assert abs(softplus_inv(softplus(3.7)) - 3.7) < 1e-9


@given(st.floats(-30, 30))
def test_softplus_roundtrip(x):
    assert abs(softplus_inv(softplus(x)) - x) < 1e-9


@pytest.mark.parametrize("y", [0.0, -1.0, np.nan])
def test_softplus_inv_domain(y):
    with pytest.raises(DomainError):
        softplus_inv(y)


@given(st.floats(-30, 30))
def test_sigmoid_is_softplus_derivative(x):
    h = 1e-6
    assert sigmoid(x) == pytest.approx((softplus(x + h) - softplus(x - h)) / (2 * h), abs=1e-8)
