import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deeplse.errors import CapacityError, DomainError, PropertyFailure
from deeplse.lse import softplus_inv
from deeplse.maxaffine import (check_sandwich, delta_bound, expand_paths, max_over_paths,
                               path_affine_closed_form, surrogate_eval)
from deeplse.network import DeepLseNet, LayerParams, T_MIN, forward, with_alpha, with_temperature

from conftest import random_net


def t_raw(t):
    return float(softplus_inv(t - T_MIN))


def points(rng, net, n=1000, scale=2.0):
    return rng.normal(size=(n, net.input_dim)) * scale


def test_singleton_widths_surrogate_is_exact(rng):
    for _ in range(20):
        net = random_net(rng, depth=3, widths=[1, 1, 1])
        x = points(rng, net, 200)
        np.testing.assert_allclose(surrogate_eval(net, x), forward(net, x), rtol=0, atol=1e-12)
        rep = check_sandwich(net, x)
        assert rep.delta == 0.0
        assert abs(rep.max_slack) < 1e-12 and abs(rep.min_slack) < 1e-12


def test_surrogate_dimension_mismatch(small_net):
    with pytest.raises(DomainError):
        surrogate_eval(small_net, np.zeros((3, 2)))


@given(st.integers(0, 10 ** 6))
@settings(max_examples=40)
def test_surrogate_equals_flat_max_over_paths(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng)
    x = points(rng, net)
    flat = max_over_paths(expand_paths(net), x, net.c_out)
    np.testing.assert_allclose(surrogate_eval(net, x), flat, rtol=0, atol=1e-10)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=40)
def test_path_recursion_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng)
    for p in expand_paths(net):
        slope, intercept = path_affine_closed_form(net, p.path)
        np.testing.assert_allclose(p.slope, slope, rtol=0, atol=1e-12)
        assert p.intercept == pytest.approx(intercept, abs=1e-12)


def test_single_layer_paths_are_layer_pieces(rng):
    net = random_net(rng, depth=1, widths=[4], d=2)
    paths = expand_paths(net)
    assert [p.path for p in paths] == [(1,), (2,), (3,), (4,)]
    np.testing.assert_array_equal(np.array([p.slope for p in paths]), net.layers[0].a)
    np.testing.assert_array_equal([p.intercept for p in paths], net.layers[0].b)


def test_unit_skip_paths_add(rng):
    net = with_alpha(random_net(rng, depth=2, widths=[2, 2], d=1), 1, 1.0)
    l1, l2 = net.layers
    by_path = {p.path: p for p in expand_paths(net)}
    for i in (1, 2):
        for k in (1, 2):
            p = by_path[(i, k)]
            np.testing.assert_allclose(p.slope, l1.a[i - 1] + l2.a[k - 1], atol=1e-12)
            assert p.intercept == pytest.approx(l1.b[i - 1] + l2.b[k - 1], abs=1e-12)


def test_path_guard(rng):
    net = random_net(rng, depth=2, widths=[4, 4])
    with pytest.raises(CapacityError):
        expand_paths(net, max_paths=15)
    with pytest.raises(DomainError):
        path_affine_closed_form(net, (1,))


def delta_net(temps, widths, alpha2=None):
    layers = []
    for ell, (t, k) in enumerate(zip(temps, widths)):
        eta = None if ell == 0 else np.full(k, softplus_inv(alpha2))
        layers.append(LayerParams(np.zeros((k, 1)), np.zeros(k), eta, t_raw(t)))
    return DeepLseNet(tuple(layers), 0.0, 1)


def test_delta_single_layer():
    rep = delta_bound(delta_net([1.0], [3]))
    assert rep.delta == pytest.approx(math.log(3), abs=1e-12)
    assert rep.delta == pytest.approx(1.098612, abs=1e-6)


def test_delta_two_layers():
    rep = delta_bound(delta_net([1.0, 1.0], [3, 3], alpha2=0.5))
    assert rep.delta == pytest.approx(1.5 * math.log(3), abs=1e-12)
    assert rep.delta == pytest.approx(1.647918, abs=1e-6)
    assert rep.delta_closed_form == pytest.approx(rep.delta, abs=1e-12)
    np.testing.assert_allclose(rep.alpha_max, [1.0, 0.5])


def test_delta_zero_for_unit_widths(rng):
    assert delta_bound(random_net(rng, depth=3, widths=[1, 1, 1])).delta == 0.0


@given(st.integers(0, 10 ** 6))
@settings(max_examples=40)
def test_sandwich_on_random_nets(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng)
    rep = check_sandwich(net, points(rng, net))
    assert rep.min_slack >= -1e-9 and rep.max_slack <= rep.delta + 1e-9


def test_sandwich_violation_names_point(small_net):
    bad = DeepLseNet(small_net.layers, small_net.c_out, 1)
    with pytest.raises(PropertyFailure) as info:
        check_sandwich(bad, np.array([0.3]), tol=-10.0)   # impossible tolerance
    assert info.value.x is not None
    with pytest.raises(DomainError):
        check_sandwich(small_net, np.zeros((0, 1)))


def test_upper_bound_tight_where_scores_coincide():
    # layer-1 pieces x, 2x-1, 3x-2 meet at x = 1; layer 2 scores are alpha*z_1 for every k
    t1, t2, alpha = 0.7, 0.4, 0.6
    l1 = LayerParams(np.array([[1.0], [2.0], [3.0]]), np.array([0.0, -1.0, -2.0]), None, t_raw(t1))
    l2 = LayerParams(np.zeros((2, 1)), np.zeros(2), np.full(2, softplus_inv(alpha)), t_raw(t2))
    one = DeepLseNet((l1,), 0.0, 1)
    rep = check_sandwich(one, np.array([1.0]))
    assert rep.max_slack == pytest.approx(t1 * math.log(3), abs=1e-9)
    two = DeepLseNet((l1, l2), 0.0, 1)
    rep = check_sandwich(two, np.array([1.0]))
    assert rep.max_slack == pytest.approx(t2 * math.log(2) + alpha * t1 * math.log(3), abs=1e-9)
    assert rep.max_slack == pytest.approx(rep.delta, abs=1e-9)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=25)
def test_gap_shrinks_with_temperature(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng)
    base = rng.uniform(0.2, 2.0, size=net.depth)
    x = points(rng, net, 300)
    gaps, deltas = [], []
    for s in (1.0, 0.5, 0.2, 0.1, 0.03):
        scaled = with_temperature(net, base * s)
        gap = np.max(forward(scaled, x) - surrogate_eval(scaled, x))
        gaps.append(gap)
        deltas.append(delta_bound(scaled).delta)
        assert gap <= deltas[-1] + 1e-9
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))


@given(st.integers(0, 10 ** 6))
@settings(max_examples=25)
def test_depth_uniform_cap(seed):
    rng = np.random.default_rng(seed)
    q = float(rng.uniform(0.05, 0.95))
    m = float(rng.uniform(0.1, 2.0))
    for depth in (1, 2, 5, 12, 30):
        widths = [int(rng.integers(1, 5)) for _ in range(depth)]
        temps = [max(m * rng.uniform(0.1, 1.0) / max(math.log(k), 1e-12), 2 * T_MIN) for k in widths]
        temps = [min(t, m / math.log(k)) if k > 1 else t for t, k in zip(temps, widths)]
        net = random_net(rng, depth=depth, widths=widths, d=1)
        for ell in range(1, depth):
            net = with_alpha(net, ell, rng.uniform(0.01, q, size=widths[ell]))
        net = with_temperature(net, temps)
        rep = delta_bound(net)
        assert rep.delta <= m / (1 - q) + 1e-9
        assert rep.depth_uniform_cap is not None
        assert rep.delta <= rep.depth_uniform_cap + 1e-9
