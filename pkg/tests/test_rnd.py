import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from deeplse.errors import DomainError, NumericError
from deeplse.pricing import OptionQuote, bs_price
from deeplse.rnd import (PricingReport, QuadraticSpline, RndEstimate, StrikeGrid, call_prices_from_rnd,
                         extract_rnd, fit_parametric, l1_distance, lognormal_rnd, price_from_rnd,
                         pricing_report, quadratic_spline, second_difference)


def flat(sig):
    return lambda m: np.full(np.shape(m), sig)


def grid_40_220(rate=0.0, tau=1.0):
    return StrikeGrid(np.arange(40.0, 220.0 + 1e-9, 0.5), 100.0, rate, 0.0, tau)


def closed_form_lognormal(k, spot, r, sig, tau):
    return stats.lognorm(s=sig * math.sqrt(tau), scale=spot * math.exp((r - 0.5 * sig ** 2) * tau)).pdf(k)


def test_grid_validation():
    with pytest.raises(DomainError):
        StrikeGrid(np.array([1.0, 2.0, 3.0, 4.0]), 100.0)
    with pytest.raises(DomainError):
        StrikeGrid(np.array([1.0, 2.0, 3.0, 4.0, 6.0]), 100.0)
    g = StrikeGrid.from_moneyness(0.5, 1.5, 401, spot=2000.0)
    assert g.step == pytest.approx(5.0) and g.strikes[0] == 1000.0


def test_flat_vol_recovers_lognormal():
    g = grid_40_220()
    rnd = extract_rnd(flat(0.2), g)
    ref = closed_form_lognormal(g.strikes, 100.0, 0.0, 0.2, 1.0)
    assert np.max(np.abs(rnd.density[1:-1] - ref[1:-1])) < 1e-4
    assert np.trapezoid(rnd.density, g.strikes) == pytest.approx(1.0, abs=1e-9)


def test_flat_vol_with_rate_recovers_lognormal():
    g = grid_40_220(rate=0.05, tau=0.5)
    rnd = extract_rnd(flat(0.25), g)
    ref = closed_form_lognormal(g.strikes, 100.0, 0.05, 0.25, 0.5)
    assert np.max(np.abs(rnd.density[1:-1] - ref[1:-1])) < 1e-4


@given(st.floats(0.05, 0.8), st.floats(-0.3, 0.3), st.floats(0.0, 2.0))
@settings(max_examples=40)
def test_density_normalized_and_nonnegative(base, skew, curv):
    g = grid_40_220()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rnd = extract_rnd(lambda m: np.maximum(base + skew * (m - 1) + curv * (m - 1) ** 2, 0.01), g)
    assert np.all(rnd.density >= 0)
    assert np.trapezoid(rnd.density, g.strikes) == pytest.approx(1.0, abs=1e-9)


def test_extract_is_pure():
    g = grid_40_220()
    model = lambda m: 0.2 + 0.1 * (m - 1) ** 2
    a, b = extract_rnd(model, g), extract_rnd(model, g)
    assert a.density.tobytes() == b.density.tobytes()


def test_nonfinite_iv_names_strike():
    g = grid_40_220()
    with pytest.raises(NumericError, match="strike 40"):
        extract_rnd(lambda m: np.where(m < 0.41, np.nan, 0.2), g)


def test_second_difference_exact_on_quadratics():
    x = np.arange(10.0) * 0.5
    np.testing.assert_allclose(second_difference(3 * x ** 2 - x + 1, 0.5), 6.0, atol=1e-10)


def test_convex_iv_gives_convex_prices():
    g = StrikeGrid.from_moneyness(0.5, 1.5, 401, spot=100.0)
    sig = 0.2 + 0.3 * (g.moneyness - 1) ** 2
    calls = bs_price(100.0, g.strikes, 0.0, 0.0, sig, 1.0)
    d2 = np.diff(calls, 2)
    assert np.mean(d2 >= -1e-6) > 0.95


def test_price_at_grid_minimum_is_discounted_forward_gap():
    # wide enough on the right that the truncated tail expectation is negligible
    g = StrikeGrid(np.arange(40.0, 400.0 + 1e-9, 0.5), 100.0, 0.03, 0.0, 1.0)
    rnd = lognormal_rnd(g, 0.2)
    fwd = 100.0 * math.exp(0.03)
    assert price_from_rnd(rnd, 40.0) == pytest.approx(math.exp(-0.03) * (fwd - 40.0), abs=1e-3)
    assert price_from_rnd(rnd, 400.0) == 0.0
    assert price_from_rnd(rnd, 500.0) == 0.0
    with pytest.raises(DomainError):
        price_from_rnd(rnd, 39.0)


def test_price_from_rnd_off_grid_strike():
    g = grid_40_220()
    rnd = extract_rnd(flat(0.2), g)
    for k in (90.25, 100.0, 117.3):
        assert price_from_rnd(rnd, k) == pytest.approx(bs_price(100.0, k, 0.0, 0.0, 0.2, 1.0), abs=5e-3)


def test_flat_vol_round_trip_on_index_scale():
    g = StrikeGrid.from_moneyness(0.5, 1.5, 401, spot=2000.0, rate=0.0025, tau=1 / 12)
    rnd = extract_rnd(flat(0.18), g)
    for k in np.arange(1900.0, 2151.0, 50.0):
        assert price_from_rnd(rnd, k) == pytest.approx(bs_price(2000.0, k, 0.0025, 0.0, 0.18, 1 / 12), abs=0.05)


def test_pricing_report_zero_and_mae():
    g = grid_40_220()
    rnd = extract_rnd(flat(0.2), g)
    quotes = [OptionQuote(k, price_from_rnd(rnd, k), "call", 1.0, 100.0, 0.0, 0.0) for k in (90.0, 100.0)]
    assert np.all(pricing_report(rnd, quotes).errors == 0.0)
    errs = np.array([0.20, 0.69, 0.26, 0.28, 0.45, 0.27])
    rep = PricingReport(np.arange(6.0), errs, errs, errs)
    assert rep.mae == pytest.approx(2.15 / 6)
    assert f"{rep.mae:.3f}" == "0.358"
    assert PricingReport(np.arange(6.0), errs, errs, 2 * errs).mae == pytest.approx(2 * rep.mae)


def test_pricing_report_converts_puts():
    g = grid_40_220()
    rnd = extract_rnd(flat(0.2), g)
    put = OptionQuote(95.0, bs_price(100.0, 95.0, 0.0, 0.0, 0.2, 1.0, "put"), "put", 1.0, 100.0, 0.0, 0.0)
    assert pricing_report(rnd, [put]).errors[0] < 5e-3


# ---- quadratic spline -------------------------------------------------------------

def test_spline_hits_knots(rng):
    x = np.sort(rng.uniform(0.5, 1.5, 6))
    y = rng.uniform(0.1, 0.5, 6)
    sp = quadratic_spline(x, y)
    for xi, yi in zip(x, y):
        assert sp(xi) == yi


def test_spline_reproduces_lines():
    x = np.array([0.7, 0.8, 1.0, 1.3])
    sp = quadratic_spline(x, 0.5 - 0.2 * x)
    t = np.linspace(0.7, 1.3, 101)
    np.testing.assert_allclose(sp(t), 0.5 - 0.2 * t, atol=1e-12)


def test_spline_constant_extrapolation_and_errors():
    sp = quadratic_spline([0.8, 0.9, 1.0], [0.3, 0.2, 0.25])
    assert sp(0.1) == 0.3 and sp(3.0) == 0.25
    with pytest.raises(DomainError):
        quadratic_spline([0.8, 0.8], [0.3, 0.2])
    with pytest.raises(DomainError):
        quadratic_spline([0.8], [0.3])


def brute_force_coefficients(x, y):
    """Solve interpolation + C1 + linear-first-piece conditions as one dense system."""
    n = x.size - 1
    a_mat = np.zeros((3 * n, 3 * n))
    rhs = np.zeros(3 * n)
    row = 0
    for i in range(n):          # piece i: a + b t + c t^2, t = x - x_i; unknowns (c, b, a)
        h = x[i + 1] - x[i]
        a_mat[row, 3 * i + 2] = 1.0
        rhs[row] = y[i]
        row += 1
        a_mat[row, 3 * i:3 * i + 3] = [h * h, h, 1.0]
        rhs[row] = y[i + 1]
        row += 1
    for i in range(n - 1):      # slope continuity at x_{i+1}
        h = x[i + 1] - x[i]
        a_mat[row, 3 * i:3 * i + 2] = [2 * h, 1.0]
        a_mat[row, 3 * (i + 1) + 1] = -1.0
        row += 1
    a_mat[row, 0] = 1.0         # first piece linear
    return np.linalg.solve(a_mat, rhs).reshape(n, 3)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=30)
def test_spline_matches_dense_solve(seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.5, 1.5, 5))
    if np.min(np.diff(x)) < 1e-3:
        return
    y = rng.uniform(0.1, 0.5, 5)
    np.testing.assert_allclose(QuadraticSpline(x, y).coefficients(), brute_force_coefficients(x, y),
                               rtol=1e-8, atol=1e-8)


# ---- parametric fits --------------------------------------------------------------

def test_lognormal_parameters_recovered():
    g = StrikeGrid.from_moneyness(0.3, 2.5, 881, spot=100.0, rate=0.02)
    mu, sd = math.log(100.0) + 0.02 - 0.5 * 0.25 ** 2, 0.25
    truth = lognormal_rnd(g, 0.25)
    quotes = [OptionQuote(k, price_from_rnd(truth, k), "call", 1.0, 100.0, 0.02, 0.0)
              for k in (82.0, 97.0, 98.0, 110.0)]
    est = fit_parametric(quotes, "lognormal", g)
    assert est.info["params"][0] == pytest.approx(mu, rel=1e-3)
    assert est.info["params"][1] == pytest.approx(sd, rel=1e-3)
    assert not est.info["degenerate"]


def test_normal_parameters_recovered():
    g = StrikeGrid.from_moneyness(0.2, 1.8, 641, spot=100.0)
    f = stats.norm(103.0, 18.0).pdf(g.strikes)
    truth = RndEstimate(g, f / np.trapezoid(f, g.strikes), f)
    quotes = [OptionQuote(k, price_from_rnd(truth, k), "call", 1.0, 100.0, 0.0, 0.0) for k in (85.0, 100.0, 120.0)]
    est = fit_parametric(quotes, "normal", g)
    np.testing.assert_allclose(est.info["params"], (103.0, 18.0), rtol=1e-3)


def test_repeated_price_level_is_degenerate():
    g = StrikeGrid.from_moneyness(0.5, 1.5, 201, spot=100.0)
    quotes = [OptionQuote(k, 5.0, "call", 1.0, 100.0, 0.0, 0.0) for k in (90.0, 100.0, 110.0)]
    with pytest.warns(UserWarning):
        est = fit_parametric(quotes, "lognormal", g)
    assert est.info["degenerate"]


def test_parametric_input_checks():
    g = StrikeGrid.from_moneyness(spot=100.0)
    q = OptionQuote(100.0, 5.0, "call", 1.0, 100.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        fit_parametric([q], "lognormal", g)
    with pytest.raises(DomainError):
        fit_parametric([q, q], "gamma", g)


# ---- L1 ---------------------------------------------------------------------------

def test_l1_properties():
    g = StrikeGrid(np.arange(0.0, 10.5, 0.5) + 1.0, 5.0)
    left = np.where(g.strikes <= 5.0, 1.0, 0.0)
    right = np.where(g.strikes >= 6.0, 1.0, 0.0)
    a = RndEstimate(g, left / np.trapezoid(left, g.strikes), left)
    b = RndEstimate(g, right / np.trapezoid(right, g.strikes), right)
    assert l1_distance(a, a) == 0.0
    assert l1_distance(a, b) == pytest.approx(l1_distance(b, a))
    # disjoint supports: the half-cell ramps between them contribute no overlap
    assert l1_distance(a, b) == pytest.approx(2.0, abs=1e-12)
    other = StrikeGrid(g.strikes + 0.25, 5.0)
    with pytest.raises(DomainError):
        l1_distance(a, RndEstimate(other, a.density, a.raw_density))


@given(st.floats(0.1, 0.6), st.floats(0.1, 0.6))
@settings(max_examples=25)
@pytest.mark.filterwarnings("ignore:raw density")
def test_l1_bounded(s1, s2):
    g = grid_40_220()
    d = l1_distance(extract_rnd(flat(s1), g), extract_rnd(flat(s2), g))
    assert 0.0 <= d <= 2.0 + 1e-12
