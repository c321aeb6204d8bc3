"""Risk-neutral densities from implied-vol curves, and the baselines.

The density is the discounted second strike-derivative of call prices,
estimated with finite differences on a uniform strike grid.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import DomainError, NumericError
from .pricing import OptionQuote, bs_price


@dataclass(frozen=True)
class StrikeGrid:
    strikes: np.ndarray
    spot: float
    rate: float = 0.0
    dividend: float = 0.0
    tau: float = 1.0

    def __post_init__(self):
        k = np.asarray(self.strikes, dtype=float)
        object.__setattr__(self, "strikes", k)
        if k.ndim != 1 or k.size < 5:
            raise DomainError("a strike grid needs at least 5 points")
        steps = np.diff(k)
        if steps.min() <= 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise DomainError("strike grid must be uniform and increasing")
        if k[0] <= 0:
            raise DomainError("strikes must be positive")

    @property
    def step(self) -> float:
        return float(self.strikes[1] - self.strikes[0])

    @property
    def moneyness(self) -> np.ndarray:
        return self.strikes / self.spot

    @classmethod
    def from_moneyness(cls, lo=0.5, hi=1.5, n=401, *, spot, rate=0.0, dividend=0.0, tau=1.0):
        return cls(np.linspace(lo * spot, hi * spot, n), spot, rate, dividend, tau)


@dataclass(frozen=True)
class RndEstimate:
    grid: StrikeGrid
    density: np.ndarray
    raw_density: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    @property
    def strikes(self) -> np.ndarray:
        return self.grid.strikes


@dataclass(frozen=True)
class PricingReport:
    strikes: np.ndarray
    market: np.ndarray
    model: np.ndarray
    errors: np.ndarray

    @property
    def mae(self) -> float:
        return float(np.mean(self.errors))


def second_difference(values: np.ndarray, step: float) -> np.ndarray:
    """Central second differences, second-order one-sided stencils at the ends."""
    c = np.asarray(values, dtype=float)
    out = np.empty_like(c)
    out[1:-1] = c[:-2] - 2 * c[1:-1] + c[2:]
    out[0] = 2 * c[0] - 5 * c[1] + 4 * c[2] - c[3]
    out[-1] = 2 * c[-1] - 5 * c[-2] + 4 * c[-3] - c[-4]
    return out / step ** 2


def clean_density(raw: np.ndarray, strikes: np.ndarray, warn_band=(0.9, 1.1)) -> np.ndarray:
    """Clip negative values and renormalize to unit trapezoid mass."""
    mass_raw = np.trapezoid(raw, strikes)
    if not warn_band[0] <= mass_raw <= warn_band[1]:
        warnings.warn(f"raw density integrates to {mass_raw:.4f}; grid may truncate the tails",
                      stacklevel=3)
    clipped = np.maximum(raw, 0.0)
    mass = np.trapezoid(clipped, strikes)
    if not mass > 0:
        raise NumericError("density has no positive mass on the grid")
    return clipped / mass


def density_from_prices(calls, grid: StrikeGrid, **info) -> RndEstimate:
    raw = math.exp(grid.rate * grid.tau) * second_difference(calls, grid.step)
    return RndEstimate(grid, clean_density(raw, grid.strikes), raw, info)


def extract_rnd(iv_model: Callable, grid: StrikeGrid, **info) -> RndEstimate:
    """Density implied by an IV function of moneyness on ``grid``."""
    sigma = np.asarray(iv_model(grid.moneyness), dtype=float)
    bad = np.flatnonzero(~np.isfinite(sigma) | (sigma < 0))
    if bad.size:
        raise NumericError(f"IV model returned {sigma[bad[0]]!r} at strike {grid.strikes[bad[0]]:g}")
    calls = bs_price(grid.spot, grid.strikes, grid.rate, grid.dividend, sigma, grid.tau, "call")
    return density_from_prices(calls, grid, **info)


def price_from_rnd(rnd: RndEstimate, strike: float) -> float:
    """e^{-r tau} * integral_K^inf (s - K) f(s) ds by trapezoid quadrature."""
    s = rnd.grid.strikes
    f = rnd.density
    if strike < s[0]:
        raise DomainError(f"strike {strike} below the density grid [{s[0]:g}, {s[-1]:g}]")
    disc = math.exp(-rnd.grid.rate * rnd.grid.tau)
    if strike >= s[-1]:
        return 0.0
    j = int(np.searchsorted(s, strike, side="right"))   # s[j-1] <= K < s[j]
    g = (s[j:] - strike) * f[j:]
    total = np.trapezoid(g, s[j:]) if g.size > 1 else 0.0
    # partial cell [K, s_j]: integrand vanishes at K
    total += 0.5 * (s[j] - strike) * g[0]
    return disc * float(total)


def call_prices_from_rnd(rnd: RndEstimate, strikes) -> np.ndarray:
    return np.array([price_from_rnd(rnd, k) for k in np.atleast_1d(strikes)])


def call_equivalent(q: OptionQuote) -> float:
    """Call price of a quote, converting puts by put-call parity."""
    if q.kind == "call":
        return q.price
    return q.price + q.spot * math.exp(-q.dividend * q.tau) - q.strike * math.exp(-q.rate * q.tau)


def pricing_report(rnd: RndEstimate, quotes) -> PricingReport:
    quotes = list(quotes)
    ks = np.array([q.strike for q in quotes])
    market = np.array([call_equivalent(q) for q in quotes])
    model = call_prices_from_rnd(rnd, ks)
    return PricingReport(ks, market, model, np.abs(market - model))


def l1_distance(a: RndEstimate, b: RndEstimate) -> float:
    if a.grid.strikes.shape != b.grid.strikes.shape or not np.array_equal(a.grid.strikes, b.grid.strikes):
        raise DomainError("densities live on different grids")
    return float(np.trapezoid(np.abs(a.density - b.density), a.grid.strikes))


class QuadraticSpline:
    """C1 piecewise-quadratic interpolant, linear on the first interval.

    Outside the knot range the boundary values are held constant.
    """

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        order = np.argsort(x)
        x, y = x[order], y[order]
        if x.size < 2:
            raise DomainError("a quadratic spline needs at least 2 points")
        if np.any(np.diff(x) == 0):
            raise DomainError("duplicate knots")
        h = np.diff(x)
        n = h.size
        slope = np.empty(n)       # derivative at the left end of each piece
        curv = np.empty(n)        # quadratic coefficient of each piece
        slope[0] = (y[1] - y[0]) / h[0]
        curv[0] = 0.0
        for i in range(1, n):
            slope[i] = slope[i - 1] + 2 * curv[i - 1] * h[i - 1]
            curv[i] = (y[i + 1] - y[i] - slope[i] * h[i]) / h[i] ** 2
        self.knots, self.values, self.slopes, self.curvatures = x, y, slope, curv

    def coefficients(self) -> np.ndarray:
        """Rows (c, b, a) with piece i = a + b (x - x_i) + c (x - x_i)^2."""
        return np.column_stack([self.curvatures, self.slopes, self.values[:-1]])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.knots[0], self.knots[-1])
        i = np.clip(np.searchsorted(self.knots, xc, side="right") - 1, 0, self.slopes.size - 1)
        dx = xc - self.knots[i]
        out = self.values[i] + self.slopes[i] * dx + self.curvatures[i] * dx ** 2
        # exact knot values
        hit = np.isin(xc, self.knots)
        if np.any(hit):
            out = np.where(hit, np.interp(xc, self.knots, self.values), out)
        return float(out) if out.ndim == 0 else out


def quadratic_spline(moneyness, sigma) -> QuadraticSpline:
    return QuadraticSpline(moneyness, sigma)


def lognormal_pdf(s, mu, sd):
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        z = (np.log(s) - mu) / sd
    return np.exp(-0.5 * z ** 2) / (s * sd * math.sqrt(2 * math.pi))


def normal_pdf(s, mean, sd):
    z = (np.asarray(s, dtype=float) - mean) / sd
    return np.exp(-0.5 * z ** 2) / (sd * math.sqrt(2 * math.pi))


FAMILIES = ("lognormal", "normal")


def _family_density(family, grid: StrikeGrid, p):
    if family == "lognormal":
        return lognormal_pdf(grid.strikes, p[0], p[1])
    return normal_pdf(grid.strikes, p[0], p[1])


def _family_bounds(family, fwd):
    if family == "lognormal":
        return [(math.log(fwd) - 1.0, math.log(fwd) + 1.0), (0.01, 2.0)]
    return [(0.5 * fwd, 1.5 * fwd), (0.005 * fwd, fwd)]


def fit_parametric(quotes, family: str, grid: StrikeGrid, n_grid: int = 25) -> RndEstimate:
    """Two-parameter density minimizing squared pricing error on the quotes.

    Candidates are priced by quadrature on ``grid``.  A coarse grid search
    seeds a bounded Nelder-Mead refinement; the normal family's mean search
    is centred on the forward.  ``info['degenerate']`` flags an optimum on
    a parameter bound.
    """
    if family not in FAMILIES:
        raise DomainError(f"family must be one of {FAMILIES}")
    quotes = list(quotes)
    if len(quotes) < 2:
        raise DomainError("parametric fit needs at least 2 quotes")
    fwd = grid.spot * math.exp((grid.rate - grid.dividend) * grid.tau)
    target = np.array([call_equivalent(q) for q in quotes])
    ks = np.array([q.strike for q in quotes])
    bounds = _family_bounds(family, fwd)
    s = grid.strikes

    def model_prices(p):
        f = _family_density(family, grid, p)
        mass = np.trapezoid(f, s)
        if not mass > 0:
            return np.full(ks.size, np.inf)
        return call_prices_from_rnd(RndEstimate(grid, f / mass, f), ks)

    def loss(p):
        if any(not lo <= v <= hi for v, (lo, hi) in zip(p, bounds)):
            return 1e30
        return float(np.sum((model_prices(p) - target) ** 2))

    if family == "lognormal":
        centre = [math.log(fwd), 0.2]
    else:
        centre = [fwd, 0.2 * fwd]
    axes = [np.linspace(lo, hi, n_grid) for lo, hi in bounds]
    best = min(((loss((a, b)), (a, b)) for a in axes[0] for b in axes[1]),
               key=lambda t: t[0])
    start = best[1] if best[0] < loss(centre) else centre
    res = optimize.minimize(loss, start, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    p = res.x
    spans = [hi - lo for lo, hi in bounds]
    degenerate = any(min(v - lo, hi - v) < 1e-3 * span for v, (lo, hi), span in zip(p, bounds, spans))
    if degenerate:
        warnings.warn(f"{family} fit sits on a parameter bound: {p}", stacklevel=2)
    f = _family_density(family, grid, p)
    return RndEstimate(grid, f / np.trapezoid(f, s), f,
                       {"family": family, "params": tuple(float(v) for v in p),
                        "degenerate": bool(degenerate), "loss": float(res.fun)})


def lognormal_rnd(grid: StrikeGrid, sigma: float) -> RndEstimate:
    """Black-Scholes terminal density with volatility ``sigma`` on ``grid``."""
    mu = math.log(grid.spot) + (grid.rate - grid.dividend - 0.5 * sigma ** 2) * grid.tau
    f = lognormal_pdf(grid.strikes, mu, sigma * math.sqrt(grid.tau))
    return RndEstimate(grid, f, f.copy())
