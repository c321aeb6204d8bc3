"""Black-Scholes prices, vega and implied-volatility inversion."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, NoArbitrageError, NumericError

SIGMA_LO, SIGMA_HI = 1e-6, 5.0
MAX_ITER = 200


@dataclass(frozen=True)
class OptionQuote:
    strike: float
    price: float
    kind: str = "call"    # "call" or "put"
    tau: float = 1.0
    spot: float = 100.0
    rate: float = 0.0
    dividend: float = 0.0

    def __post_init__(self):
        if self.kind not in ("call", "put"):
            raise DomainError(f"kind must be 'call' or 'put', got {self.kind!r}")
        if not (self.strike > 0 and self.spot > 0 and self.tau > 0):
            raise DomainError("strike, spot and tau must be positive")
        if not self.price >= 0:
            raise DomainError(f"negative price {self.price}")


@dataclass(frozen=True)
class IvCurve:
    """Implied volatilities against moneyness K / spot for one maturity."""
    moneyness: np.ndarray
    sigma: np.ndarray
    spot: float
    tau: float
    rate: float = 0.0
    dividend: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = np.asarray(self.moneyness, dtype=float)
        s = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "moneyness", m)
        object.__setattr__(self, "sigma", s)
        if m.shape != s.shape or m.ndim != 1:
            raise DomainError("moneyness and sigma must be 1-D arrays of equal length")
        if np.any(m <= 0) or np.any(s <= 0):
            raise DomainError("moneyness and sigma must be positive")
        if np.any(np.diff(m) <= 0):
            raise DomainError("moneyness must be strictly increasing")

    @property
    def strikes(self) -> np.ndarray:
        return self.moneyness * self.spot

    def __len__(self):
        return self.moneyness.size

    @classmethod
    def from_strikes(cls, strikes, sigma, spot, tau, rate=0.0, dividend=0.0, **meta):
        strikes = np.asarray(strikes, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        order = np.argsort(strikes)
        return cls(strikes[order] / spot, sigma[order], spot, tau, rate, dividend, meta)


def _d1d2(spot, strike, r, q, sigma, tau):
    vol = sigma * np.sqrt(tau)
    d1 = (np.log(spot / strike) + (r - q + 0.5 * sigma ** 2) * tau) / vol
    return d1, d1 - vol


def _check_inputs(spot, strike, sigma, tau):
    if np.any(np.asarray(spot) <= 0) or np.any(np.asarray(strike) <= 0) or np.any(np.asarray(tau) <= 0):
        raise DomainError("spot, strike and tau must be positive")
    if np.any(np.asarray(sigma) < 0):
        raise DomainError("sigma must be nonnegative")


def bs_price(spot, strike, r, q, sigma, tau, kind="call"):
    """Black-Scholes value; at sigma = 0 the discounted intrinsic on the forward."""
    _check_inputs(spot, strike, sigma, tau)
    spot, strike, sigma, tau = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (spot, strike, sigma, tau)))
    df_q = spot * np.exp(-q * tau)
    df_k = strike * np.exp(-r * tau)
    call = np.array(np.maximum(df_q - df_k, 0.0), dtype=float)
    live = sigma > 0
    if np.any(live):
        d1, d2 = _d1d2(spot[live], strike[live], r, q, sigma[live], tau[live])
        call[live] = df_q[live] * ndtr(d1) - df_k[live] * ndtr(d2)
    if kind == "put":
        out = call - df_q + df_k
    elif kind == "call":
        out = call
    else:
        raise DomainError(f"unknown option kind {kind!r}")
    return float(out) if out.ndim == 0 else out


def bs_vega(spot, strike, r, q, sigma, tau):
    """d price / d sigma, identical for calls and puts."""
    _check_inputs(spot, strike, sigma, tau)
    d1, _ = _d1d2(np.asarray(spot, float), np.asarray(strike, float), r, q,
                  np.asarray(sigma, float), np.asarray(tau, float))
    out = spot * np.exp(-q * tau) * np.exp(-0.5 * d1 ** 2) / math.sqrt(2 * math.pi) * np.sqrt(tau)
    return float(out) if np.ndim(out) == 0 else out


def price_bounds(quote: OptionQuote) -> tuple[float, float]:
    fwd = quote.spot * math.exp(-quote.dividend * quote.tau)
    disc_k = quote.strike * math.exp(-quote.rate * quote.tau)
    if quote.kind == "call":
        return max(fwd - disc_k, 0.0), fwd
    return max(disc_k - fwd, 0.0), disc_k


def implied_vol(quote: OptionQuote, tol: float = 1e-12) -> float:
    """Black-Scholes volatility reproducing ``quote.price``.

    Bisection on [1e-6, 5] narrows the bracket; Newton steps then polish
    the root and fall back to bisection whenever they leave the bracket.
    """
    lo_b, hi_b = price_bounds(quote)
    if not quote.price > lo_b:
        raise NoArbitrageError(
            f"price {quote.price} at or below intrinsic bound {lo_b} (K={quote.strike})",
            bound=lo_b, side="lower")
    if not quote.price < hi_b:
        raise NoArbitrageError(
            f"price {quote.price} at or above upper bound {hi_b} (K={quote.strike})",
            bound=hi_b, side="upper")

    args = (quote.spot, quote.strike, quote.rate, quote.dividend)

    def f(s):
        return bs_price(*args, s, quote.tau, quote.kind) - quote.price

    lo, hi = SIGMA_LO, SIGMA_HI
    f_lo, f_hi = f(lo), f(hi)
    if f_lo > 0:
        return lo  # price below what the minimum volatility produces: sub-1e-6 vol
    if f_hi < 0:
        raise NumericError(f"implied vol above {SIGMA_HI} for K={quote.strike}")
    price_tol = tol * quote.spot
    s = 0.5 * (lo + hi)
    for _ in range(MAX_ITER):
        fs = f(s)
        if abs(fs) <= price_tol:
            return s
        if fs > 0:
            hi = s
        else:
            lo = s
        if hi - lo < 1e-15:
            return s
        vega = bs_vega(*args, s, quote.tau)
        step = s - fs / vega if vega > 0 else np.nan
        # Newton only while the bracket is already tight enough to trust it
        s = step if (hi - lo < 0.05 and lo < step < hi) else 0.5 * (lo + hi)
    raise NumericError(f"implied vol did not converge for K={quote.strike}")


def implied_vols(quotes) -> np.ndarray:
    return np.array([implied_vol(q) for q in quotes])


def curve_from_quotes(quotes, spot=None) -> IvCurve:
    """Invert each quote and collect the points into an :class:`IvCurve`."""
    quotes = list(quotes)
    if not quotes:
        raise DomainError("no quotes")
    q0 = quotes[0]
    for q in quotes:
        if (q.spot, q.tau, q.rate, q.dividend) != (q0.spot, q0.tau, q0.rate, q0.dividend):
            raise DomainError("quotes on one curve must share spot, tau, rate and dividend")
    sig = implied_vols(quotes)
    return IvCurve.from_strikes([q.strike for q in quotes], sig, q0.spot, q0.tau, q0.rate, q0.dividend)
