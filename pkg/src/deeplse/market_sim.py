"""Monte Carlo market generators and the illiquidity protocol.

Four risk-neutral models are supported: Bates, Kou jumps on Heston
variance, the three-factor Andersen-Benzoni-Lund model and the
three-factor double-exponential model.  The log-asset is advanced with a
log-Euler step (exact for variance frozen over the step, jumps
compensated exactly), square-root factors use full truncation or
reflection.

Paths are simulated in fixed blocks of ``BLOCK`` paths, each driven by
its own generator spawned from ``(seed, block index)``.  Path ``i`` is
therefore a function of ``(seed, i)`` alone; blocks may be evaluated in
any order and results are concatenated by index.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import DomainError, InsufficientDataError, NoArbitrageError, NumericError
from .pricing import IvCurve, OptionQuote, bs_price, implied_vol

BLOCK = 4096
SCHEMES = ("full-truncation", "reflection")


def _nonneg(obj, *names):
    for name in names:
        if getattr(obj, name) < 0:
            raise DomainError(f"{name} must be nonnegative, got {getattr(obj, name)}")


def _corr(name, value):
    if not -1 <= value <= 1:
        raise DomainError(f"{name} must lie in [-1, 1], got {value}")


@dataclass(frozen=True)
class BatesParams:
    S0: float = 100.0
    r: float = 0.06
    v0: float = 0.09
    kappa: float = 3.0
    theta: float = 0.07
    eta: float = 0.3
    rho: float = -0.34
    lam: float = 0.5
    mu_j: float = -0.09
    sigma_j: float = 0.45

    tag = "bates"
    q = 0.0

    def validate(self):
        if self.S0 <= 0:
            raise DomainError("S0 must be positive")
        _nonneg(self, "v0", "kappa", "theta", "eta", "lam", "sigma_j")
        _corr("rho", self.rho)

    @property
    def jump_mean(self) -> float:
        """k = E[J - 1] for lognormal multipliers."""
        return math.exp(self.mu_j + 0.5 * self.sigma_j ** 2) - 1.0


@dataclass(frozen=True)
class KouHestonParams:
    S0: float = 100.0
    r: float = 0.05
    q: float = 0.0
    v0: float = 0.04
    kappa: float = 2.0
    theta: float = 0.04
    sigma_v: float = 0.8
    rho: float = -0.5
    lam: float = 0.12
    p_up: float = 0.35
    eta1: float = 8.0
    eta2: float = 10.0

    tag = "kou_heston"

    def validate(self):
        if self.S0 <= 0:
            raise DomainError("S0 must be positive")
        _nonneg(self, "v0", "kappa", "theta", "sigma_v", "lam")
        _corr("rho", self.rho)
        if not 0 <= self.p_up <= 1:
            raise DomainError(f"p_up must lie in [0, 1], got {self.p_up}")
        if not self.eta1 > 1:
            raise DomainError(f"eta1 must exceed 1 for a finite compensator, got {self.eta1}")
        if not self.eta2 > -1:
            raise DomainError(f"eta2 must exceed -1, got {self.eta2}")

    @property
    def kappa_j(self) -> float:
        """E[e^Y - 1] for the double-exponential jump."""
        p, e1, e2 = self.p_up, self.eta1, self.eta2
        return p * e1 / (e1 - 1) + (1 - p) * e2 / (e2 + 1) - 1


@dataclass(frozen=True)
class AblParams:
    S0: float = 100.0
    r: float = 0.05
    kappa: tuple = (3.0, 1.5, 0.5)
    theta: tuple = (0.02, 0.04, 0.06)
    sigma: tuple = (0.2, 0.3, 0.4)
    v0: tuple = (0.02, 0.04, 0.06)
    rho: tuple = (-0.3, 0.0, 0.3)
    lam_j: float = 0.20
    mu_j: float = 0.0
    sigma_j: float = 0.55

    tag = "abl"
    q = 0.0

    def validate(self):
        if self.S0 <= 0:
            raise DomainError("S0 must be positive")
        n = len(self.kappa)
        for name in ("theta", "sigma", "v0", "rho"):
            if len(getattr(self, name)) != n:
                raise DomainError(f"{name} must have one entry per factor")
        for name in ("kappa", "theta", "sigma", "v0"):
            if min(getattr(self, name)) < 0:
                raise DomainError(f"{name} must be nonnegative")
        for i, rho in enumerate(self.rho):
            _corr(f"rho[{i}]", rho)
        if sum(x * x for x in self.rho) > 1:
            raise DomainError("sum of squared rho exceeds 1: residual Brownian weight not real")
        _nonneg(self, "lam_j", "sigma_j")

    @property
    def residual_weight(self) -> float:
        return math.sqrt(1.0 - sum(x * x for x in self.rho))

    @property
    def drift(self) -> float:
        return self.r - self.lam_j * (math.exp(self.mu_j + 0.5 * self.sigma_j ** 2) - 1.0)


@dataclass(frozen=True)
class ThreeFdeParams:
    S0: float = 100.0
    r: float = 0.05
    v1_0: float = 0.01
    v2_0: float = 0.04
    u_0: float = 0.0
    kappa1: float = 10.0
    vbar1: float = 0.01
    sigma1: float = 0.4
    rho1: float = -0.9
    kappa2: float = 0.2
    vbar2: float = 0.04
    sigma2: float = 0.12
    rho2: float = -0.8
    kappa_u: float = 0.6
    eta: float = 0.0
    mu_v: float = 0.7
    mu_u: float = 10.0
    rho_u: float = 0.001
    c_minus: tuple = (0.0, 6.0, 0.22, 10.0)
    c_plus: tuple = (0.3, 20.0, 18.0, 0.0)
    lam_minus: float = 8.0
    lam_plus: float = 6.0

    tag = "three_fde"
    q = 0.0

    def validate(self):
        if self.S0 <= 0:
            raise DomainError("S0 must be positive")
        _nonneg(self, "v1_0", "v2_0", "u_0", "kappa1", "vbar1", "sigma1", "kappa2", "vbar2",
                "sigma2", "kappa_u", "mu_v", "mu_u")
        _corr("rho1", self.rho1)
        _corr("rho2", self.rho2)
        if not 0 <= self.rho_u <= 1:
            raise DomainError(f"rho_u must lie in [0, 1], got {self.rho_u}")
        if len(self.c_minus) != 4 or len(self.c_plus) != 4:
            raise DomainError("intensity coefficients are 4-tuples (c0, c1, c2, cu)")
        if min(self.c_minus) < 0 or min(self.c_plus) < 0:
            raise DomainError("intensity coefficients must be nonnegative")
        if not self.lam_minus > 0:
            raise DomainError("lam_minus must be positive")
        if not self.lam_plus > 1:
            raise DomainError("lam_plus must exceed 1 for E[e^x] to be finite")

    def compensator(self, c_minus, c_plus):
        """Intensity-weighted E[e^x - 1] of the price jumps."""
        return (c_minus * (self.lam_minus / (self.lam_minus + 1.0) - 1.0)
                + c_plus * (self.lam_plus / (self.lam_plus - 1.0) - 1.0))


MODELS = {cls.tag: cls for cls in (BatesParams, KouHestonParams, AblParams, ThreeFdeParams)}

# Parameter tables used in the experiments
BATES_TABLE1 = BatesParams()
KOU_HESTON_TABLE4 = KouHestonParams()
ABL_TABLE5_PROXY = AblParams()
ABL_TABLE5_TARGET = AblParams(lam_j=0.25, mu_j=0.18, sigma_j=0.60)
THREEFDE_TABLE6_PROXY = ThreeFdeParams()
THREEFDE_TABLE6_TARGET = ThreeFdeParams(vbar2=0.03, sigma2=0.06, rho2=-0.6,
                                        c_minus=(0.0, 1.0, 0.1, 7.0),
                                        c_plus=(0.05, 15.0, 18.0, 0.0),
                                        lam_minus=10.0, lam_plus=5.7)


def model_from_dict(tag: str, params: dict):
    if tag not in MODELS:
        raise DomainError(f"unknown model tag {tag!r}; expected one of {sorted(MODELS)}")
    cls = MODELS[tag]
    names = {f.name for f in fields(cls)}
    unknown = set(params) - names
    if unknown:
        raise DomainError(f"unknown {tag} parameter(s): {sorted(unknown)}")
    clean = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    model = cls(**clean)
    model.validate()
    return model


def model_to_dict(model) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(model).items()}


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 200_000
    n_steps: int = 252
    seed: int = 0
    variance_scheme: str = "full-truncation"

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise DomainError("n_paths and n_steps must be at least 1")
        if self.variance_scheme not in SCHEMES:
            raise DomainError(f"variance_scheme must be one of {SCHEMES}")


def cir_step(v, kappa, theta, sigma, dt, dw, scheme):
    """One square-root variance step.

    Returns ``(v_next, v_used)``; ``v_used`` is the nonnegative level that
    drove this step's drift and diffusion.  Under full truncation the
    carried state may dip below zero but only its positive part is used.
    """
    if scheme == "full-truncation":
        vp = np.maximum(v, 0.0)
        return v + kappa * (theta - vp) * dt + sigma * np.sqrt(vp) * dw, vp
    vp = np.abs(v)
    return np.abs(vp + kappa * (theta - vp) * dt + sigma * np.sqrt(vp) * dw), vp


def _bates_block(m: BatesParams, rng, n, n_steps, dt, scheme):
    log_s = np.full(n, math.log(m.S0))
    v = np.full(n, float(m.v0))
    drift = (m.r - m.lam * m.jump_mean) * dt
    rho_c = math.sqrt(1.0 - m.rho ** 2)
    sq = math.sqrt(dt)
    for _ in range(n_steps):
        z1 = rng.standard_normal(n)
        z2 = rng.standard_normal(n)
        nj = rng.poisson(m.lam * dt, n)
        zj = rng.standard_normal(n)
        v, vp = cir_step(v, m.kappa, m.theta, m.eta, dt, sq * (m.rho * z1 + rho_c * z2), scheme)
        log_s += drift - 0.5 * vp * dt + np.sqrt(vp) * sq * z1 + nj * m.mu_j + np.sqrt(nj) * m.sigma_j * zj
    return np.exp(log_s)


def _kou_block(m: KouHestonParams, rng, n, n_steps, dt, scheme):
    log_s = np.full(n, math.log(m.S0))
    v = np.full(n, float(m.v0))
    drift = (m.r - m.q - m.lam * m.kappa_j) * dt
    rho_c = math.sqrt(1.0 - m.rho ** 2)
    sq = math.sqrt(dt)
    for _ in range(n_steps):
        z1 = rng.standard_normal(n)
        z2 = rng.standard_normal(n)
        nj = rng.poisson(m.lam * dt, n)
        v, vp = cir_step(v, m.kappa, m.theta, m.sigma_v, dt, sq * (m.rho * z1 + rho_c * z2), scheme)
        log_s += drift - 0.5 * vp * dt + np.sqrt(vp) * sq * z1
        total = int(nj.sum())
        if total:
            owner = np.repeat(np.arange(n), nj)
            up = rng.random(total) < m.p_up
            size = np.where(up, rng.exponential(1.0 / m.eta1, total),
                            -rng.exponential(1.0 / m.eta2, total))
            np.add.at(log_s, owner, size)
    return np.exp(log_s)


def _abl_block(m: AblParams, rng, n, n_steps, dt, scheme):
    k = len(m.kappa)
    log_s = np.full(n, math.log(m.S0))
    v = np.tile(np.asarray(m.v0, dtype=float)[:, None], (1, n))
    kappa = np.asarray(m.kappa, dtype=float)[:, None]
    theta = np.asarray(m.theta, dtype=float)[:, None]
    sigma = np.asarray(m.sigma, dtype=float)[:, None]
    rho = np.asarray(m.rho, dtype=float)
    resid = m.residual_weight
    sq = math.sqrt(dt)
    drift = m.drift * dt
    for _ in range(n_steps):
        zw = rng.standard_normal((k, n))
        z0 = rng.standard_normal(n)
        nj = rng.poisson(m.lam_j * dt, n)
        zj = rng.standard_normal(n)
        v, vp = cir_step(v, kappa, theta, sigma, dt, sq * zw, scheme)
        var = vp.sum(axis=0)
        dz = rho @ zw + resid * z0
        log_s += drift - 0.5 * var * dt + np.sqrt(var) * sq * dz + nj * m.mu_j + np.sqrt(nj) * m.sigma_j * zj
    return np.exp(log_s)


def _sum_exponentials(rng, counts, rate, power=1):
    """Per-path sums of ``counts[i]`` Exp(rate) draws raised to ``power``."""
    out = np.zeros(counts.size)
    total = int(counts.sum())
    if total:
        draws = rng.exponential(1.0 / rate, total) ** power
        np.add.at(out, np.repeat(np.arange(counts.size), counts), draws)
    return out


def _threefde_block(m: ThreeFdeParams, rng, n, n_steps, dt, scheme, tau):
    log_f = np.full(n, math.log(m.S0) + m.r * tau)
    v1 = np.full(n, float(m.v1_0))
    v2 = np.full(n, float(m.v2_0))
    u = np.full(n, float(m.u_0))
    cm = np.asarray(m.c_minus, dtype=float)
    cp = np.asarray(m.c_plus, dtype=float)
    r1 = math.sqrt(1.0 - m.rho1 ** 2)
    r2 = math.sqrt(1.0 - m.rho2 ** 2)
    decay = math.exp(-m.kappa_u * dt)
    sq = math.sqrt(dt)
    for _ in range(n_steps):
        z = rng.standard_normal((5, n))
        # intensities from the start-of-step (left-limit) state
        v1p, v2p, up = np.maximum(v1, 0.0), np.maximum(v2, 0.0), np.maximum(u, 0.0)
        c_minus = cm[0] + cm[1] * v1p + cm[2] * v2p + cm[3] * up
        c_plus = cp[0] + cp[1] * v1p + cp[2] * v2p + cp[3] * up
        n_neg = rng.poisson(c_minus * dt)
        n_pos = rng.poisson(c_plus * dt)
        n_y = rng.poisson(c_minus * dt)
        # jump sizes: |x| ~ Exp(lam_minus) for x < 0, x ~ Exp(lam_plus) for x > 0, |y| ~ Exp(lam_minus)
        neg_abs = np.zeros(n)
        neg_sq = np.zeros(n)
        total = int(n_neg.sum())
        if total:
            owner = np.repeat(np.arange(n), n_neg)
            draws = rng.exponential(1.0 / m.lam_minus, total)
            np.add.at(neg_abs, owner, draws)
            np.add.at(neg_sq, owner, draws ** 2)
        pos = _sum_exponentials(rng, n_pos, m.lam_plus)
        y_sq = _sum_exponentials(rng, n_y, m.lam_minus, power=2)

        v1, v1p = cir_step(v1, m.kappa1, m.vbar1, m.sigma1, dt, sq * (m.rho1 * z[0] + r1 * z[3]), scheme)
        v2, v2p = cir_step(v2, m.kappa2, m.vbar2, m.sigma2, dt, sq * (m.rho2 * z[1] + r2 * z[4]), scheme)
        var = v1p + v2p + m.eta ** 2 * up
        diff = sq * (np.sqrt(v1p) * z[0] + np.sqrt(v2p) * z[1] + m.eta * np.sqrt(up) * z[2])
        log_f += (-0.5 * var - m.compensator(c_minus, c_plus)) * dt + diff - neg_abs + pos
        v1 = v1 + m.mu_v * neg_sq
        u = u * decay + m.mu_u * ((1.0 - m.rho_u) * neg_sq + m.rho_u * y_sq)
    return np.exp(log_f)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def simulate_block(model, tau: float, cfg: SimConfig, block: int) -> np.ndarray:
    """Terminal prices of paths ``block*BLOCK .. (block+1)*BLOCK - 1``."""
    rng = _block_rng(cfg.seed, block)
    dt = tau / cfg.n_steps
    if isinstance(model, BatesParams):
        return _bates_block(model, rng, BLOCK, cfg.n_steps, dt, cfg.variance_scheme)
    if isinstance(model, KouHestonParams):
        return _kou_block(model, rng, BLOCK, cfg.n_steps, dt, cfg.variance_scheme)
    if isinstance(model, AblParams):
        return _abl_block(model, rng, BLOCK, cfg.n_steps, dt, cfg.variance_scheme)
    if isinstance(model, ThreeFdeParams):
        return _threefde_block(model, rng, BLOCK, cfg.n_steps, dt, cfg.variance_scheme, tau)
    raise DomainError(f"unsupported model {type(model).__name__}")


def simulate_terminals(model, tau: float, cfg: SimConfig, block_order=None) -> np.ndarray:
    """``cfg.n_paths`` risk-neutral terminal prices at horizon ``tau``.

    ``block_order`` permutes the order in which blocks are computed; it
    exists to demonstrate that the output does not depend on it.
    """
    model.validate()
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    n_blocks = -(-cfg.n_paths // BLOCK)
    order = range(n_blocks) if block_order is None else block_order
    if sorted(order) != list(range(n_blocks)):
        raise DomainError("block_order must be a permutation of the block indices")
    out = np.empty(n_blocks * BLOCK)
    for b in order:
        out[b * BLOCK:(b + 1) * BLOCK] = simulate_block(model, tau, cfg, b)
    return out[:cfg.n_paths]


def _sorted_suffix(terminals):
    s = np.sort(np.asarray(terminals, dtype=float))
    if s.size == 0:
        raise DomainError("no terminal prices")
    suffix = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]])
    return s, suffix


def mc_call_prices(terminals, r: float, tau: float, strikes) -> np.ndarray:
    """Discounted mean call payoff, one value per strike."""
    s, suffix = _sorted_suffix(terminals)
    k = np.atleast_1d(np.asarray(strikes, dtype=float))
    idx = np.searchsorted(s, k, side="right")
    n_above = s.size - idx
    payoff = (suffix[idx] - k * n_above) / s.size
    return math.exp(-r * tau) * payoff


def mc_put_prices(terminals, r: float, tau: float, strikes) -> np.ndarray:
    s, suffix = _sorted_suffix(terminals)
    k = np.atleast_1d(np.asarray(strikes, dtype=float))
    idx = np.searchsorted(s, k, side="right")
    below_sum = suffix[0] - suffix[idx]
    payoff = (k * idx - below_sum) / s.size
    return math.exp(-r * tau) * payoff


def mc_price_stderr(terminals, r: float, tau: float, strikes, kind: str = "call") -> np.ndarray:
    s = np.asarray(terminals, dtype=float)
    k = np.atleast_1d(np.asarray(strikes, dtype=float))[:, None]
    pay = np.maximum(s - k, 0.0) if kind == "call" else np.maximum(k - s, 0.0)
    return math.exp(-r * tau) * pay.std(axis=1, ddof=1) / math.sqrt(s.size)


def curve_from_terminals(terminals, strikes, spot: float, r: float, q: float, tau: float,
                         min_points: int = 3) -> tuple[IvCurve, list[OptionQuote]]:
    """Invert out-of-the-money Monte Carlo prices into an implied-vol curve.

    Puts are used below the forward and calls at or above it, which keeps
    the Monte Carlo noise in deep in-the-money wings out of the inversion.
    Returned quotes are calls (put prices converted by parity on the
    model forward) so that every output row has the same kind.
    """
    strikes = np.sort(np.atleast_1d(np.asarray(strikes, dtype=float)))
    top = float(np.max(terminals))
    if np.any(strikes <= 0) or np.any(strikes >= top):
        raise DomainError(f"strikes must lie strictly inside (0, {top:.4g})")
    fwd = spot * math.exp((r - q) * tau)
    puts = strikes < fwd
    prices = np.where(puts, mc_put_prices(terminals, r, tau, strikes),
                      mc_call_prices(terminals, r, tau, strikes))
    keep_k, keep_s, quotes = [], [], []
    for k, p, is_put in zip(strikes, prices, puts):
        quote = OptionQuote(float(k), float(p), "put" if is_put else "call", tau, spot, r, q)
        try:
            sig = implied_vol(quote)
        except (NoArbitrageError, NumericError) as exc:
            warnings.warn(f"dropping strike {k:g}: {exc}", stacklevel=2)
            continue
        keep_k.append(k)
        keep_s.append(sig)
        call = bs_price(spot, k, r, q, sig, tau, "call")
        quotes.append(OptionQuote(float(k), float(call), "call", tau, spot, r, q))
    if len(keep_k) < min_points:
        raise InsufficientDataError(f"only {len(keep_k)} strikes survived the no-arbitrage filter")
    return IvCurve.from_strikes(keep_k, keep_s, spot, tau, r, q), quotes


def build_liquid_curve(model, strikes, tau: float, cfg: SimConfig) -> IvCurve:
    terminals = simulate_terminals(model, tau, cfg)
    curve, _ = curve_from_terminals(terminals, strikes, model.S0, model.r, model.q, tau)
    return curve


def translate_curve(curve: IvCurve, vol_factor: float = 0.9, strike_shift: float = 20.0,
                    mode: str = "multiplicative") -> IvCurve:
    """Shift a curve: scale (or offset) the vols, move strikes by a fixed amount."""
    if mode == "multiplicative":
        if not vol_factor > 0:
            raise DomainError("vol_factor must be positive")
        sigma = curve.sigma * vol_factor
    elif mode == "additive":
        sigma = curve.sigma + vol_factor
    else:
        raise DomainError(f"unknown vol_shift_mode {mode!r}")
    strikes = curve.strikes + strike_shift
    return IvCurve.from_strikes(strikes, sigma, curve.spot, curve.tau, curve.rate, curve.dividend)


@dataclass(frozen=True)
class CensorRule:
    """Sample ``n`` listed strikes from a moneyness band on one side of spot.

    For calls, "itm" means strikes in [spot(1 - hi), spot(1 - lo)] and
    "otm" strikes in [spot(1 + lo), spot(1 + hi)].
    """
    side: str = "itm"
    band: tuple = (0.10, 0.25)
    n: int = 3
    strike_step: float = 1.0

    def strike_range(self, spot: float) -> tuple[float, float]:
        lo, hi = self.band
        if self.side == "itm":
            return spot * (1 - hi), spot * (1 - lo)
        if self.side == "otm":
            return spot * (1 + lo), spot * (1 + hi)
        raise DomainError(f"side must be 'itm' or 'otm', got {self.side!r}")


def interpolate_iv(curve: IvCurve, strikes) -> np.ndarray:
    return np.interp(np.asarray(strikes, dtype=float), curve.strikes, curve.sigma)


def censor_to_illiquid(curve: IvCurve, picks=None, rule: CensorRule | None = None,
                       seed: int = 0) -> list[OptionQuote]:
    """Keep only a handful of call quotes from a dense curve.

    Either ``picks`` lists the strikes, or ``rule`` samples them.  IVs
    between curve points are interpolated linearly.
    """
    if picks is None and rule is None:
        raise DomainError("give either explicit strike picks or a sampling rule")
    lo_k, hi_k = curve.strikes[0], curve.strikes[-1]
    if picks is not None:
        strikes = np.sort(np.asarray(list(picks), dtype=float))
        if strikes.size == 0:
            raise DomainError("empty strike picks")
        if strikes[0] < lo_k or strikes[-1] > hi_k:
            raise DomainError(f"picks must lie within the curve's strike range [{lo_k:g}, {hi_k:g}]")
    else:
        a, b = rule.strike_range(curve.spot)
        a, b = max(a, lo_k), min(b, hi_k)
        step = rule.strike_step
        listed = np.arange(math.ceil(a / step - 1e-9), math.floor(b / step + 1e-9) + 1) * step
        if listed.size < rule.n:
            raise DomainError(f"band [{a:g}, {b:g}] holds {listed.size} listed strikes, need {rule.n}")
        rng = np.random.default_rng(seed)
        strikes = np.sort(rng.choice(listed, size=rule.n, replace=False))
    sig = interpolate_iv(curve, strikes)
    prices = bs_price(curve.spot, strikes, curve.rate, curve.dividend, sig, curve.tau, "call")
    return [OptionQuote(float(k), float(p), "call", curve.tau, curve.spot, curve.rate, curve.dividend)
            for k, p in zip(strikes, np.atleast_1d(prices))]
