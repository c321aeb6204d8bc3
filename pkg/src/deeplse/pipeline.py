"""End-to-end transfer experiment: scenario, pretraining, fine-tuning, densities.

The stages mirror the command-line subcommands, but here everything is
kept in memory; the CLI persists each intermediate result instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_smoothing_spline

from .config import ExperimentConfig
from .market_sim import (censor_to_illiquid, curve_from_terminals, interpolate_iv,
                         simulate_terminals, translate_curve)
from .network import DeepLseNet, forward, init
from .pricing import IvCurve, OptionQuote, bs_price, curve_from_quotes
from .rnd import (PricingReport, RndEstimate, StrikeGrid, extract_rnd, fit_parametric,
                  l1_distance, pricing_report, quadratic_spline)
from .training import FineTuneTrace, fine_tune, pretrain

METHODS = ("Deep-LSE", "Quadratic Splines", "Parametric Lognormal", "Parametric Normal")


@dataclass(frozen=True)
class MarketScenario:
    liquid: IvCurve
    liquid_quotes: list
    target: IvCurve                  # dense curve of the illiquid market
    illiquid: list                   # the few quotes the models get to see
    truth_rnd: RndEstimate

    @property
    def grid(self) -> StrikeGrid:
        return self.truth_rnd.grid


@dataclass
class TransferResult:
    scenario: MarketScenario
    pretrained: DeepLseNet
    transferred: DeepLseNet
    trace: FineTuneTrace
    pretrain_losses: list
    rnds: dict = field(default_factory=dict)


class ClampedIv:
    """Wrap an IV function of moneyness so it is held constant outside [lo, hi]."""

    def __init__(self, fn, lo, hi):
        self.fn, self.lo, self.hi = fn, lo, hi

    def __call__(self, m):
        return self.fn(np.clip(np.asarray(m, dtype=float), self.lo, self.hi))


def smooth_curve(curve: IvCurve) -> ClampedIv:
    """Cubic smoothing spline (GCV-chosen penalty) through a dense IV curve."""
    spl = make_smoothing_spline(curve.moneyness, curve.sigma)
    return ClampedIv(spl, curve.moneyness[0], curve.moneyness[-1])


def net_iv(net: DeepLseNet):
    return lambda m: forward(net, np.asarray(m, dtype=float))


def _simulated_curve(model, cfg: ExperimentConfig):
    terminals = simulate_terminals(model, cfg.tau, cfg.sim)
    return curve_from_terminals(terminals, cfg.liquid_strikes, model.S0, model.r, model.q, cfg.tau)


def truth_density(target: IvCurve, grid: StrikeGrid, cfg: ExperimentConfig) -> RndEstimate:
    if cfg.truth == "smoothing_spline":
        return extract_rnd(smooth_curve(target), grid, method="smoothing_spline")
    net = init(cfg.network.depth, cfg.network.widths, 1, seed=cfg.seed, scale=cfg.network.init_scale)
    net = pretrain(net, target, cfg.pretrain)
    return extract_rnd(net_iv(net), grid, method="deep_lse")


def build_scenario(cfg: ExperimentConfig) -> MarketScenario:
    """Simulate the liquid market, derive the illiquid one and censor it."""
    model = cfg.model
    liquid, liquid_quotes = _simulated_curve(model, cfg)
    if cfg.target.mode == "translate":
        target = translate_curve(liquid, cfg.target.vol_factor, cfg.target.strike_shift,
                                 cfg.target.vol_shift_mode)
    else:
        # a second parameter set for the illiquid market; common random numbers
        target, _ = _simulated_curve(cfg.target.model, cfg)
    illiquid = censor_to_illiquid(target, picks=cfg.censor.picks, rule=cfg.censor.rule, seed=cfg.seed)
    grid = cfg.grid.build(target.spot, target.rate, target.dividend, target.tau)
    truth = truth_density(target, grid, cfg)
    return MarketScenario(liquid, liquid_quotes, target, illiquid, truth)


def evaluation_quotes(target: IvCurve, strikes) -> list[OptionQuote]:
    """Call quotes of the illiquid market at the evaluation strikes."""
    ks = np.asarray(strikes, dtype=float)
    sig = interpolate_iv(target, ks)
    prices = np.atleast_1d(bs_price(target.spot, ks, target.rate, target.dividend, sig, target.tau))
    return [OptionQuote(float(k), float(p), "call", target.tau, target.spot, target.rate, target.dividend)
            for k, p in zip(ks, prices)]


def run_pretrain(curve: IvCurve, cfg: ExperimentConfig) -> tuple[DeepLseNet, list]:
    net = init(cfg.network.depth, cfg.network.widths, 1, seed=cfg.seed, scale=cfg.network.init_scale)
    history: list = []
    net = pretrain(net, curve, cfg.pretrain, history=history)
    return net, history


def run_transfer(net: DeepLseNet, quotes, cfg: ExperimentConfig,
                 run_to_completion: bool = False) -> tuple[DeepLseNet, FineTuneTrace]:
    curve = curve_from_quotes(quotes)
    prior = cfg.prior.spec_for(net)
    return fine_tune(net, curve.moneyness, curve.sigma, cfg.fine_tune, prior,
                     window=cfg.prior.window, run_to_completion=run_to_completion)


def baseline_rnds(quotes, grid: StrikeGrid) -> dict[str, RndEstimate]:
    curve = curve_from_quotes(quotes)
    return {
        "Quadratic Splines": extract_rnd(quadratic_spline(curve.moneyness, curve.sigma), grid,
                                         method="quadratic_spline"),
        "Parametric Lognormal": fit_parametric(quotes, "lognormal", grid),
        "Parametric Normal": fit_parametric(quotes, "normal", grid),
    }


def run_experiment(cfg: ExperimentConfig, scenario: MarketScenario | None = None,
                   run_to_completion: bool = False) -> TransferResult:
    scenario = scenario or build_scenario(cfg)
    pre, losses = run_pretrain(scenario.liquid, cfg)
    post, trace = run_transfer(pre, scenario.illiquid, cfg, run_to_completion)
    rnds = {"Deep-LSE": extract_rnd(net_iv(post), scenario.grid, method="deep_lse_transfer")}
    rnds.update(baseline_rnds(scenario.illiquid, scenario.grid))
    return TransferResult(scenario, pre, post, trace, losses, rnds)


def l1_table(result: TransferResult) -> dict[str, float]:
    return {name: l1_distance(rnd, result.scenario.truth_rnd) for name, rnd in result.rnds.items()}


def pricing_table(rnds: dict[str, RndEstimate], quotes) -> dict[str, PricingReport]:
    return {name: pricing_report(rnd, quotes) for name, rnd in rnds.items()}


def seed_sweep(cfg: ExperimentConfig, seeds, run_to_completion: bool = False):
    """Run the experiment once per seed; yields (seed, result)."""
    for s in seeds:
        yield s, run_experiment(cfg.with_seed(int(s)), run_to_completion=run_to_completion)
