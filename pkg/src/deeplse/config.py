"""Experiment configuration: JSON files mapped onto validated dataclasses.

Every error is raised as :class:`ConfigError` carrying the dotted path of
the offending field (``model.params.rho``), plus line and column for
JSON syntax errors.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .market_sim import MODELS, CensorRule, SimConfig, model_from_dict, model_to_dict
from .network import SieveBox
from .rnd import StrikeGrid
from .training import PriorSpec, TrainConfig

TRUTH_METHODS = ("smoothing_spline", "deep_lse")


@dataclass(frozen=True)
class TargetSpec:
    """How the illiquid market is derived from the liquid one."""
    mode: str = "translate"            # "translate" or "model"
    vol_factor: float = 0.9
    strike_shift: float = 20.0
    vol_shift_mode: str = "multiplicative"
    model: object | None = None        # second parameter set when mode == "model"


@dataclass(frozen=True)
class CensorSpec:
    picks: tuple[float, ...] | None = (82.0, 97.0, 98.0)
    rule: CensorRule | None = None


@dataclass(frozen=True)
class NetworkSpec:
    widths: tuple[int, ...] = (3, 3)
    input_dim: int = 1
    init_scale: float = 1.0

    @property
    def depth(self) -> int:
        return len(self.widths)


@dataclass(frozen=True)
class PriorConfig:
    sigma_p: float = 1.0
    tau_q: float | None = None
    c: float = 1e-3
    window: int = 10

    def spec_for(self, net) -> PriorSpec:
        return PriorSpec.around(net, sigma_p=self.sigma_p, tau_q=self.tau_q, c=self.c)


@dataclass(frozen=True)
class GridSpec:
    lo: float = 0.5
    hi: float = 1.5
    n: int = 401

    def build(self, spot, rate, dividend, tau) -> StrikeGrid:
        return StrikeGrid.from_moneyness(self.lo, self.hi, self.n, spot=spot, rate=rate,
                                         dividend=dividend, tau=tau)


@dataclass(frozen=True)
class ExperimentConfig:
    model: object = field(default_factory=lambda: MODELS["bates"]())
    target: TargetSpec = TargetSpec()
    tau: float = 1.0
    seed: int = 0
    sim: SimConfig = SimConfig()
    liquid_strikes: tuple[float, ...] = tuple(np.arange(30.0, 181.0, 2.0))
    censor: CensorSpec = CensorSpec()
    network: NetworkSpec = NetworkSpec()
    pretrain: TrainConfig = TrainConfig(learning_rate=1e-2, max_epochs=5000, lr_decay=0.01)
    fine_tune: TrainConfig = TrainConfig(learning_rate=1e-4, max_epochs=5000)
    prior: PriorConfig = PriorConfig()
    sieve: SieveBox | None = None
    # wide enough that the Bates tau = 1 truth loses < 1e-3 mass outside the grid
    grid: GridSpec = GridSpec(0.1, 3.5, 681)
    truth: str = "smoothing_spline"
    eval_strikes: tuple[float, ...] = (90.0, 95.0, 100.0, 105.0, 110.0, 115.0)
    out_dir: str = "out"

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed, sim=replace(self.sim, seed=seed),
                       pretrain=replace(self.pretrain, seed=seed),
                       fine_tune=replace(self.fine_tune, seed=seed))


def _section(doc, key, path):
    value = doc.get(key, {})
    if value is None:
        return None
    if not isinstance(value, dict):
        raise ConfigError(f"{path}{key}: expected an object", field=f"{path}{key}")
    return value


def _build(cls, doc: dict, where: str, skip=()):
    """Instantiate a dataclass from a dict, naming unknown or invalid fields."""
    names = {f.name for f in fields(cls)} - set(skip)
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown field", field=f"{where}.{unknown[0]}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}", field=_guess_field(where, exc, doc)) from None


def _guess_field(where, exc, doc):
    msg = str(exc)
    hits = [k for k in doc if k in msg.split() or msg.startswith(k)]
    return f"{where}.{hits[0]}" if hits else where


def _model(doc: dict, where: str):
    tag = doc.get("tag")
    if tag not in MODELS:
        raise ConfigError(f"{where}.tag: unknown model tag {tag!r}; expected one of {sorted(MODELS)}",
                          field=f"{where}.tag")
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError(f"{where}.params: expected an object", field=f"{where}.params")
    try:
        return model_from_dict(tag, params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}.params: {exc}",
                          field=_guess_field(f"{where}.params", exc, params)) from None


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    base = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field", field=unknown[0])
    kw = {}
    if "model" in doc:
        kw["model"] = _model(_section(doc, "model", ""), "model")
    if "target" in doc:
        t = dict(_section(doc, "target", ""))
        model = None
        if t.get("mode") == "model":
            model = _model({"tag": t.pop("tag", None), "params": t.pop("params", {})}, "target")
        spec = _build(TargetSpec, t, "target", skip=("model",))
        if spec.mode not in ("translate", "model"):
            raise ConfigError("target.mode: must be 'translate' or 'model'", field="target.mode")
        if spec.vol_shift_mode not in ("multiplicative", "additive"):
            raise ConfigError("target.vol_shift_mode: must be 'multiplicative' or 'additive'",
                              field="target.vol_shift_mode")
        kw["target"] = replace(spec, model=model)
    for key in ("tau", "seed", "truth", "out_dir"):
        if key in doc:
            kw[key] = doc[key]
    if "sim" in doc:
        kw["sim"] = _build(SimConfig, _section(doc, "sim", ""), "sim")
    if "liquid_strikes" in doc:
        kw["liquid_strikes"] = _strike_list(doc["liquid_strikes"], "liquid_strikes")
    if "eval_strikes" in doc:
        kw["eval_strikes"] = _strike_list(doc["eval_strikes"], "eval_strikes")
    if "censor" in doc:
        c = _section(doc, "censor", "")
        if "picks" in c:
            kw["censor"] = CensorSpec(picks=tuple(float(v) for v in c["picks"]), rule=None)
        else:
            kw["censor"] = CensorSpec(picks=None, rule=_build(CensorRule, c, "censor"))
    if "network" in doc:
        kw["network"] = _build(NetworkSpec, _section(doc, "network", ""), "network")
    sieve = None
    if doc.get("sieve") is not None:
        sieve = _build(SieveBox, _section(doc, "sieve", ""), "sieve")
        kw["sieve"] = sieve
    for key in ("pretrain", "fine_tune"):
        sec = dict(getattr(base, key).__dict__)
        sec.update(sieve_box=sieve)
        if key in doc:
            given = _section(doc, key, "")
            if "sieve_box" in given:
                raise ConfigError(f"{key}.sieve_box: set the box in the top-level 'sieve' section",
                                  field=f"{key}.sieve_box")
            sec.update(given)
        kw[key] = _build(TrainConfig, sec, key)
    if "prior" in doc:
        kw["prior"] = _build(PriorConfig, _section(doc, "prior", ""), "prior")
        try:
            PriorSpec(np.zeros(1), kw["prior"].sigma_p, kw["prior"].tau_q, kw["prior"].c)
        except ValueError as exc:
            raise ConfigError(f"prior: {exc}", field="prior") from None
    if "grid" in doc:
        kw["grid"] = _build(GridSpec, _section(doc, "grid", ""), "grid")
    cfg = replace(base, **kw)
    _check(cfg)
    # the top-level seed drives simulation, initialization and training alike
    return cfg.with_seed(cfg.seed)


def _strike_list(value, where):
    if isinstance(value, dict):
        try:
            lo, hi, step = float(value["lo"]), float(value["hi"]), float(value["step"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{where}: expected a list or {{lo, hi, step}}", field=where) from None
        if step <= 0 or hi <= lo:
            raise ConfigError(f"{where}: need lo < hi and step > 0", field=where)
        return tuple(np.arange(lo, hi + 0.5 * step, step))
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a nonempty list of strikes", field=where)
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: strikes must be numbers", field=where) from None


def _check(cfg: ExperimentConfig):
    if not (isinstance(cfg.tau, (int, float)) and cfg.tau > 0):
        raise ConfigError("tau: must be a positive number", field="tau")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed: must be a nonnegative integer", field="seed")
    if cfg.truth not in TRUTH_METHODS:
        raise ConfigError(f"truth: must be one of {TRUTH_METHODS}", field="truth")
    if cfg.network.depth < 1 or min(cfg.network.widths) < 1 or cfg.network.input_dim < 1:
        raise ConfigError("network: widths and input_dim must be positive", field="network.widths")
    if not 0 < cfg.grid.lo < cfg.grid.hi or cfg.grid.n < 5:
        raise ConfigError("grid: need 0 < lo < hi and n >= 5", field="grid")
    if cfg.sieve is not None and cfg.sieve.depth != cfg.network.depth:
        raise ConfigError("sieve: one cap per network layer required", field="sieve")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def train(tc: TrainConfig):
        d = dict(tc.__dict__)
        d.pop("sieve_box")
        d.pop("seed")
        return d

    def strikes(ks):
        ks = np.asarray(ks, dtype=float)
        steps = np.diff(ks)
        if ks.size > 2 and np.allclose(steps, steps[0], rtol=0, atol=1e-12):
            return {"lo": float(ks[0]), "hi": float(ks[-1]), "step": float(steps[0])}
        return [float(k) for k in ks]

    target = {k: v for k, v in cfg.target.__dict__.items() if k != "model"}
    if cfg.target.model is not None:
        target.update(tag=cfg.target.model.tag, params=model_to_dict(cfg.target.model))
    censor = ({"picks": list(cfg.censor.picks)} if cfg.censor.picks is not None
              else {**cfg.censor.rule.__dict__, "band": list(cfg.censor.rule.band)})
    return {
        "model": {"tag": cfg.model.tag, "params": model_to_dict(cfg.model)},
        "target": target,
        "tau": cfg.tau,
        "seed": cfg.seed,
        "sim": {k: v for k, v in cfg.sim.__dict__.items() if k != "seed"},
        "liquid_strikes": strikes(cfg.liquid_strikes),
        "censor": censor,
        "network": {**cfg.network.__dict__, "widths": list(cfg.network.widths)},
        "pretrain": train(cfg.pretrain),
        "fine_tune": train(cfg.fine_tune),
        "prior": dict(cfg.prior.__dict__),
        "sieve": None if cfg.sieve is None else {k: list(v) if isinstance(v, tuple) else v
                                                 for k, v in cfg.sieve.__dict__.items()},
        "grid": dict(cfg.grid.__dict__),
        "truth": cfg.truth,
        "eval_strikes": strikes(cfg.eval_strikes),
        "out_dir": cfg.out_dir,
    }


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return config_from_dict(doc)


def save_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")
    return path
