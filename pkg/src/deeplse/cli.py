"""Command-line driver: ``deeplse {simulate,pretrain,transfer,rnd,evaluate,bounds}``.

Stages talk to each other only through files in the output directory, so
each one can be re-run on its own or fed user-supplied CSVs.

Exit codes: 0 success, 1 numeric failure, 2 configuration or schema error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import csvio
from .config import ExperimentConfig, load_config, save_config
from .errors import DomainError, NumericError, SchemaError
from .maxaffine import delta_bound
from .network import envelope_bound, growth_check, load_checkpoint, save_checkpoint
from .pipeline import (baseline_rnds, build_scenario, evaluation_quotes, net_iv, pricing_table,
                       run_pretrain, run_transfer)
from .pricing import OptionQuote, bs_price, curve_from_quotes
from .rnd import RndEstimate, StrikeGrid, extract_rnd, l1_distance, price_from_rnd

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


def _out(args, cfg) -> Path:
    out = Path(args.out if args.out is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _market_meta(quotes) -> dict:
    q = quotes[0]
    return {"spot": q.spot, "rate": q.rate, "dividend": q.dividend, "tau": q.tau}


def cmd_simulate(args, cfg: ExperimentConfig) -> int:
    out = _out(args, cfg)
    sc = build_scenario(cfg)
    t = sc.target
    rows = []
    for curve, tag in ((sc.liquid, "liquid"), (t, "truth")):
        prices = bs_price(curve.spot, curve.strikes, curve.rate, curve.dividend, curve.sigma, curve.tau)
        rows += [(k, p, s, tag) for k, p, s in zip(curve.strikes, prices, curve.sigma)]
    ill = curve_from_quotes(sc.illiquid)
    rows += [(q.strike, q.price, s, "illiquid") for q, s in zip(sc.illiquid, ill.sigma)]
    csvio.write_scenario(out / "scenario.csv", rows)
    csvio.write_chain(out / "liquid_chain.csv", sc.liquid_quotes)
    csvio.write_chain(out / "illiquid_chain.csv", sc.illiquid)
    csvio.write_chain(out / "eval_chain.csv", evaluation_quotes(t, cfg.eval_strikes))
    csvio.write_rnd(out / "truth_rnd.csv", sc.truth_rnd)
    save_config(cfg, out / "config.json")
    print(f"liquid curve: {len(sc.liquid)} points; illiquid quotes at "
          f"{[q.strike for q in sc.illiquid]}; files in {out}")
    return EXIT_OK


def cmd_pretrain(args, cfg: ExperimentConfig) -> int:
    out = _out(args, cfg)
    quotes = csvio.read_chain(args.chain or out / "liquid_chain.csv")
    net, losses = run_pretrain(curve_from_quotes(quotes), cfg)
    save_checkpoint(net, out / "pretrained.json")
    csvio.write_losses(out / "pretrain_loss.csv", losses)
    print(f"pretrain MSE {losses[0]:.3e} -> {losses[-1]:.3e}")
    return EXIT_OK


def cmd_transfer(args, cfg: ExperimentConfig) -> int:
    out = _out(args, cfg)
    net0 = load_checkpoint(args.checkpoint or out / "pretrained.json")
    quotes = csvio.read_chain(args.chain or out / "illiquid_chain.csv")
    net, trace = run_transfer(net0, quotes, cfg, run_to_completion=args.full_trace)
    save_checkpoint(net, out / "transfer.json")
    csvio.write_trace(out / "trace.csv", trace)
    stop = trace.stop_epoch
    print("no stationary point before max_epochs" if stop is None else
          f"stopped at epoch {stop}: risk {trace.risk[stop]:.3e}, B {trace.objective[stop]:.3e}")
    return EXIT_OK


def _grid_from_features(path, net, meta) -> StrikeGrid:
    feats = csvio.read_features(path)
    if feats.shape[1] != net.input_dim:
        raise SchemaError(f"{path}: feature file has {feats.shape[1]} column(s), "
                          f"checkpoint expects {net.input_dim}")
    if net.input_dim != 1:
        raise SchemaError("density extraction needs a one-input (moneyness) network")
    return StrikeGrid(feats[:, 0] * meta["spot"], **meta)


def cmd_rnd(args, cfg: ExperimentConfig) -> int:
    out = _out(args, cfg)
    net = load_checkpoint(args.checkpoint or out / "transfer.json")
    meta = _market_meta(csvio.read_chain(args.chain or out / "illiquid_chain.csv"))
    if args.features:
        grid = _grid_from_features(args.features, net, meta)
    else:
        if net.input_dim != 1:
            raise SchemaError("density extraction needs a one-input (moneyness) network")
        grid = cfg.grid.build(**meta)
    rnd = extract_rnd(net_iv(net), grid)
    csvio.write_rnd(out / "rnd.csv", rnd)
    print(f"density on {grid.strikes.size} strikes [{grid.strikes[0]:g}, {grid.strikes[-1]:g}] -> {out / 'rnd.csv'}")
    return EXIT_OK


def _read_rnd(path, meta) -> RndEstimate:
    k, dens, raw = csvio.read_rnd_columns(path)
    return RndEstimate(StrikeGrid(k, **meta), dens, raw)


def cmd_evaluate(args, cfg: ExperimentConfig) -> int:
    out = _out(args, cfg)
    quotes = csvio.read_chain(args.chain or out / "illiquid_chain.csv")
    meta = _market_meta(quotes)
    deep = _read_rnd(args.rnd or out / "rnd.csv", meta)
    truth_path = Path(args.truth) if args.truth else out / "truth_rnd.csv"
    truth = _read_rnd(truth_path, meta) if truth_path.exists() else None
    eval_path = Path(args.eval_chain) if args.eval_chain else out / "eval_chain.csv"
    if eval_path.exists():
        market = csvio.read_chain(eval_path)
    elif truth is not None:
        market = [OptionQuote(float(k), price_from_rnd(truth, k), "call", **meta) for k in cfg.eval_strikes]
    else:
        raise SchemaError("evaluate needs market prices: an evaluation chain or a truth density")
    rnds = {"Deep-LSE": deep}
    rnds.update(baseline_rnds(quotes, deep.grid))
    reports = pricing_table(rnds, market)
    csvio.write_report(out / "report.csv", reports)
    width = max(len(n) for n in reports)
    print("method".ljust(width), *(f"{q.strike:>8g}" for q in market), "     MAE")
    for name, rep in reports.items():
        print(name.ljust(width), *(f"{e:8.3f}" for e in rep.errors), f"{rep.mae:8.3f}")
    if truth is not None:
        l1 = {name: l1_distance(rnd, truth) for name, rnd in rnds.items()}
        csvio.write_rows(out / "l1.csv", ("method", "l1_to_truth"), l1.items())
        print("L1 to truth:", ", ".join(f"{n} {v:.4f}" for n, v in l1.items()))
    return EXIT_OK


def cmd_bounds(args, cfg: ExperimentConfig) -> int:
    out = _out(args, cfg)
    net = load_checkpoint(args.checkpoint or out / "transfer.json")
    rep = delta_bound(net)
    doc = {"widths": list(net.widths), "temperatures": net.temperatures.tolist(),
           "alpha_max": rep.alpha_max.tolist(), "deltas": rep.deltas.tolist(),
           "delta": rep.delta, "delta_closed_form": rep.delta_closed_form,
           "depth_uniform_cap": rep.depth_uniform_cap}
    if cfg.sieve is not None:
        g = growth_check(cfg.sieve, net.depth, n_samples=args.n_samples or len(cfg.liquid_strikes),
                         input_dim=net.input_dim)
        doc["envelope"] = envelope_bound(cfg.sieve, net.depth)
        doc["growth"] = {"n_weights": g.n_weights, "complexity": g.complexity,
                         "n_samples": g.n_samples, "ratio": g.ratio, "status": g.status}
    (out / "bounds.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(f"delta_L {rep.delta:.6g} (closed form {rep.delta_closed_form:.6g}); "
          f"depth-uniform cap {rep.depth_uniform_cap}")
    if "growth" in doc:
        print(f"envelope V {doc['envelope']:.6g}; growth ratio {doc['growth']['ratio']:.3g} ({doc['growth']['status']})")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "pretrain": cmd_pretrain, "transfer": cmd_transfer,
            "rnd": cmd_rnd, "evaluate": cmd_evaluate, "bounds": cmd_bounds}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); defaults to the Bates setup")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output directory (overrides config out_dir)")
    p = argparse.ArgumentParser(prog="deeplse", parents=[common],
                                description="Deep-LSE risk-neutral density experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate markets and write scenario CSVs")
    sp = sub.add_parser("pretrain", parents=[common], help="fit the network to the liquid chain")
    sp.add_argument("--chain", help="liquid option chain CSV")
    sp = sub.add_parser("transfer", parents=[common], help="fine-tune on the illiquid chain")
    sp.add_argument("--checkpoint", help="pretrained network")
    sp.add_argument("--chain", help="illiquid option chain CSV")
    sp.add_argument("--full-trace", action="store_true",
                    help="keep training to max_epochs for the trace (the stop snapshot is still saved)")
    sp = sub.add_parser("rnd", parents=[common], help="extract the density from a checkpoint")
    sp.add_argument("--checkpoint")
    sp.add_argument("--chain", help="chain CSV giving spot, rate, dividend and tau")
    sp.add_argument("--features", help="CSV of moneyness values defining the strike grid")
    sp = sub.add_parser("evaluate", parents=[common], help="pricing-error report against baselines")
    sp.add_argument("--rnd", help="Deep-LSE density CSV")
    sp.add_argument("--chain", help="illiquid chain CSV the models were given")
    sp.add_argument("--eval-chain", help="market quotes at the evaluation strikes")
    sp.add_argument("--truth", help="reference density CSV for L1 distances")
    sp = sub.add_parser("bounds", parents=[common], help="sandwich, envelope and growth diagnostics")
    sp.add_argument("--checkpoint")
    sp.add_argument("--n-samples", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return COMMANDS[args.command](args, cfg)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SchemaError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
