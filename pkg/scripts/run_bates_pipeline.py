"""Seed sweep of the Bates transfer experiment.

Prints L1 distances to the reference density and the pricing-error MAE
for every method, and writes one CSV per seed under --out.

    python scripts/run_bates_pipeline.py --seeds 0 1 2 3 4 --out out/bates_sweep
"""
import argparse
import warnings
from pathlib import Path

from deeplse import csvio
from deeplse.config import ExperimentConfig, load_config
from deeplse.pipeline import evaluation_quotes, l1_table, pricing_table, seed_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", default="out/bates_sweep")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    out = Path(args.out)
    warnings.simplefilter("ignore")
    summary = []
    for seed, res in seed_sweep(cfg, args.seeds):
        l1 = l1_table(res)
        reports = pricing_table(res.rnds, evaluation_quotes(res.scenario.target, cfg.eval_strikes))
        csvio.write_report(out / f"report_seed{seed}.csv", reports)
        csvio.write_trace(out / f"trace_seed{seed}.csv", res.trace)
        for name, rnd in res.rnds.items():
            csvio.write_rnd(out / f"rnd_{name.replace(' ', '_').lower()}_seed{seed}.csv", rnd)
        csvio.write_rnd(out / f"rnd_truth_seed{seed}.csv", res.scenario.truth_rnd)
        print(f"seed {seed}: stop epoch {res.trace.stop_epoch}")
        for name in l1:
            print(f"  {name:22s} L1 {l1[name]:.4f}  MAE {reports[name].mae:.3f}")
            summary.append((seed, name, l1[name], reports[name].mae))
    csvio.write_rows(out / "summary.csv", ("seed", "method", "l1_to_truth", "mae"), summary)


if __name__ == "__main__":
    main()
