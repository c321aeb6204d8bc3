"""Discounted terminal mean against S0 e^{-q tau} for the four simulators."""
import argparse
import math
import time

from deeplse.market_sim import (ABL_TABLE5_PROXY, BATES_TABLE1, KOU_HESTON_TABLE4,
                                THREEFDE_TABLE6_PROXY, SimConfig, simulate_terminals)

MODELS = {"bates": BATES_TABLE1, "kou_heston": KOU_HESTON_TABLE4,
          "abl": ABL_TABLE5_PROXY, "three_fde": THREEFDE_TABLE6_PROXY}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--steps", type=int, default=252)
    ap.add_argument("--tau", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for name, m in MODELS.items():
        t0 = time.perf_counter()
        s = simulate_terminals(m, args.tau, SimConfig(args.paths, args.steps, args.seed))
        disc = math.exp(-m.r * args.tau) * s
        target = m.S0 * math.exp(-m.q * args.tau)
        se = disc.std(ddof=1) / math.sqrt(s.size)
        z = (disc.mean() - target) / se
        print(f"{name:11s} mean {disc.mean():9.4f}  target {target:9.4f}  z {z:+.2f}  "
              f"({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
