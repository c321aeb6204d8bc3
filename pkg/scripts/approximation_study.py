"""Sup error of [K, K] networks fitted to |m - 1| on [0.5, 1.5]."""
import argparse

import numpy as np

from deeplse.network import forward, init
from deeplse.training import TrainConfig, center_output, fit_mse


def fit_abs(width, seeds=(0, 1, 2), epochs=20_000, lr=1e-2):
    x = np.linspace(0.5, 1.5, 201)
    xt = np.linspace(0.5, 1.5, 2001)
    best = None
    for s in seeds:
        net = center_output(init(2, [width, width], 1, seed=s), x, np.abs(x - 1))
        net, losses = fit_mse(net, x, np.abs(x - 1),
                              TrainConfig(learning_rate=lr, max_epochs=epochs, lr_decay=0.01))
        if best is None or losses[-1] < best[0]:
            best = (losses[-1], float(np.max(np.abs(forward(net, xt) - np.abs(xt - 1)))), net)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--widths", type=int, nargs="+", default=[2, 4, 8])
    ap.add_argument("--epochs", type=int, default=20_000)
    args = ap.parse_args()
    for k in args.widths:
        mse, sup, net = fit_abs(k, epochs=args.epochs)
        print(f"K={k}: train MSE {mse:.2e}, sup error {sup:.4f}, temperatures {np.round(net.temperatures, 4)}")


if __name__ == "__main__":
    main()
