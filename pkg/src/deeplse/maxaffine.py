"""Zero-temperature surrogate of a Deep-LSE network and its error bounds.

Replacing every log-sum-exp by a hard max gives a deep max-affine
function.  It sits below the network, and the gap is at most
``delta_L = sum_j T_j log K_j prod_{r>j} alpha_max^(r)``.  Because
softplus skips are strictly positive, the surrogate also expands into a
flat maximum over one affine function per path ``(k_1, ..., k_L)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DomainError, PropertyFailure
from .network import DeepLseNet, _as_batch, forward

MAX_PATHS = 10 ** 6


@dataclass(frozen=True)
class PathAffine:
    path: tuple[int, ...]   # 1-based piece index per layer
    slope: np.ndarray
    intercept: float


@dataclass(frozen=True)
class BoundReport:
    deltas: np.ndarray          # delta_1..delta_L from the recursion
    delta: float                # delta_L
    delta_closed_form: float
    alpha_max: np.ndarray       # per layer, 1.0 for layer 1 by convention
    depth_uniform_cap: float | None   # M / (1 - q) when every later skip cap q < 1


@dataclass(frozen=True)
class SandwichReport:
    n_points: int
    min_slack: float
    max_slack: float
    delta: float


def surrogate_eval(net: DeepLseNet, x):
    X, single = _as_batch(net, x)
    z = None
    for layer in net.layers:
        u = X @ layer.a.T + layer.b
        if layer.eta is not None:
            u = u + np.outer(z, layer.alpha)
        z = u.max(axis=1)
    y = z + net.c_out
    return float(y[0]) if single else y


def expand_paths(net: DeepLseNet, max_paths: int = MAX_PATHS) -> list[PathAffine]:
    """All path affines of the surrogate, built layer by layer."""
    n_paths = math.prod(net.widths)
    if n_paths > max_paths:
        raise CapacityError(f"{n_paths} paths exceed the guard of {max_paths}")
    first = net.layers[0]
    slopes = first.a.copy()                  # (P, d)
    intercepts = first.b.copy()              # (P,)
    for layer in net.layers[1:]:
        alpha = layer.alpha
        # new path (p, k): alpha_k * A_p + A_k, ordered with k varying fastest
        slopes = (alpha[None, :, None] * slopes[:, None, :] + layer.a[None, :, :]).reshape(-1, net.input_dim)
        intercepts = (alpha[None, :] * intercepts[:, None] + layer.b[None, :]).ravel()
    paths = itertools.product(*(range(1, k + 1) for k in net.widths))
    return [PathAffine(p, slopes[i], float(intercepts[i])) for i, p in enumerate(paths)]


def path_affine_closed_form(net: DeepLseNet, path) -> tuple[np.ndarray, float]:
    """Slope and intercept of one path from the explicit product-sum formula."""
    idx = [k - 1 for k in path]
    if len(idx) != net.depth:
        raise DomainError("path length must equal network depth")
    slope = np.zeros(net.input_dim)
    intercept = 0.0
    for j, layer in enumerate(net.layers):
        weight = 1.0
        for r in range(j + 1, net.depth):
            weight *= net.layers[r].alpha[idx[r]]
        slope += weight * layer.a[idx[j]]
        intercept += weight * layer.b[idx[j]]
    return slope, intercept


def max_over_paths(paths: list[PathAffine], x, c_out: float = 0.0) -> np.ndarray:
    slopes = np.array([p.slope for p in paths])
    intercepts = np.array([p.intercept for p in paths])
    X = np.asarray(x, dtype=float)
    if X.ndim == 1 and slopes.shape[1] == 1:
        X = X[:, None]
    X = np.atleast_2d(X)
    return (X @ slopes.T + intercepts).max(axis=1) + c_out


def delta_bound(net: DeepLseNet) -> BoundReport:
    temps = net.temperatures
    logk = np.log(np.array(net.widths, dtype=float))
    amax = np.array([1.0] + [float(layer.alpha.max()) for layer in net.layers[1:]])

    deltas = np.empty(net.depth)
    deltas[0] = temps[0] * logk[0]
    for ell in range(1, net.depth):
        deltas[ell] = temps[ell] * logk[ell] + amax[ell] * deltas[ell - 1]

    closed = 0.0
    for j in range(net.depth):
        closed += temps[j] * logk[j] * math.prod(amax[j + 1:])

    if abs(closed - deltas[-1]) > 1e-12 * max(1.0, abs(closed)):
        raise PropertyFailure(f"delta recursion {deltas[-1]!r} != closed form {closed!r}")

    cap = None
    q = float(amax[1:].max()) if net.depth > 1 else 0.0
    if q < 1:
        cap = float((temps * logk).max()) / (1.0 - q)
    return BoundReport(deltas, float(deltas[-1]), float(closed), amax, cap)


def check_sandwich(net: DeepLseNet, points, tol: float = 1e-9) -> SandwichReport:
    """Verify surrogate <= network <= surrogate + delta_L at every point."""
    X, _ = _as_batch(net, points)
    if X.shape[0] == 0:
        raise DomainError("no points to check")
    delta = delta_bound(net).delta
    slack = forward(net, X) - surrogate_eval(net, X)
    bad = np.flatnonzero((slack < -tol) | (slack > delta + tol))
    if bad.size:
        i = int(bad[0])
        raise PropertyFailure(
            f"sandwich violated at x={X[i].tolist()}: slack {slack[i]!r} outside [0, {delta!r}]",
            x=X[i])
    return SandwichReport(X.shape[0], float(slack.min()), float(slack.max()), delta)
