"""Deep log-sum-exp network: parameters, evaluation, gradients, sieve box.

Layer 1 scores are ``A x + b``; every later layer feeds the previous
scalar output back in through a nonnegative skip weight,
``alpha * z_prev + A x + b``, and reduces the scores with a tempered
log-sum-exp.  Skip weights and temperatures are stored as unconstrained
pre-activations and mapped through softplus, so any real parameter
vector describes a network that is convex in its input.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, SchemaError
from .lse import sigmoid, softplus, softplus_inv

T_MIN = 1e-3
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerParams:
    a: np.ndarray            # (K, d) affine slopes
    b: np.ndarray            # (K,) intercepts
    eta: np.ndarray | None   # (K,) skip pre-activations, None on layer 1
    t_raw: float             # temperature pre-activation

    @property
    def width(self) -> int:
        return self.a.shape[0]

    @property
    def alpha(self) -> np.ndarray | None:
        return None if self.eta is None else np.atleast_1d(softplus(self.eta))

    @property
    def temperature(self) -> float:
        return T_MIN + softplus(self.t_raw)


@dataclass(frozen=True)
class DeepLseNet:
    layers: tuple[LayerParams, ...]
    c_out: float
    input_dim: int

    def __post_init__(self):
        if len(self.layers) < 1:
            raise DomainError("a network needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.a.ndim != 2 or layer.a.shape[1] != self.input_dim:
                raise DomainError(f"layer {i + 1}: slope matrix must be K x {self.input_dim}")
            if layer.width < 1 or layer.b.shape != (layer.width,):
                raise DomainError(f"layer {i + 1}: intercepts must have length K")
            if (i == 0) != (layer.eta is None):
                raise DomainError("only layer 1 omits the skip pre-activations")
            if layer.eta is not None and layer.eta.shape != (layer.width,):
                raise DomainError(f"layer {i + 1}: skip vector must have length K")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(layer.width for layer in self.layers)

    @property
    def temperatures(self) -> np.ndarray:
        return np.array([layer.temperature for layer in self.layers])

    @property
    def n_params(self) -> int:
        return self.to_vector().size

    def to_vector(self) -> np.ndarray:
        """Raw parameters flattened in checkpoint order."""
        parts = []
        for layer in self.layers:
            parts += [layer.a.ravel(), layer.b]
            if layer.eta is not None:
                parts.append(layer.eta)
            parts.append([layer.t_raw])
        parts.append([self.c_out])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def with_vector(self, w) -> "DeepLseNet":
        w = np.asarray(w, dtype=float)
        if w.size != self.n_params:
            raise DomainError(f"expected {self.n_params} parameters, got {w.size}")
        pos = 0

        def take(n):
            nonlocal pos
            out = w[pos:pos + n].copy()
            pos += n
            return out

        layers = []
        for layer in self.layers:
            k, d = layer.a.shape
            a = take(k * d).reshape(k, d)
            b = take(k)
            eta = take(k) if layer.eta is not None else None
            t_raw = float(take(1)[0])
            layers.append(LayerParams(a, b, eta, t_raw))
        return DeepLseNet(tuple(layers), float(take(1)[0]), self.input_dim)

    def fingerprint(self) -> str:
        return hashlib.sha1(self.to_vector().tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class NetGradients:
    """Loss gradient with the same layout as :class:`DeepLseNet`."""
    layers: tuple[LayerParams, ...]
    c_out: float
    input_dim: int

    def to_vector(self) -> np.ndarray:
        return DeepLseNet.to_vector(self)  # identical flattening


@dataclass(frozen=True)
class SieveBox:
    """Per-layer caps on slopes, intercepts, skips, temperatures and widths."""
    slope_cap: tuple[float, ...]
    intercept_cap: tuple[float, ...]
    skip_cap: tuple[float, ...]
    temp_cap: tuple[float, ...]
    width_cap: tuple[int, ...]
    out_cap: float
    input_radius: float

    def __post_init__(self):
        n = len(self.slope_cap)
        for name in ("intercept_cap", "skip_cap", "temp_cap", "width_cap"):
            if len(getattr(self, name)) != n:
                raise DomainError(f"{name} must have one entry per layer")
        caps = [*self.slope_cap, *self.intercept_cap, *self.temp_cap, *self.width_cap,
                self.input_radius]
        if min(caps) <= 0 or min(self.skip_cap) <= 0:
            raise DomainError("sieve caps must be positive")
        if self.out_cap < 0:
            raise DomainError("out_cap must be nonnegative")
        if max(self.skip_cap) >= 1:
            raise DomainError("skip caps must be < 1")
        if min(self.temp_cap) <= T_MIN:
            raise DomainError(f"temperature caps must exceed the floor {T_MIN}")

    @property
    def depth(self) -> int:
        return len(self.slope_cap)


def init(depth: int, widths: Sequence[int], input_dim: int = 1, seed: int = 0,
         scale: float = 1.0) -> DeepLseNet:
    """Random network: slopes and intercepts uniform in [-scale, scale], skips 0.1, T = 1."""
    widths = list(widths)
    if depth < 1 or len(widths) != depth or min(widths) < 1 or input_dim < 1:
        raise DomainError(f"invalid architecture depth={depth} widths={widths} d={input_dim}")
    rng = np.random.default_rng(seed)
    eta0 = softplus_inv(0.1)
    t0 = softplus_inv(1.0 - T_MIN)
    layers = []
    for ell, k in enumerate(widths):
        a = rng.uniform(-scale, scale, size=(k, input_dim))
        b = rng.uniform(-scale, scale, size=k)
        eta = None if ell == 0 else np.full(k, eta0)
        layers.append(LayerParams(a, b, eta, float(t0)))
    return DeepLseNet(tuple(layers), 0.0, input_dim)


def _as_batch(net: DeepLseNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    d = net.input_dim
    if x.ndim == 0:
        if d != 1:
            raise DomainError(f"scalar input for a {d}-dimensional network")
        return x.reshape(1, 1), True
    if x.ndim == 1:
        if d == 1:
            return x.reshape(-1, 1), False
        if x.size != d:
            raise DomainError(f"input has length {x.size}, network expects {d}")
        return x.reshape(1, d), True
    if x.ndim != 2 or x.shape[1] != d:
        raise DomainError(f"input shape {x.shape} incompatible with input_dim={d}")
    return x, False


def _lse_rows(u: np.ndarray, temperature: float) -> tuple[np.ndarray, np.ndarray]:
    top = u.max(axis=1, keepdims=True)
    e = np.exp((u - top) / temperature)
    s = e.sum(axis=1)
    return top[:, 0] + temperature * np.log(s), e / s[:, None]


def _forward_cache(net: DeepLseNet, X: np.ndarray):
    cache = []
    z = None
    for layer in net.layers:
        u = X @ layer.a.T + layer.b
        if layer.eta is not None:
            u = u + np.outer(z, layer.alpha)
        t = layer.temperature
        z_new, p = _lse_rows(u, t)
        cache.append((u, p, z, z_new, t))
        z = z_new
    return z + net.c_out, cache


def forward(net: DeepLseNet, x):
    """Network output; a scalar for a single point, else one value per row."""
    X, single = _as_batch(net, x)
    if not np.all(np.isfinite(X)):
        raise DomainError("network inputs must be finite")
    y, _ = _forward_cache(net, X)
    return float(y[0]) if single else y


def layer_outputs(net: DeepLseNet, x) -> list[np.ndarray]:
    """Scalar outputs z_1..z_L (without the output bias) for a batch."""
    X, _ = _as_batch(net, x)
    _, cache = _forward_cache(net, X)
    return [c[3] for c in cache]


def gradient(net: DeepLseNet, x, target) -> tuple[float, NetGradients]:
    """Mean squared error over the batch and its exact gradient."""
    X, _ = _as_batch(net, x)
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if X.shape[0] == 0:
        raise DomainError("empty batch")
    if target.shape != (X.shape[0],):
        raise DomainError(f"{X.shape[0]} inputs but {target.size} targets")
    y, cache = _forward_cache(net, X)
    resid = y - target
    n = X.shape[0]
    loss = float(np.mean(resid ** 2))
    g = 2.0 * resid / n
    grad_c = float(g.sum())
    grads = []
    for layer, (u, p, z_prev, z, t) in zip(reversed(net.layers), reversed(cache)):
        du = g[:, None] * p
        da = du.T @ X
        db = du.sum(axis=0)
        dt = float(np.sum(g * (z - (p * u).sum(axis=1)) / t))
        dt_raw = dt * sigmoid(layer.t_raw)
        if layer.eta is not None:
            dalpha = du.T @ z_prev
            deta = dalpha * sigmoid(layer.eta)
            g = du @ layer.alpha
        else:
            deta = None
        grads.append(LayerParams(da, db, deta, float(dt_raw)))
    return loss, NetGradients(tuple(reversed(grads)), grad_c, net.input_dim)


def project_sieve(net: DeepLseNet, box: SieveBox) -> DeepLseNet:
    """Clip every parameter group into the sieve box (idempotent)."""
    if box.depth != net.depth:
        raise DomainError(f"box has {box.depth} layers, network has {net.depth}")
    layers = []
    for ell, layer in enumerate(net.layers):
        if layer.width > box.width_cap[ell]:
            raise DomainError(f"layer {ell + 1} width {layer.width} exceeds cap {box.width_cap[ell]}")
        s_cap = box.slope_cap[ell]
        norms = np.linalg.norm(layer.a, axis=1)
        over = norms > s_cap
        a = layer.a.copy()
        a[over] *= (s_cap / norms[over])[:, None]
        b_cap = box.intercept_cap[ell]
        b = np.clip(layer.b, -b_cap, b_cap)
        eta = layer.eta
        if eta is not None:
            eta = np.minimum(eta, softplus_inv(box.skip_cap[ell]))
        t_raw = min(layer.t_raw, float(softplus_inv(box.temp_cap[ell] - T_MIN)))
        layers.append(LayerParams(a, b, eta, t_raw))
    c = float(np.clip(net.c_out, -box.out_cap, box.out_cap))
    return DeepLseNet(tuple(layers), c, net.input_dim)


def envelope_bound(box: SieveBox, depth: int | None = None) -> float:
    """Uniform bound on |f(x)| over the box for inputs with norm at most R."""
    depth = box.depth if depth is None else depth
    if depth > box.depth:
        raise DomainError("box has fewer layers than the requested depth")
    total = box.out_cap
    for j in range(depth):
        term = (box.input_radius * box.slope_cap[j] + box.intercept_cap[j]
                + box.temp_cap[j] * math.log(box.width_cap[j]))
        total += term * math.prod(box.skip_cap[r] for r in range(j + 1, depth))
    return total


@dataclass(frozen=True)
class GrowthReport:
    n_weights: int
    envelope: float
    complexity: float
    n_samples: int
    ratio: float
    status: str


def growth_check(box: SieveBox, depth: int | None = None, n_samples: int = 1,
                 input_dim: int = 1) -> GrowthReport:
    """Compare W V^2 log(V^L W) against the sample size.

    Only a diagnostic: the condition is asymptotic, so a ratio >= 1 warns
    and never blocks.
    """
    depth = box.depth if depth is None else depth
    d = input_dim
    k = box.width_cap
    w = k[0] * (d + 1) + sum(k[ell] * (d + 2) for ell in range(1, depth)) + 1 + d * (depth - 1)
    v = envelope_bound(box, depth)
    complexity = w * v ** 2 * math.log(v ** depth * w)
    ratio = complexity / n_samples
    status = "consistent-regime" if ratio < 1 else "growth-violated"
    if ratio >= 1:
        warnings.warn(f"sieve complexity/n = {ratio:.3g} >= 1; growth condition not met",
                      stacklevel=2)
    return GrowthReport(w, v, complexity, n_samples, ratio, status)


def save_checkpoint(net: DeepLseNet, path) -> None:
    # json writes floats with repr, which round-trips every double exactly
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "input_dim": net.input_dim,
        "c_out": net.c_out,
        "layers": [
            {
                "a": layer.a.tolist(),
                "b": layer.b.tolist(),
                "eta": None if layer.eta is None else layer.eta.tolist(),
                "t_raw": layer.t_raw,
            }
            for layer in net.layers
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path) -> DeepLseNet:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise SchemaError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    try:
        d = int(doc["input_dim"])
        layers = []
        for item in doc["layers"]:
            eta = item["eta"]
            layers.append(LayerParams(
                np.asarray(item["a"], dtype=float).reshape(-1, d),
                np.asarray(item["b"], dtype=float),
                None if eta is None else np.asarray(eta, dtype=float),
                float(item["t_raw"]),
            ))
        return DeepLseNet(tuple(layers), float(doc["c_out"]), d)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed checkpoint ({exc})") from exc


def with_alpha(net: DeepLseNet, layer_index: int, alpha) -> DeepLseNet:
    """Copy of ``net`` whose layer ``layer_index`` (0-based) has skip weights ``alpha``."""
    layers = list(net.layers)
    layer = layers[layer_index]
    if layer.eta is None:
        raise DomainError("layer 1 has no skip weights")
    eta = softplus_inv(np.broadcast_to(np.asarray(alpha, dtype=float), layer.b.shape))
    layers[layer_index] = replace(layer, eta=np.atleast_1d(eta).astype(float))
    return replace(net, layers=tuple(layers))


def with_temperature(net: DeepLseNet, temps) -> DeepLseNet:
    """Copy of ``net`` with the given per-layer temperatures (each > T_MIN)."""
    temps = np.broadcast_to(np.asarray(temps, dtype=float), (net.depth,))
    layers = tuple(replace(layer, t_raw=float(softplus_inv(t - T_MIN)))
                   for layer, t in zip(net.layers, temps))
    return replace(net, layers=layers)
