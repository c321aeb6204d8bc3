"""Tempered log-sum-exp and the softplus reparameterization.

All functions accept either a 1-D entry vector or a 2-D array whose last
axis holds the entries (one row per sample); the reduction always runs
over the last axis.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError


def _check(temperature, u):
    u = np.asarray(u, dtype=float)
    if u.ndim == 0 or u.shape[-1] == 0:
        raise DomainError("log-sum-exp needs at least one entry")
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    if not np.all(np.isfinite(u)):
        raise DomainError("log-sum-exp entries must be finite")
    return u


def lse(temperature: float, u) -> float | np.ndarray:
    """T * log(sum(exp(u / T))) evaluated with the max shifted out."""
    u = _check(temperature, u)
    top = u.max(axis=-1, keepdims=True)
    s = np.exp((u - top) / temperature).sum(axis=-1)
    out = top[..., 0] + temperature * np.log(s)
    return float(out) if out.ndim == 0 else out


def lse_weights(temperature: float, u) -> np.ndarray:
    """Softmax of u / T, the gradient of :func:`lse` with respect to u."""
    u = _check(temperature, u)
    e = np.exp((u - u.max(axis=-1, keepdims=True)) / temperature)
    return e / e.sum(axis=-1, keepdims=True)


def softplus(x):
    x = np.asarray(x, dtype=float)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def softplus_inv(y):
    """Inverse of softplus, log(exp(y) - 1), for y > 0."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("softplus_inv requires y > 0")
    # y + log(1 - exp(-y)) avoids overflow for large y
    out = y + np.log(-np.expm1(-y))
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    """Derivative of softplus."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out
