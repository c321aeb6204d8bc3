"""Pretraining, transfer fine-tuning and the KL-based stopping rule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError
from .network import DeepLseNet, SieveBox, forward, gradient, project_sieve
from .pricing import IvCurve


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    max_epochs: int = 5000
    batch_size: int | None = None      # None: full batch
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float = 1.0              # learning rate shrinks by this factor over the run
    sieve_box: SieveBox | None = None
    project_every: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise DomainError("max_epochs must be at least 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise DomainError("batch_size must be positive")
        if not 0 < self.lr_decay <= 1:
            raise DomainError("lr_decay must lie in (0, 1]")
        if self.project_every < 1:
            raise DomainError("project_every must be at least 1")


class Adam:
    def __init__(self, n: int, cfg: TrainConfig):
        self.cfg = cfg
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, w: np.ndarray, g: np.ndarray, lr: float) -> np.ndarray:
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * g
        self.v = c.beta2 * self.v + (1 - c.beta2) * g * g
        m_hat = self.m / (1 - c.beta1 ** self.t)
        v_hat = self.v / (1 - c.beta2 ** self.t)
        return w - lr * m_hat / (np.sqrt(v_hat) + c.eps)


def _features(net: DeepLseNet, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if net.input_dim != 1:
            raise DomainError(f"1-D features given to a {net.input_dim}-input network")
        x = x[:, None]
    if x.shape[1] != net.input_dim:
        raise DomainError(f"features have {x.shape[1]} columns, network expects {net.input_dim}")
    return x


def _lr(cfg: TrainConfig, epoch: int) -> float:
    return cfg.learning_rate * cfg.lr_decay ** (epoch / cfg.max_epochs)


def _project(net, cfg, epoch):
    if cfg.sieve_box is not None and (epoch + 1) % cfg.project_every == 0:
        return project_sieve(net, cfg.sieve_box)
    return net


def fit_mse(net: DeepLseNet, x, y, cfg: TrainConfig) -> tuple[DeepLseNet, np.ndarray]:
    """Adam on mean squared error; returns the final network and per-epoch losses.

    ``losses[e]`` is the full-data loss before update ``e``; the last entry
    is the loss of the returned network.
    """
    X = _features(net, x)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(net.n_params, cfg)
    w = net.to_vector()
    losses = np.empty(cfg.max_epochs + 1)
    for epoch in range(cfg.max_epochs):
        if cfg.batch_size is None or cfg.batch_size >= n:
            loss, grads = gradient(net, X, y)
        else:
            idx = rng.choice(n, size=cfg.batch_size, replace=False)
            _, grads = gradient(net, X[idx], y[idx])
            loss = float(np.mean((forward(net, X) - y) ** 2))
        if not math.isfinite(loss):
            raise NumericError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
        losses[epoch] = loss
        w = opt.step(w, grads.to_vector(), _lr(cfg, epoch))
        net = _project(net.with_vector(w), cfg, epoch)
        w = net.to_vector()
    final = float(np.mean((forward(net, X) - y) ** 2))
    if not math.isfinite(final):
        raise NumericError(f"non-finite training loss at epoch {cfg.max_epochs}", epoch=cfg.max_epochs)
    losses[-1] = final
    return net, losses


def center_output(net: DeepLseNet, x, y) -> DeepLseNet:
    """Shift the output bias so that the mean residual on (x, y) is zero."""
    X = _features(net, x)
    shift = float(np.mean(np.asarray(y, dtype=float) - forward(net, X)))
    return net.with_vector(np.concatenate([net.to_vector()[:-1], [net.c_out + shift]]))


def pretrain(net: DeepLseNet, curve: IvCurve, cfg: TrainConfig, center: bool = True,
             history: list | None = None) -> DeepLseNet:
    """Fit the network to a liquid IV curve (moneyness -> sigma)."""
    if len(curve) < 3:
        raise DomainError("pretraining needs at least 3 curve points")
    if center:
        net = center_output(net, curve.moneyness, curve.sigma)
    net, losses = fit_mse(net, curve.moneyness, curve.sigma, cfg)
    if history is not None:
        history.extend(losses.tolist())
    return net


@dataclass(frozen=True)
class PriorSpec:
    w0: np.ndarray
    sigma_p: float = 1.0
    tau_q: float | None = None         # defaults to sigma_p
    c: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "w0", np.asarray(self.w0, dtype=float))
        if self.tau_q is None:
            object.__setattr__(self, "tau_q", self.sigma_p)
        if not (self.sigma_p > 0 and self.tau_q > 0 and self.c >= 0):
            raise DomainError("sigma_p and tau_q must be positive, c nonnegative")

    @property
    def p(self) -> int:
        return self.w0.size

    @classmethod
    def around(cls, net: DeepLseNet, **kw) -> "PriorSpec":
        return cls(net.to_vector(), **kw)


def kl_isotropic(w, prior: PriorSpec) -> float:
    """KL(N(w, tau^2 I) || N(w0, sigma^2 I))."""
    w = np.asarray(w, dtype=float)
    if w.size != prior.p:
        raise DomainError(f"parameter vector has length {w.size}, prior expects {prior.p}")
    s2, t2, p = prior.sigma_p ** 2, prior.tau_q ** 2, prior.p
    dist2 = float(np.sum((w - prior.w0) ** 2))
    return 0.5 * (t2 / s2 * p + dist2 / s2 - p + p * math.log(s2 / t2))


def kl_gaussian(mu_q, cov_q, mu_p, cov_p) -> float:
    """KL(N(mu_q, cov_q) || N(mu_p, cov_p)) for full covariance matrices."""
    mu_q, mu_p = np.asarray(mu_q, float), np.asarray(mu_p, float)
    cov_q, cov_p = np.asarray(cov_q, float), np.asarray(cov_p, float)
    p = mu_q.size
    diff = mu_p - mu_q
    trace = np.trace(np.linalg.solve(cov_p, cov_q))
    maha = diff @ np.linalg.solve(cov_p, diff)
    _, logdet_p = np.linalg.slogdet(cov_p)
    _, logdet_q = np.linalg.slogdet(cov_q)
    return 0.5 * (trace + maha - p + logdet_p - logdet_q)


def stationarity(series, window: int = 10) -> int | None:
    """First index where the smoothed forward difference becomes >= 0.

    The derivative at index i is the mean of the last ``window`` forward
    differences ``B[j+1] - B[j]`` for j <= i (fewer at the start).
    """
    if window < 1:
        raise DomainError("window must be at least 1")
    b = np.asarray(series, dtype=float)
    d = np.diff(b)
    if d.size == 0:
        return None
    csum = np.concatenate([[0.0], np.cumsum(d)])
    for i in range(d.size):
        lo = max(0, i - window + 1)
        if (csum[i + 1] - csum[lo]) / (i + 1 - lo) >= 0:
            return i
    return None


@dataclass
class FineTuneTrace:
    risk: list = field(default_factory=list)
    kl: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    fingerprint: list = field(default_factory=list)
    stop_epoch: int | None = None

    def __len__(self):
        return len(self.risk)

    def rows(self):
        for e in range(len(self)):
            yield e, self.risk[e], self.kl[e], self.objective[e], int(e == self.stop_epoch)


def fine_tune(net0: DeepLseNet, x, y, cfg: TrainConfig, prior: PriorSpec, window: int = 10,
              run_to_completion: bool = False) -> tuple[DeepLseNet, FineTuneTrace]:
    """Transfer step: start from the pretrained net and fit the illiquid points.

    Each epoch records the empirical risk R, the KL to the prior centred on
    the pretrained weights and B = R + c sqrt(KL).  Training halts at the
    first stationary point of B (see :func:`stationarity`) and the weights
    of that epoch are returned.  With ``c == 0`` the rule is off and the
    final weights are returned.  ``run_to_completion`` keeps training to
    ``max_epochs`` for the trace but still returns the stopping snapshot.
    """
    X = _features(net0, x)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 1:
        raise DomainError("fine-tuning needs at least one point")
    w = net0.to_vector()
    if w.size != prior.p or not np.array_equal(w, prior.w0):
        raise DomainError("prior must be centred on the pretrained weights")
    opt = Adam(w.size, cfg)
    trace = FineTuneTrace()
    snapshots = []
    net = net0
    csum = [0.0]
    for epoch in range(cfg.max_epochs):
        loss, grads = gradient(net, X, y)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite fine-tuning loss at epoch {epoch}", epoch=epoch)
        kl = kl_isotropic(w, prior)
        trace.risk.append(loss)
        trace.kl.append(kl)
        trace.objective.append(loss + prior.c * math.sqrt(max(kl, 0.0)))
        trace.fingerprint.append(net.fingerprint())
        snapshots.append(w)
        if epoch >= 1 and prior.c > 0 and trace.stop_epoch is None:
            csum.append(csum[-1] + trace.objective[epoch] - trace.objective[epoch - 1])
            i = epoch - 1
            lo = max(0, i - window + 1)
            if (csum[i + 1] - csum[lo]) / (i + 1 - lo) >= 0:
                trace.stop_epoch = i
                if not run_to_completion:
                    break
        if epoch == cfg.max_epochs - 1:
            break
        w = opt.step(w, grads.to_vector(), _lr(cfg, epoch))
        net = _project(net0.with_vector(w), cfg, epoch)
        w = net.to_vector()
    best = trace.stop_epoch if trace.stop_epoch is not None else len(trace) - 1
    out = net0.with_vector(snapshots[best])
    if cfg.sieve_box is not None:
        out = project_sieve(out, cfg.sieve_box)
    return out, trace
