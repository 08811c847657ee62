"""Synthetic targets with analytic gradients, and samplers producing SampleSets.

Two families are provided: multivariate Gaussians (exact moments up to
order two) and a pairwise "banana" warp of a Gaussian.  Samples come either
from exact i.i.d. draws or from a Metropolis-adjusted Langevin chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import DimensionError
from .stein import SampleSet

TARGET_ACCEPTANCE = 0.574


@dataclass(frozen=True)
class TargetModel:
    """A differentiable log density on ``R^d``.

    ``log_density`` and ``grad_log_density`` accept a point ``(d,)`` or a
    batch ``(S, d)``.  ``draw(rng, S)`` is set when exact sampling is
    possible; ``moment(alpha)`` returns ``E[theta^alpha]`` or ``None`` when
    no closed form is known.
    """

    name: str
    dim: int
    log_density: Callable
    grad_log_density: Callable
    analytic_mean: np.ndarray | None = None
    draw: Callable | None = field(default=None, repr=False)
    moment_fn: Callable | None = field(default=None, repr=False)
    params: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.name.split(":", 1)[0]

    def moment(self, alpha):
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.dim:
            raise DimensionError(f"multi-index of length {len(alpha)} for a {self.dim}-d target")
        if sum(alpha) == 0:
            return 1.0
        if sum(alpha) == 1 and self.analytic_mean is not None:
            return float(self.analytic_mean[alpha.index(1)])
        return None if self.moment_fn is None else self.moment_fn(alpha)


def _batch(theta, d):
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    theta = np.atleast_2d(theta)
    if theta.shape[1] != d:
        raise DimensionError(f"expected points of dimension {d}, got shape {theta.shape}")
    return theta, single


def gaussian_target(mean, covariance) -> TargetModel:
    """``N(mean, covariance)``; raises ``ValueError`` unless the covariance is SPD."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.size
    cov = np.asarray(covariance, dtype=float)
    if cov.ndim == 0:
        cov = np.full((1, 1), float(cov))
    if cov.shape != (d, d):
        raise DimensionError(f"covariance shape {cov.shape} does not match mean of length {d}")
    if not np.allclose(cov, cov.T, rtol=1e-12, atol=0):
        raise ValueError("covariance must be symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance must be positive definite") from exc
    precision = scipy.linalg.cho_solve((chol, True), np.eye(d))
    precision = 0.5 * (precision + precision.T)
    log_norm = -0.5 * d * math.log(2 * math.pi) - np.sum(np.log(np.diag(chol)))

    def log_density(theta):
        x, single = _batch(theta, d)
        diff = x - mean
        z = scipy.linalg.solve_triangular(chol, diff.T, lower=True)
        out = log_norm - 0.5 * np.sum(z**2, axis=0)
        return float(out[0]) if single else out

    def grad(theta):
        x, single = _batch(theta, d)
        out = -(x - mean) @ precision
        return out[0] if single else out

    def draw(rng, S):
        return mean + rng.standard_normal((S, d)) @ chol.T

    def moment(alpha):
        idx = [i for i, a in enumerate(alpha) for _ in range(a)]
        if len(idx) != 2:
            return None
        i, j = idx
        return float(cov[i, j] + mean[i] * mean[j])

    mean.setflags(write=False)
    return TargetModel(
        name=f"gaussian:d={d}",
        dim=d,
        log_density=log_density,
        grad_log_density=grad,
        analytic_mean=mean,
        draw=draw,
        moment_fn=moment,
        params={"mean": mean.tolist(), "covariance": cov.tolist()},
    )


def banana_target(d: int = 2, b: float = 0.5, scale: float = 1.0) -> TargetModel:
    """Pairwise banana-warped Gaussian.

    Coordinates are grouped in pairs ``(x, y)`` with ``x = scale * z1`` and
    ``y = z2 + b (x**2 - scale**2)`` for independent standard normals.  Both
    coordinates have mean zero; ``b = 0`` gives ``N(0, diag(scale**2, 1))``.
    """
    if d < 2 or d % 2:
        raise ValueError(f"banana target needs an even dimension >= 2, got {d}")
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    s2 = scale**2
    log_norm = (d // 2) * (-math.log(2 * math.pi) - math.log(scale))

    def _split(x):
        return x[:, 0::2], x[:, 1::2]

    def log_density(theta):
        x, single = _batch(theta, d)
        u, v = _split(x)
        z2 = v - b * (u**2 - s2)
        out = log_norm - 0.5 * np.sum((u / scale) ** 2 + z2**2, axis=1)
        return float(out[0]) if single else out

    def grad(theta):
        x, single = _batch(theta, d)
        u, v = _split(x)
        z2 = v - b * (u**2 - s2)
        out = np.empty_like(x)
        out[:, 0::2] = -u / s2 + 2.0 * b * u * z2
        out[:, 1::2] = -z2
        return out[0] if single else out

    def draw(rng, S):
        z = rng.standard_normal((S, d))
        out = np.empty_like(z)
        out[:, 0::2] = scale * z[:, 0::2]
        out[:, 1::2] = z[:, 1::2] + b * (out[:, 0::2] ** 2 - s2)
        return out

    def moment(alpha):
        if sum(alpha) != 2:
            return None
        idx = [i for i, a in enumerate(alpha) for _ in range(a)]
        i, j = idx
        if i != j:
            # distinct pairs are independent with zero means; within a pair
            # E[x y] = b E[x^3] - b s2 E[x] = 0
            return 0.0
        return s2 if i % 2 == 0 else 1.0 + 2.0 * b**2 * s2**2

    mean = np.zeros(d)
    mean.setflags(write=False)
    return TargetModel(
        name=f"banana:d={d}",
        dim=d,
        log_density=log_density,
        grad_log_density=grad,
        analytic_mean=mean,
        draw=draw,
        moment_fn=moment,
        params={"b": b, "scale": scale},
    )


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_iid(target: TargetModel, S: int, seed=0) -> SampleSet:
    """Exact i.i.d. draws with gradients attached."""
    if target.draw is None:
        raise ValueError(f"target {target.name} has no exact sampler")
    if S < 1:
        raise ValueError(f"S must be positive, got {S}")
    thetas = target.draw(_rng(seed), S)
    return SampleSet(thetas, target.grad_log_density(thetas))


def sample_iid_gaussian(target: TargetModel, S: int, seed=0) -> SampleSet:
    """Exact i.i.d. draws from a Gaussian target."""
    if target.kind != "gaussian":
        raise ValueError(f"sample_iid_gaussian needs a Gaussian target, got {target.name}")
    return sample_iid(target, S, seed)


@dataclass(frozen=True)
class Chain:
    """Retained MALA states (warmup excluded) with run metadata."""

    samples: SampleSet
    acceptance_rate: float
    warmup_discarded: int
    step_size: float
    seed: object
    log_density: np.ndarray | None = field(default=None, repr=False)


def mala_sample(target: TargetModel, S: int, warmup: int = 1000, step_size="auto", seed=0, initial=None) -> Chain:
    """Metropolis-adjusted Langevin chain of ``S`` retained states.

    Proposals are ``x + (eps**2 / 2) grad log pi(x) + eps xi``.  With
    ``step_size="auto"`` the log step size is adapted by Robbins-Monro
    towards acceptance 0.574 during warmup only and frozen afterwards.
    ``acceptance_rate`` refers to the retained part of the chain.
    """
    if S < 1 or warmup < 0:
        raise ValueError(f"need S >= 1 and warmup >= 0, got S={S}, warmup={warmup}")
    d = target.dim
    rng = _rng(seed)
    adapt = isinstance(step_size, str)
    if adapt and step_size != "auto":
        raise ValueError(f"step_size must be a positive number or 'auto', got {step_size!r}")
    eps = 1.0 / d ** (1 / 6) if adapt else float(step_size)
    if eps <= 0:
        raise ValueError(f"step size must be positive, got {eps}")
    if initial is not None:
        x = np.asarray(initial, dtype=float).copy()
    elif target.analytic_mean is not None:
        x = np.array(target.analytic_mean, dtype=float)
    else:
        x = np.zeros(d)
    logp = target.log_density(x)
    if not np.isfinite(logp):
        raise ValueError("log density is not finite at the initial point")
    g = np.asarray(target.grad_log_density(x), dtype=float)

    thetas = np.empty((S, d))
    grads = np.empty((S, d))
    logps = np.empty(S)
    log_eps = math.log(eps)
    accepted = 0
    for t in range(warmup + S):
        noise = rng.standard_normal(d)
        half = 0.5 * eps * eps
        y = x + half * g + eps * noise
        logp_y = target.log_density(y)
        if np.isfinite(logp_y):
            g_y = np.asarray(target.grad_log_density(y), dtype=float)
            fwd = y - x - half * g
            bwd = x - y - half * g_y
            log_ratio = logp_y - logp - (bwd @ bwd - fwd @ fwd) / (2.0 * eps * eps)
            accept_prob = 1.0 if log_ratio >= 0 else math.exp(log_ratio)
        else:
            accept_prob = 0.0
        if rng.uniform() < accept_prob:
            x, logp, g = y, logp_y, g_y
            if t >= warmup:
                accepted += 1
        if t < warmup and adapt:
            log_eps += (accept_prob - TARGET_ACCEPTANCE) / (t + 1) ** 0.6
            eps = math.exp(log_eps)
        if t >= warmup:
            i = t - warmup
            thetas[i] = x
            grads[i] = g
            logps[i] = logp
    return Chain(SampleSet(thetas, grads), accepted / S, warmup, eps, seed, logps)


def gradient_check(target: TargetModel, points, h: float = 1e-5) -> float:
    """Largest relative gap between the analytic gradient and central differences."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    worst = 0.0
    for x in points:
        analytic = np.asarray(target.grad_log_density(x), dtype=float)
        numeric = np.empty_like(analytic)
        for j in range(target.dim):
            step = np.zeros(target.dim)
            step[j] = h
            numeric[j] = (target.log_density(x + step) - target.log_density(x - step)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / (1.0 + np.abs(numeric)))))
    return worst
