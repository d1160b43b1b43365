"""Reverse-time Ornstein-Uhlenbeck sampler driven by a score oracle.

The forward process is ``dX = -X dt + sqrt(2) dB``; at time ``t`` its marginal
is the sigma-noised law with ``sigma(t) = sqrt(1 - exp(-2t))``. Sampling runs
the reverse SDE ``dY = (Y + 2 s(Y)) dt + sqrt(2) dB`` with an exponential
integrator (score frozen over each step, linear part solved exactly), starting
from ``N(0, I)``, and projects the terminal iterate onto a ball.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from .base_dist import SIGMA_MAX, SIGMA_MIN, ScoreFn

C0 = 8.0


def sigma_to_time(sigma: float) -> float:
    return -0.5 * math.log1p(-sigma * sigma)


def time_to_sigma(t):
    return np.sqrt(-np.expm1(-2.0 * np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class DiffusionSchedule:
    """Noise-level grid and projection radius for :func:`unadjusted_sample`."""

    num_steps: int
    sigma_max: float
    sigma_min: float
    projection_radius: float
    dim: int
    interpolation: str = "geometric-in-time"

    def __post_init__(self):
        if self.num_steps < 2:
            raise ValueError(f"num_steps must be >= 2, got {self.num_steps}")
        if not (0 < self.sigma_min < self.sigma_max < 1):
            raise ValueError(f"need 0 < sigma_min < sigma_max < 1, got {self.sigma_min}, {self.sigma_max}")
        if not self.projection_radius > 0:
            raise ValueError("projection_radius must be positive")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.interpolation != "geometric-in-time":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")

    def times(self) -> np.ndarray:
        """Strictly decreasing OU times ``t_0 = t_max > ... > t_K = t_min``."""
        return np.geomspace(sigma_to_time(self.sigma_max), sigma_to_time(self.sigma_min), self.num_steps + 1)

    def sigmas(self) -> np.ndarray:
        return time_to_sigma(self.times())

    def to_dict(self) -> dict:
        return asdict(self)


def _forward_displacement(sigma: float, dim: int, norm_bound: float) -> float:
    # 1 - sqrt(1 - s^2) without cancellation
    gap = sigma * sigma / (1.0 + math.sqrt(1.0 - sigma * sigma))
    return math.sqrt(gap) * norm_bound + sigma * math.sqrt(dim)


def default_schedule(
    epsilon: float,
    dim: int,
    norm_bound: float,
    *,
    c0: float = C0,
    max_steps: int = 20_000,
) -> DiffusionSchedule:
    """Schedule for a W2 target ``epsilon``.

    ``K = ceil(c0 d C^2 / eps^2)`` capped at ``max_steps``; the horizon is
    ``T = ln(4 d C / eps)``; ``sigma_min`` is the largest level whose residual
    forward displacement ``sqrt(1 - sqrt(1 - s^2)) C + s sqrt(d)`` is at most
    ``eps / 2``, floored at 1e-6.
    """
    if not (0 < epsilon < 1):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if dim < 1 or not norm_bound > 0:
        raise ValueError("dim and norm_bound must be positive")
    k = math.ceil(c0 * dim * norm_bound**2 / epsilon**2)
    k = max(2, min(k, max_steps))
    horizon = math.log(4.0 * dim * norm_bound / epsilon)
    sigma_max = min(math.sqrt(-math.expm1(-2.0 * horizon)), SIGMA_MAX)

    target = epsilon / 2.0
    f = lambda s: _forward_displacement(s, dim, norm_bound) - target
    if f(SIGMA_MIN) >= 0:
        sigma_min = SIGMA_MIN
    else:
        hi = 0.5 * sigma_max
        sigma_min = brentq(f, SIGMA_MIN, hi, xtol=1e-14) if f(hi) > 0 else hi
    return DiffusionSchedule(k, sigma_max, sigma_min, float(norm_bound), dim)


def project_to_ball(x: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return x * scale


def unadjusted_sample_batch(
    score_fn: ScoreFn,
    schedule: DiffusionSchedule,
    n: int,
    rng: np.random.Generator | int,
) -> np.ndarray:
    """Draw ``n`` independent samples at once, shape ``(n, d)``.

    ``score_fn(sigma, Y)`` is called with the whole batch ``Y`` of shape
    ``(n, d)`` and must return an array of the same shape.
    """
    rng = np.random.default_rng(rng)
    times = schedule.times()
    sigmas = time_to_sigma(times)
    y = rng.standard_normal((n, schedule.dim))
    for k in range(schedule.num_steps):
        h = times[k] - times[k + 1]
        s = score_fn(float(sigmas[k]), y)
        if not np.all(np.isfinite(s)):
            bad = int(np.argmax(~np.all(np.isfinite(s), axis=-1)))
            raise FloatingPointError(
                f"score oracle returned non-finite values at sigma={sigmas[k]:.6g}, "
                f"||x||={np.linalg.norm(y[bad]):.6g}"
            )
        eh = math.exp(h)
        y = eh * y + 2.0 * (eh - 1.0) * s + math.sqrt(math.expm1(2.0 * h)) * rng.standard_normal(y.shape)
    return project_to_ball(y, schedule.projection_radius)


def unadjusted_sample(score_fn: ScoreFn, schedule: DiffusionSchedule, seed: int) -> np.ndarray:
    """One sample of shape ``(d,)``; bitwise deterministic given ``seed``."""
    return unadjusted_sample_batch(score_fn, schedule, 1, np.random.default_rng(seed))[0]
