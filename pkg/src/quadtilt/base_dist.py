"""Base distributions with exact noised scores.

Two families are supported:

* :class:`FiniteAtomBase`, a weighted set of atoms. Its noised versions are
  isotropic Gaussian mixtures, so scores, tilts and partition functions are all
  available in closed form. This is the ground truth used throughout the tests.
* :class:`GaussianMixtureBase`, an isotropic Gaussian mixture. It does not have
  bounded support; an effective norm bound is used instead.

Noise convention: the sigma-noised law of ``X`` is the law of
``sqrt(1 - sigma^2) X + sigma Z`` with ``Z`` standard normal. Every weight
computation is done with log-weights and max subtraction.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Any, Callable, Union

import numpy as np
from scipy.special import logsumexp

SIGMA_MIN = 1e-6
SIGMA_MAX = 1.0 - 1e-6

ScoreFn = Callable[[float, np.ndarray], np.ndarray]


def clamp_sigma(sigma: float) -> float:
    """Clamp a noise level into ``[1e-6, 1 - 1e-6]``."""
    sigma = float(sigma)
    if not np.isfinite(sigma):
        raise ValueError(f"sigma must be finite, got {sigma}")
    return min(max(sigma, SIGMA_MIN), SIGMA_MAX)


def _as_points(x, dim: int, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise ValueError(f"{name} has shape {x.shape}, expected trailing dimension {dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


@dataclass(frozen=True, eq=False)
class FiniteAtomBase:
    """Weighted atoms ``sum_i w_i delta_{x_i}``.

    Attributes:
        locations: Atom locations, shape ``(n, d)``.
        log_weights: Normalized log-weights, shape ``(n,)``.
        norm_bound: Radius of a centered ball containing every atom.
    """

    locations: np.ndarray
    log_weights: np.ndarray
    norm_bound: float

    def __post_init__(self):
        locs = np.array(self.locations, dtype=float)
        if locs.ndim == 1:
            locs = locs[:, None]
        logw = np.array(self.log_weights, dtype=float).reshape(-1)
        if locs.ndim != 2 or locs.shape[0] == 0:
            raise ValueError("need at least one atom with locations of shape (n, d)")
        if logw.shape[0] != locs.shape[0]:
            raise ValueError(f"{locs.shape[0]} locations but {logw.shape[0]} weights")
        if not np.all(np.isfinite(locs)):
            raise ValueError("atom locations must be finite")
        if np.any(np.isnan(logw)) or np.any(logw == np.inf) or np.all(logw == -np.inf):
            raise ValueError("log-weights must be finite or -inf, with at least one finite")
        total = logsumexp(logw)
        if abs(total) > 1e-12:
            raise ValueError(f"weights sum to exp({total:.3e}) != 1")
        if len(np.unique(locs, axis=0)) != len(locs):
            raise ValueError("atom locations must be distinct")
        max_norm = float(np.max(np.linalg.norm(locs, axis=1)))
        bound = float(self.norm_bound)
        if not bound > 0:
            raise ValueError(f"norm_bound must be positive, got {bound}")
        if max_norm > bound * (1 + 1e-12):
            raise ValueError(f"atom with norm {max_norm} exceeds norm_bound {bound}")
        locs.setflags(write=False)
        logw.setflags(write=False)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "log_weights", logw)
        object.__setattr__(self, "norm_bound", bound)

    @classmethod
    def from_log_weights(cls, locations, log_weights, norm_bound=None) -> "FiniteAtomBase":
        """Build from unnormalized log-weights."""
        logw = np.asarray(log_weights, dtype=float)
        logw = logw - logsumexp(logw)
        locs = np.asarray(locations, dtype=float)
        if locs.ndim == 1:
            locs = locs[:, None]
        if norm_bound is None:
            norm_bound = max(1.0, float(np.max(np.linalg.norm(locs, axis=1))))
        return cls(locs, logw, norm_bound)

    @classmethod
    def from_weights(cls, locations, weights, norm_bound=None) -> "FiniteAtomBase":
        weights = np.asarray(weights, dtype=float)
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        return cls.from_log_weights(locations, np.log(weights), norm_bound)

    @classmethod
    def uniform(cls, locations, norm_bound=None) -> "FiniteAtomBase":
        n = len(np.asarray(locations))
        return cls.from_log_weights(locations, np.zeros(n), norm_bound)

    @classmethod
    def hypercube(cls, dim: int, values=(-1.0, 1.0)) -> "FiniteAtomBase":
        """Uniform measure on ``values^dim``, e.g. ``{-1, 1}^d`` or ``{0, 1}^d``."""
        locs = np.array(list(itertools.product(values, repeat=dim)), dtype=float)
        bound = max(1.0, float(np.max(np.linalg.norm(locs, axis=1))))
        return cls.uniform(locs, bound)

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def __len__(self):
        return self.locations.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Exact i.i.d. draws, shape ``(n, d)``."""
        idx = rng.choice(len(self), size=n, p=_safe_probs(self.log_weights))
        return self.locations[idx].copy()

    def to_dict(self) -> dict:
        return {
            "kind": "finite_atoms",
            "dim": self.dim,
            "norm_bound": self.norm_bound,
            "atoms": [
                {"location": loc.tolist(), "weight": float(np.exp(lw)), "log_weight": float(lw)}
                for loc, lw in zip(self.locations, self.log_weights)
            ],
        }


@dataclass(frozen=True, eq=False)
class GaussianMixtureBase:
    """Isotropic mixture ``sum_j w_j N(mu_j, v_j I)``."""

    means: np.ndarray
    variances: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        var = np.array(self.variances, dtype=float).reshape(-1)
        logw = np.array(self.log_weights, dtype=float).reshape(-1)
        if not (len(means) == len(var) == len(logw)) or len(means) == 0:
            raise ValueError("means, variances and weights must have equal nonzero length")
        if np.any(~np.isfinite(var)) or np.any(var <= 0):
            raise ValueError("variances must be strictly positive")
        if abs(logsumexp(logw)) > 1e-12:
            raise ValueError("weights must sum to 1")
        for arr in (means, var, logw):
            arr.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", var)
        object.__setattr__(self, "log_weights", logw)

    @classmethod
    def from_weights(cls, means, variances, weights) -> "GaussianMixtureBase":
        logw = np.log(np.asarray(weights, dtype=float))
        return cls(means, variances, logw - logsumexp(logw))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def norm_bound(self) -> float:
        """Effective bound ``max ||mu_j|| + 6 sqrt(v_j d)``; the support is not truly bounded."""
        return float(np.max(np.linalg.norm(self.means, axis=1) + 6 * np.sqrt(self.variances * self.dim)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self.variances), size=n, p=_safe_probs(self.log_weights))
        noise = rng.standard_normal((n, self.dim))
        return self.means[idx] + np.sqrt(self.variances[idx])[:, None] * noise

    def to_dict(self) -> dict:
        return {
            "kind": "gaussian_mixture",
            "dim": self.dim,
            "components": [
                {"mean": m.tolist(), "variance": float(v), "weight": float(np.exp(lw)), "log_weight": float(lw)}
                for m, v, lw in zip(self.means, self.variances, self.log_weights)
            ],
        }


Base = Union[FiniteAtomBase, GaussianMixtureBase]


def _safe_probs(log_weights: np.ndarray) -> np.ndarray:
    p = np.exp(log_weights - np.max(log_weights))
    return p / p.sum()


def base_from_dict(doc: dict[str, Any]) -> Base:
    """Inverse of ``to_dict`` for either base family."""
    kind = doc.get("kind", "finite_atoms")
    if kind == "finite_atoms":
        atoms = doc["atoms"]
        locs = np.array([a["location"] for a in atoms], dtype=float).reshape(len(atoms), -1)
        if "log_weight" in atoms[0]:
            logw = np.array([a["log_weight"] for a in atoms], dtype=float)
        else:
            logw = np.log(np.array([a["weight"] for a in atoms], dtype=float))
        if "dim" in doc and locs.shape[1] != int(doc["dim"]):
            raise ValueError(f"dim={doc['dim']} but atoms have dimension {locs.shape[1]}")
        if abs(logsumexp(logw)) > 1e-12:
            logw = logw - logsumexp(logw)
        return FiniteAtomBase(locs, logw, doc.get("norm_bound") or max(1.0, float(np.max(np.linalg.norm(locs, axis=1)))))
    if kind == "gaussian_mixture":
        comps = doc["components"]
        means = np.array([c["mean"] for c in comps], dtype=float).reshape(len(comps), -1)
        var = [c["variance"] for c in comps]
        if "log_weight" in comps[0]:
            logw = np.array([c["log_weight"] for c in comps], dtype=float)
            if abs(logsumexp(logw)) > 1e-12:
                logw = logw - logsumexp(logw)
            return GaussianMixtureBase(means, var, logw)
        return GaussianMixtureBase.from_weights(means, var, [c["weight"] for c in comps])
    raise ValueError(f"unknown base kind {kind!r}")


def _component_logits(base: Base, sigma: float, x: np.ndarray):
    """Per-component log-responsibility numerators, means and variances of the noised law."""
    t = np.sqrt(1.0 - sigma**2)
    if isinstance(base, FiniteAtomBase):
        centers = t * base.locations
        var = np.full(len(base), sigma**2)
    else:
        centers = t * base.means
        var = t**2 * base.variances + sigma**2
    d = base.dim
    # ||x - c||^2 expanded for speed on large batches
    sq = (
        np.sum(x * x, axis=-1)[:, None]
        - 2.0 * x @ centers.T
        + np.sum(centers * centers, axis=-1)[None, :]
    )
    sq = np.maximum(sq, 0.0)
    logits = base.log_weights[None, :] - 0.5 * sq / var[None, :] - 0.5 * d * np.log(2 * np.pi * var)[None, :]
    return logits, centers, var


def noised_log_density(base: Base, sigma: float, x) -> np.ndarray:
    """``log p_sigma(x)``; accepts a single point or a batch of shape ``(..., d)``."""
    sigma = clamp_sigma(sigma)
    x = _as_points(x, base.dim)
    flat = x.reshape(-1, base.dim)
    logits, _, _ = _component_logits(base, sigma, flat)
    return logsumexp(logits, axis=1).reshape(x.shape[:-1])


def noised_score(base: Base, sigma: float, x) -> np.ndarray:
    """Exact score ``grad log p_sigma(x)`` of the sigma-noised base.

    The noised base is a Gaussian mixture; the score is the
    responsibility-weighted average of the component scores.

    Args:
        base: Finite-atom or Gaussian-mixture base.
        sigma: Noise level, clamped into ``[1e-6, 1 - 1e-6]``.
        x: Point(s) of shape ``(d,)`` or ``(..., d)``.

    Returns:
        Array with the same shape as ``x``.
    """
    sigma = clamp_sigma(sigma)
    x = _as_points(x, base.dim)
    flat = x.reshape(-1, base.dim)
    if isinstance(base, FiniteAtomBase):
        # ||x||^2 is shared by all atoms and cancels in the responsibilities
        s2 = sigma * sigma
        centers = np.sqrt(1.0 - s2) * base.locations
        resp = flat @ (centers.T / s2)
        resp += base.log_weights - 0.5 * np.sum(centers * centers, axis=1) / s2
        resp -= resp.max(axis=1, keepdims=True)
        np.exp(resp, out=resp)
        resp /= resp.sum(axis=1, keepdims=True)
        score = resp @ centers
        score -= flat
        score /= s2
        return score.reshape(x.shape)
    logits, centers, var = _component_logits(base, sigma, flat)
    logits -= logits.max(axis=1, keepdims=True)
    resp = np.exp(logits)
    resp /= resp.sum(axis=1, keepdims=True)
    prec = resp / var[None, :]
    score = prec @ centers - prec.sum(axis=1, keepdims=True) * flat
    return score.reshape(x.shape)


def score_oracle(base: Base) -> ScoreFn:
    """Score oracle ``(sigma, x) -> grad log p_sigma(x)`` for ``base``."""
    return functools.partial(noised_score, base)


def exact_linear_tilt(base: FiniteAtomBase, v) -> FiniteAtomBase:
    """Reweight atoms by ``exp(<x_i, v>)``; locations and norm bound are kept."""
    v = _as_points(v, base.dim, "v")
    return FiniteAtomBase.from_log_weights(base.locations, base.log_weights + base.locations @ v, base.norm_bound)


def _check_symmetric(A, dim: int) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.shape != (dim, dim):
        raise ValueError(f"A has shape {A.shape}, expected ({dim}, {dim})")
    if not np.all(np.isfinite(A)):
        raise ValueError("A contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > 1e-12 * scale:
        raise ValueError("A must be symmetric")
    return A


def exact_quadratic_tilt(base: FiniteAtomBase, A) -> FiniteAtomBase:
    """Reweight atoms by ``exp(x_i^T A x_i)``. Asymmetric ``A`` is rejected."""
    A = _check_symmetric(A, base.dim)
    X = base.locations
    quad = np.einsum("ni,ij,nj->n", X, A, X)
    return FiniteAtomBase.from_log_weights(X, base.log_weights + quad, base.norm_bound)


def log_mgf(base: FiniteAtomBase, v) -> np.ndarray | float:
    """``log E_p[exp(<x, v>)]``; ``v`` may be a batch of shape ``(m, d)``."""
    v = _as_points(v, base.dim, "v")
    vals = logsumexp(base.log_weights[None, :] + v.reshape(-1, base.dim) @ base.locations.T, axis=1)
    if v.ndim == 1:
        return float(vals[0])
    return vals.reshape(v.shape[:-1])
