"""Hardness constructions as concrete instances, plus the Gibbs metastability demo.

* PARTITION: base ``Unif({-1,1}^d)`` tilted by ``-(d+5) (w^T x)^2``. On YES
  instances the tilt puts almost all its mass on sign vectors with
  ``w^T x = 0``, so rounding a good sample decides the instance.
* MAX-CUT: base ``Unif({0,1}^d)`` tilted by ``x^T A x`` with
  ``A = (d+100) * (graph Laplacian)``; the quadratic form on indicator vectors
  counts cut edges.
* Gibbs: alternating exact conditionals on the lifted ``(x, z)`` law of a
  symmetric two-mode base gets stuck in one mode once the tilt is strong.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import expit, logsumexp

from .base_dist import FiniteAtomBase
from .reference_oracle import sign_pm

MAX_ENUM_DIM = 20


@dataclass(frozen=True, eq=False)
class PartitionInstance:
    w: np.ndarray
    beta: float = field(init=False)
    base: FiniteAtomBase = field(init=False, repr=False)
    A: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.w)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("w must be a nonempty integer vector")
        if not np.all(np.equal(np.mod(w, 1), 0)):
            raise ValueError("w must have integer entries")
        w = w.astype(np.int64)
        d = len(w)
        if d > MAX_ENUM_DIM:
            raise ValueError(f"d={d} exceeds the enumeration limit {MAX_ENUM_DIM}")
        beta = float(d + 5)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "base", FiniteAtomBase.hypercube(d))
        object.__setattr__(self, "A", -beta * np.outer(w, w).astype(float))

    @property
    def dim(self) -> int:
        return len(self.w)

    def solutions_mask(self) -> np.ndarray:
        """Boolean mask over ``base.locations`` of sign vectors with ``w^T x = 0``."""
        signs = self.base.locations.astype(np.int64)
        return signs @ self.w == 0

    def tilted(self) -> FiniteAtomBase:
        """Exact ``q_w(x) ∝ p(x) exp(-beta (w^T x)^2)``."""
        dots = (self.base.locations.astype(np.int64) @ self.w).astype(float)
        return FiniteAtomBase.from_log_weights(
            self.base.locations, self.base.log_weights - self.beta * dots**2, self.base.norm_bound
        )


@dataclass(frozen=True)
class PartitionMass:
    value: float
    no_solution: bool


def partition_mass(inst: PartitionInstance) -> PartitionMass:
    """Exact ``q_w(S_w)`` by enumerating all ``2^d`` sign vectors."""
    mask = inst.solutions_mask()
    if not mask.any():
        return PartitionMass(0.0, True)
    dots = (inst.base.locations.astype(np.int64) @ inst.w).astype(float)
    logw = -inst.beta * dots**2
    return PartitionMass(float(np.exp(logsumexp(logw[mask]) - logsumexp(logw))), False)


def random_partition_instance(dim: int, rng: np.random.Generator, max_weight: int = 10) -> PartitionInstance:
    return PartitionInstance(rng.integers(1, max_weight + 1, size=dim))


def partition_decode(samples, w, rule: str = "first") -> bool:
    """Round samples to sign vectors (``sign(0) = +1``) and test ``w^T x_hat = 0``.

    ``rule`` is ``"first"`` (single-draw decoder), ``"any"`` or ``"majority"``.
    """
    pts = np.atleast_2d(np.asarray(getattr(samples, "points", samples), dtype=float))
    if len(pts) == 0:
        raise ValueError("need at least one sample")
    hits = sign_pm(pts).astype(np.int64) @ np.asarray(w, dtype=np.int64) == 0
    if rule == "first":
        return bool(hits[0])
    if rule == "any":
        return bool(hits.any())
    if rule == "majority":
        return bool(hits.sum() * 2 > len(hits))
    raise ValueError(f"unknown decode rule {rule!r}")


@dataclass(frozen=True, eq=False)
class MaxCutInstance:
    edges: tuple[tuple[int, int], ...]
    dim: int
    beta: float = field(init=False)
    base: FiniteAtomBase = field(init=False, repr=False)
    A: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        for a, b in edges:
            if not (0 <= a < self.dim and 0 <= b < self.dim) or a == b:
                raise ValueError(f"bad edge ({a}, {b}) for {self.dim} vertices")
        beta = float(self.dim + 100)
        A = beta * laplacian(edges, self.dim).astype(float)
        min_eig = float(np.linalg.eigvalsh(A).min()) if self.dim else 0.0
        if min_eig < -1e-9:
            raise AssertionError(f"MAX-CUT matrix not PSD (min eigenvalue {min_eig})")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "A", A)
        if self.dim <= MAX_ENUM_DIM:
            object.__setattr__(self, "base", FiniteAtomBase.hypercube(self.dim, (0.0, 1.0)))


def laplacian(edges: Iterable[tuple[int, int]], dim: int) -> np.ndarray:
    """Integer matrix ``sum_{(u,v)} (e_uu + e_vv - e_uv - e_vu)``."""
    lap = np.zeros((dim, dim), dtype=np.int64)
    for a, b in edges:
        lap[a, a] += 1
        lap[b, b] += 1
        lap[a, b] -= 1
        lap[b, a] -= 1
    return lap


def random_graph(dim: int, rng: np.random.Generator, p: float = 0.5) -> MaxCutInstance:
    edges = [(a, b) for a in range(dim) for b in range(a + 1, dim) if rng.random() < p]
    return MaxCutInstance(tuple(edges), dim)


def maxcut_value(inst: MaxCutInstance, subset: Iterable[int]) -> int:
    """Cut size of ``subset`` via ``x^T A x / beta`` on its indicator vector."""
    x = np.zeros(inst.dim)
    for v in subset:
        if not 0 <= v < inst.dim:
            raise ValueError(f"vertex {v} out of range")
        x[v] = 1.0
    val = float(x @ inst.A @ x) / inst.beta
    rounded = round(val)
    if abs(val - rounded) > 1e-6:
        raise AssertionError(f"cut value {val} is not an integer; construction is broken")
    return int(rounded)


def maxcut_decode(samples, inst: MaxCutInstance, k: int) -> bool:
    """Threshold the first sample at 1/2 and answer whether its cut has size >= k."""
    pts = np.atleast_2d(np.asarray(getattr(samples, "points", samples), dtype=float))
    x_hat = np.flatnonzero(pts[0] >= 0.5)
    return maxcut_value(inst, x_hat) >= k


def maxcut_tilted(inst: MaxCutInstance) -> FiniteAtomBase:
    x = inst.base.locations
    quad = np.einsum("ni,ij,nj->n", x, inst.A, x)
    return FiniteAtomBase.from_log_weights(x, inst.base.log_weights + quad, inst.base.norm_bound)


def maxcut_optimal_mass(inst: MaxCutInstance) -> float:
    """Exact tilted mass on maximum cuts (at least 0.99 by the choice of beta)."""
    tilted = maxcut_tilted(inst)
    cuts = np.rint(np.einsum("ni,ij,nj->n", tilted.locations, laplacian(inst.edges, inst.dim), tilted.locations))
    best = cuts == cuts.max()
    return float(np.exp(logsumexp(tilted.log_weights[best])))


@dataclass
class GibbsSummary:
    positive_fraction: float
    flips: int
    final_x: np.ndarray
    final_z: float
    trace: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "positive_fraction": self.positive_fraction,
            "flips": self.flips,
            "final_x": self.final_x.tolist(),
            "final_z": self.final_z,
        }


def gibbs_chain(
    lam: float,
    u: Sequence[float],
    steps: int,
    seed: int,
    *,
    mode: str = "atoms",
    variance: float = 0.01,
    keep_trace: bool = False,
) -> GibbsSummary:
    """Gibbs sampler on the lifted law of the tilt ``lam (u^T x)^2``.

    The base is ``(delta_{-u} + delta_{+u}) / 2`` (``mode="atoms"``) or
    ``(N(-u, s^2 I) + N(u, s^2 I)) / 2`` (``mode="mixture"``, ``s^2 = variance``).
    With ``a = sqrt(2 lam)`` the conditionals are ``z | x ~ N(a u^T x, 1)`` and
    ``x | z ∝ p(x) exp(a z u^T x)``. The chain starts at ``x = +u``.

    Returns:
        Fraction of steps with ``u^T x > 0``, number of sign changes of
        ``u^T x`` between consecutive steps, and the final state.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if mode not in ("atoms", "mixture"):
        raise ValueError(f"unknown mode {mode!r}")
    u = np.asarray(u, dtype=float)
    a = math.sqrt(2.0 * lam)
    uu = float(u @ u)
    rng = np.random.default_rng(seed)
    x = u.copy()
    z = 0.0
    prev = 1
    flips = 0
    positive = 0
    trace = np.empty((steps, 2)) if keep_trace else None
    for k in range(steps):
        z = a * float(u @ x) + rng.standard_normal()
        plus = rng.random() < expit(2.0 * a * z * uu)
        sign = 1 if plus else -1
        if mode == "atoms":
            x = sign * u
        else:
            x = sign * u + variance * a * z * u + math.sqrt(variance) * rng.standard_normal(u.shape)
        cur = 1 if float(u @ x) > 0 else -1
        flips += cur != prev
        positive += cur > 0
        prev = cur
        if keep_trace:
            trace[k] = (z, float(u @ x))
    return GibbsSummary(positive / steps, flips, x, z, trace)


def gibbs_flip_probability(lam: float, unorm: float = 1.0) -> float:
    """Exact one-step probability that the two-atom chain leaves the ``+u`` mode.

    From ``x = +u``: ``z ~ N(a |u|^2, 1)`` and the next ``x`` is ``-u`` with
    probability ``expit(-2 a z |u|^2)``; the expectation is done by quadrature.
    """
    a = math.sqrt(2.0 * lam)
    uu = unorm * unorm
    mean = a * uu

    def integrand(z):
        return math.exp(-0.5 * (z - mean) ** 2) / math.sqrt(2 * math.pi) * expit(-2.0 * a * z * uu)

    return quad(integrand, mean - 15, mean + 15, points=[0.0], limit=200)[0]
