"""Computational caps shared by the samplers and estimators."""

from __future__ import annotations

from dataclasses import asdict, dataclass


class BudgetExceeded(RuntimeError):
    """Raised when a construction would exceed a hard cap (e.g. grid size)."""


@dataclass(frozen=True)
class Budget:
    """Caps applied when the theoretical parameter choices are too expensive.

    Attributes:
        max_steps: Cap on the number of reverse-SDE steps per draw.
        max_draws: Cap on total sampler draws ``N * M`` in one normalization estimate.
        estimation_steps: Step cap used for draws inside the normalization
            estimator. ``None`` means ``max_steps``.
        max_grid: Hard cap on the auxiliary grid size.
        max_exact_terms: Cap on terms summed by exact reference constructions.
    """

    max_steps: int = 20_000
    max_draws: int = 10_000_000
    estimation_steps: int | None = None
    max_grid: int = 5_000_000
    max_exact_terms: int = 1_000_000

    def __post_init__(self):
        for name in ("max_steps", "max_draws", "max_grid", "max_exact_terms"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 2:
            raise ValueError("max_steps must be at least 2")
        if self.estimation_steps is not None and self.estimation_steps < 2:
            raise ValueError("estimation_steps must be at least 2")

    @property
    def inner_steps(self) -> int:
        return self.max_steps if self.estimation_steps is None else self.estimation_steps

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_BUDGET = Budget()
