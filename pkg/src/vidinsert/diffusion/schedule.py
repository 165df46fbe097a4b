"""Cumulative signal-retention schedules for the diffusion steps.

``alpha_bar[t]`` is the fraction of signal variance kept at index ``t``,
with ``alpha_bar[0] = 1`` (clean data) and a strict decrease toward the
terminal index. The schedule is variance preserving: unit-variance data
stays unit variance at every index.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = ["NoiseSchedule"]


@dataclass(frozen=True)
class NoiseSchedule:
    """Array of ``alpha_bar`` values indexed ``t = 0 .. T``."""

    alpha_bar: np.ndarray

    def __post_init__(self) -> None:
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.size < 2:
            raise ValueError("alpha_bar must be a 1-D array with at least 2 entries")
        if not np.isfinite(ab).all():
            raise ValueError("alpha_bar must be finite")
        if ab[0] < 0.999:
            raise ValueError(f"alpha_bar[0] must be >= 0.999, got {ab[0]}")
        if np.any(ab <= 0.0) or np.any(ab > 1.0):
            raise ValueError("alpha_bar values must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")
        object.__setattr__(self, "alpha_bar", np.ascontiguousarray(ab))

    @property
    def T(self) -> int:
        """Terminal index (number of transitions in the full schedule)."""
        return self.alpha_bar.size - 1

    @classmethod
    def linear_beta(
        cls, T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02
    ) -> "NoiseSchedule":
        """Linear-in-beta construction: ``alpha_bar[t] = prod(1 - beta_s)``."""
        if T < 1:
            raise ValueError(f"T must be at least 1, got {T}")
        if not (0.0 < beta_start <= beta_end < 1.0):
            raise ValueError(
                f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
        ab = np.concatenate(([1.0], np.cumprod(1.0 - betas)))
        return cls(ab)

    def uniform_grid(self, steps: int) -> np.ndarray:
        """Index grid ``[0, s, 2s, ..., T]`` for strided inference.

        ``steps`` must divide ``T`` exactly so the stride is uniform.
        """
        if steps < 1:
            raise ValueError(f"steps must be at least 1, got {steps}")
        if steps > self.T:
            raise ValueError(f"steps={steps} exceeds schedule length T={self.T}")
        if self.T % steps != 0:
            raise ValueError(f"steps={steps} does not divide T={self.T} evenly")
        stride = self.T // steps
        return np.arange(0, self.T + 1, stride, dtype=np.intp)

    @property
    def digest(self) -> str:
        """Short content hash, used to tag latent dumps."""
        return hashlib.sha256(self.alpha_bar.tobytes()).hexdigest()[:16]
