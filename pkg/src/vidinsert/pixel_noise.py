"""Region-weighted Gaussian blending on the composited clip.

The cheap first-stage option: no model call, just a convex blend of
per-frame noise into the interaction area (strength ``sigma1``) and the
object area (``sigma2``), with the background left untouched bit for
bit. One noise field is drawn per frame and shared by both regions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .compositor import Clip, Frame
from .geometry import RegionPartition
from .rng import seeded_normal

__all__ = ["NoiseConfig", "inject"]


@dataclass(frozen=True)
class NoiseConfig:
    """Blend strengths and RNG seed for pixel-domain noising.

    Both strengths live in [0, 1]. The interaction area is expected to
    receive at least as much noise as the object interior
    (``sigma1 >= sigma2``); the reverse is allowed but warned about.
    """

    sigma1: float = 0.4
    sigma2: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("sigma1", "sigma2"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.sigma2 > self.sigma1:
            warnings.warn(
                f"sigma2={self.sigma2} exceeds sigma1={self.sigma1}; the object "
                "interior will be noisier than the interaction area",
                stacklevel=2,
            )


def inject(
    copy_clip: Clip, partitions: Sequence[RegionPartition], cfg: NoiseConfig
) -> Clip:
    """Blend per-frame noise into the interaction and object areas.

    Frame ``i`` draws one standard-normal field from substream
    ``(cfg.seed, i)`` and uses it in both region terms:

    * interaction area: ``sigma1 * eps + (1 - sigma1) * pixel``
    * object area:      ``sigma2 * eps + (1 - sigma2) * pixel``
    * background:       copied unchanged.

    Values are returned unclamped; clamping happens at file export.
    """
    if len(partitions) != len(copy_clip):
        raise ValueError(
            f"{len(partitions)} partitions for a clip of {len(copy_clip)} frames"
        )

    out_frames = []
    for i, frame in enumerate(copy_clip):
        part = partitions[i]
        if part.background.grid.shape != (frame.height, frame.width):
            raise ValueError(
                f"partition {i} shape {part.background.grid.shape} does not match "
                f"frame {frame.height}x{frame.width}"
            )
        pixels = frame.pixels
        eps = seeded_normal(cfg.seed, i, pixels.shape)
        in_ia = part.interaction.grid[..., None] == 1
        in_obj = part.object.grid[..., None] == 1
        noised = np.where(
            in_ia,
            cfg.sigma1 * eps + (1.0 - cfg.sigma1) * pixels,
            np.where(in_obj, cfg.sigma2 * eps + (1.0 - cfg.sigma2) * pixels, pixels),
        )
        out_frames.append(Frame(noised))
    return Clip(tuple(out_frames), fps=copy_clip.fps)
