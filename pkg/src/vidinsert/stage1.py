"""Latent-space first stage: invert, replace interaction cells, decode.

Frames are handled independently here (image-model semantics); temporal
coherence is deliberately left to the alignment stage. The interaction
masks come down to latent resolution with an any-coverage rule so the
injected noise never undershoots the pixel region.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .compositor import Clip
from .diffusion import Condition, DiffusionBackend, LatentClip, invert_sequence, sample_sequence
from .geometry import BinaryMask, RegionPartition
from .rng import seeded_normal

__all__ = ["LatentMask", "rescale_mask", "inject_latent", "run_latent_injection"]


@dataclass(frozen=True)
class LatentMask:
    """Binary mask at latent resolution, broadcast over channels."""

    grid: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.grid)
        if g.ndim != 2:
            raise ValueError(f"latent mask must be 2-D, got shape {g.shape}")
        if g.size == 0:
            raise ValueError("latent mask must be non-empty")
        if not np.isin(g, (0, 1)).all():
            raise ValueError("latent mask values must be exactly 0 or 1")
        object.__setattr__(self, "grid", np.ascontiguousarray(g, dtype=np.uint8))

    @property
    def is_empty(self) -> bool:
        return not self.grid.any()


def rescale_mask(mask: BinaryMask, factor: int) -> LatentMask:
    """Downscale a pixel mask to latent resolution by max-pooling.

    A latent cell is set when *any* pixel it covers is set, so noise
    injected under the latent mask always covers at least the pixel
    region. Mask dimensions must be divisible by ``factor``.
    """
    if factor < 1:
        raise ValueError(f"factor must be at least 1, got {factor}")
    h, w = mask.grid.shape
    if h % factor or w % factor:
        raise ValueError(f"mask size {h}x{w} not divisible by factor {factor}")
    if factor == 1:
        return LatentMask(mask.grid.copy())
    pooled = mask.grid.reshape(h // factor, factor, w // factor, factor).max(axis=(1, 3))
    return LatentMask(pooled)


def inject_latent(
    inverted: LatentClip, masks: Sequence[LatentMask], seed: int
) -> LatentClip:
    """Replace masked latent cells with fresh unit-normal draws.

    Cells outside each frame's mask are copied bit for bit. Frame ``i``
    draws from substream ``(seed, i)``. Unit scale matches the terminal
    marginal of the variance-preserving schedule.
    """
    if len(masks) != inverted.n_frames:
        raise ValueError(
            f"{len(masks)} masks for {inverted.n_frames} latent frames"
        )
    shape = (inverted.channels, inverted.height, inverted.width)
    out = inverted.latents.copy()
    for i, mask in enumerate(masks):
        if mask.grid.shape != shape[1:]:
            raise ValueError(
                f"mask {i} is {mask.grid.shape}, latent grid is {shape[1:]}"
            )
        if mask.is_empty:
            continue
        eps = seeded_normal(seed, i, shape)
        out[i] = np.where(mask.grid[None, :, :] == 1, eps, out[i])
    return LatentClip(out)


def run_latent_injection(
    copy_clip: Clip,
    partitions: Sequence[RegionPartition],
    cond_obj: Condition,
    backend: DiffusionBackend,
    steps: int,
    seed: int,
    *,
    invert_steps: int | None = None,
    condition_inversion: bool = False,
    strict: bool = False,
    dump_dir: str | Path | None = None,
) -> Clip:
    """Invert the composited clip per frame, inject noise into the
    interaction area, and decode conditioned on the object prompt.

    Inversion is unconditional unless ``condition_inversion`` is set.
    ``invert_steps`` limits the inversion depth to a prefix of the step
    grid (default: full depth); re-sampling retraces the same prefix.
    With ``strict`` set, any frame whose interaction mask is empty is an
    error instead of a silent no-op for that frame. ``dump_dir`` saves
    the inverted and injected latents as raw arrays with JSON headers.
    """
    if backend.video:
        raise ValueError("stage 1 requires a per-frame (image) backend, got a video backend")
    if len(partitions) != len(copy_clip):
        raise ValueError(
            f"{len(partitions)} partitions for a clip of {len(copy_clip)} frames"
        )
    f = backend.downsample
    if copy_clip.height % f or copy_clip.width % f:
        raise ValueError(
            f"frame size {copy_clip.height}x{copy_clip.width} not divisible by "
            f"backend downsample factor {f}"
        )

    masks = [rescale_mask(p.interaction, f) for p in partitions]
    if strict:
        for i, m in enumerate(masks):
            if m.is_empty:
                raise ValueError(f"frame {i} has an empty interaction mask (strict mode)")

    depth = steps if invert_steps is None else invert_steps
    if not (1 <= depth <= steps):
        raise ValueError(f"invert_steps={depth} must lie in [1, steps={steps}]")
    grid = backend.schedule.uniform_grid(steps)[: depth + 1]

    z0 = LatentClip(backend.encode(copy_clip.as_array()))
    inversion_cond = cond_obj if condition_inversion else None
    inverted = invert_sequence(z0, inversion_cond, backend, depth, grid=grid)
    injected = inject_latent(inverted, masks, seed)

    if dump_dir is not None:
        from .clip_io import save_latents

        dump = Path(dump_dir)
        dump.mkdir(parents=True, exist_ok=True)
        save_latents(inverted.latents, dump / "inverted", backend.schedule.digest)
        save_latents(injected.latents, dump / "injected", backend.schedule.digest)

    resampled = sample_sequence(injected, cond_obj, backend, depth, grid=grid)
    return Clip.from_array(backend.decode(resampled.latents), fps=copy_clip.fps)
