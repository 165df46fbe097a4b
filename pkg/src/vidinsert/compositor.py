"""Frames, clips, and object compositing along a trajectory.

Pixel math stays in float64; quantization to 8-bit happens only at the
PNG boundary (clip_io). Background pixels of a composited frame are
copied rather than recomputed, so they compare bit-equal to the source.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .geometry import (
    BBox,
    BinaryMask,
    RegionPartition,
    TrajectorySequence,
    partition,
    rasterize,
)
from .resample import resize_bilinear, resize_nearest

__all__ = [
    "Frame",
    "Clip",
    "ObjectAsset",
    "extract_object",
    "paste",
    "make_copy_sequence",
]


@dataclass(frozen=True)
class Frame:
    """One RGB frame: ``(H, W, 3)`` float64, nominally in [0, 1].

    Mid-pipeline stages (noise blends, decoded latents) may step outside
    [0, 1]; the range is re-imposed only when writing files.
    """

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueError(f"frame pixels must have shape (H, W, 3), got {p.shape}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("frame must be at least 1x1")
        if not np.isfinite(p).all():
            raise ValueError("frame pixels must be finite")
        object.__setattr__(self, "pixels", np.ascontiguousarray(p))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Clip:
    """An ordered sequence of equally sized frames."""

    frames: tuple[Frame, ...]
    fps: float = 8.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) == 0:
            raise ValueError("clip must contain at least one frame")
        if not (self.fps > 0):
            raise ValueError(f"fps must be positive, got {self.fps}")
        h, w = self.frames[0].height, self.frames[0].width
        for i, f in enumerate(self.frames):
            if f.height != h or f.width != w:
                raise ValueError(
                    f"frame {i} is {f.height}x{f.width}, expected {h}x{w}"
                )

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    def __getitem__(self, index: int) -> Frame:
        return self.frames[index]

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width

    def as_array(self) -> np.ndarray:
        """Stack into ``(N, H, W, 3)`` float64."""
        return np.stack([f.pixels for f in self.frames])

    @classmethod
    def from_array(cls, arr: np.ndarray, fps: float = 8.0) -> "Clip":
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim != 4 or a.shape[3] != 3:
            raise ValueError(f"clip array must have shape (N, H, W, 3), got {a.shape}")
        return cls(tuple(Frame(a[i]) for i in range(a.shape[0])), fps=fps)


@dataclass(frozen=True)
class ObjectAsset:
    """Object image plus its segmentation mask on the same pixel grid."""

    image: Frame
    mask: BinaryMask

    def __post_init__(self) -> None:
        if (self.image.height, self.image.width) != (self.mask.height, self.mask.width):
            raise ValueError(
                f"object image is {self.image.height}x{self.image.width} but mask is "
                f"{self.mask.height}x{self.mask.width}"
            )
        if self.mask.is_empty:
            raise ValueError("object mask has empty support")


def extract_object(asset: ObjectAsset) -> Frame:
    """Zero out pixels outside the object mask (elementwise product)."""
    return Frame(asset.image.pixels * asset.mask.grid[..., None])


def paste(
    obj: Frame, obj_mask: BinaryMask, background: Frame, box: BBox
) -> tuple[Frame, BinaryMask]:
    """Resize the masked object into ``box`` and composite it.

    Pixels are resized bilinearly and the mask by nearest neighbor with
    the same coordinate mapping, so the two stay aligned. The composite
    replaces background pixels only where the resized mask is set;
    everywhere else the background is copied untouched. Raises when the
    mask support vanishes under resizing instead of silently returning
    the background.

    Returns the composited frame and the frame-sized merged mask.
    """
    if (obj.height, obj.width) != (obj_mask.height, obj_mask.width):
        raise ValueError(
            f"object is {obj.height}x{obj.width} but mask is "
            f"{obj_mask.height}x{obj_mask.width}"
        )
    if obj_mask.is_empty:
        raise ValueError("object mask has empty support")
    if not box.in_frame(background.width, background.height):
        raise ValueError(
            f"box {box.to_dict()} lies outside the "
            f"{background.width}x{background.height} frame"
        )

    resized_obj = resize_bilinear(obj.pixels, box.h, box.w)
    resized_mask = resize_nearest(obj_mask.grid, box.h, box.w)
    if not resized_mask.any():
        raise ValueError(
            f"object mask support vanished when resized to {box.w}x{box.h}"
        )

    out = background.pixels.copy()
    sl = box.slices()
    out[sl] = np.where(resized_mask[..., None] == 1, resized_obj, out[sl])

    merged = np.zeros((background.height, background.width), dtype=np.uint8)
    merged[sl] = resized_mask
    return Frame(out), BinaryMask(merged)


def make_copy_sequence(
    asset: ObjectAsset, background: Clip, traj: TrajectorySequence
) -> tuple[Clip, list[RegionPartition]]:
    """Paste the object along the trajectory into every background frame.

    Returns the composited clip together with the per-frame region
    partition (background / interaction / object) induced by the paste.
    """
    if len(traj) != len(background):
        raise ValueError(
            f"trajectory has {len(traj)} boxes but clip has {len(background)} frames"
        )
    if traj.frame_width != background.width or traj.frame_height != background.height:
        raise ValueError(
            f"trajectory frame size {traj.frame_width}x{traj.frame_height} does not "
            f"match clip {background.width}x{background.height}"
        )

    masked_obj = extract_object(asset)
    traj_masks = rasterize(traj)
    frames: list[Frame] = []
    parts: list[RegionPartition] = []
    for i, box in enumerate(traj):
        composited, merged = paste(masked_obj, asset.mask, background[i], box)
        frames.append(composited)
        parts.append(partition(merged, traj_masks[i]))
    return Clip(tuple(frames), fps=background.fps), parts
