"""Bounding boxes, binary masks, trajectories, and the mask algebra.

The region partition built here (background / interaction area / object)
is what both noising stages and the evaluation crops consume. Everything
is a pure function of its inputs; nothing mutates shared state, so all
of it is safe to call from parallel workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .resample import resize_nearest

__all__ = [
    "BBox",
    "BinaryMask",
    "Delta",
    "TrajectorySequence",
    "RegionPartition",
    "generate_trajectory",
    "rasterize",
    "merge_mask",
    "interaction_mask",
    "partition",
    "load_trajectory_spec",
    "save_trajectory_spec",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in integer pixel coordinates.

    ``(x0, y0)`` is the top-left corner (inclusive); ``w`` and ``h`` are
    pixel extents, so the exclusive corner is ``(x0 + w, y0 + h)``.
    """

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self) -> None:
        for name in ("x0", "y0", "w", "h"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box extents must be at least 1, got w={self.w}, h={self.h}")

    @property
    def x1(self) -> int:
        """Exclusive right edge."""
        return self.x0 + self.w

    @property
    def y1(self) -> int:
        """Exclusive bottom edge."""
        return self.y0 + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def in_frame(self, frame_width: int, frame_height: int) -> bool:
        """True when the box lies entirely inside a frame of the given size."""
        return (
            self.x0 >= 0
            and self.y0 >= 0
            and self.x1 <= frame_width
            and self.y1 <= frame_height
        )

    def slices(self) -> tuple[slice, slice]:
        """(row, column) slices for indexing a frame-shaped array."""
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def to_dict(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, data: dict) -> "BBox":
        try:
            return cls(int(data["x0"]), int(data["y0"]), int(data["w"]), int(data["h"]))
        except KeyError as exc:
            raise ValueError(f"box spec missing key {exc.args[0]!r}") from None


@dataclass(frozen=True)
class BinaryMask:
    """Dense 2-D mask with values in {0, 1}, stored one byte per pixel."""

    grid: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.grid)
        if g.ndim != 2:
            raise ValueError(f"mask grid must be 2-D, got shape {g.shape}")
        if g.size == 0:
            raise ValueError("mask grid must be non-empty")
        if not np.isin(g, (0, 1)).all():
            raise ValueError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "grid", np.ascontiguousarray(g, dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    @property
    def count(self) -> int:
        """Number of set pixels."""
        return int(self.grid.sum())

    @property
    def is_empty(self) -> bool:
        return not self.grid.any()

    def complement(self) -> "BinaryMask":
        return BinaryMask(1 - self.grid)

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def full(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=np.uint8))


@dataclass(frozen=True)
class Delta:
    """Per-transition change of a box: position and extent offsets."""

    dx: int = 0
    dy: int = 0
    dw: int = 0
    dh: int = 0


@dataclass(frozen=True)
class TrajectorySequence:
    """Per-frame bounding boxes prescribing where the object sits."""

    boxes: tuple[BBox, ...]
    frame_width: int
    frame_height: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if len(self.boxes) == 0:
            raise ValueError("trajectory must contain at least one box")
        if self.frame_width < 1 or self.frame_height < 1:
            raise ValueError(
                f"frame dims must be positive, got {self.frame_width}x{self.frame_height}"
            )
        for i, box in enumerate(self.boxes):
            if not isinstance(box, BBox):
                raise TypeError(f"boxes[{i}] is not a BBox")
            if not box.in_frame(self.frame_width, self.frame_height):
                raise ValueError(
                    f"boxes[{i}] {box.to_dict()} lies outside the "
                    f"{self.frame_width}x{self.frame_height} frame"
                )

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self) -> Iterator[BBox]:
        return iter(self.boxes)

    def __getitem__(self, index: int) -> BBox:
        return self.boxes[index]


@dataclass(frozen=True)
class RegionPartition:
    """Disjoint background / interaction / object masks for one frame.

    The three masks cover every pixel exactly once; that is validated at
    construction, so holding a RegionPartition is proof of the property.
    """

    background: BinaryMask
    interaction: BinaryMask
    object: BinaryMask

    def __post_init__(self) -> None:
        shape = self.background.grid.shape
        if self.interaction.grid.shape != shape or self.object.grid.shape != shape:
            raise ValueError("region masks must share one shape")
        total = (
            self.background.grid.astype(np.int16)
            + self.interaction.grid
            + self.object.grid
        )
        if not (total == 1).all():
            raise ValueError("region masks must partition the frame (sum to one everywhere)")


def generate_trajectory(
    init: BBox,
    schedule: Delta | Sequence[Delta],
    n_frames: int,
    frame_width: int,
    frame_height: int,
) -> TrajectorySequence:
    """Generate a trajectory frame by frame from an initial box.

    Parameters
    ----------
    init:
        Box for frame 0. Must lie inside the frame.
    schedule:
        A single ``Delta`` applied at every transition, or a sequence
        with at least ``n_frames - 1`` entries where entry ``i``
        produces frame ``i + 1``.
    n_frames:
        Number of boxes to produce.
    frame_width, frame_height:
        Frame size the boxes must stay inside.

    Each transition applies its delta and then clamps: extents to
    ``[1, frame dim]`` first, then position so the box stays in frame.
    """
    if frame_width < 1 or frame_height < 1:
        raise ValueError(f"frame dims must be positive, got {frame_width}x{frame_height}")
    if n_frames < 1:
        raise ValueError(f"n_frames must be at least 1, got {n_frames}")
    if not init.in_frame(frame_width, frame_height):
        raise ValueError(
            f"initial box {init.to_dict()} lies outside the {frame_width}x{frame_height} frame"
        )

    if isinstance(schedule, Delta):
        deltas: Sequence[Delta] = [schedule] * max(n_frames - 1, 0)
    else:
        deltas = list(schedule)
        if len(deltas) < n_frames - 1:
            raise ValueError(
                f"schedule has {len(deltas)} deltas but {n_frames - 1} transitions are needed"
            )

    boxes = [init]
    for i in range(n_frames - 1):
        prev = boxes[-1]
        d = deltas[i]
        w = min(max(prev.w + d.dw, 1), frame_width)
        h = min(max(prev.h + d.dh, 1), frame_height)
        x0 = min(max(prev.x0 + d.dx, 0), frame_width - w)
        y0 = min(max(prev.y0 + d.dy, 0), frame_height - h)
        boxes.append(BBox(x0, y0, w, h))
    return TrajectorySequence(tuple(boxes), frame_width, frame_height)


def rasterize(traj: TrajectorySequence) -> list[BinaryMask]:
    """Rasterize each trajectory box: 1 inside the box, 0 outside."""
    masks = []
    for box in traj:
        grid = np.zeros((traj.frame_height, traj.frame_width), dtype=np.uint8)
        grid[box.slices()] = 1
        masks.append(BinaryMask(grid))
    return masks


def merge_mask(
    obj_mask: BinaryMask, box: BBox, frame_width: int, frame_height: int
) -> BinaryMask:
    """Resize the object mask into a box and paste it on an empty frame.

    Nearest-neighbor resampling keeps the result strictly binary, and the
    support always lands inside ``box``, so the output is pointwise ``<=``
    the rasterized box.
    """
    if obj_mask.is_empty:
        raise ValueError("object mask has empty support")
    if not box.in_frame(frame_width, frame_height):
        raise ValueError(
            f"box {box.to_dict()} lies outside the {frame_width}x{frame_height} frame"
        )
    resized = resize_nearest(obj_mask.grid, box.h, box.w)
    out = np.zeros((frame_height, frame_width), dtype=np.uint8)
    out[box.slices()] = resized
    return BinaryMask(out)


def interaction_mask(merge_i: BinaryMask, traj_i: BinaryMask) -> BinaryMask:
    """Pointwise XOR of the merged and trajectory masks.

    With ``merge_i <= traj_i`` (the compositing guarantee) this is the
    ring of trajectory pixels not covered by the object.
    """
    if merge_i.grid.shape != traj_i.grid.shape:
        raise ValueError(
            f"mask shapes differ: {merge_i.grid.shape} vs {traj_i.grid.shape}"
        )
    return BinaryMask(merge_i.grid ^ traj_i.grid)


def partition(merge_i: BinaryMask, traj_i: BinaryMask) -> RegionPartition:
    """Split a frame into background / interaction / object regions.

    Background is everything outside the trajectory box, the object is
    the merged mask, and the interaction area is what the box covers but
    the object does not.
    """
    if merge_i.grid.shape != traj_i.grid.shape:
        raise ValueError(
            f"mask shapes differ: {merge_i.grid.shape} vs {traj_i.grid.shape}"
        )
    if np.any(merge_i.grid > traj_i.grid):
        raise ValueError("merged mask must be contained in the trajectory mask")
    return RegionPartition(
        background=traj_i.complement(),
        interaction=interaction_mask(merge_i, traj_i),
        object=merge_i,
    )


# ---------------------------------------------------------------------------
# Trajectory spec files


def load_trajectory_spec(source: dict | str | Path) -> TrajectorySequence:
    """Read a trajectory spec from JSON (path or already-parsed dict).

    Two forms are accepted: explicit ``boxes`` (used as-is), or an
    ``init`` box plus per-transition ``deltas`` and a ``frames`` count.
    Explicit boxes win when both are present. ``width`` and ``height``
    give the frame size in either form.
    """
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text())
    else:
        data = source
    if not isinstance(data, dict):
        raise ValueError("trajectory spec must be a JSON object")

    try:
        width = int(data["width"])
        height = int(data["height"])
    except KeyError as exc:
        raise ValueError(f"trajectory spec missing key {exc.args[0]!r}") from None

    if "boxes" in data:
        boxes = tuple(BBox.from_dict(b) for b in data["boxes"])
        return TrajectorySequence(boxes, width, height)

    if "init" not in data or "frames" not in data:
        raise ValueError("trajectory spec needs either 'boxes' or 'init' + 'frames'")
    init = BBox.from_dict(data["init"])
    n_frames = int(data["frames"])
    raw = data.get("deltas", [])
    deltas = [
        Delta(
            dx=int(d.get("dx", 0)),
            dy=int(d.get("dy", 0)),
            dw=int(d.get("dw", 0)),
            dh=int(d.get("dh", 0)),
        )
        for d in raw
    ]
    if len(deltas) == 1:
        return generate_trajectory(init, deltas[0], n_frames, width, height)
    if not deltas:
        deltas = [Delta()] * (n_frames - 1)
    return generate_trajectory(init, deltas, n_frames, width, height)


def save_trajectory_spec(traj: TrajectorySequence, path: str | Path) -> None:
    """Write a trajectory as explicit boxes (the unambiguous form)."""
    payload = {
        "width": traj.frame_width,
        "height": traj.frame_height,
        "frames": len(traj),
        "boxes": [b.to_dict() for b in traj],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
