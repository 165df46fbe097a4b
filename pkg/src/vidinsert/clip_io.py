"""PNG-sequence clip storage, mask PNGs, and raw latent dumps.

Clips are directories of zero-padded 8-bit RGB frames
(``frame_0000.png``, ``frame_0001.png``, ...). Masks are single-channel
PNGs holding 0 or 255. Values are clamped to [0, 1] only here, at the
file boundary; in-memory frames stay unclamped floats.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .compositor import Clip, Frame
from .geometry import BinaryMask

__all__ = [
    "FRAME_TEMPLATE",
    "save_frame",
    "load_frame",
    "save_clip",
    "load_clip",
    "save_mask",
    "load_mask",
    "save_latents",
    "load_latents",
]

FRAME_TEMPLATE = "frame_{:04d}.png"


def save_frame(frame: Frame, path: str | Path) -> None:
    """Write one frame as 8-bit RGB, clamping to [0, 1] first."""
    clamped = np.clip(frame.pixels, 0.0, 1.0)
    quantized = np.round(clamped * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(Path(path))


def load_frame(path: str | Path) -> Frame:
    with Image.open(Path(path)) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return Frame(arr / 255.0)


def save_clip(clip: Clip, directory: str | Path) -> Path:
    """Write a clip as a PNG sequence; returns the directory."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip):
        save_frame(frame, out / FRAME_TEMPLATE.format(i))
    return out


def load_clip(directory: str | Path, fps: float = 8.0) -> Clip:
    """Read a PNG sequence back into a clip (frames sorted by name)."""
    src = Path(directory)
    if not src.is_dir():
        raise FileNotFoundError(f"clip directory {src} does not exist")
    paths = sorted(src.glob("frame_*.png"))
    if not paths:
        raise ValueError(f"no frame_*.png files in {src}")
    return Clip(tuple(load_frame(p) for p in paths), fps=fps)


def save_mask(mask: BinaryMask, path: str | Path) -> None:
    """Write a binary mask as a single-channel PNG holding 0 / 255."""
    Image.fromarray(mask.grid * np.uint8(255), mode="L").save(Path(path))


def load_mask(path: str | Path) -> BinaryMask:
    with Image.open(Path(path)) as img:
        arr = np.asarray(img.convert("L"))
    return BinaryMask((arr > 127).astype(np.uint8))


def save_latents(latents: np.ndarray, base: str | Path, schedule_digest: str) -> None:
    """Dump a latent array as raw float64 bytes plus a JSON header.

    ``base`` is extended to ``base.bin`` / ``base.json``; the header
    records shape, dtype, byte order, and the schedule digest so a dump
    is self-describing.
    """
    base = Path(base)
    arr = np.ascontiguousarray(latents, dtype=np.float64)
    base.with_suffix(".bin").write_bytes(arr.tobytes())
    header = {
        "shape": list(arr.shape),
        "dtype": "float64",
        "order": "C",
        "schedule": schedule_digest,
    }
    base.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")


def load_latents(base: str | Path) -> tuple[np.ndarray, dict]:
    base = Path(base)
    header = json.loads(base.with_suffix(".json").read_text())
    raw = base.with_suffix(".bin").read_bytes()
    arr = np.frombuffer(raw, dtype=np.dtype(header["dtype"])).reshape(header["shape"])
    return arr.copy(), header
