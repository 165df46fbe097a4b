"""The pluggable backend contract: schedule + codec + noise predictor.

A backend bundles everything the stepping loops need. Site names let a
sampling loop observe or override intermediate activations of the
predictor (feature maps, attention surrogates); a backend that exposes
no sites simply never calls its hook.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..compositor import Frame
from .schedule import NoiseSchedule

__all__ = [
    "SPATIAL_FEATURE",
    "SPATIAL_ATTENTION",
    "TEMPORAL_ATTENTION",
    "KNOWN_SITES",
    "Condition",
    "LatentClip",
    "Hook",
    "DiffusionBackend",
    "IdentityCodec",
    "BlockCodec",
    "make_codec",
]

SPATIAL_FEATURE = "spatial_feature"
SPATIAL_ATTENTION = "spatial_attention"
TEMPORAL_ATTENTION = "temporal_attention"
KNOWN_SITES = (SPATIAL_FEATURE, SPATIAL_ATTENTION, TEMPORAL_ATTENTION)

# A hook receives (site name, activation) and returns the activation to
# use, possibly replaced. Backends call it once per exposed site per
# prediction, in declaration order.
Hook = Callable[[str, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Condition:
    """Conditioning inputs for the predictor: text and optional first frame."""

    text: str = ""
    first_frame: Optional[Frame] = None


@dataclass(frozen=True)
class LatentClip:
    """Latent-space counterpart of a clip: ``(N, C, h, w)`` float64."""

    latents: np.ndarray

    def __post_init__(self) -> None:
        z = np.asarray(self.latents, dtype=np.float64)
        if z.ndim != 4:
            raise ValueError(f"latents must have shape (N, C, h, w), got {z.shape}")
        if not np.isfinite(z).all():
            raise ValueError("latents must be finite")
        object.__setattr__(self, "latents", np.ascontiguousarray(z))

    @property
    def n_frames(self) -> int:
        return self.latents.shape[0]

    @property
    def channels(self) -> int:
        return self.latents.shape[1]

    @property
    def height(self) -> int:
        return self.latents.shape[2]

    @property
    def width(self) -> int:
        return self.latents.shape[3]


class IdentityCodec:
    """Channels-first transpose. Factor 1, exact inverse."""

    factor = 1
    channels = 3

    def encode(self, frames: np.ndarray) -> np.ndarray:
        a = np.asarray(frames, dtype=np.float64)
        if a.ndim != 4 or a.shape[3] != 3:
            raise ValueError(f"expected (N, H, W, 3), got {a.shape}")
        return np.ascontiguousarray(a.transpose(0, 3, 1, 2))

    def decode(self, latents: np.ndarray) -> np.ndarray:
        z = np.asarray(latents, dtype=np.float64)
        if z.ndim != 4 or z.shape[1] != 3:
            raise ValueError(f"expected (N, 3, h, w), got {z.shape}")
        return np.ascontiguousarray(z.transpose(0, 2, 3, 1))


class BlockCodec:
    """Space-to-depth: folds ``f x f`` pixel blocks into channels.

    Downsamples spatially by ``f`` while staying exactly invertible, a
    stand-in for a learned autoencoder at desk scale. Channel count is
    ``3 * f**2``.
    """

    def __init__(self, factor: int):
        if factor < 2:
            raise ValueError(f"block codec factor must be >= 2, got {factor}")
        self.factor = int(factor)
        self.channels = 3 * self.factor * self.factor

    def encode(self, frames: np.ndarray) -> np.ndarray:
        a = np.asarray(frames, dtype=np.float64)
        if a.ndim != 4 or a.shape[3] != 3:
            raise ValueError(f"expected (N, H, W, 3), got {a.shape}")
        n, h, w, _ = a.shape
        f = self.factor
        if h % f or w % f:
            raise ValueError(f"frame size {h}x{w} not divisible by factor {f}")
        blocks = a.reshape(n, h // f, f, w // f, f, 3)
        # (N, h/f, f, w/f, f, 3) -> (N, 3, f, f, h/f, w/f) -> (N, 3f^2, h/f, w/f)
        return np.ascontiguousarray(
            blocks.transpose(0, 5, 2, 4, 1, 3).reshape(n, self.channels, h // f, w // f)
        )

    def decode(self, latents: np.ndarray) -> np.ndarray:
        z = np.asarray(latents, dtype=np.float64)
        if z.ndim != 4 or z.shape[1] != self.channels:
            raise ValueError(f"expected (N, {self.channels}, h, w), got {z.shape}")
        n, _, hh, ww = z.shape
        f = self.factor
        blocks = z.reshape(n, 3, f, f, hh, ww)
        return np.ascontiguousarray(
            blocks.transpose(0, 4, 2, 5, 3, 1).reshape(n, hh * f, ww * f, 3)
        )


def make_codec(name: str, factor: int = 1):
    """Build a codec by name: ``identity`` or ``block``."""
    if name == "identity":
        if factor not in (0, 1):
            raise ValueError("identity codec has factor 1; use codec='block' to downsample")
        return IdentityCodec()
    if name == "block":
        return BlockCodec(factor)
    raise ValueError(f"unknown codec {name!r} (choose 'identity' or 'block')")


class DiffusionBackend(ABC):
    """Schedule, codec, predictor, and hookable sites under one handle.

    ``video`` declares whether the predictor couples frames along the
    leading axis; per-frame (image) backends must treat frames
    independently. ``sites`` lists the activation names the predictor
    will offer to a hook, in calling order.
    """

    name: str = "backend"
    video: bool = False
    sites: tuple[str, ...] = ()

    def __init__(self, schedule: NoiseSchedule | None = None, codec=None):
        self.schedule = schedule if schedule is not None else NoiseSchedule.linear_beta()
        self.codec = codec if codec is not None else IdentityCodec()

    @property
    def channels(self) -> int:
        return self.codec.channels

    @property
    def downsample(self) -> int:
        return self.codec.factor

    def encode(self, frames: np.ndarray) -> np.ndarray:
        """Map ``(N, H, W, 3)`` pixels to ``(N, C, h, w)`` latents."""
        return self.codec.encode(frames)

    def decode(self, latents: np.ndarray) -> np.ndarray:
        """Map ``(N, C, h, w)`` latents back to ``(N, H, W, 3)`` pixels."""
        return self.codec.decode(latents)

    @abstractmethod
    def predict_noise(
        self,
        latents: np.ndarray,
        t: int,
        cond: Condition | None = None,
        hook: Hook | None = None,
    ) -> np.ndarray:
        """Predict the noise content of ``latents`` at schedule index ``t``."""
