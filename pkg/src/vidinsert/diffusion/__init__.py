"""Diffusion core: schedules, the backend contract, deterministic
stepping, toy backends, and backend lookup."""

from .backend import (
    SPATIAL_ATTENTION,
    SPATIAL_FEATURE,
    TEMPORAL_ATTENTION,
    BlockCodec,
    Condition,
    DiffusionBackend,
    IdentityCodec,
    LatentClip,
    make_codec,
)
from .ddim import (
    NoopInjector,
    ddim_invert_step,
    ddim_step,
    forward_noise,
    invert_sequence,
    sample_sequence,
)
from .registry import available_backends, create_backend
from .schedule import NoiseSchedule
from .toys import (
    ConstantPredictorBackend,
    LinearPredictorBackend,
    ReplayNoiseBackend,
    ZeroPredictorBackend,
)

__all__ = [
    "SPATIAL_FEATURE",
    "SPATIAL_ATTENTION",
    "TEMPORAL_ATTENTION",
    "Condition",
    "DiffusionBackend",
    "LatentClip",
    "IdentityCodec",
    "BlockCodec",
    "make_codec",
    "NoiseSchedule",
    "forward_noise",
    "ddim_step",
    "ddim_invert_step",
    "invert_sequence",
    "sample_sequence",
    "NoopInjector",
    "ZeroPredictorBackend",
    "ConstantPredictorBackend",
    "LinearPredictorBackend",
    "ReplayNoiseBackend",
    "create_backend",
    "available_backends",
]
