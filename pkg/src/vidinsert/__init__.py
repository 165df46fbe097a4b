"""Training-free object insertion into short video clips.

Two stages over a pluggable diffusion backend: composite the object
along a trajectory and roughen the seam (in pixel or latent space),
then invert the whole clip and re-decode it conditioned on the first
composited frame, injecting early-step activations to keep the layout.
Ships with deterministic toy backends and embedders so the entire
pipeline is verifiable at desk scale.
"""

__version__ = "0.1.0"

from .compositor import Clip, Frame, ObjectAsset, extract_object, make_copy_sequence, paste
from .geometry import (
    BBox,
    BinaryMask,
    Delta,
    RegionPartition,
    TrajectorySequence,
    generate_trajectory,
    interaction_mask,
    merge_mask,
    partition,
    rasterize,
)
from .pixel_noise import NoiseConfig, inject
from .stage1 import run_latent_injection
from .stage2 import InjectionSchedule, align, invert_video, run_alignment

__all__ = [
    "__version__",
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
    "Frame",
    "Clip",
    "ObjectAsset",
    "extract_object",
    "paste",
    "make_copy_sequence",
    "NoiseConfig",
    "inject",
    "run_latent_injection",
    "InjectionSchedule",
    "invert_video",
    "align",
    "run_alignment",
]
