"""Second stage: whole-clip inversion, then conditioned re-decoding with
early-step activation injection.

Recording convention: after inverting the coarse clip, the first
``max(schedule)`` denoising steps are replayed from the inverted latent
and the site activations captured along that replay, keyed by the
sampling step they will later override. For backends whose inversion is
exact this coincides with recording along the inversion states; in
general it is the variant that makes self-injection exactly neutral.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .compositor import Clip, Frame
from .diffusion import (
    SPATIAL_ATTENTION,
    SPATIAL_FEATURE,
    TEMPORAL_ATTENTION,
    Condition,
    DiffusionBackend,
    LatentClip,
    invert_sequence,
    sample_sequence,
)

__all__ = [
    "InjectionSchedule",
    "RecordedFeatures",
    "FeatureInjector",
    "invert_video",
    "align",
    "run_alignment",
]


@dataclass(frozen=True)
class InjectionSchedule:
    """How many leading denoising steps each site is overridden for."""

    feature_steps: int = 5
    spatial_attn_steps: int = 5
    temporal_attn_steps: int = 5
    total_steps: int = 50

    def __post_init__(self) -> None:
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be at least 1, got {self.total_steps}")
        for name in ("feature_steps", "spatial_attn_steps", "temporal_attn_steps"):
            v = getattr(self, name)
            if not (0 <= v <= self.total_steps):
                raise ValueError(
                    f"{name}={v} must lie in [0, total_steps={self.total_steps}]"
                )

    def site_steps(self) -> dict[str, int]:
        return {
            SPATIAL_FEATURE: self.feature_steps,
            SPATIAL_ATTENTION: self.spatial_attn_steps,
            TEMPORAL_ATTENTION: self.temporal_attn_steps,
        }

    @property
    def max_steps(self) -> int:
        return max(self.feature_steps, self.spatial_attn_steps, self.temporal_attn_steps)

    def active_sites(self) -> tuple[str, ...]:
        return tuple(site for site, count in self.site_steps().items() if count > 0)


@dataclass
class RecordedFeatures:
    """Site activations captured per sampling step (1-based, noisiest first)."""

    values: dict[str, dict[int, np.ndarray]] = field(default_factory=dict)

    def add(self, site: str, step: int, value: np.ndarray) -> None:
        self.values.setdefault(site, {})[step] = np.array(value, copy=True)

    def get(self, site: str, step: int) -> Optional[np.ndarray]:
        return self.values.get(site, {}).get(step)

    @property
    def sites(self) -> tuple[str, ...]:
        return tuple(self.values)

    @property
    def is_empty(self) -> bool:
        return not any(self.values.values())

    def steps_for(self, site: str) -> tuple[int, ...]:
        return tuple(sorted(self.values.get(site, {})))


class FeatureInjector:
    """Overrides scheduled sites with recorded activations.

    Replacement is total by default; ``blend < 1`` mixes the recorded
    value with the natural one.
    """

    def __init__(
        self,
        recorded: RecordedFeatures,
        schedule: InjectionSchedule,
        blend: float = 1.0,
    ):
        if not (0.0 <= blend <= 1.0):
            raise ValueError(f"blend must lie in [0, 1], got {blend}")
        self.recorded = recorded
        self.schedule = schedule
        self.blend = float(blend)
        self._counts = schedule.site_steps()
        self.sites = frozenset(schedule.active_sites())

    def override(self, site: str, step: int, value: np.ndarray) -> Optional[np.ndarray]:
        if step > self._counts.get(site, 0):
            return None
        recorded = self.recorded.get(site, step)
        if recorded is None:
            raise ValueError(
                f"schedule overrides site {site!r} at step {step} but no "
                "activation was recorded for it"
            )
        if recorded.shape != value.shape:
            raise ValueError(
                f"recorded activation for {site!r} step {step} has shape "
                f"{recorded.shape}, expected {value.shape}"
            )
        if self.blend == 1.0:
            return recorded
        return self.blend * recorded + (1.0 - self.blend) * value


def _require_video(backend: DiffusionBackend, what: str) -> None:
    if not backend.video:
        raise ValueError(f"{what} requires a video backend (whole-clip predictor)")


def _check_sites(schedule: InjectionSchedule, backend: DiffusionBackend) -> None:
    missing = set(schedule.active_sites()) - set(backend.sites)
    if missing:
        raise ValueError(
            f"backend {backend.name!r} does not expose scheduled site(s) "
            f"{sorted(missing)} (has {list(backend.sites)})"
        )


def invert_video(
    coarse: Clip,
    backend: DiffusionBackend,
    steps: int,
    schedule: InjectionSchedule | None = None,
    cond: Condition | None = None,
) -> tuple[LatentClip, RecordedFeatures]:
    """Invert a clip into the video backend's latent space, capturing the
    scheduled site activations for later injection.

    ``cond`` is the condition the recording replay runs under; the
    inversion itself is unconditional. With no schedule (or an all-zero
    one) the recording pass is skipped entirely.
    """
    _require_video(backend, "whole-clip inversion")
    f = backend.downsample
    if coarse.height % f or coarse.width % f:
        raise ValueError(
            f"frame size {coarse.height}x{coarse.width} not divisible by "
            f"backend downsample factor {f}"
        )

    z0 = LatentClip(backend.encode(coarse.as_array()))
    inverted = invert_sequence(z0, None, backend, steps)

    recorded = RecordedFeatures()
    k = 0 if schedule is None else min(schedule.max_steps, steps)
    if k > 0:
        _check_sites(schedule, backend)
        counts = schedule.site_steps()
        grid = backend.schedule.uniform_grid(steps)
        top_grid = grid[steps - k :]

        def observe(step: int, site: str, value: np.ndarray) -> None:
            if step <= counts.get(site, 0):
                recorded.add(site, step, value)

        sample_sequence(inverted, cond, backend, k, grid=top_grid, on_site=observe)
    return inverted, recorded


def align(
    zeta: LatentClip,
    first_frame: Frame,
    cond_align: Condition,
    recorded: RecordedFeatures,
    schedule: InjectionSchedule,
    backend: DiffusionBackend,
    fps: float = 8.0,
    blend: float = 1.0,
) -> Clip:
    """Decode inverted latents conditioned on the first composited frame
    and the alignment prompt, overriding early-step activations.

    The recorded features must cover every (site, step) the schedule
    claims; anything else is a configuration error, reported before any
    stepping happens.
    """
    _require_video(backend, "alignment decoding")
    _check_sites(schedule, backend)
    for site, count in schedule.site_steps().items():
        for step in range(1, count + 1):
            if recorded.get(site, step) is None:
                raise ValueError(
                    f"recorded features missing site {site!r} step {step} "
                    f"required by the injection schedule"
                )

    cond = replace(cond_align, first_frame=first_frame)
    injector = FeatureInjector(recorded, schedule, blend=blend)
    sampled = sample_sequence(
        zeta, cond, backend, schedule.total_steps, injector=injector
    )
    return Clip.from_array(backend.decode(sampled.latents), fps=fps)


def run_alignment(
    copy_clip: Clip,
    coarse_clip: Clip,
    cond_align: Condition,
    backend: DiffusionBackend,
    schedule: InjectionSchedule,
    steps: int,
    record_conditioned: bool = False,
) -> tuple[Clip, dict]:
    """Full second stage: invert the coarse clip, then align it.

    ``steps`` must equal the schedule's ``total_steps`` so the inversion
    and sampling grids mirror each other. By default the recording
    replay is unconditional, so the captured activations carry the
    coarse clip's own structure; ``record_conditioned`` records under
    the alignment condition instead (making injection exactly neutral on
    deterministic backends).

    Returns the aligned clip and a small manifest of what ran.
    """
    if len(copy_clip) != len(coarse_clip):
        raise ValueError(
            f"copy clip has {len(copy_clip)} frames, coarse clip {len(coarse_clip)}"
        )
    if steps != schedule.total_steps:
        raise ValueError(
            f"steps={steps} must equal schedule.total_steps={schedule.total_steps}"
        )

    record_cond = (
        replace(cond_align, first_frame=copy_clip[0]) if record_conditioned else None
    )
    zeta, recorded = invert_video(coarse_clip, backend, steps, schedule, cond=record_cond)
    aligned = align(
        zeta, copy_clip[0], cond_align, recorded, schedule, backend, fps=copy_clip.fps
    )
    manifest = {
        "stage": "alignment",
        "backend": backend.name,
        "steps": steps,
        "injection": schedule.site_steps(),
        "frames": len(aligned),
        "recorded_sites": sorted(recorded.sites),
    }
    return aligned, manifest
