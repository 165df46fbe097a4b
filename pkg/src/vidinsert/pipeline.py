"""End-to-end orchestration: case loading, stage wiring, manifests.

A *case* is a directory with the canonical layout::

    case/
      background/frame_0000.png ...   source clip
      object.png                      object image
      object_mask.png                 its segmentation mask (0/255)
      trajectory.json                 box schedule or explicit boxes
      prompts.json                    case_id / optimal / fake (+ stage prompts)

``run_case`` drives compose -> stage 1 -> stage 2 -> metrics, persists
every intermediate under the output directory, and writes a manifest
with enough hashes to check a re-run bit for bit. Stage boundaries are
plain directories of PNGs, so any stage can be re-run or swapped from
the command line.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .clip_io import load_clip, load_frame, load_mask, save_clip, save_frame, save_mask
from .compositor import Clip, Frame, ObjectAsset, make_copy_sequence
from .diffusion import Condition, create_backend
from .geometry import (
    BBox,
    BinaryMask,
    Delta,
    RegionPartition,
    TrajectorySequence,
    generate_trajectory,
    load_trajectory_spec,
    partition,
    save_trajectory_spec,
)
from .metrics import MetricReport, PromptLibrary, create_embedder, evaluate_case
from .pixel_noise import NoiseConfig, inject
from .stage1 import run_latent_injection
from .stage2 import InjectionSchedule, run_alignment

__all__ = [
    "ValidationError",
    "StageError",
    "OUTPUT_ROOT_ENV",
    "CasePaths",
    "RunConfig",
    "RunManifest",
    "load_case_prompts",
    "load_case",
    "run_case",
    "ablate",
    "make_dataset_case",
    "build_synthetic_case",
]

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "VIDINSERT_OUTPUT_ROOT"

MODE_ALIASES = {"pixel": "pixel", "pn": "pixel", "latent": "latent", "ln": "latent"}


class ValidationError(Exception):
    """Bad configuration or missing inputs, detected before any compute."""


class StageError(Exception):
    """A pipeline stage failed; partial outputs are left in place."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class CasePaths:
    """Resolved input file locations for one case."""

    background: Path
    object_image: Path
    object_mask: Path
    trajectory: Path
    prompts: Path

    @classmethod
    def from_case_dir(cls, case_dir: str | Path) -> "CasePaths":
        case = Path(case_dir)
        return cls(
            background=case / "background",
            object_image=case / "object.png",
            object_mask=case / "object_mask.png",
            trajectory=case / "trajectory.json",
            prompts=case / "prompts.json",
        )

    def missing(self) -> list[str]:
        out = []
        if not self.background.is_dir():
            out.append(str(self.background))
        for p in (self.object_image, self.object_mask, self.trajectory, self.prompts):
            if not p.is_file():
                out.append(str(p))
        return out


@dataclass(frozen=True)
class RunConfig:
    """Everything one end-to-end run depends on.

    Prompts left empty are filled from the case's prompts.json. Paths
    are taken as given (absolute or relative to the working directory).
    """

    case_dir: str
    output_dir: str = ""
    mode: str = "pixel"

    # pixel-mode stage 1
    sigma1: float = 0.4
    sigma2: float = 0.1
    noise_seed: int = 0

    # latent-mode stage 1
    stage1_prompt: str = ""
    stage1_steps: int = 50
    stage1_seed: int = 0
    invert_steps: int | None = None
    condition_inversion: bool = False

    # stage 2
    stage2_prompt: str = ""
    inject_feature: int = 5
    inject_spatial_attn: int = 5
    inject_temporal_attn: int = 5
    stage2_steps: int = 50

    # backend / embedder
    backend: str = "toy-linear"
    backend_seed: int = 0
    codec: str = "identity"
    downsample: int = 1
    embedder: str = "toy"
    embedder_seed: int = 0
    logit_scale: float = 100.0

    fps: float = 8.0

    def __post_init__(self) -> None:
        mode = MODE_ALIASES.get(self.mode)
        if mode is None:
            raise ValidationError(
                f"unknown mode {self.mode!r} (use pixel/pn or latent/ln)"
            )
        object.__setattr__(self, "mode", mode)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config key(s): {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ValidationError(str(exc)) from None

    @classmethod
    def from_json(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise ValidationError(f"config file {p} does not exist")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {p} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ValidationError(f"config file {p} must hold a JSON object")
        if overrides:
            data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def resolve_output_dir(self) -> Path:
        if self.output_dir:
            return Path(self.output_dir)
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        return root / f"run-{self.config_hash[:8]}"


@dataclass
class RunManifest:
    """What a run consumed and produced, enough to audit a re-run."""

    config: dict
    config_hash: str
    input_hashes: dict[str, str]
    seeds: dict[str, int]
    tool_version: str
    wall_clock_s: float
    outputs: dict[str, str]
    created: str

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path: str | Path) -> None:
        """Atomic write: temp file in the same directory, then rename."""
        target = Path(path)
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        os.replace(tmp, target)

    @classmethod
    def from_json(cls, path: str | Path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        return cls(**data)


# ---------------------------------------------------------------------------
# Case loading


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_inputs(paths: CasePaths) -> dict[str, str]:
    hashes = {}
    for frame_path in sorted(paths.background.glob("frame_*.png")):
        hashes[f"background/{frame_path.name}"] = _sha256_file(frame_path)
    for name, p in (
        ("object.png", paths.object_image),
        ("object_mask.png", paths.object_mask),
        ("trajectory.json", paths.trajectory),
        ("prompts.json", paths.prompts),
    ):
        hashes[name] = _sha256_file(p)
    return hashes


def load_case_prompts(path: str | Path) -> dict:
    """Read prompts.json: case_id / optimal / fake plus stage prompts.

    Stage prompts default to the optimal prompt when absent.
    """
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValidationError(f"prompts file {path} must hold a JSON object")
    for key in ("case_id", "optimal", "fake"):
        if key not in data or not str(data[key]).strip():
            raise ValidationError(f"prompts file {path} missing non-empty {key!r}")
    data.setdefault("stage1", data["optimal"])
    data.setdefault("stage2", data["optimal"])
    return data


def load_case(paths: CasePaths, fps: float = 8.0):
    """Load a case's assets: (background clip, asset, trajectory, prompts)."""
    background = load_clip(paths.background, fps=fps)
    asset = ObjectAsset(
        image=load_frame(paths.object_image), mask=load_mask(paths.object_mask)
    )
    traj = load_trajectory_spec(paths.trajectory)
    prompts = load_case_prompts(paths.prompts)
    return background, asset, traj, prompts


# ---------------------------------------------------------------------------
# The run itself


class _stage:
    """Context manager labelling failures with the stage that raised."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s: start", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None:
            raise StageError(self.name, exc) from exc
        log.info("stage %s: done", self.name)
        return False


def _save_partitions(parts: Sequence[RegionPartition], masks_dir: Path) -> None:
    masks_dir.mkdir(parents=True, exist_ok=True)
    for i, part in enumerate(parts):
        save_mask(part.object, masks_dir / f"merge_{i:04d}.png")
        save_mask(part.interaction, masks_dir / f"interaction_{i:04d}.png")
        save_mask(part.background.complement(), masks_dir / f"trajectory_{i:04d}.png")


def load_partitions(masks_dir: str | Path) -> list[RegionPartition]:
    """Rebuild region partitions from a persisted masks directory."""
    masks_dir = Path(masks_dir)
    merged = sorted(masks_dir.glob("merge_*.png"))
    boxes = sorted(masks_dir.glob("trajectory_*.png"))
    if not merged or len(merged) != len(boxes):
        raise ValidationError(f"masks directory {masks_dir} is incomplete")
    return [
        partition(load_mask(m), load_mask(b)) for m, b in zip(merged, boxes)
    ]


def run_case(cfg: RunConfig) -> RunManifest:
    """Drive the full pipeline for one case and write its manifest.

    Raises ValidationError before any compute when inputs are missing,
    and StageError (with partial outputs retained) when a stage fails.
    """
    paths = CasePaths.from_case_dir(cfg.case_dir)
    missing = paths.missing()
    if missing:
        raise ValidationError(f"missing case inputs: {missing}")

    out = cfg.resolve_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()

    background, asset, traj, prompts = load_case(paths, fps=cfg.fps)
    stage1_prompt = cfg.stage1_prompt or prompts["stage1"]
    stage2_prompt = cfg.stage2_prompt or prompts["stage2"]
    library = PromptLibrary.from_json(
        [{"case_id": prompts["case_id"], "optimal": prompts["optimal"], "fake": prompts["fake"]}]
    )

    with _stage("compose"):
        copy_clip, parts = make_copy_sequence(asset, background, traj)
        save_clip(copy_clip, out / "copy")
        _save_partitions(parts, out / "masks")

    with _stage("stage1"):
        if cfg.mode == "pixel":
            coarse = inject(
                copy_clip, parts, NoiseConfig(cfg.sigma1, cfg.sigma2, cfg.noise_seed)
            )
        else:
            image_backend = create_backend(
                cfg.backend,
                codec=cfg.codec,
                downsample=cfg.downsample,
                seed=cfg.backend_seed,
                video=False,
            )
            coarse = run_latent_injection(
                copy_clip,
                parts,
                Condition(text=stage1_prompt),
                image_backend,
                cfg.stage1_steps,
                cfg.stage1_seed,
                invert_steps=cfg.invert_steps,
                condition_inversion=cfg.condition_inversion,
            )
        save_clip(coarse, out / "coarse")

    with _stage("stage2"):
        video_backend = create_backend(
            cfg.backend,
            codec=cfg.codec,
            downsample=cfg.downsample,
            seed=cfg.backend_seed,
            video=True,
        )
        schedule = InjectionSchedule(
            feature_steps=cfg.inject_feature,
            spatial_attn_steps=cfg.inject_spatial_attn,
            temporal_attn_steps=cfg.inject_temporal_attn,
            total_steps=cfg.stage2_steps,
        )
        aligned, _ = run_alignment(
            copy_clip,
            coarse,
            Condition(text=stage2_prompt),
            video_backend,
            schedule,
            cfg.stage2_steps,
        )
        save_clip(aligned, out / "aligned")

    with _stage("metrics"):
        embedder = create_embedder(cfg.embedder, seed=cfg.embedder_seed)
        report = evaluate_case(
            aligned,
            copy_clip,
            prompts["optimal"],
            traj,
            asset.image,
            prompts["case_id"],
            library,
            embedder,
            cfg.logit_scale,
        )
        report.write(out / "report.json")

    manifest = RunManifest(
        config=cfg.to_dict(),
        config_hash=cfg.config_hash,
        input_hashes=_hash_inputs(paths),
        seeds={
            "noise_seed": cfg.noise_seed,
            "stage1_seed": cfg.stage1_seed,
            "backend_seed": cfg.backend_seed,
            "embedder_seed": cfg.embedder_seed,
        },
        tool_version=__version__,
        wall_clock_s=round(time.perf_counter() - started, 3),
        outputs={
            "copy": str(out / "copy"),
            "coarse": str(out / "coarse"),
            "aligned": str(out / "aligned"),
            "masks": str(out / "masks"),
            "report": str(out / "report.json"),
        },
        created=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    )
    manifest.write(out / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# Ablation sweeps

SWEEPABLE = (
    "sigma1",
    "sigma2",
    "inject_feature",
    "inject_spatial_attn",
    "inject_temporal_attn",
    "invert_steps",
)


def ablate(cfg: RunConfig, sweep: dict[str, list]) -> list[RunManifest]:
    """Run the pipeline over a cartesian parameter grid.

    ``sweep`` maps config field names (a whitelist of stage knobs) to
    value lists. Each combination runs into its own subdirectory of the
    base output dir; a summary JSON collects parameters and headline
    scores.
    """
    if not sweep:
        raise ValidationError("sweep grid is empty (no parameters)")
    for key, values in sweep.items():
        if key not in SWEEPABLE:
            raise ValidationError(
                f"cannot sweep {key!r} (sweepable: {list(SWEEPABLE)})"
            )
        if not isinstance(values, (list, tuple)) or len(values) == 0:
            raise ValidationError(f"sweep values for {key!r} must be a non-empty list")

    base = cfg.resolve_output_dir()
    base.mkdir(parents=True, exist_ok=True)
    keys = sorted(sweep)
    manifests = []
    rows = []
    for idx, combo in enumerate(itertools.product(*(sweep[k] for k in keys))):
        params = dict(zip(keys, combo))
        run_cfg = replace(cfg, output_dir=str(base / f"sweep_{idx:03d}"), **params)
        manifest = run_case(run_cfg)
        manifests.append(manifest)
        report = MetricReport.from_json(Path(manifest.outputs["report"]))
        rows.append({"params": params, "scores": report.average})

    summary_path = base / "sweep_summary.json"
    summary_path.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return manifests


def format_sweep_table(rows: list[dict]) -> str:
    """Plain-text table of sweep parameters and scores."""
    lines = []
    for row in rows:
        params = " ".join(f"{k}={v}" for k, v in sorted(row["params"].items()))
        scores = " ".join(f"{k}={v:.4f}" for k, v in sorted(row["scores"].items()))
        lines.append(f"{params} | {scores}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Case construction


def make_dataset_case(
    background: str | Path,
    object_image: str | Path,
    object_mask: str | Path,
    trajectory: str | Path,
    prompts: str | Path,
    out_dir: str | Path,
) -> Path:
    """Assemble the canonical case layout from loose input files.

    Everything is re-encoded through the package's own readers/writers,
    which both validates the inputs and normalizes naming.
    """
    out = Path(out_dir)
    for p in (object_image, object_mask, trajectory, prompts):
        if not Path(p).is_file():
            raise ValidationError(f"input file {p} does not exist")
    if not Path(background).is_dir():
        raise ValidationError(f"background directory {background} does not exist")

    clip = load_clip(background)
    traj = load_trajectory_spec(trajectory)
    prompt_data = load_case_prompts(prompts)
    asset = ObjectAsset(image=load_frame(object_image), mask=load_mask(object_mask))

    out.mkdir(parents=True, exist_ok=True)
    save_clip(clip, out / "background")
    save_frame(asset.image, out / "object.png")
    save_mask(asset.mask, out / "object_mask.png")
    save_trajectory_spec(traj, out / "trajectory.json")
    (out / "prompts.json").write_text(json.dumps(prompt_data, indent=2, sort_keys=True) + "\n")
    return out


def build_synthetic_case(
    out_dir: str | Path, frames: int = 16, size: int = 64, seed: int = 0
) -> Path:
    """Write the bundled synthetic case: a drifting gradient background
    and a diamond-shaped object sliding across it.

    Deterministic in (frames, size, seed); the default matches the
    evaluation protocol's clip length at desk scale.
    """
    if frames < 2:
        raise ValidationError(f"need at least 2 frames, got {frames}")
    if size < 16 or size % 8:
        raise ValidationError(f"size must be a multiple of 8 and >= 16, got {size}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=3)

    shape = (size, size)
    xs = np.arange(size) / size
    ys = (np.arange(size) / size)[:, None]
    frame_list = []
    for i in range(frames):
        drift = i / frames
        r = np.broadcast_to(0.45 + 0.25 * np.sin(2 * np.pi * (xs + drift) + phase[0]), shape)
        g = np.broadcast_to(0.45 + 0.25 * np.sin(2 * np.pi * (ys - 0.7 * drift) + phase[1]), shape)
        b = 0.45 + 0.2 * np.sin(2 * np.pi * (xs + ys + 0.5 * drift) + phase[2])
        frame_list.append(Frame(np.stack([r, g, b], axis=-1)))
    background = Clip(tuple(frame_list), fps=8.0)
    save_clip(background, out / "background")

    # Diamond object: |dx| + |dy| <= radius, radial color falloff inside.
    obj_size = max(size // 4, 8)
    half = obj_size / 2.0
    yy, xx = np.mgrid[0:obj_size, 0:obj_size]
    manhattan = np.abs(xx + 0.5 - half) + np.abs(yy + 0.5 - half)
    support = (manhattan <= half).astype(np.uint8)
    falloff = np.clip(1.0 - manhattan / half, 0.0, 1.0)
    obj_pixels = np.stack(
        [0.9 * falloff + 0.1, 0.7 * falloff + 0.05, 0.2 * np.ones_like(falloff)],
        axis=-1,
    )
    save_frame(Frame(obj_pixels), out / "object.png")
    save_mask(BinaryMask(support), out / "object_mask.png")

    margin = 2
    y0 = (size - obj_size) // 2
    travel = size - obj_size - 2 * margin
    dx = max(travel // (frames - 1), 1)
    init = BBox(margin, y0, obj_size, obj_size)
    traj = generate_trajectory(init, Delta(dx=dx), frames, size, size)
    save_trajectory_spec(traj, out / "trajectory.json")

    prompts = {
        "case_id": f"synthetic-diamond-{size}",
        "optimal": "a glowing diamond drifts to the right across a striped sky",
        "fake": "a glowing diamond drifts to the left across a striped sky",
    }
    prompts["stage1"] = prompts["optimal"]
    prompts["stage2"] = prompts["optimal"]
    (out / "prompts.json").write_text(json.dumps(prompts, indent=2, sort_keys=True) + "\n")
    return out
