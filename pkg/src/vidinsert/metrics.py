"""Evaluation: frame/text/video similarity scores and their report.

Four scores, all embedding-based and backend-pluggable:

* ``clip_i``: mean frame-to-frame cosine against the composited
  reference, scaled by 100;
* ``clip_t``: mean frame-to-prompt cosine, scaled by 100;
* ``dino_bbox``: mean cosine between the object image and the predicted
  frames cropped to the trajectory boxes (crops resized back to the
  object's own size before embedding);
* ``adv_viclip``: softmax probability of the case's true prompt against
  the whole prompt library (true and adversarial prompts together).

The bundled toy embedders are deterministic and unit-norm so the scores
have exact invariances the tests can pin down.
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import plugins
from .compositor import Clip, Frame
from .geometry import TrajectorySequence
from .resample import resize_bilinear

__all__ = [
    "Embedder",
    "ProjectionEmbedder",
    "DownsampleEmbedder",
    "create_embedder",
    "available_embedders",
    "PromptEntry",
    "PromptLibrary",
    "clip_i",
    "clip_t",
    "dino_bbox",
    "adv_viclip",
    "prompt_probabilities",
    "MetricReport",
    "evaluate_case",
]

REPORT_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Embedders


class Embedder(ABC):
    """Maps frames, text, and clips to unit-norm vectors of one dimension."""

    dim: int

    @abstractmethod
    def image_embed(self, frame: Frame) -> np.ndarray: ...

    @abstractmethod
    def text_embed(self, text: str) -> np.ndarray: ...

    def video_embed(self, clip: Clip) -> np.ndarray:
        """Default pooling: normalized mean of the frame embeddings."""
        mean = np.mean([self.image_embed(f) for f in clip], axis=0)
        return _unit(mean)


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def _pooled_features(frame: Frame) -> np.ndarray:
    """8x8x3 downsample plus a constant component, flattened to 193 floats.

    The constant keeps the feature vector away from zero for flat or
    black frames, so normalization is always defined.
    """
    small = resize_bilinear(frame.pixels, 8, 8)
    return np.concatenate([small.ravel(), [1.0]])


def _token_vector(dim: int, seed: int, token: str) -> np.ndarray:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    stream = int.from_bytes(digest[:8], "big")
    return np.random.default_rng((seed, stream)).standard_normal(dim)


def _bag_of_tokens(dim: int, seed: int, text: str) -> np.ndarray:
    tokens = text.lower().split()
    if not tokens:
        tokens = ["<empty>"]
    total = np.zeros(dim)
    for token in tokens:
        total += _token_vector(dim, seed, token)
    return _unit(total)


class ProjectionEmbedder(Embedder):
    """Fixed seeded random projection of pooled frame features.

    Text uses a hashed bag-of-tokens into the same space; video pools
    frame embeddings. Everything is deterministic in (dim, seed).
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 2:
            raise ValueError(f"dim must be at least 2, got {dim}")
        self.dim = int(dim)
        self.seed = int(seed)
        rng = np.random.default_rng((seed, dim, 193))
        self._projection = rng.standard_normal((dim, 193)) / np.sqrt(193)

    def image_embed(self, frame: Frame) -> np.ndarray:
        return _unit(self._projection @ _pooled_features(frame))

    def text_embed(self, text: str) -> np.ndarray:
        return _bag_of_tokens(self.dim, self.seed, text)


class DownsampleEmbedder(Embedder):
    """Identity-style embedder: the pooled features themselves, normalized.

    Equal images embed equal, and small pixel differences move the
    embedding, which makes crop-alignment checks exact.
    """

    dim = 193

    def __init__(self, seed: int = 0):
        self.seed = int(seed)

    def image_embed(self, frame: Frame) -> np.ndarray:
        return _unit(_pooled_features(frame))

    def text_embed(self, text: str) -> np.ndarray:
        return _bag_of_tokens(self.dim, self.seed, text)


def available_embedders() -> tuple[str, ...]:
    return ("toy", "toy-identity", "external:<adapter-id>")


def create_embedder(name: str, *, dim: int = 64, seed: int = 0) -> Embedder:
    """Instantiate an embedder by registry name."""
    if name == "toy":
        return ProjectionEmbedder(dim=dim, seed=seed)
    if name == "toy-identity":
        return DownsampleEmbedder(seed=seed)
    if name.startswith("external:"):
        adapter_id = name.split(":", 1)[1]
        if not adapter_id:
            raise ValueError("external embedder name must be 'external:<adapter-id>'")
        factory = plugins.resolve("embedders", adapter_id)
        embedder = factory(dim=dim, seed=seed)
        if not isinstance(embedder, Embedder):
            raise ValueError(
                f"adapter {adapter_id!r} returned {type(embedder).__name__}, not an Embedder"
            )
        return embedder
    raise ValueError(f"unknown embedder {name!r} (available: {available_embedders()})")


# ---------------------------------------------------------------------------
# Prompt library


@dataclass(frozen=True)
class PromptEntry:
    """One case's true prompt and its adversarial counterpart."""

    case_id: str
    optimal: str
    fake: str

    def __post_init__(self) -> None:
        for name in ("case_id", "optimal", "fake"):
            v = getattr(self, name)
            if not isinstance(v, str) or not v.strip():
                raise ValueError(f"{name} must be a non-empty string, got {v!r}")


@dataclass(frozen=True)
class PromptLibrary:
    """All cases' prompt pairs; the adversarial pool for scoring."""

    entries: tuple[PromptEntry, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        if len(self.entries) == 0:
            raise ValueError("prompt library must contain at least one entry")
        ids = [e.case_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("prompt library case ids must be unique")

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, case_id: str) -> PromptEntry:
        for entry in self.entries:
            if entry.case_id == case_id:
                return entry
        raise KeyError(f"no case {case_id!r} in prompt library")

    def all_prompts(self) -> list[tuple[str, str, str]]:
        """Every prompt as (case_id, kind, text), optimal first then fake."""
        out = [(e.case_id, "optimal", e.optimal) for e in self.entries]
        out += [(e.case_id, "fake", e.fake) for e in self.entries]
        return out

    @classmethod
    def from_json(cls, source: str | Path | list) -> "PromptLibrary":
        if isinstance(source, (str, Path)):
            data = json.loads(Path(source).read_text())
        else:
            data = source
        if isinstance(data, dict):
            data = [data]
        if not isinstance(data, list):
            raise ValueError("prompt library JSON must be a list of entries")
        entries = tuple(
            PromptEntry(str(d["case_id"]), str(d["optimal"]), str(d["fake"]))
            for d in data
        )
        return cls(entries)


# ---------------------------------------------------------------------------
# Scores


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    # full quotient instead of a bare dot of unit vectors: sqrt(x*x) == x
    # in round-to-nearest, so cosine(v, v) is exactly 1.0
    denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
    return float(np.clip(np.dot(a, b) / denom, -1.0, 1.0))


def clip_i(pred: Clip, reference: Clip, embedder: Embedder) -> float:
    """Mean per-frame cosine against the reference clip, scaled by 100."""
    if len(pred) != len(reference):
        raise ValueError(
            f"pred has {len(pred)} frames, reference has {len(reference)}"
        )
    sims = [
        _cosine(embedder.image_embed(p), embedder.image_embed(r))
        for p, r in zip(pred, reference)
    ]
    return 100.0 * float(np.mean(sims))


def clip_t(pred: Clip, prompt: str, embedder: Embedder) -> float:
    """Mean per-frame cosine against the prompt embedding, scaled by 100."""
    if not prompt.strip():
        raise ValueError("prompt must be non-empty")
    text = embedder.text_embed(prompt)
    sims = [_cosine(embedder.image_embed(f), text) for f in pred]
    return 100.0 * float(np.mean(sims))


def dino_bbox(
    pred: Clip,
    traj: TrajectorySequence,
    object_image: Frame,
    embedder: Embedder,
) -> float:
    """Mean cosine between the object image and per-frame box crops.

    Each predicted frame is cropped to its trajectory box and resized
    back to the object image's own size before embedding, so the score
    is insensitive to the box scale and sensitive to crop alignment.
    """
    if len(pred) != len(traj):
        raise ValueError(f"pred has {len(pred)} frames, trajectory has {len(traj)}")
    if traj.frame_width != pred.width or traj.frame_height != pred.height:
        raise ValueError(
            f"trajectory frame size {traj.frame_width}x{traj.frame_height} does "
            f"not match clip {pred.width}x{pred.height}"
        )
    reference = embedder.image_embed(object_image)
    sims = []
    for frame, box in zip(pred, traj):
        crop = frame.pixels[box.slices()]
        restored = resize_bilinear(crop, object_image.height, object_image.width)
        sims.append(_cosine(embedder.image_embed(Frame(restored)), reference))
    return float(np.mean(sims))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    weights = np.exp(shifted)
    return weights / weights.sum()


def prompt_probabilities(
    pred: Clip,
    library: PromptLibrary,
    embedder: Embedder,
    logit_scale: float = 100.0,
) -> dict[tuple[str, str], float]:
    """Softmax distribution of the clip over every prompt in the library.

    Keys are (case_id, kind) with kind in {"optimal", "fake"}. The
    probabilities sum to one by construction.
    """
    if not (logit_scale > 0):
        raise ValueError(f"logit_scale must be positive, got {logit_scale}")
    video = embedder.video_embed(pred)
    prompts = library.all_prompts()
    logits = np.array(
        [logit_scale * _cosine(video, embedder.text_embed(text)) for _, _, text in prompts]
    )
    probs = _softmax(logits)
    return {(case_id, kind): float(p) for (case_id, kind, _), p in zip(prompts, probs)}


def adv_viclip(
    pred: Clip,
    case_id: str,
    library: PromptLibrary,
    embedder: Embedder,
    logit_scale: float = 100.0,
) -> float:
    """Probability assigned to the case's true prompt against the library."""
    library.get(case_id)  # raises KeyError for unknown cases
    distribution = prompt_probabilities(pred, library, embedder, logit_scale)
    return distribution[(case_id, "optimal")]


# ---------------------------------------------------------------------------
# Reports


@dataclass
class MetricReport:
    """Per-case scores plus their average and the scoring configuration."""

    cases: dict[str, dict[str, float]]
    config: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    @property
    def average(self) -> dict[str, float]:
        if not self.cases:
            return {}
        keys = next(iter(self.cases.values())).keys()
        return {
            k: float(np.mean([scores[k] for scores in self.cases.values()]))
            for k in keys
        }

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "cases": self.cases,
            "average": self.average,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "MetricReport":
        data = json.loads(Path(path).read_text())
        return cls(
            cases=data["cases"],
            config=data.get("config", {}),
            schema_version=data.get("schema_version", REPORT_SCHEMA_VERSION),
        )


def evaluate_case(
    pred: Clip,
    reference: Clip,
    prompt: str,
    traj: TrajectorySequence,
    object_image: Frame,
    case_id: str,
    library: PromptLibrary,
    embedder: Embedder,
    logit_scale: float = 100.0,
) -> MetricReport:
    """Score one predicted clip with all four metrics."""
    scores = {
        "clip_i": clip_i(pred, reference, embedder),
        "clip_t": clip_t(pred, prompt, embedder),
        "dino_bbox": dino_bbox(pred, traj, object_image, embedder),
        "adv_viclip": adv_viclip(pred, case_id, library, embedder, logit_scale),
    }
    config = {
        "embedder": type(embedder).__name__,
        "embedder_dim": embedder.dim,
        "logit_scale": logit_scale,
        "library_size": len(library),
    }
    return MetricReport(cases={case_id: scores}, config=config)
