"""Deterministic toy backends for desk-scale verification.

None of these denoise anything real. They give the stepping machinery,
codecs, and injection sites exact, cheap behavior that tests can pin
down in closed form:

* zero / constant predictors make invert-then-sample an exact identity;
* the replay predictor returns one fixed noise field per latent shape,
  which makes inversion coincide with closed-form forward noising;
* the linear predictor is a fixed random channel-mixing map with
  operator norm below 1 and overridable sites, the only toy whose
  inversion is (slightly, and measurably) inexact.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .backend import (
    SPATIAL_ATTENTION,
    SPATIAL_FEATURE,
    TEMPORAL_ATTENTION,
    Condition,
    DiffusionBackend,
    Hook,
)

__all__ = [
    "ZeroPredictorBackend",
    "ConstantPredictorBackend",
    "LinearPredictorBackend",
    "ReplayNoiseBackend",
]


def _use(hook: Hook | None, site: str, value: np.ndarray) -> np.ndarray:
    return value if hook is None else hook(site, value)


class _ToyBackend(DiffusionBackend):
    def __init__(self, schedule=None, codec=None, video: bool = False):
        super().__init__(schedule, codec)
        self.video = bool(video)

    def _check(self, latents: np.ndarray) -> np.ndarray:
        z = np.asarray(latents, dtype=np.float64)
        if z.ndim != 4:
            raise ValueError(f"latents must have shape (N, C, h, w), got {z.shape}")
        return z


class ZeroPredictorBackend(_ToyBackend):
    """Predicts zero noise everywhere; stepping reduces to pure rescaling."""

    name = "toy-zero"

    def predict_noise(self, latents, t, cond=None, hook=None):
        return np.zeros_like(self._check(latents))


class ConstantPredictorBackend(_ToyBackend):
    """Predicts one constant value, independent of latent, index, and text."""

    name = "toy-const"

    def __init__(self, schedule=None, codec=None, video: bool = False, value: float = 0.25):
        super().__init__(schedule, codec, video)
        self.value = float(value)

    def predict_noise(self, latents, t, cond=None, hook=None):
        return np.full_like(self._check(latents), self.value)


class ReplayNoiseBackend(_ToyBackend):
    """Replays one fixed seeded noise field per latent shape.

    Because the prediction ignores the latent, inversion telescopes into
    the closed-form forward-noising map with that same field, making
    invert/sample round trips exact. Useful as the reference backend in
    reconstruction oracles.
    """

    name = "toy-replay"

    def __init__(self, schedule=None, codec=None, video: bool = False, seed: int = 0):
        super().__init__(schedule, codec, video)
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self._fields: dict[tuple[int, ...], np.ndarray] = {}

    def replay_field(self, shape: tuple[int, ...]) -> np.ndarray:
        key = tuple(int(s) for s in shape)
        field = self._fields.get(key)
        if field is None:
            rng = np.random.default_rng((self.seed, *key))
            field = rng.standard_normal(key)
            self._fields[key] = field
        return field

    def predict_noise(self, latents, t, cond=None, hook=None):
        return self.replay_field(self._check(latents).shape).copy()


class LinearPredictorBackend(_ToyBackend):
    """Fixed random channel-mixing predictor with overridable sites.

    The prediction sums three linear maps of the latent: a feature map,
    a mean-centered "attention" map, and (video only) a temporal
    neighbor-mixing map. Their operator norms are scaled to 0.45, 0.30,
    and 0.20, so the whole map is a contraction and strided inversion
    converges at first order. Conditioning enters as a small scalar bias
    after the sites, which keeps recorded activations condition free.
    """

    name = "toy-linear"

    def __init__(self, schedule=None, codec=None, video: bool = False, seed: int = 0):
        super().__init__(schedule, codec, video)
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        c = self.channels
        rng = np.random.default_rng((self.seed, c))
        self._w_feature = self._scaled(rng.standard_normal((c, c)), 0.45)
        self._w_attention = self._scaled(rng.standard_normal((c, c)), 0.30)
        self._w_temporal = self._scaled(rng.standard_normal((c, c)), 0.20)
        self.sites = (SPATIAL_FEATURE, SPATIAL_ATTENTION) + (
            (TEMPORAL_ATTENTION,) if self.video else ()
        )

    @staticmethod
    def _scaled(w: np.ndarray, target: float) -> np.ndarray:
        norm = np.linalg.norm(w, 2)
        if norm == 0.0:  # degenerate draw; keep the zero map
            return w
        return w * (target / norm)

    @staticmethod
    def _mix(w: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.einsum("cd,ndhw->nchw", w, z)

    def _cond_bias(self, cond: Condition | None) -> float:
        if cond is None:
            return 0.0
        bias = 0.0
        if cond.text:
            digest = hashlib.sha256(cond.text.encode("utf-8")).digest()
            token = int.from_bytes(digest[:8], "big")
            bias += 0.05 * float(np.random.default_rng(token).uniform(-1.0, 1.0))
        if cond.first_frame is not None:
            bias += 0.05 * (float(cond.first_frame.pixels.mean()) - 0.5)
        return bias

    def predict_noise(self, latents, t, cond=None, hook=None):
        z = self._check(latents)
        feature = _use(hook, SPATIAL_FEATURE, self._mix(self._w_feature, z))
        centered = z - z.mean(axis=(2, 3), keepdims=True)
        attention = _use(hook, SPATIAL_ATTENTION, self._mix(self._w_attention, centered))
        out = feature + attention
        if self.video:
            n = z.shape[0]
            if n == 1:
                neighbors = z
            else:
                prev = z[np.maximum(np.arange(n) - 1, 0)]
                nxt = z[np.minimum(np.arange(n) + 1, n - 1)]
                neighbors = 0.5 * (prev + nxt)
            temporal = _use(hook, TEMPORAL_ATTENTION, self._mix(self._w_temporal, neighbors))
            out = out + temporal
        bias = self._cond_bias(cond)
        if bias:
            out = out + bias
        return out
