"""Forward noising and deterministic denoise / invert stepping.

The transfer rule between two schedule indices is the standard
epsilon-parameterized deterministic update: scale the latent by the
signal-ratio square root, and re-noise with the predicted epsilon at the
target index's strength,

    z_to = sqrt(ab_to / ab_from) * z_from
           + (sqrt(1 - ab_to) - sqrt(ab_to / ab_from) * sqrt(1 - ab_from)) * eps_hat.

For predictors independent of the latent the two directions compose to
the identity exactly, which the oracle tests pin down.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Optional, Protocol

import numpy as np

from .backend import Condition, DiffusionBackend, Hook, LatentClip

__all__ = [
    "forward_noise",
    "ddim_step",
    "ddim_invert_step",
    "invert_sequence",
    "sample_sequence",
    "Injector",
    "NoopInjector",
]

# Observer of the activations actually used at a site during sampling:
# (step_index, site, value) -> None. Step indices count executed steps
# starting at 1 (noisiest first).
SiteObserver = Callable[[int, str, np.ndarray], None]
# Observer of the latent array produced by each executed step:
# (step_index, t_reached, latents) -> None.
StepObserver = Callable[[int, int, np.ndarray], None]


class Injector(Protocol):
    """Replaces named site activations for sampling steps it claims."""

    sites: frozenset[str]

    def override(
        self, site: str, step: int, value: np.ndarray
    ) -> Optional[np.ndarray]:
        """Return a replacement for ``value`` or None to keep it."""


class NoopInjector:
    """Claims no sites; sampling with it must match sampling without."""

    sites: frozenset[str] = frozenset()

    def override(self, site: str, step: int, value: np.ndarray) -> Optional[np.ndarray]:
        return None


def forward_noise(z0: np.ndarray, t: int, eps: np.ndarray, schedule) -> np.ndarray:
    """Noise clean latents to index ``t``: sqrt(ab)*z0 + sqrt(1-ab)*eps."""
    if not (0 <= t <= schedule.T):
        raise ValueError(f"t={t} outside schedule range [0, {schedule.T}]")
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ValueError(f"shape mismatch: z0 {z0.shape} vs eps {eps.shape}")
    ab = schedule.alpha_bar[t]
    return math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * eps


def _transfer(
    z: np.ndarray,
    t_from: int,
    t_to: int,
    cond: Condition | None,
    backend: DiffusionBackend,
    hook: Hook | None,
) -> np.ndarray:
    ab_from = backend.schedule.alpha_bar[t_from]
    ab_to = backend.schedule.alpha_bar[t_to]
    eps_hat = backend.predict_noise(z, t_from, cond, hook)
    scale = math.sqrt(ab_to / ab_from)
    coeff = math.sqrt(1.0 - ab_to) - scale * math.sqrt(1.0 - ab_from)
    return scale * z + coeff * eps_hat


def ddim_step(
    z_t: np.ndarray,
    t: int,
    cond: Condition | None,
    backend: DiffusionBackend,
    t_prev: int | None = None,
    hook: Hook | None = None,
) -> np.ndarray:
    """One deterministic denoising step from ``t`` down to ``t_prev``.

    ``t_prev`` defaults to ``t - 1``; strided sampling passes an
    explicit earlier index. ``t`` must be positive.
    """
    T = backend.schedule.T
    if not (1 <= t <= T):
        raise ValueError(f"t={t} outside valid denoise range [1, {T}]")
    if t_prev is None:
        t_prev = t - 1
    if not (0 <= t_prev < t):
        raise ValueError(f"t_prev={t_prev} must satisfy 0 <= t_prev < t={t}")
    return _transfer(np.asarray(z_t, dtype=np.float64), t, t_prev, cond, backend, hook)


def ddim_invert_step(
    z_t: np.ndarray,
    t: int,
    cond: Condition | None,
    backend: DiffusionBackend,
    t_next: int | None = None,
    hook: Hook | None = None,
) -> np.ndarray:
    """One deterministic inversion step from ``t`` up to ``t_next``.

    The prediction is evaluated at the current state ``(z_t, t)``;
    ``t_next`` defaults to ``t + 1``. ``t`` must be below the terminal
    index.
    """
    T = backend.schedule.T
    if not (0 <= t <= T - 1):
        raise ValueError(f"t={t} outside valid invert range [0, {T - 1}]")
    if t_next is None:
        t_next = t + 1
    if not (t < t_next <= T):
        raise ValueError(f"t_next={t_next} must satisfy t={t} < t_next <= {T}")
    return _transfer(np.asarray(z_t, dtype=np.float64), t, t_next, cond, backend, hook)


def _resolve_grid(
    backend: DiffusionBackend, steps: int, grid: Iterable[int] | None
) -> np.ndarray:
    if grid is None:
        return backend.schedule.uniform_grid(steps)
    g = np.asarray(list(grid), dtype=np.intp)
    if g.size < 2:
        raise ValueError("grid needs at least two indices")
    if g[0] < 0 or g[-1] > backend.schedule.T:
        raise ValueError(f"grid must stay within [0, {backend.schedule.T}]")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid indices must be strictly increasing")
    return g


def _check_injector(injector: Injector, backend: DiffusionBackend) -> None:
    unknown = set(injector.sites) - set(backend.sites)
    if unknown:
        raise ValueError(
            f"injector references site(s) {sorted(unknown)} not exposed by "
            f"backend {backend.name!r} (has {list(backend.sites)})"
        )


def invert_sequence(
    z0: LatentClip,
    cond: Condition | None,
    backend: DiffusionBackend,
    steps: int,
    *,
    grid: Iterable[int] | None = None,
) -> LatentClip:
    """Walk latents from index 0 up the schedule in ``steps`` strides.

    The default grid strides uniformly over the full schedule; pass an
    explicit ascending ``grid`` for partial-depth inversion.
    """
    g = _resolve_grid(backend, steps, grid)
    z = z0.latents
    for k in range(g.size - 1):
        z = ddim_invert_step(z, int(g[k]), cond, backend, t_next=int(g[k + 1]))
    return LatentClip(z)


def sample_sequence(
    z_top: LatentClip,
    cond: Condition | None,
    backend: DiffusionBackend,
    steps: int,
    injector: Injector | None = None,
    *,
    grid: Iterable[int] | None = None,
    on_site: SiteObserver | None = None,
    on_step: StepObserver | None = None,
) -> LatentClip:
    """Walk latents down the schedule, optionally overriding sites.

    ``injector`` may replace named site activations for steps it claims;
    step indices count executed steps starting at 1 (the noisiest step
    first). ``on_site`` observes the activation actually used at each
    site after any override; ``on_step`` observes each produced latent.
    """
    g = _resolve_grid(backend, steps, grid)
    if injector is not None:
        _check_injector(injector, backend)
    z = z_top.latents
    n = g.size - 1
    for i in range(n):
        step_index = i + 1
        t_from = int(g[n - i])
        t_to = int(g[n - i - 1])

        hook: Hook | None = None
        if injector is not None or on_site is not None:

            def hook(site: str, value: np.ndarray, _s: int = step_index) -> np.ndarray:
                if injector is not None:
                    replacement = injector.override(site, _s, value)
                    if replacement is not None:
                        value = replacement
                if on_site is not None:
                    on_site(_s, site, value)
                return value

        z = ddim_step(z, t_from, cond, backend, t_prev=t_to, hook=hook)
        if on_step is not None:
            on_step(step_index, t_to, z)
    return LatentClip(z)
