"""Backend lookup by name, including external adapters.

Names starting with ``external:`` are resolved through the plugin
registry file (see ``vidinsert.plugins``); everything else is one of the
bundled toys.
"""

from __future__ import annotations

from .. import plugins
from .backend import DiffusionBackend, make_codec
from .schedule import NoiseSchedule
from .toys import (
    ConstantPredictorBackend,
    LinearPredictorBackend,
    ReplayNoiseBackend,
    ZeroPredictorBackend,
)

__all__ = ["available_backends", "create_backend"]

_TOYS = {
    "toy-zero": ZeroPredictorBackend,
    "toy-const": ConstantPredictorBackend,
    "toy-linear": LinearPredictorBackend,
    "toy-replay": ReplayNoiseBackend,
}


def available_backends() -> tuple[str, ...]:
    return tuple(_TOYS) + ("external:<adapter-id>",)


def create_backend(
    name: str,
    *,
    schedule: NoiseSchedule | None = None,
    codec: str = "identity",
    downsample: int = 1,
    seed: int = 0,
    video: bool = False,
    const_value: float = 0.25,
) -> DiffusionBackend:
    """Instantiate a backend by registry name.

    Toy names take the shared keyword set (seed is ignored by the zero
    and constant toys). ``external:<adapter-id>`` hands the same
    keywords to the plugin factory, which may ignore whichever it does
    not need.
    """
    if name.startswith("external:"):
        adapter_id = name.split(":", 1)[1]
        if not adapter_id:
            raise ValueError("external backend name must be 'external:<adapter-id>'")
        factory = plugins.resolve("backends", adapter_id)
        backend = factory(
            schedule=schedule,
            codec=codec,
            downsample=downsample,
            seed=seed,
            video=video,
        )
        if not isinstance(backend, DiffusionBackend):
            raise ValueError(
                f"adapter {adapter_id!r} returned {type(backend).__name__}, "
                "not a DiffusionBackend"
            )
        return backend

    cls = _TOYS.get(name)
    if cls is None:
        raise ValueError(f"unknown backend {name!r} (available: {available_backends()})")

    codec_obj = make_codec(codec, downsample)
    if name == "toy-zero":
        return cls(schedule, codec_obj, video)
    if name == "toy-const":
        return cls(schedule, codec_obj, video, value=const_value)
    return cls(schedule, codec_obj, video, seed=seed)
