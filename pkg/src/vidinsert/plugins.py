"""External adapter discovery via a JSON registry file.

The registry maps adapter ids to ``module:attribute`` factory paths,
grouped by section::

    {
      "backends":  {"my-model": "my_pkg.adapter:make_backend"},
      "embedders": {"my-clip":  "my_pkg.adapter:make_embedder"}
    }

The file is found through the ``VIDINSERT_PLUGINS`` environment variable
or, failing that, ``vidinsert_plugins.json`` in the working directory.
"""

from __future__ import annotations

import importlib
import json
import os
from pathlib import Path
from typing import Callable

__all__ = ["ENV_VAR", "DEFAULT_FILE", "registry_path", "load_registry", "resolve"]

ENV_VAR = "VIDINSERT_PLUGINS"
DEFAULT_FILE = "vidinsert_plugins.json"


def registry_path() -> Path | None:
    """Locate the plugin registry file, or None when there is none."""
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env)
    local = Path(DEFAULT_FILE)
    return local if local.exists() else None


def load_registry(path: str | Path | None = None) -> dict:
    p = Path(path) if path is not None else registry_path()
    if p is None:
        raise FileNotFoundError(
            f"no plugin registry: set {ENV_VAR} or create ./{DEFAULT_FILE}"
        )
    if not p.exists():
        raise FileNotFoundError(f"plugin registry {p} does not exist")
    data = json.loads(p.read_text())
    if not isinstance(data, dict):
        raise ValueError(f"plugin registry {p} must contain a JSON object")
    return data


def resolve(section: str, adapter_id: str, path: str | Path | None = None) -> Callable:
    """Import and return the factory registered under section/adapter_id."""
    registry = load_registry(path)
    table = registry.get(section)
    if not isinstance(table, dict):
        raise ValueError(f"plugin registry has no {section!r} section")
    target = table.get(adapter_id)
    if target is None:
        raise ValueError(
            f"no adapter {adapter_id!r} in section {section!r} "
            f"(registered: {sorted(table)})"
        )
    if not isinstance(target, str) or ":" not in target:
        raise ValueError(
            f"adapter {adapter_id!r} must map to 'module:attribute', got {target!r}"
        )
    module_name, _, attr = target.partition(":")
    try:
        module = importlib.import_module(module_name)
    except ImportError as exc:
        raise ValueError(f"cannot import adapter module {module_name!r}: {exc}") from exc
    try:
        factory = getattr(module, attr)
    except AttributeError:
        raise ValueError(f"module {module_name!r} has no attribute {attr!r}") from None
    if not callable(factory):
        raise ValueError(f"adapter {adapter_id!r} resolved to a non-callable")
    return factory
