"""Shared fixtures: small deterministic clips, assets, and backends."""

import numpy as np
import pytest

from vidinsert.compositor import Clip, Frame, ObjectAsset
from vidinsert.diffusion import NoiseSchedule
from vidinsert.geometry import BBox, BinaryMask, Delta, generate_trajectory
from vidinsert.pipeline import build_synthetic_case


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def background_clip(rng):
    """Six 16x16 frames of smooth deterministic content."""
    frames = []
    for i in range(6):
        base = rng.uniform(0.2, 0.8, (16, 16, 3))
        frames.append(Frame(base))
    return Clip(tuple(frames), fps=8.0)


@pytest.fixture
def asset():
    """4x4 object with a diamond-ish partial mask."""
    pixels = np.linspace(0.1, 0.9, 4 * 4 * 3).reshape(4, 4, 3)
    mask = BinaryMask(
        np.array(
            [
                [0, 1, 1, 0],
                [1, 1, 1, 1],
                [1, 1, 1, 1],
                [0, 1, 1, 0],
            ],
            dtype=np.uint8,
        )
    )
    return ObjectAsset(image=Frame(pixels), mask=mask)


@pytest.fixture
def trajectory(background_clip):
    return generate_trajectory(
        BBox(1, 2, 5, 5),
        Delta(dx=2),
        len(background_clip),
        background_clip.width,
        background_clip.height,
    )


@pytest.fixture
def short_schedule():
    """T=20 schedule: cheap full-depth sweeps in unit tests."""
    return NoiseSchedule.linear_beta(T=20)


@pytest.fixture(scope="session")
def synthetic_case(tmp_path_factory):
    """The bundled 16-frame 64x64 synthetic case, built once per session."""
    case_dir = tmp_path_factory.mktemp("case") / "synthetic"
    build_synthetic_case(case_dir)
    return case_dir


def random_binary_mask(rng, h, w):
    """Non-empty random mask helper shared by several test modules."""
    grid = (rng.uniform(size=(h, w)) < 0.5).astype(np.uint8)
    if not grid.any():
        grid[rng.integers(h), rng.integers(w)] = 1
    return BinaryMask(grid)
