"""Shared fixtures: loaded engine resources, seeded generators and tiny corpora.

Hypothesis runs a CI-sized example count by default; POSEMOD_FULL_ACCEPTANCE=1
switches to the acceptance-size profile.
"""
import os
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from config import EngineResources, load_resources
from pairselect import write_sequence
from schemas import Pose, SkeletonDef
from tests.factories import make_sequence, zero_rotations

settings.register_profile(
    "ci", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile(
    "acceptance", max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("acceptance" if os.getenv("POSEMOD_FULL_ACCEPTANCE") == "1" else "ci")


@pytest.fixture(scope="session")
def resources() -> EngineResources:
    return load_resources()


@pytest.fixture(scope="session")
def skel(resources: EngineResources) -> SkeletonDef:
    return resources.skeleton


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(7)


@pytest.fixture
def rest() -> Pose:
    return Pose(rotations=zero_rotations())


@pytest.fixture
def corpus_writer(tmp_path: Path) -> Callable[..., Path]:
    """Writes ``<id>.jsonl`` files of random timed poses and returns the directory."""

    def write(sequences: Sequence[str] = ("s0", "s1", "s2"), frames: int = 6, seed: int = 11) -> Path:
        directory = tmp_path / "corpus"
        directory.mkdir(exist_ok=True)
        generator = np.random.default_rng(seed)
        for sequence_id in sequences:
            write_sequence(directory / f"{sequence_id}.jsonl", make_sequence(sequence_id, generator, frames))
        return directory

    return write
