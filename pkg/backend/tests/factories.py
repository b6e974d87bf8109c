"""Random poses and sequences for tests, seeded through numpy generators."""
import math

import numpy as np
from hypothesis import strategies as st

from schemas import Pose, PoseSequence, TimedPose

JOINTS = 22


def zero_rotations() -> tuple:
    return tuple((0.0, 0.0, 0.0) for _ in range(JOINTS))


def random_pose(rng: np.random.Generator, spread: float = 0.6, yaw: bool = True) -> Pose:
    """Rotations with every axis-angle component uniform in [-spread, spread]."""
    rotations = tuple(tuple(float(c) for c in rng.uniform(-spread, spread, 3)) for _ in range(JOINTS))
    root_yaw = float(rng.uniform(-math.pi, math.pi)) if yaw else 0.0
    return Pose(rotations=rotations, root_yaw=root_yaw)  # type: ignore[arg-type]


def with_rotation(pose: Pose, joint: int, rotvec: tuple) -> Pose:
    rotations = list(pose.rotations)
    rotations[joint] = rotvec
    return pose.model_copy(update={"rotations": tuple(rotations)})


def make_sequence(sequence_id: str, rng: np.random.Generator, frames: int, step: float = 0.1) -> PoseSequence:
    return PoseSequence(
        sequence_id=sequence_id,
        poses=tuple(
            TimedPose(**random_pose(rng, 0.8).model_dump(), t=round(i * step, 6)) for i in range(frames)
        ),
    )


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@st.composite
def poses(draw: st.DrawFn, spread: float = 0.6) -> Pose:
    return random_pose(np.random.default_rng(draw(seeds)), spread)


@st.composite
def pose_pairs(draw: st.DrawFn, spread: float = 0.6) -> tuple:
    rng = np.random.default_rng(draw(seeds))
    return random_pose(rng, spread), random_pose(rng, spread)
