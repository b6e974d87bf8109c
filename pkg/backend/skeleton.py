"""Pose geometry on the 22-joint body skeleton.

Forward kinematics, yaw normalization, left/right mirroring and the two
reconstruction metrics (MPJE and geodesic rotation distance).

Axis convention: +y up, +z the direction the body faces after
normalization, +x the subject's left.
"""
import json
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import List, Tuple

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, ValidationError
from scipy.spatial.transform import Rotation

from errors import DegenerateOrientationError, StructuralError
from schemas import Pose, SkeletonDef, Vector3

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

JOINT_COUNT = 22
MIRROR = np.array([-1.0, 1.0, 1.0])
_DEGENERATE_EPS = 1e-9


class KeypointSet(BaseModel):
    """World-frame joint positions in meters, pelvis at the origin."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    positions: FloatArray
    names: Tuple[str, ...]

    def __getitem__(self, name: str) -> FloatArray:
        return self.positions[self.names.index(name)]


def load_skeleton(path: Path) -> SkeletonDef:
    """Load and check a skeleton definition file.

    Raises:
        StructuralError: the file is malformed or breaks a skeleton invariant.
    """
    try:
        skel = SkeletonDef.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError, ValidationError) as e:
        raise StructuralError(f"Cannot load skeleton from {path}: {e}") from e
    _check_skeleton(skel)
    logger.debug("[skeleton] loaded %s with %d joints", skel.skeleton, len(skel.joints))
    return skel


def _check_skeleton(skel: SkeletonDef) -> None:
    parents = skel.parents
    if len(parents) != JOINT_COUNT:
        raise StructuralError(f"Skeleton must have {JOINT_COUNT} joints, got {len(parents)}")
    if parents[0] != -1 or any(p == -1 for p in parents[1:]):
        raise StructuralError("Skeleton must have a single root at index 0")
    for i, p in enumerate(parents[1:], start=1):
        # parents listed before children rules out cycles
        if not 0 <= p < i:
            raise StructuralError(f"Joint '{skel.joints[i].name}' has parent {p} not listed before it")

    offsets = _offsets(skel)
    for i, j in enumerate(mirror_indices(skel)):
        if not np.allclose(offsets[j], offsets[i] * MIRROR, atol=1e-12):
            raise StructuralError(
                f"Offsets of '{skel.joints[i].name}' and '{skel.joints[j].name}' are not mirror images"
            )
        if j != i and parents[j] != mirror_indices(skel)[parents[i]]:
            raise StructuralError(f"Joint '{skel.joints[i].name}' and its mirror have unpaired parents")

    extent = canonical_height(skel)
    if abs(extent - skel.height) > 1e-9:
        raise StructuralError(f"Skeleton height {skel.height} does not match its extent {extent}")


@lru_cache(maxsize=8)
def _offsets(skel: SkeletonDef) -> FloatArray:
    return np.array([j.offset for j in skel.joints], dtype=np.float64)


def mirror_name(name: str) -> str:
    """Swap a left_/right_ prefix; other names are their own mirror."""
    if name.startswith("left_"):
        return "right_" + name[len("left_"):]
    if name.startswith("right_"):
        return "left_" + name[len("right_"):]
    return name


@lru_cache(maxsize=8)
def mirror_indices(skel: SkeletonDef) -> Tuple[int, ...]:
    """Index of each joint's left/right counterpart (itself for midline joints)."""
    names = skel.names
    out: List[int] = []
    for name in names:
        twin = mirror_name(name)
        if twin not in names:
            raise StructuralError(f"Joint '{name}' has no mirror counterpart '{twin}'")
        out.append(names.index(twin))
    return tuple(out)


def canonical_height(skel: SkeletonDef) -> float:
    """Vertical extent from the lowest joint to the top of the head in the rest pose."""
    rest = forward_kinematics(rest_pose(skel), skel).positions
    top = rest[skel.index("head"), 1] + skel.head_top_offset[1]
    return float(top - rest[:, 1].min())


def rest_pose(skel: SkeletonDef) -> Pose:
    return Pose(skeleton=skel.skeleton, rotations=tuple((0.0, 0.0, 0.0) for _ in skel.joints))


def yaw_matrix(yaw: float) -> FloatArray:
    return Rotation.from_rotvec([0.0, yaw, 0.0]).as_matrix()


def forward_kinematics(pose: Pose, skel: SkeletonDef) -> KeypointSet:
    """Compose local rotations down the kinematic tree.

    Args:
        pose: local axis-angle rotation per joint and root yaw.
        skel: skeleton the pose is expressed on.

    Returns:
        Keypoints in the world frame with the pelvis at the origin.

    Raises:
        StructuralError: the pose does not have one rotation per joint.
    """
    if len(pose.rotations) != len(skel.joints):
        raise StructuralError(
            f"Pose has {len(pose.rotations)} rotations, skeleton '{skel.skeleton}' has {len(skel.joints)} joints"
        )
    if pose.skeleton != skel.skeleton:
        raise StructuralError(f"Pose is for skeleton '{pose.skeleton}', not '{skel.skeleton}'")

    local = Rotation.from_rotvec(np.asarray(pose.rotations, dtype=np.float64)).as_matrix()
    offsets = _offsets(skel)
    parents = skel.parents

    world = np.empty_like(local)
    positions = np.zeros((len(parents), 3), dtype=np.float64)
    world[0] = yaw_matrix(pose.root_yaw) @ local[0]
    for j in range(1, len(parents)):
        p = parents[j]
        world[j] = world[p] @ local[j]
        positions[j] = positions[p] + world[p] @ offsets[j]
    return KeypointSet(positions=positions, names=tuple(skel.names))


def wrap_angle(angle: float) -> float:
    """Wrap radians to [-pi, pi]."""
    return math.remainder(angle, 2.0 * math.pi)


def rotate_yaw(pose: Pose, delta: float) -> Pose:
    """Turn the whole body by ``delta`` radians about +y."""
    return pose.model_copy(update={"root_yaw": wrap_angle(pose.root_yaw + delta)})


def facing_yaw(kps: KeypointSet) -> float:
    """Yaw of the body's facing direction, 0 when facing +z.

    The facing direction is the horizontal part of cross(hip axis, up),
    falling back on the shoulder axis when the hips are vertically aligned.

    Raises:
        DegenerateOrientationError: both axes are vertical.
    """
    for left, right in (("left_hip", "right_hip"), ("left_shoulder", "right_shoulder")):
        axis = kps[left] - kps[right]
        # cross(axis, +y) is already horizontal
        fx, fz = -axis[2], axis[0]
        if math.hypot(fx, fz) > _DEGENERATE_EPS:
            return math.atan2(fx, fz)
        logger.debug("[skeleton] %s/%s axis is vertical, trying the next axis", left, right)
    raise DegenerateOrientationError("Cannot determine facing direction: hip and shoulder axes are vertical")


def normalize_orientation(pose: Pose, skel: SkeletonDef) -> Tuple[Pose, float]:
    """Rotate the body about +y so it faces +z.

    Returns:
        The normalized pose and the yaw (radians) that was removed.
    """
    yaw = facing_yaw(forward_kinematics(pose, skel))
    return rotate_yaw(pose, -yaw), yaw


def normalized_keypoints(pose: Pose, skel: SkeletonDef) -> KeypointSet:
    normalized, _ = normalize_orientation(pose, skel)
    return forward_kinematics(normalized, skel)


def _mirror_rotvec(v: Vector3) -> Vector3:
    # M R(a, t) M with M = diag(-1, 1, 1) is R((ax, -ay, -az), t)
    return (v[0], -v[1], -v[2])


def lr_flip_pose(pose: Pose, skel: SkeletonDef) -> Pose:
    """Swap left/right joint rotations and mirror them across the x=0 plane."""
    if len(pose.rotations) != len(skel.joints):
        raise StructuralError(
            f"Pose has {len(pose.rotations)} rotations, skeleton '{skel.skeleton}' has {len(skel.joints)} joints"
        )
    twins = mirror_indices(skel)
    rotations = tuple(_mirror_rotvec(pose.rotations[twins[i]]) for i in range(len(twins)))
    return Pose(skeleton=pose.skeleton, rotations=rotations, root_yaw=-pose.root_yaw)


def mirror_keypoints(kps: KeypointSet, skel: SkeletonDef) -> KeypointSet:
    """Mirror image across x=0, with left/right joints relabelled."""
    twins = list(mirror_indices(skel))
    return KeypointSet(positions=(kps.positions * MIRROR)[twins], names=kps.names)


def mpje(a: KeypointSet, b: KeypointSet) -> float:
    """Mean per-joint Euclidean error in millimeters."""
    if a.positions.shape != b.positions.shape:
        raise StructuralError("Keypoint sets come from different skeletons")
    return float(np.linalg.norm(a.positions - b.positions, axis=1).mean() * 1000.0)


def _world_root_rotvecs(pose: Pose) -> FloatArray:
    rotvecs = np.asarray(pose.rotations, dtype=np.float64).copy()
    root = Rotation.from_rotvec([0.0, pose.root_yaw, 0.0]) * Rotation.from_rotvec(rotvecs[0])
    rotvecs[0] = root.as_rotvec()
    return rotvecs


def geodesic_distance(a: Pose, b: Pose) -> float:
    """Mean per-joint geodesic rotation angle in degrees.

    The root yaw is folded into the pelvis rotation before comparing.
    """
    if len(a.rotations) != len(b.rotations):
        raise StructuralError("Poses have different joint counts")
    ra = Rotation.from_rotvec(_world_root_rotvecs(a))
    rb = Rotation.from_rotvec(_world_root_rotvecs(b))
    return float(np.degrees((ra.inv() * rb).magnitude()).mean())


@lru_cache(maxsize=8)
def shoulder_span(skel: SkeletonDef) -> float:
    """Distance between the shoulder joints in the rest pose."""
    rest = forward_kinematics(rest_pose(skel), skel)
    return float(np.linalg.norm(rest["left_shoulder"] - rest["right_shoulder"]))
