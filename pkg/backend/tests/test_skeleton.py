"""Forward kinematics, normalization, mirroring and the pose metrics."""
import math

import numpy as np
import pytest
from hypothesis import given
from pydantic import ValidationError

from errors import DegenerateOrientationError, StructuralError
from schemas import Pose
from skeleton import (
    KeypointSet,
    canonical_height,
    facing_yaw,
    forward_kinematics,
    geodesic_distance,
    lr_flip_pose,
    mirror_keypoints,
    mpje,
    normalize_orientation,
    rotate_yaw,
)
from tests.factories import pose_pairs, poses, random_pose, with_rotation, zero_rotations


def rodrigues(v) -> np.ndarray:
    theta = math.sqrt(sum(c * c for c in v))
    if theta == 0.0:
        return np.eye(3)
    k = np.array(v) / theta
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(theta) * kx + (1.0 - math.cos(theta)) * (kx @ kx)


def matrix_chain(pose: Pose, skel) -> np.ndarray:
    """Homogeneous transform per joint, parent transform times local transform."""
    transforms = []
    for j, joint in enumerate(skel.joints):
        local = np.eye(4)
        local[:3, :3] = rodrigues(pose.rotations[j])
        local[:3, 3] = joint.offset
        if joint.parent < 0:
            root = np.eye(4)
            root[:3, :3] = rodrigues((0.0, pose.root_yaw, 0.0))
            local[:3, 3] = 0.0
            transforms.append(root @ local)
        else:
            transforms.append(transforms[joint.parent] @ local)
    return np.array([t[:3, 3] for t in transforms])


def quaternion(v) -> np.ndarray:
    theta = math.sqrt(sum(c * c for c in v))
    if theta == 0.0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = np.array(v) / theta
    return np.concatenate([[math.cos(theta / 2)], math.sin(theta / 2) * axis])


def hamilton(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = p
    w2, x2, y2, z2 = q
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quaternion_geodesic(a: Pose, b: Pose) -> float:
    angles = []
    for j, (ra, rb) in enumerate(zip(a.rotations, b.rotations)):
        qa, qb = quaternion(ra), quaternion(rb)
        if j == 0:
            qa = hamilton(quaternion((0.0, a.root_yaw, 0.0)), qa)
            qb = hamilton(quaternion((0.0, b.root_yaw, 0.0)), qb)
        dot = min(1.0, abs(float(np.dot(qa, qb))))
        angles.append(math.degrees(2.0 * math.acos(dot)))
    return sum(angles) / len(angles)


# ===== forward kinematics =====
def test_rest_pose_is_cumulative_offsets(skel, rest):
    kps = forward_kinematics(rest, skel)
    expected = np.zeros((len(skel.joints), 3))
    for j, joint in enumerate(skel.joints[1:], start=1):
        expected[j] = expected[joint.parent] + np.array(joint.offset)
    assert np.allclose(kps.positions, expected, atol=1e-12)
    assert kps["left_wrist"] == pytest.approx([0.69, 0.44, 0.0])
    assert canonical_height(skel) == pytest.approx(skel.height)


def test_half_turn_yaw_mirrors_x_and_z(skel, rest):
    base = forward_kinematics(rest, skel).positions
    turned = forward_kinematics(rest.model_copy(update={"root_yaw": math.pi}), skel).positions
    assert np.allclose(turned, base * np.array([-1.0, 1.0, -1.0]), atol=1e-12)


def test_seed_7_matches_matrix_chain(skel):
    pose = random_pose(np.random.default_rng(7), spread=1.2)
    assert np.abs(forward_kinematics(pose, skel).positions - matrix_chain(pose, skel)).max() < 1e-9


@given(poses(spread=1.5))
def test_forward_kinematics_matches_matrix_chain(skel, pose):
    assert np.abs(forward_kinematics(pose, skel).positions - matrix_chain(pose, skel)).max() < 1e-9


def test_wrong_joint_count_is_structural(skel):
    with pytest.raises(StructuralError):
        forward_kinematics(Pose(rotations=zero_rotations()[:21]), skel)


def test_wrong_skeleton_name_is_structural(skel):
    with pytest.raises(StructuralError):
        forward_kinematics(Pose(skeleton="smpl24", rotations=zero_rotations()), skel)


def test_rotations_are_wrapped_to_pi():
    pose = Pose(rotations=((3 * math.pi / 2, 0.0, 0.0),) + zero_rotations()[1:])
    assert pose.rotations[0][0] == pytest.approx(-math.pi / 2)


# ===== orientation =====
def test_facing_forward_is_unchanged(skel, rest):
    normalized, yaw = normalize_orientation(rest, skel)
    assert yaw == pytest.approx(0.0, abs=1e-12)
    assert normalized == rest


def test_quarter_turn_is_removed(skel, rest):
    turned = rest.model_copy(update={"root_yaw": math.pi / 2})
    normalized, yaw = normalize_orientation(turned, skel)
    assert yaw == pytest.approx(math.pi / 2)
    assert facing_yaw(forward_kinematics(normalized, skel)) == pytest.approx(0.0, abs=1e-12)


@given(pose_pairs(spread=0.8))
def test_applying_a_yaw_to_b_keeps_the_relative_turn(skel, pair):
    a, b = pair
    stored_a, yaw_a = normalize_orientation(a, skel)
    stored_b = rotate_yaw(b, -yaw_a)
    before = facing_yaw(forward_kinematics(b, skel)) - facing_yaw(forward_kinematics(a, skel))
    after = facing_yaw(forward_kinematics(stored_b, skel)) - facing_yaw(forward_kinematics(stored_a, skel))
    assert math.remainder(after - before, 2 * math.pi) == pytest.approx(0.0, abs=1e-9)


@given(poses(spread=0.6))
def test_normalizing_twice_removes_no_more_yaw(skel, pose):
    once, _ = normalize_orientation(pose, skel)
    _, second_yaw = normalize_orientation(once, skel)
    assert second_yaw == pytest.approx(0.0, abs=1e-9)


def test_vertical_hips_and_shoulders_are_degenerate(skel):
    names = tuple(j.name for j in skel.joints)
    positions = np.zeros((len(names), 3))
    positions[names.index("left_hip"), 1] = 0.1
    positions[names.index("left_shoulder"), 1] = 0.5
    with pytest.raises(DegenerateOrientationError):
        facing_yaw(KeypointSet(positions=positions, names=names))


def test_vertical_hips_fall_back_on_shoulders(skel):
    names = tuple(j.name for j in skel.joints)
    positions = np.zeros((len(names), 3))
    positions[names.index("left_hip"), 1] = 0.1
    positions[names.index("left_shoulder")] = (0.2, 0.5, 0.0)
    positions[names.index("right_shoulder")] = (-0.2, 0.5, 0.0)
    assert facing_yaw(KeypointSet(positions=positions, names=names)) == pytest.approx(0.0, abs=1e-12)


# ===== mirroring =====
@given(poses(spread=1.5))
def test_flip_is_an_involution(skel, pose):
    assert lr_flip_pose(lr_flip_pose(pose, skel), skel) == pose


def test_rest_pose_is_its_own_mirror(skel, rest):
    assert lr_flip_pose(rest, skel) == rest


def test_left_elbow_bend_becomes_right_elbow_bend(skel, rest):
    left, right = skel.index("left_elbow"), skel.index("right_elbow")
    bent = with_rotation(rest, left, (0.0, 0.0, 1.5))
    flipped = lr_flip_pose(bent, skel)
    assert flipped.rotations[right] == (0.0, 0.0, -1.5)
    assert flipped.rotations[left] == (0.0, 0.0, 0.0)
    mirrored = mirror_keypoints(forward_kinematics(bent, skel), skel)
    assert np.abs(forward_kinematics(flipped, skel).positions - mirrored.positions).max() < 1e-9


@given(poses(spread=1.5))
def test_flipped_pose_keypoints_are_mirrored(skel, pose):
    mirrored = mirror_keypoints(forward_kinematics(pose, skel), skel)
    assert np.abs(forward_kinematics(lr_flip_pose(pose, skel), skel).positions - mirrored.positions).max() < 1e-9


# ===== metrics =====
def _keypoints(positions: np.ndarray) -> KeypointSet:
    return KeypointSet(positions=positions, names=tuple(f"j{i}" for i in range(len(positions))))


def test_keypoints_are_read_only(skel, rest):
    kps = forward_kinematics(rest, skel)
    with pytest.raises(ValidationError):
        kps.names = ()
    assert kps["pelvis"] == pytest.approx([0.0, 0.0, 0.0])


def test_mpje_of_identical_keypoints_is_zero(skel, rest):
    kps = forward_kinematics(rest, skel)
    assert mpje(kps, kps) == 0.0


def test_mpje_one_joint_off_by_22mm():
    a = np.zeros((22, 3))
    b = a.copy()
    b[5, 0] = 0.022
    assert mpje(_keypoints(a), _keypoints(b)) == pytest.approx(1.0)


@given(pose_pairs(spread=1.0))
def test_mpje_matches_direct_sum(skel, pair):
    a, b = (forward_kinematics(p, skel).positions for p in pair)
    total = 0.0
    for pa, pb in zip(a, b):
        total += math.sqrt(sum((x - y) ** 2 for x, y in zip(pa, pb)))
    expected = total / len(a) * 1000.0
    assert abs(mpje(_keypoints(a), _keypoints(b)) - expected) < 1e-9


def test_mpje_shape_mismatch_is_structural():
    with pytest.raises(StructuralError):
        mpje(_keypoints(np.zeros((22, 3))), _keypoints(np.zeros((21, 3))))


def test_geodesic_of_identical_poses_is_zero(rest):
    assert geodesic_distance(rest, rest) == pytest.approx(0.0, abs=1e-12)


def test_geodesic_single_quarter_turn(rest):
    turned = with_rotation(rest, 5, (math.pi / 2, 0.0, 0.0))
    assert geodesic_distance(rest, turned) == pytest.approx(90.0 / 22)


def test_geodesic_folds_root_yaw_into_pelvis(rest):
    assert geodesic_distance(rest, rest.model_copy(update={"root_yaw": math.pi / 2})) == pytest.approx(90.0 / 22)


@given(pose_pairs(spread=1.5))
def test_geodesic_matches_quaternion_oracle(pair):
    a, b = pair
    assert abs(geodesic_distance(a, b) - quaternion_geodesic(a, b)) < 1e-6


@given(pose_pairs(spread=1.0))
def test_mpje_is_symmetric(skel, pair):
    a, b = (forward_kinematics(p, skel) for p in pair)
    assert mpje(a, b) == mpje(b, a)


@given(pose_pairs(spread=1.5))
def test_geodesic_is_symmetric(pair):
    a, b = pair
    assert geodesic_distance(a, b) == pytest.approx(geodesic_distance(b, a), abs=1e-9)
