"""Paircodes, the orientation code and the super-paircode rule table."""
import math
from typing import Tuple

import numpy as np
import pytest
from hypothesis import given

from errors import StructuralError
from paircodes import (
    REVERSE,
    apply_superpaircode_rules,
    compute_paircodes,
    mirror_direction,
    orientation_change_code,
    parse_rules,
)
from posecodes import INVENTORY as POSECODE_INVENTORY, compute_posecodes, slot_key
from schemas import FrequencyTable, PairKind, Paircode, Posecode, PosecodeSet
from skeleton import KeypointSet, forward_kinematics, lr_flip_pose, mirror_name, normalized_keypoints
from tests.factories import pose_pairs


@pytest.fixture
def rest_kps(skel, rest) -> KeypointSet:
    return forward_kinematics(rest, skel)


@pytest.fixture
def rest_codes(skel, rest_kps) -> PosecodeSet:
    return compute_posecodes(rest_kps, skel)


def moved(kps: KeypointSet, skel, **joints) -> KeypointSet:
    positions = kps.positions.copy()
    for name, position in joints.items():
        positions[skel.index(name)] = position
    return KeypointSet(positions=positions, names=kps.names)


def with_bin(pcs: PosecodeSet, category: str, subjects: tuple, bin_: str) -> PosecodeSet:
    return PosecodeSet(codes=tuple(
        c.model_copy(update={"bin": bin_}) if (c.category, c.subjects) == (category, subjects) else c
        for c in pcs.codes
    ))


def find(codes, kind, subjects, axis=None) -> Paircode:
    return next(c for c in codes if (c.kind, c.subjects, c.axis) == (kind, subjects, axis))


def elbow_at(kps: KeypointSet, skel, degrees: float) -> KeypointSet:
    """Left wrist placed so the left elbow's interior angle is ``degrees``."""
    elbow = kps["left_elbow"]
    theta = math.radians(degrees)
    return moved(kps, skel, left_wrist=elbow + 0.25 * np.array([-math.cos(theta), math.sin(theta), 0.0]))


# ===== compute_paircodes =====
def test_left_elbow_bends_moderately(skel, rest_kps):
    codes = compute_paircodes(elbow_at(rest_kps, skel, 170), elbow_at(rest_kps, skel, 85), skel)
    code = find(codes, "angle_change", ("left_elbow",))
    assert (code.direction, code.magnitude) == ("bend", "moderate")
    assert code.raw_delta == pytest.approx(-85.0)


def test_hands_move_significantly_closer(skel, rest_kps):
    half_a, half_b = 0.45 * skel.height / 2, 0.10 * skel.height / 2
    a = moved(rest_kps, skel, left_wrist=(half_a, 0.4, 0.3), right_wrist=(-half_a, 0.4, 0.3))
    b = moved(rest_kps, skel, left_wrist=(half_b, 0.4, 0.3), right_wrist=(-half_b, 0.4, 0.3))
    code = find(compute_paircodes(a, b, skel), "distance_change", ("hands",))
    assert (code.direction, code.magnitude) == ("closer", "significant")


def test_right_hand_moves_slightly_left(skel, rest_kps):
    b = moved(rest_kps, skel, right_wrist=rest_kps["right_wrist"] + np.array([0.09 * skel.height, 0.0, 0.0]))
    code = find(compute_paircodes(rest_kps, b, skel), "displacement", ("right_hand",), "x")
    assert (code.direction, code.magnitude) == ("left", "slight")


def test_identical_keypoints_give_no_paircodes(skel, rest_kps):
    assert compute_paircodes(rest_kps, rest_kps, skel) == []


def test_mismatched_keypoints_are_structural(skel, rest_kps):
    short = KeypointSet(positions=rest_kps.positions[:21], names=rest_kps.names[:21])
    with pytest.raises(StructuralError):
        compute_paircodes(rest_kps, short, skel)


@given(pose_pairs(spread=0.8))
def test_paircodes_are_antisymmetric(skel, pair):
    a, b = (normalized_keypoints(p, skel) for p in pair)
    forward = compute_paircodes(a, b, skel)
    backward = compute_paircodes(b, a, skel)
    assert len(forward) == len(backward)
    for f, r in zip(forward, backward):
        assert (f.kind, f.subjects, f.axis, f.magnitude) == (r.kind, r.subjects, r.axis, r.magnitude)
        assert r.direction == REVERSE[f.direction]
        assert r.raw_delta == -f.raw_delta


def test_mirror_direction_only_swaps_sides():
    assert mirror_direction("left") == "right"
    assert mirror_direction("right") == "left"
    assert mirror_direction("up") == "up"
    assert mirror_direction("bend") == "bend"


def code_tuple(code: Paircode, mirrored: bool = False) -> Tuple[str, Tuple[str, ...], str, str, str]:
    if not mirrored:
        return (code.kind, code.subjects, code.direction, code.magnitude, code.axis or "")
    subjects = tuple(mirror_name(s) for s in code.subjects)
    return (code.kind, subjects, mirror_direction(code.direction), code.magnitude, code.axis or "")


@given(pose_pairs(spread=0.8))
def test_flipped_pair_has_mirrored_paircodes(skel, pair):
    a, b = pair
    original = compute_paircodes(normalized_keypoints(a, skel), normalized_keypoints(b, skel), skel)
    flipped = compute_paircodes(
        normalized_keypoints(lr_flip_pose(a, skel), skel), normalized_keypoints(lr_flip_pose(b, skel), skel), skel
    )
    assert sorted(code_tuple(c) for c in flipped) == sorted(code_tuple(c, mirrored=True) for c in original)


# ===== orientation =====
def test_no_turn_no_orientation_code():
    assert orientation_change_code(0.3, 0.3, PairKind.IS) is None


def test_quarter_turn_to_the_left():
    code = orientation_change_code(0.0, math.pi / 2, PairKind.IS)
    assert code is not None
    assert (code.direction, code.magnitude) == ("left", "quarter")


def test_turns_wrap_around():
    code = orientation_change_code(math.radians(175), math.radians(-175), PairKind.IS)
    assert code is None
    code = orientation_change_code(math.radians(140), math.radians(-140), PairKind.IS)
    assert code is not None
    assert (code.direction, code.magnitude) == ("left", "quarter")


def test_out_of_sequence_pairs_never_turn():
    assert orientation_change_code(0.0, math.pi / 2, PairKind.OOS) is None


# ===== super-paircodes =====
def knee_straightens(raw: float = 30.0) -> Paircode:
    return Paircode(
        kind="angle_change", subjects=("left_knee",), direction="straighten", magnitude="moderate", raw_delta=raw
    )


def hands(direction: str, raw: float) -> Paircode:
    return Paircode(kind="distance_change", subjects=("hands",), direction=direction, magnitude="moderate", raw_delta=raw)


def test_straighten_the_left_leg(resources, rest_codes):
    a = with_bin(rest_codes, "angle", ("left_knee",), "slightly_bent")
    cs = apply_superpaircode_rules([knee_straightens()], a, rest_codes, None, resources.rules)
    assert cs.paircodes == ()
    (sp,) = cs.super_paircodes
    assert (sp.rule_id, sp.subjects, sp.intent) == ("straighten_left_leg", ("left_leg",), "straighten_leg")
    assert sp.consumed == (knee_straightens(),)


def test_second_way_produces_the_same_super(resources, rest_codes):
    a = with_bin(rest_codes, "angle", ("left_knee",), "partially_bent")
    cs = apply_superpaircode_rules([knee_straightens()], a, rest_codes, None, resources.rules)
    assert [sp.intent for sp in cs.super_paircodes] == ["straighten_leg"]
    assert cs.super_paircodes[0].supports == (
        Posecode(category="angle", subjects=("left_knee",), bin="straight"),
    )


def test_no_way_holds_keeps_the_paircode(resources, rest_codes):
    a = with_bin(rest_codes, "angle", ("left_knee",), "bent")
    b = with_bin(rest_codes, "angle", ("left_knee",), "partially_bent")
    cs = apply_superpaircode_rules([knee_straightens()], a, b, None, resources.rules)
    assert cs.super_paircodes == ()
    assert cs.paircodes == (knee_straightens(),)


def test_hands_apart_needs_hands_close_to_begin_with(resources, rest_codes):
    apart = hands("farther", 0.2)
    close = with_bin(rest_codes, "distance", ("hands",), "close")
    kept = apply_superpaircode_rules([apart], close, rest_codes, None, resources.rules)
    assert kept.paircodes == (apart,)
    dropped = apply_superpaircode_rules([apart], rest_codes, rest_codes, None, resources.rules)
    assert dropped.paircodes == ()
    assert dropped.super_paircodes == ()


def test_rare_pose_b_code_becomes_a_statement(resources, rest_codes):
    frequencies = {slot_key(c, s): {"_": 1.0} for c, s in POSECODE_INVENTORY}
    frequencies[slot_key("distance", ("hands",))] = {"shoulder_width": 0.03, "wide": 0.9}
    freq = FrequencyTable(corpus_size=100, frequencies=frequencies)
    b = with_bin(rest_codes, "distance", ("hands",), "shoulder_width")
    cs = apply_superpaircode_rules([], rest_codes, b, freq, resources.rules)
    assert cs.b_statements == (Posecode(category="distance", subjects=("hands",), bin="shoulder_width"),)


def test_statements_keep_the_rarest_two(resources, rest_codes):
    slots = [("angle", ("left_elbow",)), ("angle", ("right_elbow",)), ("angle", ("left_knee",))]
    frequencies = {slot_key(c, s): {} for c, s in POSECODE_INVENTORY}
    for (category, subjects), share in zip(slots, (0.04, 0.01, 0.02)):
        frequencies[slot_key(category, subjects)] = {"bent": share}
    b = rest_codes
    for category, subjects in slots:
        b = with_bin(b, category, subjects, "bent")
    freq = FrequencyTable(corpus_size=100, frequencies=frequencies)
    cs = apply_superpaircode_rules([], rest_codes, b, freq, resources.rules)
    assert [s.subjects for s in cs.b_statements] == [("right_elbow",), ("left_knee",)]


def test_no_frequency_table_no_statements(resources, rest_codes):
    b = with_bin(rest_codes, "distance", ("hands",), "shoulder_width")
    assert apply_superpaircode_rules([], rest_codes, b, None, resources.rules).b_statements == ()


# ===== rule file =====
@pytest.mark.parametrize("line", [
    "r | left_leg | x | combine | pair:angle_change:left_knee:bend |",
    "r | left_leg | x | merge | pair:angle_change:left_knee:bend ; A:angle:left_knee:bent |",
    "r | left_leg | x | gate | A:angle:left_knee:bent ; pair:angle_change:left_knee:bend |",
    "r | left_leg | x | combine | pair:angle_change:left_knee:bend ; A:angle:left_knee:wobbly |",
    "r | left_leg | x | combine | pair:angle_change:nose:bend ; A:angle:left_knee:bent |",
    "r | left_leg | x | combine | pair:angle_change:left_knee:bend ; A:angle:left_knee:bent | left_ear:y",
])
def test_malformed_rules_are_structural(line):
    with pytest.raises(StructuralError):
        parse_rules(line)


def test_rule_ways_are_grouped_by_id(resources):
    groups = dict(resources.rules.grouped())
    assert len(groups["straighten_left_leg"]) == 2
    assert groups["hands_apart"][0].effect == "gate"
