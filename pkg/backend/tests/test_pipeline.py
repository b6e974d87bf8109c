"""Seeds, selection, aggregation and body-part ordering."""
from collections import Counter
from typing import Set

import pytest
from hypothesis import given, strategies as st

from errors import StructuralError
from paircodes import apply_superpaircode_rules, compute_paircodes, orientation_change_code
from pipeline import (
    aggregate_codes,
    both_name,
    build_plan,
    canonical_codes,
    canonical_orientation,
    canonical_paircode,
    canonical_statement,
    canonical_super,
    make_rng,
    order_codes,
    pair_seed,
    parse_graph,
    select_codes,
    splitmix64,
    stage_seed,
    walk_graph,
)
from posecodes import compute_posecodes
from schemas import AggregatedCodeSet, CodeSet, PairKind, Paircode, SuperPaircode
from skeleton import forward_kinematics, normalize_orientation
from tests.factories import pose_pairs


def displacement(subject: str, axis: str, direction: str, raw: float, magnitude: str = "slight") -> Paircode:
    return Paircode(
        kind="displacement", subjects=(subject,), direction=direction, magnitude=magnitude, axis=axis, raw_delta=raw
    )


def bend(subject: str, raw: float = -40.0) -> Paircode:
    return Paircode(kind="angle_change", subjects=(subject,), direction="bend", magnitude="moderate", raw_delta=raw)


# ===== seeds =====
def test_splitmix64_reference_value():
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_seeds_are_stable_and_distinct():
    assert pair_seed(42, 7) == pair_seed(42, 7)
    assert len({pair_seed(42, i) for i in range(1000)}) == 1000
    assert stage_seed(5, "order") != stage_seed(5, "verbalize")
    assert make_rng(9).integers(1 << 30) == make_rng(9).integers(1 << 30)


# ===== selection =====
def test_trivial_displacement_is_removed():
    cs = CodeSet(paircodes=(displacement("left_hand", "y", "up", 0.09),))
    assert select_codes(cs, 7).paircodes == ()


def test_cap_keeps_the_largest_changes():
    subjects = ("left_hand", "right_hand", "left_elbow", "right_elbow")
    codes = tuple(
        displacement(subjects[i % 4], "xyz"[i // 4], ("left", "up", "front")[i // 4], 0.11 + 0.01 * i)
        for i in range(12)
    )
    kept = select_codes(CodeSet(paircodes=codes), 7).paircodes
    assert kept == codes[5:]


def test_ranking_compares_kinds_by_their_threshold():
    small_angle = bend("left_elbow", -21.0)
    big_move = displacement("left_hand", "y", "up", 0.16)
    kept = select_codes(CodeSet(paircodes=(small_angle, big_move)), 1).paircodes
    assert kept == (big_move,)


def test_empty_selection_is_empty():
    assert select_codes(CodeSet(), 7) == CodeSet()


def test_cap_must_be_positive():
    with pytest.raises(ValueError):
        select_codes(CodeSet(), 0)


def test_super_paircode_implies_its_displacements():
    up = displacement("left_elbow", "y", "up", 0.2)
    raise_arm = SuperPaircode(rule_id="raise_left_arm", subjects=("left_arm",), intent="raise_arm_above_shoulder",
                              consumed=(), implies=(("left_elbow", "y"),))
    selected = select_codes(CodeSet(paircodes=(up,), super_paircodes=(raise_arm,)), 7)
    assert selected.paircodes == ()
    assert selected.super_paircodes == (raise_arm,)


# ===== aggregation =====
def test_same_subject_displacements_merge():
    cs = CodeSet(paircodes=(
        displacement("right_hand", "y", "up", 0.11),
        displacement("right_hand", "x", "left", 0.12),
    ))
    (item,) = aggregate_codes(cs).items
    assert item.key == "displacement.multi"
    assert item.directions == (("left", "slight"), ("up", "slight"))
    assert len(item.codes) == 2


def test_mirror_codes_merge_into_both():
    cs = CodeSet(paircodes=(
        displacement("left_hand", "y", "up", 0.2, "moderate"),
        displacement("right_hand", "y", "up", 0.2, "moderate"),
    ))
    (item,) = aggregate_codes(cs).items
    assert (item.key, item.subject) == ("displacement.up", "both_hands")
    assert [c.subjects for c in item.codes] == [("left_hand",), ("right_hand",)]


def test_different_magnitudes_do_not_merge():
    cs = CodeSet(paircodes=(
        displacement("left_hand", "y", "up", 0.2, "moderate"),
        displacement("right_hand", "y", "up", 0.11, "slight"),
    ))
    assert len(aggregate_codes(cs).items) == 2


def test_two_subject_distances_never_merge():
    cs = CodeSet(paircodes=(
        Paircode(kind="distance_change", subjects=("left_hand", "head"), direction="closer",
                 magnitude="moderate", raw_delta=-0.2),
        Paircode(kind="distance_change", subjects=("right_hand", "head"), direction="closer",
                 magnitude="moderate", raw_delta=-0.2),
    ))
    assert [i.subject for i in aggregate_codes(cs).items] == ["left_hand", "right_hand"]


def test_aggregation_is_idempotent():
    cs = CodeSet(paircodes=(
        bend("left_elbow"), bend("right_elbow"),
        displacement("left_foot", "z", "front", 0.2), displacement("left_foot", "y", "up", 0.2),
    ))
    once = aggregate_codes(cs)
    assert aggregate_codes(once) == once
    assert aggregate_codes(CodeSet(paircodes=(bend("left_knee"),))).items[0].subject == "left_knee"


def test_both_names():
    assert both_name("left_foot") == "both_feet"
    assert both_name("right_leg") == "both_legs"
    assert both_name("hands") is None


# ===== ordering =====
TOY = parse_graph("""
body -> x
body -> y
x -> z
y -> w
""")


def test_toy_walk_follows_the_seeded_choice():
    first = int(make_rng(0).integers(2))
    expected = ["body", "x", "z", "y", "w"] if first == 0 else ["body", "y", "w", "x", "z"]
    assert walk_graph(TOY, make_rng(0)) == expected


def test_forearm_codes_stay_together(resources):
    cs = aggregate_codes(CodeSet(paircodes=(
        bend("left_elbow"),
        bend("right_knee"),
        displacement("left_hand", "y", "up", 0.2),
    )))
    for seed in range(40):
        subjects = [item.subject for item in order_codes(cs, resources.graph, seed).items]
        left = sorted(subjects.index(s) for s in ("left_elbow", "left_hand"))
        assert left[1] - left[0] == 1


def test_shoulders_belong_to_the_torso(resources):
    children = resources.graph.children
    assert {"left_shoulder", "right_shoulder"} <= set(children["torso"])
    assert not {"left_shoulder", "right_shoulder"} & set(children["left_arm"] + children["right_arm"])


def test_same_seed_same_order(resources):
    cs = aggregate_codes(CodeSet(paircodes=(bend("left_elbow"), bend("right_knee"), bend("left_knee"))))
    assert order_codes(cs, resources.graph, 3) == order_codes(cs, resources.graph, 3)


def test_unmapped_subject_is_structural(resources):
    cs = AggregatedCodeSet(items=aggregate_codes(CodeSet(paircodes=(bend("left_elbow"),))).items)
    with pytest.raises(StructuralError):
        order_codes(cs, parse_graph("body -> torso"), 0)


@pytest.mark.parametrize("text", ["", "body -> a\na -> body", "body -> a\nc -> d", "body a"])
def test_bad_graphs_are_structural(text):
    with pytest.raises(StructuralError):
        parse_graph(text)


def test_build_plan_of_nothing_is_empty(resources):
    plan = build_plan(CodeSet(), resources.graph, 0)
    assert plan.items == ()
    assert canonical_codes(plan) == []


# ===== whole pipeline on random pairs =====
def pair_codes(resources, pair) -> CodeSet:
    skel = resources.skeleton
    (a, yaw_a), (b, yaw_b) = (normalize_orientation(p, skel) for p in pair)
    kps_a, kps_b = forward_kinematics(a, skel), forward_kinematics(b, skel)
    return apply_superpaircode_rules(
        compute_paircodes(kps_a, kps_b, skel),
        compute_posecodes(kps_a, skel),
        compute_posecodes(kps_b, skel),
        None,
        resources.rules,
        orientation=orientation_change_code(yaw_a, yaw_b, PairKind.IS),
    )


def source_codes(cs: CodeSet) -> Counter:
    codes = [canonical_paircode(c) for c in cs.paircodes]
    codes += [canonical_super(c) for c in cs.super_paircodes]
    codes += [canonical_statement(c) for c in cs.b_statements]
    if cs.orientation is not None:
        codes.append(canonical_orientation(cs.orientation))
    return Counter(codes)


def subtree(graph, node: str) -> Set[str]:
    nodes = {node}
    for child in graph.children.get(node, ()):
        nodes |= subtree(graph, child)
    return nodes


@given(pose_pairs(spread=0.8), st.integers(0, 2**32 - 1))
def test_plans_only_use_codes_of_the_pair(resources, pair, seed):
    cs = pair_codes(resources, pair)
    plan = build_plan(cs, resources.graph, seed)
    assert not Counter(canonical_codes(plan)) - source_codes(cs)
    selected = select_codes(cs, resources.thresholds.default_cap)
    assert canonical_codes(aggregate_codes(selected)) == canonical_codes(plan)


@given(pose_pairs(spread=0.8), st.integers(0, 2**32 - 1))
def test_plans_keep_body_parts_together(resources, pair, seed):
    graph = resources.graph
    plan = build_plan(pair_codes(resources, pair), graph, seed)
    visit = {node: i for i, node in enumerate(walk_graph(graph, make_rng(stage_seed(seed, "order"))))}
    ranks = [visit[item.subject] for item in plan.items]
    assert ranks == sorted(ranks)
    for node in graph.nodes:
        inside = [i for i, item in enumerate(plan.items) if item.subject in subtree(graph, node)]
        if inside:
            assert inside == list(range(inside[0], inside[-1] + 1)), node
