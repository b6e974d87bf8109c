"""Classified changes between pose A and pose B.

Paircodes are computed slot by slot on two orientation-normalized keypoint
sets. Super-paircode rules then combine paircodes with posecode conditions
(or gate them), and rare pose-B posecodes are promoted to b-statements.
"""
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from errors import StructuralError
from posecodes import (
    ANGLE_JOINTS,
    BINS,
    INVENTORY as POSECODE_INVENTORY,
    SLOT_INDEX as POSECODE_SLOT_INDEX,
    frequency,
    is_rare,
    joint_angle,
    subject_joint,
    subject_joints,
)
from schemas import (
    CodeSet,
    FrequencyTable,
    OrientationCode,
    PairKind,
    Paircode,
    Posecode,
    PosecodeSet,
    SkeletonDef,
    SuperPaircode,
    Thresholds,
)
from skeleton import KeypointSet, wrap_angle

logger = logging.getLogger(__name__)

PairSlot = Tuple[str, Tuple[str, ...], Optional[str]]

DISPLACEMENT_SUBJECTS = (
    "left_hand", "right_hand",
    "left_elbow", "right_elbow",
    "left_knee", "right_knee",
    "left_foot", "right_foot",
)
AXIS_INDEX = {"x": 0, "y": 1, "z": 2}
# (positive, negative) direction per axis; +x is the subject's left
AXIS_DIRECTIONS = {"x": ("left", "right"), "y": ("up", "down"), "z": ("front", "back")}
DIRECTION_AXIS = {d: axis for axis, pair in AXIS_DIRECTIONS.items() for d in pair}

REVERSE = {
    "bend": "straighten", "straighten": "bend",
    "closer": "farther", "farther": "closer",
    "left": "right", "right": "left",
    "up": "down", "down": "up",
    "front": "back", "back": "front",
}


def _build_inventory() -> Tuple[PairSlot, ...]:
    slots: List[PairSlot] = [("angle_change", (name,), None) for name in ANGLE_JOINTS]
    slots += [("distance_change", subjects, None) for category, subjects in POSECODE_INVENTORY if category == "distance"]
    for subject in DISPLACEMENT_SUBJECTS:
        for axis in ("x", "y", "z"):
            slots.append(("displacement", (subject,), axis))
    return tuple(slots)


INVENTORY: Tuple[PairSlot, ...] = _build_inventory()
SLOT_INDEX: Dict[PairSlot, int] = {slot: i for i, slot in enumerate(INVENTORY)}


def paircode_slot(code: Paircode) -> PairSlot:
    return (code.kind, code.subjects, code.axis)


def mirror_direction(direction: str) -> str:
    """Direction seen in the mirror across x=0: only left and right swap."""
    if direction in ("left", "right"):
        return REVERSE[direction]
    return direction


def _magnitude(value: float, moderate: float, significant: float) -> str:
    if value >= significant:
        return "significant"
    if value >= moderate:
        return "moderate"
    return "slight"


def _slot_delta(slot: PairSlot, kps_a: KeypointSet, kps_b: KeypointSet, skel: SkeletonDef) -> float:
    kind, subjects, axis = slot
    a, b = kps_a.positions, kps_b.positions
    if kind == "angle_change":
        idx = [skel.index(subject_joint(s)) for s in ANGLE_JOINTS[subjects[0]]]
        return joint_angle(b, *idx) - joint_angle(a, *idx)
    if kind == "distance_change":
        i, j = (skel.index(n) for n in subject_joints(subjects))
        return (float(np.linalg.norm(b[i] - b[j])) - float(np.linalg.norm(a[i] - a[j]))) / skel.height
    i = skel.index(subject_joint(subjects[0]))
    k = AXIS_INDEX[axis or "x"]
    return float(b[i, k] - a[i, k]) / skel.height


def slot_delta(slot: PairSlot, kps_a: KeypointSet, kps_b: KeypointSet, skel: SkeletonDef) -> float:
    """Signed change of one paircode slot from A to B (degrees or fraction of H)."""
    if kps_a.positions.shape != kps_b.positions.shape or kps_a.positions.shape[0] != len(skel.joints):
        raise StructuralError("Keypoint sets do not match the skeleton")
    return _slot_delta(slot, kps_a, kps_b, skel)


def direction_of(kind: str, axis: Optional[str], delta: float) -> str:
    if kind == "angle_change":
        return "straighten" if delta > 0 else "bend"
    if kind == "distance_change":
        return "closer" if delta < 0 else "farther"
    positive, negative = AXIS_DIRECTIONS[axis or "x"]
    return positive if delta > 0 else negative


def compute_paircodes(
    kps_a: KeypointSet, kps_b: KeypointSet, skel: SkeletonDef, thresholds: Optional[Thresholds] = None
) -> List[Paircode]:
    """Paircodes for every slot whose change reaches its significance threshold.

    Raises:
        StructuralError: the keypoint sets do not match the skeleton.
    """
    t = thresholds or Thresholds()
    if kps_a.positions.shape != kps_b.positions.shape or kps_a.positions.shape[0] != len(skel.joints):
        raise StructuralError("Keypoint sets do not match the skeleton")

    codes: List[Paircode] = []
    for slot in INVENTORY:
        kind, subjects, axis = slot
        delta = _slot_delta(slot, kps_a, kps_b, skel)
        if kind == "angle_change":
            minimum, moderate, significant = t.angle_change_min, t.angle_change_moderate, t.angle_change_significant
        else:
            minimum, moderate, significant = (
                t.distance_change_min, t.distance_change_moderate, t.distance_change_significant
            )
        if abs(delta) < minimum:
            continue
        codes.append(Paircode(
            kind=kind,
            subjects=subjects,
            direction=direction_of(kind, axis, delta),
            magnitude=_magnitude(abs(delta), moderate, significant),
            axis=axis,
            raw_delta=delta,
        ))
    return codes


def orientation_change_code(
    yaw_a: float, yaw_b: float, pair_kind: PairKind, thresholds: Optional[Thresholds] = None
) -> Optional[OrientationCode]:
    """Turn instruction for in-sequence pairs whose facing changed enough.

    A positive yaw change is counterclockwise seen from above, which turns
    the body to its left.
    """
    if pair_kind != PairKind.IS:
        return None
    t = thresholds or Thresholds()
    delta = wrap_angle(yaw_b - yaw_a)
    degrees = math.degrees(abs(delta))
    if degrees <= t.orientation_min:
        return None
    if degrees >= t.orientation_half:
        magnitude = "half"
    elif degrees >= t.orientation_quarter:
        magnitude = "quarter"
    else:
        magnitude = "slight"
    return OrientationCode(direction="left" if delta > 0 else "right", magnitude=magnitude, raw_yaw_delta=delta)


# ===== Super-paircode rules =====
class RuleCondition(BaseModel):
    model_config = ConfigDict(frozen=True)

    source: str  # "pair", "A" or "B"
    category: str
    subjects: Tuple[str, ...]
    values: Tuple[str, ...]


class SuperRule(BaseModel):
    """One way of producing (or gating) a super-paircode."""

    model_config = ConfigDict(frozen=True)

    rule_id: str
    subjects: Tuple[str, ...]
    intent: str
    effect: str
    conditions: Tuple[RuleCondition, ...]
    implies: Tuple[Tuple[str, str], ...] = ()


class RuleTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    rules: Tuple[SuperRule, ...]

    def grouped(self) -> List[Tuple[str, List[SuperRule]]]:
        """Ways grouped by rule id, in order of first appearance."""
        groups: Dict[str, List[SuperRule]] = {}
        for rule in self.rules:
            groups.setdefault(rule.rule_id, []).append(rule)
        return list(groups.items())


def _parse_condition(text: str, where: str) -> RuleCondition:
    parts = [p.strip() for p in text.split(":")]
    if len(parts) != 4 or not all(parts):
        raise StructuralError(f"{where}: malformed condition '{text}'")
    source, category, subjects, values = parts
    cond = RuleCondition(
        source=source,
        category=category,
        subjects=tuple(s.strip() for s in subjects.split("+")),
        values=tuple(v.strip() for v in values.split("|")),
    )
    if source == "pair":
        if len(cond.values) != 1:
            raise StructuralError(f"{where}: paircode condition takes a single direction")
        direction = cond.values[0]
        axis = DIRECTION_AXIS.get(direction) if category == "displacement" else None
        if (category, cond.subjects, axis) not in SLOT_INDEX:
            raise StructuralError(f"{where}: no paircode slot {category}:{subjects}:{direction}")
    elif source in ("A", "B"):
        if (category, cond.subjects) not in POSECODE_SLOT_INDEX:
            raise StructuralError(f"{where}: no posecode slot {category}:{subjects}")
        unknown = [v for v in cond.values if v not in BINS[category]]
        if unknown:
            raise StructuralError(f"{where}: unknown {category} bins {unknown}")
    else:
        raise StructuralError(f"{where}: condition source must be pair, A or B, got '{source}'")
    return cond


def parse_rules(text: str, origin: str = "<rules>") -> RuleTable:
    """Parse the declarative rule format (see data/superpaircodes.rules)."""
    rules: List[SuperRule] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{origin}:{lineno}"
        fields = [f.strip() for f in line.split("|")]
        # bins are also "|"-separated, so split off the fixed columns first
        if len(fields) < 6:
            raise StructuralError(f"{where}: expected 6 '|'-separated fields")
        rule_id, subjects, intent, effect = fields[:4]
        implies_text = fields[-1]
        conditions_text = "|".join(fields[4:-1])
        if effect not in ("combine", "gate"):
            raise StructuralError(f"{where}: effect must be combine or gate, got '{effect}'")
        conditions = tuple(_parse_condition(c.strip(), where) for c in conditions_text.split(";") if c.strip())
        if len(conditions) < 2:
            raise StructuralError(f"{where}: a rule needs at least two conditions")
        if effect == "gate" and (
            conditions[0].source != "pair" or any(c.source == "pair" for c in conditions[1:])
        ):
            raise StructuralError(f"{where}: a gate rule has one paircode condition, listed first")
        implies: List[Tuple[str, str]] = []
        for item in implies_text.split(","):
            item = item.strip()
            if not item:
                continue
            subject, _, axis = item.partition(":")
            if ("displacement", (subject.strip(),), axis.strip()) not in SLOT_INDEX:
                raise StructuralError(f"{where}: implied displacement '{item}' is not a paircode slot")
            implies.append((subject.strip(), axis.strip()))
        rules.append(SuperRule(
            rule_id=rule_id,
            subjects=tuple(s.strip() for s in subjects.split("+")),
            intent=intent,
            effect=effect,
            conditions=conditions,
            implies=tuple(implies),
        ))
    return RuleTable(rules=tuple(rules))


def load_rules(path: Path) -> RuleTable:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise StructuralError(f"Cannot read rule table {path}: {e}") from e
    table = parse_rules(text, origin=str(path))
    logger.debug("[paircodes] loaded %d rule ways from %s", len(table.rules), path)
    return table


def _find_paircode(
    cond: RuleCondition, paircodes: Sequence[Paircode], taken: Set[int]
) -> Optional[int]:
    for i, code in enumerate(paircodes):
        if i in taken:
            continue
        if code.kind == cond.category and code.subjects == cond.subjects and code.direction == cond.values[0]:
            return i
    return None


def _posecode_holds(cond: RuleCondition, by_slot: Dict[Tuple[str, Tuple[str, ...]], Posecode]) -> bool:
    code = by_slot.get((cond.category, cond.subjects))
    return code is not None and code.bin in cond.values


def apply_superpaircode_rules(
    paircodes: Sequence[Paircode],
    posecodes_a: PosecodeSet,
    posecodes_b: PosecodeSet,
    freq: Optional[FrequencyTable],
    rules: RuleTable,
    thresholds: Optional[Thresholds] = None,
    orientation: Optional[OrientationCode] = None,
) -> CodeSet:
    """Combine or gate paircodes and promote rare pose-B posecodes.

    Rules are tried in table order; a paircode consumed by one rule is not
    available to the next. Without a frequency table no b-statements are
    produced.
    """
    t = thresholds or Thresholds()
    a_slots = {(c.category, c.subjects): c for c in posecodes_a.codes}
    b_slots = {(c.category, c.subjects): c for c in posecodes_b.codes}
    sides = {"A": a_slots, "B": b_slots}

    consumed: Set[int] = set()
    dropped: Set[int] = set()
    supers: List[SuperPaircode] = []

    for rule_id, ways in rules.grouped():
        if ways[0].effect == "gate":
            target = _find_paircode(ways[0].conditions[0], paircodes, consumed | dropped)
            if target is None:
                continue
            if not any(all(_posecode_holds(c, sides[c.source]) for c in way.conditions[1:]) for way in ways):
                dropped.add(target)
            continue

        for way in ways:
            taken = consumed | dropped
            matched: List[int] = []
            supports: List[Posecode] = []
            holds = True
            for cond in way.conditions:
                if cond.source == "pair":
                    idx = _find_paircode(cond, paircodes, taken | set(matched))
                    if idx is None:
                        holds = False
                        break
                    matched.append(idx)
                elif _posecode_holds(cond, sides[cond.source]):
                    if cond.source == "B":
                        supports.append(b_slots[(cond.category, cond.subjects)])
                else:
                    holds = False
                    break
            if holds:
                consumed.update(matched)
                supers.append(SuperPaircode(
                    rule_id=rule_id,
                    subjects=way.subjects,
                    intent=way.intent,
                    consumed=tuple(paircodes[i] for i in matched),
                    supports=tuple(supports),
                    implies=way.implies,
                ))
                break

    standalone = tuple(c for i, c in enumerate(paircodes) if i not in consumed and i not in dropped)
    statements = _b_statements(posecodes_a, posecodes_b, freq, supers, t) if freq is not None else ()
    return CodeSet(paircodes=standalone, super_paircodes=tuple(supers), orientation=orientation, b_statements=statements)


def _b_statements(
    posecodes_a: PosecodeSet,
    posecodes_b: PosecodeSet,
    freq: FrequencyTable,
    supers: Sequence[SuperPaircode],
    t: Thresholds,
) -> Tuple[Posecode, ...]:
    supported = {(p.category, p.subjects) for s in supers for p in s.supports}
    candidates: List[Tuple[float, int, Posecode]] = []
    for i, (code_a, code_b) in enumerate(zip(posecodes_a.codes, posecodes_b.codes)):
        if code_a.bin == code_b.bin or (code_b.category, code_b.subjects) in supported:
            continue
        if is_rare(freq, code_b, t):
            candidates.append((frequency(freq, code_b) or 0.0, i, code_b))
    # rarest first, inventory order on ties
    kept = sorted(candidates, key=lambda c: (c[0], c[1]))[: t.max_statements]
    return tuple(code for _, _, code in sorted(kept, key=lambda c: c[1]))
