"""Classified low-level properties of a single pose.

Each posecode slot is a (category, subjects) pair with exactly one bin per
pose. Subjects are body-part names; hands and feet are measured at the
wrist and ankle joints.
"""
import logging
from collections import Counter
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import CorpusError, StructuralError
from schemas import FrequencyTable, Posecode, PosecodeSet, SkeletonDef, Thresholds
from skeleton import FloatArray, KeypointSet, shoulder_span

logger = logging.getLogger(__name__)

Slot = Tuple[str, Tuple[str, ...]]

SUBJECT_JOINTS: Dict[str, str] = {
    "left_hand": "left_wrist",
    "right_hand": "right_wrist",
    "left_foot": "left_ankle",
    "right_foot": "right_ankle",
}

# single-subject plurals standing for a left/right pair
PLURAL_SUBJECTS: Dict[str, Tuple[str, str]] = {
    "hands": ("left_hand", "right_hand"),
    "feet": ("left_foot", "right_foot"),
    "knees": ("left_knee", "right_knee"),
}

# interior angle at the middle joint
ANGLE_JOINTS: Dict[str, Tuple[str, str, str]] = {
    "left_elbow": ("left_shoulder", "left_elbow", "left_hand"),
    "right_elbow": ("right_shoulder", "right_elbow", "right_hand"),
    "left_knee": ("left_hip", "left_knee", "left_foot"),
    "right_knee": ("right_hip", "right_knee", "right_foot"),
}

BINS: Dict[str, Tuple[str, ...]] = {
    "angle": ("straight", "slightly_bent", "partially_bent", "right_angle", "bent"),
    "distance": ("close", "shoulder_width", "normal", "wide"),
    "relpos_x": ("negative", "neutral", "positive"),
    "relpos_y": ("negative", "neutral", "positive"),
    "relpos_z": ("negative", "neutral", "positive"),
    "ground_contact": ("on_ground", "off_ground"),
}

AXES = {"relpos_x": 0, "relpos_y": 1, "relpos_z": 2}

_SIDES = ("left", "right")
_DISTANCE_PAIRS = ("shoulder", "hip", "knee")
_RELPOS_PAIRS = (
    ("elbow", "shoulder"),
    ("hand", "shoulder"),
    ("hand", "elbow"),
    ("hand", "hip"),
    ("knee", "hip"),
    ("foot", "hip"),
    ("foot", "knee"),
)


def _build_inventory() -> Tuple[Slot, ...]:
    slots: List[Slot] = [("angle", (name,)) for name in ANGLE_JOINTS]

    slots.append(("distance", ("hands",)))
    for side in _SIDES:
        for ref in _DISTANCE_PAIRS:
            slots.append(("distance", (f"{side}_hand", f"{side}_{ref}")))
    for side in _SIDES:
        slots.append(("distance", (f"{side}_hand", "head")))
    slots.append(("distance", ("feet",)))
    slots.append(("distance", ("knees",)))

    for category in ("relpos_x", "relpos_y", "relpos_z"):
        for side in _SIDES:
            for subject, ref in _RELPOS_PAIRS:
                slots.append((category, (f"{side}_{subject}", f"{side}_{ref}")))

    for part in ("foot", "knee"):
        for side in _SIDES:
            slots.append(("ground_contact", (f"{side}_{part}",)))
    return tuple(slots)


INVENTORY: Tuple[Slot, ...] = _build_inventory()
SLOT_INDEX: Dict[Slot, int] = {slot: i for i, slot in enumerate(INVENTORY)}


def slot_key(category: str, subjects: Sequence[str]) -> str:
    """String form of a slot, used by the frequency table and the rule file."""
    return f"{category}:{'+'.join(subjects)}"


def subject_joint(subject: str) -> str:
    return SUBJECT_JOINTS.get(subject, subject)


def subject_joints(subjects: Sequence[str]) -> Tuple[str, ...]:
    """Joints measured for a slot's subjects, expanding plurals."""
    if len(subjects) == 1 and subjects[0] in PLURAL_SUBJECTS:
        subjects = PLURAL_SUBJECTS[subjects[0]]
    return tuple(subject_joint(s) for s in subjects)


def joint_angle(positions: FloatArray, a: int, b: int, c: int) -> float:
    """Interior angle at joint b, in degrees."""
    u = positions[a] - positions[b]
    v = positions[c] - positions[b]
    norm = float(np.linalg.norm(u) * np.linalg.norm(v))
    if norm == 0.0:
        return 180.0
    cosine = float(np.clip(np.dot(u, v) / norm, -1.0, 1.0))
    return float(np.degrees(np.arccos(cosine)))


@lru_cache(maxsize=8)
def _slot_indices(skel: SkeletonDef) -> Tuple[Tuple[int, ...], ...]:
    out: List[Tuple[int, ...]] = []
    for category, subjects in INVENTORY:
        if category == "angle":
            names = tuple(subject_joint(s) for s in ANGLE_JOINTS[subjects[0]])
        else:
            names = subject_joints(subjects)
        try:
            out.append(tuple(skel.index(n) for n in names))
        except KeyError as e:
            raise StructuralError(f"Skeleton '{skel.skeleton}' has no joint {e} needed by posecodes") from e
    return tuple(out)


def slot_measures(kps: KeypointSet, skel: SkeletonDef) -> List[float]:
    """Raw measurement per inventory slot.

    Angles in degrees; distances, relative positions and heights as
    fractions of the skeleton height.
    """
    positions = kps.positions
    if positions.shape[0] != len(skel.joints):
        raise StructuralError("Keypoint set does not match the skeleton")
    height = skel.height
    floor = float(positions[:, 1].min())
    values: List[float] = []
    for (category, _), idx in zip(INVENTORY, _slot_indices(skel)):
        if category == "angle":
            values.append(joint_angle(positions, idx[0], idx[1], idx[2]))
        elif category == "distance":
            values.append(float(np.linalg.norm(positions[idx[0]] - positions[idx[1]])) / height)
        elif category == "ground_contact":
            values.append((float(positions[idx[0], 1]) - floor) / height)
        else:
            axis = AXES[category]
            values.append(float(positions[idx[0], axis] - positions[idx[1], axis]) / height)
    return values


def classify(category: str, value: float, skel: SkeletonDef, thresholds: Thresholds) -> str:
    """Bin one slot measurement (see slot_measures for units)."""
    t = thresholds
    if category == "angle":
        if value >= t.angle_straight:
            return "straight"
        if value >= t.angle_slightly_bent:
            return "slightly_bent"
        if value >= t.angle_partially_bent:
            return "partially_bent"
        if value >= t.angle_right_angle:
            return "right_angle"
        return "bent"
    if category == "distance":
        span = shoulder_span(skel) / skel.height
        if value <= t.distance_close:
            return "close"
        if abs(value - span) <= t.shoulder_width_tolerance * span:
            return "shoulder_width"
        if value > t.distance_wide:
            return "wide"
        return "normal"
    if category == "ground_contact":
        return "on_ground" if value < t.ground_contact else "off_ground"
    if value > t.relpos_neutral:
        return "positive"
    if value < -t.relpos_neutral:
        return "negative"
    return "neutral"


def compute_posecodes(
    kps: KeypointSet, skel: SkeletonDef, thresholds: Optional[Thresholds] = None
) -> PosecodeSet:
    """Classify every inventory slot of one orientation-normalized pose."""
    t = thresholds or Thresholds()
    codes = tuple(
        Posecode(category=category, subjects=subjects, bin=classify(category, value, skel, t))
        for (category, subjects), value in zip(INVENTORY, slot_measures(kps, skel))
    )
    return PosecodeSet(codes=codes)


def _check_same_inventory(a: PosecodeSet, b: PosecodeSet) -> None:
    if len(a.codes) != len(b.codes) or any(
        x.category != y.category or x.subjects != y.subjects for x, y in zip(a.codes, b.codes)
    ):
        raise StructuralError("Posecode sets do not share the same slot inventory")


def count_differences(a: PosecodeSet, b: PosecodeSet) -> int:
    """Number of slots whose bins differ.

    Raises:
        StructuralError: the two sets do not cover the same slots.
    """
    _check_same_inventory(a, b)
    return sum(1 for x, y in zip(a.codes, b.codes) if x.bin != y.bin)


def tabulate_frequencies(sets: Iterable[PosecodeSet]) -> FrequencyTable:
    """Per-slot bin frequencies over already computed posecode sets."""
    counts: Dict[str, Counter[str]] = {}
    size = 0
    for pcs in sets:
        size += 1
        for code in pcs.codes:
            counts.setdefault(slot_key(code.category, code.subjects), Counter())[code.bin] += 1
    if size == 0:
        raise CorpusError("Cannot build a frequency table from an empty corpus")

    frequencies: Dict[str, Dict[str, float]] = {}
    for category, subjects in INVENTORY:
        key = slot_key(category, subjects)
        slot_counts = counts.get(key, Counter())
        frequencies[key] = {b: slot_counts[b] / size for b in BINS[category]}
    logger.info("[posecodes] frequency table built over %d poses", size)
    return FrequencyTable(corpus_size=size, frequencies=frequencies)


def build_frequency_table(
    corpus: Sequence[KeypointSet], skel: SkeletonDef, thresholds: Optional[Thresholds] = None
) -> FrequencyTable:
    """Empirical bin frequencies of a reference pose corpus.

    Raises:
        CorpusError: the corpus is empty.
    """
    if not corpus:
        raise CorpusError("Cannot build a frequency table from an empty corpus")
    return tabulate_frequencies(compute_posecodes(kps, skel, thresholds) for kps in corpus)


def frequency(freq: FrequencyTable, code: Posecode) -> Optional[float]:
    slot = freq.frequencies.get(slot_key(code.category, code.subjects))
    if slot is None:
        return None
    return slot.get(code.bin)


def is_rare(freq: FrequencyTable, code: Posecode, thresholds: Optional[Thresholds] = None) -> bool:
    """True when the code's bin is seen in less than the rarity share of the corpus."""
    t = thresholds or Thresholds()
    value = frequency(freq, code)
    return value is not None and value < t.rarity


@lru_cache(maxsize=1)
def _one_hot_offsets() -> Tuple[Tuple[int, ...], int]:
    offsets: List[int] = []
    total = 0
    for category, _ in INVENTORY:
        offsets.append(total)
        total += len(BINS[category])
    return tuple(offsets), total


def one_hot(pcs: PosecodeSet) -> FloatArray:
    """Concatenated one-hot encoding of every slot's bin."""
    offsets, total = _one_hot_offsets()
    vector = np.zeros(total, dtype=np.float64)
    for offset, code in zip(offsets, pcs.codes):
        vector[offset + BINS[code.category].index(code.bin)] = 1.0
    return vector
