import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, field_validator


Vector3 = Tuple[float, float, float]


class PairKind(str, Enum):
    IS = "IS"
    OOS = "OOS"


class PairWay(str, Enum):
    one = "one"
    two = "two"


class Split(str, Enum):
    train = "train"
    val = "val"
    test = "test"


class LintProfile(str, Enum):
    human = "human"
    auto = "auto"


# ===== Configuration Schemas =====
class Thresholds(BaseModel):
    """Every numeric constant of the engine. Defaults mirror data/thresholds.env."""

    angle_straight: float = 150.0
    angle_slightly_bent: float = 120.0
    angle_partially_bent: float = 100.0
    angle_right_angle: float = 75.0

    distance_close: float = 0.15
    distance_wide: float = 0.35
    shoulder_width_tolerance: float = 0.20

    relpos_neutral: float = 0.05
    ground_contact: float = 0.07

    rarity: float = 0.05
    max_statements: int = 2

    angle_change_min: float = 20.0
    angle_change_moderate: float = 45.0
    angle_change_significant: float = 90.0
    distance_change_min: float = 0.08
    distance_change_moderate: float = 0.15
    distance_change_significant: float = 0.30

    orientation_min: float = 20.0
    orientation_quarter: float = 60.0
    orientation_half: float = 120.0

    keep_floor_angle: float = 20.0
    keep_floor_distance: float = 0.08
    keep_floor_displacement: float = 0.10
    default_cap: int = 7

    top_k: int = 100
    min_diff_is: int = 15
    min_diff_oos: int = 20
    max_gap: float = 0.5

    split_train: float = 0.7
    split_val: float = 0.1


# ===== Skeleton Schemas =====
class JointDef(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    parent: int
    offset: Vector3


class SkeletonDef(BaseModel):
    model_config = ConfigDict(frozen=True)

    skeleton: str
    height: float
    head_top_offset: Vector3
    joints: Tuple[JointDef, ...]

    @property
    def names(self) -> List[str]:
        return [j.name for j in self.joints]

    @property
    def parents(self) -> List[int]:
        return [j.parent for j in self.joints]

    def index(self, name: str) -> int:
        for i, joint in enumerate(self.joints):
            if joint.name == name:
                return i
        raise KeyError(name)


def canonical_rotvec(v: Vector3) -> Vector3:
    """Wrap an axis-angle vector so its magnitude lies in [0, pi].

    Vectors already in range are returned untouched.
    """
    theta = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if theta <= math.pi:
        return v
    wrapped = math.fmod(theta, 2.0 * math.pi)
    scale = wrapped / theta
    if wrapped > math.pi:
        scale = -(2.0 * math.pi - wrapped) / theta
    return (v[0] * scale, v[1] * scale, v[2] * scale)


class Pose(BaseModel):
    """Local axis-angle rotation per joint plus a separate yaw about +y."""

    model_config = ConfigDict(frozen=True)

    skeleton: str = "posefix22"
    rotations: Tuple[Vector3, ...]
    root_yaw: float = 0.0

    @field_validator("rotations")
    @classmethod
    def _canonical_rotations(cls, value: Tuple[Vector3, ...]) -> Tuple[Vector3, ...]:
        for v in value:
            if not all(math.isfinite(c) for c in v):
                raise ValueError("axis-angle rotations must be finite")
        return tuple(canonical_rotvec(v) for v in value)

    @field_validator("root_yaw")
    @classmethod
    def _finite_yaw(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("root_yaw must be finite")
        return value


class TimedPose(Pose):
    t: float


# ===== Code Schemas =====
class Posecode(BaseModel):
    model_config = ConfigDict(frozen=True)

    category: str
    subjects: Tuple[str, ...]
    bin: str


class PosecodeSet(BaseModel):
    """One posecode per inventory slot, in inventory order."""

    model_config = ConfigDict(frozen=True)

    codes: Tuple[Posecode, ...]


class FrequencyTable(BaseModel):
    corpus_size: int
    frequencies: Dict[str, Dict[str, float]]


class Paircode(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: str
    subjects: Tuple[str, ...]
    direction: str
    magnitude: str
    axis: Optional[str] = None
    raw_delta: float


class SuperPaircode(BaseModel):
    model_config = ConfigDict(frozen=True)

    rule_id: str
    subjects: Tuple[str, ...]
    intent: str
    consumed: Tuple[Paircode, ...]
    supports: Tuple[Posecode, ...] = ()
    implies: Tuple[Tuple[str, str], ...] = ()


class OrientationCode(BaseModel):
    model_config = ConfigDict(frozen=True)

    direction: str
    magnitude: str
    raw_yaw_delta: float


class CodeSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    paircodes: Tuple[Paircode, ...] = ()
    super_paircodes: Tuple[SuperPaircode, ...] = ()
    orientation: Optional[OrientationCode] = None
    b_statements: Tuple[Posecode, ...] = ()


# ===== Plan Schemas =====
class CanonicalCode(BaseModel):
    """Kind-agnostic singleton code used for round-trip comparison."""

    model_config = ConfigDict(frozen=True)

    kind: str
    subjects: Tuple[str, ...]
    direction: str
    magnitude: Optional[str] = None

    def sort_key(self) -> Tuple[str, Tuple[str, ...], str]:
        return (self.kind, self.subjects, self.direction)


class PlanItem(BaseModel):
    """One verbalizable unit: a code, or several merged into one clause."""

    model_config = ConfigDict(frozen=True)

    key: str
    kind: str
    subject: str
    reference: Optional[str] = None
    directions: Tuple[Tuple[str, Optional[str]], ...] = ()
    codes: Tuple[CanonicalCode, ...]


class AggregatedCodeSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    orientation: Optional[OrientationCode] = None
    items: Tuple[PlanItem, ...] = ()


class InstructionPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    orientation: Optional[OrientationCode] = None
    items: Tuple[PlanItem, ...] = ()
    seed: int = 0


# ===== Parser Schemas =====
class ParsedEdit(BaseModel):
    kind: str
    subjects: Tuple[str, ...]
    direction: str
    magnitude: Optional[str] = None
    span: Tuple[int, int]


class UnknownSpan(BaseModel):
    text: str
    span: Tuple[int, int]


class ParseResult(BaseModel):
    edits: List[ParsedEdit] = []
    unknown_spans: List[UnknownSpan] = []


class RoundtripReport(BaseModel):
    matched: List[CanonicalCode] = []
    missing: List[CanonicalCode] = []
    extra: List[CanonicalCode] = []
    unknown_spans: List[UnknownSpan] = []
    sign_violations: List[CanonicalCode] = []

    @property
    def ok(self) -> bool:
        return not (self.missing or self.extra or self.unknown_spans or self.sign_violations)


class LintViolation(BaseModel):
    rule: str
    message: str


# ===== Pair Schemas =====
class PairSpec(BaseModel):
    pair_id: int
    id_a: int
    id_b: int
    kind: PairKind
    way: PairWay
    diff_count: int
    time_gap: Optional[float] = None
    sequence_a: str
    sequence_b: str
    split: Optional[Split] = None


class PairsSummary(BaseModel):
    corpus: Optional[str] = None
    seed: int
    sampled: int
    pairs: int
    kinds: Dict[str, int] = {}
    ways: Dict[str, int] = {}
    splits: Dict[str, int] = {}
    rejections: Dict[str, int] = {}
    cross_split_dropped: int = 0


# ===== Dataset Schemas =====
class PairDescription(BaseModel):
    text: str
    codes: CodeSet
    plan: InstructionPlan


class TripletRecord(BaseModel):
    pair_id: int
    posecopy: bool = False
    source_pair_id: Optional[int] = None
    kind: PairKind
    way: PairWay
    split: Optional[Split] = None
    pose_a: Pose
    pose_b: Pose
    text: str
    seed: int
    codes: Optional[CodeSet] = None
    plan_codes: List[CanonicalCode] = []
    lint: List[LintViolation] = []
    error: Optional[str] = None


class DatasetManifest(BaseModel):
    version: str
    global_seed: int
    cap: int
    posecopy: float = 0.0
    thresholds: Thresholds
    hashes: Dict[str, str]
    records: int
    errors: int
    empty_texts: int
    kinds: Dict[str, int] = {}
    ways: Dict[str, int] = {}
    splits: Dict[str, int] = {}


class MalformedLine(BaseModel):
    line: int
    error: str


class StatsReport(BaseModel):
    records: int = 0
    word_histogram: Dict[int, int] = {}
    mean_words: float = 0.0
    vocabulary_size: int = 0
    mean_body_parts: float = 0.0
    empty_rate: float = 0.0
    errors: int = 0
    kinds: Dict[str, int] = {}
    ways: Dict[str, int] = {}
    splits: Dict[str, int] = {}
    malformed: List[MalformedLine] = []


class AuditReport(BaseModel):
    records: int = 0
    text_mismatches: List[int] = []
    roundtrip_failures: List[int] = []
    direction_failures: List[int] = []
    skipped: int = 0

    @property
    def ok(self) -> bool:
        return not (self.text_mismatches or self.roundtrip_failures or self.direction_failures)


# ===== Corpus Schemas =====
class PoseSequence(BaseModel):
    sequence_id: str
    framerate: Optional[float] = None
    poses: Tuple[TimedPose, ...]


class PairViolation(BaseModel):
    pair_id: Optional[int] = None
    rule: str
    message: str


class SplitAssignment(BaseModel):
    sequences: Dict[str, Split]
    pairs: List[PairSpec]
    dropped: int = 0

    def members(self, split: Split) -> List[str]:
        return sorted(seq for seq, s in self.sequences.items() if s == split)


# ===== API Schemas =====
class DescribeRequest(BaseModel):
    pose_a: Pose
    pose_b: Pose
    pair_kind: PairKind = PairKind.OOS
    seed: int = 0
    cap: Optional[int] = None


class DescribeResponse(BaseModel):
    text: str
    codes: CodeSet
    plan: List[CanonicalCode]


class PosePairRequest(BaseModel):
    pose_a: Pose
    pose_b: Pose


class NormalizedPose(BaseModel):
    pose: Pose
    yaw: float


class PoseMetrics(BaseModel):
    mpje_mm: float
    geodesic_deg: float


class TextRequest(BaseModel):
    text: str


class LintRequest(BaseModel):
    text: str
    profile: LintProfile = LintProfile.human


class ParseResponse(BaseModel):
    codes: List[CanonicalCode]
    edits: List[ParsedEdit]
    unknown_spans: List[UnknownSpan]
