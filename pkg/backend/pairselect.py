"""Corpus loading, farthest-point sampling and pose-pair construction.

A corpus is a directory of ``<sequence_id>.jsonl`` files, one timed pose
per line. An optional first line ``{"framerate": F}`` lets later lines
omit ``t``; frame i then sits at i / F seconds.
"""
import json
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, PrivateAttr, ValidationError
from tqdm import tqdm

from errors import CorpusError
from pipeline import make_rng
from posecodes import INVENTORY, compute_posecodes, one_hot
from schemas import (
    PairKind,
    PairSpec,
    PairViolation,
    PairWay,
    PosecodeSet,
    PoseSequence,
    SkeletonDef,
    Split,
    SplitAssignment,
    Thresholds,
    TimedPose,
)
from skeleton import FloatArray, forward_kinematics, normalize_orientation

logger = logging.getLogger(__name__)


# ===== Corpus =====
class PoseCorpus(BaseModel):
    model_config = ConfigDict(frozen=True)

    sequences: Tuple[PoseSequence, ...]
    _index: List[Tuple[int, int]] = PrivateAttr(default_factory=list)

    def model_post_init(self, __context: object) -> None:
        self._index = [(s, f) for s, seq in enumerate(self.sequences) for f in range(len(seq.poses))]

    def __len__(self) -> int:
        return len(self._index)

    def pose(self, i: int) -> TimedPose:
        s, f = self._index[i]
        return self.sequences[s].poses[f]

    def sequence_id(self, i: int) -> str:
        return self.sequences[self._index[i][0]].sequence_id

    def time(self, i: int) -> float:
        return self.pose(i).t


def _check_sequence(seq: PoseSequence) -> None:
    times = [p.t for p in seq.poses]
    for prev, cur in zip(times, times[1:]):
        if cur <= prev:
            raise CorpusError(f"Sequence '{seq.sequence_id}': timestamps must increase ({prev} then {cur})")


def read_sequence(path: Path) -> PoseSequence:
    framerate: Optional[float] = None
    poses: List[TimedPose] = []
    lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    for lineno, line in enumerate(lines, start=1):
        try:
            payload = json.loads(line)
            if lineno == 1 and isinstance(payload, dict) and "rotations" not in payload and "framerate" in payload:
                framerate = float(payload["framerate"])
                continue
            if isinstance(payload, dict) and "t" not in payload:
                if framerate is None:
                    raise ValueError("pose has no 't' and the file declares no framerate")
                payload["t"] = len(poses) / framerate
            poses.append(TimedPose.model_validate(payload))
        except (ValueError, ValidationError) as e:
            raise CorpusError(f"{path}:{lineno}: {e}") from e
    seq = PoseSequence(sequence_id=Path(path).stem, framerate=framerate, poses=tuple(poses))
    _check_sequence(seq)
    return seq


def load_corpus(directory: Path) -> PoseCorpus:
    """Read every sequence file of a corpus directory, sorted by sequence id.

    Raises:
        CorpusError: missing directory, no poses, malformed line or
            non-increasing timestamps.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"Corpus directory {directory} does not exist")
    sequences = [read_sequence(p) for p in sorted(directory.glob("*.jsonl"))]
    corpus = PoseCorpus(sequences=[s for s in sequences if s.poses])
    if len(corpus) == 0:
        raise CorpusError(f"Corpus {directory} holds no poses")
    logger.info("[pairselect] loaded %d poses in %d sequences from %s", len(corpus), len(corpus.sequences), directory)
    return corpus


def write_sequence(path: Path, seq: PoseSequence) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        if seq.framerate is not None:
            f.write(json.dumps({"framerate": seq.framerate}) + "\n")
        for pose in seq.poses:
            f.write(pose.model_dump_json() + "\n")


# ===== Features =====
class CorpusFeatures(BaseModel):
    """Orientation-normalized keypoints and posecodes of every corpus pose."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    keypoints: FloatArray  # (n, joints, 3)
    posecodes: Tuple[PosecodeSet, ...]
    one_hot: FloatArray  # (n, bins)


def compute_features(
    corpus: PoseCorpus,
    skel: SkeletonDef,
    thresholds: Optional[Thresholds] = None,
    progress: bool = False,
) -> CorpusFeatures:
    keypoints: List[FloatArray] = []
    codes: List[PosecodeSet] = []
    for i in tqdm(range(len(corpus)), desc="features", disable=not progress):
        normalized, _ = normalize_orientation(corpus.pose(i), skel)
        kps = forward_kinematics(normalized, skel)
        keypoints.append(kps.positions)
        codes.append(compute_posecodes(kps, skel, thresholds))
    return CorpusFeatures(
        keypoints=np.stack(keypoints),
        posecodes=tuple(codes),
        one_hot=np.stack([one_hot(c) for c in codes]),
    )


def differences(features: CorpusFeatures, a: int, b: int) -> int:
    """Posecode differences between two corpus poses (one-hot overlap)."""
    same = int(round(float(features.one_hot[a] @ features.one_hot[b])))
    return len(INVENTORY) - same


# ===== Farthest-point sampling =====
def _mpje_to(points: FloatArray, i: int) -> FloatArray:
    return np.linalg.norm(points - points[i], axis=-1).mean(axis=-1) * 1000.0


def farthest_point_sample(points: FloatArray, k: int, seed: int, start: Optional[int] = None) -> List[int]:
    """Greedy max-min selection under MPJE.

    Args:
        points: (n, joints, 3) normalized keypoints.
        k: number of indices to select.
        seed: draws the start index when ``start`` is not given.

    Raises:
        CorpusError: k is larger than the number of points.
    """
    n = points.shape[0]
    if k > n:
        raise CorpusError(f"Cannot sample {k} poses from a corpus of {n}")
    if k <= 0:
        return []
    first = int(make_rng(seed).integers(n)) if start is None else start
    selected = [first]
    nearest = _mpje_to(points, first)
    nearest[first] = -np.inf
    while len(selected) < k:
        # argmax returns the lowest index on ties
        chosen = int(np.argmax(nearest))
        selected.append(chosen)
        nearest = np.minimum(nearest, _mpje_to(points, chosen))
        nearest[selected] = -np.inf
    return selected


# ===== Pair construction =====
def rank_candidates(features: CorpusFeatures, sampled: Sequence[int], b: int, top_k: int) -> List[int]:
    """B's most similar sampled poses: cosine of one-hot posecodes, then MPJE, then index."""
    others = np.array([i for i in sampled if i != b], dtype=np.int64)
    if others.size == 0:
        return []
    vectors = features.one_hot[others]
    target = features.one_hot[b]
    cosine = (vectors @ target) / (np.linalg.norm(vectors, axis=1) * np.linalg.norm(target))
    mpje = np.linalg.norm(features.keypoints[others] - features.keypoints[b], axis=-1).mean(axis=-1)
    order = np.lexsort((others, mpje, -cosine))
    return [int(i) for i in others[order][:top_k]]


def _ranks(
    features: CorpusFeatures, sampled: Sequence[int], top_k: int, jobs: int, progress: bool
) -> List[List[int]]:
    def rank(b: int) -> List[int]:
        return rank_candidates(features, sampled, b, top_k)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(tqdm(pool.map(rank, sampled), total=len(sampled), desc="ranking", disable=not progress))


def build_pairs(
    corpus: PoseCorpus,
    features: CorpusFeatures,
    sampled: Sequence[int],
    thresholds: Optional[Thresholds] = None,
    jobs: int = 1,
    progress: bool = False,
) -> Tuple[List[PairSpec], Dict[str, int]]:
    """In-sequence pairs first, then one out-of-sequence partner per B.

    An out-of-sequence pair A -> B also emits B -> A (both two-way) when A
    appears in no earlier pair and B is not already the A side of a
    two-way pair.

    Returns:
        The pairs, numbered in emission order, and rejection counts by reason.
    """
    t = thresholds or Thresholds()
    ranks = _ranks(features, sampled, t.top_k, jobs, progress)
    rejections: Counter[str] = Counter()
    pairs: List[PairSpec] = []
    emitted: Set[Tuple[int, int]] = set()
    involved: Set[int] = set()
    two_way_a: Set[int] = set()

    def emit(a: int, b: int, kind: PairKind, diff: int, way: PairWay = PairWay.one) -> PairSpec:
        spec = PairSpec(
            pair_id=len(pairs),
            id_a=a,
            id_b=b,
            kind=kind,
            way=way,
            diff_count=diff,
            time_gap=corpus.time(b) - corpus.time(a) if kind == PairKind.IS else None,
            sequence_a=corpus.sequence_id(a),
            sequence_b=corpus.sequence_id(b),
        )
        pairs.append(spec)
        emitted.add((a, b))
        involved.update((a, b))
        return spec

    for b, ranked in zip(sampled, ranks):
        for a in ranked:
            if corpus.sequence_id(a) != corpus.sequence_id(b):
                continue
            if corpus.time(a) >= corpus.time(b):
                rejections["is_order"] += 1
            elif corpus.time(b) - corpus.time(a) > t.max_gap:
                rejections["is_time_gap"] += 1
            elif differences(features, a, b) < t.min_diff_is:
                rejections["is_min_diff"] += 1
            else:
                emit(a, b, PairKind.IS, differences(features, a, b))

    for b, ranked in zip(sampled, ranks):
        partner: Optional[int] = None
        for a in ranked:
            if corpus.sequence_id(a) == corpus.sequence_id(b):
                continue
            if differences(features, a, b) < t.min_diff_oos:
                rejections["oos_min_diff"] += 1
            elif (a, b) in emitted:
                rejections["duplicate"] += 1
            else:
                partner = a
                break
        if partner is None:
            rejections["no_partner"] += 1
            continue
        a = partner
        reverse_ok = a not in involved and b not in two_way_a and (b, a) not in emitted
        diff = differences(features, a, b)
        forward = emit(a, b, PairKind.OOS, diff)
        if reverse_ok:
            pairs[forward.pair_id] = forward.model_copy(update={"way": PairWay.two})
            emit(b, a, PairKind.OOS, diff, PairWay.two)
            two_way_a.update((a, b))

    logger.info("[pairselect] %d pairs from %d sampled poses, rejections %s", len(pairs), len(sampled), dict(rejections))
    return pairs, dict(rejections)


# ===== Splits =====
def split_dataset(
    pairs: Sequence[PairSpec], corpus: PoseCorpus, seed: int, thresholds: Optional[Thresholds] = None
) -> SplitAssignment:
    """Partition sequences by pose count, then keep pairs whose sequences share a split."""
    t = thresholds or Thresholds()
    ids = sorted(seq.sequence_id for seq in corpus.sequences)
    sizes = {seq.sequence_id: len(seq.poses) for seq in corpus.sequences}
    total = sum(sizes.values())
    train_end = Fraction(str(t.split_train)) * total
    val_end = Fraction(str(t.split_train)) * total + Fraction(str(t.split_val)) * total

    assignment: Dict[str, Split] = {}
    before = 0
    for position in make_rng(seed).permutation(len(ids)):
        seq_id = ids[int(position)]
        if before < train_end:
            assignment[seq_id] = Split.train
        elif before < val_end:
            assignment[seq_id] = Split.val
        else:
            assignment[seq_id] = Split.test
        before += sizes[seq_id]

    kept: List[PairSpec] = []
    dropped = 0
    for pair in pairs:
        split_a, split_b = assignment[pair.sequence_a], assignment[pair.sequence_b]
        if split_a != split_b:
            dropped += 1
            continue
        kept.append(pair.model_copy(update={"split": split_a}))
    return SplitAssignment(sequences=assignment, pairs=kept, dropped=dropped)


# ===== Files and validation =====
def write_pairs(path: Path, pairs: Iterable[PairSpec]) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for pair in pairs:
            f.write(pair.model_dump_json() + "\n")


def read_pairs(path: Path) -> List[PairSpec]:
    pairs: List[PairSpec] = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CorpusError(f"Cannot read pairs file {path}: {e}") from e
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            pairs.append(PairSpec.model_validate_json(line))
        except ValidationError as e:
            raise CorpusError(f"{path}:{lineno}: {e}") from e
    return pairs


def validate_pairs(
    pairs: Sequence[PairSpec],
    corpus: PoseCorpus,
    features: CorpusFeatures,
    thresholds: Optional[Thresholds] = None,
    sampled: Optional[Sequence[int]] = None,
) -> List[PairViolation]:
    """Re-check every pair invariant independently of build_pairs.

    With ``sampled`` the top-k window is checked as well.
    """
    t = thresholds or Thresholds()
    violations: List[PairViolation] = []

    def fail(pair: Optional[PairSpec], rule: str, message: str) -> None:
        violations.append(PairViolation(pair_id=pair.pair_id if pair else None, rule=rule, message=message))

    by_ends: Dict[Tuple[int, int], PairSpec] = {}
    two_way_sides: Counter[int] = Counter()
    split_of: Dict[str, Split] = {}
    windows: Dict[int, Set[int]] = {}
    n = len(corpus)

    for pair in pairs:
        a, b = pair.id_a, pair.id_b
        if not (0 <= a < n and 0 <= b < n) or a == b:
            fail(pair, "index", f"indices ({a}, {b}) are not two distinct corpus poses")
            continue
        if (a, b) in by_ends:
            fail(pair, "duplicate", f"pair ({a}, {b}) already listed as {by_ends[(a, b)].pair_id}")
        by_ends[(a, b)] = pair
        if (pair.sequence_a, pair.sequence_b) != (corpus.sequence_id(a), corpus.sequence_id(b)):
            fail(pair, "sequence", "sequence ids do not match the corpus")

        diff = differences(features, a, b)
        if diff != pair.diff_count:
            fail(pair, "diff_count", f"recorded {pair.diff_count} differences, recomputed {diff}")
        if pair.kind == PairKind.IS:
            gap = corpus.time(b) - corpus.time(a)
            if pair.time_gap is None or not math.isclose(pair.time_gap, gap, abs_tol=1e-6):
                fail(pair, "time_gap", f"recorded time gap {pair.time_gap}, the poses are {gap:.3f}s apart")
            if corpus.sequence_id(a) != corpus.sequence_id(b):
                fail(pair, "is_sequence", "in-sequence pair spans two sequences")
            elif gap <= 0:
                fail(pair, "is_order", "pose A is not earlier than pose B")
            elif gap > t.max_gap:
                fail(pair, "is_time_gap", f"time gap {gap:.3f}s exceeds {t.max_gap}s")
            if diff < t.min_diff_is:
                fail(pair, "is_min_diff", f"{diff} differences, at least {t.min_diff_is} required")
            if pair.way == PairWay.two:
                fail(pair, "two_way_is", "in-sequence pairs cannot be two-way")
        else:
            if corpus.sequence_id(a) == corpus.sequence_id(b):
                fail(pair, "oos_sequence", "out-of-sequence pair within one sequence")
            if pair.time_gap is not None:
                fail(pair, "time_gap", "out-of-sequence pairs carry no time gap")
            if diff < t.min_diff_oos:
                fail(pair, "oos_min_diff", f"{diff} differences, at least {t.min_diff_oos} required")
        if pair.way == PairWay.two:
            two_way_sides[a] += 1

        if pair.split is not None:
            for seq in (pair.sequence_a, pair.sequence_b):
                if split_of.setdefault(seq, pair.split) != pair.split:
                    fail(pair, "split", f"sequence '{seq}' appears in more than one split")

        if sampled is not None:
            for end in (a, b):
                if end not in windows:
                    windows[end] = set(rank_candidates(features, sampled, end, t.top_k))
            # the reverse of a two-way pair was ranked from the other end
            if a not in windows[b] and not (pair.way == PairWay.two and b in windows[a]):
                fail(pair, "top_k", f"pose A is not among the {t.top_k} poses most similar to B")

    for pair in pairs:
        if pair.way == PairWay.two:
            reverse = by_ends.get((pair.id_b, pair.id_a))
            if reverse is None or reverse.way != PairWay.two:
                fail(pair, "two_way", "reverse pair is missing or not marked two-way")
    for index, count in two_way_sides.items():
        if count > 1:
            fail(None, "two_way_a", f"pose {index} is the A side of {count} two-way pairs")
    return violations
