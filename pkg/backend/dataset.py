"""End-to-end triplet generation, statistics and audits.

A dataset directory holds triplets.jsonl (one TripletRecord per line, in
pair order), frequency.json and manifest.json.
"""
import hashlib
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field, ValidationError
from tqdm import tqdm

from config import VERSION, EngineResources, load_resources
from errors import CorpusError, PosemodError
from instruction_parser import canonical, check_directions, compare_codes, parse_modifier
from paircodes import apply_superpaircode_rules, compute_paircodes, orientation_change_code
from pairselect import PoseCorpus
from pipeline import build_plan, canonical_codes, make_rng, pair_seed, stage_seed
from posecodes import compute_posecodes, tabulate_frequencies
from schemas import (
    AuditReport,
    DatasetManifest,
    FrequencyTable,
    LintProfile,
    MalformedLine,
    PairDescription,
    PairKind,
    PairSpec,
    Pose,
    PosecodeSet,
    StatsReport,
    TripletRecord,
)
from skeleton import forward_kinematics, normalize_orientation, normalized_keypoints, rotate_yaw
from verbalizer import body_parts, lint_modifier, verbalize, words

logger = logging.getLogger(__name__)

TRIPLETS_FILE = "triplets.jsonl"
FREQUENCY_FILE = "frequency.json"
MANIFEST_FILE = "manifest.json"


# ===== Single pair =====
def describe_pair(
    pose_a: Pose,
    pose_b: Pose,
    kind: PairKind,
    resources: EngineResources,
    seed: int,
    freq: Optional[FrequencyTable] = None,
    cap: Optional[int] = None,
) -> PairDescription:
    """Run the whole pipeline on one pair.

    Both bodies are normalized independently for the codes; the yaw each
    normalization removed feeds the orientation code.
    """
    skel, t = resources.skeleton, resources.thresholds
    normalized_a, yaw_a = normalize_orientation(pose_a, skel)
    normalized_b, yaw_b = normalize_orientation(pose_b, skel)
    kps_a = forward_kinematics(normalized_a, skel)
    kps_b = forward_kinematics(normalized_b, skel)

    codes = apply_superpaircode_rules(
        compute_paircodes(kps_a, kps_b, skel, t),
        compute_posecodes(kps_a, skel, t),
        compute_posecodes(kps_b, skel, t),
        freq,
        resources.rules,
        t,
        orientation_change_code(yaw_a, yaw_b, kind, t),
    )
    plan = build_plan(codes, resources.graph, seed, cap, t)
    text = verbalize(plan, resources.bank, stage_seed(seed, "verbalize"))
    return PairDescription(text=text, codes=codes, plan=plan)


def store_poses(pose_a: Pose, pose_b: Pose, kind: PairKind, resources: EngineResources) -> Tuple[Pose, Pose]:
    """Poses as written to the dataset.

    In-sequence pairs keep their relative turn: A's normalization is
    applied to B. Out-of-sequence poses are normalized independently.
    """
    skel = resources.skeleton
    stored_a, yaw_a = normalize_orientation(pose_a, skel)
    if kind == PairKind.IS:
        return stored_a, rotate_yaw(pose_b, -yaw_a)
    stored_b, _ = normalize_orientation(pose_b, skel)
    return stored_a, stored_b


# ===== Generation =====
class PairTask(BaseModel):
    pair: PairSpec
    pose_a: Pose
    pose_b: Pose
    seed: int
    copy_id: int


def _record(
    task: PairTask,
    resources: EngineResources,
    freq: Optional[FrequencyTable],
    cap: int,
    posecopy: float,
) -> List[TripletRecord]:
    pair = task.pair
    common = dict(pair_id=pair.pair_id, kind=pair.kind, way=pair.way, split=pair.split, seed=task.seed)
    try:
        stored_a, stored_b = store_poses(task.pose_a, task.pose_b, pair.kind, resources)
        described = describe_pair(stored_a, stored_b, pair.kind, resources, task.seed, freq, cap)
    except PosemodError as e:
        logger.warning("[dataset] pair %d failed: %s", pair.pair_id, e)
        return [TripletRecord(
            **common, pose_a=task.pose_a, pose_b=task.pose_b, text="", error=f"{type(e).__name__}: {e}"
        )]

    records = [TripletRecord(
        **common,
        pose_a=stored_a,
        pose_b=stored_b,
        text=described.text,
        codes=described.codes,
        plan_codes=canonical_codes(described.plan),
        lint=lint_modifier(described.text, LintProfile.auto) if described.text else [],
    )]
    if posecopy > 0 and make_rng(stage_seed(task.seed, "posecopy")).random() < posecopy:
        copied = describe_pair(stored_a, stored_a, pair.kind, resources, task.seed, freq, cap)
        records.append(TripletRecord(
            **{**common, "pair_id": task.copy_id},
            source_pair_id=pair.pair_id,
            posecopy=True,
            pose_a=stored_a,
            pose_b=stored_a,
            text=copied.text,
            codes=copied.codes,
            plan_codes=canonical_codes(copied.plan),
        ))
    return records


class _WorkerState(BaseModel):
    resources: Optional[EngineResources] = None
    freq: Optional[FrequencyTable] = None
    cap: int = 7
    posecopy: float = 0.0


_worker = _WorkerState()


def _init_worker(paths: Dict[str, Path], freq: Optional[FrequencyTable], cap: int, posecopy: float) -> None:
    _worker.resources = load_resources(overrides=paths)
    _worker.freq, _worker.cap, _worker.posecopy = freq, cap, posecopy


def _run_task(task: PairTask) -> List[TripletRecord]:
    assert _worker.resources is not None
    return _record(task, _worker.resources, _worker.freq, _worker.cap, _worker.posecopy)


def corpus_frequencies(corpus: PoseCorpus, resources: EngineResources, progress: bool = False) -> FrequencyTable:
    """Bin frequencies over every pose of the corpus, normalized independently."""
    skel = resources.skeleton

    def codes() -> Iterator[PosecodeSet]:
        for i in tqdm(range(len(corpus)), desc="frequencies", disable=not progress):
            yield compute_posecodes(normalized_keypoints(corpus.pose(i), skel), skel, resources.thresholds)

    return tabulate_frequencies(codes())


def _hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def generate_dataset(
    pairs: Sequence[PairSpec],
    corpus: PoseCorpus,
    resources: EngineResources,
    global_seed: int,
    out_dir: Path,
    cap: Optional[int] = None,
    jobs: int = 1,
    posecopy: float = 0.0,
    freq: Optional[FrequencyTable] = None,
    progress: bool = False,
) -> DatasetManifest:
    """Write triplets.jsonl, frequency.json and manifest.json for a pair list.

    Records keep the input pair order whatever the number of workers, and
    a failing pair becomes a record carrying its error.
    """
    if not 0.0 <= posecopy <= 1.0:
        raise ValueError("posecopy must lie in [0, 1]")
    cap = cap if cap is not None else resources.thresholds.default_cap
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = len(corpus)
    for pair in pairs:
        if not (0 <= pair.id_a < n and 0 <= pair.id_b < n):
            raise CorpusError(f"Pair {pair.pair_id} refers to poses outside the corpus")

    if freq is None:
        freq = corpus_frequencies(corpus, resources, progress)
    frequency_json = freq.model_dump_json(indent=2)
    (out_dir / FREQUENCY_FILE).write_text(frequency_json, encoding="utf-8")

    # pose-copy records are numbered after the last pair
    copy_base = max((p.pair_id for p in pairs), default=-1) + 1
    tasks = [
        PairTask(
            pair=p,
            pose_a=corpus.pose(p.id_a),
            pose_b=corpus.pose(p.id_b),
            seed=pair_seed(global_seed, p.pair_id),
            copy_id=copy_base + p.pair_id,
        )
        for p in pairs
    ]
    kinds: Counter[str] = Counter()
    ways: Counter[str] = Counter()
    splits: Counter[str] = Counter()
    count = errors = empty = 0

    with (out_dir / TRIPLETS_FILE).open("w", encoding="utf-8") as out:
        if jobs > 1:
            pool = ProcessPoolExecutor(
                max_workers=jobs,
                initializer=_init_worker,
                initargs=(resources.paths, freq, cap, posecopy),
            )
            results = pool.map(_run_task, tasks, chunksize=64)
        else:
            pool = None
            results = (_record(task, resources, freq, cap, posecopy) for task in tasks)
        try:
            for records in tqdm(results, total=len(tasks), desc="dataset", disable=not progress):
                for record in records:
                    out.write(record.model_dump_json() + "\n")
                    count += 1
                    errors += record.error is not None
                    empty += record.text == ""
                    kinds[record.kind.value] += 1
                    ways[record.way.value] += 1
                    if record.split is not None:
                        splits[record.split.value] += 1
        finally:
            if pool is not None:
                pool.shutdown()

    hashes = dict(sorted(resources.hashes.items()))
    hashes["frequency"] = _hash_text(frequency_json)
    hashes["pairs"] = _hash_text("\n".join(p.model_dump_json() for p in pairs))
    manifest = DatasetManifest(
        version=VERSION,
        global_seed=global_seed,
        cap=cap,
        posecopy=posecopy,
        thresholds=resources.thresholds,
        hashes=hashes,
        records=count,
        errors=errors,
        empty_texts=empty,
        kinds=dict(sorted(kinds.items())),
        ways=dict(sorted(ways.items())),
        splits=dict(sorted(splits.items())),
    )
    (out_dir / MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info("[dataset] wrote %d records (%d errors, %d empty) to %s", count, errors, empty, out_dir)
    return manifest


# ===== Reading =====
def parse_records(lines: Iterable[str]) -> Iterator[Tuple[int, Optional[TripletRecord], Optional[str]]]:
    """(line number, record or None, error or None) per non-blank line."""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield lineno, TripletRecord.model_validate_json(line), None
        except ValidationError as e:
            yield lineno, None, str(e).splitlines()[0]


def iter_records(path: Path) -> Iterator[Tuple[int, Optional[TripletRecord], Optional[str]]]:
    try:
        handle = Path(path).open(encoding="utf-8")
    except OSError as e:
        raise CorpusError(f"Cannot read dataset {path}: {e}") from e
    with handle:
        yield from parse_records(handle)


def triplets_path(path: Path) -> Path:
    path = Path(path)
    return path / TRIPLETS_FILE if path.is_dir() else path


# ===== Statistics =====
class StatsAccumulator(BaseModel):
    """Associative fold behind dataset_stats; chunks merge with ``merge``."""

    records: int = 0
    word_counts: Counter[int] = Field(default_factory=Counter)
    total_words: int = 0
    vocabulary: set[str] = Field(default_factory=set)
    body_parts: int = 0
    empty: int = 0
    errors: int = 0
    kinds: Counter[str] = Field(default_factory=Counter)
    ways: Counter[str] = Field(default_factory=Counter)
    splits: Counter[str] = Field(default_factory=Counter)
    malformed: List[MalformedLine] = Field(default_factory=list)

    def add(self, record: TripletRecord) -> None:
        tokens = words(record.text)
        self.records += 1
        self.word_counts[len(tokens)] += 1
        self.total_words += len(tokens)
        self.vocabulary.update(w.lower() for w in tokens)
        self.body_parts += len(body_parts(record.text))
        self.empty += record.text == ""
        self.errors += record.error is not None
        self.kinds[record.kind.value] += 1
        self.ways[record.way.value] += 1
        if record.split is not None:
            self.splits[record.split.value] += 1

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        return StatsAccumulator(
            records=self.records + other.records,
            word_counts=self.word_counts + other.word_counts,
            total_words=self.total_words + other.total_words,
            vocabulary=self.vocabulary | other.vocabulary,
            body_parts=self.body_parts + other.body_parts,
            empty=self.empty + other.empty,
            errors=self.errors + other.errors,
            kinds=self.kinds + other.kinds,
            ways=self.ways + other.ways,
            splits=self.splits + other.splits,
            malformed=self.malformed + other.malformed,
        )

    def report(self) -> StatsReport:
        n = self.records
        return StatsReport(
            records=n,
            word_histogram=dict(sorted(self.word_counts.items())),
            mean_words=self.total_words / n if n else 0.0,
            vocabulary_size=len(self.vocabulary),
            mean_body_parts=self.body_parts / n if n else 0.0,
            empty_rate=self.empty / n if n else 0.0,
            errors=self.errors,
            kinds=dict(sorted(self.kinds.items())),
            ways=dict(sorted(self.ways.items())),
            splits=dict(sorted(self.splits.items())),
            malformed=self.malformed,
        )


def stats_from_lines(lines: Iterable[str]) -> StatsReport:
    acc = StatsAccumulator()
    for lineno, record, error in parse_records(lines):
        if record is None:
            acc.malformed.append(MalformedLine(line=lineno, error=error or "malformed record"))
        else:
            acc.add(record)
    return acc.report()


def dataset_stats(path: Path) -> StatsReport:
    """Length, vocabulary and body-part statistics of a triplets file.

    Malformed lines are reported with their line number and skipped.
    """
    path = triplets_path(path)
    try:
        handle = path.open(encoding="utf-8")
    except OSError as e:
        raise CorpusError(f"Cannot read dataset {path}: {e}") from e
    with handle:
        return stats_from_lines(handle)


# ===== Audit =====
def read_manifest(directory: Path) -> Optional[DatasetManifest]:
    path = Path(directory) / MANIFEST_FILE
    if not path.is_file():
        return None
    return DatasetManifest.model_validate_json(path.read_text(encoding="utf-8"))


def read_frequency(path: Path) -> FrequencyTable:
    try:
        return FrequencyTable.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValidationError) as e:
        raise CorpusError(f"Cannot read frequency table {path}: {e}") from e


def audit_dataset(path: Path, resources: EngineResources) -> AuditReport:
    """Re-derive every record from its stored poses.

    Checks that the text is reproduced exactly, that parsing the text gives
    back the stored plan codes, and that every parsed direction agrees with
    the geometry of the stored poses. Records carrying an error are skipped.
    """
    triplets = triplets_path(path)
    manifest = read_manifest(triplets.parent)
    cap = manifest.cap if manifest is not None else None
    freq_path = triplets.parent / FREQUENCY_FILE
    freq = read_frequency(freq_path) if freq_path.is_file() else None
    skel = resources.skeleton

    report = AuditReport()
    for _, record, _ in iter_records(triplets):
        if record is None or record.error is not None:
            report.skipped += 1
            continue
        report.records += 1
        try:
            described = describe_pair(record.pose_a, record.pose_b, record.kind, resources, record.seed, freq, cap)
        except PosemodError:
            report.text_mismatches.append(record.pair_id)
            continue
        if described.text != record.text:
            report.text_mismatches.append(record.pair_id)

        parsed = parse_modifier(record.text, resources.grammar)
        comparison = compare_codes(record.plan_codes, canonical(parsed.edits))
        if parsed.unknown_spans or not comparison.ok:
            report.roundtrip_failures.append(record.pair_id)

        kps_a = normalized_keypoints(record.pose_a, skel)
        kps_b = normalized_keypoints(record.pose_b, skel)
        if check_directions(parsed.edits, kps_a, kps_b, skel):
            report.direction_failures.append(record.pair_id)
    return report

