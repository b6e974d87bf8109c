"""posemod command line.

Every command prints its result as JSON on stdout (indented with
--pretty). Exit codes: 0 success, 1 failed check or unexpected error,
2 engine error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from pydantic import BaseModel, ValidationError

from config import EngineResources, configure_logging, corpus_dir, load_resources
from dataset import audit_dataset, dataset_stats, describe_pair, generate_dataset, read_frequency
from errors import PosemodError, StructuralError
from instruction_parser import canonical, parse_modifier
from pairselect import (
    build_pairs,
    compute_features,
    farthest_point_sample,
    load_corpus,
    read_pairs,
    split_dataset,
    validate_pairs,
    write_pairs,
)
from pipeline import canonical_codes
from schemas import LintProfile, PairKind, PairsSummary, Pose, Thresholds
from skeleton import lr_flip_pose
from verbalizer import lint_modifier, lr_flip_text

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace, EngineResources], int]


def emit(payload: Any, pretty: bool) -> None:
    indent = 2 if pretty else None
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=indent)
    else:
        text = json.dumps(payload, indent=indent, default=_jsonable)
    sys.stdout.write(text + "\n")


def _jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def read_pose(path: str) -> Pose:
    try:
        return Pose.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValidationError) as e:
        raise StructuralError(f"Cannot read pose {path}: {e}") from e


def _thresholds(args: argparse.Namespace, base: Thresholds) -> Thresholds:
    update = {
        name: getattr(args, name)
        for name in ("top_k", "min_diff_is", "min_diff_oos", "max_gap")
        if getattr(args, name, None) is not None
    }
    return base.model_copy(update=update)


# ===== Commands =====
def cmd_describe(args: argparse.Namespace, res: EngineResources) -> int:
    freq = read_frequency(Path(args.frequency)) if args.frequency else None
    described = describe_pair(
        read_pose(args.pose_a),
        read_pose(args.pose_b),
        PairKind.IS if args.is_pair else PairKind.OOS,
        res,
        args.seed,
        freq,
        args.cap,
    )
    emit({
        "text": described.text,
        "codes": described.codes,
        "plan": canonical_codes(described.plan),
    }, args.pretty)
    return 0


def _sampled(args: argparse.Namespace, points: Any, size: int) -> List[int]:
    if args.sample is None:
        return list(range(size))
    return farthest_point_sample(points, args.sample, args.seed)


def cmd_pairs(args: argparse.Namespace, res: EngineResources) -> int:
    t = _thresholds(args, res.thresholds)
    directory = corpus_dir(args.corpus)
    corpus = load_corpus(directory)
    features = compute_features(corpus, res.skeleton, t, progress=not args.quiet)
    sampled = _sampled(args, features.keypoints, len(corpus))

    if args.validate:
        pairs = read_pairs(Path(args.validate))
        violations = validate_pairs(pairs, corpus, features, t, sampled if args.sample is not None else None)
        emit({"pairs": len(pairs), "violations": violations}, args.pretty)
        return 1 if violations else 0

    if not args.out:
        raise StructuralError("pairs needs --out (or --validate)")
    pairs, rejections = build_pairs(corpus, features, sampled, t, jobs=args.jobs, progress=not args.quiet)
    assignment = split_dataset(pairs, corpus, args.seed, t)
    write_pairs(Path(args.out), assignment.pairs)

    summary = PairsSummary(
        corpus=str(directory),
        seed=args.seed,
        sampled=len(sampled),
        pairs=len(assignment.pairs),
        kinds=_count(p.kind.value for p in assignment.pairs),
        ways=_count(p.way.value for p in assignment.pairs),
        splits=_count(p.split.value for p in assignment.pairs if p.split is not None),
        rejections=rejections,
        cross_split_dropped=assignment.dropped,
    )
    emit(summary, args.pretty)
    return 0


def _count(values: Any) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return dict(sorted(counts.items()))


def cmd_sample(args: argparse.Namespace, res: EngineResources) -> int:
    corpus = load_corpus(corpus_dir(args.corpus))
    features = compute_features(corpus, res.skeleton, res.thresholds, progress=not args.quiet)
    indices = farthest_point_sample(features.keypoints, args.k, args.seed)
    emit({"seed": args.seed, "k": args.k, "indices": indices}, args.pretty)
    return 0


def cmd_dataset(args: argparse.Namespace, res: EngineResources) -> int:
    corpus = load_corpus(corpus_dir(args.corpus))
    pairs = read_pairs(Path(args.pairs))
    manifest = generate_dataset(
        pairs,
        corpus,
        res,
        args.seed,
        Path(args.out),
        cap=args.cap,
        jobs=args.jobs,
        posecopy=args.posecopy,
        progress=not args.quiet,
    )
    emit(manifest, args.pretty)
    return 0


def cmd_roundtrip(args: argparse.Namespace, res: EngineResources) -> int:
    report = audit_dataset(Path(args.dataset), res)
    emit({"ok": report.ok, **report.model_dump(mode="json")}, args.pretty)
    return 0 if report.ok else 1


def cmd_stats(args: argparse.Namespace, res: EngineResources) -> int:
    emit(dataset_stats(Path(args.dataset)), args.pretty)
    return 0


def cmd_lint(args: argparse.Namespace, res: EngineResources) -> int:
    violations = lint_modifier(args.text, LintProfile(args.profile))
    emit({"profile": args.profile, "violations": violations}, args.pretty)
    return 0


def cmd_flip(args: argparse.Namespace, res: EngineResources) -> int:
    if args.pose:
        emit(lr_flip_pose(read_pose(args.pose), res.skeleton), args.pretty)
    else:
        emit({"text": lr_flip_text(args.text, res.guard)}, args.pretty)
    return 0


def cmd_parse(args: argparse.Namespace, res: EngineResources) -> int:
    result = parse_modifier(args.text, res.grammar)
    emit({"codes": canonical(result.edits), **result.model_dump(mode="json")}, args.pretty)
    return 0


# ===== Parser =====
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pretty", action="store_true", help="Indent JSON output")
    common.add_argument("--quiet", action="store_true", help="No progress bars")
    common.add_argument("--data-dir", help="Directory of the engine data files")
    common.add_argument("--log-level", help="Logging level (default POSEMOD_LOG_LEVEL or INFO)")

    p = argparse.ArgumentParser(prog="posemod", description="Pose-pair modifier engine")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("describe", parents=[common], help="Describe the change from pose A to pose B")
    d.add_argument("--pose-a", required=True, help="Pose JSON file")
    d.add_argument("--pose-b", required=True, help="Pose JSON file")
    d.add_argument("--is", dest="is_pair", action="store_true", help="In-sequence pair (keeps the turn)")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--cap", type=int, help="Maximum number of paircodes kept")
    d.add_argument("--frequency", help="frequency.json enabling b-statements")
    d.set_defaults(handler=cmd_describe)

    pr = sub.add_parser("pairs", parents=[common], help="Build pose pairs from a corpus")
    pr.add_argument("--corpus", help="Directory of <sequence>.jsonl files (default POSEMOD_CORPUS_DIR)")
    pr.add_argument("--out", help="pairs.jsonl to write")
    pr.add_argument("--sample", type=int, help="Farthest-point sample this many poses first")
    pr.add_argument("--top-k", type=int)
    pr.add_argument("--min-diff-is", type=int)
    pr.add_argument("--min-diff-oos", type=int)
    pr.add_argument("--max-gap", type=float)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--jobs", type=int, default=1)
    pr.add_argument("--validate", help="Check an existing pairs file instead of building one")
    pr.set_defaults(handler=cmd_pairs)

    s = sub.add_parser("sample", parents=[common], help="Farthest-point sample corpus indices")
    s.add_argument("--corpus", help="Default POSEMOD_CORPUS_DIR")
    s.add_argument("-k", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(handler=cmd_sample)

    ds = sub.add_parser("dataset", parents=[common], help="Generate triplets for a pairs file")
    ds.add_argument("--pairs", required=True)
    ds.add_argument("--corpus", help="Default POSEMOD_CORPUS_DIR")
    ds.add_argument("--out", required=True, help="Output directory")
    ds.add_argument("--seed", type=int, default=0)
    ds.add_argument("--jobs", type=int, default=1)
    ds.add_argument("--cap", type=int)
    ds.add_argument("--posecopy", type=float, default=0.0, help="Share of pairs also emitted as PoseCopy records")
    ds.set_defaults(handler=cmd_dataset)

    rt = sub.add_parser("roundtrip", parents=[common], help="Audit a generated dataset")
    rt.add_argument("--dataset", required=True, help="Dataset directory or triplets.jsonl")
    rt.set_defaults(handler=cmd_roundtrip)

    st = sub.add_parser("stats", parents=[common], help="Text statistics of a dataset")
    st.add_argument("--dataset", required=True, help="Dataset directory or triplets.jsonl")
    st.set_defaults(handler=cmd_stats)

    ln = sub.add_parser("lint", parents=[common], help="Check a modifier against the quality rules")
    ln.add_argument("--text", required=True)
    ln.add_argument("--profile", choices=[p.value for p in LintProfile], default=LintProfile.human.value)
    ln.set_defaults(handler=cmd_lint)

    fl = sub.add_parser("flip", parents=[common], help="Left/right flip a pose or a text")
    group = fl.add_mutually_exclusive_group(required=True)
    group.add_argument("--pose")
    group.add_argument("--text")
    fl.set_defaults(handler=cmd_flip)

    pa = sub.add_parser("parse", parents=[common], help="Parse a generated modifier into codes")
    pa.add_argument("--text", required=True)
    pa.set_defaults(handler=cmd_parse)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        res = load_resources(Path(args.data_dir) if args.data_dir else None)
        handler: Handler = args.handler
        return handler(args, res)
    except PosemodError as e:
        sys.stderr.write(json.dumps({"error": str(e), "type": type(e).__name__}) + "\n")
        return 2
    except Exception as e:  # noqa: BLE001
        logger.exception("[cli] unexpected failure")
        sys.stderr.write(json.dumps({"error": str(e), "type": type(e).__name__}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
