"""Environment and data-file configuration.

Values come from the environment (and backend/.env for local runs). The
data files default to backend/data and can be overridden one by one.
"""
import hashlib
import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError

from errors import ConfigError, PosemodError
from instruction_parser import InstructionGrammar, compile_grammar
from paircodes import RuleTable, load_rules
from pipeline import BodyPartGraph, load_graph
from schemas import SkeletonDef, Thresholds
from skeleton import load_skeleton
from verbalizer import SideGuard, TemplateBank, load_bank, load_guard

env_path = Path(__file__).parent / ".env"
if env_path.exists():
    load_dotenv(env_path)

logger = logging.getLogger(__name__)

DEFAULT_DATA_DIR = Path(__file__).parent / "data"
VERSION = "1.0.0"

# resource name -> (environment override, default file name)
RESOURCE_FILES: Dict[str, tuple[str, str]] = {
    "skeleton": ("POSEMOD_SKELETON_FILE", "skeleton_posefix22.json"),
    "thresholds": ("POSEMOD_THRESHOLDS_FILE", "thresholds.env"),
    "rules": ("POSEMOD_RULES_FILE", "superpaircodes.rules"),
    "templates": ("POSEMOD_TEMPLATES_FILE", "templates.txt"),
    "graph": ("POSEMOD_GRAPH_FILE", "body_parts.graph"),
    "guard": ("POSEMOD_GUARD_FILE", "side_guard.txt"),
}


def configure_logging(level: Optional[str] = None) -> None:
    name = (level or os.getenv("POSEMOD_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, name, logging.INFO), format="%(levelname)s %(message)s")


def load_thresholds(path: Path) -> Thresholds:
    """Read a KEY=value thresholds file; keys are case-insensitive field names.

    Raises:
        ConfigError: unreadable file, unknown key or invalid value.
    """
    if not Path(path).is_file():
        raise ConfigError(f"Thresholds file {path} does not exist")
    values = {k.lower(): v for k, v in dotenv_values(path).items() if v is not None}
    unknown = sorted(set(values) - set(Thresholds.model_fields))
    if unknown:
        raise ConfigError(f"{path}: unknown threshold keys {unknown}")
    try:
        return Thresholds.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"{path}: {e}") from e


def corpus_dir(explicit: Optional[str] = None) -> Path:
    """Corpus directory from the command line, else POSEMOD_CORPUS_DIR.

    Raises:
        ConfigError: neither is set.
    """
    value = explicit or os.getenv("POSEMOD_CORPUS_DIR")
    if not value:
        raise ConfigError("No corpus directory: pass --corpus or set POSEMOD_CORPUS_DIR")
    return Path(value)


def file_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class EngineResources(BaseModel):
    """Every loaded data file, shared read-only by the CLI and the routes."""

    model_config = ConfigDict(frozen=True)

    skeleton: SkeletonDef
    thresholds: Thresholds
    rules: RuleTable
    bank: TemplateBank
    grammar: InstructionGrammar
    graph: BodyPartGraph
    guard: SideGuard
    paths: Dict[str, Path]
    hashes: Dict[str, str]


def resource_paths(data_dir: Optional[Path] = None, overrides: Optional[Dict[str, Path]] = None) -> Dict[str, Path]:
    base = Path(data_dir or os.getenv("POSEMOD_DATA_DIR") or DEFAULT_DATA_DIR)
    paths: Dict[str, Path] = {}
    for name, (variable, filename) in RESOURCE_FILES.items():
        override = (overrides or {}).get(name) or os.getenv(variable)
        paths[name] = Path(override) if override else base / filename
    return paths


def load_resources(data_dir: Optional[Path] = None, overrides: Optional[Dict[str, Path]] = None) -> EngineResources:
    """Load and check every data file.

    Raises:
        ConfigError: a file is missing or does not parse.
    """
    paths = resource_paths(data_dir, overrides)
    missing = [str(p) for p in paths.values() if not p.is_file()]
    if missing:
        raise ConfigError(f"Missing data files: {missing}")
    try:
        bank = load_bank(paths["templates"])
        resources = EngineResources(
            skeleton=load_skeleton(paths["skeleton"]),
            thresholds=load_thresholds(paths["thresholds"]),
            rules=load_rules(paths["rules"]),
            bank=bank,
            grammar=compile_grammar(bank),
            graph=load_graph(paths["graph"]),
            guard=load_guard(paths["guard"]),
            paths=paths,
            hashes={name: file_hash(p) for name, p in paths.items()},
        )
    except ConfigError:
        raise
    except PosemodError as e:
        raise ConfigError(str(e)) from e
    logger.info("[config] resources loaded from %s", paths["templates"].parent)
    return resources


@lru_cache(maxsize=1)
def get_resources() -> EngineResources:
    """Dependency for FastAPI routes and the CLI to get the shared resources."""
    return load_resources()
