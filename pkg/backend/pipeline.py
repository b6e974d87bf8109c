"""CodeSet -> InstructionPlan: selection, aggregation and body-part ordering."""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from errors import StructuralError
from paircodes import DIRECTION_AXIS, SLOT_INDEX, paircode_slot
from schemas import (
    AggregatedCodeSet,
    CanonicalCode,
    CodeSet,
    InstructionPlan,
    OrientationCode,
    Paircode,
    PlanItem,
    Posecode,
    SuperPaircode,
    Thresholds,
)
from skeleton import mirror_name

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
STAGES = {"order": 1, "verbalize": 2, "posecopy": 3}

PLURALS = {
    "hand": "hands",
    "elbow": "elbows",
    "knee": "knees",
    "foot": "feet",
    "arm": "arms",
    "leg": "legs",
}
_MERGEABLE_KINDS = ("angle_change", "displacement", "super")
_AXIS_ORDER = {"x": 0, "y": 1, "z": 2}


# ===== Seeds =====
def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def pair_seed(global_seed: int, pair_id: int) -> int:
    """Per-pair seed; independent of how pairs are sharded across workers."""
    return splitmix64(splitmix64(global_seed & _MASK64) ^ (pair_id & _MASK64))


def stage_seed(seed: int, stage: str) -> int:
    return splitmix64(seed ^ ((STAGES[stage] * _GOLDEN) & _MASK64))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed & _MASK64))


# ===== Canonical codes =====
def canonical_paircode(code: Paircode) -> CanonicalCode:
    return CanonicalCode(kind=code.kind, subjects=code.subjects, direction=code.direction, magnitude=code.magnitude)


def canonical_super(code: SuperPaircode) -> CanonicalCode:
    return CanonicalCode(kind="super", subjects=code.subjects, direction=code.intent)


def canonical_statement(code: Posecode) -> CanonicalCode:
    return CanonicalCode(kind="statement", subjects=code.subjects, direction=f"{code.category}.{code.bin}")


def canonical_orientation(code: OrientationCode) -> CanonicalCode:
    return CanonicalCode(kind="orientation", subjects=("body",), direction=code.direction, magnitude=code.magnitude)


def sort_canonical(codes: Sequence[CanonicalCode]) -> List[CanonicalCode]:
    return sorted(codes, key=lambda c: (c.kind, c.subjects, c.direction, c.magnitude or ""))


def canonical_codes(plan: Union[InstructionPlan, AggregatedCodeSet]) -> List[CanonicalCode]:
    """Sorted multiset of the singleton codes a plan was built from."""
    codes: List[CanonicalCode] = []
    if plan.orientation is not None:
        codes.append(canonical_orientation(plan.orientation))
    for item in plan.items:
        codes.extend(item.codes)
    return sort_canonical(codes)


# ===== Selection =====
def _ranking_scale(kind: str, t: Thresholds) -> float:
    return t.angle_change_min if kind == "angle_change" else t.distance_change_min


def select_codes(cs: CodeSet, cap: int, thresholds: Optional[Thresholds] = None) -> CodeSet:
    """Drop trivial and redundant paircodes, then keep at most ``cap`` of them.

    Super-paircodes, b-statements and the orientation code are always kept.
    Paircodes compare by |raw_delta| over their kind's significance
    threshold; ties keep inventory order.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    t = thresholds or Thresholds()
    floors = {
        "angle_change": t.keep_floor_angle,
        "distance_change": t.keep_floor_distance,
        "displacement": t.keep_floor_displacement,
    }
    implied = {pair for sp in cs.super_paircodes for pair in sp.implies}

    kept = [
        c for c in cs.paircodes
        if abs(c.raw_delta) >= floors[c.kind]
        and not (c.kind == "displacement" and (c.subjects[0], c.axis or "") in implied)
    ]
    if len(kept) > cap:
        ranked = sorted(
            range(len(kept)),
            key=lambda i: (-abs(kept[i].raw_delta) / _ranking_scale(kept[i].kind, t), SLOT_INDEX[paircode_slot(kept[i])]),
        )
        chosen = set(ranked[:cap])
        kept = [c for i, c in enumerate(kept) if i in chosen]
    return cs.model_copy(update={"paircodes": tuple(kept)})


# ===== Aggregation =====
def template_key(kind: str, direction: str, subjects: Sequence[str]) -> str:
    """Template bank key of a singleton code."""
    if kind == "distance_change" and len(subjects) == 2:
        return f"distance_change.{direction}_to"
    if kind == "statement":
        category, _, bin_ = direction.partition(".")
        if category == "distance" and len(subjects) == 2:
            category = "distance_to"
        return f"statement.{category}.{bin_}"
    return f"{kind}.{direction}"


def _item(kind: str, subjects: Tuple[str, ...], direction: str, magnitude: Optional[str], code: CanonicalCode) -> PlanItem:
    return PlanItem(
        key=template_key(kind, direction, subjects),
        kind=kind,
        subject=subjects[0],
        reference=subjects[1] if len(subjects) > 1 else None,
        directions=((direction, magnitude),),
        codes=(code,),
    )


def _singletons(cs: CodeSet) -> List[PlanItem]:
    items = [_item("super", sp.subjects, sp.intent, None, canonical_super(sp)) for sp in cs.super_paircodes]
    items += [_item(c.kind, c.subjects, c.direction, c.magnitude, canonical_paircode(c)) for c in cs.paircodes]
    items += [
        _item("statement", s.subjects, f"{s.category}.{s.bin}", None, canonical_statement(s))
        for s in cs.b_statements
    ]
    return items


def both_name(subject: str) -> Optional[str]:
    """'left_hand' -> 'both_hands'; None for names without a side."""
    for side in ("left_", "right_"):
        if subject.startswith(side):
            base = subject[len(side):]
            return f"both_{PLURALS.get(base, base + 's')}"
    return None


def _merge_mirrors(items: List[PlanItem]) -> List[PlanItem]:
    out: List[PlanItem] = []
    used: Set[int] = set()
    for i, item in enumerate(items):
        if i in used:
            continue
        merged = item
        if item.kind in _MERGEABLE_KINDS and item.reference is None and len(item.directions) == 1:
            both = both_name(item.subject)
            twin = mirror_name(item.subject)
            if both is not None:
                for j in range(i + 1, len(items)):
                    other = items[j]
                    if (
                        j not in used
                        and other.key == item.key
                        and other.subject == twin
                        and other.reference is None
                        and other.directions == item.directions
                    ):
                        used.add(j)
                        merged = item.model_copy(update={"subject": both, "codes": item.codes + other.codes})
                        break
        out.append(merged)
    return out


def _merge_axes(items: List[PlanItem]) -> List[PlanItem]:
    out: List[PlanItem] = []
    position: Dict[str, int] = {}
    for item in items:
        if item.kind != "displacement":
            out.append(item)
            continue
        if item.subject not in position:
            position[item.subject] = len(out)
            out.append(item)
            continue
        first = out[position[item.subject]]
        directions = tuple(sorted(
            first.directions + item.directions, key=lambda d: _AXIS_ORDER[DIRECTION_AXIS[d[0]]]
        ))
        out[position[item.subject]] = first.model_copy(update={
            "key": "displacement.multi",
            "directions": directions,
            "codes": first.codes + item.codes,
        })
    return out


def aggregate_codes(cs: Union[CodeSet, AggregatedCodeSet]) -> AggregatedCodeSet:
    """Merge mirror-pair codes into 'both' codes, then same-subject displacements.

    Idempotent: aggregating an aggregated set returns it unchanged.
    """
    items = list(cs.items) if isinstance(cs, AggregatedCodeSet) else _singletons(cs)
    return AggregatedCodeSet(orientation=cs.orientation, items=tuple(_merge_axes(_merge_mirrors(items))))


# ===== Body-part graph and ordering =====
class BodyPartGraph(BaseModel):
    model_config = ConfigDict(frozen=True)

    root: str
    children: Dict[str, Tuple[str, ...]]

    @property
    def nodes(self) -> List[str]:
        seen: List[str] = [self.root]
        for parent, kids in self.children.items():
            for n in (parent, *kids):
                if n not in seen:
                    seen.append(n)
        return seen

    def node_for(self, subject: str) -> str:
        if subject == self.root or subject in self.children or any(subject in k for k in self.children.values()):
            return subject
        raise StructuralError(f"Subject '{subject}' does not map to a body-part graph node")


def parse_graph(text: str, origin: str = "<graph>") -> BodyPartGraph:
    """Parse ``node -> child`` lines; the first node listed is the root."""
    children: Dict[str, List[str]] = {}
    root: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parent, arrow, child = line.partition("->")
        parent, child = parent.strip(), child.strip()
        if not arrow or not parent or not child:
            raise StructuralError(f"{origin}:{lineno}: expected 'node -> child'")
        root = root or parent
        kids = children.setdefault(parent, [])
        if child not in kids:
            kids.append(child)
    if root is None:
        raise StructuralError(f"{origin}: body-part graph is empty")

    graph = BodyPartGraph(root=root, children={k: tuple(v) for k, v in children.items()})
    _check_graph(graph, origin)
    return graph


def _check_graph(graph: BodyPartGraph, origin: str) -> None:
    state: Dict[str, int] = {}  # 1 on the current path, 2 done

    def visit(node: str) -> None:
        state[node] = 1
        for child in graph.children.get(node, ()):
            if state.get(child) == 1:
                raise StructuralError(f"{origin}: cycle through '{child}'")
            if child not in state:
                visit(child)
        state[node] = 2

    visit(graph.root)
    unreachable = [n for n in graph.nodes if n not in state]
    if unreachable:
        raise StructuralError(f"{origin}: nodes not reachable from '{graph.root}': {unreachable}")


def load_graph(path: Path) -> BodyPartGraph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise StructuralError(f"Cannot read body-part graph {path}: {e}") from e
    graph = parse_graph(text, origin=str(path))
    logger.debug("[pipeline] body-part graph with %d nodes from %s", len(graph.nodes), path)
    return graph


def walk_graph(graph: BodyPartGraph, rng: np.random.Generator) -> List[str]:
    """Randomized depth-first walk from the root.

    Descend by a uniform choice among unvisited children until a leaf,
    backtrack to the deepest node with unvisited children, repeat.
    """
    order = [graph.root]
    visited = {graph.root}
    path = [graph.root]
    while path:
        pending = [c for c in graph.children.get(path[-1], ()) if c not in visited]
        if not pending:
            path.pop()
            continue
        child = pending[int(rng.integers(len(pending)))]
        visited.add(child)
        order.append(child)
        path.append(child)
    return order


def order_codes(cs: AggregatedCodeSet, graph: BodyPartGraph, seed: int) -> InstructionPlan:
    """Order plan items by the visit order of a seeded walk of the graph.

    Raises:
        StructuralError: an item's subject is not a graph node.
    """
    nodes = [graph.node_for(item.subject) for item in cs.items]
    visit = {node: i for i, node in enumerate(walk_graph(graph, make_rng(seed)))}
    ranked = sorted(range(len(cs.items)), key=lambda i: visit[nodes[i]])
    return InstructionPlan(orientation=cs.orientation, items=tuple(cs.items[i] for i in ranked), seed=seed)


def build_plan(
    cs: CodeSet,
    graph: BodyPartGraph,
    seed: int,
    cap: Optional[int] = None,
    thresholds: Optional[Thresholds] = None,
) -> InstructionPlan:
    """select -> aggregate -> order, with the ordering seed derived from ``seed``."""
    t = thresholds or Thresholds()
    selected = select_codes(cs, cap if cap is not None else t.default_cap, t)
    return order_codes(aggregate_codes(selected), graph, stage_seed(seed, "order"))
