"""Parse generated modifiers back into canonical codes.

The grammar is induced from the template bank: every template becomes one
clause pattern, clauses are separated by the bank's transitions, and the
subject lexicon restricts which phrases a clause accepts. Only the
engine's own output language is covered; anything else comes back as an
unknown span.
"""
import logging
import re
from typing import Dict, List, Optional, Pattern, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict

from paircodes import DIRECTION_AXIS, direction_of, mirror_direction, slot_delta
from pipeline import PLURALS, canonical_codes, sort_canonical
from schemas import (
    CanonicalCode,
    InstructionPlan,
    ParsedEdit,
    ParseResult,
    RoundtripReport,
    SkeletonDef,
    UnknownSpan,
)
from skeleton import KeypointSet, mirror_name
from verbalizer import PLACEHOLDER, VERB_MARK, TemplateBank, verbalize

logger = logging.getLogger(__name__)

FLAGS = re.ASCII | re.IGNORECASE
_SINGULAR = {plural: singular for singular, plural in PLURALS.items()}
_PAIRCODE_KINDS = ("angle_change", "distance_change", "displacement")


class Clause(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    key: str
    pattern: Pattern[str]
    default_subject: Optional[str]


class InstructionGrammar(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    clauses: Tuple[Clause, ...]
    separator: Pattern[str]
    direction_item: Pattern[str]
    subject_names: Dict[str, str]
    direction_names: Dict[str, str]
    magnitude_names: Dict[str, Dict[str, str]]


def _norm(text: str) -> str:
    return " ".join(text.split()).lower()


def _phrase_regex(phrase: str) -> str:
    return r"\s+".join(re.escape(w) for w in phrase.split())


def _alternatives(phrases: Sequence[str]) -> str:
    ordered = sorted({p for p in phrases if p}, key=lambda p: (-len(p), p))
    return "|".join(_phrase_regex(p) for p in ordered)


def _direction_item_regex(bank: TemplateBank, named: bool = False) -> str:
    words = _alternatives(list(bank.magnitudes["change"].values()))
    directions = _alternatives(list(bank.directions.values()))
    if named:
        return rf"(?:(?P<magnitude>{words})\s+)?(?P<direction>{directions})"
    return rf"(?:(?:{words})\s+)?(?:{directions})"


def _token_regex(token: str, key: str, bank: TemplateBank) -> str:
    out = ""
    for piece in re.split(r"(<[a-z]+>|\{[a-z_]+\})", token):
        if not piece:
            continue
        verb = VERB_MARK.fullmatch(piece)
        slot = PLACEHOLDER.fullmatch(piece)
        if verb is not None:
            out += f"(?:{re.escape(verb.group(1))}|{re.escape(bank.gerunds[verb.group(1)])})"
        elif slot is None:
            out += re.escape(piece)
        elif slot.group(1) == "subject":
            out += f"(?P<subject>{_alternatives([bank.subjects[s] for s in bank.allowed_subjects(key)])})"
        elif slot.group(1) == "reference":
            out += f"(?P<reference>{_alternatives([bank.subjects[s] for s in bank.allowed_references(key)])})"
        elif slot.group(1) == "directions":
            item = _direction_item_regex(bank)
            out += rf"(?P<directions>{item}(?:(?:\s*,\s*|\s+and\s+){item})+)"
        else:
            out += f"(?P<magnitude>{_alternatives(list(bank.magnitude_words(key).values()))})"
    return out


def _clause_regex(key: str, template: str, bank: TemplateBank, ending: str) -> str:
    regex = ""
    for i, token in enumerate(template.split()):
        words = bank.magnitude_words(key)
        if token == "{magnitude}" and any(not w for w in words.values()):
            # the unmarked magnitude renders as nothing
            regex += rf"(?:\s+(?P<magnitude>{_alternatives(list(words.values()))}))?"
            continue
        regex += (r"\s+" if i else "") + _token_regex(token, key, bank)
    return rf"{regex}(?={ending})"


def _transition_regex(text: str) -> str:
    core = text.strip()
    lead = r"\s*" if core[:1] in ".,;" else r"\s+"
    return lead + r"\s+".join(re.escape(w) for w in core.split()) + (r"\b" if core[-1:].isalnum() else "")


def compile_grammar(bank: TemplateBank) -> InstructionGrammar:
    """Build the clause patterns for a template bank."""
    transitions = [_transition_regex(t.text) for t in bank.transitions]
    ending = r"\s*$|" + "|".join(f"(?:{t})" for t in transitions)
    clauses: List[Clause] = []
    for key, templates in bank.templates.items():
        allowed = bank.allowed_subjects(key)
        for template in templates:
            clauses.append(Clause(
                key=key,
                pattern=re.compile(_clause_regex(key, template, bank, ending), FLAGS),
                default_subject=allowed[0] if "{subject}" not in template and allowed else None,
            ))
    return InstructionGrammar(
        clauses=tuple(clauses),
        separator=re.compile("(?:" + "|".join(f"(?:{t})" for t in transitions) + r")\s*", FLAGS),
        direction_item=re.compile(_direction_item_regex(bank, named=True), FLAGS),
        subject_names={_norm(phrase): name for name, phrase in bank.subjects.items()},
        direction_names={_norm(phrase): name for name, phrase in bank.directions.items()},
        magnitude_names={
            family: {_norm(word): magnitude for magnitude, word in words.items() if word}
            for family, words in bank.magnitudes.items()
        },
    )


def expand_subject(subject: str) -> Tuple[str, ...]:
    """'both_hands' -> ('left_hand', 'right_hand'); other names are kept."""
    if not subject.startswith("both_"):
        return (subject,)
    plural = subject[len("both_"):]
    singular = _SINGULAR.get(plural, plural[:-1])
    return (f"left_{singular}", f"right_{singular}")


def _clause_edits(clause: Clause, m: "re.Match[str]", grammar: InstructionGrammar) -> Optional[List[ParsedEdit]]:
    groups = m.groupdict()
    kind, _, rest = clause.key.partition(".")
    family = "orientation" if kind == "orientation" else "change"

    subject = grammar.subject_names.get(_norm(groups["subject"])) if groups.get("subject") else clause.default_subject
    reference = grammar.subject_names.get(_norm(groups["reference"])) if groups.get("reference") else None
    if subject is None or (groups.get("reference") and reference is None):
        return None

    magnitude: Optional[str] = None
    if kind in _PAIRCODE_KINDS or kind == "orientation":
        word = groups.get("magnitude")
        magnitude = grammar.magnitude_names[family].get(_norm(word)) if word else "moderate"

    directions: List[Tuple[str, Optional[str]]]
    if clause.key == "displacement.multi":
        directions = []
        for item in grammar.direction_item.finditer(groups.get("directions") or ""):
            word = item.group("magnitude")
            directions.append((
                grammar.direction_names[_norm(item.group("direction"))],
                grammar.magnitude_names["change"].get(_norm(word)) if word else "moderate",
            ))
    elif kind == "statement":
        category, _, bin_ = rest.partition(".")
        if category == "distance_to":
            category = "distance"
        directions = [(f"{category}.{bin_}", None)]
    elif kind == "distance_change" and rest.endswith("_to"):
        directions = [(rest[: -len("_to")], magnitude)]
    else:
        directions = [(rest, magnitude)]

    edits: List[ParsedEdit] = []
    for name in expand_subject(subject):
        subjects = (name, reference) if reference is not None else (name,)
        for direction, mag in directions:
            edits.append(ParsedEdit(kind=kind, subjects=subjects, direction=direction, magnitude=mag, span=m.span()))
    return edits


def parse_modifier(text: str, bank: Union[TemplateBank, InstructionGrammar]) -> ParseResult:
    """Match clauses left to right; never raises on any input.

    At each clause start the longest matching template wins (ties go to
    bank order). Text no template accepts is reported as an unknown span
    running to the next transition.
    """
    grammar = bank if isinstance(bank, InstructionGrammar) else compile_grammar(bank)
    result = ParseResult()
    pos, n = 0, len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break

        best: Optional[Tuple[Clause, "re.Match[str]"]] = None
        for clause in grammar.clauses:
            m = clause.pattern.match(text, pos)
            if m is not None and (best is None or m.end() > best[1].end()):
                best = (clause, m)

        edits = _clause_edits(best[0], best[1], grammar) if best is not None else None
        if best is not None and edits is not None:
            result.edits.extend(edits)
            pos = best[1].end()
        else:
            sep = grammar.separator.search(text, pos)
            end = sep.start() if sep is not None else n
            chunk = text[pos:end].rstrip()
            if chunk:
                result.unknown_spans.append(UnknownSpan(text=chunk, span=(pos, pos + len(chunk))))
            pos = end

        sep = grammar.separator.match(text, pos)
        if sep is not None and sep.end() > pos:
            pos = sep.end()
    return result


def canonical(edits: Sequence[ParsedEdit]) -> List[CanonicalCode]:
    return sort_canonical([
        CanonicalCode(kind=e.kind, subjects=e.subjects, direction=e.direction, magnitude=e.magnitude) for e in edits
    ])


def mirror_canonical(code: CanonicalCode) -> CanonicalCode:
    """The code describing the mirror image of the same change."""
    direction = code.direction
    if code.kind in ("displacement", "orientation"):
        direction = mirror_direction(direction)
    elif code.kind == "statement" and direction.startswith("relpos_x."):
        swap = {"positive": "negative", "negative": "positive"}
        category, _, bin_ = direction.partition(".")
        direction = f"{category}.{swap.get(bin_, bin_)}"
    subjects = tuple(mirror_name(s) for s in code.subjects)
    return code.model_copy(update={"subjects": subjects, "direction": direction})


def _same(a: CanonicalCode, b: CanonicalCode) -> bool:
    if (a.kind, a.subjects, a.direction) != (b.kind, b.subjects, b.direction):
        return False
    return a.magnitude is None or b.magnitude is None or a.magnitude == b.magnitude


def compare_codes(expected: Sequence[CanonicalCode], parsed: Sequence[CanonicalCode]) -> RoundtripReport:
    """Multiset comparison; magnitudes count only when both sides carry one."""
    remaining = list(parsed)
    report = RoundtripReport()
    for code in expected:
        hit = next((i for i, other in enumerate(remaining) if _same(code, other)), None)
        if hit is None:
            report.missing.append(code)
        else:
            report.matched.append(code)
            remaining.pop(hit)
    report.extra = remaining
    return report


def check_directions(
    edits: Sequence[ParsedEdit], kps_a: KeypointSet, kps_b: KeypointSet, skel: SkeletonDef
) -> List[CanonicalCode]:
    """Parsed paircode edits whose direction disagrees with the geometric delta."""
    violations: List[CanonicalCode] = []
    for edit in edits:
        if edit.kind not in _PAIRCODE_KINDS:
            continue
        axis = DIRECTION_AXIS.get(edit.direction) if edit.kind == "displacement" else None
        delta = slot_delta((edit.kind, edit.subjects, axis), kps_a, kps_b, skel)
        if delta != 0.0 and direction_of(edit.kind, axis, delta) != edit.direction:
            violations.extend(canonical([edit]))
    return violations


def roundtrip_check(
    plan: InstructionPlan,
    bank: TemplateBank,
    seed: int,
    kps_a: Optional[KeypointSet] = None,
    kps_b: Optional[KeypointSet] = None,
    skel: Optional[SkeletonDef] = None,
    grammar: Optional[InstructionGrammar] = None,
) -> RoundtripReport:
    """Verbalize a plan, parse the text and compare the code multisets.

    With both keypoint sets and a skeleton, parsed directions are also
    checked against the sign of the geometric change.
    """
    text = verbalize(plan, bank, seed)
    parsed = parse_modifier(text, grammar or bank)
    report = compare_codes(canonical_codes(plan), canonical(parsed.edits))
    report.unknown_spans = parsed.unknown_spans
    if kps_a is not None and kps_b is not None and skel is not None:
        report.sign_violations = check_directions(parsed.edits, kps_a, kps_b, skel)
    if not report.ok:
        logger.debug("[parser] round trip failed for %r", text)
    return report
