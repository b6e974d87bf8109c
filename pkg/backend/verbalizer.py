"""Surface realization of instruction plans, plus text-level flip and lint.

The template bank (data/templates.txt) holds the sentences, transitions,
verb forms and subject phrases. The instruction parser compiles the same
bank into its grammar, so anything verbalized here can be parsed back.
"""
import logging
import re
import shlex
from pathlib import Path
from typing import Dict, List, Optional, Pattern, Sequence, Set, Tuple, Union

from pydantic import BaseModel, ConfigDict

from errors import StructuralError, TemplateCoverageError
from pipeline import make_rng
from schemas import InstructionPlan, LintProfile, LintViolation, OrientationCode, PlanItem

logger = logging.getLogger(__name__)

PLACEHOLDERS = {"subject", "reference", "magnitude", "directions"}
VERB_MARK = re.compile(r"<([a-z]+)>")
PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")
FORMS = ("imperative", "gerund", "keep")


class Transition(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    form: str
    text: str

    @property
    def starts_sentence(self) -> bool:
        return self.text.strip().startswith(".")


class TemplateBank(BaseModel):
    model_config = ConfigDict(frozen=True)

    templates: Dict[str, Tuple[str, ...]]
    transitions: Tuple[Transition, ...]
    gerunds: Dict[str, str]
    magnitudes: Dict[str, Dict[str, str]]
    directions: Dict[str, str]
    subjects: Dict[str, str]
    key_subjects: Dict[str, Tuple[str, ...]]
    key_references: Dict[str, Tuple[str, ...]]

    @property
    def sentence(self) -> Transition:
        for t in self.transitions:
            if t.starts_sentence:
                return t
        raise StructuralError("Template bank has no sentence-breaking transition")

    def allowed_subjects(self, key: str) -> Tuple[str, ...]:
        return _longest_prefix(self.key_subjects, key)

    def allowed_references(self, key: str) -> Tuple[str, ...]:
        return _longest_prefix(self.key_references, key)

    def magnitude_words(self, key: str) -> Dict[str, str]:
        return self.magnitudes["orientation" if key.startswith("orientation.") else "change"]


def _longest_prefix(table: Dict[str, Tuple[str, ...]], key: str) -> Tuple[str, ...]:
    parts = key.split(".")
    for n in range(len(parts), 0, -1):
        found = table.get(".".join(parts[:n]))
        if found is not None:
            return found
    return ()


def _names(value: str) -> Tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def parse_bank(text: str, origin: str = "<templates>") -> TemplateBank:
    """Parse the template bank format documented at the top of data/templates.txt."""
    templates: Dict[str, List[str]] = {}
    transitions: List[Transition] = []
    gerunds: Dict[str, str] = {}
    magnitudes: Dict[str, Dict[str, str]] = {}
    directions: Dict[str, str] = {}
    subjects: Dict[str, str] = {}
    key_subjects: Dict[str, Tuple[str, ...]] = {}
    key_references: Dict[str, Tuple[str, ...]] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{origin}:{lineno}"
        if line.startswith("@transition"):
            parts = shlex.split(line)
            if len(parts) != 4 or parts[2] not in FORMS:
                raise StructuralError(f'{where}: expected @transition <name> <form> "<text>"')
            transitions.append(Transition(name=parts[1], form=parts[2], text=parts[3]))
            continue
        if line.startswith("@"):
            head, eq, value = line.partition("=")
            if not eq:
                raise StructuralError(f"{where}: directive needs '='")
            words = head.split()
            directive, args, value = words[0], words[1:], value.strip()
            if directive == "@verb" and len(args) == 1:
                gerunds[args[0]] = value
            elif directive == "@magnitude" and len(args) == 2:
                magnitudes.setdefault(args[0], {})[args[1]] = value
            elif directive == "@direction" and len(args) == 1:
                directions[args[0]] = value
            elif directive == "@subject" and len(args) == 1:
                subjects[args[0]] = value
            elif directive == "@subjects" and len(args) == 1:
                key_subjects[args[0]] = _names(value)
            elif directive == "@references" and len(args) == 1:
                key_references[args[0]] = _names(value)
            else:
                raise StructuralError(f"{where}: unknown directive '{head.strip()}'")
            continue
        key, bar, template = line.partition("|")
        if not bar or not key.strip() or not template.strip():
            raise StructuralError(f"{where}: expected '<key> | <template>'")
        templates.setdefault(key.strip(), []).append(" ".join(template.split()))

    bank = TemplateBank(
        templates={k: tuple(v) for k, v in templates.items()},
        transitions=tuple(transitions),
        gerunds=gerunds,
        magnitudes=magnitudes,
        directions=directions,
        subjects=subjects,
        key_subjects=key_subjects,
        key_references=key_references,
    )
    _check_bank(bank, origin)
    return bank


def _check_bank(bank: TemplateBank, origin: str) -> None:
    if not bank.transitions:
        raise StructuralError(f"{origin}: no transitions")
    _ = bank.sentence
    for family in ("change", "orientation"):
        if family not in bank.magnitudes:
            raise StructuralError(f"{origin}: missing @magnitude {family} entries")
    for key, templates in bank.templates.items():
        for template in templates:
            found = set(PLACEHOLDER.findall(template))
            if found - PLACEHOLDERS:
                raise StructuralError(f"{origin}: '{key}' uses unknown placeholders {sorted(found - PLACEHOLDERS)}")
            for verb in VERB_MARK.findall(template):
                if verb not in bank.gerunds:
                    raise StructuralError(f"{origin}: no gerund for verb '{verb}' in '{key}'")
            if template.split()[0] == "{magnitude}":
                raise StructuralError(f"{origin}: '{key}' cannot start with {{magnitude}}")
            if not bank.allowed_subjects(key):
                raise StructuralError(f"{origin}: no @subjects entry covers '{key}'")
            if "reference" in found and not bank.allowed_references(key):
                raise StructuralError(f"{origin}: no @references entry covers '{key}'")
            kind = key.split(".")[0]
            if kind in ("angle_change", "distance_change", "displacement", "orientation") and not (
                found & {"magnitude", "directions"}
            ):
                raise StructuralError(f"{origin}: '{key}' must render the magnitude")


def load_bank(path: Path) -> TemplateBank:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise StructuralError(f"Cannot read template bank {path}: {e}") from e
    bank = parse_bank(text, origin=str(path))
    logger.debug("[verbalizer] loaded %d template keys from %s", len(bank.templates), path)
    return bank


# ===== verbalize =====
def orientation_item(code: OrientationCode) -> PlanItem:
    # verbalized like any other item; its canonical form lives on the plan
    return PlanItem(
        key=f"orientation.{code.direction}",
        kind="orientation",
        subject="body",
        directions=((code.direction, code.magnitude),),
        codes=(),
    )


def _phrase(bank: TemplateBank, name: Optional[str], key: str) -> str:
    if name is None or name not in bank.subjects:
        raise TemplateCoverageError(f"{key} (subject '{name}')")
    return bank.subjects[name]


def direction_list(bank: TemplateBank, directions: Sequence[Tuple[str, Optional[str]]]) -> str:
    words = bank.magnitudes["change"]
    phrases = [
        " ".join(w for w in (words.get(magnitude or "moderate", ""), bank.directions[direction]) if w)
        for direction, magnitude in directions
    ]
    if len(phrases) == 1:
        return phrases[0]
    return ", ".join(phrases[:-1]) + " and " + phrases[-1]


def fill_template(template: str, item: PlanItem, bank: TemplateBank, form: str) -> str:
    """Fill one template for one plan item in the given verb form."""
    def verb(m: "re.Match[str]") -> str:
        return bank.gerunds[m.group(1)] if form == "gerund" else m.group(1)

    def slot(m: "re.Match[str]") -> str:
        name = m.group(1)
        if name == "subject":
            return _phrase(bank, item.subject, item.key)
        if name == "reference":
            return _phrase(bank, item.reference, item.key)
        if name == "magnitude":
            magnitude = item.directions[0][1] if item.directions else None
            return bank.magnitude_words(item.key).get(magnitude or "moderate", "")
        return direction_list(bank, item.directions)

    text = PLACEHOLDER.sub(slot, VERB_MARK.sub(verb, template))
    return " ".join(text.split())


def _capitalize(text: str) -> str:
    return text[:1].upper() + text[1:]


def verbalize(plan: InstructionPlan, bank: TemplateBank, seed: int) -> str:
    """Render a plan as modifier text.

    One template is drawn per item and items are joined by drawn
    transitions; statements and the orientation sentence always stand as
    their own sentences.

    Raises:
        TemplateCoverageError: an item has no template.
    """
    units: List[PlanItem] = []
    if plan.orientation is not None:
        units.append(orientation_item(plan.orientation))
    units.extend(plan.items)
    if not units:
        return ""

    rng = make_rng(seed)
    sentence = bank.sentence
    text = ""
    form = "imperative"
    previous: Optional[PlanItem] = None
    for unit in units:
        templates = bank.templates.get(unit.key)
        if not templates:
            raise TemplateCoverageError(unit.key)
        if previous is None:
            transition = None
        elif unit.kind == "statement" or previous.kind in ("statement", "orientation"):
            transition = sentence
        else:
            transition = bank.transitions[int(rng.integers(len(bank.transitions)))]
        if transition is not None and transition.form != "keep":
            form = transition.form
        if transition is None or transition.starts_sentence:
            form = "imperative"

        clause = fill_template(templates[int(rng.integers(len(templates)))], unit, bank, form)
        if transition is None:
            text = _capitalize(clause)
        elif transition.starts_sentence:
            text += transition.text.rstrip() + " " + _capitalize(clause)
        else:
            text += transition.text + clause
        previous = unit
    return text + "."


# ===== lr_flip_text =====
class SideGuard(BaseModel):
    model_config = ConfigDict(frozen=True)

    phrases: Tuple[str, ...]

    def pattern(self) -> Optional[Pattern[str]]:
        alternatives: List[str] = []
        for phrase in self.phrases:
            words = [
                "(?:left|right)" if w.lower() in ("left", "right") else re.escape(w)
                for w in phrase.split()
            ]
            alternatives.append(r"\s+".join(words))
        if not alternatives:
            return None
        return re.compile(r"\b(?:" + "|".join(alternatives) + r")\b", re.IGNORECASE)


def parse_guard(text: str) -> SideGuard:
    phrases = tuple(
        " ".join(line.split()) for line in (raw.split("#", 1)[0] for raw in text.splitlines()) if line.strip()
    )
    return SideGuard(phrases=phrases)


def load_guard(path: Path) -> SideGuard:
    try:
        return parse_guard(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise StructuralError(f"Cannot read side-word guard {path}: {e}") from e


_SIDE_WORD = re.compile(r"\b(left|right)(?=(?:wards?|most)?\b)", re.IGNORECASE)
_SWAP = {"left": "right", "right": "left"}


def _match_case(template: str, word: str) -> str:
    if template.isupper():
        return word.upper()
    if template[:1].isupper():
        return word.capitalize()
    return word


def lr_flip_text(text: str, guard: Optional[SideGuard] = None) -> str:
    """Swap left and right side words, except inside guarded collocations."""
    guarded: List[Tuple[int, int]] = []
    pattern = guard.pattern() if guard is not None else None
    if pattern is not None:
        guarded = [m.span() for m in pattern.finditer(text)]

    def swap(m: "re.Match[str]") -> str:
        if any(start <= m.start() < end for start, end in guarded):
            return m.group(0)
        word = m.group(1)
        return _match_case(word, _SWAP[word.lower()])

    return _SIDE_WORD.sub(swap, text)


# ===== lint_modifier =====
WORD = re.compile(r"[A-Za-z]+(?:['-][A-Za-z]+)*")

BODY_PART_LEMMAS: Dict[str, str] = {
    "ankle": "ankle", "ankles": "ankle",
    "arm": "arm", "arms": "arm",
    "calf": "calf", "calves": "calf",
    "chest": "chest",
    "elbow": "elbow", "elbows": "elbow",
    "finger": "finger", "fingers": "finger",
    "foot": "foot", "feet": "foot",
    "forearm": "forearm", "forearms": "forearm",
    "hand": "hand", "hands": "hand",
    "head": "head",
    "heel": "heel", "heels": "heel",
    "hip": "hip", "hips": "hip",
    "knee": "knee", "knees": "knee",
    "leg": "leg", "legs": "leg",
    "neck": "neck",
    "palm": "palm", "palms": "palm",
    "shin": "shin", "shins": "shin",
    "shoulder": "shoulder", "shoulders": "shoulder",
    "spine": "spine",
    "thigh": "thigh", "thighs": "thigh",
    "toe": "toe", "toes": "toe",
    "torso": "torso",
    "waist": "waist",
    "wrist": "wrist", "wrists": "wrist",
}

_NUMBER = r"(?:\d+(?:[.,]\d+)?|a|an|one|two|three|four|five|six|seven|eight|nine|ten|half\s+a)"
_METRIC = re.compile(
    r"\b(?:(?:kilo|centi|milli)?met(?:er|re)s?|cm|mm|km|inch(?:es)?|yards?)\b"
    r"|\b\d+(?:[.,]\d+)?\s*(?:m|ft|in)\b"
    r"|\b" + _NUMBER + r"\s+(?:foot|feet)\s+(?:apart|away|wide|high|higher|lower|long|from|above|below|forward|back|backward)\b"
    r"|\b\d+(?:[.,]\d+)?\s*(?:foot|feet)\b",
    re.IGNORECASE,
)

MIN_WORDS = 10
MIN_BODY_PARTS = 3


def words(text: str) -> List[str]:
    return WORD.findall(text)


def body_parts(text: str) -> Set[str]:
    """Distinct side-agnostic body-part lemmas mentioned in a text."""
    return {BODY_PART_LEMMAS[w.lower()] for w in words(text) if w.lower() in BODY_PART_LEMMAS}


def lint_modifier(text: str, profile: Union[LintProfile, str] = LintProfile.human) -> List[LintViolation]:
    """Check a modifier against the annotation quality rules.

    The auto profile skips the minimum length, which near-identical
    generated pairs cannot meet.
    """
    profile = LintProfile(profile)
    violations: List[LintViolation] = []

    count = len(words(text))
    if profile == LintProfile.human and count < MIN_WORDS:
        violations.append(LintViolation(rule="min_words", message=f"{count} words, at least {MIN_WORDS} expected"))

    parts = body_parts(text)
    if len(parts) < MIN_BODY_PARTS:
        violations.append(LintViolation(
            rule="min_body_parts",
            message=f"{len(parts)} distinct body parts mentioned, at least {MIN_BODY_PARTS} expected",
        ))

    units = [m.group(0) for m in _METRIC.finditer(text)]
    if units:
        violations.append(LintViolation(rule="metric_unit", message=f"distance metric used: {', '.join(units)}"))
    return violations
