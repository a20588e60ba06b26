"""Rule-based two-part reward: structural format check plus symbolic answer equivalence.

The format check accepts exactly one ``<think>...</think>`` block followed by one
``<answer>...</answer>`` block (whitespace allowed between them, nothing else).
The accuracy check extracts a candidate answer, normalizes it into a comparable
representation (exact rationals where the text warrants exactness, decimals with
recorded precision otherwise, uppercase option letters, numeric vectors), and
compares against the ground truth with equivalence semantics rather than string
equality.

All functions here are pure; malformed input yields a zero score, never an
exception, except for ``parse_answer`` which raises :class:`UnparseableAnswer`
to signal that the accuracy reward must be 0.
"""

from __future__ import annotations

import enum
import json
import re
import sys
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Optional

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
ANSWER_OPEN = "<answer>"
ANSWER_CLOSE = "</answer>"

DEFAULT_ALPHA = 0.5
DEFAULT_REL_TOL = 1e-6
DEFAULT_ABS_TOL = 1e-9
DEFAULT_OPTION_LETTERS = "ABCD"


class UnparseableAnswer(ValueError):
    """Raised when a raw answer admits no supported kind.

    Callers that compute rewards must treat this as accuracy 0, not a failure.
    """


class AnswerKind(enum.Enum):
    NUMERIC = "numeric"
    OPTION = "option"
    LATEX_EXPR = "latex_expr"
    NUMERIC_LIST = "numeric_list"


@dataclass(frozen=True)
class NumericValue:
    """A parsed number: exact rational plus how the text rendered it.

    ``exact`` is True when the source text was an integer or fraction form
    (those compare exactly); decimal renderings are inexact and compare under
    tolerance. ``decimals`` records the number of fractional digits of a
    decimal rendering so canonical text round-trips.
    """

    value: Fraction
    exact: bool = True
    decimals: Optional[int] = None

    def as_float(self) -> float:
        return float(self.value)

    def render(self) -> str:
        if self.exact:
            if self.value.denominator == 1:
                return str(self.value.numerator)
            return f"{self.value.numerator}/{self.value.denominator}"
        places = max(1, self.decimals if self.decimals is not None else 12)
        sign = "-" if self.value < 0 else ""
        scaled = abs(self.value) * 10**places
        digits = str(scaled.numerator // scaled.denominator).rjust(places + 1, "0")
        return sign + digits[:-places] + "." + digits[-places:]


@dataclass(frozen=True)
class ParsedAnswer:
    kind: AnswerKind
    raw: str
    number: Optional[NumericValue] = None
    option: Optional[str] = None
    items: Optional[tuple[NumericValue, ...]] = None
    ordered: bool = True
    expr: Optional[str] = None

    def canonical_text(self) -> str:
        """Normalized rendering that re-parses to an equal ParsedAnswer."""
        if self.kind is AnswerKind.NUMERIC:
            return self.number.render()
        if self.kind is AnswerKind.OPTION:
            return self.option
        if self.kind is AnswerKind.NUMERIC_LIST:
            body = ", ".join(item.render() for item in self.items)
            return f"[{body}]" if self.ordered else "{" + body + "}"
        return self.expr

    def same_value(self, other: "ParsedAnswer") -> bool:
        """Structural equality of the canonical value (used by idempotence tests)."""
        if self.kind is not other.kind:
            return False
        if self.kind is AnswerKind.NUMERIC:
            return self.number == other.number
        if self.kind is AnswerKind.OPTION:
            return self.option == other.option
        if self.kind is AnswerKind.NUMERIC_LIST:
            return self.items == other.items and self.ordered == other.ordered
        return self.expr == other.expr


@dataclass(frozen=True)
class FormatCheck:
    score: int
    think_span: Optional[tuple[int, int]] = None
    answer_span: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class RewardBreakdown:
    format_reward: float
    accuracy_reward: float
    alpha: float

    @property
    def reward(self) -> float:
        return self.alpha * self.format_reward + self.accuracy_reward


def check_format(response: str) -> FormatCheck:
    """Score 1 iff the trimmed response is exactly <think>..</think><answer>..</answer>.

    Each tag must occur exactly once, in order, with at most whitespace between
    the think block and the answer block. Spans index into the original text.
    """
    if not isinstance(response, str):
        return FormatCheck(score=0)
    stripped = response.strip()
    if not stripped:
        return FormatCheck(score=0)
    counts = [stripped.count(tag) for tag in (THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE)]
    if counts != [1, 1, 1, 1]:
        return FormatCheck(score=0)
    if not stripped.startswith(THINK_OPEN) or not stripped.endswith(ANSWER_CLOSE):
        return FormatCheck(score=0)
    i_to = stripped.index(THINK_OPEN)
    i_tc = stripped.index(THINK_CLOSE)
    i_ao = stripped.index(ANSWER_OPEN)
    i_ac = stripped.index(ANSWER_CLOSE)
    if not (i_to < i_tc < i_ao < i_ac):
        return FormatCheck(score=0)
    between = stripped[i_tc + len(THINK_CLOSE) : i_ao]
    if between.strip():
        return FormatCheck(score=0)
    offset = len(response) - len(response.lstrip())
    think_span = (offset + i_to + len(THINK_OPEN), offset + i_tc)
    answer_span = (offset + i_ao + len(ANSWER_OPEN), offset + i_ac)
    return FormatCheck(score=1, think_span=think_span, answer_span=answer_span)


_BOXED_RE = re.compile(r"\\boxed\s*\{")
_MARKER_RE = re.compile(r"(?:answer\s+is|answer\s*:)", re.IGNORECASE)


def _boxed_contents(text: str) -> list[str]:
    """All \\boxed{...} payloads with balanced braces, in order."""
    out = []
    for m in _BOXED_RE.finditer(text):
        depth = 1
        i = m.end()
        start = i
        while i < len(text) and depth:
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
            i += 1
        if depth == 0:
            out.append(text[start : i - 1])
    return out


def _unbox_whole(text: str) -> Optional[str]:
    """Payload of \\boxed{...} when it spans the entire string, else None."""
    m = _BOXED_RE.match(text)
    if not m:
        return None
    depth, i = 1, m.end()
    while i < len(text) and depth:
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
        i += 1
    if depth == 0 and text[i:].strip() == "":
        return text[m.end() : i - 1].strip()
    return None


def _strip_wrappers(text: str) -> str:
    """Remove one layer of $...$ and one layer of \\boxed{...} around the text."""
    text = text.strip()
    if len(text) >= 2 and text.startswith("$") and text.endswith("$"):
        text = text[1:-1].strip()
    inner = _unbox_whole(text)
    if inner is not None:
        text = inner
    if len(text) >= 2 and text.startswith("$") and text.endswith("$"):
        text = text[1:-1].strip()
    return text


def extract_answer(response: str) -> str:
    """Pull the candidate answer string out of a model response.

    Priority: single <answer> block, else last \\boxed{...}, else the text
    after the last "answer is"/"Answer:" marker, else the whole trimmed
    response. One layer of $...$ / \\boxed{...} wrapping is removed.
    """
    if not isinstance(response, str):
        return ""
    text = response.replace("\\\\", "\\")
    if text.count(ANSWER_OPEN) == 1 and text.count(ANSWER_CLOSE) == 1:
        start = text.index(ANSWER_OPEN) + len(ANSWER_OPEN)
        end = text.index(ANSWER_CLOSE)
        if start <= end:
            return _strip_wrappers(text[start:end])
    boxed = _boxed_contents(text)
    if boxed:
        return _strip_wrappers(boxed[-1])
    markers = list(_MARKER_RE.finditer(text))
    if markers:
        tail = text[markers[-1].end() :]
        tail = tail.lstrip(" \t:").strip()
        if tail:
            return _strip_wrappers(tail)
    return _strip_wrappers(text.strip())


_SPACING_MACROS = ("\\left", "\\right", "\\,", "\\;", "\\!", "\\ ", "\\%", "\\$")
_NUMBER_RE = re.compile(r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][-+]?\d+)?")
_FRAC_RE = re.compile(r"^\\frac\{([-+]?\d+)\}\{([-+]?\d+)\}$")
_SLASH_RE = re.compile(r"^([-+]?\d+)\s*/\s*([-+]?\d+)$")
_DECIMAL_RE = re.compile(r"^[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.(\d+))?(?:[eE]([-+]?\d+))?$")


def _normalize_text(raw: str) -> str:
    text = raw.replace("\\\\", "\\").strip()
    text = _strip_wrappers(text)
    text = text.replace("\\dfrac", "\\frac").replace("\\tfrac", "\\frac")
    for macro in _SPACING_MACROS:
        text = text.replace(macro, "" if macro not in ("\\,", "\\;", "\\!", "\\ ") else " ")
    text = text.replace("~", " ")
    text = text.strip()
    while text.endswith(".") or text.endswith("%"):
        text = text[:-1].rstrip()
    if text.startswith("+"):
        text = text[1:].lstrip()
    return text.strip()


def _parse_numeric_token(token: str) -> Optional[NumericValue]:
    token = token.strip()
    frac = _FRAC_RE.match(token)
    if frac:
        num, den = int(frac.group(1)), int(frac.group(2))
        if den == 0:
            return None
        return NumericValue(Fraction(num, den), exact=True)
    slash = _SLASH_RE.match(token)
    if slash:
        num, den = int(slash.group(1)), int(slash.group(2))
        if den == 0:
            return None
        return NumericValue(Fraction(num, den), exact=True)
    m = _DECIMAL_RE.match(token)
    if m:
        plain = token.replace(",", "")
        frac_digits = m.group(1)
        exponent = m.group(2)
        value = Fraction(Decimal(plain))
        if frac_digits is None and exponent is None:
            return NumericValue(value, exact=True)
        decimals = len(frac_digits) if frac_digits else 0
        if exponent:
            decimals = max(1, decimals - int(exponent))
        return NumericValue(value, exact=False, decimals=decimals)
    return None


def _parse_option_token(token: str, letters: str) -> Optional[str]:
    token = token.strip()
    m = re.match(r"^\(?\s*([A-Za-z])\s*\)?$", token)
    if m and m.group(1).upper() in letters:
        return m.group(1).upper()
    return None


_LIST_SPLIT_RE = re.compile(r"\s*,\s*")


def _parse_list_token(token: str) -> Optional[tuple[tuple[NumericValue, ...], bool]]:
    token = token.strip()
    ordered = True
    if token.startswith("[") and token.endswith("]"):
        body = token[1:-1]
    elif token.startswith("{") and token.endswith("}"):
        body = token[1:-1]
        ordered = False
    elif token.startswith("(") and token.endswith(")") and "," in token:
        body = token[1:-1]
    else:
        return None
    parts = [p for p in _LIST_SPLIT_RE.split(body.strip()) if p]
    if not parts:
        return None
    items = []
    for part in parts:
        value = _parse_numeric_token(_normalize_text(part))
        if value is None:
            return None
        items.append(value)
    if not ordered:
        items.sort(key=lambda v: v.value)
    return tuple(items), ordered


def _salvage(text: str, kind: Optional[AnswerKind], letters: str) -> Optional[ParsedAnswer]:
    """Lenient extraction of a trailing value from free text, per judge conventions."""
    if kind is AnswerKind.NUMERIC_LIST or kind is None:
        bracket = re.search(r"\[[^\[\]]*\]", text)
        if bracket:
            parsed = _parse_list_token(bracket.group(0))
            if parsed:
                return ParsedAnswer(AnswerKind.NUMERIC_LIST, raw=text, items=parsed[0], ordered=parsed[1])
    if kind is AnswerKind.NUMERIC_LIST:
        numbers = [_parse_numeric_token(m.group(0)) for m in _NUMBER_RE.finditer(text)]
        numbers = [n for n in numbers if n is not None]
        if numbers:
            return ParsedAnswer(AnswerKind.NUMERIC_LIST, raw=text, items=tuple(numbers), ordered=True)
        return None
    if kind is AnswerKind.OPTION:
        paren = re.search(r"\(\s*([A-Za-z])\s*\)", text)
        if paren and paren.group(1).upper() in letters:
            return ParsedAnswer(AnswerKind.OPTION, raw=text, option=paren.group(1).upper())
        standalone = [m for m in re.finditer(r"(?<![A-Za-z])([A-Za-z])(?![A-Za-z])", text) if m.group(1).upper() in letters]
        if standalone:
            return ParsedAnswer(AnswerKind.OPTION, raw=text, option=standalone[-1].group(1).upper())
        return None
    matches = list(_NUMBER_RE.finditer(text))
    if matches:
        value = _parse_numeric_token(matches[-1].group(0))
        if value is not None:
            return ParsedAnswer(AnswerKind.NUMERIC, raw=text, number=value)
    return None


def parse_answer(
    raw: str,
    expected_kind: Optional[AnswerKind] = None,
    option_letters: str = DEFAULT_OPTION_LETTERS,
) -> ParsedAnswer:
    """Normalize a raw answer string into a comparable representation.

    Fractions and integers become exact rationals, decimal renderings keep a
    precision record, option letters are uppercased, bracketed comma lists
    become numeric vectors. When ``expected_kind`` is given and the text admits
    that kind, it wins. Raises UnparseableAnswer when no supported kind fits.
    """
    if raw is None:
        raise UnparseableAnswer("answer text is None")
    text = _normalize_text(str(raw))
    if not text:
        raise UnparseableAnswer("empty answer text")

    def try_kind(kind: AnswerKind) -> Optional[ParsedAnswer]:
        if kind is AnswerKind.NUMERIC:
            value = _parse_numeric_token(text)
            if value is not None:
                return ParsedAnswer(kind, raw=str(raw), number=value)
        elif kind is AnswerKind.OPTION:
            letter = _parse_option_token(text, option_letters)
            if letter is not None:
                return ParsedAnswer(kind, raw=str(raw), option=letter)
        elif kind is AnswerKind.NUMERIC_LIST:
            parsed = _parse_list_token(text)
            if parsed is not None:
                return ParsedAnswer(kind, raw=str(raw), items=parsed[0], ordered=parsed[1])
        elif kind is AnswerKind.LATEX_EXPR:
            canonical = re.sub(r"\s+", " ", text).strip()
            if canonical:
                return ParsedAnswer(kind, raw=str(raw), expr=canonical)
        return None

    if expected_kind is not None:
        direct = try_kind(expected_kind)
        if direct is not None:
            return direct
        salvaged = _salvage(text, expected_kind, option_letters)
        if salvaged is not None:
            return salvaged
        raise UnparseableAnswer(f"cannot parse {raw!r} as {expected_kind.value}")

    for kind in (AnswerKind.NUMERIC, AnswerKind.NUMERIC_LIST, AnswerKind.OPTION):
        direct = try_kind(kind)
        if direct is not None:
            return direct
    # leading parenthesized letter followed by explanation, e.g. "(B) 8/11"
    lead = re.match(r"^\(\s*([A-Za-z])\s*\)\s+\S", text)
    if lead and lead.group(1).upper() in option_letters:
        return ParsedAnswer(AnswerKind.OPTION, raw=str(raw), option=lead.group(1).upper())
    salvaged = _salvage(text, None, option_letters)
    if salvaged is not None:
        return salvaged
    raise UnparseableAnswer(f"no supported kind admits {raw!r}")


def _numbers_match(a: NumericValue, b: NumericValue, rel_tol: float, abs_tol: float) -> bool:
    if a.exact and b.exact:
        return a.value == b.value
    x, y = float(a.value), float(b.value)
    return abs(x - y) <= max(abs_tol, rel_tol * max(abs(x), abs(y)))


def check_equivalence(
    candidate: ParsedAnswer,
    truth: ParsedAnswer,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> int:
    """1 iff the two parsed answers are equivalent; incompatible kinds give 0."""
    if candidate.kind is not truth.kind:
        return 0
    if candidate.kind is AnswerKind.NUMERIC:
        return int(_numbers_match(candidate.number, truth.number, rel_tol, abs_tol))
    if candidate.kind is AnswerKind.OPTION:
        return int(candidate.option == truth.option)
    if candidate.kind is AnswerKind.NUMERIC_LIST:
        a_items, b_items = candidate.items, truth.items
        if len(a_items) != len(b_items):
            return 0
        if not (candidate.ordered and truth.ordered):
            a_items = tuple(sorted(a_items, key=lambda v: v.value))
            b_items = tuple(sorted(b_items, key=lambda v: v.value))
        return int(all(_numbers_match(x, y, rel_tol, abs_tol) for x, y in zip(a_items, b_items)))
    return int(candidate.expr == truth.expr)


def score(
    response: str,
    ground_truth: str,
    alpha: float = DEFAULT_ALPHA,
    expected_kind: Optional[AnswerKind] = None,
    rel_tol: float = DEFAULT_REL_TOL,
    option_letters: str = DEFAULT_OPTION_LETTERS,
) -> RewardBreakdown:
    """Combined reward alpha*format + accuracy; accuracy is never gated on format."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    r_f = float(check_format(response).score)
    try:
        truth = parse_answer(ground_truth, expected_kind, option_letters)
        candidate = parse_answer(extract_answer(response), truth.kind, option_letters)
        r_a = float(check_equivalence(candidate, truth, rel_tol))
    except UnparseableAnswer:
        r_a = 0.0
    return RewardBreakdown(format_reward=r_f, accuracy_reward=r_a, alpha=alpha)


def score_jsonl(records, alpha: float = DEFAULT_ALPHA, truths_by_id: Optional[dict] = None):
    """Score an iterable of {"id", "response", "answer"?} dicts, yielding result dicts."""
    for rec in records:
        rid = rec.get("id")
        answer = rec.get("answer")
        if truths_by_id is not None and rid in truths_by_id:
            answer = truths_by_id[rid]
        breakdown = score(rec.get("response", ""), answer if answer is not None else "")
        yield {
            "id": rid,
            "r_f": breakdown.format_reward,
            "r_a": breakdown.accuracy_reward,
            "r": breakdown.reward,
        }


def run_verify_cli(responses_path: str, truths_path: Optional[str], alpha: float, out=sys.stdout) -> int:
    truths = None
    if truths_path:
        truths = {}
        with open(truths_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                truths[rec.get("id")] = rec.get("answer")
    with open(responses_path, encoding="utf-8") as fh:
        records = (json.loads(line) for line in fh if line.strip())
        for result in score_jsonl(records, alpha=alpha, truths_by_id=truths):
            out.write(json.dumps(result) + "\n")
    return 0
