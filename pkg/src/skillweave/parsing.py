"""Structured-output parsing: sectioned replies, yes/no verdicts, and answer
canonicalization.

Model replies throughout the pipeline follow a ``# HEADING`` section format.
Parsing is deliberately strict (every schema heading must appear exactly
once, in order, at the start of a line) because an ambiguous reply should
land in the parsing-error rejection bucket rather than be guessed at.
Text before the first schema heading is ignored (models like to open with
pleasantries).

Final answers are canonicalized to exact rationals where possible so that
majority voting compares values rather than surface strings: ``0.5`` and
``1/2`` agree, ``6`` and ``0`` do not. There is no epsilon; a question whose
answers only match approximately is ambiguous by our standards.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

from .errors import ParseError

__all__ = [
    "SectionSchema",
    "CanonicalAnswer",
    "parse_sections",
    "parse_verdict",
    "canonicalize_answer",
    "answers_equivalent",
    "VERDICT_HEADING",
    "GRADER_VERDICT_HEADING",
]

VERDICT_HEADING = "# FINAL ANSWER"
GRADER_VERDICT_HEADING = "# CORRECTNESS"

# Significant digits beyond which a decimal literal stays symbolic. Spurious
# equivalence between long decimals is worse than a missed one.
MAX_NUMERIC_DIGITS = 12

_GENERIC_HEADING_RE = re.compile(r"^#\s+\S")


@dataclass(frozen=True)
class SectionSchema:
    """Ordered list of required ``# HEADING`` literals for one reply format.

    ``allow_trailing`` controls whether heading-looking lines may appear
    inside the final section's body (e.g. a free-form ``# DETAILS`` tail).
    Strict single-verdict schemas set it to False so stray trailing sections
    are parse errors.
    """

    headings: tuple[str, ...]
    allow_trailing: bool = True

    def __post_init__(self) -> None:
        if not self.headings:
            raise ValueError("schema needs at least one heading")
        if len(set(self.headings)) != len(self.headings):
            raise ValueError("schema headings must be unique")


def parse_sections(text: str, schema: SectionSchema) -> dict[str, str]:
    """Split ``text`` into the bodies of the schema's headings.

    Returns a map heading -> body with bodies trimmed of leading/trailing
    blank lines. Raises ParseError on a missing, duplicated, out-of-order
    heading or an empty body.
    """
    lines = text.splitlines()
    positions: dict[str, list[int]] = {h: [] for h in schema.headings}
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped in positions:
            positions[stripped].append(i)

    for heading in schema.headings:
        found = positions[heading]
        if not found:
            raise ParseError(f"missing {heading}")
        if len(found) > 1:
            raise ParseError(f"duplicate {heading}")

    order = [positions[h][0] for h in schema.headings]
    if order != sorted(order):
        raise ParseError(
            "headings out of order: expected " + " then ".join(schema.headings)
        )

    bounds = order[1:] + [len(lines)]
    sections: dict[str, str] = {}
    for heading, start, stop in zip(schema.headings, order, bounds):
        body_lines = lines[start + 1 : stop]
        while body_lines and not body_lines[0].strip():
            body_lines.pop(0)
        while body_lines and not body_lines[-1].strip():
            body_lines.pop()
        if not body_lines:
            raise ParseError(f"empty body under {heading}")
        sections[heading] = "\n".join(body_lines)

    if not schema.allow_trailing:
        last_body = sections[schema.headings[-1]]
        for line in last_body.splitlines():
            if _GENERIC_HEADING_RE.match(line.strip()):
                raise ParseError(
                    f"unexpected section after {schema.headings[-1]}: {line.strip()!r}"
                )
    return sections


def parse_verdict(text: str, heading: str = VERDICT_HEADING) -> bool:
    """Extract a strict yes/no verdict from the given heading's section.

    The section body, lowercased and stripped of whitespace and terminal
    punctuation, must be exactly "yes" or "no". Returns True for yes.
    """
    sections = parse_sections(text, SectionSchema((heading,), allow_trailing=False))
    body = sections[heading].strip().rstrip(".!").strip().lower()
    if body == "yes":
        return True
    if body == "no":
        return False
    raise ParseError(f"verdict under {heading} is neither yes nor no: {body!r}")


@dataclass(frozen=True)
class CanonicalAnswer:
    """A final answer normalized for comparison.

    Numeric answers carry an exact rational and render back to a canonical
    string (so canonicalization is idempotent); everything else is kept as
    lowercased, whitespace-collapsed text.
    """

    kind: Literal["numeric", "symbolic"]
    numeric_value: Fraction | None
    normalized_text: str

    def __post_init__(self) -> None:
        if (self.kind == "numeric") != (self.numeric_value is not None):
            raise ValueError("numeric answers carry a value, symbolic ones do not")
        if not self.normalized_text:
            raise ValueError("normalized_text must be nonempty")


_BOXED_RE = re.compile(r"\\boxed\{(.*)\}\.?$", re.DOTALL)
_WRAPPERS = (("$$", "$$"), ("$", "$"), ("\\(", "\\)"), ("\\[", "\\]"))
_INT_RE = re.compile(r"[+-]?\d+")
_DECIMAL_RE = re.compile(r"[+-]?(?:\d+\.\d*|\.\d+)")
_SLASH_FRACTION_RE = re.compile(r"([+-]?\d+)\s*/\s*(\d+)")
_LATEX_FRACTION_RE = re.compile(r"([+-]?)\\[dt]?frac\{([+-]?\d+)\}\{([+-]?\d+)\}")


def _strip_math_wrappers(text: str) -> str:
    s = text.strip()
    changed = True
    while changed:
        changed = False
        for prefix, suffix in _WRAPPERS:
            if (
                len(s) > len(prefix) + len(suffix) - 1
                and s.startswith(prefix)
                and s.endswith(suffix)
                and (prefix != suffix or len(s) >= 2 * len(prefix))
            ):
                s = s[len(prefix) : len(s) - len(suffix)].strip()
                changed = True
        match = _BOXED_RE.match(s)
        if match:
            s = match.group(1).strip()
            changed = True
    return s


def _significant_digits(digits: str) -> int:
    trimmed = digits.lstrip("0")
    return len(trimmed) if trimmed else 1


def _parse_rational(text: str) -> Fraction | None:
    """Exact-rational parse of integers, decimals and simple fractions."""
    s = text.strip()
    if s.endswith(".") and _INT_RE.fullmatch(s[:-1]):
        s = s[:-1]  # "6." is the integer 6, not a malformed decimal
    if _INT_RE.fullmatch(s):
        if _significant_digits(s.lstrip("+-")) > MAX_NUMERIC_DIGITS:
            return None
        return Fraction(int(s))
    if _DECIMAL_RE.fullmatch(s):
        digits = s.lstrip("+-").replace(".", "")
        if _significant_digits(digits) > MAX_NUMERIC_DIGITS:
            return None
        return Fraction(s)
    match = _SLASH_FRACTION_RE.fullmatch(s)
    if match:
        num, den = int(match.group(1)), int(match.group(2))
        if den == 0:
            return None
        return Fraction(num, den)
    match = _LATEX_FRACTION_RE.fullmatch(s)
    if match:
        sign = -1 if match.group(1) == "-" else 1
        num, den = int(match.group(2)), int(match.group(3))
        if den == 0:
            return None
        return sign * Fraction(num, den)
    return None


def canonicalize_answer(text: str) -> CanonicalAnswer:
    """Normalize a raw final-answer string for equality comparison.

    Strips math-mode wrappers ($...$, \\(...\\), \\[...\\], \\boxed{...}),
    collapses whitespace, and attempts an exact-rational parse of integers,
    decimals, ``a/b`` and ``\\frac{a}{b}`` forms. Anything else becomes a
    symbolic answer keyed by its lowercased normalized text. Total: never
    raises on nonempty input.
    """
    if not text or not text.strip():
        raise ValueError("empty answer text")
    inner = _strip_math_wrappers(text)
    collapsed = re.sub(r"\s+", " ", inner).strip()
    if not collapsed:
        # Wrapper-stripping consumed everything (e.g. bare "$$"); fall back
        # to the collapsed original so normalized_text stays nonempty.
        fallback = re.sub(r"\s+", " ", text).strip().lower()
        return CanonicalAnswer("symbolic", None, fallback)
    value = _parse_rational(collapsed)
    if value is not None:
        return CanonicalAnswer("numeric", value, str(value))
    return CanonicalAnswer("symbolic", None, collapsed.lower())


def answers_equivalent(a: CanonicalAnswer, b: CanonicalAnswer) -> bool:
    """Exact rational equality for numeric pairs, text equality otherwise."""
    if a.kind == "numeric" and b.kind == "numeric":
        return a.numeric_value == b.numeric_value
    return a.normalized_text == b.normalized_text
