"""Parse model responses into answers per task protocol.

Extraction is total and deterministic: every response maps to exactly one
Extracted value, and protocol violations come back as out_of_format rather
than exceptions. The marker is matched case-insensitively, tolerating
markdown emphasis; when a response contains several marker lines (echoed
demonstrations), the last one wins.
"""

from __future__ import annotations

import re
import unicodedata
import warnings
from dataclasses import dataclass

ANSWER_MARKER = "The answer is"

# Optional markdown emphasis around the marker and an optional trailing colon:
# "**The answer is**: (C)." must parse like "The answer is C".
_MARKER_RE = re.compile(r"[*_]{0,3}the answer is[*_]{0,3}:?", re.IGNORECASE)
_THINK_RE_CACHE: dict[tuple[str, str], re.Pattern] = {}

# Settings whose instruction elicits an explicit gradual-translation ladder;
# their translation output is the ladder's final line, not the whole body.
GRADUAL_INSTRUCTION_KINDS = frozenset({"csicl", "zero_shot_gradual"})


@dataclass(frozen=True)
class Extracted:
    value: str | None
    out_of_format: bool
    method: str  # marker | bare_letter | last_line | none

    def __post_init__(self) -> None:
        if self.out_of_format != (self.value is None):
            raise ValueError("out_of_format must hold exactly when no value was extracted")


_OUT_OF_FORMAT = Extracted(value=None, out_of_format=True, method="none")


def strip_reasoning(text: str, open_marker: str = "<think>", close_marker: str = "</think>") -> str:
    """Drop reasoning blocks between the configured markers before extraction."""
    key = (open_marker, close_marker)
    pattern = _THINK_RE_CACHE.get(key)
    if pattern is None:
        pattern = re.compile(re.escape(open_marker) + r".*?" + re.escape(close_marker), re.DOTALL)
        _THINK_RE_CACHE[key] = pattern
    return pattern.sub("", text)


def _after_last_marker(response: str) -> str | None:
    """Text following the final marker occurrence, or None when absent."""
    last = None
    for match in _MARKER_RE.finditer(response):
        last = match
    if last is None:
        return None
    return response[last.end():]


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and (unicodedata.category(token[start]).startswith("P") or token[start].isspace()):
        start += 1
    while end > start and (unicodedata.category(token[end - 1]).startswith("P") or token[end - 1].isspace()):
        end -= 1
    return token[start:end]


def extract_mcq(response: str, letters: set[str] | tuple[str, ...]) -> Extracted:
    """Letter after the last answer marker, else a bare-letter response."""
    letters = set(letters)
    if not letters:
        raise ValueError("letters must be non-empty")

    tail = _after_last_marker(response)
    if tail is not None:
        tokens = tail.split()
        if tokens:
            candidate = _strip_punct(tokens[0])
            if len(candidate) == 1 and candidate.upper() in letters:
                return Extracted(candidate.upper(), False, "marker")

    bare = _strip_punct(response.strip())
    if len(bare) == 1 and bare.upper() in letters:
        return Extracted(bare.upper(), False, "bare_letter")
    return _OUT_OF_FORMAT


def extract_short_answer(response: str) -> Extracted:
    """Text after the last marker to end of line, else the whole response."""
    tail = _after_last_marker(response)
    if tail is not None:
        value = normalize_answer(tail.splitlines()[0] if tail.splitlines() else "")
        if value:
            return Extracted(value, False, "marker")
        return _OUT_OF_FORMAT
    value = normalize_answer(response)
    if value:
        return Extracted(value, False, "last_line")
    return _OUT_OF_FORMAT


def extract_translation(response: str, setting) -> Extracted:
    """Whole response, or the ladder's final line for gradual-instruction settings."""
    kind = getattr(setting, "kind", str(setting))
    if kind in GRADUAL_INSTRUCTION_KINDS:
        tail = _after_last_marker(response)
        body = tail if tail is not None else response
        lines = [line.strip() for line in body.splitlines() if line.strip()]
        if not lines:
            return _OUT_OF_FORMAT
        value = _strip_step_number(lines[-1])
        return Extracted(value, False, "marker" if tail is not None else "last_line")
    value = response.strip()
    if not value:
        return _OUT_OF_FORMAT
    return Extracted(value, False, "last_line")


_STEP_RE = re.compile(r"^\s*(?:step\s*)?\d+\s*[.):]\s*", re.IGNORECASE)


def _strip_step_number(line: str) -> str:
    return _STEP_RE.sub("", line).strip()


def normalize_answer(text: str) -> str:
    """NFKC, lowercase, strip edge punctuation, collapse whitespace runs."""
    text = unicodedata.normalize("NFKC", text).lower()
    text = " ".join(text.split())
    while text and (unicodedata.category(text[0]).startswith("P") or text[0].isspace()):
        text = text[1:]
    while text and (unicodedata.category(text[-1]).startswith("P") or text[-1].isspace()):
        text = text[:-1]
    return " ".join(text.split())


def out_of_format_ratio(records) -> float:
    """Fraction of records flagged out_of_format; 0.0 on empty input."""
    records = list(records)
    if not records:
        warnings.warn("out_of_format_ratio over zero records", stacklevel=2)
        return 0.0
    flagged = sum(1 for r in records if r.out_of_format)
    return flagged / len(records)
