"""Two-step gradual code-switching pipeline with quantitative validation.

Step 1 turns a parallel sentence pair into a single code-switched sentence
under a fixed matrix language; step 2 expands it into a five-step ladder
moving from 0% to 100% of the destination language. Measured language-mix
fractions (script-based token attribution, stopword vote for same-script
pairs) gate acceptance: every step must sit near its scheduled fraction and
the sequence must be monotone.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, NamedTuple

from xicl.corpus import ParallelPair
from xicl.languages import ENGLISH, LanguageTag, token_script

DIRECTIONS = ("tgt_to_en", "en_to_tgt")
TARGET_FRACTIONS = (0.0, 0.25, 0.5, 0.75, 1.0)

Generator = Callable[[str, str], str]  # (system prompt, user message) -> completion


class GenerationError(RuntimeError):
    """Generator misuse or hard failure."""


class LadderParseError(GenerationError):
    """Generator reply could not be parsed into exactly five numbered steps."""


class MixRatio(NamedTuple):
    fraction: float
    classified: int
    total: int

    @property
    def undetermined(self) -> bool:
        return self.classified == 0


@dataclass(frozen=True)
class CsSentence:
    text: str
    matrix_lang: LanguageTag
    embedded_lang: LanguageTag
    embedded_fraction: float

    def __post_init__(self) -> None:
        if self.matrix_lang.code == self.embedded_lang.code:
            raise GenerationError("matrix and embedded language must differ")


@dataclass(frozen=True)
class CodeSwitchLadder:
    steps: tuple[str, str, str, str, str]
    direction: str
    measured_fractions: tuple[float, float, float, float, float]
    source_lang: LanguageTag
    dest_lang: LanguageTag
    target_fractions: tuple[float, ...] = TARGET_FRACTIONS

    def __post_init__(self) -> None:
        if self.direction not in DIRECTIONS:
            raise GenerationError(f"unknown direction {self.direction!r}")
        if len(self.steps) != 5 or len(self.measured_fractions) != 5:
            raise GenerationError("a ladder has exactly five steps")


@dataclass(frozen=True)
class Demonstration:
    sample_id: str
    ladder: CodeSwitchLadder
    answer_text: str


@dataclass(frozen=True)
class GenerationPolicy:
    max_attempts: int = 3
    step_tolerance: float = 0.15
    purity_tolerance: float = 0.05

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        for tol in (self.step_tolerance, self.purity_tolerance):
            if not 0 < tol < 0.5:
                raise ValueError("tolerances must lie in (0, 0.5)")


@dataclass
class LadderResult:
    ladder: CodeSwitchLadder
    cs_text: str
    attempts: int
    valid: bool
    violations: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# Mix-ratio estimation

@lru_cache(maxsize=None)
def _lexicon(code: str) -> frozenset[str] | None:
    ref = resources.files("xicl") / "lexicons" / f"{code}.txt"
    if not ref.is_file():
        return None
    words = ref.read_text(encoding="utf-8").split()
    return frozenset(w.lower() for w in words)


def _clean_token(token: str) -> str:
    return token.strip(".,;:!?()[]{}\"'«»¿¡、。！？").lower()


def estimate_mix_ratio(text: str, lang_a: LanguageTag, lang_b: LanguageTag) -> MixRatio:
    """Fraction of whitespace tokens attributed to lang_b.

    Tokens are attributed by dominant script; same-script pairs fall back to
    a stopword-lexicon vote. Tokens with no signal are excluded from the
    denominator. A text with zero classified tokens yields fraction 0 with
    the undetermined flag set.
    """
    if lang_a.code == lang_b.code:
        raise ValueError("mix ratio needs two distinct languages")
    same_script = lang_a.script == lang_b.script
    lex_a = lex_b = None
    if same_script:
        lex_a, lex_b = _lexicon(lang_a.code), _lexicon(lang_b.code)
        if lex_a is None or lex_b is None:
            raise ValueError(
                f"no classifier for {lang_a.code}/{lang_b.code}: same script "
                f"({lang_a.script}) and no stopword lexicon for both"
            )

    tokens = text.split()
    a_count = b_count = 0
    for token in tokens:
        script = token_script(token)
        if script is None:
            continue
        if not same_script:
            if script == lang_b.script:
                b_count += 1
            elif script == lang_a.script:
                a_count += 1
        elif script == lang_a.script:
            word = _clean_token(token)
            in_a, in_b = word in lex_a, word in lex_b
            if in_a and not in_b:
                a_count += 1
            elif in_b and not in_a:
                b_count += 1
    classified = a_count + b_count
    if classified == 0:
        return MixRatio(0.0, 0, len(tokens))
    return MixRatio(b_count / classified, classified, len(tokens))


# ---------------------------------------------------------------------------
# Prompt construction

def load_template(name: str) -> str:
    return (resources.files("xicl") / "prompts" / f"{name}.txt").read_text(encoding="utf-8")


def _fill(template: str, target: LanguageTag) -> str:
    return template.replace("{target_language}", target.name).replace(
        "{target_word_order}", target.word_order
    )


def cs_generation_prompt(pair: ParallelPair, matrix: LanguageTag) -> tuple[str, str]:
    """(system, user) for the code-switching step under the given matrix language."""
    target = pair.source_lang
    name = "gen_cs_matrix_en" if matrix.code == "en" else "gen_cs_matrix_tgt"
    system = _fill(load_template(name), target)
    user = f"<English> {pair.english_text}\n<{target.name}> {pair.source_text}\n<Code-Switching>"
    return system, user


def ladder_generation_prompt(pair: ParallelPair, cs: CsSentence, direction: str) -> tuple[str, str]:
    target = pair.source_lang
    if direction == "tgt_to_en":
        system = _fill(load_template("gen_ladder_tgt_to_en"), target)
        user = (
            f"<{target.name}> {pair.source_text}\n"
            f"<English> {pair.english_text}\n"
            f"<Code-Switching> {cs.text}"
        )
    else:
        system = _fill(load_template("gen_ladder_en_to_tgt"), target)
        user = (
            f"<English> {pair.english_text}\n"
            f"<{target.name}> {pair.source_text}\n"
            f"<Code-Switching> {cs.text}"
        )
    return system, user


# ---------------------------------------------------------------------------
# Generation steps

def generate_cs(pair: ParallelPair, matrix: LanguageTag, generator: Generator) -> CsSentence:
    """Ask the generator for one code-switched rendering of the pair."""
    if matrix.code not in (pair.source_lang.code, "en"):
        raise GenerationError(
            f"matrix language {matrix.code} must be the pair's source "
            f"({pair.source_lang.code}) or English"
        )
    embedded = ENGLISH if matrix.code != "en" else pair.source_lang
    if matrix.code == embedded.code:
        raise GenerationError("matrix language equals embedded language")

    system, user = cs_generation_prompt(pair, matrix)
    reply = generator(system, user).strip()
    reply = re.sub(r"^<Code-Switching>\s*", "", reply)
    lines = [line.strip() for line in reply.splitlines() if line.strip()]
    if not lines:
        raise GenerationError(f"empty code-switching output for pair {pair.id}")
    text = lines[0]
    fraction = estimate_mix_ratio(text, matrix, embedded).fraction
    return CsSentence(text=text, matrix_lang=matrix, embedded_lang=embedded,
                      embedded_fraction=fraction)


_STEP_LINE_RE = re.compile(r"^\s*(\d)\s*[.)]\s*(.+?)\s*$")


def parse_ladder_steps(reply: str) -> tuple[str, ...]:
    """Exactly five lines numbered 1..5, in order."""
    steps: list[str] = []
    for line in reply.splitlines():
        match = _STEP_LINE_RE.match(line)
        if not match:
            continue
        number, text = int(match.group(1)), match.group(2)
        if number != len(steps) + 1:
            raise LadderParseError(
                f"step {number} out of order (expected {len(steps) + 1})"
            )
        steps.append(text)
    if len(steps) != 5:
        raise LadderParseError(f"expected 5 numbered steps, found {len(steps)}")
    return tuple(steps)


def generate_ladder(pair: ParallelPair, cs: CsSentence, direction: str,
                    generator: Generator) -> CodeSwitchLadder:
    """Expand the code-switched sentence into the five-step ladder."""
    if direction not in DIRECTIONS:
        raise GenerationError(f"unknown direction {direction!r}")
    if pair.source_lang.code == "en":
        raise GenerationError("pair source language must not be English")
    expected_matrix = pair.source_lang if direction == "tgt_to_en" else ENGLISH
    if cs.matrix_lang.code != expected_matrix.code:
        raise GenerationError(
            f"direction {direction} needs a {expected_matrix.code}-matrix "
            f"code-switched sentence, got {cs.matrix_lang.code}"
        )

    source, dest = (
        (pair.source_lang, ENGLISH) if direction == "tgt_to_en" else (ENGLISH, pair.source_lang)
    )
    system, user = ladder_generation_prompt(pair, cs, direction)
    steps = parse_ladder_steps(generator(system, user))
    measured = tuple(estimate_mix_ratio(step, source, dest).fraction for step in steps)
    return CodeSwitchLadder(
        steps=steps, direction=direction, measured_fractions=measured,
        source_lang=source, dest_lang=dest,
    )


def ladder_violations(ladder: CodeSwitchLadder, policy: GenerationPolicy) -> list[str]:
    """Human-readable schedule violations; empty means the ladder is accepted."""
    problems = []
    measured = ladder.measured_fractions
    for i, (got, want) in enumerate(zip(measured, ladder.target_fractions)):
        if abs(got - want) > policy.step_tolerance:
            problems.append(f"step {i + 1}: measured {got:.2f} vs target {want:.2f}")
    if measured[0] > policy.purity_tolerance:
        problems.append(f"step 1 not pure source ({measured[0]:.2f})")
    if measured[4] < 1 - policy.purity_tolerance:
        problems.append(f"step 5 not pure destination ({measured[4]:.2f})")
    for i in range(4):
        if measured[i + 1] < measured[i]:
            problems.append(f"non-monotone between steps {i + 1} and {i + 2}")
    return problems


def _badness(ladder: CodeSwitchLadder, policy: GenerationPolicy) -> float:
    measured = ladder.measured_fractions
    score = sum(
        max(0.0, abs(got - want) - policy.step_tolerance)
        for got, want in zip(measured, ladder.target_fractions)
    )
    score += max(0.0, measured[0] - policy.purity_tolerance)
    score += max(0.0, (1 - policy.purity_tolerance) - measured[4])
    score += sum(max(0.0, measured[i] - measured[i + 1]) for i in range(4))
    return score


def validate_and_regenerate(pair: ParallelPair, direction: str, policy: GenerationPolicy,
                            generator: Generator) -> LadderResult:
    """Generate-validate loop; on exhaustion the least-bad attempt is returned invalid."""
    matrix = pair.source_lang if direction == "tgt_to_en" else ENGLISH
    best: LadderResult | None = None
    last_parse_error: LadderParseError | None = None
    for attempt in range(1, policy.max_attempts + 1):
        try:
            cs = generate_cs(pair, matrix, generator)
            ladder = generate_ladder(pair, cs, direction, generator)
        except LadderParseError as exc:
            last_parse_error = exc
            continue
        problems = ladder_violations(ladder, policy)
        result = LadderResult(
            ladder=ladder, cs_text=cs.text, attempts=attempt,
            valid=not problems, violations=tuple(problems),
        )
        if result.valid:
            return result
        if best is None or _badness(ladder, policy) < _badness(best.ladder, policy):
            best = result
    if best is None:
        raise LadderParseError(
            f"no parseable ladder for pair {pair.id} after {policy.max_attempts} attempts: "
            f"{last_parse_error}"
        )
    best.attempts = policy.max_attempts
    return best


# ---------------------------------------------------------------------------
# On-disk ladder cache

def ladder_digest(pair: ParallelPair, direction: str, generator_id: str,
                  policy: GenerationPolicy) -> str:
    payload = json.dumps(
        {
            "source_text": pair.source_text,
            "english_text": pair.english_text,
            "source_lang": pair.source_lang.code,
            "direction": direction,
            "generator": generator_id,
            "policy": [policy.max_attempts, policy.step_tolerance, policy.purity_tolerance],
        },
        sort_keys=True, ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class LadderCache:
    """One JSON file per ladder under cache_dir/ladders/<digest>.json."""

    def __init__(self, cache_dir: str | Path):
        self.root = Path(cache_dir) / "ladders"
        self._lock = threading.Lock()

    def path(self, digest: str) -> Path:
        return self.root / f"{digest}.json"

    def get(self, digest: str) -> dict | None:
        path = self.path(digest)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, digest: str, payload: dict) -> None:
        with self._lock:
            self.root.mkdir(parents=True, exist_ok=True)
            tmp = self.path(digest).with_suffix(".tmp")
            tmp.write_text(
                json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=1),
                encoding="utf-8",
            )
            os.replace(tmp, self.path(digest))


def ladder_for_pair(pair: ParallelPair, direction: str, policy: GenerationPolicy,
                    generator: Generator, generator_id: str,
                    cache: LadderCache | None = None) -> tuple[LadderResult, str]:
    """Cache-through ladder generation; returns (result, digest)."""
    digest = ladder_digest(pair, direction, generator_id, policy)
    if cache is not None:
        hit = cache.get(digest)
        if hit is not None:
            return _result_from_payload(hit, pair), digest
    result = validate_and_regenerate(pair, direction, policy, generator)
    if cache is not None:
        cache.put(digest, _payload_from_result(result, pair, generator_id, policy))
    return result, digest


def _payload_from_result(result: LadderResult, pair: ParallelPair, generator_id: str,
                         policy: GenerationPolicy) -> dict:
    return {
        "pair": {
            "id": pair.id,
            "source_text": pair.source_text,
            "english_text": pair.english_text,
            "source_lang": pair.source_lang.code,
        },
        "direction": result.ladder.direction,
        "cs_text": result.cs_text,
        "steps": list(result.ladder.steps),
        "measured_fractions": list(result.ladder.measured_fractions),
        "generator_id": generator_id,
        "attempts": result.attempts,
        "valid": result.valid,
        "violations": list(result.violations),
        "policy": {
            "max_attempts": policy.max_attempts,
            "step_tolerance": policy.step_tolerance,
            "purity_tolerance": policy.purity_tolerance,
        },
    }


def _result_from_payload(payload: dict, pair: ParallelPair) -> LadderResult:
    direction = payload["direction"]
    source, dest = (
        (pair.source_lang, ENGLISH) if direction == "tgt_to_en" else (ENGLISH, pair.source_lang)
    )
    ladder = CodeSwitchLadder(
        steps=tuple(payload["steps"]),
        direction=direction,
        measured_fractions=tuple(payload["measured_fractions"]),
        source_lang=source,
        dest_lang=dest,
    )
    return LadderResult(
        ladder=ladder, cs_text=payload["cs_text"], attempts=payload["attempts"],
        valid=payload["valid"], violations=tuple(payload.get("violations", ())),
    )


# ---------------------------------------------------------------------------
# Deterministic offline generator

class WordMixGenerator:
    """Dictionary-free word-substitution fallback for offline runs.

    Interleaves destination-language and source-language tokens at each
    scheduled fraction. Not MLF-faithful; it exists so that validation,
    caching, and the full pipeline run deterministically without a network.
    """

    generator_id = "wordmix-fallback-v1"

    _LADDER_RE = re.compile(r"transition from (.+?) to (.+?)\.$", re.MULTILINE)
    _TAG_RE = re.compile(r"^<([^>]+)>\s*(.*)$", re.MULTILINE)

    def __call__(self, system: str, user: str) -> str:
        tagged = {name: text for name, text in self._TAG_RE.findall(user)}
        if "four paraphrases" in system:
            return self._paraphrases(user)
        match = self._LADDER_RE.search(system)
        if match and "five versions" in system:
            return self._ladder(match.group(1), match.group(2), tagged)
        return self._code_switch(system, tagged)

    def _code_switch(self, system: str, tagged: dict[str, str]) -> str:
        english = tagged.get("English", "")
        target = next((t for name, t in tagged.items()
                       if name not in ("English", "Code-Switching")), "")
        # Matrix English keeps English as the frame; matrix target flips it.
        if "words/phrases in E" in system:
            return self._mix(english, target, 0.5)[0]
        return self._mix(target, english, 0.5)[0]

    def _ladder(self, source_name: str, dest_name: str, tagged: dict[str, str]) -> str:
        source = tagged.get(source_name, "")
        dest = tagged.get(dest_name, "")
        lines = []
        reached = -1.0
        for i, fraction in enumerate(TARGET_FRACTIONS):
            text, reached = self._mix(source, dest, fraction, floor=reached)
            lines.append(f"  {i + 1}. {text}")
        return "\n".join(lines)

    def _paraphrases(self, user: str) -> str:
        text = user.strip().splitlines()[-1].strip()
        stems = ("In other words:", "Put differently:", "Restated:", "That is to say:")
        return "\n".join(f"{i + 1}. {stem} {text}" for i, stem in enumerate(stems))

    @staticmethod
    def _mix(source: str, dest: str, fraction: float,
             floor: float = -1.0) -> tuple[str, float]:
        """Destination-prefix plus source-suffix whose token ratio best hits
        `fraction`, never dipping below `floor` (keeps ladders monotone)."""
        if fraction <= 0:
            return source, 0.0
        if fraction >= 1:
            return dest, 1.0
        src_tokens, dest_tokens = source.split(), dest.split()
        if not src_tokens or not dest_tokens:
            return (dest, 1.0) if fraction >= 0.5 else (source, 0.0)
        best = None
        for k in range(len(dest_tokens) + 1):
            for m in range(len(src_tokens) + 1):
                if k + m == 0:
                    continue
                ratio = k / (k + m)
                if ratio < floor:
                    continue
                key = (abs(ratio - fraction), -(k + m), k)
                if best is None or key < best[0]:
                    best = (key, k, m, ratio)
        _, k, m, ratio = best
        tail = src_tokens[len(src_tokens) - m:] if m else []
        return " ".join(dest_tokens[:k] + tail), ratio
