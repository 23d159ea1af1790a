"""Assemble prompts for every X-ICL setting: baselines, ablations, and the
gradual code-switching method.

Demonstrations are encoded as alternating user/assistant chat turns; ladders
live inside the assistant turn as the worked example. Assembly is pure and
byte-deterministic: goldens pin the exact output for a frozen fixture.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from xicl._rng import keyed_rng
from xicl.codeswitch import Demonstration, load_template
from xicl.corpus import Sample
from xicl.languages import LANGUAGES, LanguageTag

MANDATORY_SENTENCE = (
    "Let's gradually translate this non-English query into English, "
    "then think in English, and finally answer the question."
)
ANSWER_MARKER = "The answer is"

KINDS = (
    "zero_shot", "fewshot_mono", "fewshot_parallel", "translate_cot",
    "cs_fewshot", "gradual_cs_fewshot", "zero_shot_gradual", "csicl", "paraphrase",
)


class PromptError(ValueError):
    """Unknown setting/task combination or malformed demonstration list."""


@dataclass(frozen=True)
class XiclSetting:
    kind: str
    lang: str | None = None       # fewshot_mono, paraphrase: "en" | "tgt"
    dest: str | None = None       # translate_cot: "en" | "random"
    matrix: str | None = None     # cs_fewshot: "en" | "tgt"
    direction: str | None = None  # gradual_cs_fewshot, csicl: tgt_to_en | en_to_tgt

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise PromptError(f"unknown setting kind {self.kind!r}")
        wants = {
            "fewshot_mono": ("lang", ("en", "tgt")),
            "paraphrase": ("lang", ("en", "tgt")),
            "translate_cot": ("dest", ("en", "random")),
            "cs_fewshot": ("matrix", ("en", "tgt")),
            "gradual_cs_fewshot": ("direction", ("tgt_to_en", "en_to_tgt")),
            "csicl": ("direction", ("tgt_to_en", "en_to_tgt")),
        }
        for field_name in ("lang", "dest", "matrix", "direction"):
            value = getattr(self, field_name)
            expected = wants.get(self.kind)
            if expected and field_name == expected[0]:
                if value not in expected[1]:
                    raise PromptError(f"{self.kind} needs {field_name} in {expected[1]}")
            elif value is not None:
                raise PromptError(f"{self.kind} does not take {field_name}")

    @property
    def id(self) -> str:
        qualifier = self.lang or self.dest or self.matrix or self.direction
        return f"{self.kind}_{qualifier}" if qualifier else self.kind

    @property
    def needs_demos(self) -> bool:
        return self.kind not in ("zero_shot", "zero_shot_gradual")

    @property
    def uses_ladders(self) -> bool:
        return self.kind in ("cs_fewshot", "gradual_cs_fewshot", "csicl")

    @property
    def ladder_direction(self) -> str | None:
        if self.kind in ("gradual_cs_fewshot", "csicl"):
            return self.direction
        if self.kind == "cs_fewshot":
            # The 50% rung of a ladder is an inter-sentential CS sentence whose
            # matrix language is the ladder's source language.
            return "tgt_to_en" if self.matrix == "tgt" else "en_to_tgt"
        return None


def setting_from_id(setting_id: str) -> XiclSetting:
    table = {s.id: s for s in ALL_SETTINGS}
    if setting_id not in table:
        raise PromptError(f"unknown setting id {setting_id!r}; known: {sorted(table)}")
    return table[setting_id]


ALL_SETTINGS = (
    XiclSetting("zero_shot"),
    XiclSetting("fewshot_mono", lang="en"),
    XiclSetting("fewshot_mono", lang="tgt"),
    XiclSetting("fewshot_parallel"),
    XiclSetting("translate_cot", dest="en"),
    XiclSetting("translate_cot", dest="random"),
    XiclSetting("cs_fewshot", matrix="en"),
    XiclSetting("cs_fewshot", matrix="tgt"),
    XiclSetting("gradual_cs_fewshot", direction="en_to_tgt"),
    XiclSetting("gradual_cs_fewshot", direction="tgt_to_en"),
    XiclSetting("zero_shot_gradual"),
    XiclSetting("csicl", direction="tgt_to_en"),
    XiclSetting("csicl", direction="en_to_tgt"),
    XiclSetting("paraphrase", lang="en"),
    XiclSetting("paraphrase", lang="tgt"),
)

# The Table-1/Table-2 comparison matrix: five baselines, five ablations,
# zero-shot, and the method itself.
CORE_SETTING_IDS = (
    "zero_shot",
    "fewshot_mono_en",
    "fewshot_mono_tgt",
    "fewshot_parallel",
    "translate_cot_en",
    "translate_cot_random",
    "cs_fewshot_en",
    "cs_fewshot_tgt",
    "gradual_cs_fewshot_en_to_tgt",
    "gradual_cs_fewshot_tgt_to_en",
    "zero_shot_gradual",
    "csicl_tgt_to_en",
)


# ---------------------------------------------------------------------------
# Demonstration shot containers

@dataclass(frozen=True)
class DemoPair:
    """Target-language sample and its English twin (same id)."""
    target: Sample
    english: Sample


@dataclass(frozen=True)
class LadderDemo:
    """A demonstration ladder plus the sample rendered in its user turn.

    The sample must be in the ladder's source language: the target-language
    sample for tgt_to_en, the English twin for en_to_tgt.
    """
    sample: Sample
    demonstration: Demonstration


@dataclass(frozen=True)
class ParaphraseDemo:
    sample: Sample
    paraphrases: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.paraphrases) != 4:
            raise PromptError("a paraphrase demo carries exactly 4 paraphrases")


@dataclass(frozen=True)
class PromptBundle:
    system: str
    messages: tuple[tuple[str, str], ...]
    query: str

    def digest(self, model_id: str, temperature: float) -> str:
        payload = json.dumps(
            {
                "system": self.system,
                "messages": list(self.messages),
                "query": self.query,
                "model": model_id,
                "temperature": temperature,
            },
            sort_keys=True, ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TaskProtocol:
    answer_marker: str = ANSWER_MARKER
    answer_shape: str = "uppercase_letter"  # | short_string | translation_text


# ---------------------------------------------------------------------------
# System prompts

_TEMPLATE_FAMILY = {
    "zero_shot": "task",
    "fewshot_mono": "task",
    "fewshot_parallel": "task",
    "cs_fewshot": "task",
    "gradual_cs_fewshot": "task",
    "paraphrase": "task",
    "translate_cot": "translate_cot",
    "zero_shot_gradual": "gradual_tgt_to_en",
    "csicl": None,  # direction-dependent
}

TASKS = ("mcq", "short_answer", "translation")


def template_name(setting: XiclSetting, task: str) -> str:
    if task not in TASKS:
        raise PromptError(f"unknown task {task!r}")
    family = _TEMPLATE_FAMILY[setting.kind]
    if setting.kind == "csicl":
        family = f"gradual_{setting.direction}"
    return f"{family}_{task}"


def build_system_prompt(setting: XiclSetting, task: str, target: LanguageTag,
                        dest: LanguageTag | None = None) -> str:
    """Appendix template for (setting, task) with language names substituted."""
    text = load_template(template_name(setting, task))
    if "{dest_language}" in text:
        if dest is None:
            raise PromptError(f"setting {setting.id} needs a destination language")
        text = text.replace("{dest_language}", dest.name)
    text = text.replace("{target_language}", target.name)
    return text.rstrip("\n")


# ---------------------------------------------------------------------------
# Shot rendering

def render_query(sample: Sample) -> str:
    if sample.task == "mcq":
        lines = [sample.question]
        lines += [f"{letter}. {text}" for letter, text in sample.choices]
        return "\n".join(lines)
    return sample.question


def _answer_of(sample: Sample) -> str:
    return sample.gold[0]


def _plain_answer(sample: Sample) -> str:
    # Matches the strict instruction: a bare letter / answer / reference.
    return _answer_of(sample)


def _marker_answer(sample_or_answer) -> str:
    answer = (
        _answer_of(sample_or_answer) if isinstance(sample_or_answer, Sample)
        else sample_or_answer
    )
    return f"{ANSWER_MARKER} {answer}"


def _ladder_lines(demo: Demonstration) -> list[str]:
    return [f"{i + 1}. {step}" for i, step in enumerate(demo.ladder.steps)]


def _ladder_assistant(demo: LadderDemo, task: str) -> str:
    # The mandatory self-instruction lives in the system prompt only, so a
    # bundle carries it exactly once; shots show just the worked ladder.
    lines = _ladder_lines(demo.demonstration)
    if task != "translation":
        # For translation the final ladder step already is the answer.
        lines.append(_marker_answer(demo.demonstration.answer_text))
    return "\n".join(lines)


def _expect_type(demos, expected, setting) -> None:
    for demo in demos:
        if not isinstance(demo, expected):
            raise PromptError(
                f"setting {setting.id} needs {expected.__name__} demonstrations, "
                f"got {type(demo).__name__}"
            )


def _shot_messages(setting: XiclSetting, demos, task: str) -> list[tuple[str, str]]:
    messages: list[tuple[str, str]] = []
    kind = setting.kind

    if kind == "fewshot_mono":
        _expect_type(demos, Sample, setting)
        for sample in demos:
            messages.append(("user", render_query(sample)))
            messages.append(("assistant", _plain_answer(sample)))
    elif kind in ("fewshot_parallel", "translate_cot"):
        _expect_type(demos, DemoPair, setting)
        for pair in demos:
            user = render_query(pair.target) + "\n\n" + render_query(pair.english)
            messages.append(("user", user))
            answer = (
                _marker_answer(pair.target) if kind == "translate_cot" and task != "translation"
                else _plain_answer(pair.target)
            )
            messages.append(("assistant", answer))
    elif kind == "cs_fewshot":
        _expect_type(demos, LadderDemo, setting)
        for demo in demos:
            cs_text = demo.demonstration.ladder.steps[2]
            body = [cs_text]
            if task == "mcq":
                body += [f"{letter}. {text}" for letter, text in demo.sample.choices]
            messages.append(("user", "\n".join(body)))
            messages.append(("assistant", _plain_answer(demo.sample)))
    elif kind in ("gradual_cs_fewshot", "csicl"):
        _expect_type(demos, LadderDemo, setting)
        for demo in demos:
            if demo.demonstration.ladder.direction != setting.ladder_direction:
                raise PromptError(
                    f"setting {setting.id} needs {setting.ladder_direction} ladders, got "
                    f"{demo.demonstration.ladder.direction}"
                )
            messages.append(("user", render_query(demo.sample)))
            messages.append(("assistant", _ladder_assistant(demo, task)))
    elif kind == "paraphrase":
        _expect_type(demos, ParaphraseDemo, setting)
        for demo in demos:
            body = [demo.sample.question, *demo.paraphrases]
            if task == "mcq":
                body += [f"{letter}. {text}" for letter, text in demo.sample.choices]
            messages.append(("user", "\n".join(body)))
            messages.append(("assistant", _plain_answer(demo.sample)))
    else:
        raise PromptError(f"setting {setting.id} takes no demonstrations")
    return messages


def assemble_prompt(setting: XiclSetting, demos, query: Sample,
                    rnd_pool=(), seed: int = 0, k_shots: int = 5,
                    include_demos: bool = True) -> PromptBundle:
    """Build the full prompt bundle for one query under one setting."""
    demos = list(demos)
    expected = k_shots if setting.needs_demos and include_demos else 0
    if setting.kind == "translate_cot" and not include_demos:
        demos = []
    if len(demos) != expected:
        raise PromptError(
            f"setting {setting.id} expects {expected} demonstrations, got {len(demos)}"
        )

    dest: LanguageTag | None = None
    if setting.kind == "translate_cot":
        if setting.dest == "en":
            dest = LANGUAGES["en"]
        else:
            dest = pick_random_language(
                rnd_pool, exclude={query.language, LANGUAGES["en"]}, seed=seed,
                query_id=query.id,
            )

    system = build_system_prompt(setting, query.task, target=query.language, dest=dest)
    messages = tuple(_shot_messages(setting, demos, query.task)) if demos else ()
    return PromptBundle(system=system, messages=messages, query=render_query(query))


def pick_random_language(pool, exclude, seed: int, query_id: str) -> LanguageTag:
    """Uniform deterministic language draw keyed by (seed, query id)."""
    excluded = {tag.code if isinstance(tag, LanguageTag) else tag for tag in exclude}
    candidates = sorted(
        {tag.code if isinstance(tag, LanguageTag) else tag for tag in pool} - excluded
    )
    if not candidates:
        raise PromptError("no candidate language left after exclusions")
    rng = keyed_rng(seed, "rnd_lang", query_id)
    return LANGUAGES[candidates[int(rng.integers(len(candidates)))]]
