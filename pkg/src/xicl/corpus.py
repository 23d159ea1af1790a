"""Dataset loading, balanced sub-sampling, and demonstration/test splits.

Dataset files are UTF-8 JSON lines. Required keys per task kind:

* mcq: ``{id, question, choices: [{letter, text}], answer, language, subject?}``
  (MBBQ records additionally carry ``template_id`` and ``ambiguous``)
* short_answer: ``{id, question, answers: [...], language}``
* translation: ``{id, source, reference, language}``

``answer`` may be a single letter or a list of letters; answers/references
are stored normalized for short answers and verbatim for translation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from xicl._rng import keyed_rng
from xicl.extraction import normalize_answer
from xicl.languages import LanguageTag, get_language

DATASETS = ("globalmmlu", "flores", "medexpqa", "polymath", "blend", "mbbq", "custom")
TASKS = ("mcq", "short_answer", "translation")

DATASET_TASKS = {
    "globalmmlu": "mcq",
    "mbbq": "mcq",
    "medexpqa": "short_answer",
    "polymath": "short_answer",
    "blend": "short_answer",
    "flores": "translation",
}


class DatasetError(ValueError):
    """Raised for missing files, malformed records, or invariant violations."""


@dataclass(frozen=True)
class Sample:
    id: str
    dataset: str
    language: LanguageTag
    task: str
    question: str
    choices: tuple[tuple[str, str], ...] = ()
    gold: tuple[str, ...] = ()
    subject: str | None = None
    template_id: str | None = None
    ambiguous: bool | None = None

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise DatasetError(f"sample {self.id}: unknown task {self.task!r}")
        if self.task == "mcq":
            if not self.choices:
                raise DatasetError(f"sample {self.id}: mcq requires choices")
            letters = {letter for letter, _ in self.choices}
            stray = set(self.gold) - letters
            if not self.gold or stray:
                raise DatasetError(
                    f"sample {self.id}: gold letters {sorted(stray) or '(empty)'} "
                    f"not among choices {sorted(letters)}"
                )
        if self.task == "translation" and len(self.gold) != 1:
            raise DatasetError(f"sample {self.id}: translation requires exactly one reference")
        if self.task == "short_answer" and not self.gold:
            raise DatasetError(f"sample {self.id}: short_answer requires at least one answer")

    @property
    def letters(self) -> tuple[str, ...]:
        return tuple(letter for letter, _ in self.choices)


@dataclass(frozen=True)
class ParallelPair:
    id: str
    source_text: str
    english_text: str
    source_lang: LanguageTag

    def __post_init__(self) -> None:
        if not self.source_text.strip() or not self.english_text.strip():
            raise DatasetError(f"pair {self.id}: both texts must be non-empty")
        if self.source_lang.code == "en":
            raise DatasetError(f"pair {self.id}: source language must differ from English")


@dataclass(frozen=True)
class SampleSet:
    samples: tuple[Sample, ...]
    provenance: str

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def by_id(self) -> dict[str, Sample]:
        return {s.id: s for s in self.samples}


def load_dataset(path: str | Path, kind: str) -> SampleSet:
    """Parse a JSONL dataset file into a validated SampleSet."""
    path = Path(path)
    if kind not in DATASETS:
        raise DatasetError(f"unknown dataset kind {kind!r}; expected one of {DATASETS}")
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")

    samples: list[Sample] = []
    seen: set[tuple[str, str]] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            try:
                sample = _parse_record(record, kind)
            except DatasetError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            key = (sample.id, sample.language.code)
            if key in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate id {sample.id!r} for "
                                   f"language {sample.language.code}")
            seen.add(key)
            samples.append(sample)
    return SampleSet(tuple(samples), provenance=str(path))


def _parse_record(record: dict, kind: str) -> Sample:
    if not isinstance(record, dict):
        raise DatasetError("record is not a JSON object")
    task = record.get("task") or DATASET_TASKS.get(kind)
    if task is None:
        raise DatasetError("custom datasets must declare a per-record 'task'")
    rid = record.get("id")
    if rid is None:
        raise DatasetError("record missing 'id'")
    rid = str(rid)
    language = get_language(_require(record, "language", rid))

    if task == "mcq":
        choices = tuple(
            (str(ch["letter"]).strip().upper(), str(ch["text"]))
            for ch in _require(record, "choices", rid)
        )
        answer = _require(record, "answer", rid)
        letters = [answer] if isinstance(answer, str) else list(answer)
        gold = tuple(str(a).strip().upper() for a in letters)
        extra = {}
        if kind == "mbbq" or "template_id" in record:
            extra["template_id"] = (
                str(record["template_id"]) if record.get("template_id") is not None else None
            )
            extra["ambiguous"] = record.get("ambiguous")
        return Sample(
            id=rid, dataset=kind, language=language, task="mcq",
            question=str(_require(record, "question", rid)),
            choices=choices, gold=gold,
            subject=record.get("subject"), **extra,
        )
    if task == "short_answer":
        answers = tuple(normalize_answer(str(a)) for a in _require(record, "answers", rid))
        return Sample(
            id=rid, dataset=kind, language=language, task="short_answer",
            question=str(_require(record, "question", rid)),
            gold=answers, subject=record.get("subject"),
        )
    if task == "translation":
        return Sample(
            id=rid, dataset=kind, language=language, task="translation",
            question=str(_require(record, "source", rid)),
            gold=(str(_require(record, "reference", rid)),),
            subject=record.get("subject"),
        )
    raise DatasetError(f"unknown task {task!r}")


def _require(record: dict, key: str, rid: str):
    if key not in record:
        raise DatasetError(f"record {rid!r} missing required key {key!r}")
    return record[key]


def _cell_of(sample: Sample, cell_keys: list[str]) -> tuple[str, ...]:
    parts = []
    for key in cell_keys:
        if key == "subject":
            parts.append(sample.subject if sample.subject is not None else "(none)")
        elif key == "language":
            parts.append(sample.language.code)
        else:
            raise DatasetError(f"unsupported cell key {key!r}; expected subject/language")
    return tuple(parts)


def sample_balanced(sample_set: SampleSet, per_cell: int, cell_keys: list[str],
                    seed: int) -> SampleSet:
    """Draw up to per_cell samples per cell, without replacement, cell-major.

    Each cell draws from its own random stream keyed by (seed, cell), so
    adding a language or subject never perturbs the other cells.
    """
    if per_cell < 0:
        raise DatasetError("per_cell must be >= 0")
    cells: dict[tuple[str, ...], list[Sample]] = {}
    for sample in sample_set:
        cells.setdefault(_cell_of(sample, cell_keys), []).append(sample)

    picked: list[Sample] = []
    for cell in sorted(cells):
        members = cells[cell]
        take = min(per_cell, len(members))
        if take == 0:
            continue
        rng = keyed_rng(seed, "balanced", *cell)
        idx = rng.choice(len(members), size=take, replace=False)
        picked.extend(members[i] for i in idx)
    note = f"{sample_set.provenance}|balanced(per_cell={per_cell},keys={','.join(cell_keys)},seed={seed})"
    return SampleSet(tuple(picked), provenance=note)


def sample_mbbq(sample_set: SampleSet, per_template: int, seed: int) -> SampleSet:
    """Per template: half the budget from ambiguous, half from unambiguous contexts."""
    half = per_template // 2
    groups: dict[tuple[str, bool], list[Sample]] = {}
    order: list[str] = []
    for sample in sample_set:
        if sample.template_id is None or sample.ambiguous is None:
            raise DatasetError(f"sample {sample.id}: missing template_id/ambiguous for MBBQ sampling")
        if sample.template_id not in order:
            order.append(sample.template_id)
        groups.setdefault((sample.template_id, bool(sample.ambiguous)), []).append(sample)

    picked: list[Sample] = []
    for template in sorted(order):
        for ambiguous in (True, False):
            members = groups.get((template, ambiguous), [])
            take = min(half, len(members))
            if take == 0:
                continue
            rng = keyed_rng(seed, "mbbq", template, ambiguous)
            idx = rng.choice(len(members), size=take, replace=False)
            picked.extend(members[i] for i in idx)
    note = f"{sample_set.provenance}|mbbq(per_template={per_template},seed={seed})"
    return SampleSet(tuple(picked), provenance=note)


def split_demos(sample_set: SampleSet, k: int, seed: int) -> tuple[SampleSet, SampleSet]:
    """Draw k demonstration samples; the rest (original order) become the test set."""
    n = len(sample_set)
    if k >= n:
        raise DatasetError(f"cannot draw {k} demonstrations from {n} samples")
    rng = keyed_rng(seed, "split_demos")
    demo_idx = rng.choice(n, size=k, replace=False)
    demo_set = set(int(i) for i in demo_idx)
    demos = tuple(sample_set.samples[i] for i in demo_idx)
    test = tuple(s for i, s in enumerate(sample_set.samples) if i not in demo_set)
    base = sample_set.provenance
    return (
        SampleSet(demos, provenance=f"{base}|demos(k={k},seed={seed})"),
        SampleSet(test, provenance=f"{base}|test(k={k},seed={seed})"),
    )


def pair_by_id(target_set: SampleSet, english_set: SampleSet) -> list[ParallelPair]:
    """Join a target-language set with its English twin on shared sample ids."""
    english = english_set.by_id()
    pairs = []
    for sample in target_set:
        twin = english.get(sample.id)
        if twin is None:
            raise DatasetError(f"sample {sample.id}: no English record with the same id")
        pairs.append(ParallelPair(
            id=sample.id,
            source_text=sample.question,
            english_text=twin.question,
            source_lang=sample.language,
        ))
    return pairs
