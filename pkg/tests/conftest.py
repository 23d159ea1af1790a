from __future__ import annotations

import json
from pathlib import Path

import pytest

from xicl.codeswitch import (
    Demonstration, GenerationPolicy, WordMixGenerator, generate_cs, generate_ladder,
    load_template,
)
from xicl.corpus import load_dataset, pair_by_id, split_demos
from xicl.languages import ENGLISH, LANGUAGES
from xicl.promptkit import DemoPair, LadderDemo, ParaphraseDemo

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def ko_set():
    return load_dataset(DATA_DIR / "mini_mcq_ko.jsonl", "globalmmlu")


@pytest.fixture(scope="session")
def en_set():
    return load_dataset(DATA_DIR / "mini_mcq_en.jsonl", "globalmmlu")


@pytest.fixture(scope="session")
def demo_split(ko_set):
    return split_demos(ko_set, k=5, seed=42)


@pytest.fixture(scope="session")
def demo_pairs(demo_split, en_set):
    demos, _ = demo_split
    return pair_by_id(demos, en_set)


def build_ladder_demos(demos, pairs, en_set, direction: str):
    """Deterministic offline ladders for the fixture demo pool."""
    generator = WordMixGenerator()
    english = en_set.by_id()
    out = []
    for sample, pair in zip(demos, pairs):
        matrix = pair.source_lang if direction == "tgt_to_en" else ENGLISH
        cs = generate_cs(pair, matrix, generator)
        ladder = generate_ladder(pair, cs, direction, generator)
        shown = sample if direction == "tgt_to_en" else english[sample.id]
        out.append(LadderDemo(
            sample=shown,
            demonstration=Demonstration(
                sample_id=sample.id, ladder=ladder, answer_text=sample.gold[0],
            ),
        ))
    return out


def build_paraphrase_demos(samples):
    generator = WordMixGenerator()
    template = load_template("gen_paraphrase")
    out = []
    for sample in samples:
        system = template.replace("{paraphrase_language}", sample.language.name)
        reply = generator(system, sample.question)
        paraphrases = tuple(
            line.split(". ", 1)[1] for line in reply.splitlines()
        )
        out.append(ParaphraseDemo(sample=sample, paraphrases=paraphrases))
    return out


@pytest.fixture(scope="session")
def demo_env(demo_split, demo_pairs, en_set):
    """Everything assemble_prompt needs, frozen for golden comparisons."""
    demos, test = demo_split
    english = en_set.by_id()
    return {
        "policy": GenerationPolicy(),
        "demos_tgt": list(demos),
        "demos_en": [english[s.id] for s in demos],
        "pairs_both": [DemoPair(target=s, english=english[s.id]) for s in demos],
        "ladders_tgt_to_en": build_ladder_demos(demos, demo_pairs, en_set, "tgt_to_en"),
        "ladders_en_to_tgt": build_ladder_demos(demos, demo_pairs, en_set, "en_to_tgt"),
        "paraphrases_en": build_paraphrase_demos([english[s.id] for s in demos]),
        "paraphrases_tgt": build_paraphrase_demos(list(demos)),
        "query": test.samples[0],
        "rnd_pool": [LANGUAGES[c] for c in ("en", "ko", "zh", "tr", "te")],
        "test": test,
    }


def demos_for(setting_id: str, env: dict):
    from xicl.promptkit import setting_from_id

    setting = setting_from_id(setting_id)
    if not setting.needs_demos:
        return []
    if setting.kind == "fewshot_mono":
        return env["demos_en"] if setting.lang == "en" else env["demos_tgt"]
    if setting.kind in ("fewshot_parallel", "translate_cot"):
        return env["pairs_both"]
    if setting.kind == "paraphrase":
        return env["paraphrases_en"] if setting.lang == "en" else env["paraphrases_tgt"]
    direction = setting.ladder_direction
    return env[f"ladders_{direction}"]


def bundle_text(bundle) -> str:
    """Canonical serialization used for the golden files."""
    return json.dumps(
        {"system": bundle.system, "messages": list(bundle.messages), "query": bundle.query},
        indent=2, ensure_ascii=False, sort_keys=True,
    ) + "\n"
