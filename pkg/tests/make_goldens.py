"""Regenerate the checked-in prompt goldens from the frozen fixture set.

Run from the repo root after an intentional prompt-layout change:

    python3 tests/make_goldens.py

and review the diff before committing.
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import conftest
from xicl.corpus import load_dataset, pair_by_id, split_demos
from xicl.languages import LANGUAGES
from xicl.promptkit import ALL_SETTINGS, assemble_prompt


def build_env():
    data = conftest.DATA_DIR
    ko_set = load_dataset(data / "mini_mcq_ko.jsonl", "globalmmlu")
    en_set = load_dataset(data / "mini_mcq_en.jsonl", "globalmmlu")
    demos, test = split_demos(ko_set, k=5, seed=42)
    pairs = pair_by_id(demos, en_set)
    english = en_set.by_id()
    from xicl.promptkit import DemoPair

    return {
        "demos_tgt": list(demos),
        "demos_en": [english[s.id] for s in demos],
        "pairs_both": [DemoPair(target=s, english=english[s.id]) for s in demos],
        "ladders_tgt_to_en": conftest.build_ladder_demos(demos, pairs, en_set, "tgt_to_en"),
        "ladders_en_to_tgt": conftest.build_ladder_demos(demos, pairs, en_set, "en_to_tgt"),
        "paraphrases_en": conftest.build_paraphrase_demos([english[s.id] for s in demos]),
        "paraphrases_tgt": conftest.build_paraphrase_demos(list(demos)),
        "query": test.samples[0],
        "rnd_pool": [LANGUAGES[c] for c in ("en", "ko", "zh", "tr", "te")],
    }


def main() -> None:
    env = build_env()
    out_dir = conftest.DATA_DIR / "goldens"
    out_dir.mkdir(parents=True, exist_ok=True)
    for setting in ALL_SETTINGS:
        demos = conftest.demos_for(setting.id, env)
        bundle = assemble_prompt(setting, demos, env["query"],
                                 rnd_pool=env["rnd_pool"], seed=42)
        path = out_dir / f"{setting.id}.txt"
        path.write_text(conftest.bundle_text(bundle), encoding="utf-8")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
