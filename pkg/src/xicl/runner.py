"""Pipeline orchestration: demo generation, evaluation runs, scoring,
statistics, and reporting, all resumable and deterministic under one seed.

Every stage reads one JSON config whose resolved content hashes into the run
id, so differing runs can never overwrite each other. Records land in
results_dir/<run_id>/records.jsonl; a (model, setting, language, sample)
tuple already present there is skipped on re-runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from xicl import codeswitch, report, stats
from xicl.codeswitch import (
    Demonstration, GenerationPolicy, LadderCache, WordMixGenerator, ladder_for_pair,
)
from xicl.corpus import (
    ParallelPair, Sample, SampleSet, load_dataset, pair_by_id, sample_balanced,
    sample_mbbq, split_demos,
)
from xicl.extraction import (
    extract_mcq, extract_short_answer, extract_translation, strip_reasoning,
)
from xicl.gateway import (
    ChatRequest, EndpointConfig, Gateway, ModelGenerator, ResponseCache,
)
from xicl.languages import LANGUAGES, get_language
from xicl.metrics import MetricParams, bridge_scores, chrf
from xicl.promptkit import (
    DemoPair, LadderDemo, ParaphraseDemo, XiclSetting, assemble_prompt,
    setting_from_id,
)


class ConfigError(ValueError):
    """Malformed or incomplete run configuration."""


@dataclass
class ModelConfig:
    id: str
    endpoint: str
    api_key_env: str | None = None
    requests_per_minute: int | None = None
    min_temperature: float = 0.0


@dataclass
class DatasetConfig:
    kind: str
    languages: dict[str, str]  # language code -> jsonl path
    per_cell: int | None = None
    cell_keys: list[str] = field(default_factory=lambda: ["subject", "language"])
    mbbq_per_template: int | None = None


@dataclass
class RunConfig:
    datasets: list[DatasetConfig]
    target_language: str
    models: list[ModelConfig]
    settings: list[str]
    unseen_languages: dict[str, list[str]] = field(default_factory=dict)
    k_shots: int = 5
    seed: int = 42
    temperature: float = 0.0
    generation_policy: GenerationPolicy = field(default_factory=GenerationPolicy)
    metric_params: MetricParams = field(default_factory=MetricParams)
    bootstrap: stats.BootstrapParams | None = None
    cache_dir: str = "cache"
    results_dir: str = "results"
    max_in_flight: int = 4
    bridge_endpoint: str | None = None
    generator_model: str = "wordmix"
    strip_reasoning: bool = True
    demo_sharing: str = "parallel_id"
    translate_cot_drop_demos: bool = False
    method_setting: str = "csicl_tgt_to_en"
    sample_limit: int | None = None
    _raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.demo_sharing not in ("parallel_id", "per_language"):
            raise ConfigError(f"unknown demo_sharing {self.demo_sharing!r}")
        get_language(self.target_language)
        for setting_id in self.settings:
            setting_from_id(setting_id)
        if self.bootstrap is None:
            self.bootstrap = stats.BootstrapParams(seed=self.seed)

    @property
    def evaluation_languages(self) -> list[str]:
        codes = ["en", self.target_language]
        for tier in ("high", "mid", "low"):
            for code in self.unseen_languages.get(tier, []):
                if code not in codes:
                    codes.append(code)
        return codes

    @property
    def run_id(self) -> str:
        # Storage locations are excluded: the id names the experiment, so the
        # same run re-rooted elsewhere must resolve to the same directory name.
        resolved = {k: v for k, v in self._raw.items()
                    if k not in ("results_dir", "cache_dir")}
        resolved.setdefault("seed", self.seed)
        resolved.setdefault("k_shots", self.k_shots)
        blob = json.dumps(resolved, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]

    @property
    def run_dir(self) -> Path:
        return Path(self.results_dir) / self.run_id

    def settings_resolved(self) -> list[XiclSetting]:
        return [setting_from_id(s) for s in self.settings]


def load_config(path: str | Path, seed_override: int | None = None) -> RunConfig:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if seed_override is not None:
        raw["seed"] = seed_override
    try:
        datasets = [DatasetConfig(**entry) for entry in raw["datasets"]]
        models = [ModelConfig(**entry) for entry in raw["models"]]
        config = RunConfig(
            datasets=datasets,
            target_language=raw["target_language"],
            models=models,
            settings=list(raw["settings"]),
            unseen_languages=raw.get("unseen_languages", {}),
            k_shots=raw.get("k_shots", 5),
            seed=raw.get("seed", 42),
            temperature=raw.get("temperature", 0.0),
            generation_policy=GenerationPolicy(**raw.get("generation_policy", {})),
            metric_params=MetricParams(
                **raw.get("metric_params", {}),
                bridge_endpoint=raw.get("bridge_endpoint"),
            ),
            bootstrap=stats.BootstrapParams(
                seed=raw.get("seed", 42), **raw.get("bootstrap", {})
            ),
            cache_dir=raw.get("cache_dir", "cache"),
            results_dir=raw.get("results_dir", "results"),
            max_in_flight=raw.get("max_in_flight", 4),
            bridge_endpoint=raw.get("bridge_endpoint"),
            generator_model=raw.get("generator_model", "wordmix"),
            strip_reasoning=raw.get("strip_reasoning", True),
            demo_sharing=raw.get("demo_sharing", "parallel_id"),
            translate_cot_drop_demos=raw.get("translate_cot_drop_demos", False),
            method_setting=raw.get("method_setting", "csicl_tgt_to_en"),
            sample_limit=raw.get("sample_limit"),
            _raw=raw,
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    return config


# ---------------------------------------------------------------------------
# Data plumbing

def _load_language_sets(config: RunConfig, dataset: DatasetConfig) -> dict[str, SampleSet]:
    sets: dict[str, SampleSet] = {}
    for code, path in dataset.languages.items():
        loaded = load_dataset(path, dataset.kind)
        if dataset.kind == "mbbq" and dataset.mbbq_per_template:
            loaded = sample_mbbq(loaded, dataset.mbbq_per_template, config.seed)
        elif dataset.per_cell:
            loaded = sample_balanced(loaded, dataset.per_cell, dataset.cell_keys, config.seed)
        sets[code] = loaded
    return sets


@dataclass
class DemoPlan:
    """Demo pool plus per-language test sets for one dataset."""
    dataset: DatasetConfig
    demo_target: SampleSet
    demo_english: SampleSet | None
    tests: dict[str, SampleSet]
    pairs: list[ParallelPair]


def prepare_demos(config: RunConfig, dataset: DatasetConfig) -> DemoPlan:
    sets = _load_language_sets(config, dataset)
    target_code = config.target_language
    if target_code not in sets:
        raise ConfigError(f"dataset {dataset.kind} lacks the target language {target_code}")
    demo_target, _ = split_demos(sets[target_code], config.k_shots, config.seed)
    demo_ids = {s.id for s in demo_target}

    english_set = sets.get("en")
    demo_english = None
    pairs: list[ParallelPair] = []
    if english_set is not None:
        demo_english = SampleSet(
            tuple(s for s in (english_set.by_id().get(i) for i in (d.id for d in demo_target))
                  if s is not None),
            provenance=f"{english_set.provenance}|demo-twins",
        )
        if len(demo_english) == len(demo_target):
            pairs = pair_by_id(demo_target, english_set)
    elif demo_target.samples and demo_target.samples[0].task == "translation":
        # Translation records are parallel already: reference is the English side.
        demo_english = SampleSet(
            tuple(replace(s, language=LANGUAGES["en"], question=s.gold[0])
                  for s in demo_target),
            provenance=f"{demo_target.provenance}|reference-side",
        )
        pairs = [
            ParallelPair(id=s.id, source_text=s.question, english_text=s.gold[0],
                         source_lang=s.language)
            for s in demo_target
        ]

    tests = {}
    for code, sample_set in sets.items():
        if config.demo_sharing == "per_language":
            _, test = split_demos(sample_set, config.k_shots, config.seed)
        else:
            test = SampleSet(
                tuple(s for s in sample_set if s.id not in demo_ids),
                provenance=f"{sample_set.provenance}|minus-demos",
            )
        if config.sample_limit:
            test = SampleSet(test.samples[: config.sample_limit],
                             provenance=f"{test.provenance}|limit={config.sample_limit}")
        tests[code] = test
    return DemoPlan(dataset=dataset, demo_target=demo_target,
                    demo_english=demo_english, tests=tests, pairs=pairs)


def build_gateway(config: RunConfig, transport=None) -> Gateway:
    endpoints = {
        m.id: EndpointConfig(
            model_id=m.id, url=m.endpoint, api_key_env=m.api_key_env,
            requests_per_minute=m.requests_per_minute,
            min_temperature=m.min_temperature,
        )
        for m in config.models
    }
    return Gateway(endpoints, ResponseCache(config.cache_dir), transport=transport)


def make_generator(config: RunConfig, gateway: Gateway):
    if config.generator_model == "wordmix":
        return WordMixGenerator()
    if config.generator_model not in gateway.endpoints:
        raise ConfigError(
            f"generator model {config.generator_model!r} has no configured endpoint"
        )
    return ModelGenerator(gateway, config.generator_model, config.temperature)


# ---------------------------------------------------------------------------
# gen-demos

def paraphrase_digest(text: str, language: str, generator_id: str) -> str:
    blob = json.dumps({"text": text, "language": language, "generator": generator_id},
                      sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def generate_paraphrases(text: str, language_code: str, generator,
                         cache_dir: Path, generator_id: str) -> list[str]:
    digest = paraphrase_digest(text, language_code, generator_id)
    cache_path = Path(cache_dir) / "paraphrases" / f"{digest}.json"
    if cache_path.exists():
        return json.loads(cache_path.read_text(encoding="utf-8"))["paraphrases"]
    system = codeswitch.load_template("gen_paraphrase").replace(
        "{paraphrase_language}", LANGUAGES[language_code].name
    )
    reply = generator(system, text)
    lines = []
    for line in reply.splitlines():
        cleaned = line.strip()
        if not cleaned:
            continue
        cleaned = codeswitch._STEP_LINE_RE.sub(lambda m: m.group(2), cleaned)
        lines.append(cleaned)
    if len(lines) < 4:
        raise codeswitch.GenerationError(
            f"paraphrase generator produced {len(lines)} lines, need 4"
        )
    paraphrases = lines[:4]
    cache_path.parent.mkdir(parents=True, exist_ok=True)
    cache_path.write_text(
        json.dumps({"text": text, "language": language_code, "generator_id": generator_id,
                    "paraphrases": paraphrases}, sort_keys=True, ensure_ascii=False),
        encoding="utf-8",
    )
    return paraphrases


def cmd_gen_demos(config: RunConfig, gateway: Gateway | None = None) -> dict:
    """Populate the ladder/paraphrase caches; returns the manifest."""
    own_gateway = gateway is None
    gateway = gateway or build_gateway(config)
    generator = make_generator(config, gateway)
    generator_id = getattr(generator, "generator_id", config.generator_model)
    cache = LadderCache(config.cache_dir)

    settings = config.settings_resolved()
    directions = sorted({
        s.ladder_direction for s in settings if s.ladder_direction is not None
    })
    paraphrase_langs = sorted({
        s.lang for s in settings if s.kind == "paraphrase"
    })

    manifest: dict = {"run_id": config.run_id, "ladders": [], "paraphrases": [],
                      "generator_id": generator_id}
    all_valid = True
    try:
        for dataset in config.datasets:
            plan = prepare_demos(config, dataset)
            if directions and not plan.pairs:
                raise ConfigError(
                    f"dataset {dataset.kind}: ladder settings need English twins "
                    f"for the demo pool (parallel ids)"
                )
            for pair in plan.pairs:
                for direction in directions:
                    result, digest = ladder_for_pair(
                        pair, direction, config.generation_policy, generator,
                        generator_id, cache,
                    )
                    manifest["ladders"].append({
                        "dataset": dataset.kind,
                        "pair_id": pair.id,
                        "direction": direction,
                        "digest": digest,
                        "attempts": result.attempts,
                        "valid": result.valid,
                        "violations": list(result.violations),
                    })
                    all_valid = all_valid and result.valid
            for lang_key in paraphrase_langs:
                for sample in _paraphrase_samples(plan, lang_key, config):
                    paraphrases = generate_paraphrases(
                        sample.question, sample.language.code, generator,
                        Path(config.cache_dir), generator_id,
                    )
                    manifest["paraphrases"].append({
                        "dataset": dataset.kind,
                        "sample_id": sample.id,
                        "language": sample.language.code,
                        "digest": paraphrase_digest(sample.question, sample.language.code,
                                                    generator_id),
                        "count": len(paraphrases),
                    })
    finally:
        if own_gateway:
            gateway.close()

    manifest["all_valid"] = all_valid
    run_dir = config.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "demo_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return manifest


def _paraphrase_samples(plan: DemoPlan, lang_key: str, config: RunConfig) -> list[Sample]:
    if lang_key == "tgt":
        return list(plan.demo_target)
    if plan.demo_english is None or len(plan.demo_english) != len(plan.demo_target):
        raise ConfigError("paraphrase_en needs English twins for the demo pool")
    return list(plan.demo_english)


# ---------------------------------------------------------------------------
# run

def _demo_items(setting: XiclSetting, plan: DemoPlan, config: RunConfig,
                generator_id: str, cache: LadderCache):
    """Resolve the demonstration objects a setting needs."""
    if not setting.needs_demos:
        return []
    if setting.kind == "fewshot_mono":
        if setting.lang == "tgt":
            return list(plan.demo_target)
        if plan.demo_english is None or len(plan.demo_english) != len(plan.demo_target):
            raise ConfigError(f"{setting.id} needs English demo twins")
        return list(plan.demo_english)
    if setting.kind in ("fewshot_parallel", "translate_cot"):
        if config.translate_cot_drop_demos and setting.kind == "translate_cot":
            return []
        english = plan.demo_english.by_id() if plan.demo_english else {}
        pairs = []
        for sample in plan.demo_target:
            twin = english.get(sample.id)
            if twin is None:
                raise ConfigError(f"{setting.id} needs English demo twins")
            pairs.append(DemoPair(target=sample, english=twin))
        return pairs
    if setting.uses_ladders:
        direction = setting.ladder_direction
        english = plan.demo_english.by_id() if plan.demo_english else {}
        demos = []
        for sample, pair in zip(plan.demo_target, plan.pairs):
            digest = codeswitch.ladder_digest(pair, direction, generator_id,
                                              config.generation_policy)
            payload = cache.get(digest)
            if payload is None:
                raise ConfigError(
                    f"no cached ladder for pair {pair.id} direction {direction}; "
                    f"run gen-demos first"
                )
            result = codeswitch._result_from_payload(payload, pair)
            shown = sample if direction == "tgt_to_en" else english.get(sample.id)
            if shown is None:
                raise ConfigError(f"{setting.id} needs English demo twins")
            demos.append(LadderDemo(
                sample=shown,
                demonstration=Demonstration(
                    sample_id=sample.id, ladder=result.ladder,
                    answer_text=sample.gold[0],
                ),
            ))
        return demos
    if setting.kind == "paraphrase":
        samples = _paraphrase_samples(plan, setting.lang, config)
        demos = []
        for sample in samples:
            digest = paraphrase_digest(sample.question, sample.language.code, generator_id)
            path = Path(config.cache_dir) / "paraphrases" / f"{digest}.json"
            if not path.exists():
                raise ConfigError(
                    f"no cached paraphrases for sample {sample.id}; run gen-demos first"
                )
            paraphrases = json.loads(path.read_text(encoding="utf-8"))["paraphrases"]
            demos.append(ParaphraseDemo(sample=sample, paraphrases=tuple(paraphrases)))
        return demos
    raise ConfigError(f"unhandled setting {setting.id}")


def _record_key(record: dict) -> tuple:
    return (record["model"], record["setting"], record["language"], record["sample_id"])


def load_records(path: Path) -> list[dict]:
    if not path.exists():
        return []
    records = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def _extract(sample: Sample, setting: XiclSetting, text: str, config: RunConfig):
    if config.strip_reasoning:
        text = strip_reasoning(text)
    if sample.task == "mcq":
        return extract_mcq(text, set(sample.letters))
    if sample.task == "short_answer":
        return extract_short_answer(text)
    return extract_translation(text, setting)


def _score(sample: Sample, extracted, config: RunConfig,
           pooled_translation: list | None = None) -> float:
    if extracted.out_of_format:
        return 0.0
    if sample.task == "mcq":
        return 1.0 if extracted.value in sample.gold else 0.0
    if sample.task == "short_answer":
        return 1.0 if extracted.value in set(sample.gold) else 0.0
    if config.metric_params.backend == "chrf":
        return chrf(extracted.value, sample.gold[0], config.metric_params)
    # comet_bridge: pooled and filled in after the batch completes.
    pooled_translation.append((sample.question, extracted.value, sample.gold[0]))
    return -1.0


def cmd_run(config: RunConfig, gateway: Gateway | None = None,
            dry_run: bool = False) -> Path:
    """Evaluate every (model, setting, sample); append records, resumable."""
    own_gateway = gateway is None
    gateway = gateway or build_gateway(config)
    generator_id = (
        WordMixGenerator.generator_id if config.generator_model == "wordmix"
        else config.generator_model
    )
    cache = LadderCache(config.cache_dir)
    run_dir = config.run_dir
    records_path = run_dir / "records.jsonl"
    done = {_record_key(r) for r in load_records(records_path)}
    settings = config.settings_resolved()

    sink = None
    try:
        if not dry_run:
            run_dir.mkdir(parents=True, exist_ok=True)
            sink = records_path.open("a", encoding="utf-8")
        for dataset in config.datasets:
            plan = prepare_demos(config, dataset)
            for model in config.models:
                for setting in settings:
                    demos = _demo_items(setting, plan, config, generator_id, cache)
                    for lang_code in config.evaluation_languages:
                        test = plan.tests.get(lang_code)
                        if test is None:
                            continue
                        _run_cell(
                            config, gateway, sink, done, dataset, plan, model,
                            setting, demos, lang_code, test, dry_run,
                        )
    finally:
        if sink is not None:
            sink.close()
        if own_gateway:
            gateway.close()
    return records_path


def _run_cell(config, gateway, sink, done, dataset, plan, model, setting, demos,
              lang_code, test, dry_run) -> None:
    rnd_pool = [LANGUAGES[c] for c in config.evaluation_languages]
    pending: list[tuple[Sample, ChatRequest]] = []
    include_demos = not (setting.kind == "translate_cot" and config.translate_cot_drop_demos)
    expected = config.k_shots if (setting.needs_demos and include_demos) else 0
    for sample in test:
        key = (model.id, setting.id, lang_code, sample.id)
        if key in done:
            continue
        bundle = assemble_prompt(
            setting, demos if expected else [], sample, rnd_pool=rnd_pool,
            seed=config.seed, k_shots=config.k_shots, include_demos=include_demos,
        )
        request = ChatRequest(
            model_id=model.id, system=bundle.system,
            messages=bundle.messages + (("user", bundle.query),),
            temperature=config.temperature,
        )
        if dry_run:
            print(f"{model.id}\t{setting.id}\t{lang_code}\t{sample.id}\t{request.digest()}")
            continue
        pending.append((sample, request))
    if dry_run or not pending:
        return

    responses = gateway.complete_batch([req for _, req in pending],
                                       max_in_flight=config.max_in_flight)
    pooled: list[tuple[str, str, str]] = []
    rows: list[dict] = []
    for (sample, request), response in zip(pending, responses):
        if response.finish == "error":
            rows.append({
                "model": model.id, "setting": setting.id, "language": lang_code,
                "dataset": dataset.kind, "task": sample.task, "sample_id": sample.id,
                "subject": sample.subject, "prompt_digest": request.digest(),
                "response": None, "finish": "error", "error": response.error,
                "extracted": None, "method": "none", "out_of_format": True,
                "score": 0.0,
            })
            continue
        extracted = _extract(sample, setting, response.text, config)
        score = _score(sample, extracted, config,
                       pooled_translation=pooled)
        substituted = (
            response.temperature_used is not None
            and response.temperature_used != request.temperature
        )
        rows.append({
            "model": model.id, "setting": setting.id, "language": lang_code,
            "dataset": dataset.kind, "task": sample.task, "sample_id": sample.id,
            "subject": sample.subject, "prompt_digest": request.digest(),
            "response": response.text, "finish": response.finish,
            "extracted": extracted.value, "method": extracted.method,
            "out_of_format": extracted.out_of_format, "score": score,
            "temperature_substituted": substituted,
        })
    if pooled:
        scores = bridge_scores(pooled, config.bridge_endpoint or
                               config.metric_params.bridge_endpoint)
        it = iter(scores)
        for row in rows:
            if row["score"] == -1.0:
                row["score"] = next(it) * 100.0
    for row in rows:
        sink.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
        done.add(_record_key(row))
    sink.flush()


# ---------------------------------------------------------------------------
# score / stats / report

@dataclass(frozen=True)
class RecordView:
    """Light adapter so report/stats can consume persisted record dicts."""
    setting_id: str
    model_id: str
    language: str
    dataset: str
    task: str
    sample_id: str
    subject: str | None
    score: float
    out_of_format: bool


def record_views(records: list[dict]) -> list[RecordView]:
    return [
        RecordView(
            setting_id=r["setting"], model_id=r["model"], language=r["language"],
            dataset=r["dataset"], task=r["task"], sample_id=r["sample_id"],
            subject=r.get("subject"), score=float(r["score"]),
            out_of_format=bool(r["out_of_format"]),
        )
        for r in records
    ]


def cmd_score(config: RunConfig) -> Path:
    """Re-extract and re-score every persisted record from its raw response."""
    run_dir = config.run_dir
    records_path = run_dir / "records.jsonl"
    records = load_records(records_path)
    if not records:
        raise ConfigError(f"no records at {records_path}")

    samples: dict[tuple[str, str, str], Sample] = {}
    for dataset in config.datasets:
        plan = prepare_demos(config, dataset)
        for lang_code, test in plan.tests.items():
            for sample in test:
                samples[(dataset.kind, lang_code, sample.id)] = sample

    pooled: list[tuple[str, str, str]] = []
    pooled_rows: list[dict] = []
    for row in records:
        key = (row["dataset"], row["language"], row["sample_id"])
        sample = samples.get(key)
        if sample is None or row.get("response") is None:
            continue
        setting = setting_from_id(row["setting"])
        extracted = _extract(sample, setting, row["response"], config)
        row["extracted"] = extracted.value
        row["method"] = extracted.method
        row["out_of_format"] = extracted.out_of_format
        if sample.task == "translation" and not extracted.out_of_format \
                and config.metric_params.backend == "comet_bridge":
            pooled.append((sample.question, extracted.value, sample.gold[0]))
            pooled_rows.append(row)
            row["score"] = -1.0
        else:
            row["score"] = _score(sample, extracted, config)
    if pooled:
        scores = bridge_scores(pooled, config.bridge_endpoint or
                               config.metric_params.bridge_endpoint)
        for row, value in zip(pooled_rows, scores):
            row["score"] = value * 100.0

    with records_path.open("w", encoding="utf-8") as sink:
        for row in records:
            sink.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    return records_path


def cmd_stats(config: RunConfig, records: list[dict] | None = None) -> Path:
    """significant_vs_all per (dataset, model, language-class column)."""
    run_dir = config.run_dir
    if records is None:
        records = load_records(run_dir / "records.jsonl")
    views = record_views(records)
    if not views:
        raise ConfigError("no records to analyze")
    method = config.method_setting

    out: dict = {}
    for dataset_kind in sorted({v.dataset for v in views}):
        ds_views = [v for v in views if v.dataset == dataset_kind]
        out[dataset_kind] = {}
        for model_id in sorted({v.model_id for v in ds_views}):
            mv = [v for v in ds_views if v.model_id == model_id]
            out[dataset_kind][model_id] = {}
            for column in report.LANGUAGE_CLASS_COLUMNS:
                in_column = [
                    v for v in mv
                    if report.language_class_of(v.language, config.target_language) == column
                ]
                if not in_column:
                    continue
                vectors = _vectors_by_setting(in_column)
                if method not in vectors:
                    continue
                target = vectors[method]
                baselines = [vec for sid, vec in sorted(vectors.items()) if sid != method]
                baselines = [b for b in baselines if b.item_ids == target.item_ids]
                if not baselines:
                    continue
                verdict = stats.significant_vs_all(target, baselines, config.bootstrap)
                out[dataset_kind][model_id][column] = verdict.to_dict()

    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / "bootstrap.json"
    path.write_text(json.dumps(out, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
                    encoding="utf-8")
    return path


def _vectors_by_setting(views: list[RecordView]) -> dict[str, stats.ScoreVector]:
    by_setting: dict[str, dict[tuple[str, str], float]] = {}
    for view in views:
        by_setting.setdefault(view.setting_id, {})[(view.language, view.sample_id)] = view.score
    vectors = {}
    for setting_id, items in by_setting.items():
        keys = sorted(items)
        vectors[setting_id] = stats.ScoreVector(
            system_id=setting_id,
            item_ids=tuple(f"{lang}:{sid}" for lang, sid in keys),
            scores=tuple(items[k] for k in keys),
        )
    return vectors


def cmd_report(config: RunConfig, records: list[dict] | None = None) -> list[Path]:
    """Render language-class, per-subject, and per-model tables."""
    run_dir = config.run_dir
    if records is None:
        records = load_records(run_dir / "records.jsonl")
    views = record_views(records)
    if not views:
        raise ConfigError("no records to report")
    bootstrap_path = run_dir / "bootstrap.json"
    verdicts = {}
    if bootstrap_path.exists():
        verdicts = json.loads(bootstrap_path.read_text(encoding="utf-8"))
    method = config.method_setting

    matrices: dict[str, dict] = {}
    tables_md: list[str] = []
    tables_csv: list[str] = []
    for dataset_kind in sorted({v.dataset for v in views}):
        ds_views = [v for v in views if v.dataset == dataset_kind]
        percent = all(v.task != "translation" for v in ds_views)
        matrices[dataset_kind] = {}
        for model_id in sorted({v.model_id for v in ds_views}):
            mv = [v for v in ds_views if v.model_id == model_id]
            matrix = report.language_class_matrix(
                mv, config.target_language, row_order=list(config.settings),
                percent_scale=percent,
            )
            matrix = report.mark_best(matrix)
            marks = {
                column: bool(payload.get("overall"))
                for column, payload in
                verdicts.get(dataset_kind, {}).get(model_id, {}).items()
            }
            matrix = report.apply_column_significance(matrix, marks, method_row=method)
            matrices[dataset_kind][model_id] = report.matrix_to_dict(matrix)
            title = f"## {dataset_kind} / {model_id}"
            tables_md.append(title + "\n\n" + report.render(matrix, "markdown"))
            tables_csv.append(report.render(matrix, "csv"))

            if "zero_shot" in matrix.rows:
                deltas = report.delta_vs_baseline(matrix, "zero_shot")
                matrices[dataset_kind][f"{model_id}/delta_vs_zero_shot"] = (
                    report.matrix_to_dict(deltas)
                )
                tables_md.append(
                    f"## {dataset_kind} / {model_id} / delta vs zero_shot (%p)\n\n"
                    + report.render(deltas, "markdown")
                )

            by_subject = [v for v in mv if v.subject is not None]
            if by_subject:
                subject_matrix = report.mark_best(report.aggregate(
                    by_subject, ["subject"], row_order=list(config.settings),
                    percent_scale=percent,
                ))
                matrices[dataset_kind][f"{model_id}/by_subject"] = (
                    report.matrix_to_dict(subject_matrix)
                )
                tables_md.append(
                    f"## {dataset_kind} / {model_id} / by subject\n\n"
                    + report.render(subject_matrix, "markdown")
                )

        model_matrix = report.mark_best(report.aggregate(
            ds_views, ["model_id"], row_order=list(config.settings),
            percent_scale=percent,
        ))
        matrices[dataset_kind]["by_model"] = report.matrix_to_dict(model_matrix)
        tables_md.append(f"## {dataset_kind} / by model\n\n"
                         + report.render(model_matrix, "markdown"))

    run_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    table_md = run_dir / "table.md"
    table_md.write_text("\n".join(tables_md), encoding="utf-8")
    outputs.append(table_md)
    table_csv = run_dir / "table.csv"
    table_csv.write_text("\n".join(tables_csv), encoding="utf-8")
    outputs.append(table_csv)
    matrix_json = run_dir / "matrix.json"
    matrix_json.write_text(
        json.dumps(matrices, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    outputs.append(matrix_json)
    return outputs
