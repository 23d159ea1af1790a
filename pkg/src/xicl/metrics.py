"""Scoring: accuracy for MCQ, exact match for short answers, chrF natively
for translation, and an optional neural-metric bridge service.

chrF follows the standard definition: character n-grams for n = 1..max_n on
whitespace-stripped text, per-order precision/recall from clipped counts,
uniform average over orders where both sides have n-grams, F-beta with
recall weight beta (default 2), scaled to [0, 100].
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

import httpx

from xicl.extraction import Extracted


class MetricError(ValueError):
    """Invalid metric inputs or parameters."""


class BridgeError(RuntimeError):
    """The neural-metric bridge was required but could not be reached."""


@dataclass(frozen=True)
class MetricParams:
    chrf_max_n: int = 6
    chrf_beta: float = 2.0
    backend: str = "chrf"  # chrf | comet_bridge
    bridge_endpoint: str | None = None

    def __post_init__(self) -> None:
        if self.chrf_max_n < 1:
            raise MetricError("chrf_max_n must be >= 1")
        if self.chrf_beta <= 0:
            raise MetricError("chrf_beta must be > 0")
        if self.backend not in ("chrf", "comet_bridge"):
            raise MetricError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    setting_id: str
    model_id: str
    language: str
    task: str
    extracted: Extracted
    score: float
    out_of_format: bool
    dataset: str = ""
    subject: str | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.out_of_format and self.score != 0:
            raise MetricError("out-of-format records must score 0")


def accuracy(records) -> float:
    """Mean per-item correctness over MCQ records."""
    records = list(records)
    if not records:
        raise MetricError("accuracy over zero records")
    for record in records:
        if record.task != "mcq":
            raise MetricError(f"accuracy expects mcq records, got {record.task}")
    return sum(r.score for r in records) / len(records)


def exact_match(pred: str, gold: set[str] | tuple[str, ...]) -> int:
    """1 iff the normalized prediction is one of the normalized golds."""
    return 1 if pred in set(gold) else 0


_WS_RE = re.compile(r"\s+")


def _char_ngrams(text: str, n: int) -> Counter:
    return Counter(text[i:i + n] for i in range(len(text) - n + 1))


def chrf(hyp: str, ref: str, params: MetricParams = MetricParams()) -> float:
    """Sentence chrF in [0, 100]."""
    hyp = _WS_RE.sub("", hyp)
    ref = _WS_RE.sub("", ref)
    if not hyp and not ref:
        return 100.0

    precision_sum = recall_sum = 0.0
    orders = 0
    for n in range(1, params.chrf_max_n + 1):
        hyp_ngrams = _char_ngrams(hyp, n)
        ref_ngrams = _char_ngrams(ref, n)
        hyp_total = sum(hyp_ngrams.values())
        ref_total = sum(ref_ngrams.values())
        if hyp_total == 0 or ref_total == 0:
            continue
        common = sum((hyp_ngrams & ref_ngrams).values())
        precision_sum += common / hyp_total
        recall_sum += common / ref_total
        orders += 1
    if orders == 0:
        return 0.0
    precision = precision_sum / orders
    recall = recall_sum / orders
    if precision + recall == 0:
        return 0.0
    beta_sq = params.chrf_beta ** 2
    return 100.0 * (1 + beta_sq) * precision * recall / (beta_sq * precision + recall)


def score_translation(hyp: str, ref: str, src: str,
                      params: MetricParams = MetricParams()) -> float:
    """Translation score in [0, 100] from the configured backend."""
    if params.backend == "chrf":
        return chrf(hyp, ref, params)
    if not params.bridge_endpoint:
        raise BridgeError("comet_bridge backend selected but no bridge endpoint configured")
    scores = bridge_scores([(src, hyp, ref)], params.bridge_endpoint)
    return scores[0] * 100.0


def bridge_scores(pairs: list[tuple[str, str, str]], endpoint: str,
                  timeout: float = 60.0) -> list[float]:
    """POST (source, hypothesis, reference) triples to the bridge service."""
    body = {
        "pairs": [
            {"source": src, "hypothesis": hyp, "reference": ref}
            for src, hyp, ref in pairs
        ]
    }
    url = endpoint.rstrip("/") + "/score"
    try:
        response = httpx.post(url, json=body, timeout=timeout)
        response.raise_for_status()
    except httpx.HTTPError as exc:
        raise BridgeError(f"bridge unreachable at {url}: {exc}") from exc
    payload = response.json()
    scores = payload.get("scores")
    if not isinstance(scores, list) or len(scores) != len(pairs):
        raise BridgeError(f"bridge at {url} returned {len(scores or [])} scores "
                          f"for {len(pairs)} pairs")
    return [float(s) for s in scores]


def score_record(sample, extracted: Extracted, setting_id: str,
                 params: MetricParams = MetricParams()) -> float:
    """Per-item score given the sample's task and gold answers."""
    if extracted.out_of_format:
        return 0.0
    if sample.task == "mcq":
        return 1.0 if extracted.value in sample.gold else 0.0
    if sample.task == "short_answer":
        return float(exact_match(extracted.value, sample.gold))
    return score_translation(extracted.value, sample.gold[0], sample.question, params)
