from __future__ import annotations

import numpy as np
import pytest

from xicl.extraction import Extracted
from xicl.metrics import (
    BridgeError, EvalRecord, MetricError, MetricParams, accuracy, bridge_scores,
    chrf, exact_match, score_translation,
)

# ---------------------------------------------------------------------------
# Independent brute-force chrF oracle: explicit n-gram lists, greedy multiset
# matching, no Counter arithmetic shared with the implementation.


def _oracle_ngram_list(text, n):
    grams = []
    for i in range(len(text)):
        gram = text[i:i + n]
        if len(gram) == n:
            grams.append(gram)
    return grams


def oracle_chrf(hyp, ref, max_n=6, beta=2.0):
    hyp = "".join(hyp.split())
    ref = "".join(ref.split())
    if hyp == "" and ref == "":
        return 100.0
    precisions, recalls = [], []
    for n in range(1, max_n + 1):
        hyp_grams = _oracle_ngram_list(hyp, n)
        ref_grams = _oracle_ngram_list(ref, n)
        if not hyp_grams or not ref_grams:
            continue
        pool = list(ref_grams)
        matched = 0
        for gram in hyp_grams:
            if gram in pool:
                pool.remove(gram)
                matched += 1
        precisions.append(matched / len(hyp_grams))
        recalls.append(matched / len(ref_grams))
    if not precisions:
        return 0.0
    precision = sum(precisions) / len(precisions)
    recall = sum(recalls) / len(recalls)
    if precision + recall == 0:
        return 0.0
    return 100.0 * (1 + beta ** 2) * precision * recall / (beta ** 2 * precision + recall)


def _random_text(rng, min_len=0, max_len=12):
    alphabet = list("abcdef 한국어中文x")
    length = int(rng.integers(min_len, max_len + 1))
    return "".join(rng.choice(alphabet, size=length))


def test_chrf_matches_oracle_on_50_random_pairs():
    rng = np.random.Generator(np.random.Philox(key=2024))
    for _ in range(50):
        hyp = _random_text(rng)
        ref = _random_text(rng)
        expected = oracle_chrf(hyp, ref)
        got = chrf(hyp, ref)
        assert got == pytest.approx(expected, rel=1e-9, abs=1e-12), (hyp, ref)


def test_chrf_identity_is_100_for_random_nonempty():
    rng = np.random.Generator(np.random.Philox(key=7))
    for _ in range(20):
        text = _random_text(rng, min_len=1)
        assert chrf(text, text) == pytest.approx(100.0)


def test_chrf_edge_cases():
    assert chrf("", "abc") == 0.0
    assert chrf("abc", "") == 0.0
    assert chrf("", "") == 100.0
    assert chrf("cat", "cap") == pytest.approx(oracle_chrf("cat", "cap"), rel=1e-9)


def test_chrf_whitespace_removed_before_ngrams():
    assert chrf("a b c", "abc") == pytest.approx(100.0)


def test_chrf_range_property():
    rng = np.random.Generator(np.random.Philox(key=99))
    for _ in range(100):
        value = chrf(_random_text(rng), _random_text(rng))
        assert 0.0 <= value <= 100.0


def test_chrf_params_validation():
    with pytest.raises(MetricError):
        MetricParams(chrf_max_n=0)
    with pytest.raises(MetricError):
        MetricParams(chrf_beta=0)
    with pytest.raises(MetricError):
        MetricParams(backend="bleu")


def _record(score, task="mcq", out_of_format=False):
    extracted = (
        Extracted(value=None, out_of_format=True, method="none") if out_of_format
        else Extracted(value="A", out_of_format=False, method="marker")
    )
    return EvalRecord(
        sample_id="s", setting_id="zero_shot", model_id="m", language="ko",
        task=task, extracted=extracted, score=score, out_of_format=out_of_format,
    )


def test_accuracy_examples():
    assert accuracy([_record(1.0)] * 4) == 1.0
    mixed = [_record(1.0)] * 886 + [_record(0.0)] * 114
    assert accuracy(mixed) == pytest.approx(0.886)
    three = [_record(1.0), _record(0.0), _record(0.0, out_of_format=True)]
    assert accuracy(three) == pytest.approx(1 / 3)


def test_accuracy_order_invariant():
    records = [_record(1.0), _record(0.0), _record(1.0)]
    assert accuracy(records) == accuracy(list(reversed(records)))


def test_accuracy_rejects_non_mcq_and_empty():
    with pytest.raises(MetricError):
        accuracy([])
    with pytest.raises(MetricError):
        accuracy([_record(1.0, task="translation")])


def test_out_of_format_scores_zero():
    with pytest.raises(MetricError):
        _record(1.0, out_of_format=True)


def test_exact_match():
    assert exact_match("paris", {"paris"}) == 1
    assert exact_match("the paris", {"paris"}) == 0
    assert exact_match("42", {"42", "forty-two"}) == 1


def test_score_translation_chrf_backend():
    assert score_translation("same text", "same text", "src") == pytest.approx(100.0)


def test_score_translation_bridge_backend(monkeypatch):
    params = MetricParams(backend="comet_bridge", bridge_endpoint="http://bridge.test")

    def fake_post(url, json=None, timeout=None):
        class Reply:
            status_code = 200

            def raise_for_status(self):
                pass

            def json(self):
                return {"scores": [0.85] * len(json["pairs"])}
        return Reply()

    monkeypatch.setattr("xicl.metrics.httpx.post", fake_post)
    assert score_translation("hyp", "ref", "src", params) == pytest.approx(85.0)


def test_bridge_error_names_endpoint():
    params = MetricParams(backend="comet_bridge",
                          bridge_endpoint="http://127.0.0.1:1/absent")
    with pytest.raises(BridgeError, match="127.0.0.1:1"):
        score_translation("hyp", "ref", "src", params)


def test_bridge_requires_endpoint():
    params = MetricParams(backend="comet_bridge")
    with pytest.raises(BridgeError, match="no bridge endpoint"):
        score_translation("hyp", "ref", "src", params)


def test_bridge_score_count_mismatch(monkeypatch):
    def fake_post(url, json=None, timeout=None):
        class Reply:
            status_code = 200

            def raise_for_status(self):
                pass

            def json(self):
                return {"scores": [0.5]}
        return Reply()

    monkeypatch.setattr("xicl.metrics.httpx.post", fake_post)
    with pytest.raises(BridgeError, match="returned 1 scores for 2"):
        bridge_scores([("s", "h", "r"), ("s2", "h2", "r2")], "http://bridge.test")
