"""Acceptance criteria, one test each, every one printing a PASS or FAIL line.

Run alone with ``pytest -s tests/test_acceptance.py``; the lines are also
repeated in the terminal summary of any run that includes this file.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE, random_graph
from mgsa.ablation import LAMBDA_GRID, format_table, lambda_arms, run_arms, summarize, zeroed
from mgsa.cli import GRADCHECK_TEXT, GRADCHECK_TRIPLES, gradcheck_report
from mgsa.config import build_run_config
from mgsa.features import collate
from mgsa.generate import generate
from mgsa.kg import Example, KnowledgeGraph
from mgsa.linearize import build_vocab, linearize_word_level
from mgsa.metrics import BLEU_EPSILON, bleu4, rouge_l
from mgsa.model import MGSAModel
from mgsa.structure import build_structure, structure_to_json
from mgsa.tensor import no_grad
from mgsa.toy import direction_task, overfit_corpus
from mgsa.train import train, training_features

pytestmark = pytest.mark.slow
TESTS = Path(__file__).parent


def word_map(g):
    return linearize_word_level(g, build_vocab([Example(g, ("x",))]))[1]


def report(n: int, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    ACCEPTANCE.append(line)
    assert ok, line


def test_criterion_1_structure_oracle():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        g = random_graph(rng, max_triples=5, max_words=3)
        triples = [tuple(t.as_list()) for t in g.triples]
        js = structure_to_json(g, build_structure(g, word_map(g)))
        mismatches += (js["rel_e"] != oracles.entity_labels(triples))
        mismatches += (js["adj"] != oracles.adjacency(triples))
        mismatches += (js["rel_w"] != oracles.word_labels(triples))
    elapsed = time.perf_counter() - start
    report(1, mismatches == 0 and elapsed < 10,
           f"{mismatches} mismatches over 200 graphs in {elapsed:.1f} s (limit 10 s)")


INVARIANTS = [
    "test_structure.py::TestEntityLabels::test_pairing_laws",
    "test_structure.py::TestAdjacency::test_symmetric_and_matches_incidence_labels",
    "test_structure.py::TestWordLabels::test_structured_antisymmetry",
    "test_structure.py::TestWordLabels::test_tie_is_double_forward",
    "test_tensor.py::TestForward::test_softmax_rows_sum_to_one",
    "test_tensor.py::TestForward::test_pool_one_token_per_unit_is_restriction",
    "test_encoder.py::TestEntityLayer::test_one_token_units_round_trip",
    "test_encoder.py::TestAggregate::test_lambda_zero_ignores_word_content",
    "test_encoder.py::TestEncode::test_lambda_zero_word_sequence_invariance",
    "test_seq2seq.py::TestSearch::test_width_one_is_greedy",
    "test_seq2seq.py::TestGeneration::test_width_one_equals_greedy_on_model",
]


def test_criterion_2_invariant_suite():
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(TESTS / node) for node in INVARIANTS]],
                          capture_output=True, text=True, cwd=TESTS.parent)
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
    report(2, proc.returncode == 0, f"{len(INVARIANTS)} invariant tests: {summary}")


def test_criterion_3_gradient_check():
    rc = build_run_config("desk")
    ex = Example(KnowledgeGraph.from_triples(GRADCHECK_TRIPLES), (GRADCHECK_TEXT,))
    start = time.perf_counter()
    result = gradcheck_report(ex, rc.encoder, rc.decoder, seed=0, n_coords=64)
    elapsed = time.perf_counter() - start
    ok = result["max_rel_error"] <= 1e-5 and elapsed < 60
    report(3, ok, f"max relative error {result['max_rel_error']:.3e} in {result['worst_param']} "
                  f"(limit 1e-5), {len(result['per_param'])} parameter groups, eps 1e-6, "
                  f"{elapsed:.0f} s (limit 60 s)")


def test_criterion_4_toy_overfit():
    rc = build_run_config("desk", {"epochs": 500, "max_gen_len": 40})
    corpus = overfit_corpus(16)
    vocab = build_vocab(corpus)
    n_triples = max(len(ex.graph.triples) for ex in corpus)
    model = MGSAModel(vocab, rc.encoder, rc.decoder, seed=0)
    feats = training_features(corpus, vocab, rc.encoder, rc.decoder.max_gen_len)
    start = time.perf_counter()
    train(model, feats, rc.train)
    with no_grad():
        loss = model.loss(collate(feats, rc.encoder.labels)).item()
    outputs = [generate(model, ex.graph, beam=1) for ex in corpus]
    score = bleu4(outputs, [ex.references for ex in corpus])
    elapsed = time.perf_counter() - start
    ok = score >= 99 and loss < 0.01 and elapsed < 300 and len(vocab) <= 60 and n_triples <= 3
    report(4, ok, f"training BLEU4 {score:.2f} (>= 99), teacher-forced loss {loss:.5f} (< 0.01), "
                  f"vocab {len(vocab)}, 500 epochs in {elapsed:.0f} s (limit 300 s)")


def test_criterion_5_structure_sensitivity():
    rc = build_run_config("desk", {"epochs": 40, "max_gen_len": 40})
    train_set, test_set = direction_task(n_train=200, n_test=50, seed=0)
    seeds = range(5)
    start = time.perf_counter()
    results = run_arms({"full": rc.encoder, "zeroed": zeroed(rc.encoder)}, train_set, test_set,
                       rc.decoder, rc.train, seeds)
    elapsed = time.perf_counter() - start
    full = [r.exact_match for r in results if r.name == "full"]
    zero = [r.exact_match for r in results if r.name == "zeroed"]
    gap = float(np.median(full) - np.median(zero))
    report(5, gap >= 10 and elapsed < 900,
           f"held-out exact match median full {np.median(full):.0f}% {full} vs zeroed "
           f"{np.median(zero):.0f}% {zero}, gap {gap:.0f} pp (>= 10), {elapsed:.0f} s (limit 900 s)")


def test_criterion_6_lambda_sweep():
    rc = build_run_config("desk", {"epochs": 100, "max_gen_len": 40})
    corpus = overfit_corpus(16)
    results = run_arms(lambda_arms(rc.encoder), corpus, corpus, rc.decoder, rc.train, seeds=(0,))
    table = summarize(results)
    print(format_table(table))
    lams = [float(row["arm"].split("=")[1]) for row in table]
    ok = lams == list(LAMBDA_GRID) and all(math.isfinite(row["bleu4"]) for row in table)
    cells = ", ".join(f"{row['arm']}: {row['bleu4']:.1f}" for row in table)
    report(6, ok, f"table emitted for lambda grid {lams} (BLEU4 {cells})")


def test_criterion_7_metric_fixtures():
    hand_bleu = 100 * math.exp(1 - 4 / 3) * (1 * 1 * 1 * BLEU_EPSILON) ** 0.25
    cases = [
        ("bleu identical", bleu4(["the cat sat on the mat"], [["the cat sat on the mat"]]), 100.0),
        ("bleu disjoint", bleu4(["x y z w"], [["a b c d"]]), 0.0),
        ("bleu brevity", bleu4(["the cat sat"], [["the cat sat down"]]), hand_bleu),
        ("rouge identical", rouge_l(["a b c"], [["a b c"]]), 100.0),
        ("rouge disjoint", rouge_l(["a b c"], [["x y z"]]), 0.0),
        ("rouge lcs", rouge_l(["a b c"], [["a x c"]]), 100 * (2 * (2 / 3) * (2 / 3)) / (4 / 3)),
    ]
    bad = [name for name, got, want in cases if round(got, 4) != round(want, 4)]
    detail = "; ".join(f"{name} {got:.4f}" for name, got, _ in cases)
    report(7, not bad, f"{detail}" + (f" (mismatch: {', '.join(bad)})" if bad else ""))


if __name__ == "__main__":
    sys.exit(pytest.main(["-s", "-q", __file__]))
