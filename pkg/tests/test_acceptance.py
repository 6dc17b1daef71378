"""Acceptance suite: one test per shipped criterion, each printing a PASS/FAIL line.

The end-to-end criteria (7-9) share one seeded synthetic corpus and a cache of
trained models built once per session; expect the whole module to take
roughly 20-30 minutes on a laptop CPU.  Run just this module with
``pytest tests/test_acceptance.py -v -s``.
"""

from __future__ import annotations

import math
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from detangle.baselines import FeedforwardRanker, LinearRanker
from detangle.clustering import Clustering, ReplyGraph, build_clusters
from detangle.corpus import build_vocab, corpus_stats, index_channel, load_channel_dir
from detangle.data import WindowConfig, make_example
from detangle.ensemble import model_avg, predict_channel_ensemble, prob_avg, vote
from detangle.inference import (parent_accuracy, pick_slot, predict_channel, predict_channels,
                                score_examples)
from detangle.metrics import ari, evaluate, exact_match_prf, one_to_one, scaled_vi
from detangle.model import (ContextAggregator, ContextRanker, EncoderConfig, MatchClassifier,
                            RankerConfig, heuristic_score, masked_probs)
from detangle.posttrain import PostTrainConfig, run_post_training
from detangle.synth import SynthConfig, write_corpus
from detangle.training import TrainConfig, grad_check, ranking_loss, train
from helpers import indexed_channel_from_parents
from oracles import (ari_oracle, bfs_components, one_to_one_oracle, prf_oracle,
                     scaled_vi_oracle)

torch.set_num_threads(os.cpu_count() or 2)


def report(criterion: str, passed: bool, detail: str) -> None:
    print(f"\n[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
    assert passed, f"{criterion}: {detail}"


def random_partition(rng: random.Random, n: int, max_clusters: int = 7) -> list[int]:
    return [rng.randrange(min(max_clusters, n)) for _ in range(n)]


def test_criterion_1_metric_oracle_suite():
    rng = random.Random(20250811)
    start = time.monotonic()
    pairs = 0
    worst = 0.0
    while pairs < 500:
        n = rng.randint(2, 12)
        pred = random_partition(rng, n)
        gold = random_partition(rng, n)
        worst = max(worst, abs(scaled_vi(pred, gold) - scaled_vi_oracle(pred, gold)))
        worst = max(worst, abs(ari(pred, gold) - ari_oracle(pred, gold)))
        worst = max(worst, abs(one_to_one(pred, gold) - one_to_one_oracle(pred, gold)))
        got = exact_match_prf(pred, gold)
        want = prf_oracle(pred, gold)
        worst = max(worst, *(abs(a - b) for a, b in
                             zip((got.precision, got.recall, got.f1), want)))
        pairs += 1
    elapsed = time.monotonic() - start
    report("criterion 1 (metric oracle suite)",
           worst <= 1e-9 and elapsed < 10.0,
           f"{pairs} partition pairs, max |impl - oracle| = {worst:.2e}, {elapsed:.2f}s")


def test_criterion_2_worked_metric_values():
    checks = {
        "scaled VI {12}{34} vs {13}{24}": (scaled_vi([0, 0, 1, 1], [0, 1, 0, 1]), 0.0),
        "ARI {12}{34} vs {13}{24}": (ari([0, 0, 1, 1], [0, 1, 0, 1]), -50.0),
        "1-1 gold {123}{4} pred {12}{34}": (one_to_one([0, 0, 1, 1], [0, 0, 0, 1]), 75.0),
    }
    prf = exact_match_prf([0, 0, 0, 1, 2], [0, 0, 0, 1, 1])
    checks["P gold {123}{45} pred {123}{4}{5}"] = (prf.precision, 100.0)
    checks["R gold {123}{45} pred {123}{4}{5}"] = (prf.recall, 50.0)
    checks["F1 gold {123}{45} pred {123}{4}{5}"] = (prf.f1, 66.67)
    bad = {name: (got, want) for name, (got, want) in checks.items()
           if abs(got - want) > 0.01}
    report("criterion 2 (worked metric values)", not bad,
           "all six worked values within 0.01" if not bad else f"off: {bad}")


def test_criterion_3_gradient_correctness():
    start = time.monotonic()
    channel, vocab = indexed_channel_from_parents(
        "gradcheck", [0 if i == 0 else i - 1 for i in range(12)],
        bodies=[f"alpha{i % 3} beta{i % 5} gamma{i % 2} delta" for i in range(12)])
    encoder = EncoderConfig(vocab_size=len(vocab), width=8, layers=1, heads=2,
                            ff_width=16, max_seq_len=24, dropout=0.1)
    torch.manual_seed(11)
    model = ContextRanker(RankerConfig(encoder=encoder, hidden_size=2)).double()
    window = WindowConfig(context_range=4, max_seq_len=24)
    examples = [make_example(channel, i, window, False) for i in (5, 8, 11)]
    error = grad_check(model, examples, TrainConfig(alpha=0.1), eps=1e-5,
                       sample_fraction=0.01, seed=1)
    elapsed = time.monotonic() - start
    report("criterion 3 (gradient correctness, toy model d=8 k=2 T=4 L=1)",
           error <= 1e-4 and elapsed < 60.0,
           f"max relative error {error:.2e} vs central differences, {elapsed:.1f}s")


def test_criterion_4_architecture_shape_invariants():
    aggregator = ContextAggregator(in_width=16, hidden=384)
    width_ok = aggregator.out_width == 768
    classifier = MatchClassifier(agg_width=768, dropout=0.0)
    hidden_ok = classifier.hidden.in_features == 3072 and classifier.hidden.out_features == 3072

    torch.manual_seed(4)
    worst = 1.0
    small = MatchClassifier(agg_width=8, dropout=0.0)
    with torch.no_grad():
        for _ in range(1000):
            slots = int(torch.randint(2, 60, ()))
            f = torch.randn(slots, 8)
            valid = torch.rand(slots) < 0.7
            valid[0] = True
            p = heuristic_score(small, f, valid)
            worst = min(worst, float(p.sum()))
            worst = 1.0 - abs(1.0 - worst)
    sums_ok = abs(1.0 - worst) <= 1e-9
    report("criterion 4 (architecture shape invariants)",
           width_ok and hidden_ok and sums_ok,
           f"k=384 -> H={aggregator.out_width}; classifier G width {classifier.hidden.in_features}; "
           f"1000 random score batches, worst |sum-1| = {abs(1.0 - worst):.2e}")


def test_criterion_5_loss_formula():
    got = ranking_loss([0.2, 0.5, 0.3], 1, [0, 1, 1], alpha=0.1)
    worked_ok = abs(got.total - 0.7564) <= 1e-3
    zero_alpha = ranking_loss([0.2, 0.5, 0.3], 1, [0, 1, 1], alpha=0.0)
    alpha_ok = zero_alpha.total == zero_alpha.cross_entropy
    report("criterion 5 (loss formula)", worked_ok and alpha_ok,
           f"worked total {got.total:.4f} (want 0.7564 +/- 1e-3); "
           f"alpha=0 total equals ce exactly: {alpha_ok}")


def test_criterion_6_clustering_equivalence():
    rng = random.Random(99)
    mismatches = 0
    count_violations = 0
    for _ in range(1000):
        n = rng.randint(1, 200)
        graph = ReplyGraph(tuple(rng.randint(0, i) for i in range(n)))
        got = build_clusters(graph)
        if got != Clustering.from_assignment(bfs_components(graph.parents)):
            mismatches += 1
        if got.n_clusters != graph.n_self_links:
            count_violations += 1
    report("criterion 6 (clustering equivalence)",
           mismatches == 0 and count_violations == 0,
           f"1000 random reply graphs (n <= 200): {mismatches} BFS mismatches, "
           f"{count_violations} cluster-count violations")


def test_criterion_10_real_corpus_stats():
    data_dir = os.environ.get("DETANGLE_IRC_DATA")
    if not data_dir or not Path(data_dir).is_dir():
        print("\n[SKIP] criterion 10 (real corpus stats): dataset unavailable "
              "(set DETANGLE_IRC_DATA to the annotated train/dev/test directory)")
        pytest.skip("real IRC dataset unavailable")
    expected = {"train": (67463, 17619), "dev": (2500, 749), "test": (5000, 962)}
    results = {}
    for split, (messages, conversations) in expected.items():
        channels = load_channel_dir(Path(data_dir) / split)
        stats = corpus_stats(channels)
        results[split] = (stats.messages, stats.conversations)
    ok = results == expected
    report("criterion 10 (real corpus stats)", ok, f"{results} vs expected {expected}")
