"""Clustering evaluation: scaled VI, ARI, one-to-one overlap, exact-match P/R/F1.

All scores are reported on a 0-100 scale (ARI can reach -100).  Scaled VI is
100 * (1 - VI / log2 n) with VI in bits, so identical partitions score 100 and
the worst case 0.  Exact-match precision/recall compare whole conversations
after dropping single-message clusters from both sides.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import Clustering, ReplyGraph, build_clusters
from .corpus import Channel

Assignment = Sequence[int]


def _assignment(partition: Clustering | Assignment) -> tuple[int, ...]:
    if isinstance(partition, Clustering):
        return partition.assignment
    return tuple(partition)


def _check_universe(pred: tuple[int, ...], gold: tuple[int, ...]) -> int:
    if len(pred) != len(gold):
        raise ValueError(f"partitions cover different universes: {len(pred)} vs {len(gold)} messages")
    return len(pred)


def _contingency(pred: tuple[int, ...], gold: tuple[int, ...]) -> Counter[tuple[int, int]]:
    return Counter(zip(pred, gold))


def scaled_vi(pred: Clustering | Assignment, gold: Clustering | Assignment) -> float:
    """100 * (1 - VI/log2 n) where VI = H(pred) + H(gold) - 2 I(pred, gold) in bits."""
    p, g = _assignment(pred), _assignment(gold)
    n = _check_universe(p, g)
    if n < 2:
        raise ValueError("scaled VI needs at least 2 messages")
    h_p = _entropy(Counter(p).values(), n)
    h_g = _entropy(Counter(g).values(), n)
    mi = 0.0
    sizes_p, sizes_g = Counter(p), Counter(g)
    for (cp, cg), joint in _contingency(p, g).items():
        r = joint / n
        mi += r * math.log2(r * n * n / (sizes_p[cp] * sizes_g[cg]))
    vi = h_p + h_g - 2.0 * mi
    score = 100.0 * (1.0 - vi / math.log2(n))
    return min(100.0, max(0.0, score))


def _entropy(sizes, n: int) -> float:
    return -sum((s / n) * math.log2(s / n) for s in sizes)


def ari(pred: Clustering | Assignment, gold: Clustering | Assignment) -> float:
    """Pair-counting adjusted Rand index, scaled by 100."""
    p, g = _assignment(pred), _assignment(gold)
    n = _check_universe(p, g)
    sum_joint = sum(c * (c - 1) // 2 for c in _contingency(p, g).values())
    sum_p = sum(c * (c - 1) // 2 for c in Counter(p).values())
    sum_g = sum(c * (c - 1) // 2 for c in Counter(g).values())
    pairs = n * (n - 1) // 2
    if pairs == 0:
        return 100.0
    expected = sum_p * sum_g / pairs
    maximum = (sum_p + sum_g) / 2.0
    if maximum == expected:
        # Both partitions trivial (all singletons or one cluster on each side).
        return 100.0
    return 100.0 * (sum_joint - expected) / (maximum - expected)


def one_to_one(pred: Clustering | Assignment, gold: Clustering | Assignment) -> float:
    """Best one-to-one cluster alignment mass as a percentage of messages."""
    p, g = _assignment(pred), _assignment(gold)
    n = _check_universe(p, g)
    if n == 0:
        raise ValueError("empty partitions")
    n_p, n_g = max(p) + 1, max(g) + 1
    overlap = np.zeros((n_p, n_g), dtype=np.int64)
    for cp, cg in zip(p, g):
        overlap[cp, cg] += 1
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    return 100.0 * overlap[rows, cols].sum() / n


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float
    degenerate: bool


def _match_counts(pred: Clustering | Assignment, gold: Clustering | Assignment) -> tuple[int, int, int]:
    """(perfect matches, predicted multi-clusters, gold multi-clusters)."""
    p, g = _assignment(pred), _assignment(gold)
    _check_universe(p, g)
    pred_multi = {fs for fs in Clustering.from_assignment(p).members if len(fs) > 1}
    gold_multi = {fs for fs in Clustering.from_assignment(g).members if len(fs) > 1}
    return len(pred_multi & gold_multi), len(pred_multi), len(gold_multi)


def _prf_from_counts(correct: int, n_pred: int, n_gold: int) -> PRF:
    degenerate = n_pred == 0 or n_gold == 0
    precision = 100.0 * correct / n_pred if n_pred else 0.0
    recall = 100.0 * correct / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f1, degenerate)


def exact_match_prf(pred: Clustering | Assignment, gold: Clustering | Assignment) -> PRF:
    """Precision/recall/F1 over perfectly matching multi-message conversations."""
    return _prf_from_counts(*_match_counts(pred, gold))


@dataclass(frozen=True)
class MetricsReport:
    scaled_vi: float
    ari: float
    one_to_one: float
    precision: float
    recall: float
    f1: float
    n_messages: int
    prf_degenerate: bool = False

    def as_table(self) -> str:
        header = f"{'VI':>8} {'ARI':>8} {'1-1':>8} {'F1':>8} {'P':>8} {'R':>8}"
        row = (f"{self.scaled_vi:8.2f} {self.ari:8.2f} {self.one_to_one:8.2f} "
               f"{self.f1:8.2f} {self.precision:8.2f} {self.recall:8.2f}")
        return header + "\n" + row

    def as_keyvalues(self) -> str:
        return "\n".join([
            f"VI={self.scaled_vi:.2f}",
            f"ARI={self.ari:.2f}",
            f"1-1={self.one_to_one:.2f}",
            f"F1={self.f1:.2f}",
            f"P={self.precision:.2f}",
            f"R={self.recall:.2f}",
        ])


def evaluate(pred_graphs: Mapping[str, ReplyGraph], gold_channels: Sequence[Channel]) -> MetricsReport:
    """Micro-aggregated report over channels.

    VI/ARI/1-1 are message-weighted averages; P/R/F1 pool the perfect-match
    counts across channels before computing ratios.  Single-message channels
    contribute the identical-partition score of 100 to the averaged metrics.
    """
    if not gold_channels:
        raise ValueError("no channels to evaluate")
    weighted = {"vi": 0.0, "ari": 0.0, "one": 0.0}
    total = 0
    correct = n_pred = n_gold = 0
    for channel in gold_channels:
        if channel.name not in pred_graphs:
            raise ValueError(f"missing predictions for channel {channel.name}")
        pred = build_clusters(pred_graphs[channel.name])
        gold = channel.gold_clusters
        n = len(channel)
        weighted["vi"] += n * (scaled_vi(pred, gold) if n >= 2 else 100.0)
        weighted["ari"] += n * ari(pred, gold)
        weighted["one"] += n * one_to_one(pred, gold)
        total += n
        c, np_, ng = _match_counts(pred, gold)
        correct, n_pred, n_gold = correct + c, n_pred + np_, n_gold + ng
    prf = _prf_from_counts(correct, n_pred, n_gold)
    return MetricsReport(
        scaled_vi=weighted["vi"] / total,
        ari=weighted["ari"] / total,
        one_to_one=weighted["one"] / total,
        precision=prf.precision,
        recall=prf.recall,
        f1=prf.f1,
        n_messages=total,
        prf_degenerate=prf.degenerate,
    )
