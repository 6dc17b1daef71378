import numpy as np
import pytest
import torch
from torch import nn

from detangle.baselines import LinearRanker
from detangle.clustering import ReplyGraph
from detangle.corpus import build_context_window
from detangle.data import WindowConfig, make_example
from detangle.inference import (parent_accuracy, pick_slot, predict_channel, predict_parent,
                                predict_channels, resolve_parents)
from helpers import indexed_channel_from_parents


class GoldScorer(nn.Module):
    """Puts all probability mass on the gold parent slot; for plumbing tests."""

    uses_tokens = False
    uses_features = False

    def __init__(self):
        super().__init__()
        self.scale = nn.Parameter(torch.ones(()))

    def forward(self, batch):
        logits = torch.full((len(batch), batch.gather_index.shape[1]), -30.0)
        logits[torch.arange(len(batch)), batch.parent_pos] = 30.0
        logits = logits * self.scale
        return logits.masked_fill(~batch.slot_valid, float("-inf"))


def chain_channel(length=12):
    return indexed_channel_from_parents(
        "chain", [0 if i == 0 else i - 1 for i in range(length)],
        bodies=[f"alpha{i % 3} beta{i % 2} gamma{i % 5}" for i in range(length)])


class TestPickSlot:
    def test_uniform_scores_pick_most_recent_real_candidate(self):
        channel, _ = chain_channel()
        batch = build_context_window(channel, 5, context_range=4)
        probs = np.where(batch.valid_mask, 0.25, 0.0)
        assert pick_slot(probs, batch) == 1
        assert batch.candidate_indices[1] == 4

    def test_self_slot_wins_only_as_unique_maximum(self):
        channel, _ = chain_channel()
        batch = build_context_window(channel, 5, context_range=4)
        probs = np.array([0.7, 0.1, 0.1, 0.1])
        assert pick_slot(probs, batch) == 0

    def test_position_zero_forces_self_link(self):
        channel, _ = chain_channel()
        batch = build_context_window(channel, 0, context_range=4)
        probs = np.array([1.0, 0.0, 0.0, 0.0])
        assert pick_slot(probs, batch) == 0

    def test_padded_slots_never_win(self):
        channel, _ = chain_channel()
        batch = build_context_window(channel, 1, context_range=4)
        probs = np.array([0.2, 0.2, 0.9, 0.9])  # slots 2..3 are padding
        assert pick_slot(probs, batch) in (0, 1)


class TestUntrainedTieBreaks:
    def test_zero_weight_linear_model_picks_most_recent(self):
        channel, _ = chain_channel()
        window = WindowConfig(context_range=6, max_seq_len=24)
        model = LinearRanker()
        assert predict_parent(model, channel, 5, window) == 4
        assert predict_parent(model, channel, 0, window) == 0


class TestPredictChannel:
    def test_gold_scores_reproduce_gold_clusters(self):
        channel, _ = indexed_channel_from_parents(
            "c", [0, 0, 1, 3, 2, 3], bodies=[f"w{i}" for i in range(6)])
        window = WindowConfig(context_range=8, max_seq_len=24)
        graph, clusters = predict_channel(GoldScorer(), channel, window)
        assert graph == channel.gold_graph
        assert clusters == channel.gold_clusters

    def test_deterministic_across_runs(self, toy_ranker):
        channel, _ = chain_channel()
        window = WindowConfig(context_range=5, max_seq_len=24)
        first = predict_channel(toy_ranker, channel, window)
        second = predict_channel(toy_ranker, channel, window)
        assert first == second

    def test_cluster_count_equals_self_links(self, toy_ranker):
        channel, _ = chain_channel(20)
        window = WindowConfig(context_range=5, max_seq_len=24)
        graph, clusters = predict_channel(toy_ranker, channel, window)
        assert clusters.n_clusters == graph.n_self_links

    def test_processing_order_does_not_matter(self, toy_ranker):
        a, _ = chain_channel()
        b, _ = indexed_channel_from_parents(
            "other", [0, 1, 0, 2], bodies=["x y", "z", "x q", "q z"])
        window = WindowConfig(context_range=5, max_seq_len=24)
        forward_order = predict_channels(toy_ranker, [a, b], window)
        reverse_order = predict_channels(toy_ranker, [b, a], window)
        assert forward_order.keys() == reverse_order.keys()
        for name in forward_order:
            assert forward_order[name] == reverse_order[name]


class TestResolveParents:
    def _pairs(self, channel, window):
        return [make_example(channel, i, window, False).pair for i in range(len(channel))]

    def test_past_choices_pass_through(self):
        channel, _ = chain_channel(4)
        pairs = self._pairs(channel, WindowConfig(context_range=4, max_seq_len=24))
        # Slot 1 is the immediately preceding message; slot 0 the self link.
        graph = resolve_parents([0, 1, 1, 1], pairs)
        assert graph.parents == (0, 0, 1, 2)

    def test_future_winner_becomes_child(self):
        channel, _ = chain_channel(4)
        window = WindowConfig(context_range=3, k_future=2, max_seq_len=24)
        pairs = self._pairs(channel, window)
        # Target 1 picks its first future slot (message 2).
        future_slot = 3
        assert pairs[1].candidate_indices[future_slot] == 2
        graph = resolve_parents([0, future_slot, 0, 1], pairs)
        assert graph.parents == (0, 1, 1, 2)
        assert graph.parents[2] == 1  # claimed: message 2's own self-link is superseded

    def test_claims_respect_parent_before_self_invariant(self):
        channel, _ = chain_channel(6)
        window = WindowConfig(context_range=3, k_future=3, max_seq_len=24)
        pairs = self._pairs(channel, window)
        slots = [0] * 6
        slots[2] = 3  # first future slot of target 2 -> message 3
        assert pairs[2].candidate_indices[3] == 3
        graph = resolve_parents(slots, pairs)
        assert all(p <= i for i, p in enumerate(graph.parents))
        assert graph.parents == (0, 1, 2, 2, 4, 5)


class TestParentAccuracy:
    def test_gold_scorer_is_perfect_when_windows_cover_parents(self):
        channel, _ = chain_channel()
        window = WindowConfig(context_range=13, max_seq_len=24)
        assert parent_accuracy(GoldScorer(), [channel], window) == 1.0

    def test_out_of_window_parents_count_as_errors(self):
        channel, _ = indexed_channel_from_parents(
            "far", [0, 0, 0, 0, 0, 0], bodies=[f"w{i}" for i in range(6)])
        window = WindowConfig(context_range=3, max_seq_len=24)
        # Targets 3..5 cannot see message 0; even a gold oracle scores 3/6.
        assert parent_accuracy(GoldScorer(), [channel], window) == pytest.approx(0.5)
