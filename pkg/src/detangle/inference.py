"""Greedy parent prediction over channels."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
from torch import nn

from .clustering import Clustering, ReplyGraph, build_clusters
from .corpus import Channel, PairBatch
from .data import TargetExample, WindowConfig, channel_examples, collate, make_example
from .model import masked_probs


def score_examples(model: nn.Module, examples: Sequence[TargetExample],
                   batch_size: int = 32) -> list[np.ndarray]:
    """Full-slot-layout probability vectors for each target, in eval mode."""
    dtype = next(model.parameters()).dtype
    was_training = model.training
    model.eval()
    out: list[np.ndarray] = []
    try:
        with torch.no_grad():
            for start in range(0, len(examples), batch_size):
                batch = collate(examples[start:start + batch_size], dtype=dtype)
                probs = masked_probs(model(batch))
                out.extend(batch.full_probs(probs))
    finally:
        model.train(was_training)
    return out


def pick_slot(probs: np.ndarray, pair: PairBatch) -> int:
    """Argmax slot with ties broken toward the most recent candidate.

    The self slot is the fallback: when real candidates tie at the maximum,
    the one closest to the target (largest channel index) wins; slot 0 wins
    only when it is the unique maximum or the only valid slot.
    """
    valid = np.asarray(pair.valid_mask)
    best = probs[valid].max()
    tied = [s for s in range(pair.n_slots) if valid[s] and probs[s] == best]
    return max(tied, key=lambda s: (s != 0, pair.candidate_indices[s]))


def resolve_parents(slot_choices: Sequence[int], pairs: Sequence[PairBatch]) -> ReplyGraph:
    """Turn per-target slot choices into a reply graph.

    A future candidate winning the argmax makes that future message the
    target's child: the target keeps a self link and the future message is
    claimed, its own prediction being superseded so every message keeps
    exactly one parent with parent <= self.
    """
    claimed: dict[int, int] = {}
    parents: list[int] = []
    for t, (slot, pair) in enumerate(zip(slot_choices, pairs)):
        if t in claimed:
            parents.append(claimed[t])
            continue
        choice = pair.candidate_indices[slot]
        if choice > t:
            claimed.setdefault(choice, t)
            parents.append(t)
        else:
            parents.append(choice)
    return ReplyGraph(tuple(parents))


def predict_parent(model: nn.Module, channel: Channel, target_index: int,
                   window: WindowConfig) -> int:
    """Predicted parent index for one target; the target's own index means a new conversation."""
    example = make_example(channel, target_index, window, model.uses_features)
    probs = score_examples(model, [example])[0]
    slot = pick_slot(probs, example.pair)
    return example.pair.candidate_indices[slot]


def predict_channel(model: nn.Module, channel: Channel, window: WindowConfig,
                    batch_size: int = 32) -> tuple[ReplyGraph, Clustering]:
    """Predict every parent in order and cluster the resulting graph."""
    examples = channel_examples(channel, window, model.uses_features)
    probs = score_examples(model, examples, batch_size=batch_size)
    slots = [pick_slot(p, ex.pair) for p, ex in zip(probs, examples)]
    graph = resolve_parents(slots, [ex.pair for ex in examples])
    return graph, build_clusters(graph)


def predict_channels(model: nn.Module, channels: Sequence[Channel],
                     window: WindowConfig, batch_size: int = 32) -> dict[str, ReplyGraph]:
    return {c.name: predict_channel(model, c, window, batch_size)[0] for c in channels}


def parent_accuracy(model: nn.Module, channels: Sequence[Channel], window: WindowConfig,
                    batch_size: int = 32) -> float:
    """Fraction of targets whose exact gold parent is selected.

    Targets whose gold parent falls outside the window count as automatic
    errors: the window cannot contain the right answer.
    """
    correct = 0
    total = 0
    for channel in channels:
        examples = channel_examples(channel, window, model.uses_features)
        probs = score_examples(model, examples, batch_size=batch_size)
        for p, ex in zip(probs, examples):
            total += 1
            if not ex.pair.parent_in_window:
                continue
            slot = pick_slot(p, ex.pair)
            gold = channel.messages[ex.pair.target_index].gold_parent
            if ex.pair.candidate_indices[slot] == gold:
                correct += 1
    if total == 0:
        raise ValueError("no targets to score")
    return correct / total
