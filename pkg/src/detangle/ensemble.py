"""Combining several trained rankers: weight averaging, probability averaging, voting."""

from __future__ import annotations

from collections import Counter
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .clustering import Clustering, ReplyGraph, build_clusters
from .corpus import Channel, PairBatch
from .data import WindowConfig, channel_examples
from .inference import pick_slot, resolve_parents, score_examples


def model_avg(state_dicts: Sequence[Mapping[str, Tensor]]) -> dict[str, Tensor]:
    """Element-wise mean of every tensor across identically-shaped models."""
    if not state_dicts:
        raise ValueError("no models to average")
    keys = list(state_dicts[0].keys())
    for sd in state_dicts[1:]:
        if list(sd.keys()) != keys:
            raise ValueError("models have different tensor sets")
    averaged: dict[str, Tensor] = {}
    for key in keys:
        tensors = [sd[key] for sd in state_dicts]
        shapes = {tuple(t.shape) for t in tensors}
        if len(shapes) != 1:
            raise ValueError(f"shape mismatch for tensor {key}: {sorted(shapes)}")
        averaged[key] = torch.stack([t.detach() for t in tensors]).mean(dim=0)
    return averaged


def prob_avg(scores_list: Sequence[np.ndarray]) -> np.ndarray:
    """Element-wise mean of probability vectors; stays a distribution."""
    if not scores_list:
        raise ValueError("no score vectors to average")
    first = np.asarray(scores_list[0], dtype=np.float64)
    stacked = []
    for scores in scores_list:
        arr = np.asarray(scores, dtype=np.float64)
        if arr.shape != first.shape:
            raise ValueError(f"score length mismatch: {arr.shape} vs {first.shape}")
        stacked.append(arr)
    return np.mean(stacked, axis=0)


def vote(argmax_list: Sequence[int], scores_list: Sequence[np.ndarray],
         pair: PairBatch | None = None) -> int:
    """Slot with the most votes.

    Ties go to the highest mean probability among the tied slots, then to the
    most recent candidate (via ``pair``; without it, the lowest non-self slot
    wins and the self slot loses ties, which matches the past-only layout).
    """
    if not argmax_list:
        raise ValueError("no voters")
    if len(argmax_list) != len(scores_list):
        raise ValueError("one score vector per voter required")
    counts = Counter(argmax_list)
    top = max(counts.values())
    tied = [slot for slot, c in counts.items() if c == top]
    if len(tied) == 1:
        return tied[0]
    means = prob_avg(scores_list)
    best = max(means[s] for s in tied)
    tied = [s for s in tied if means[s] == best]
    if pair is not None:
        return max(tied, key=lambda s: (s != 0, pair.candidate_indices[s]))
    return max(tied, key=lambda s: (s != 0, -s))


def predict_channel_ensemble(models: Sequence[nn.Module], channel: Channel,
                             window: WindowConfig, strategy: str,
                             batch_size: int = 32) -> tuple[ReplyGraph, Clustering]:
    """Channel prediction under the prob-avg or vote strategy.

    Weight averaging is not handled here: an averaged model is an ordinary
    single model (see ``model_avg``).
    """
    if strategy not in ("prob-avg", "vote"):
        raise ValueError(f"unknown ensemble strategy: {strategy!r}")
    if not models:
        raise ValueError("no models")
    with_features = any(m.uses_features for m in models)
    examples = channel_examples(channel, window, with_features)
    per_model = [score_examples(m, examples, batch_size=batch_size) for m in models]
    slots: list[int] = []
    for t, example in enumerate(examples):
        scores = [probs[t] for probs in per_model]
        if strategy == "prob-avg":
            slots.append(pick_slot(prob_avg(scores), example.pair))
        else:
            argmaxes = [pick_slot(s, example.pair) for s in scores]
            slots.append(vote(argmaxes, scores, example.pair))
    graph = resolve_parents(slots, [ex.pair for ex in examples])
    return graph, build_clusters(graph)
