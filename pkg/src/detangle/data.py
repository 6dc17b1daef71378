"""Window-to-tensor plumbing shared by training and inference.

Padded slots never reach the model: each target's valid slots are compacted
into a contiguous sequence (slot order preserved) before encoding and
aggregation, and probabilities are scattered back to the full slot layout
afterwards.  Scores and gradients are therefore independent of how much
padding a window carries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import Tensor

from . import features as feats
from .corpus import Channel, PairBatch, build_context_window


@dataclass(frozen=True)
class WindowConfig:
    context_range: int = 50
    k_future: int = 0
    max_seq_len: int = 100

    def __post_init__(self) -> None:
        if self.context_range < 1:
            raise ValueError("context_range must be >= 1")
        if self.k_future < 0:
            raise ValueError("k_future must be >= 0")


@dataclass(frozen=True)
class TargetExample:
    """One target's window, pre-converted to arrays for fast collation."""

    pair: PairBatch
    token_rows: tuple[np.ndarray, ...]
    features: np.ndarray | None

    @property
    def n_valid(self) -> int:
        return len(self.token_rows)


def make_example(channel: Channel, target_index: int, window: WindowConfig,
                 with_features: bool) -> TargetExample:
    pair = build_context_window(channel, target_index, window.context_range,
                                window.k_future, window.max_seq_len)
    rows = tuple(np.asarray(tokens, dtype=np.int64)
                 for tokens, ok in zip(pair.pair_tokens, pair.valid_mask) if ok)
    feature_rows = feats.featurize_batch(channel, pair) if with_features else None
    return TargetExample(pair, rows, feature_rows)


def channel_examples(channel: Channel, window: WindowConfig,
                     with_features: bool) -> list[TargetExample]:
    return [make_example(channel, i, window, with_features) for i in range(len(channel))]


@dataclass
class CollatedBatch:
    """Tensors for a mini-batch of targets, in compacted slot space."""

    pair_tokens: Tensor          # (n_pairs, seq) token ids for all valid pairs
    pad_mask: Tensor             # (n_pairs, seq) True at real tokens
    gather_index: Tensor         # (batch, slots) flat pair row per compacted slot
    slot_valid: Tensor           # (batch, slots) True at real compacted slots
    lengths: Tensor              # (batch,) valid slots per target
    features: Tensor | None      # (batch, slots, n_features)
    conv_labels: Tensor          # (batch, slots) same-conversation labels, 0/1
    parent_pos: Tensor           # (batch,) compacted position of the parent slot
    parent_in_window: Tensor     # (batch,) bool
    slot_positions: list[list[int]]   # original slot index per compacted position
    n_slots_total: int           # full window size, the conversation-loss denominator
    batch_ids: list[str]

    def __len__(self) -> int:
        return len(self.batch_ids)

    def full_probs(self, compact_probs: Tensor) -> np.ndarray:
        """Scatter compacted probabilities back to the full slot layout."""
        out = np.zeros((len(self), self.n_slots_total), dtype=np.float64)
        p = compact_probs.detach().cpu().numpy()
        for b, slots in enumerate(self.slot_positions):
            out[b, slots] = p[b, :len(slots)]
        return out


def collate(examples: Sequence[TargetExample], dtype: torch.dtype = torch.float32) -> CollatedBatch:
    if not examples:
        raise ValueError("empty batch")
    n_slots_total = examples[0].pair.n_slots
    with_features = examples[0].features is not None
    for ex in examples:
        if ex.pair.n_slots != n_slots_total:
            raise ValueError("all targets in a batch must share the window layout")
        if (ex.features is not None) != with_features:
            raise ValueError("mixed featurized and unfeaturized examples")

    n_pairs = sum(ex.n_valid for ex in examples)
    seq = max(len(row) for ex in examples for row in ex.token_rows)
    tokens = np.zeros((n_pairs, seq), dtype=np.int64)
    pad_mask = np.zeros((n_pairs, seq), dtype=bool)

    batch = len(examples)
    max_valid = max(ex.n_valid for ex in examples)
    gather = np.zeros((batch, max_valid), dtype=np.int64)
    slot_valid = np.zeros((batch, max_valid), dtype=bool)
    conv = np.zeros((batch, max_valid), dtype=np.float64)
    feature_rows = np.zeros((batch, max_valid, feats.N_FEATURES), dtype=np.float64) if with_features else None
    lengths = np.zeros(batch, dtype=np.int64)
    parent_pos = np.zeros(batch, dtype=np.int64)
    in_window = np.zeros(batch, dtype=bool)
    slot_positions: list[list[int]] = []

    row = 0
    for b, ex in enumerate(examples):
        slots = [s for s in range(ex.pair.n_slots) if ex.pair.valid_mask[s]]
        slot_positions.append(slots)
        lengths[b] = len(slots)
        in_window[b] = ex.pair.parent_in_window
        parent_pos[b] = slots.index(ex.pair.parent_slot)
        for pos, (slot, token_row) in enumerate(zip(slots, ex.token_rows)):
            tokens[row, :len(token_row)] = token_row
            pad_mask[row, :len(token_row)] = True
            gather[b, pos] = row
            slot_valid[b, pos] = True
            conv[b, pos] = float(ex.pair.conv_labels[slot])
            if feature_rows is not None:
                feature_rows[b, pos] = ex.features[slot]
            row += 1

    return CollatedBatch(
        pair_tokens=torch.from_numpy(tokens),
        pad_mask=torch.from_numpy(pad_mask),
        gather_index=torch.from_numpy(gather),
        slot_valid=torch.from_numpy(slot_valid),
        lengths=torch.from_numpy(lengths),
        features=None if feature_rows is None else torch.from_numpy(feature_rows).to(dtype),
        conv_labels=torch.from_numpy(conv).to(dtype),
        parent_pos=torch.from_numpy(parent_pos),
        parent_in_window=torch.from_numpy(in_window),
        slot_positions=slot_positions,
        n_slots_total=n_slots_total,
        batch_ids=[ex.pair.batch_id for ex in examples],
    )
