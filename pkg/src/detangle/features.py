"""Hand-engineered pair features for the linear and feedforward baselines.

The schema fixes 15 features in three families: pair-level distances and
overlap, per-message shape (length, system flag, addressing), and recency.
Distances are log-scaled as log(1+x); booleans are encoded 0/1.  The exact
list is deliberately small and documented so baseline runs stay auditable
(``detangle stats --dump-feature-schema``).
"""

from __future__ import annotations

import math

import numpy as np

from .corpus import Channel, Message, PairBatch

FEATURE_SCHEMA: tuple[tuple[str, str], ...] = (
    ("position_gap_log1p", "log(1 + |target position - candidate position|)"),
    ("time_gap_log1p", "log(1 + minutes between the messages); 0 when either time is absent"),
    ("same_speaker", "both messages share a speaker"),
    ("target_targets_candidate", "target addresses the candidate's speaker"),
    ("candidate_targets_target", "candidate addresses the target's speaker"),
    ("either_system", "either message is a server notice"),
    ("target_system", "target is a server notice"),
    ("candidate_system", "candidate is a server notice"),
    ("token_jaccard", "token-set overlap |A&B| / |A|B| union; 0 when both are empty"),
    ("candidate_len_log1p", "log(1 + candidate token count)"),
    ("target_len_log1p", "log(1 + target token count)"),
    ("target_has_nick", "target addresses some nick"),
    ("candidate_has_nick", "candidate addresses some nick"),
    ("self_pair", "candidate is the target itself"),
    ("recent_8", "candidate within 8 messages of the target"),
)

N_FEATURES = len(FEATURE_SCHEMA)

RECENT_WINDOW = 8


def format_schema() -> str:
    lines = ["# Pair feature schema, one feature per line: index, name, description"]
    for i, (name, desc) in enumerate(FEATURE_SCHEMA):
        lines.append(f"{i}\t{name}\t{desc}")
    return "\n".join(lines) + "\n"


def _jaccard(a: Message, b: Message) -> float:
    sa, sb = set(a.words), set(b.words)
    union = sa | sb
    if not union:
        return 0.0
    return len(sa & sb) / len(union)


def _targets(source: Message, other: Message) -> bool:
    return source.target_nick is not None and source.target_nick.lower() == other.speaker.lower()


def extract_pair_features(channel: Channel, target_index: int, candidate_index: int) -> np.ndarray:
    """15-feature vector for one (target, candidate) pair; always finite."""
    messages = channel.messages
    if not 0 <= target_index < len(messages):
        raise ValueError(f"target index {target_index} outside channel {channel.name}")
    if not 0 <= candidate_index < len(messages):
        raise ValueError(f"candidate index {candidate_index} outside channel {channel.name}")
    target, cand = messages[target_index], messages[candidate_index]

    gap = abs(target_index - candidate_index)
    if target.time is not None and cand.time is not None:
        time_gap = abs(target.time - cand.time)
    else:
        time_gap = 0
    return np.array([
        math.log1p(gap),
        math.log1p(time_gap),
        float(target.speaker == cand.speaker),
        float(_targets(target, cand)),
        float(_targets(cand, target)),
        float(target.is_system or cand.is_system),
        float(target.is_system),
        float(cand.is_system),
        _jaccard(target, cand),
        math.log1p(len(cand.words)),
        math.log1p(len(target.words)),
        float(target.target_nick is not None),
        float(cand.target_nick is not None),
        float(candidate_index == target_index),
        float(gap <= RECENT_WINDOW),
    ], dtype=np.float64)


def featurize_batch(channel: Channel, batch: PairBatch) -> np.ndarray:
    """Per-slot feature matrix (n_slots, 15); padded slots get zero rows."""
    out = np.zeros((batch.n_slots, N_FEATURES), dtype=np.float64)
    for slot, cand in enumerate(batch.candidate_indices):
        if batch.valid_mask[slot]:
            out[slot] = extract_pair_features(channel, batch.target_index, cand)
    return out
