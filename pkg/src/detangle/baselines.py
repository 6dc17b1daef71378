"""Feature-based ranking baselines: a linear scorer and a small feedforward net."""

from __future__ import annotations

from typing import Sequence

import torch
from torch import Tensor, nn

from .features import N_FEATURES
from .model import masked_probs


class LinearRanker(nn.Module):
    """One weight per feature; logit per slot is the dot product."""

    uses_tokens = False
    uses_features = True

    def __init__(self, n_features: int = N_FEATURES):
        super().__init__()
        self.weight = nn.Parameter(torch.zeros(n_features))

    def slot_logits(self, features: Tensor, valid: Tensor) -> Tensor:
        if features.shape[-1] != self.weight.shape[0]:
            raise ValueError(f"feature schema mismatch: got {features.shape[-1]} features, "
                             f"expected {self.weight.shape[0]}")
        logits = features @ self.weight
        return logits.masked_fill(~valid, float("-inf"))

    def forward(self, batch: "CollatedBatch") -> Tensor:  # noqa: F821
        if batch.features is None:
            raise ValueError("batch was collated without features")
        return self.slot_logits(batch.features, batch.slot_valid)


class FeedforwardRanker(nn.Module):
    """Two-layer per-slot scorer with a tanh hidden layer."""

    uses_tokens = False
    uses_features = True

    def __init__(self, n_features: int = N_FEATURES, hidden_width: int = 64):
        super().__init__()
        self.hidden = nn.Linear(n_features, hidden_width)
        self.project = nn.Linear(hidden_width, 1, bias=False)

    def slot_logits(self, features: Tensor, valid: Tensor) -> Tensor:
        if features.shape[-1] != self.hidden.in_features:
            raise ValueError(f"feature schema mismatch: got {features.shape[-1]} features, "
                             f"expected {self.hidden.in_features}")
        logits = self.project(torch.tanh(self.hidden(features))).squeeze(-1)
        return logits.masked_fill(~valid, float("-inf"))

    def forward(self, batch: "CollatedBatch") -> Tensor:  # noqa: F821
        if batch.features is None:
            raise ValueError("batch was collated without features")
        return self.slot_logits(batch.features, batch.slot_valid)


def _as_tensor(values, dtype: torch.dtype) -> Tensor:
    if isinstance(values, Tensor):
        return values.to(dtype)
    return torch.as_tensor(values, dtype=dtype)


def linear_rank(weights, feature_vectors, valid_mask) -> Tensor:
    """Masked softmax over per-slot dot products; pure function of the weights."""
    w = _as_tensor(weights, torch.float64)
    phi = _as_tensor(feature_vectors, torch.float64)
    valid = torch.as_tensor(list(valid_mask), dtype=torch.bool)
    if phi.shape[-1] != w.shape[0]:
        raise ValueError(f"feature schema mismatch: got {phi.shape[-1]} features, "
                         f"expected {w.shape[0]}")
    logits = (phi @ w).masked_fill(~valid, float("-inf"))
    return masked_probs(logits)


def feedforward_rank(ranker: FeedforwardRanker, feature_vectors, valid_mask) -> Tensor:
    phi = _as_tensor(feature_vectors, next(ranker.parameters()).dtype)
    valid = torch.as_tensor(list(valid_mask), dtype=torch.bool)
    return masked_probs(ranker.slot_logits(phi, valid))
