"""The neural reply-to ranker.

Three stages: a small transformer encodes each (target, candidate) token pair
into one vector at the cls position; a single-layer bidirectional LSTM runs
over the candidate-slot sequence so every pair sees its neighbours; a
matching head compares each slot against slot 0 (the target paired with
itself, the pivot) through [pivot, slot, pivot*slot, pivot-slot] and a tanh
hidden layer, producing a softmax over candidate slots.  With
``use_context=False`` the aggregator is skipped and every pair is scored
independently from its encoder vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import torch
from torch import Tensor, nn

from .corpus import CLS, PAD, SEP

EMBED_INIT_STD = 0.02


@dataclass(frozen=True)
class EncoderConfig:
    """Shape of the pair encoder; paper-scale dimensions remain expressible."""

    vocab_size: int
    width: int = 64
    layers: int = 2
    heads: int = 4
    ff_width: int = 128
    max_seq_len: int = 100
    dropout: float = 0.1

    def __post_init__(self) -> None:
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass(frozen=True)
class RankerConfig:
    encoder: EncoderConfig
    hidden_size: int = 32           # k: per-direction width of the aggregator
    use_context: bool = True        # False drops the aggregator (pairs scored independently)
    feature_size: int = 0           # >0 appends hand features to the classifier input

    @property
    def agg_width(self) -> int:
        """H: width of the per-slot vectors entering the classifier."""
        return 2 * self.hidden_size if self.use_context else self.encoder.width


class SelfAttention(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        d = config.width
        self.heads = config.heads
        self.head_width = d // config.heads
        self.query = nn.Linear(d, d)
        self.key = nn.Linear(d, d)
        self.value = nn.Linear(d, d)
        self.out = nn.Linear(d, d)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x: Tensor, pad_mask: Tensor) -> Tensor:
        b, s, d = x.shape
        shape = (b, s, self.heads, self.head_width)
        q = self.query(x).view(shape).transpose(1, 2)
        k = self.key(x).view(shape).transpose(1, 2)
        v = self.value(x).view(shape).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_width)
        scores = scores.masked_fill(~pad_mask[:, None, None, :], float("-inf"))
        attn = self.dropout(torch.softmax(scores, dim=-1))
        ctx = (attn @ v).transpose(1, 2).reshape(b, s, d)
        return self.out(ctx)


class EncoderBlock(nn.Module):
    """Post-norm transformer block: self-attention then position-wise feedforward."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.attention = SelfAttention(config)
        self.norm1 = nn.LayerNorm(config.width)
        self.ffn = nn.Sequential(
            nn.Linear(config.width, config.ff_width),
            nn.GELU(),
            nn.Linear(config.ff_width, config.width),
        )
        self.norm2 = nn.LayerNorm(config.width)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x: Tensor, pad_mask: Tensor) -> Tensor:
        x = self.norm1(x + self.dropout(self.attention(x, pad_mask)))
        x = self.norm2(x + self.dropout(self.ffn(x)))
        return x


class PairEncoder(nn.Module):
    """Token, position and segment embeddings followed by transformer blocks.

    Segment ids mark the two sides of a pair (0 through the first separator,
    1 after it) and are derived from the token sequence itself.
    """

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.width, padding_idx=PAD)
        self.position_embedding = nn.Embedding(config.max_seq_len, config.width)
        self.segment_embedding = nn.Embedding(2, config.width)
        self.norm = nn.LayerNorm(config.width)
        self.dropout = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(EncoderBlock(config) for _ in range(config.layers))
        nn.init.normal_(self.token_embedding.weight, std=EMBED_INIT_STD)
        nn.init.normal_(self.position_embedding.weight, std=EMBED_INIT_STD)
        nn.init.normal_(self.segment_embedding.weight, std=EMBED_INIT_STD)
        with torch.no_grad():
            self.token_embedding.weight[PAD].zero_()

    def forward_states(self, tokens: Tensor, pad_mask: Tensor) -> Tensor:
        """Hidden states for every position, (batch, seq, width)."""
        if tokens.numel() and int(tokens.max()) >= self.config.vocab_size:
            raise ValueError(f"token id {int(tokens.max())} outside vocabulary "
                             f"of size {self.config.vocab_size}")
        _, s = tokens.shape
        if s > self.config.max_seq_len:
            raise ValueError(f"sequence length {s} exceeds max_seq_len {self.config.max_seq_len}")
        positions = torch.arange(s, device=tokens.device)
        seps = (tokens == SEP).long()
        segments = ((seps.cumsum(dim=1) - seps) > 0).long()
        x = (self.token_embedding(tokens) + self.position_embedding(positions)
             + self.segment_embedding(segments))
        x = self.dropout(self.norm(x))
        for block in self.blocks:
            x = block(x, pad_mask)
        return x

    def forward(self, tokens: Tensor, pad_mask: Tensor) -> Tensor:
        """Cls-position vector per sequence, (batch, width)."""
        return self.forward_states(tokens, pad_mask)[:, 0]


class LstmCell(nn.Module):
    """One LSTM direction; gates ordered (input, forget, cell, output)."""

    def __init__(self, in_width: int, hidden: int):
        super().__init__()
        self.hidden = hidden
        self.w_ih = nn.Parameter(torch.empty(4 * hidden, in_width))
        self.w_hh = nn.Parameter(torch.empty(4 * hidden, hidden))
        self.bias = nn.Parameter(torch.zeros(4 * hidden))
        bound = 1.0 / math.sqrt(hidden)
        nn.init.uniform_(self.w_ih, -bound, bound)
        nn.init.uniform_(self.w_hh, -bound, bound)

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        return self.step_projected(x @ self.w_ih.T, h, c)

    def step_projected(self, x_proj: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        """Step from a precomputed input projection (see ContextAggregator._run)."""
        gates = x_proj + h @ self.w_hh.T + self.bias
        i, f, g, o = gates.chunk(4, dim=-1)
        i, f, o = torch.sigmoid(i), torch.sigmoid(f), torch.sigmoid(o)
        c = f * c + i * torch.tanh(g)
        h = o * torch.tanh(c)
        return h, c


class ContextAggregator(nn.Module):
    """Single-layer bidirectional LSTM over the slot sequence.

    Output width is 2 * hidden: the forward and backward hidden states at each
    step, concatenated.  ``lengths`` masks padded steps in batched input; the
    hidden state simply carries through masked steps.
    """

    def __init__(self, in_width: int, hidden: int):
        super().__init__()
        self.hidden = hidden
        self.forward_cell = LstmCell(in_width, hidden)
        self.backward_cell = LstmCell(in_width, hidden)

    @property
    def out_width(self) -> int:
        return 2 * self.hidden

    def _run(self, cell: LstmCell, e: Tensor, step_mask: Tensor, reverse: bool) -> Tensor:
        b, s, _ = e.shape
        # The input projection has no step dependence; hoist it out of the loop.
        x_proj = e @ cell.w_ih.T
        h = e.new_zeros(b, self.hidden)
        c = e.new_zeros(b, self.hidden)
        outputs: list[Tensor | None] = [None] * s
        steps = range(s - 1, -1, -1) if reverse else range(s)
        for t in steps:
            m = step_mask[:, t:t + 1]
            h_new, c_new = cell.step_projected(x_proj[:, t], h, c)
            h = m * h_new + (1.0 - m) * h
            c = m * c_new + (1.0 - m) * c
            outputs[t] = h
        return torch.stack(outputs, dim=1)

    def forward(self, e: Tensor, lengths: Tensor | None = None) -> Tensor:
        b, s, _ = e.shape
        if lengths is None:
            step_mask = e.new_ones(b, s)
        else:
            step_mask = (torch.arange(s, device=e.device)[None, :] < lengths[:, None]).to(e.dtype)
        fwd = self._run(self.forward_cell, e, step_mask, reverse=False)
        bwd = self._run(self.backward_cell, e, step_mask, reverse=True)
        return torch.cat([fwd, bwd], dim=-1)


class MatchClassifier(nn.Module):
    """Pivot-comparison head: tanh hidden layer over [F^t, F^c, F^t*F^c, F^t-F^c]."""

    def __init__(self, agg_width: int, feature_size: int = 0, dropout: float = 0.1):
        super().__init__()
        self.agg_width = agg_width
        self.feature_size = feature_size
        self.hidden = nn.Linear(4 * agg_width + feature_size, 4 * agg_width)
        # A bias here would shift every slot equally and vanish in the softmax.
        self.project = nn.Linear(4 * agg_width, 1, bias=False)
        self.dropout = nn.Dropout(dropout)

    def forward(self, f: Tensor, valid: Tensor, features: Tensor | None = None) -> Tensor:
        """Masked logits per slot; invalid slots get -inf."""
        pivot = f[..., :1, :].expand_as(f)
        g = torch.cat([pivot, f, pivot * f, pivot - f], dim=-1)
        if self.feature_size:
            if features is None:
                raise ValueError("classifier was built with features but none were given")
            g = torch.cat([g, features], dim=-1)
        hidden = self.dropout(torch.tanh(self.hidden(g)))
        logits = self.project(hidden).squeeze(-1)
        return logits.masked_fill(~valid, float("-inf"))


class ContextRanker(nn.Module):
    uses_tokens = True

    def __init__(self, config: RankerConfig):
        super().__init__()
        self.config = config
        self.encoder = PairEncoder(config.encoder)
        self.encoder_dropout = nn.Dropout(config.encoder.dropout)
        if config.use_context:
            self.aggregator: ContextAggregator | None = ContextAggregator(
                config.encoder.width, config.hidden_size)
        else:
            self.aggregator = None
        self.classifier = MatchClassifier(config.agg_width, config.feature_size,
                                          config.encoder.dropout)

    @property
    def uses_features(self) -> bool:
        return self.config.feature_size > 0

    def slot_vectors(self, pair_tokens: Tensor, pad_mask: Tensor,
                     gather_index: Tensor, slot_valid: Tensor, lengths: Tensor) -> Tensor:
        """Encode flat pairs and arrange them as per-target slot sequences."""
        e = self.encoder_dropout(self.encoder(pair_tokens, pad_mask))
        b, s = gather_index.shape
        seq = e[gather_index.reshape(-1)].view(b, s, -1)
        seq = seq * slot_valid.unsqueeze(-1).to(seq.dtype)
        if self.aggregator is not None:
            return self.aggregator(seq, lengths)
        return seq

    def forward(self, batch: "CollatedBatch") -> Tensor:  # noqa: F821 (type lives in data.py)
        f = self.slot_vectors(batch.pair_tokens, batch.pad_mask, batch.gather_index,
                              batch.slot_valid, batch.lengths)
        return self.classifier(f, batch.slot_valid, batch.features)


def masked_probs(logits: Tensor) -> Tensor:
    """Softmax over slots in double precision; -inf logits come out as exact zeros.

    The upcast keeps probability vectors summing to 1 within 1e-9 regardless
    of the parameter dtype.
    """
    return torch.softmax(logits.double(), dim=-1)


def encode_pair(encoder: PairEncoder, pair_tokens: Sequence[int]) -> Tensor:
    """Encode one [cls] ... [sep] ... [sep] sequence into its cls vector."""
    if not pair_tokens or pair_tokens[0] != CLS:
        raise ValueError("pair must begin with the cls token")
    tokens = torch.tensor([list(pair_tokens)], dtype=torch.long)
    mask = torch.ones_like(tokens, dtype=torch.bool)
    return encoder(tokens, mask)[0]


def context_aggregate(aggregator: ContextAggregator, e: Tensor) -> Tensor:
    """Run the bidirectional pass over a full (n_slots, width) sequence."""
    if e.dim() != 2:
        raise ValueError("expected a (n_slots, width) matrix")
    return aggregator(e.unsqueeze(0))[0]


def heuristic_score(classifier: MatchClassifier, f: Tensor,
                    valid_mask: Sequence[bool] | Tensor,
                    features: Tensor | None = None) -> Tensor:
    """Probability over candidate slots for one target; row 0 is the pivot."""
    if not isinstance(valid_mask, Tensor):
        valid_mask = torch.tensor(list(valid_mask), dtype=torch.bool)
    if not bool(valid_mask[0]):
        raise ValueError("slot 0 (the self pair) must be valid")
    logits = classifier(f.unsqueeze(0), valid_mask.unsqueeze(0),
                        None if features is None else features.unsqueeze(0))
    return masked_probs(logits)[0]
