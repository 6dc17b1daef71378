"""Toy masked-language-model and next-sentence-prediction loop.

Adapts the pair encoder to the chat domain before fine-tuning: consecutive
messages form positive A/B pairs, a random message replaces B for negatives,
15% of non-special tokens are masked (80% mask token, 10% random, 10% kept),
and the total loss is MLM cross-entropy plus NSP binary cross-entropy.
"""

from __future__ import annotations

import random
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import torch
from torch import Tensor, nn
from torch.nn import functional as F

from .corpus import CLS, MASK, PAD, SEP, Channel, Vocabulary, pair_token_ids
from .model import PairEncoder

N_RESERVED = 5
IGNORE = -1


@dataclass(frozen=True)
class PostTrainConfig:
    epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 1e-3
    mask_prob: float = 0.15
    seed: int = 0


class PostTrainHeads(nn.Module):
    """Tied-embedding MLM output bias plus a binary NSP head on the cls state."""

    def __init__(self, encoder: PairEncoder):
        super().__init__()
        self.mlm_bias = nn.Parameter(torch.zeros(encoder.config.vocab_size))
        self.nsp = nn.Linear(encoder.config.width, 1)
        nn.init.normal_(self.nsp.weight, std=0.02)
        nn.init.zeros_(self.nsp.bias)


class MaskedPair(NamedTuple):
    tokens: tuple[int, ...]
    mlm_labels: tuple[int, ...]     # original id at masked positions, IGNORE elsewhere
    nsp_label: int                  # 1 = actual next message, 0 = random


def mask_tokens(token_ids: Sequence[int], vocab_size: int, rng: random.Random,
                mask_prob: float = 0.15) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """BERT-style masking over non-special positions."""
    ids = list(token_ids)
    maskable = [i for i, t in enumerate(ids) if t not in (PAD, CLS, SEP)]
    labels = [IGNORE] * len(ids)
    if not maskable:
        return tuple(ids), tuple(labels)
    n_masked = max(1, round(mask_prob * len(maskable)))
    for pos in sorted(rng.sample(maskable, n_masked)):
        labels[pos] = ids[pos]
        roll = rng.random()
        if roll < 0.8:
            ids[pos] = MASK
        elif roll < 0.9:
            ids[pos] = rng.randrange(N_RESERVED, vocab_size)
    return tuple(ids), tuple(labels)


def posttrain_step(encoder: PairEncoder, heads: PostTrainHeads,
                   tokens: Tensor, pad_mask: Tensor,
                   mlm_labels: Tensor, nsp_labels: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Loss terms for one (possibly size-1) batch of masked pairs.

    MLM logits reuse the token embedding matrix; the total is the plain sum
    of the MLM and NSP terms.
    """
    states = encoder.forward_states(tokens, pad_mask)
    masked = mlm_labels != IGNORE
    if masked.any():
        logits = states[masked] @ encoder.token_embedding.weight.T + heads.mlm_bias
        mlm = F.cross_entropy(logits, mlm_labels[masked])
    else:
        warnings.warn("posttrain batch has no masked positions; MLM loss is 0")
        mlm = states.sum() * 0.0
    nsp_logit = heads.nsp(states[:, 0]).squeeze(-1)
    nsp = F.binary_cross_entropy_with_logits(nsp_logit, nsp_labels.to(states.dtype))
    return mlm + nsp, mlm, nsp


def build_posttrain_pairs(channels: Sequence[Channel], vocab: Vocabulary,
                          rng: random.Random, max_seq_len: int = 100,
                          mask_prob: float = 0.15) -> list[MaskedPair]:
    """Consecutive-message pairs, half of them with a randomly swapped reply."""
    all_messages = [m for c in channels for m in c.messages]
    pairs: list[MaskedPair] = []
    for channel in channels:
        for i in range(len(channel) - 1):
            first = vocab.encode(channel.messages[i].words)
            if rng.random() < 0.5:
                second = vocab.encode(channel.messages[i + 1].words)
                label = 1
            else:
                second = vocab.encode(rng.choice(all_messages).words)
                label = 0
            ids = pair_token_ids(first, second, max_seq_len)
            masked, mlm_labels = mask_tokens(ids, len(vocab), rng, mask_prob)
            pairs.append(MaskedPair(masked, mlm_labels, label))
    if not pairs:
        raise ValueError("no adjacent message pairs to post-train on")
    return pairs


def _collate_pairs(pairs: Sequence[MaskedPair], device=None) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    width = max(len(p.tokens) for p in pairs)
    tokens = torch.full((len(pairs), width), PAD, dtype=torch.long, device=device)
    labels = torch.full((len(pairs), width), IGNORE, dtype=torch.long, device=device)
    pad_mask = torch.zeros((len(pairs), width), dtype=torch.bool, device=device)
    nsp = torch.zeros(len(pairs), dtype=torch.long, device=device)
    for row, pair in enumerate(pairs):
        n = len(pair.tokens)
        tokens[row, :n] = torch.tensor(pair.tokens, dtype=torch.long)
        labels[row, :n] = torch.tensor(pair.mlm_labels, dtype=torch.long)
        pad_mask[row, :n] = True
        nsp[row] = pair.nsp_label
    return tokens, pad_mask, labels, nsp


def run_post_training(encoder: PairEncoder, channels: Sequence[Channel], vocab: Vocabulary,
                      config: PostTrainConfig, max_seq_len: int = 100) -> list[dict]:
    """Short MLM+NSP adaptation pass over the corpus; returns per-epoch losses."""
    rng = random.Random(config.seed)
    torch.manual_seed(config.seed)
    heads = PostTrainHeads(encoder).to(next(encoder.parameters()).dtype)
    optimizer = torch.optim.Adam(
        list(encoder.parameters()) + list(heads.parameters()), lr=config.learning_rate)
    log = []
    encoder.train()
    for epoch in range(config.epochs):
        pairs = build_posttrain_pairs(channels, vocab, rng, max_seq_len, config.mask_prob)
        rng.shuffle(pairs)
        sums = [0.0, 0.0, 0.0]
        n_batches = 0
        for start in range(0, len(pairs), config.batch_size):
            batch = _collate_pairs(pairs[start:start + config.batch_size])
            optimizer.zero_grad(set_to_none=True)
            total, mlm, nsp = posttrain_step(encoder, heads, *batch)
            total.backward()
            optimizer.step()
            for i, value in enumerate((total, mlm, nsp)):
                sums[i] += float(value.detach())
            n_batches += 1
        log.append({"epoch": epoch, "posttrain_loss": round(sums[0] / n_batches, 6),
                    "mlm": round(sums[1] / n_batches, 6), "nsp": round(sums[2] / n_batches, 6)})
    encoder.eval()
    return log
