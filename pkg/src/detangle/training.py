"""Loss, gradient checking, and the training loop."""

from __future__ import annotations

import copy
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .corpus import Channel
from .data import CollatedBatch, TargetExample, WindowConfig, channel_examples, collate
from .model import masked_probs


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 10
    alpha: float = 0.1
    seed: int = 0
    shuffle_seed: int | None = None     # defaults to seed; change to reshuffle an identical init
    betas: tuple[float, float] = (0.9, 0.999)
    prob_floor: float = 1e-12
    divergence_threshold: float = 1e3

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.prob_floor <= 0:
            raise ValueError("prob_floor must be > 0")

    @property
    def effective_shuffle_seed(self) -> int:
        return self.seed if self.shuffle_seed is None else self.shuffle_seed


class LossParts(NamedTuple):
    total: float
    cross_entropy: float
    conversation: float


def ranking_loss(p, parent_slot: int, conv_labels, alpha: float = 0.1,
                 floor: float = 1e-12, valid_mask=None) -> LossParts:
    """Cross-entropy on the parent slot plus the conversation term.

    ``cv = -(1/T) sum_i y_i log(max(p_i, floor))`` over valid slots, with T
    the full window size; ``total = ce + alpha * cv``.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(conv_labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError("probabilities and conversation labels differ in length")
    valid = np.ones_like(p, dtype=bool) if valid_mask is None else np.asarray(valid_mask, dtype=bool)
    if not valid[parent_slot]:
        raise ValueError(f"parent slot {parent_slot} is masked out")
    ce = -math.log(max(p[parent_slot], floor))
    cv = -float(np.sum(y[valid] * np.log(np.maximum(p[valid], floor)))) / len(p)
    return LossParts(ce + alpha * cv, ce, cv)


def batch_loss(probs: Tensor, batch: CollatedBatch, alpha: float,
               floor: float) -> tuple[Tensor, Tensor, Tensor]:
    """Differentiable mean loss over a collated batch (compacted slot space)."""
    logp = probs.clamp_min(floor).log()
    ce = -logp[torch.arange(len(batch)), batch.parent_pos]
    masked = logp * batch.conv_labels * batch.slot_valid.to(logp.dtype)
    cv = -masked.sum(dim=-1) / batch.n_slots_total
    total = ce + alpha * cv
    return total.mean(), ce.mean(), cv.mean()


def forward_backward(model: nn.Module, examples: Sequence[TargetExample],
                     config: TrainConfig) -> tuple[LossParts, dict[str, Tensor]]:
    """One forward/backward pass; returns loss values and per-tensor gradients."""
    dtype = next(model.parameters()).dtype
    batch = collate(examples, dtype=dtype)
    model.zero_grad(set_to_none=True)
    probs = masked_probs(model(batch))
    total, ce, cv = batch_loss(probs, batch, config.alpha, config.prob_floor)
    if not torch.isfinite(total):
        raise RuntimeError(f"non-finite loss on batch {batch.batch_ids}")
    total.backward()
    grads = {}
    for name, param in model.named_parameters():
        grads[name] = torch.zeros_like(param) if param.grad is None else param.grad.detach().clone()
    return LossParts(float(total.detach()), float(ce.detach()), float(cv.detach())), grads


def grad_check(model: nn.Module, examples: Sequence[TargetExample] | None = None,
               config: TrainConfig | None = None, eps: float = 1e-5,
               sample_fraction: float = 0.01, seed: int = 0,
               analytic: dict[str, Tensor] | None = None,
               loss_fn: Callable[[nn.Module], Tensor] | None = None) -> float:
    """Max relative error between analytic gradients and central differences.

    Samples roughly ``sample_fraction`` of the coordinates of every tensor (at
    least one each).  Requires double-precision parameters; runs the model in
    eval mode so the differentiated function is deterministic.  ``analytic``
    overrides the backward-pass gradients (for checking the checker) and
    ``loss_fn`` replaces the standard ranking loss.
    """
    if next(model.parameters()).dtype != torch.float64:
        raise ValueError("grad_check requires double-precision parameters (model.double())")
    if loss_fn is None:
        if examples is None or config is None:
            raise ValueError("examples and config are required without a custom loss_fn")
        batch = collate(examples, dtype=torch.float64)

        def loss_fn(m: nn.Module) -> Tensor:
            probs = masked_probs(m(batch))
            total, _, _ = batch_loss(probs, batch, config.alpha, config.prob_floor)
            return total

    was_training = model.training
    model.eval()
    try:
        if analytic is None:
            model.zero_grad(set_to_none=True)
            loss_fn(model).backward()
            analytic = {name: (torch.zeros_like(p) if p.grad is None else p.grad.detach().clone())
                        for name, p in model.named_parameters()}
        rng = np.random.default_rng(seed)
        worst = 0.0
        for name, param in model.named_parameters():
            n = param.numel()
            k = max(1, round(sample_fraction * n))
            coords = rng.choice(n, size=min(k, n), replace=False)
            flat = param.data.view(-1)
            grad_flat = analytic[name].reshape(-1)
            for idx in coords:
                idx = int(idx)
                original = float(flat[idx])
                with torch.no_grad():
                    flat[idx] = original + eps
                    plus = float(loss_fn(model))
                    flat[idx] = original - eps
                    minus = float(loss_fn(model))
                    flat[idx] = original
                numeric = (plus - minus) / (2.0 * eps)
                a = float(grad_flat[idx])
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, rel)
        return worst
    finally:
        model.train(was_training)


@dataclass
class TrainResult:
    log: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_dev_accuracy: float = 0.0


def prepare_training_examples(channels: Sequence[Channel], window: WindowConfig,
                              with_features: bool) -> list[TargetExample]:
    """Windows for every target whose gold parent is inside the window."""
    examples = []
    for channel in channels:
        examples.extend(ex for ex in channel_examples(channel, window, with_features)
                        if ex.pair.parent_in_window)
    return examples


def train(model: nn.Module, train_channels: Sequence[Channel], dev_channels: Sequence[Channel],
          window: WindowConfig, config: TrainConfig, log_path: str | Path | None = None,
          quiet: bool = True) -> TrainResult:
    """Mini-batch Adam over per-target ranking losses.

    Logs one record per epoch (mean losses plus dev parent accuracy) and
    restores the best-dev checkpoint before returning.  Deterministic for a
    fixed seed: the shuffle order comes from ``shuffle_seed`` and dropout from
    the torch seed set here.
    """
    from .inference import parent_accuracy  # local import to avoid a cycle

    torch.manual_seed(config.seed)
    shuffle_rng = random.Random(config.effective_shuffle_seed)
    examples = prepare_training_examples(train_channels, window, model.uses_features)
    if not examples:
        raise ValueError("no trainable targets (all gold parents fall outside the window?)")
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=config.betas)

    result = TrainResult()
    best_state: dict[str, Tensor] | None = None
    order = list(range(len(examples)))
    for epoch in range(config.epochs):
        model.train()
        shuffle_rng.shuffle(order)
        sums = np.zeros(3)
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            chunk = [examples[i] for i in order[start:start + config.batch_size]]
            losses, _ = forward_backward(model, chunk, config)
            if losses.total > config.divergence_threshold:
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: loss {losses.total:.3g} on "
                    f"batch {[ex.pair.batch_id for ex in chunk]}")
            optimizer.step()
            sums += np.array(losses)
            n_batches += 1
        means = sums / n_batches
        dev_acc = parent_accuracy(model, dev_channels, window)
        record = {"epoch": epoch, "train_loss": round(float(means[0]), 6),
                  "train_ce": round(float(means[1]), 6), "train_cv": round(float(means[2]), 6),
                  "dev_accuracy": round(dev_acc, 6)}
        result.log.append(record)
        if not quiet:
            print(json.dumps(record))
        if dev_acc > result.best_dev_accuracy or best_state is None:
            result.best_dev_accuracy = dev_acc
            result.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_state)
    if log_path is not None:
        Path(log_path).write_text(
            "\n".join(json.dumps(r) for r in result.log) + "\n", encoding="utf-8")
    return result
