"""Versioned checkpoint archive: named tensors plus a config header."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import torch
from torch import nn

from .baselines import FeedforwardRanker, LinearRanker
from .corpus import RESERVED_TOKENS, Vocabulary
from .data import WindowConfig
from .model import ContextRanker, EncoderConfig, RankerConfig

FORMAT_VERSION = 1


@dataclass
class LoadedModel:
    model: nn.Module
    vocab: Vocabulary | None
    window: WindowConfig
    kind: str
    meta: dict[str, Any]


def _kind(model: nn.Module) -> str:
    if isinstance(model, ContextRanker):
        return "context"
    if isinstance(model, LinearRanker):
        return "linear"
    if isinstance(model, FeedforwardRanker):
        return "feedforward"
    raise ValueError(f"cannot checkpoint model type {type(model).__name__}")


def save_checkpoint(path: str | Path, model: nn.Module, window: WindowConfig,
                    vocab: Vocabulary | None = None, meta: dict[str, Any] | None = None) -> None:
    kind = _kind(model)
    payload: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "window": asdict(window),
        "meta": meta or {},
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
    }
    if kind == "context":
        cfg = model.config
        payload["config"] = {**asdict(cfg), "encoder": asdict(cfg.encoder)}
        if vocab is None:
            raise ValueError("a vocabulary is required to checkpoint the neural ranker")
        payload["vocab"] = list(vocab.id_to_token[len(RESERVED_TOKENS):])
    elif kind == "linear":
        payload["config"] = {"n_features": model.weight.shape[0]}
    else:
        payload["config"] = {"n_features": model.hidden.in_features,
                             "hidden_width": model.hidden.out_features}
    torch.save(payload, Path(path))


def load_checkpoint(path: str | Path) -> LoadedModel:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r} (expected {FORMAT_VERSION})")
    kind = payload["kind"]
    cfg = payload["config"]
    vocab = None
    if kind == "context":
        encoder = EncoderConfig(**cfg["encoder"])
        model: nn.Module = ContextRanker(RankerConfig(
            encoder=encoder, hidden_size=cfg["hidden_size"],
            use_context=cfg["use_context"], feature_size=cfg["feature_size"]))
        vocab = Vocabulary(payload["vocab"])
    elif kind == "linear":
        model = LinearRanker(cfg["n_features"])
    elif kind == "feedforward":
        model = FeedforwardRanker(cfg["n_features"], cfg["hidden_width"])
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return LoadedModel(model=model, vocab=vocab, window=WindowConfig(**payload["window"]),
                       kind=kind, meta=payload.get("meta", {}))
