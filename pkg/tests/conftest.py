from __future__ import annotations

import pytest
import torch

from detangle.model import ContextRanker, EncoderConfig, RankerConfig


@pytest.fixture(scope="session")
def toy_config() -> RankerConfig:
    encoder = EncoderConfig(vocab_size=40, width=16, layers=2, heads=2, ff_width=32,
                            max_seq_len=24, dropout=0.0)
    return RankerConfig(encoder=encoder, hidden_size=4)


@pytest.fixture
def toy_ranker(toy_config) -> ContextRanker:
    torch.manual_seed(7)
    model = ContextRanker(toy_config)
    model.eval()
    return model
