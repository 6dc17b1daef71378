import numpy as np
import pytest
import torch

from detangle.baselines import FeedforwardRanker, LinearRanker, feedforward_rank, linear_rank
from detangle.data import WindowConfig, make_example
from detangle.features import N_FEATURES, FEATURE_SCHEMA
from detangle.training import TrainConfig, grad_check
from helpers import indexed_channel_from_parents

SELF_PAIR = [name for name, _ in FEATURE_SCHEMA].index("self_pair")


def random_features(rng, slots=6):
    return rng.standard_normal((slots, N_FEATURES))


def test_zero_weights_give_uniform_over_valid():
    rng = np.random.default_rng(0)
    valid = [True, True, True, False, True, False]
    p = linear_rank(np.zeros(N_FEATURES), random_features(rng), valid)
    expected = np.where(valid, 0.25, 0.0)
    np.testing.assert_allclose(p.detach().numpy(), expected, atol=1e-12)


def test_self_pair_weight_selects_slot_zero():
    phi = np.zeros((5, N_FEATURES))
    phi[0, SELF_PAIR] = 1.0
    weights = np.zeros(N_FEATURES)
    weights[SELF_PAIR] = 1.0
    p = linear_rank(weights, phi, [True] * 5)
    assert int(p.argmax()) == 0


def test_schema_mismatch_rejected():
    with pytest.raises(ValueError, match="schema"):
        linear_rank(np.zeros(4), np.zeros((3, N_FEATURES)), [True] * 3)
    with pytest.raises(ValueError, match="schema"):
        feedforward_rank(FeedforwardRanker(), np.zeros((3, 4)), [True] * 3)


def test_feedforward_zero_params_uniform():
    model = FeedforwardRanker()
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
    rng = np.random.default_rng(1)
    p = feedforward_rank(model, random_features(rng, 4), [True] * 4)
    np.testing.assert_allclose(p.detach().numpy(), np.full(4, 0.25), atol=1e-12)


def test_feedforward_is_deterministic():
    torch.manual_seed(3)
    model = FeedforwardRanker()
    rng = np.random.default_rng(2)
    phi = random_features(rng)
    a = feedforward_rank(model, phi, [True] * 6).detach()
    b = feedforward_rank(model, phi, [True] * 6).detach()
    assert torch.equal(a, b)


def test_feedforward_reduces_to_linear_with_scaled_construction():
    # tanh(eps * w . phi) / eps -> w . phi, so a feedforward net with first-row
    # weights eps*w and output 1/eps reproduces the linear ranker's softmax.
    rng = np.random.default_rng(5)
    weights = rng.standard_normal(N_FEATURES)
    eps = 1e-4
    model = FeedforwardRanker(hidden_width=64)
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
        model.hidden.weight[0] = torch.from_numpy(weights * eps)
        model.project.weight[0, 0] = 1.0 / eps
    phi = rng.standard_normal((7, N_FEATURES))
    valid = [True] * 7
    got = feedforward_rank(model, phi, valid).detach().numpy()
    want = linear_rank(weights, phi, valid).detach().numpy()
    np.testing.assert_allclose(got, want, atol=1e-6)


def test_feedforward_gradients_match_finite_differences():
    channel, _ = indexed_channel_from_parents(
        "c", [0 if i == 0 else i - 1 for i in range(12)],
        bodies=[f"alpha{i % 3} beta{i % 2}" for i in range(12)])
    window = WindowConfig(context_range=4, max_seq_len=24)
    examples = [make_example(channel, i, window, True) for i in (5, 9)]
    torch.manual_seed(0)
    model = FeedforwardRanker().double()
    error = grad_check(model, examples, TrainConfig(), sample_fraction=0.05)
    assert error <= 1e-4


def test_linear_gradients_match_finite_differences():
    channel, _ = indexed_channel_from_parents(
        "c", [0 if i == 0 else i - 1 for i in range(12)],
        bodies=[f"alpha{i % 3} beta{i % 2}" for i in range(12)])
    window = WindowConfig(context_range=4, max_seq_len=24)
    examples = [make_example(channel, 7, window, True)]
    model = LinearRanker().double()
    with torch.no_grad():
        model.weight.copy_(torch.linspace(-0.5, 0.5, N_FEATURES, dtype=torch.float64))
    error = grad_check(model, examples, TrainConfig(), sample_fraction=1.0)
    assert error <= 1e-6
