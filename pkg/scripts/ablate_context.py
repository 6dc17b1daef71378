#!/usr/bin/env python3
"""Context-aggregator ablation on the synthetic corpus.

Trains the full ranker and the pairwise variant (aggregator off) over several
seeds and prints held-out parent accuracy per arm, mirroring the kind of
component analysis usually reported as a "- BiLSTM" table row.

Usage: python scripts/ablate_context.py [--seeds 3] [--epochs 6] [--out DIR]
"""

from __future__ import annotations

import argparse
import statistics
import tempfile
from pathlib import Path

import torch

from detangle.corpus import build_vocab, index_channel, load_channel_dir
from detangle.data import WindowConfig
from detangle.inference import parent_accuracy
from detangle.model import ContextRanker, EncoderConfig, RankerConfig
from detangle.synth import SynthConfig, write_corpus
from detangle.training import TrainConfig, train


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--epochs", type=int, default=6)
    parser.add_argument("--corpus-seed", type=int, default=7)
    parser.add_argument("--out", default=None, help="corpus directory (default: temp)")
    args = parser.parse_args()

    out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="ablate_"))
    write_corpus(SynthConfig(seed=args.corpus_seed), out)
    train_raw = load_channel_dir(out / "train")
    dev_raw = load_channel_dir(out / "dev")
    vocab = build_vocab(train_raw)
    train_ch = [index_channel(c, vocab) for c in train_raw]
    dev_ch = [index_channel(c, vocab) for c in dev_raw]
    window = WindowConfig()

    results: dict[bool, list[float]] = {True: [], False: []}
    for seed in range(args.seeds):
        for use_context in (True, False):
            encoder = EncoderConfig(vocab_size=len(vocab))
            torch.manual_seed(seed)
            model = ContextRanker(RankerConfig(encoder=encoder, hidden_size=32,
                                               use_context=use_context))
            train(model, train_ch, dev_ch, window,
                  TrainConfig(epochs=args.epochs, batch_size=8, seed=seed))
            acc = parent_accuracy(model, dev_ch, window)
            results[use_context].append(acc)
            arm = "full" if use_context else "pairwise"
            print(f"seed {seed} {arm:9s} dev parent accuracy {acc:.4f}", flush=True)

    full = statistics.mean(results[True])
    pairwise = statistics.mean(results[False])
    print(f"\nmean full     {full:.4f}")
    print(f"mean pairwise {pairwise:.4f}")
    print(f"drop from removing the context aggregator: {100 * (full - pairwise):.1f} points")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
