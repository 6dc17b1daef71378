"""Command-line entry point.

Subcommands: synth, train, predict, evaluate, ensemble, stats.  Every option
resolves as CLI flag > config file > built-in default; the config file is
flat ``key=value`` UTF-8 text with ``#`` comments, keys matching the long
flag names with underscores (e.g. ``context_range=50``).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import torch

from . import checkpoint as ckpt
from . import ensemble as ens
from . import metrics as met
from .baselines import FeedforwardRanker, LinearRanker
from .clustering import ReplyGraph
from .corpus import (Channel, DataError, ParseError, build_vocab, corpus_stats,
                     index_channel, load_annotated_channel, load_channel_dir,
                     write_annotated_channel)
from .data import WindowConfig
from .features import N_FEATURES, format_schema
from .inference import predict_channel
from .model import ContextRanker, EncoderConfig, RankerConfig
from .posttrain import PostTrainConfig, run_post_training
from .synth import SynthConfig, write_corpus
from .training import TrainConfig, train


class CliError(Exception):
    pass


@dataclass
class Option:
    name: str                       # long flag without leading dashes
    default: Any = None
    type: Callable[[str], Any] = str
    help: str = ""
    choices: tuple[str, ...] | None = None
    required: bool = False
    nargs: str | None = None


def _bool_flag(value: str) -> bool:
    if value.lower() in ("on", "true", "1", "yes"):
        return True
    if value.lower() in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


WINDOW_OPTIONS = [
    Option("context-range", 50, int, "candidate slots per target (self pair included)"),
    Option("future", 0, int, "extra candidate slots for following messages"),
    Option("max-seq-len", 100, int, "token budget per encoded pair"),
]

OPTIONS: dict[str, list[Option]] = {
    "synth": [
        Option("out", required=True, help="output directory (train/ and dev/ are created)"),
        Option("seed", 0, int),
        Option("channels", 20, int),
        Option("conversations", 3, int, "conversations per channel"),
        Option("messages", 30, int, "messages per conversation"),
        Option("themes", 8, int, "global keyword-pool inventory"),
        Option("dev-channels", 5, int),
        Option("system-rate", 0.0, float, "chance of inserting self-linked join lines"),
    ],
    "train": WINDOW_OPTIONS + [
        Option("data", required=True, help="directory with train/ and dev/ channel files"),
        Option("model", required=True, help="checkpoint output path"),
        Option("arch", "context", choices=("context", "linear", "feedforward")),
        Option("features", False, _bool_flag,
               "append hand features to the neural classifier (baselines always use them)"),
        Option("aggregator", True, _bool_flag, "off scores each pair independently"),
        Option("alpha", 0.1, float, "conversation-loss weight"),
        Option("seed", 0, int),
        Option("shuffle-seed", None, int, "defaults to --seed"),
        Option("epochs", 10, int),
        Option("batch-size", 8, int),
        Option("learning-rate", 1e-3, float),
        Option("min-count", 1, int, "vocabulary frequency threshold"),
        Option("width", 64, int), Option("layers", 2, int), Option("heads", 4, int),
        Option("ff-width", 128, int), Option("hidden-size", 32, int),
        Option("dropout", 0.1, float),
        Option("posttrain-epochs", 0, int, "MLM+NSP adaptation epochs before fine-tuning"),
        Option("vocab", help="also write the vocabulary file here"),
        Option("log", help="training log path (one JSON record per epoch)"),
    ],
    "predict": [
        Option("data", required=True, help="channel file or directory"),
        Option("model", required=True, help="checkpoint path"),
        Option("out", required=True, help="directory for prediction files"),
        Option("context-range", None, int, "override the checkpointed window"),
        Option("future", None, int),
        Option("max-seq-len", None, int),
    ],
    "evaluate": [
        Option("pred", required=True, help="predictions file or directory"),
        Option("gold", required=True, help="gold file or directory"),
        Option("max-seq-len", 100, int),
        Option("report", help="also write the key=value report here"),
    ],
    "ensemble": [
        Option("models", required=True, nargs="+", help="checkpoint paths"),
        Option("strategy", required=True, choices=("model-avg", "prob-avg", "vote")),
        Option("data", help="channel file or directory to predict"),
        Option("out", help="directory for prediction files"),
        Option("save-model", help="write the averaged checkpoint here (model-avg)"),
    ],
    "stats": [
        Option("data", help="corpus directory (train/dev/test subdirs are detected)"),
        Option("context-range", 50, int),
        Option("max-seq-len", 100, int),
        Option("dump-feature-schema", help="write the feature schema to this path"),
    ],
}


def _load_config_file(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _resolve(args: argparse.Namespace, command: str) -> dict[str, Any]:
    """CLI flag > config file > default, file values run through the flag's type."""
    options = OPTIONS[command]
    file_values = _load_config_file(args.config)
    known = {opt.name.replace("-", "_"): opt for opt in options}
    for key in file_values:
        if key not in known:
            raise CliError(f"unknown config key: {key}")
    resolved: dict[str, Any] = {}
    for attr, opt in known.items():
        value = getattr(args, attr)
        if value is None and attr in file_values:
            raw = file_values[attr]
            value = [opt.type(v) for v in raw.split()] if opt.nargs else opt.type(raw)
        if value is None:
            value = opt.default
        if value is None and opt.required:
            raise CliError(f"--{opt.name} is required")
        resolved[attr] = value
    return resolved


def _load_split(path: str, max_seq_len: int) -> list[Channel]:
    p = Path(path)
    if not p.exists():
        raise CliError(f"no such path: {p}")
    if p.is_dir():
        return load_channel_dir(p, max_seq_len=max_seq_len)
    return [load_annotated_channel(p, max_seq_len=max_seq_len)]


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "synth")
    synth = SynthConfig(seed=cfg["seed"], channels=cfg["channels"],
                        conversations=cfg["conversations"], messages=cfg["messages"],
                        themes=cfg["themes"], dev_channels=cfg["dev_channels"],
                        system_rate=cfg["system_rate"])
    train_paths, dev_paths = write_corpus(synth, cfg["out"])
    print(f"wrote {len(train_paths)} train and {len(dev_paths)} dev channels under {cfg['out']}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "train")
    window = WindowConfig(cfg["context_range"], cfg["future"], cfg["max_seq_len"])
    data = Path(cfg["data"])
    train_dir, dev_dir = data / "train", data / "dev"
    if not train_dir.is_dir() or not dev_dir.is_dir():
        raise CliError(f"{data} must contain train/ and dev/ subdirectories")
    train_channels = load_channel_dir(train_dir, max_seq_len=cfg["max_seq_len"])
    dev_channels = load_channel_dir(dev_dir, max_seq_len=cfg["max_seq_len"])
    vocab = build_vocab(train_channels, min_count=cfg["min_count"])
    if cfg["vocab"]:
        vocab.save(cfg["vocab"])
    train_channels = [index_channel(c, vocab) for c in train_channels]
    dev_channels = [index_channel(c, vocab) for c in dev_channels]

    torch.manual_seed(cfg["seed"])
    if cfg["arch"] == "linear":
        model: torch.nn.Module = LinearRanker(N_FEATURES)
    elif cfg["arch"] == "feedforward":
        model = FeedforwardRanker(N_FEATURES)
    else:
        encoder = EncoderConfig(vocab_size=len(vocab), width=cfg["width"], layers=cfg["layers"],
                                heads=cfg["heads"], ff_width=cfg["ff_width"],
                                max_seq_len=cfg["max_seq_len"], dropout=cfg["dropout"])
        ranker_cfg = RankerConfig(encoder=encoder, hidden_size=cfg["hidden_size"],
                                  use_context=cfg["aggregator"],
                                  feature_size=N_FEATURES if cfg["features"] else 0)
        model = ContextRanker(ranker_cfg)
        if cfg["posttrain_epochs"] > 0:
            post_log = run_post_training(model.encoder, train_channels, vocab,
                                         PostTrainConfig(epochs=cfg["posttrain_epochs"],
                                                         seed=cfg["seed"]),
                                         max_seq_len=cfg["max_seq_len"])
            for record in post_log:
                print(record, file=sys.stderr)

    train_cfg = TrainConfig(learning_rate=cfg["learning_rate"], batch_size=cfg["batch_size"],
                            epochs=cfg["epochs"], alpha=cfg["alpha"], seed=cfg["seed"],
                            shuffle_seed=cfg["shuffle_seed"])
    result = train(model, train_channels, dev_channels, window, train_cfg,
                   log_path=cfg["log"], quiet=False)
    ckpt.save_checkpoint(cfg["model"], model, window,
                         vocab=vocab if cfg["arch"] == "context" else None,
                         meta={"arch": cfg["arch"], "best_epoch": result.best_epoch,
                               "best_dev_accuracy": result.best_dev_accuracy})
    print(f"best dev parent accuracy {result.best_dev_accuracy:.4f} "
          f"(epoch {result.best_epoch}); checkpoint at {cfg['model']}")
    return 0


def _prepare_for_model(channels: list[Channel], loaded: ckpt.LoadedModel) -> list[Channel]:
    if loaded.vocab is not None:
        return [index_channel(c, loaded.vocab) for c in channels]
    return channels


def cmd_predict(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "predict")
    loaded = ckpt.load_checkpoint(cfg["model"])
    window = WindowConfig(cfg["context_range"] or loaded.window.context_range,
                          loaded.window.k_future if cfg["future"] is None else cfg["future"],
                          cfg["max_seq_len"] or loaded.window.max_seq_len)
    channels = _prepare_for_model(_load_split(cfg["data"], window.max_seq_len), loaded)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for channel in channels:
        graph, _ = predict_channel(loaded.model, channel, window)
        write_annotated_channel(channel, out / f"{channel.name}.tsv", parents=graph.parents)
    print(f"wrote predictions for {len(channels)} channels to {out}")
    return 0


def _prediction_graphs(pred_channels: list[Channel]) -> dict[str, ReplyGraph]:
    return {c.name: c.gold_graph for c in pred_channels}


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "evaluate")
    gold = _load_split(cfg["gold"], cfg["max_seq_len"])
    pred = _load_split(cfg["pred"], cfg["max_seq_len"])
    report = met.evaluate(_prediction_graphs(pred), gold)
    print(report.as_table())
    print(report.as_keyvalues())
    if cfg["report"]:
        Path(cfg["report"]).write_text(report.as_keyvalues() + "\n", encoding="utf-8")
    return 0


def cmd_ensemble(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "ensemble")
    loaded = [ckpt.load_checkpoint(p) for p in cfg["models"]]
    first = loaded[0]
    for other in loaded[1:]:
        if other.kind != first.kind:
            raise CliError("ensemble members must share an architecture")
        if other.vocab is not None and first.vocab is not None and other.vocab != first.vocab:
            raise CliError("ensemble members must share a vocabulary")

    if cfg["strategy"] == "model-avg":
        averaged = ens.model_avg([l.model.state_dict() for l in loaded])
        first.model.load_state_dict(averaged)
        if cfg["save_model"]:
            ckpt.save_checkpoint(cfg["save_model"], first.model, first.window, vocab=first.vocab,
                                 meta={"ensemble": "model-avg", "members": len(loaded)})
            print(f"wrote averaged checkpoint to {cfg['save_model']}")

    if cfg["data"] is None:
        if cfg["strategy"] != "model-avg":
            raise CliError(f"--data is required for the {cfg['strategy']} strategy")
        return 0
    if cfg["out"] is None:
        raise CliError("--out is required when predicting")
    window = first.window
    channels = _prepare_for_model(_load_split(cfg["data"], window.max_seq_len), first)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for channel in channels:
        if cfg["strategy"] == "model-avg":
            graph, _ = predict_channel(first.model, channel, window)
        else:
            graph, _ = ens.predict_channel_ensemble([l.model for l in loaded], channel,
                                                    window, cfg["strategy"])
        write_annotated_channel(channel, out / f"{channel.name}.tsv", parents=graph.parents)
    print(f"wrote {cfg['strategy']} predictions for {len(channels)} channels to {out}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    cfg = _resolve(args, "stats")
    if cfg["dump_feature_schema"]:
        Path(cfg["dump_feature_schema"]).write_text(format_schema(), encoding="utf-8")
        print(f"wrote feature schema to {cfg['dump_feature_schema']}")
        if cfg["data"] is None:
            return 0
    if cfg["data"] is None:
        raise CliError("--data is required")
    root = Path(cfg["data"])
    if not root.is_dir():
        raise CliError(f"no such directory: {root}")
    splits = [(d.name, d) for d in (root / "train", root / "dev", root / "test") if d.is_dir()]
    if not splits:
        splits = [(root.name, root)]
    t = cfg["context_range"]
    for name, directory in splits:
        channels = load_channel_dir(directory, max_seq_len=cfg["max_seq_len"])
        stats = corpus_stats(channels, context_range=t)
        print(f"[{name}] messages={stats.messages} conversations={stats.conversations} "
              f"speakers={stats.speakers}")
        if stats.parent_distances:
            print(f"[{name}] non-start messages={len(stats.parent_distances)} "
                  f"in-window@T={t}: {100.0 * stats.in_window_fraction:.2f}%")
            buckets = ((1, 1), (2, 2), (3, 5), (6, 10), (11, 20), (21, 50), (51, 10**9))
            parts = []
            for lo, hi in buckets:
                count = sum(1 for d in stats.parent_distances if lo <= d <= hi)
                label = f"{lo}" if lo == hi else (f"{lo}-{hi}" if hi < 10**9 else f">{lo - 1}")
                parts.append(f"{label}:{100.0 * count / len(stats.parent_distances):.1f}%")
            print(f"[{name}] parent distance histogram  " + "  ".join(parts))
    return 0


COMMANDS = {
    "synth": (cmd_synth, "generate a seeded synthetic corpus"),
    "train": (cmd_train, "train a ranker and write a checkpoint"),
    "predict": (cmd_predict, "predict reply-to parents for channels"),
    "evaluate": (cmd_evaluate, "score predictions against gold annotations"),
    "ensemble": (cmd_ensemble, "combine several checkpoints"),
    "stats": (cmd_stats, "corpus statistics and parent-distance profile"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detangle",
                                     description="Conversation disentanglement toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key=value config file")
        for opt in OPTIONS[name]:
            kwargs: dict[str, Any] = {"type": opt.type, "default": None, "help": opt.help}
            if opt.choices:
                kwargs["choices"] = opt.choices
            if opt.nargs:
                kwargs["nargs"] = opt.nargs
            p.add_argument(f"--{opt.name}", **kwargs)
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, DataError, ParseError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
