"""Conversation disentanglement toolkit for IRC-style chat logs."""

from .clustering import Clustering, ReplyGraph, UnionFind, build_clusters
from .corpus import (Channel, Message, PairBatch, Vocabulary, build_context_window,
                     build_vocab, corpus_stats, index_channel, load_annotated_channel,
                     load_channel_dir, parse_irc_line, tokenize, write_annotated_channel)
from .data import WindowConfig
from .features import FEATURE_SCHEMA, extract_pair_features, featurize_batch
from .inference import parent_accuracy, predict_channel, predict_parent
from .metrics import MetricsReport, ari, evaluate, exact_match_prf, one_to_one, scaled_vi
from .model import ContextRanker, EncoderConfig, RankerConfig
from .training import TrainConfig, grad_check, ranking_loss, train

__version__ = "0.1.0"

__all__ = [
    "Channel", "Clustering", "ContextRanker", "EncoderConfig", "FEATURE_SCHEMA",
    "Message", "MetricsReport", "PairBatch", "RankerConfig", "ReplyGraph",
    "TrainConfig", "UnionFind", "Vocabulary", "WindowConfig", "ari",
    "build_clusters", "build_context_window", "build_vocab", "corpus_stats",
    "evaluate", "exact_match_prf", "extract_pair_features", "featurize_batch",
    "grad_check", "index_channel", "load_annotated_channel", "load_channel_dir",
    "one_to_one", "parent_accuracy", "parse_irc_line", "predict_channel",
    "predict_parent", "ranking_loss", "scaled_vi", "tokenize", "train",
    "write_annotated_channel",
]
