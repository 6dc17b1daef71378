"""Parse IRC-style chat logs into channels and assemble context windows.

Annotated files carry one message per line with three tab-separated columns:
``parent_index <TAB> index <TAB> raw_text``.  A parent equal to the message's
own index marks a conversation start.  Indices may start anywhere and contain
gaps; they are remapped to contiguous 0-based positions, preserving order.
Parent references to lines not present in the file (truncated history) are
treated as conversation starts.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .clustering import Clustering, ReplyGraph, build_clusters

PAD, UNK, CLS, SEP, MASK = 0, 1, 2, 3, 4
RESERVED_TOKENS = ("<pad>", "<unk>", "<cls>", "<sep>", "<mask>")

# Shortest pair that respects the 5-token floor on both sides: cls + 5 + sep + 5 + sep.
MIN_PAIR_LEN = 13

MINUTES_PER_DAY = 24 * 60

_CHAT_RE = re.compile(r"^\[(\d{1,2}):(\d{2})\]\s+([^\s:]+):\s?(.*)$")
_SYSTEM_RE = re.compile(r"^===\s+(\S+)\s+(.+)$")
_MENTION_RE = re.compile(r"^@\s*([^\s,:;!?]+)")
_ADDRESS_RE = re.compile(r"^([^\s,:;@]+)[,:](?:\s|$)")
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class ParseError(ValueError):
    """A chat line that matches no known pattern."""


class DataError(ValueError):
    """An annotated file violating the format contract."""


def tokenize(text: str) -> tuple[str, ...]:
    """Lower-cased split on whitespace and punctuation boundaries."""
    return tuple(_TOKEN_RE.findall(text.lower()))


@dataclass(frozen=True)
class LineParts:
    speaker: str
    time: int | None
    body: str
    is_system: bool
    target_nick: str | None


def parse_irc_line(raw: str) -> LineParts:
    """Split one raw chat line into speaker, time, body and addressing.

    Recognized shapes are ``[HH:MM] nick: body`` for chat lines and
    ``=== nick <event>`` for server notices (joins, quits).  A leading
    ``@nick`` (optionally with a space after the ``@``) or a leading
    ``nick,`` / ``nick:`` in the body is read as addressing that nick.
    """
    if not raw.strip():
        raise ParseError("empty line")
    m = _SYSTEM_RE.match(raw)
    if m:
        return LineParts(speaker=m.group(1), time=None, body=m.group(2).strip(),
                         is_system=True, target_nick=None)
    m = _CHAT_RE.match(raw)
    if m is None:
        raise ParseError(f"unrecognized line: {raw!r}")
    hours, minutes = int(m.group(1)), int(m.group(2))
    if hours >= 24 or minutes >= 60:
        raise ParseError(f"bad timestamp in line: {raw!r}")
    body = m.group(4).strip()
    target = _MENTION_RE.match(body) or _ADDRESS_RE.match(body)
    nick = target.group(1).rstrip(".") if target else None
    return LineParts(speaker=m.group(3), time=hours * 60 + minutes, body=body,
                     is_system=False, target_nick=nick or None)


@dataclass(frozen=True)
class Message:
    """One chat line within a channel.

    ``time`` is minutes since the start of the log's first day (day rollovers
    add 1440); it is absent for server notices.  ``gold_parent`` equals the
    message's own index for conversation starts.  ``tokens`` holds vocabulary
    ids and stays ``None`` until the channel is indexed against a vocabulary.
    """

    index: int
    raw: str
    words: tuple[str, ...]
    speaker: str
    time: int | None
    is_system: bool
    target_nick: str | None
    gold_parent: int
    tokens: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.gold_parent > self.index:
            raise ValueError(f"gold parent {self.gold_parent} follows message {self.index}")


@dataclass(frozen=True)
class Channel:
    """Ordered message sequence with its gold reply structure."""

    name: str
    messages: tuple[Message, ...]
    gold_clusters: Clustering

    @classmethod
    def build(cls, name: str, messages: Sequence[Message]) -> "Channel":
        for pos, msg in enumerate(messages):
            if msg.index != pos:
                raise DataError(f"{name}: message indices not contiguous at position {pos}")
        gold = ReplyGraph(tuple(m.gold_parent for m in messages))
        return cls(name, tuple(messages), build_clusters(gold))

    def __len__(self) -> int:
        return len(self.messages)

    @property
    def gold_graph(self) -> ReplyGraph:
        return ReplyGraph(tuple(m.gold_parent for m in self.messages))


class Vocabulary:
    """Token-to-id map with five reserved ids (pad, unk, cls, sep, mask)."""

    def __init__(self, tokens: Iterable[str]):
        self.id_to_token: tuple[str, ...] = RESERVED_TOKENS + tuple(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def encode(self, words: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.token_to_id.get(w, UNK) for w in words)

    def save(self, path: str | Path) -> None:
        text = "\n".join(self.id_to_token[len(RESERVED_TOKENS):])
        Path(path).write_text(text + "\n" if text else "", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(line for line in lines if line)


def build_vocab(channels: Iterable[Channel], min_count: int = 1) -> Vocabulary:
    """Corpus vocabulary with ids assigned by (count desc, token asc)."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for channel in channels:
        for msg in channel.messages:
            counts.update(msg.words)
    if not counts:
        raise DataError("empty corpus: no tokens to build a vocabulary from")
    kept = sorted((tok for tok, c in counts.items() if c >= min_count),
                  key=lambda tok: (-counts[tok], tok))
    return Vocabulary(kept)


def index_channel(channel: Channel, vocab: Vocabulary) -> Channel:
    """Return a copy of the channel with token ids filled in."""
    messages = tuple(replace(m, tokens=vocab.encode(m.words)) for m in channel.messages)
    return Channel(channel.name, messages, channel.gold_clusters)


def load_annotated_channel(path: str | Path, max_seq_len: int = 100) -> Channel:
    """Load one annotated channel file.

    Message words are truncated to ``max_seq_len`` tokens.  Day rollovers are
    detected when a timestamp decreases and add 1440 minutes, so time deltas
    stay monotone across midnight.
    """
    path = Path(path)
    rows: list[tuple[int, int, str, int]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) >= 3:
            parent_s, index_s, raw = parts[0], parts[1], "\t".join(parts[2:])
        else:
            pieces = line.split(None, 2)
            if len(pieces) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 columns, got {len(pieces)}")
            parent_s, index_s, raw = pieces
        try:
            parent, index = int(parent_s), int(index_s)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-integer index column: {exc}") from exc
        if parent > index:
            raise DataError(f"{path}:{lineno}: parent {parent} follows message {index}")
        rows.append((parent, index, raw, lineno))
    if not rows:
        raise DataError(f"{path}: no messages")

    position = {index: pos for pos, (_, index, _, _) in enumerate(rows)}
    if len(position) != len(rows):
        raise DataError(f"{path}: duplicate message indices")
    if sorted(position) != [index for _, index, _, _ in rows]:
        raise DataError(f"{path}: message indices must be increasing")

    messages = []
    rollover = 0
    prev_raw_time: int | None = None
    for pos, (parent, index, raw, lineno) in enumerate(rows):
        try:
            parts = parse_irc_line(raw)
        except ParseError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        time = None
        if parts.time is not None:
            if prev_raw_time is not None and parts.time < prev_raw_time:
                rollover += 1
            time = parts.time + rollover * MINUTES_PER_DAY
            prev_raw_time = parts.time
        # A parent outside the file (truncated history) starts a conversation.
        gold = position.get(parent, pos) if parent != index else pos
        messages.append(Message(
            index=pos,
            raw=raw,
            words=tokenize(parts.body)[:max_seq_len],
            speaker=parts.speaker,
            time=time,
            is_system=parts.is_system,
            target_nick=parts.target_nick,
            gold_parent=gold,
        ))
    return Channel.build(path.stem, messages)


def write_annotated_channel(channel: Channel, path: str | Path,
                            parents: Sequence[int] | None = None) -> None:
    """Write a channel in the three-column annotated format.

    ``parents`` overrides the gold parents (used to emit predictions in the
    same format the loader consumes).
    """
    if parents is None:
        parents = [m.gold_parent for m in channel.messages]
    if len(parents) != len(channel.messages):
        raise ValueError("one parent per message required")
    lines = [f"{parents[m.index]}\t{m.index}\t{m.raw}" for m in channel.messages]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_channel_dir(path: str | Path, max_seq_len: int = 100) -> list[Channel]:
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.is_file())
    if not files:
        raise DataError(f"{path}: no channel files")
    return [load_annotated_channel(p, max_seq_len=max_seq_len) for p in files]


@dataclass(frozen=True)
class PairBatch:
    """All candidate pairs for one target message.

    Slot 0 pairs the target with itself; slots 1..T-1 hold the preceding
    messages, most recent first; ``k_future`` extra slots for following
    messages come after slot T-1.  Slots without a message are padded and
    masked.  ``conv_labels[i]`` marks candidates in the target's gold
    conversation; for slot 0 it marks the target being a conversation start,
    so the gold parent's slot is always labeled.  When the gold parent falls
    outside the window, ``parent_slot`` is forced to 0 and
    ``parent_in_window`` is False.
    """

    channel_name: str
    target_index: int
    context_range: int
    k_future: int
    candidate_indices: tuple[int, ...]
    pair_tokens: tuple[tuple[int, ...], ...]
    valid_mask: tuple[bool, ...]
    parent_slot: int
    parent_in_window: bool
    conv_labels: tuple[bool, ...]

    @property
    def n_slots(self) -> int:
        return len(self.valid_mask)

    @property
    def batch_id(self) -> str:
        return f"{self.channel_name}[{self.target_index}]"


def pair_token_ids(target_tokens: Sequence[int], candidate_tokens: Sequence[int],
                   max_seq_len: int) -> tuple[int, ...]:
    """``[cls] target [sep] candidate [sep]`` truncated to ``max_seq_len``.

    The candidate side is truncated first; both sides keep at least 5 tokens.
    """
    if max_seq_len < MIN_PAIR_LEN:
        raise ValueError(f"max_seq_len must be >= {MIN_PAIR_LEN}")
    budget = max_seq_len - 3
    t, c = list(target_tokens), list(candidate_tokens)
    if len(t) + len(c) > budget:
        c = c[:max(5, budget - len(t))]
    if len(t) + len(c) > budget:
        t = t[:max(5, budget - len(c))]
    return (CLS, *t, SEP, *c, SEP)


def build_context_window(channel: Channel, target_index: int, context_range: int,
                         k_future: int = 0, max_seq_len: int = 100) -> PairBatch:
    """Assemble the candidate-pair batch for one target message."""
    if context_range < 1:
        raise ValueError("context_range must be >= 1")
    if k_future < 0:
        raise ValueError("k_future must be >= 0")
    if not 0 <= target_index < len(channel):
        raise ValueError(f"target index {target_index} outside channel {channel.name}")
    messages = channel.messages
    target = messages[target_index]
    if target.tokens is None:
        raise ValueError(f"channel {channel.name} is not indexed against a vocabulary")

    candidates: list[int] = [target_index]
    for back in range(1, context_range):
        idx = target_index - back
        candidates.append(idx if idx >= 0 else -1)
    for ahead in range(1, k_future + 1):
        idx = target_index + ahead
        candidates.append(idx if idx < len(messages) else -1)

    assignment = channel.gold_clusters.assignment
    empty: tuple[int, ...] = ()
    pair_tokens: list[tuple[int, ...]] = []
    valid: list[bool] = []
    conv: list[bool] = []
    for slot, cand in enumerate(candidates):
        if cand < 0:
            pair_tokens.append(empty)
            valid.append(False)
            conv.append(False)
            continue
        cand_msg = messages[cand]
        pair_tokens.append(pair_token_ids(target.tokens, cand_msg.tokens, max_seq_len))
        valid.append(True)
        if slot == 0:
            conv.append(target.gold_parent == target_index)
        else:
            conv.append(assignment[cand] == assignment[target_index])

    distance = target_index - target.gold_parent
    if distance == 0:
        parent_slot, in_window = 0, True
    elif distance < context_range:
        parent_slot, in_window = distance, True
    else:
        parent_slot, in_window = 0, False

    return PairBatch(
        channel_name=channel.name,
        target_index=target_index,
        context_range=context_range,
        k_future=k_future,
        candidate_indices=tuple(candidates),
        pair_tokens=tuple(pair_tokens),
        valid_mask=tuple(valid),
        parent_slot=parent_slot,
        parent_in_window=in_window,
        conv_labels=tuple(conv),
    )


@dataclass(frozen=True)
class CorpusStats:
    messages: int
    conversations: int
    speakers: int
    parent_distances: tuple[int, ...]
    in_window_fraction: float


def corpus_stats(channels: Sequence[Channel], context_range: int = 50) -> CorpusStats:
    """Split statistics plus the parent-distance profile.

    Distances cover non-start messages only; the in-window fraction is the
    share of them whose gold parent sits within ``context_range - 1``
    preceding messages.
    """
    messages = sum(len(c) for c in channels)
    conversations = sum(c.gold_clusters.n_clusters for c in channels)
    speakers = len({m.speaker for c in channels for m in c.messages})
    distances = tuple(m.index - m.gold_parent
                      for c in channels for m in c.messages if m.gold_parent != m.index)
    if distances:
        in_window = sum(1 for d in distances if d < context_range) / len(distances)
    else:
        in_window = 1.0
    return CorpusStats(messages, conversations, speakers, distances, in_window)
