"""Shared test data and constructors."""

from __future__ import annotations

from pathlib import Path

from detangle.corpus import (Channel, Message, Vocabulary, build_vocab, index_channel,
                             load_annotated_channel, tokenize)

# 14-row excerpt of a real annotated IRC log: (parent, index, raw line).  Four
# parents (996, 992, 997, 995) point at lines before the excerpt starts, so
# those messages load as conversation starts.
SAMPLE_ROWS: tuple[tuple[int, int, str], ...] = (
    (996, 1000, "[03:04] Amaranth: @cliche American"),
    (992, 1001, "[03:04] Xenguy: @Amaranth I thought you were -- welcome mortal ;-)"),
    (1000, 1002, "[03:04] cliche: @ Amaranth, hahahaha"),
    (1003, 1003, "=== welshbyte  has joined #ubuntu"),
    (997, 1004, "[03:04] e-sin: no i just want the normal screensavers"),
    (995, 1005, "[03:04] Amaranth: @benoy Do you have cygwinx installed and running?"),
    (1006, 1006, "[03:04] babelfishi: can anyone help me install my Netgear MA111 USB adapter?"),
    (1004, 1007, "[03:04] e-sin: i have a 16mb video card"),
    (1008, 1008, "=== regeya  has joined #ubuntu"),
    (1007, 1009, "[03:04] e-sin: TNT2 :)"),
    (1001, 1010, "[03:05] Amaranth: @Xenguy hehe, i do side development"),
    (1007, 1011, "[03:05] jobezone: @e-sin then it's xscreensaver and xscreensave-gl for opengl ones."),
    (1005, 1012, "[03:05] benoy: how do i install that?  I couldn't find that in the list of things"),
    (1010, 1013, "[03:05] Amaranth: @Xenguy things like alacarte and easyubuntu"),
)


def write_sample_file(path: Path, rows=SAMPLE_ROWS) -> Path:
    path.write_text("".join(f"{p}\t{i}\t{raw}\n" for p, i, raw in rows), encoding="utf-8")
    return path


def channel_from_parents(name: str, parents, bodies=None, speakers=None,
                         system_flags=None) -> Channel:
    """Channel with synthetic chat lines and the given gold parent links."""
    n = len(parents)
    bodies = bodies or [f"hello number{i} world" for i in range(n)]
    speakers = speakers or [f"user{i % 4}" for i in range(n)]
    system_flags = system_flags or [False] * n
    messages = []
    for i, parent in enumerate(parents):
        minutes = i % 60
        if system_flags[i]:
            raw = f"=== {speakers[i]} has joined #test"
            time = None
        else:
            raw = f"[10:{minutes:02d}] {speakers[i]}: {bodies[i]}"
            time = 600 + minutes
        messages.append(Message(
            index=i, raw=raw, words=tokenize(bodies[i]), speaker=speakers[i],
            time=time, is_system=system_flags[i], target_nick=None, gold_parent=parent))
    return Channel.build(name, messages)


def indexed_channel_from_parents(name: str, parents, **kwargs) -> tuple[Channel, Vocabulary]:
    channel = channel_from_parents(name, parents, **kwargs)
    vocab = build_vocab([channel])
    return index_channel(channel, vocab), vocab


def load_sample_channel(tmp_path: Path):
    path = write_sample_file(tmp_path / "sample.tsv")
    return load_annotated_channel(path)
