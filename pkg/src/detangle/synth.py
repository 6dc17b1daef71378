"""Seeded synthetic chat generator.

Each channel interleaves several conversations.  Conversations draw their
content from distinct keyword pools ("themes"), replies echo a couple of
words from their parent and sometimes address its speaker, speaker groups are
disjoint per channel, and timestamps advance with exponential inter-arrival
times.  Parents are mostly the latest message of the same conversation, so
gold parent distances concentrate near zero the way real channels do.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import write_annotated_channel  # noqa: F401  (re-export convenience)

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"

COMMON_WORDS = (
    "the", "a", "is", "it", "ok", "yes", "no", "thanks", "well", "right",
    "what", "how", "why", "you", "i", "that", "this", "can", "does", "try",
)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    channels: int = 20
    conversations: int = 3          # interleaved conversations per channel
    messages: int = 30              # messages per conversation
    themes: int = 8                 # size of the global keyword-pool inventory
    dev_channels: int = 5           # trailing channels written to the dev split
    system_rate: float = 0.0        # chance of inserting a self-linked join line
    theme_pool_size: int = 24
    echo_words: int = 2             # replies copy this many of the parent's own words
    echo_prob: float = 0.9
    mention_prob: float = 0.3       # replies address their parent's speaker
    adjacent_parent_prob: float = 0.95

    def __post_init__(self) -> None:
        if min(self.channels, self.conversations, self.messages, self.themes) < 1:
            raise ValueError("channels, conversations, messages and themes must be >= 1")
        if self.conversations > self.themes:
            raise ValueError("need at least one theme per conversation in a channel")
        if not 0 <= self.dev_channels < self.channels:
            raise ValueError("dev_channels must leave at least one training channel")
        for name in ("system_rate", "echo_prob", "mention_prob", "adjacent_parent_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.theme_pool_size < 6:
            raise ValueError("theme pools need at least 6 words")


def _new_word(rng: random.Random, used: set[str], syllables: tuple[int, int] = (2, 4)) -> str:
    while True:
        n = rng.randint(*syllables)
        word = "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(n))
        if word not in used and word not in COMMON_WORDS:
            used.add(word)
            return word


@dataclass
class _Draft:
    position: int
    speaker: str
    fresh: list[str]    # this message's own theme words; what replies may echo


def _channel_rows(rng: random.Random, config: SynthConfig, theme_pools: list[list[str]],
                  nick_pool: list[str], used_words: set[str]) -> list[tuple[int, int, str]]:
    themes = rng.sample(range(config.themes), config.conversations)
    nicks = rng.sample(nick_pool, 3 * config.conversations)
    speakers = [nicks[3 * c:3 * c + rng.randint(2, 3)] for c in range(config.conversations)]

    schedule: list[int] = []
    for conv in range(config.conversations):
        schedule.extend([conv] * config.messages)
    rng.shuffle(schedule)

    minutes = float(rng.randint(0, 1200))
    history: list[list[_Draft]] = [[] for _ in range(config.conversations)]
    rows: list[tuple[int, int, str]] = []

    def stamp() -> str:
        m = int(minutes) % (24 * 60)
        return f"[{m // 60:02d}:{m % 60:02d}]"

    for conv in schedule:
        if rng.random() < config.system_rate:
            pos = len(rows)
            joiner = _new_word(rng, used_words, (2, 3))
            rows.append((pos, pos, f"=== {joiner}  has joined #synth"))
        minutes += rng.expovariate(1.4)
        pos = len(rows)
        pool = theme_pools[themes[conv]]
        speaker = rng.choice(speakers[conv])
        past = history[conv]
        if not past:
            fresh = rng.sample(pool, 4)
            content = fresh + rng.sample(COMMON_WORDS, rng.randint(0, 1))
            rng.shuffle(content)
            rows.append((pos, pos, f"{stamp()} {speaker}: {' '.join(content)}"))
            history[conv].append(_Draft(pos, speaker, fresh))
            continue
        if len(past) >= 2 and rng.random() >= config.adjacent_parent_prob:
            parent = past[-2]
        else:
            parent = past[-1]
        fresh = rng.sample(pool, 3)
        content = list(fresh)
        # Echoing only the parent's own fresh words keeps the reply cue specific
        # to the parent; echoing echoes would smear it across the conversation.
        if rng.random() < config.echo_prob:
            content += rng.sample(parent.fresh, min(config.echo_words, len(parent.fresh)))
        content += rng.sample(COMMON_WORDS, rng.randint(0, 1))
        rng.shuffle(content)
        body = " ".join(content)
        if parent.speaker != speaker and rng.random() < config.mention_prob:
            body = f"@{parent.speaker} {body}"
        rows.append((parent.position, pos, f"{stamp()} {speaker}: {body}"))
        history[conv].append(_Draft(pos, speaker, fresh))
    return rows


def generate_corpus(config: SynthConfig) -> list[list[tuple[int, int, str]]]:
    """Rows (parent, index, raw) for every channel; deterministic in the seed."""
    rng = random.Random(config.seed)
    used: set[str] = set()
    theme_pools = [[_new_word(rng, used) for _ in range(config.theme_pool_size)]
                   for _ in range(config.themes)]
    # Nicks come from one shared pool so held-out channels mention known names.
    nick_pool = [_new_word(rng, used, (2, 3)) + str(rng.randint(10, 99))
                 for _ in range(6 * config.conversations + 8)]
    return [_channel_rows(rng, config, theme_pools, nick_pool, used)
            for _ in range(config.channels)]


def write_corpus(config: SynthConfig, out_dir: str | Path) -> tuple[list[Path], list[Path]]:
    """Write annotated channel files under ``out_dir/train`` and ``out_dir/dev``."""
    out_dir = Path(out_dir)
    train_dir, dev_dir = out_dir / "train", out_dir / "dev"
    train_dir.mkdir(parents=True, exist_ok=True)
    dev_dir.mkdir(parents=True, exist_ok=True)
    train_paths, dev_paths = [], []
    for i, rows in enumerate(generate_corpus(config)):
        split_dir = train_dir if i < config.channels - config.dev_channels else dev_dir
        path = split_dir / f"channel_{i:03d}.tsv"
        path.write_text("".join(f"{p}\t{idx}\t{raw}\n" for p, idx, raw in rows), encoding="utf-8")
        (train_paths if split_dir is train_dir else dev_paths).append(path)
    return train_paths, dev_paths
