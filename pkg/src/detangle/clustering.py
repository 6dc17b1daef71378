"""Reply graphs, conversation partitions, and the graph-to-partition step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


class UnionFind:
    """Disjoint sets over 0..n-1 with path compression and union by size."""

    def __init__(self, n: int) -> None:
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return
        if self.size[ri] < self.size[rj]:
            ri, rj = rj, ri
        self.parent[rj] = ri
        self.size[ri] += self.size[rj]


@dataclass(frozen=True)
class ReplyGraph:
    """One parent pointer per message; ``parents[i] == i`` marks a conversation start."""

    parents: tuple[int, ...]

    def __post_init__(self) -> None:
        for i, p in enumerate(self.parents):
            if not 0 <= p <= i:
                raise ValueError(f"parent of message {i} must lie in [0, {i}], got {p}")

    def __len__(self) -> int:
        return len(self.parents)

    @property
    def n_self_links(self) -> int:
        return sum(1 for i, p in enumerate(self.parents) if p == i)


@dataclass(frozen=True)
class Clustering:
    """Partition of message indices 0..n-1 into conversations.

    Cluster ids are contiguous from 0, numbered by first appearance, so two
    clusterings of the same partition compare equal regardless of the labels
    they were built from.
    """

    assignment: tuple[int, ...]
    members: tuple[frozenset[int], ...]

    @classmethod
    def from_assignment(cls, assignment: Sequence[int]) -> "Clustering":
        remap: dict[int, int] = {}
        normalized = []
        for label in assignment:
            if label not in remap:
                remap[label] = len(remap)
            normalized.append(remap[label])
        members: list[set[int]] = [set() for _ in range(len(remap))]
        for i, label in enumerate(normalized):
            members[label].add(i)
        return cls(tuple(normalized), tuple(frozenset(m) for m in members))

    def __len__(self) -> int:
        return len(self.assignment)

    @property
    def n_clusters(self) -> int:
        return len(self.members)


def build_clusters(graph: ReplyGraph) -> Clustering:
    """Connected components of the undirected reply graph."""
    uf = UnionFind(len(graph))
    for i, p in enumerate(graph.parents):
        uf.union(i, p)
    return Clustering.from_assignment([uf.find(i) for i in range(len(graph))])
