"""Truncations of a rooted K-regular tree.

Vertices are addressed by ``(level, index)`` with ``index`` in
``[0, K**level)``.  Children of ``(n, i)`` are ``(n + 1, i*K + c)``.
Internally every vertex also has a flat position, level-major, which is
what the numeric code indexes arrays with.  An edge is identified with
its child endpoint, so edge arrays are vertex arrays minus the root.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, NamedTuple

import numpy as np

from .errors import TopologyError

_INDEX_LIMIT = 2**63 - 1


class VertexId(NamedTuple):
    level: int
    index: int


def max_depth(K: int) -> int:
    """Largest depth whose total vertex count fits a signed 64-bit index."""
    if K == 1:
        return _INDEX_LIMIT - 1
    depth, total, width = 0, 1, 1
    while True:
        width *= K
        if total + width > _INDEX_LIMIT:
            return depth
        total += width
        depth += 1


@dataclass(frozen=True)
class TreeTopology:
    """The truncation ``X^depth`` of the K-regular tree."""

    branching: int
    depth: int

    def __post_init__(self):
        if self.branching < 1:
            raise TopologyError(f"branching must be >= 1, got {self.branching}")
        if self.depth < 0:
            raise TopologyError(f"depth must be >= 0, got {self.depth}")
        bound = max_depth(self.branching)
        if self.depth > bound:
            raise TopologyError(
                f"depth {self.depth} overflows 64-bit vertex indices for K={self.branching}; "
                f"maximum admissible depth is {bound}"
            )

    @property
    def K(self) -> int:
        return self.branching

    def level_size(self, level: int) -> int:
        return self.branching**level

    def offset(self, level: int) -> int:
        """Flat position of ``(level, 0)``."""
        K = self.branching
        if K == 1:
            return level
        return (K**level - 1) // (K - 1)

    @property
    def n_vertices(self) -> int:
        return self.offset(self.depth + 1)

    @property
    def n_edges(self) -> int:
        return self.n_vertices - 1

    def flat(self, v: VertexId) -> int:
        self._check(v)
        return self.offset(v.level) + v.index

    def vertex(self, flat: int) -> VertexId:
        if not 0 <= flat < self.n_vertices:
            raise TopologyError(f"flat index {flat} outside truncation")
        level = int(np.searchsorted(self.offsets, flat, side="right")) - 1
        return VertexId(level, flat - self.offset(level))

    def parent(self, v: VertexId) -> VertexId:
        self._check(v)
        if v.level == 0:
            raise TopologyError("the root has no parent")
        return VertexId(v.level - 1, v.index // self.branching)

    def child(self, v: VertexId, c: int) -> VertexId:
        self._check(v)
        if v.level >= self.depth:
            raise TopologyError(f"{v} lies on the truncation boundary and has no children")
        if not 0 <= c < self.branching:
            raise TopologyError(f"child slot {c} outside [0, {self.branching})")
        return VertexId(v.level + 1, v.index * self.branching + c)

    def children(self, v: VertexId) -> list[VertexId]:
        if v.level >= self.depth:
            return []
        return [self.child(v, c) for c in range(self.branching)]

    def vertices(self, level: int | None = None) -> Iterator[VertexId]:
        levels = range(self.depth + 1) if level is None else [level]
        for n in levels:
            for i in range(self.level_size(n)):
                yield VertexId(n, i)

    def ancestor(self, v: VertexId, level: int) -> VertexId:
        """Ancestor of ``v`` at ``level`` (``v`` itself when levels agree)."""
        self._check(v)
        if not 0 <= level <= v.level:
            raise TopologyError(f"no ancestor of {v} at level {level}")
        return VertexId(level, v.index // self.branching ** (v.level - level))

    def _check(self, v: VertexId) -> None:
        if not 0 <= v.level <= self.depth or not 0 <= v.index < self.branching**v.level:
            raise TopologyError(f"vertex {tuple(v)} outside X^{self.depth} for K={self.branching}")

    # flat arrays, built on first use

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array([self.offset(n) for n in range(self.depth + 2)], dtype=np.int64)

    @cached_property
    def levels(self) -> np.ndarray:
        """Level of each flat vertex."""
        sizes = np.diff(self.offsets)
        return np.repeat(np.arange(self.depth + 1, dtype=np.int64), sizes)

    @cached_property
    def indices(self) -> np.ndarray:
        """Within-level index of each flat vertex."""
        return np.arange(self.n_vertices, dtype=np.int64) - self.offsets[self.levels]

    @cached_property
    def parents(self) -> np.ndarray:
        """Flat parent of flat vertices ``1..N-1`` (edge ``e`` has child ``e + 1``)."""
        lv = self.levels[1:]
        return self.offsets[lv - 1] + self.indices[1:] // self.branching

    @cached_property
    def level1_ancestor(self) -> np.ndarray:
        """Index of the level-1 ancestor of each flat vertex (-1 for the root)."""
        out = np.full(self.n_vertices, -1, dtype=np.int64)
        if self.depth >= 1:
            lv = self.levels[1:]
            out[1:] = self.indices[1:] // self.branching ** (lv - 1)
        return out


@dataclass(frozen=True, eq=False)
class VertexSet:
    """A named set of vertices of one truncation, stored as a flat mask."""

    topology: TreeTopology
    mask: np.ndarray = field(repr=False)
    name: str = ""

    def __contains__(self, v: VertexId) -> bool:
        return bool(self.mask[self.topology.flat(VertexId(*v))])

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __iter__(self) -> Iterator[VertexId]:
        topo = self.topology
        for f in np.flatnonzero(self.mask):
            yield VertexId(int(topo.levels[f]), int(topo.indices[f]))

    def flat_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def __or__(self, other: VertexSet) -> VertexSet:
        return VertexSet(self.topology, self.mask | other.mask, f"{self.name}|{other.name}")

    def __and__(self, other: VertexSet) -> VertexSet:
        return VertexSet(self.topology, self.mask & other.mask, f"{self.name}&{other.name}")

    def __invert__(self) -> VertexSet:
        return VertexSet(self.topology, ~self.mask, f"~{self.name}")

    def isdisjoint(self, other: VertexSet) -> bool:
        return not np.any(self.mask & other.mask)

    @classmethod
    def from_vertices(cls, topology: TreeTopology, vertices, name: str = "") -> VertexSet:
        mask = np.zeros(topology.n_vertices, dtype=bool)
        for v in vertices:
            mask[topology.flat(VertexId(*v))] = True
        return cls(topology, mask, name)


def build_truncation(K: int, depth: int) -> TreeTopology:
    return TreeTopology(K, depth)


def ball(topology: TreeTopology, n: int) -> VertexSet:
    """``X^n``: all vertices of level at most ``n``."""
    return VertexSet(topology, topology.levels <= n, f"X^{n}")


def level_set(topology: TreeTopology, n: int) -> VertexSet:
    return VertexSet(topology, topology.levels == n, f"level{n}")


def subtree_T1(topology: TreeTopology) -> VertexSet:
    """The root, the root's child with index 0, and everything below it."""
    if topology.branching < 2:
        raise TopologyError("T_1 needs K >= 2; with K = 1 the split is degenerate")
    if topology.depth < 1:
        raise TopologyError("T_1 needs depth >= 1")
    mask = topology.level1_ancestor <= 0
    return VertexSet(topology, mask, "T_1")


def plate_sets(topology: TreeTopology, n: int) -> tuple[VertexSet, VertexSet]:
    """Vertices beyond level ``n`` inside T_1 (E_n) and outside it (F_n)."""
    if not 1 <= n < topology.depth:
        raise TopologyError(
            f"plate level n={n} must satisfy 1 <= n < depth={topology.depth}"
        )
    t1 = subtree_T1(topology).mask
    beyond = topology.levels > n
    return (
        VertexSet(topology, beyond & t1, f"E_{n}"),
        VertexSet(topology, beyond & ~t1, f"F_{n}"),
    )
