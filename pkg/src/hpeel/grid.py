"""Dyadic box decomposition of a periodic N x N grid.

Grid points ``(k1, k2)`` are linearized as ``k1 + N * k2`` (k1 fastest).
Boxes are addressed by ``BoxId(level, i, j)`` with 1-based ``i`` (along k1)
and ``j`` (along k2).  Neighbor and interaction lists wrap periodically.

Besides the natural linear order, the construction code works in *tree
order*: leaf boxes are laid out in Morton order and every box at every
level then occupies one contiguous slice of a vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

FIRST_LEVEL = 3


class BoxId(NamedTuple):
    level: int
    i: int
    j: int

    def parent(self) -> "BoxId":
        return BoxId(self.level - 1, (self.i + 1) // 2, (self.j + 1) // 2)

    def children(self) -> list["BoxId"]:
        # quadrant q = a + 2 b matches the Morton digit used by tree order
        l, i, j = self
        return [BoxId(l + 1, 2 * i - 1 + a, 2 * j - 1 + b) for b in (0, 1) for a in (0, 1)]


@dataclass(frozen=True)
class GridSpec:
    """Periodic ``N x N`` grid compressed down to level ``L``."""

    N: int
    L: int

    def __post_init__(self):
        if self.N < 1 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two, got {self.N}")
        if not FIRST_LEVEL <= self.L < self.L_M:
            raise ValueError(
                f"need {FIRST_LEVEL} <= L < log2(N) = {self.L_M}, got L={self.L}")

    @property
    def L_M(self) -> int:
        return self.N.bit_length() - 1

    @property
    def n(self) -> int:
        return self.N * self.N

    def side(self, level: int) -> int:
        """Grid points per box side at ``level``."""
        return self.N >> level

    def box_size(self, level: int) -> int:
        return self.side(level) ** 2

    def boxes(self, level: int) -> list[BoxId]:
        m = 1 << level
        return [BoxId(level, i, j) for i in range(1, m + 1) for j in range(1, m + 1)]


def _check_box(grid: GridSpec, b: BoxId) -> None:
    m = 1 << b.level
    if not (0 <= b.level <= grid.L_M and 1 <= b.i <= m and 1 <= b.j <= m):
        raise ValueError(f"box out of range: {b}")


def _check_list_level(grid: GridSpec, b: BoxId) -> None:
    _check_box(grid, b)
    if b.level < FIRST_LEVEL:
        raise ValueError("lists defined from level 3")


def box_points(grid: GridSpec | int, b: BoxId) -> np.ndarray:
    """Natural linear indices of the points in ``b``, k1 fastest.

    Only the grid size matters here, so a bare ``N`` is accepted too (this
    also covers grids too small to carry a compressed level).
    """
    N = grid if isinstance(grid, int) else grid.N
    if N < 1 or N & (N - 1):
        raise ValueError(f"N must be a power of two, got {N}")
    m = 1 << b.level
    if not (0 <= b.level <= N.bit_length() - 1 and 1 <= b.i <= m and 1 <= b.j <= m):
        raise ValueError(f"box out of range: {b}")
    s = N >> b.level
    k1 = np.arange((b.i - 1) * s, b.i * s)
    k2 = np.arange((b.j - 1) * s, b.j * s)
    return (k1[None, :] + N * k2[:, None]).ravel()


def _wrap(level: int, i: int, j: int) -> BoxId:
    m = 1 << level
    return BoxId(level, (i - 1) % m + 1, (j - 1) % m + 1)


def neighbor_list(grid: GridSpec, b: BoxId) -> list[BoxId]:
    """The 9 boxes adjacent to ``b`` (periodic), ``b`` included."""
    _check_list_level(grid, b)
    return [_wrap(b.level, b.i + di, b.j + dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)]


def interaction_list(grid: GridSpec, b: BoxId) -> list[BoxId]:
    _check_list_level(grid, b)
    near = set(neighbor_list(grid, b))
    if b.level == FIRST_LEVEL:
        cand = grid.boxes(FIRST_LEVEL)
    else:
        cand = [c for p in neighbor_list(grid, b.parent()) for c in p.children()]
    return sorted(c for c in cand if c not in near)


def peeling_sets(grid: GridSpec, level: int) -> list[list[BoxId]]:
    """64 probing classes ``i = p, j = q (mod 8)`` at ``level``, ordered by (p, q)."""
    if not FIRST_LEVEL <= level <= grid.L:
        raise ValueError(f"level {level} outside [{FIRST_LEVEL}, {grid.L}]")
    return _residue_sets(level, 8)


def diagonal_sets(grid: GridSpec) -> list[list[BoxId]]:
    """16 classes ``i = p, j = q (mod 4)`` at the leaf level."""
    return _residue_sets(grid.L, 4)


def _residue_sets(level: int, mod: int) -> list[list[BoxId]]:
    m = 1 << level
    return [[BoxId(level, i, j)
             for i in range(p, m + 1, mod) for j in range(q, m + 1, mod)]
            for p in range(1, mod + 1) for q in range(1, mod + 1)]


def il_pairs(grid: GridSpec, level: int) -> list[tuple[BoxId, BoxId]]:
    """Interaction pairs at ``level`` in canonical orientation (I < J)."""
    return [(I, J) for I in grid.boxes(level) for J in interaction_list(grid, I) if I < J]


def nl_pairs(grid: GridSpec, level: int) -> list[tuple[BoxId, BoxId]]:
    """Neighbor pairs at ``level`` with I <= J (self pairs included)."""
    return [(I, J) for I in grid.boxes(level)
            for J in sorted(set(neighbor_list(grid, I))) if I <= J]


# ---------------------------------------------------------------- tree order

def morton(b: BoxId) -> int:
    """Position of ``b`` among its level's boxes in tree order."""
    x, y, z = b.i - 1, b.j - 1, 0
    for bit in range(b.level):
        z |= ((x >> bit) & 1) << (2 * bit) | ((y >> bit) & 1) << (2 * bit + 1)
    return z


def box_slice(grid: GridSpec, b: BoxId) -> slice:
    """Rows of ``b`` in a tree-ordered vector."""
    m = grid.box_size(b.level)
    z = morton(b)
    return slice(z * m, (z + 1) * m)


def tree_order(grid: GridSpec) -> np.ndarray:
    """``order[t]`` is the natural index of tree position ``t``."""
    return _tree_order(grid.N, grid.L)


@lru_cache(maxsize=None)
def _tree_order(N: int, L: int) -> np.ndarray:
    grid = GridSpec(N, L)
    m = grid.box_size(L)
    order = np.empty(grid.n, dtype=np.int64)
    for b in grid.boxes(L):
        z = morton(b)
        order[z * m:(z + 1) * m] = box_points(grid, b)
    order.flags.writeable = False
    return order
