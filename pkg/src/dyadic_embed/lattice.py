"""Finite dyadic geometry over a root box refined to depth ``L`` per axis.

Intervals are addressed by ``(level, index)`` inside the root interval of
their axis; a rectangle is one interval per axis with independent levels.
All geometry is integer arithmetic in units of finest cells, real
coordinates are derived from the root box only when asked for.

Bulk computations use a *packed* layout: along one axis the
``2**(L+1) - 1`` intervals are stored in heap order (node ``m`` has
children ``2m+1`` and ``2m+2``), so every per-rectangle quantity of a
``d``-dimensional lattice fits in an array of shape ``(M,) * d``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "DyadicInterval",
    "DyadicRect",
    "LatticeSpec",
    "LatticeError",
    "children",
    "projection",
    "substitute_axis",
    "enumerate_rects",
    "dilate_clip",
    "ancestors",
    "axis_nodes",
    "node_id",
    "node_interval",
    "enumeration_order",
    "scatter_to_cells",
]

Box = tuple[tuple[int, int], ...]


class LatticeError(ValueError):
    """Raised for addresses that fall outside the finite lattice."""


@dataclass(frozen=True, order=True)
class DyadicInterval:
    level: int
    index: int

    def __post_init__(self):
        if self.level < 0:
            raise LatticeError(f"negative level {self.level}")
        if not 0 <= self.index < (1 << self.level):
            raise LatticeError(
                f"index {self.index} outside 0..{(1 << self.level) - 1} at level {self.level}"
            )

    def cells(self, depth: int) -> tuple[int, int]:
        """Half-open range of finest cells covered at lattice depth ``depth``."""
        if self.level > depth:
            raise LatticeError(f"level {self.level} exceeds depth {depth}")
        width = 1 << (depth - self.level)
        return self.index * width, (self.index + 1) * width

    def contains(self, other: "DyadicInterval") -> bool:
        if other.level < self.level:
            return False
        return other.index >> (other.level - self.level) == self.index


@dataclass(frozen=True, order=True)
class DyadicRect:
    axes: tuple[DyadicInterval, ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if len(self.axes) < 1:
            raise LatticeError("a rectangle needs at least one axis")

    @classmethod
    def from_pairs(cls, *pairs: tuple[int, int]) -> "DyadicRect":
        return cls(tuple(DyadicInterval(k, i) for k, i in pairs))

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(a.level for a in self.axes)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(a.index for a in self.axes)

    def is_cube(self) -> bool:
        return len(set(self.levels)) == 1

    def cell_box(self, depth: int) -> Box:
        return tuple(a.cells(depth) for a in self.axes)

    def slices(self, depth: int) -> tuple[slice, ...]:
        return tuple(slice(lo, hi) for lo, hi in self.cell_box(depth))

    def contains(self, other: "DyadicRect") -> bool:
        return all(a.contains(b) for a, b in zip(self.axes, other.axes))

    def volume(self, spec: "LatticeSpec") -> float:
        return math.prod(s / (1 << a.level) for s, a in zip(spec.sides, self.axes))

    def __str__(self):
        return " x ".join(f"({a.level},{a.index})" for a in self.axes)


@dataclass(frozen=True)
class LatticeSpec:
    """Dimension, depth and root box of a finite dyadic lattice."""

    d: int
    L: int
    origin: tuple[float, ...] = field(default=())
    sides: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.d < 1:
            raise LatticeError(f"dimension must be >= 1, got {self.d}")
        if self.L < 0:
            raise LatticeError(f"depth must be >= 0, got {self.L}")
        origin = tuple(float(x) for x in self.origin) or (0.0,) * self.d
        sides = tuple(float(x) for x in self.sides) or (1.0,) * self.d
        if len(origin) != self.d or len(sides) != self.d:
            raise LatticeError("root origin/sides must have one entry per axis")
        if any(s <= 0 for s in sides):
            raise LatticeError("root side lengths must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "sides", sides)

    @property
    def n(self) -> int:
        """Finest cells per axis."""
        return 1 << self.L

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def nodes(self) -> int:
        """Dyadic intervals per axis."""
        return (1 << (self.L + 1)) - 1

    @property
    def packed_shape(self) -> tuple[int, ...]:
        return (self.nodes,) * self.d

    @property
    def rect_count(self) -> int:
        return self.nodes**self.d

    @property
    def cell_sides(self) -> tuple[float, ...]:
        return tuple(s / self.n for s in self.sides)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.cell_sides)

    def root(self) -> DyadicRect:
        return DyadicRect((DyadicInterval(0, 0),) * self.d)

    def cell_edges(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.sides[axis] * np.arange(self.n + 1) / self.n

    def cell_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.sides[axis] * (np.arange(self.n) + 0.5) / self.n

    def box_bounds(self, box: Box) -> tuple[tuple[float, float], ...]:
        """Real coordinates of a cell-aligned box."""
        return tuple(
            (o + s * lo / self.n, o + s * hi / self.n)
            for (lo, hi), o, s in zip(box, self.origin, self.sides)
        )

    def check_rect(self, rect: DyadicRect) -> None:
        if rect.d != self.d:
            raise LatticeError(f"rectangle has {rect.d} axes, lattice has {self.d}")
        if max(rect.levels) > self.L:
            raise LatticeError(f"rectangle {rect} is finer than depth {self.L}")

    def with_dims(self, axes: Sequence[int]) -> "LatticeSpec":
        """Sub-lattice keeping only the listed axes."""
        return LatticeSpec(
            len(axes), self.L, tuple(self.origin[a] for a in axes), tuple(self.sides[a] for a in axes)
        )


def children(interval: DyadicInterval, depth: int) -> tuple[DyadicInterval, DyadicInterval]:
    """Left and right halves of ``interval``; fails at the finest level."""
    if interval.level >= depth:
        raise LatticeError(f"interval {interval} is at the finest level {depth}")
    k, i = interval.level + 1, 2 * interval.index
    return DyadicInterval(k, i), DyadicInterval(k, i + 1)


def _check_axis(rect: DyadicRect, j: int) -> None:
    if not 0 <= j < rect.d:
        raise LatticeError(f"axis {j} out of range for a {rect.d}-dimensional rectangle")


def projection(rect: DyadicRect, j: int) -> DyadicInterval:
    """Interval of ``rect`` along axis ``j`` (0-based)."""
    _check_axis(rect, j)
    return rect.axes[j]


def substitute_axis(rect: DyadicRect, interval: DyadicInterval, j: int) -> DyadicRect:
    """Rectangle ``[R; I, j]``: ``rect`` with its axis ``j`` replaced by ``interval``."""
    _check_axis(rect, j)
    axes = list(rect.axes)
    axes[j] = interval
    return DyadicRect(tuple(axes))


def enumerate_rects(spec: LatticeSpec) -> Iterator[DyadicRect]:
    """Every lattice rectangle once, ordered lexicographically by (levels, indices)."""
    for levels in itertools.product(range(spec.L + 1), repeat=spec.d):
        for idx in itertools.product(*(range(1 << k) for k in levels)):
            yield DyadicRect(tuple(DyadicInterval(k, i) for k, i in zip(levels, idx)))


def ancestors(cell: Sequence[int], spec: LatticeSpec) -> Iterator[DyadicRect]:
    """All ``(L+1)**d`` lattice rectangles containing a finest cell."""
    if len(cell) != spec.d or any(not 0 <= c < spec.n for c in cell):
        raise LatticeError(f"cell {tuple(cell)} outside the {spec.shape} grid")
    for levels in itertools.product(range(spec.L + 1), repeat=spec.d):
        yield DyadicRect(
            tuple(DyadicInterval(k, c >> (spec.L - k)) for k, c in zip(levels, cell))
        )


def _dilate_range(lo: int, hi: int, c: Fraction, n: int) -> tuple[int, int]:
    center = Fraction(lo + hi, 2)
    half = c * (hi - lo) / 2
    return max(0, math.floor(center - half)), min(n, math.ceil(center + half))


def dilate_clip(rect: DyadicRect | Box, c: float, spec: LatticeSpec) -> Box:
    """Concentric ``c``-dilate of ``rect`` clipped to the root, rounded outward to cells."""
    if c <= 0:
        raise ValueError(f"dilation factor must be positive, got {c}")
    box = rect.cell_box(spec.L) if isinstance(rect, DyadicRect) else rect
    cf = Fraction(c)
    return tuple(_dilate_range(lo, hi, cf, spec.n) for lo, hi in box)


# -- packed heap layout ------------------------------------------------------


def node_id(interval: DyadicInterval) -> int:
    return (1 << interval.level) - 1 + interval.index


def node_interval(m: int) -> DyadicInterval:
    k = (m + 1).bit_length() - 1
    return DyadicInterval(k, m + 1 - (1 << k))


@lru_cache(maxsize=None)
def axis_nodes(depth: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-node ``(level, index, lo, hi)`` arrays for one axis, in heap order."""
    level = np.concatenate([np.full(1 << k, k, dtype=np.int64) for k in range(depth + 1)])
    index = np.concatenate([np.arange(1 << k, dtype=np.int64) for k in range(depth + 1)])
    width = np.int64(1) << (depth - level)
    lo, hi = index * width, (index + 1) * width
    for arr in (level, index, lo, hi):
        arr.setflags(write=False)
    return level, index, lo, hi


@lru_cache(maxsize=None)
def dilated_axis_nodes(depth: int, c: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-node cell ranges of the clipped ``c``-dilates along one axis."""
    _, _, lo, hi = axis_nodes(depth)
    cf = Fraction(c)
    pairs = [_dilate_range(int(a), int(b), cf, 1 << depth) for a, b in zip(lo, hi)]
    dlo = np.array([p[0] for p in pairs], dtype=np.int64)
    dhi = np.array([p[1] for p in pairs], dtype=np.int64)
    dlo.setflags(write=False)
    dhi.setflags(write=False)
    return dlo, dhi


def packed_position(rect: DyadicRect) -> tuple[int, ...]:
    return tuple(node_id(a) for a in rect.axes)


def rect_at(position: Sequence[int]) -> DyadicRect:
    return DyadicRect(tuple(node_interval(int(m)) for m in position))


def enumeration_order(spec: LatticeSpec) -> np.ndarray:
    """Flat packed indices of the rectangles in :func:`enumerate_rects` order."""
    level, _, _, _ = axis_nodes(spec.L)
    M = spec.nodes
    # sort key per rectangle: (levels..., heap ids...) since heap order is index order within a level
    grids = np.meshgrid(*([np.arange(M)] * spec.d), indexing="ij")
    flat = [g.ravel() for g in grids]
    keys = [m for m in reversed(flat)] + [level[m] for m in reversed(flat)]
    order = np.lexsort(keys)
    return np.ravel_multi_index(tuple(f[order] for f in flat), spec.packed_shape)


def scatter_to_cells(packed: np.ndarray, depth: int) -> np.ndarray:
    """Per cell, the sum of ``packed`` over all rectangles containing that cell."""
    out = np.asarray(packed, dtype=np.float64)
    for axis in range(out.ndim):
        v = np.moveaxis(out, axis, 0)
        acc = np.zeros((1 << depth,) + v.shape[1:])
        for k in range(depth + 1):
            acc += np.repeat(v[(1 << k) - 1 : (1 << (k + 1)) - 1], 1 << (depth - k), axis=0)
        out = np.moveaxis(acc, 0, axis)
    return out
