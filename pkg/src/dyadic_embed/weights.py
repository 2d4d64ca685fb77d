"""Grid-sampled weights and their rectangle measures.

A weight is stored as the mass of every finest cell (density times cell
volume), so ``sigma(R)`` is a plain sum of masses and additivity over dyadic
partitions is an identity of finite sums.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property, reduce
from pathlib import Path
from typing import Sequence

import numpy as np

from .lattice import Box, DyadicRect, LatticeSpec, axis_nodes, rect_at
from .prefix import PrefixTable

__all__ = [
    "GridWeight",
    "ReverseDoublingReport",
    "rect_sums",
    "cube_sums",
    "lebesgue",
    "gen_power_weight",
    "gen_cascade_weight",
    "cascade_masses_1d",
    "reverse_doubling_beta",
    "save_weight",
    "load_weight",
]


def rect_sums(table: PrefixTable, spec: LatticeSpec) -> np.ndarray:
    """Sums over every lattice rectangle, in the packed ``(M,)*d`` layout."""
    _, _, lo, hi = axis_nodes(spec.L)
    return table.box_sums([(lo, hi)] * spec.d)


def cube_sums(table: PrefixTable, spec: LatticeSpec, level: int) -> np.ndarray:
    """Sums over the dyadic cubes of one level, shape ``(2**level,)*d``."""
    width = 1 << (spec.L - level)
    lo = np.arange(1 << level) * width
    return table.box_sums([(lo, lo + width)] * spec.d)


@dataclass(frozen=True, eq=False)
class GridWeight:
    spec: LatticeSpec
    cell_mass: np.ndarray

    def __post_init__(self):
        mass = np.array(self.cell_mass, dtype=np.float64)
        if mass.shape != self.spec.shape:
            raise ValueError(f"cell masses have shape {mass.shape}, lattice needs {self.spec.shape}")
        if not np.all(np.isfinite(mass)):
            raise ValueError("cell masses must be finite")
        if np.any(mass < 0):
            raise ValueError("cell masses must be nonnegative")
        if not mass.sum() > 0:
            raise ValueError("weight has zero total mass")
        mass.setflags(write=False)
        object.__setattr__(self, "cell_mass", mass)

    @cached_property
    def prefix(self) -> PrefixTable:
        return PrefixTable(self.cell_mass)

    @property
    def total(self) -> float:
        return self.prefix.total

    @property
    def density(self) -> np.ndarray:
        return self.cell_mass / self.spec.cell_volume

    def measure(self, region: DyadicRect | Box) -> float:
        """``sigma(region)`` by inclusion-exclusion on the prefix table."""
        if isinstance(region, DyadicRect):
            self.spec.check_rect(region)
            region = region.cell_box(self.spec.L)
        for lo, hi in region:
            if not 0 <= lo <= hi <= self.spec.n:
                raise ValueError(f"box {region} leaves the root")
        return self.prefix.box_sum(region)

    @cached_property
    def rect_measures(self) -> np.ndarray:
        out = rect_sums(self.prefix, self.spec)
        out.setflags(write=False)
        return out

    def cube_measures(self, level: int) -> np.ndarray:
        return cube_sums(self.prefix, self.spec, level)

    def integrals(self, f: np.ndarray) -> np.ndarray:
        """``int_R f dsigma`` for every lattice rectangle (packed layout)."""
        return rect_sums(PrefixTable(np.asarray(f) * self.cell_mass), self.spec)

    def lp_norm(self, f: np.ndarray, p: float) -> float:
        return float(np.sum(np.abs(f) ** p * self.cell_mass) ** (1.0 / p))


def lebesgue(spec: LatticeSpec) -> GridWeight:
    return GridWeight(spec, np.full(spec.shape, spec.cell_volume))


def _outer(factors: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.multiply.outer, factors)


def _power_antiderivative(x: np.ndarray, a: float) -> np.ndarray:
    return np.sign(x) * np.abs(x) ** (a + 1) / (a + 1)


def gen_power_weight(spec: LatticeSpec, exponents: Sequence[float] | float) -> GridWeight:
    """Product weight ``prod_j |x_j|**a_j`` with exact per-cell masses."""
    if np.isscalar(exponents):
        exponents = [float(exponents)] * spec.d
    if len(exponents) != spec.d:
        raise ValueError(f"need {spec.d} exponents, got {len(exponents)}")
    factors = []
    for axis, a in enumerate(exponents):
        if a <= -1:
            raise ValueError(f"|x|**{a} is not locally integrable (need a > -1)")
        F = _power_antiderivative(spec.cell_edges(axis), a)
        factors.append(np.diff(F))
    return GridWeight(spec, _outer(factors))


def cascade_masses_1d(depth: int, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Finest-cell masses of a unit-mass binary cascade with splits in ``[delta, 1-delta]``."""
    mass = np.ones(1)
    for _ in range(depth):
        theta = rng.uniform(delta, 1.0 - delta, size=mass.shape)
        left = mass * theta
        mass = np.stack([left, mass - left], axis=1).ravel()
    return mass


def gen_cascade_weight(spec: LatticeSpec, delta: float, seed=None) -> GridWeight:
    """Product of independent per-axis random cascades.

    Every dyadic bisection along an axis keeps at most ``1 - delta`` of the
    mass in either half, so the dyadic reverse-doubling constant is at least
    ``1 / (1 - delta)``.
    """
    if not 0 < delta <= 0.5:
        raise ValueError(f"delta must lie in (0, 1/2], got {delta}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return GridWeight(spec, _outer([cascade_masses_1d(spec.L, delta, rng) for _ in range(spec.d)]))


# -- reverse doubling ----------------------------------------------------------


@dataclass(frozen=True)
class ReverseDoublingReport:
    beta_hat: float
    witness: tuple | None  # (parent, half) as DyadicRect pair or cell boxes
    axis: int | None
    scan: str

    @property
    def reverse_doubling(self) -> bool:
        return self.beta_hat > 1.0


def _dyadic_scan(w: GridWeight):
    spec = w.spec
    S = w.rect_measures
    parents = np.arange((1 << spec.L) - 1)
    best = (math.inf, None, None)
    for j in range(spec.d):
        par = np.take(S, parents, axis=j)
        for offset in (1, 2):
            half = np.take(S, 2 * parents + offset, axis=j)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(par > 0, par / half, np.inf)
            pos = np.unravel_index(np.argmin(ratio), ratio.shape)
            if ratio[pos] < best[0]:
                rect = list(pos)
                rect[j] = parents[pos[j]]
                child = list(rect)
                child[j] = 2 * rect[j] + offset
                best = (float(ratio[pos]), (rect_at(rect), rect_at(child)), j)
    return best


def _all_intervals(n: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.triu_indices(n + 1, k=1)
    return a, b


def _grid_scan(w: GridWeight, max_boxes: int):
    spec = w.spec
    lo, hi = _all_intervals(spec.n)
    even = (hi - lo) % 2 == 0
    elo, ehi = lo[even], hi[even]
    mid = (elo + ehi) // 2
    count = len(elo) * len(lo) ** (spec.d - 1)
    if count > max_boxes:
        raise ValueError(f"grid-aligned scan needs {count} boxes, cap is {max_boxes}")
    best = (math.inf, None, None)
    for j in range(spec.d):
        def ranges(a, b):
            return [(a, b) if axis == j else (lo, hi) for axis in range(spec.d)]

        par = w.prefix.box_sums(ranges(elo, ehi))
        for half_lo, half_hi in ((elo, mid), (mid, ehi)):
            half = w.prefix.box_sums(ranges(half_lo, half_hi))
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(par > 0, par / half, np.inf)
            pos = np.unravel_index(np.argmin(ratio), ratio.shape)
            if ratio[pos] < best[0]:
                box = [(int(lo[p]), int(hi[p])) for p in pos]
                hbox = list(box)
                box[j] = (int(elo[pos[j]]), int(ehi[pos[j]]))
                hbox[j] = (int(half_lo[pos[j]]), int(half_hi[pos[j]]))
                best = (float(ratio[pos]), (tuple(box), tuple(hbox)), j)
    return best


def reverse_doubling_beta(w: GridWeight, scan: str = "dyadic", max_boxes: int = 20_000_000) -> ReverseDoublingReport:
    """Smallest ``sigma(R) / sigma(R')`` over bisections ``R'`` of scanned boxes ``R``.

    ``scan="dyadic"`` covers every lattice rectangle; ``scan="grid"`` covers
    every box with corners on the finest grid whose bisected side has an even
    number of cells. Pairs with ``sigma(R) = 0`` are skipped.
    """
    if scan == "dyadic":
        beta, witness, axis = _dyadic_scan(w)
    elif scan == "grid":
        beta, witness, axis = _grid_scan(w, max_boxes)
    else:
        raise ValueError(f"unknown scan {scan!r} (use 'dyadic' or 'grid')")
    return ReverseDoublingReport(beta, witness, axis, scan)


# -- weight files ------------------------------------------------------------------

ORDERING = "row-major finest cells"


def save_weight(w: GridWeight, path: str | Path, binary: bool = False) -> None:
    """Write a weight file: JSON header plus masses inline or in a sibling ``.bin``."""
    path = Path(path)
    header = {
        "schema": 1,
        "d": w.spec.d,
        "L": w.spec.L,
        "root": {"origin": list(w.spec.origin), "sides": list(w.spec.sides)},
        "ordering": ORDERING,
        "dtype": "float64",
    }
    if binary:
        data = path.with_suffix(".bin")
        w.cell_mass.astype("<f8").tofile(data)
        header["data_file"] = data.name
    else:
        header["masses"] = w.cell_mass.ravel().tolist()
    path.write_text(json.dumps(header))


def load_weight(path: str | Path) -> GridWeight:
    path = Path(path)
    header = json.loads(path.read_text())
    if header.get("ordering", ORDERING) != ORDERING:
        raise ValueError(f"unsupported cell ordering {header['ordering']!r}")
    root = header.get("root", {})
    spec = LatticeSpec(header["d"], header["L"], tuple(root.get("origin", ())), tuple(root.get("sides", ())))
    if "data_file" in header:
        masses = np.fromfile(path.parent / header["data_file"], dtype="<f8")
    else:
        masses = np.asarray(header["masses"], dtype=np.float64)
    if masses.size != math.prod(spec.shape):
        raise ValueError(f"{path}: expected {math.prod(spec.shape)} masses, found {masses.size}")
    return GridWeight(spec, masses.reshape(spec.shape))
