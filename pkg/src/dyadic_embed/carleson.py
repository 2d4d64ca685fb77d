"""Carleson embedding for dyadic cubes.

Cubes here have one level shared by all axes. Every routine is restricted to
the dyadic sub-cubes of a top cube ``Q0`` (the root box by default) and skips
cubes of zero ``sigma``-measure, whose embedding terms vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .lattice import DyadicInterval, DyadicRect, LatticeSpec
from .prefix import PrefixTable
from .weights import GridWeight

__all__ = [
    "PrincipalFamily",
    "carleson_lhs",
    "carleson_testing_constant",
    "principal_cubes",
    "stopping_parent",
    "dyadic_maximal",
    "carleson_ratio",
    "check_exponents",
]


def check_exponents(p: float, q: float) -> None:
    if not 1 < p < q < math.inf:
        raise ValueError(f"need 1 < p < q < inf, got p={p}, q={q}")


def _top(spec: LatticeSpec, q0: DyadicRect | None) -> DyadicRect:
    if q0 is None:
        return spec.root()
    spec.check_rect(q0)
    if not q0.is_cube():
        raise ValueError(f"{q0} is not a dyadic cube")
    return q0


def _levels(table: PrefixTable, spec: LatticeSpec, q0: DyadicRect) -> list[np.ndarray]:
    """Sums over the sub-cubes of ``q0``, one array per level below it."""
    k0 = q0.levels[0]
    out = []
    for k in range(k0, spec.L + 1):
        width = 1 << (spec.L - k)
        ranges = []
        for i0 in q0.indices:
            lo = (i0 << (k - k0)) + np.arange(1 << (k - k0))
            ranges.append((lo * width, (lo + 1) * width))
        out.append(table.box_sums(ranges))
    return out


def _cube(q0: DyadicRect, k: int, local: tuple[int, ...]) -> DyadicRect:
    k0 = q0.levels[0]
    return DyadicRect(tuple(DyadicInterval(k, (i0 << (k - k0)) + i) for i0, i in zip(q0.indices, local)))


def _child_sum(a: np.ndarray) -> np.ndarray:
    """Sum each block of ``2**d`` children onto its parent cube."""
    d = a.ndim
    shape = []
    for s in a.shape:
        shape += [s // 2, 2]
    return a.reshape(shape).sum(axis=tuple(range(1, 2 * d, 2)))


def _upsample(a: np.ndarray) -> np.ndarray:
    for axis in range(a.ndim):
        a = np.repeat(a, 2, axis=axis)
    return a


def carleson_lhs(sigma: GridWeight, f: np.ndarray, p: float, q: float, q0: DyadicRect | None = None) -> float:
    """``sum_Q sigma(Q)**(q/p) * (avg_Q^sigma f)**q`` over sub-cubes ``Q`` of ``q0``."""
    check_exponents(p, q)
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    q0 = _top(sigma.spec, q0)
    s_levels = _levels(sigma.prefix, sigma.spec, q0)
    a_levels = _levels(PrefixTable(f * sigma.cell_mass), sigma.spec, q0)
    total = 0.0
    for s, a in zip(s_levels, a_levels):
        pos = s > 0
        total += float(np.sum(s[pos] ** (q / p) * (a[pos] / s[pos]) ** q))
    return total


def carleson_testing_constant(sigma: GridWeight, r: float, q0: DyadicRect | None = None) -> tuple[float, DyadicRect]:
    """Best ``c`` in ``sum_{Q' in Q} sigma(Q')**r <= c sigma(Q)**r``, with its witness cube.

    One bottom-up pass: the inner sum of a cube is its own term plus the
    inner sums of its ``2**d`` children.
    """
    if not r > 1:
        raise ValueError(f"need r = q/p > 1, got {r}")
    q0 = _top(sigma.spec, q0)
    k0 = q0.levels[0]
    s_levels = _levels(sigma.prefix, sigma.spec, q0)
    best, witness = -math.inf, None
    inner = None
    for depth in range(len(s_levels) - 1, -1, -1):
        s = s_levels[depth]
        own = s**r
        inner = own if inner is None else own + _child_sum(inner)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(s > 0, inner / own, -math.inf)
        pos = np.unravel_index(np.argmax(ratio), ratio.shape)
        if ratio[pos] > best:
            best = float(ratio[pos])
            witness = _cube(q0, k0 + depth, tuple(int(x) for x in pos))
    return best, witness


@dataclass
class PrincipalFamily:
    """Principal cubes of ``(f, sigma)`` below ``q0`` and their stopping data.

    ``cubes[0]`` is ``q0``; ``owner[t]`` maps every sub-cube at level
    ``level(q0) + t`` to the id of its stopping parent.
    """

    spec: LatticeSpec
    q0: DyadicRect
    cubes: list[DyadicRect]
    generation: list[int]
    parent: list[int | None]
    owner: list[np.ndarray]
    masks: list[np.ndarray] = field(repr=False)
    sparsity: list[float]
    degenerate: bool = False

    @property
    def generations(self) -> list[list[DyadicRect]]:
        out: list[list[DyadicRect]] = [[] for _ in range(max(self.generation) + 1)]
        for cube, g in zip(self.cubes, self.generation):
            out[g].append(cube)
        return out

    def stopping_children(self, fid: int) -> list[int]:
        return [i for i, par in enumerate(self.parent) if par == fid]

    @property
    def min_sparsity(self) -> float:
        return min(self.sparsity)

    def masks_disjoint(self) -> bool:
        cover = np.zeros(self.spec.shape, dtype=np.int64)
        for m in self.masks:
            cover += m
        return bool(cover.max() <= 1)

    def sparse(self, sigma: GridWeight) -> bool:
        """Exact check of ``sigma(E(F)) >= sigma(F)/2`` for every member.

        Both sides are correctly rounded cell sums, and rounding is monotone,
        so the float comparison agrees with the exact one.
        """
        for cube, mask in zip(self.cubes, self.masks):
            e = math.fsum(sigma.cell_mass[mask])
            full = math.fsum(sigma.cell_mass[cube.slices(self.spec.L)].ravel())
            if 2.0 * e < full:
                return False
        return True


def _exact_sum(values: np.ndarray, mass: np.ndarray) -> Fraction:
    return sum((Fraction(float(v)) * Fraction(float(m)) for v, m in zip(values.ravel(), mass.ravel())), Fraction(0))


def _exceeds_twice(f, mass, q: DyadicRect, fcube: DyadicRect, depth: int) -> bool:
    """Exact ``avg_Q > 2 avg_F`` for near-ties the float test cannot settle."""
    sq, sf = q.slices(depth), fcube.slices(depth)
    aq, mq = _exact_sum(f[sq], mass[sq]), _exact_sum(np.ones_like(mass[sq]), mass[sq])
    af, mf = _exact_sum(f[sf], mass[sf]), _exact_sum(np.ones_like(mass[sf]), mass[sf])
    return aq * mf > 2 * af * mq


def principal_cubes(f: np.ndarray, sigma: GridWeight, q0: DyadicRect | None = None) -> PrincipalFamily:
    """Stopping family whose members' children more than double the ``sigma``-average of ``f``.

    Built top-down: a cube becomes principal when its average strictly
    exceeds twice the average of the principal cube owning its parent. This
    selects exactly the maximal such cubes inside each member.
    """
    spec = sigma.spec
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    q0 = _top(spec, q0)
    k0 = q0.levels[0]
    mass = sigma.cell_mass
    s_levels = _levels(sigma.prefix, spec, q0)
    a_levels = _levels(PrefixTable(f * mass), spec, q0)

    cubes, generation, parent = [q0], [0], [None]
    owner = [np.zeros((1,) * spec.d, dtype=np.int64)]
    degenerate = not (s_levels[0].item() > 0 and a_levels[0].item() > 0)
    if degenerate:
        for t in range(1, len(s_levels)):
            owner.append(np.zeros(s_levels[t].shape, dtype=np.int64))
    else:
        favg = [a_levels[0].item() / s_levels[0].item()]
        for t in range(1, len(s_levels)):
            s, a = s_levels[t], a_levels[t]
            own = _upsample(owner[-1])
            with np.errstate(divide="ignore", invalid="ignore"):
                avg = np.where(s > 0, a / s, 0.0)
            ref = 2.0 * np.asarray(favg)[own]
            hit = (s > 0) & (avg > ref)
            near = (s > 0) & (np.abs(avg - ref) <= 1e-12 * np.maximum(avg, ref))
            for pos in zip(*np.nonzero(near)):
                cube = _cube(q0, k0 + t, tuple(int(x) for x in pos))
                hit[pos] = _exceeds_twice(f, mass, cube, cubes[own[pos]], spec.L)
            own = own.copy()
            for pos in zip(*np.nonzero(hit)):
                fid = len(cubes)
                par = int(own[pos])
                cubes.append(_cube(q0, k0 + t, tuple(int(x) for x in pos)))
                generation.append(generation[par] + 1)
                parent.append(par)
                favg.append(float(avg[pos]))
                own[pos] = fid
            owner.append(own)

    kids: list[list[int]] = [[] for _ in cubes]
    for cid, par in enumerate(parent):
        if par is not None:
            kids[par].append(cid)
    masks, sparsity = [], []
    for fid, cube in enumerate(cubes):
        mask = np.zeros(spec.shape, dtype=bool)
        mask[cube.slices(spec.L)] = True
        for cid in kids[fid]:
            mask[cubes[cid].slices(spec.L)] = False
        masks.append(mask)
        full = math.fsum(mass[cube.slices(spec.L)].ravel())
        sparsity.append(math.fsum(mass[mask]) / full if full > 0 else 1.0)
    return PrincipalFamily(spec, q0, cubes, generation, parent, owner, masks, sparsity, degenerate)


def stopping_parent(q: DyadicRect, family: PrincipalFamily) -> DyadicRect:
    """Smallest member of the family containing ``q``."""
    if not q.is_cube() or not family.q0.contains(q):
        raise ValueError(f"{q} is not a dyadic sub-cube of {family.q0}")
    k0 = family.q0.levels[0]
    t = q.levels[0] - k0
    local = tuple(i - (i0 << t) for i, i0 in zip(q.indices, family.q0.indices))
    return family.cubes[int(family.owner[t][local])]


def dyadic_maximal(f: np.ndarray, sigma: GridWeight, q0: DyadicRect | None = None) -> np.ndarray:
    """Dyadic maximal function of ``f`` w.r.t. ``sigma`` over sub-cubes of ``q0``.

    Returned on the full cell grid; cells outside ``q0`` are 0.
    """
    spec = sigma.spec
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    q0 = _top(spec, q0)
    s_levels = _levels(sigma.prefix, spec, q0)
    a_levels = _levels(PrefixTable(f * sigma.cell_mass), spec, q0)
    running = None
    for s, a in zip(s_levels, a_levels):
        with np.errstate(divide="ignore", invalid="ignore"):
            avg = np.where(s > 0, a / s, -math.inf)
        running = avg if running is None else np.maximum(_upsample(running), avg)
    out = np.zeros(spec.shape)
    out[q0.slices(spec.L)] = np.where(np.isfinite(running), running, 0.0)
    return out


def carleson_ratio(sigma: GridWeight, f: np.ndarray, p: float, q: float) -> float:
    """``lhs / (c2 * ||f||_p**q)``: the constant the sufficiency direction must bound."""
    c2, _ = carleson_testing_constant(sigma, q / p)
    norm = float(np.sum(np.asarray(f) ** p * sigma.cell_mass))
    return carleson_lhs(sigma, f, p, q) / (c2 * norm ** (q / p))
