"""Carleson embedding over dyadic rectangles and its per-axis testing condition.

The dimension induction behind the rectangle embedding is not run as an
algorithm. Its content is exposed as grid identities and inequalities
(:func:`slice_weight`, :func:`slice_inheritance`, :func:`reduction_chain`)
that can be checked on concrete weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .carleson import carleson_lhs, check_exponents
from .lattice import DyadicInterval, DyadicRect, LatticeSpec, rect_at
from .weights import GridWeight

__all__ = [
    "rect_carleson_lhs",
    "slice_testing_constant",
    "subtree_sums",
    "rd_geometric_bound",
    "slice_weight",
    "integrated_slice",
    "frozen_slice",
    "slice_inheritance",
    "reduction_chain",
    "ReductionChain",
]


def rect_carleson_lhs(sigma: GridWeight, f: np.ndarray, p: float, q: float) -> float:
    """``sum_R sigma(R)**(q/p) * (avg_R^sigma f)**q`` over all lattice rectangles."""
    check_exponents(p, q)
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    S = sigma.rect_measures
    A = sigma.integrals(f)
    pos = S > 0
    return float(np.sum(S[pos] ** (q / p) * (A[pos] / S[pos]) ** q))


def subtree_sums(values: np.ndarray, axis: int, depth: int) -> np.ndarray:
    """For packed ``values``, sum each node's dyadic subtree along ``axis``."""
    out = np.array(values, dtype=np.float64, copy=True)
    view = np.moveaxis(out, axis, 0)
    for k in range(depth - 1, -1, -1):
        nodes = slice((1 << k) - 1, (1 << (k + 1)) - 1)
        kids = np.arange((1 << (k + 1)) - 1, (1 << (k + 2)) - 1)
        view[nodes] += view[kids[0::2]] + view[kids[1::2]]
    return out


def slice_testing_constant(sigma: GridWeight, r: float) -> tuple[float, DyadicRect, int]:
    """Best ``c`` in ``sum_{I in P_j(R)} sigma([R; I, j])**r <= c sigma(R)**r``.

    Returns ``(c, R, j)`` for the maximizing rectangle and axis. Inner sums
    run bottom-up along axis ``j`` with the other axes frozen.
    """
    if not r > 1:
        raise ValueError(f"need r = q/p > 1, got {r}")
    S = sigma.rect_measures
    own = S**r
    best = (-math.inf, None, None)
    for j in range(sigma.spec.d):
        inner = subtree_sums(own, j, sigma.spec.L)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(S > 0, inner / own, -math.inf)
        pos = np.unravel_index(np.argmax(ratio), ratio.shape)
        if ratio[pos] > best[0]:
            best = (float(ratio[pos]), rect_at(pos), j)
    return best


def rd_geometric_bound(beta: float, r: float) -> float:
    """``sum_k beta**(-k (r-1)) = 1 / (1 - beta**(1-r))``.

    Any weight with reverse-doubling constant ``beta`` satisfies the slice
    testing condition at exponent ``r`` with at most this constant.
    """
    if not beta > 1:
        raise ValueError(f"reverse doubling constant must exceed 1, got {beta}")
    if not r > 1:
        raise ValueError(f"need r > 1, got {r}")
    if math.isinf(beta):
        return 1.0
    return 1.0 / (1.0 - beta ** (1.0 - r))


def _axis(spec: LatticeSpec, axis: int) -> int:
    if spec.d < 2:
        raise ValueError("slices need a lattice of dimension >= 2")
    if not -spec.d <= axis < spec.d:
        raise ValueError(f"axis {axis} out of range")
    return axis % spec.d


def integrated_slice(sigma: GridWeight, interval: DyadicInterval, axis: int = -1) -> GridWeight:
    """``v_I(xbar) = int_I sigma(xbar, x) dx``: the weight integrated over ``interval`` on ``axis``."""
    spec = sigma.spec
    axis = _axis(spec, axis)
    lo, hi = interval.cells(spec.L)
    mass = np.take(sigma.cell_mass, np.arange(lo, hi), axis=axis).sum(axis=axis)
    rest = [a for a in range(spec.d) if a != axis]
    return GridWeight(spec.with_dims(rest), mass)


def frozen_slice(sigma: GridWeight, column: tuple[int, ...], axis: int = -1) -> GridWeight:
    """``v_xbar(x) = sigma(xbar, x)``: the 1-D masses of one cell column along ``axis``."""
    spec = sigma.spec
    axis = _axis(spec, axis)
    if len(column) != spec.d - 1:
        raise ValueError(f"column needs {spec.d - 1} cell coordinates")
    index = list(column)
    index.insert(axis, slice(None))
    return GridWeight(spec.with_dims([axis]), sigma.cell_mass[tuple(index)])


def slice_weight(sigma: GridWeight, mode: str, data, axis: int = -1) -> GridWeight:
    """Dispatch on ``mode``: ``"integrated"`` takes an interval, ``"frozen"`` a column."""
    if mode == "integrated":
        return integrated_slice(sigma, data, axis)
    if mode == "frozen":
        return frozen_slice(sigma, tuple(data), axis)
    raise ValueError(f"unknown slice mode {mode!r}")


def slice_inheritance(sigma: GridWeight, r: float, axis: int = -1) -> float:
    """Largest slice testing constant among the integrated slices ``v_I`` along ``axis``.

    Never exceeds the slice testing constant of ``sigma`` itself.
    """
    spec = sigma.spec
    axis = _axis(spec, axis)
    worst = -math.inf
    for k in range(spec.L + 1):
        for i in range(1 << k):
            mass = np.take(sigma.cell_mass, np.arange(*DyadicInterval(k, i).cells(spec.L)), axis=axis)
            if not mass.sum() > 0:
                continue
            v = integrated_slice(sigma, DyadicInterval(k, i), axis)
            worst = max(worst, slice_testing_constant(v, r)[0])
    return worst


@dataclass(frozen=True)
class ReductionChain:
    """Quantities along the dimension-reduction chain for one ``(sigma, f)``.

    ``lhs == grouped`` (regrouping by the last-axis interval), and
    ``minkowski_left <= minkowski_right`` (Minkowski in ``l^(q/p)``);
    ``column_sums`` recomputes ``minkowski_right`` as a sum over cell
    columns of one-dimensional Carleson sums raised to ``p/q``.
    """

    lhs: float
    grouped: float
    minkowski_left: float
    minkowski_right: float
    column_sums: float
    norm_p: float


def reduction_chain(sigma: GridWeight, f: np.ndarray, p: float, q: float, axis: int = -1) -> ReductionChain:
    check_exponents(p, q)
    spec = sigma.spec
    axis = _axis(spec, axis)
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    s = q / p
    fmass = np.moveaxis(f * sigma.cell_mass, axis, -1)
    mass = np.moveaxis(sigma.cell_mass, axis, -1)
    rest = spec.with_dims([a for a in range(spec.d) if a != axis])

    grouped = 0.0
    left = 0.0
    right_terms = np.zeros(mass.shape[:-1])
    for k in range(spec.L + 1):
        for i in range(1 << k):
            lo, hi = DyadicInterval(k, i).cells(spec.L)
            v = mass[..., lo:hi].sum(axis=-1)
            a = fmass[..., lo:hi].sum(axis=-1)
            avg = np.divide(a, v, out=np.zeros_like(a), where=v > 0)
            if v.sum() > 0:
                grouped += rect_carleson_lhs(GridWeight(rest, v), avg, p, q)
            left += float(np.sum(avg**p * v)) ** s
            right_terms += avg**q * v**s

    fcol = np.moveaxis(f, axis, -1)
    columns = []
    for idx in np.ndindex(*mass.shape[:-1]):
        col = mass[idx]
        if col.sum() > 0:
            one = GridWeight(spec.with_dims([axis]), col)
            columns.append(carleson_lhs(one, fcol[idx], p, q) ** (1.0 / s))
    return ReductionChain(
        lhs=rect_carleson_lhs(sigma, f, p, q),
        grouped=grouped,
        minkowski_left=left ** (1.0 / s),
        minkowski_right=float(np.sum(right_terms ** (1.0 / s))),
        column_sums=math.fsum(columns),
        norm_p=float(np.sum(f**p * sigma.cell_mass)),
    )
