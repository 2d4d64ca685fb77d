"""Strong positive dyadic operators and the strong fractional integral.

``T_K`` integrates its arguments against Lebesgue measure; the weights
``sigma_i`` and ``omega`` only enter through norms and testing constants.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedding import ExponentTuple, KernelMap, estimate_c1_lower, testing_constant
from .lattice import (
    Box,
    DyadicRect,
    LatticeSpec,
    axis_nodes,
    dilated_axis_nodes,
    packed_position,
    rect_at,
    scatter_to_cells,
)
from .prefix import PrefixTable
from .weights import GridWeight

__all__ = [
    "FractionalKernelSpec",
    "InvalidExponent",
    "DualityReport",
    "lebesgue_integrals",
    "apply_TK",
    "pairing_form",
    "pairing_direct",
    "dual_weight_norm",
    "corollary_testing_constant",
    "corollary_indicator_bound",
    "duality_reduction_check",
    "apply_I_alpha_discrete",
    "apply_I_alpha_direct",
    "hls_exponent",
    "prop51_testing_constant",
]


def lebesgue_integrals(h: np.ndarray, spec: LatticeSpec, dilation: float = 1.0) -> np.ndarray:
    """``int_{cR} h dx`` for every lattice rectangle, ``cR`` clipped to the root."""
    table = PrefixTable(np.asarray(h, dtype=np.float64) * spec.cell_volume)
    if dilation == 1.0:
        _, _, lo, hi = axis_nodes(spec.L)
    else:
        lo, hi = dilated_axis_nodes(spec.L, float(dilation))
    return table.box_sums([(lo, hi)] * spec.d)


def apply_TK(K: KernelMap, h: Sequence[np.ndarray], dilation: float = 1.0) -> np.ndarray:
    """``T_K(h)(x) = sum_{R containing x} K(R) prod_i int_{cR} h_i dx`` with ``c = dilation``."""
    coeff = K.values
    for hi in h:
        if np.shape(hi) != K.spec.shape:
            raise ValueError(f"function shape {np.shape(hi)} does not match lattice {K.spec.shape}")
        coeff = coeff * lebesgue_integrals(hi, K.spec, dilation)
    return scatter_to_cells(coeff, K.spec.L)


def pairing_form(K: KernelMap, g: np.ndarray, omega: GridWeight, h: Sequence[np.ndarray]) -> float:
    """``sum_R K(R) int_R g domega prod_i int_R h_i dx``."""
    coeff = K.values * omega.integrals(g)
    for hi in h:
        coeff = coeff * lebesgue_integrals(hi, K.spec)
    return float(coeff.sum())


def pairing_direct(K: KernelMap, g: np.ndarray, omega: GridWeight, h: Sequence[np.ndarray]) -> float:
    """``int g T_K(h) domega`` as a cell sum."""
    return float(np.sum(np.asarray(g) * apply_TK(K, h) * omega.cell_mass))


def dual_weight_norm(h: np.ndarray, p: float, sigma: GridWeight) -> float:
    """``||h||_{L^p(sigma**(1-p))}`` with ``sigma`` read as a density."""
    dens = sigma.density
    h = np.abs(np.asarray(h, dtype=np.float64))
    if np.any((dens == 0) & (h > 0)):
        return math.inf
    pos = dens > 0
    terms = h[pos] ** p * dens[pos] ** (1.0 - p) * sigma.spec.cell_volume
    return float(np.sum(terms)) ** (1.0 / p)


def _check_corollary_exponents(p: ExponentTuple, q: float) -> None:
    if not 1 < q < math.inf:
        raise ValueError(f"need 1 < q < inf, got {q}")
    if not p.reciprocal_sum > 1.0 / q:
        raise ValueError(f"need sum 1/p_i > 1/q, got {p.reciprocal_sum} <= {1.0 / q}")


def corollary_testing_constant(
    K: KernelMap, omega: GridWeight, sigma: Sequence[GridWeight], p: ExponentTuple, q: float
) -> tuple[float, DyadicRect | None]:
    """``max_R K(R) omega(R)**(1/q) prod_i sigma_i(R)**(1 - 1/p_i)`` and its witness."""
    _check_corollary_exponents(p, q)
    W = omega.rect_measures
    S = [s.rect_measures for s in sigma]
    pos = (W > 0) & np.all([s > 0 for s in S], axis=0)
    if not np.any(pos):
        return 0.0, None
    val = np.where(pos, K.values, 0.0) * np.where(pos, W, 0.0) ** (1.0 / q)
    for s, pi in zip(S, p.p):
        val = val * np.where(pos, s, 0.0) ** (1.0 - 1.0 / pi)
    val = np.where(pos, val, -math.inf)
    at = np.unravel_index(np.argmax(val), val.shape)
    return float(val[at]), rect_at(at)


def _lq_norm(T: np.ndarray, q: float, omega: GridWeight) -> float:
    return float(np.sum(np.abs(T) ** q * omega.cell_mass)) ** (1.0 / q)


def corollary_indicator_bound(
    K: KernelMap, omega: GridWeight, sigma: Sequence[GridWeight], p: ExponentTuple, q: float,
    rects: Sequence[DyadicRect],
) -> list[tuple[float, float]]:
    """For each ``R``: the operator ratio at ``h_i = 1_R sigma_i`` and the testing value at ``R``.

    The first never falls below the second.
    """
    spec = K.spec
    out = []
    for rect in rects:
        pos = packed_position(rect)
        h = []
        for s in sigma:
            hi = np.zeros(spec.shape)
            hi[rect.slices(spec.L)] = s.density[rect.slices(spec.L)]
            h.append(hi)
        norms = math.prod(dual_weight_norm(hi, pi, s) for hi, pi, s in zip(h, p.p, sigma))
        ratio = _lq_norm(apply_TK(K, h), q, omega) / norms if norms > 0 else 0.0
        test = K.values[pos] * omega.rect_measures[pos] ** (1.0 / q)
        for s, pi in zip(sigma, p.p):
            test *= s.rect_measures[pos] ** (1.0 - 1.0 / pi)
        out.append((ratio, float(test)))
    return out


@dataclass(frozen=True)
class DualityReport:
    """Checks of the reduction from the operator bound to an (n+1)-linear embedding.

    ``scan_gap``: relative gap between the (n+1)-linear testing constant with
    exponents ``(q', p_1, ...)`` and the corollary testing constant.
    ``pairing_gap``: worst relative gap between pairing and direct forms.
    ``norm_gap``: worst relative gap in ``||f_i sigma_i||_{L^p_i(sigma_i^(1-p_i))} = ||f_i||_{L^p_i(sigma_i)}``.
    ``operator_ratio`` at ``h_i = f_i* sigma_i`` must not fall below ``c1_lower``.
    """

    corollary_c2: float
    embedding_c2: float
    scan_gap: float
    pairing_gap: float
    norm_gap: float
    c1_lower: float
    operator_ratio: float

    @property
    def ok(self) -> bool:
        return (
            self.scan_gap <= 1e-12
            and self.pairing_gap <= 1e-12
            and self.norm_gap <= 1e-12
            and self.operator_ratio >= self.c1_lower * (1 - 1e-9)
        )


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def duality_reduction_check(
    K: KernelMap,
    omega: GridWeight,
    sigma: Sequence[GridWeight],
    p: ExponentTuple,
    q: float,
    instances: int = 10,
    seed=0,
    starts: int = 3,
) -> DualityReport:
    _check_corollary_exponents(p, q)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    spec = K.spec
    qc = q / (q - 1.0)
    wider = ExponentTuple((qc,) + p.p)
    weights = [omega, *sigma]

    c2_cor, _ = corollary_testing_constant(K, omega, sigma, p, q)
    c2_emb, _ = testing_constant(K, weights, wider)

    pairing_gap = 0.0
    norm_gap = 0.0
    for _ in range(instances):
        g = rng.random(spec.shape)
        f = [rng.random(spec.shape) for _ in sigma]
        h = [fi * s.density for fi, s in zip(f, sigma)]
        pairing_gap = max(pairing_gap, _rel(pairing_form(K, g, omega, h), pairing_direct(K, g, omega, h)))
        for hi, fi, pi, s in zip(h, f, p.p, sigma):
            norm_gap = max(norm_gap, _rel(dual_weight_norm(hi, pi, s), s.lp_norm(fi, pi)))

    ascent = estimate_c1_lower(K, weights, wider, starts=starts, seed=rng)
    h = [fi * s.density for fi, s in zip(ascent.f[1:], sigma)]
    norms = math.prod(dual_weight_norm(hi, pi, s) for hi, pi, s in zip(h, p.p, sigma))
    ratio = _lq_norm(apply_TK(K, h), q, omega) / norms if norms > 0 else 0.0
    return DualityReport(c2_cor, c2_emb, _rel(c2_cor, c2_emb), pairing_gap, norm_gap, ascent.value, ratio)


# -- strong fractional integral --------------------------------------------------------


@dataclass(frozen=True)
class FractionalKernelSpec:
    """``K_alpha(R) = |R|**(alpha/d - n)`` for the n-linear strong fractional integral."""

    alpha: float
    n: int
    d: int

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("need n >= 1 and d >= 1")
        if not 0 < self.alpha < self.d * self.n:
            raise ValueError(f"need 0 < alpha < d*n = {self.d * self.n}, got {self.alpha}")

    @property
    def gamma(self) -> float:
        return self.alpha / self.d - self.n

    def kernel(self, spec: LatticeSpec) -> KernelMap:
        if spec.d != self.d:
            raise ValueError(f"kernel is {self.d}-dimensional, lattice is {spec.d}-dimensional")
        return KernelMap.volume_power(spec, self.gamma)


def apply_I_alpha_discrete(fk: FractionalKernelSpec, f: Sequence[np.ndarray], spec: LatticeSpec) -> np.ndarray:
    """``sum_{R containing x} |R|**(alpha/d - n) prod_i int_{3R} f_i dx`` on cells."""
    if len(f) != fk.n:
        raise ValueError(f"need {fk.n} functions, got {len(f)}")
    if any(np.any(np.asarray(fi) < 0) for fi in f):
        raise ValueError("functions must be nonnegative")
    return apply_TK(fk.kernel(spec), f, dilation=3.0)


def apply_I_alpha_direct(
    fk: FractionalKernelSpec, f: Sequence[np.ndarray], spec: LatticeSpec, max_cells: int = 4096
) -> np.ndarray:
    """Midpoint quadrature of the defining integral at every cell center.

    The kernel is a product over axes of ``max_i |x_j - y_ij|**(alpha/d - n)``;
    tuples with a zero factor (all ``y_ij`` at the center coordinate of ``x``
    on some axis) are dropped. Cost grows like ``cells**(n+1)`` before
    contraction, hence the ``max_cells`` guard.
    """
    if len(f) != fk.n:
        raise ValueError(f"need {fk.n} functions, got {len(f)}")
    if spec.d != fk.d:
        raise ValueError("lattice dimension does not match the kernel")
    if math.prod(spec.shape) > max_cells:
        raise ValueError(f"direct quadrature capped at {max_cells} cells, lattice has {math.prod(spec.shape)}")
    if fk.n * spec.d + spec.d > len(string.ascii_letters):
        raise ValueError("too many einsum indices")
    n, d = fk.n, spec.d
    letters = iter(string.ascii_letters)
    xs = [next(letters) for _ in range(d)]
    ys = [[next(letters) for _ in range(d)] for _ in range(n)]
    operands, subscripts = [], []
    for fi, yi in zip(f, ys):
        operands.append(np.asarray(fi, dtype=np.float64) * spec.cell_volume)
        subscripts.append("".join(yi))
    for j in range(d):
        c = spec.cell_centers(j)
        grids = np.meshgrid(*([c] * (n + 1)), indexing="ij")
        dist = np.max([np.abs(grids[0] - y) for y in grids[1:]], axis=0)
        with np.errstate(divide="ignore"):
            kern = np.where(dist > 0, dist ** fk.gamma, 0.0)
        operands.append(kern)
        subscripts.append(xs[j] + "".join(yi[j] for yi in ys))
    expr = ",".join(subscripts) + "->" + "".join(xs)
    return np.einsum(expr, *operands, optimize="optimal")


@dataclass(frozen=True)
class InvalidExponent:
    """Exponent data for which no admissible ``q`` exists."""

    constraint: str
    reciprocal_q: float

    def __bool__(self):
        return False


def hls_exponent(alpha: float, d: int, p: Sequence[float]) -> float | InvalidExponent:
    """``q`` with ``1/q = sum 1/p_i - alpha/d``, or :class:`InvalidExponent` if ``q`` is not in (1, inf)."""
    p = ExponentTuple(tuple(p))
    if not 0 < alpha < d * p.n:
        raise ValueError(f"need 0 < alpha < d*n = {d * p.n}, got {alpha}")
    inv_q = p.reciprocal_sum - alpha / d
    if inv_q <= 0:
        return InvalidExponent("1 < q < inf (q = inf or negative)", inv_q)
    if inv_q >= 1:
        return InvalidExponent("1 < q < inf (q <= 1)", inv_q)
    return 1.0 / inv_q


def _all_intervals(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n + 1, k=1)


def prop51_testing_constant(
    fk: FractionalKernelSpec,
    omega: GridWeight,
    sigma: Sequence[GridWeight],
    p: ExponentTuple,
    q: float,
    scan: str = "dyadic",
    max_boxes: int = 20_000_000,
) -> tuple[float, DyadicRect | Box | None]:
    """Corollary testing constant for ``K_alpha``, over lattice rectangles or all grid boxes."""
    spec = omega.spec
    if scan == "dyadic":
        return corollary_testing_constant(fk.kernel(spec), omega, sigma, p, q)
    if scan != "grid":
        raise ValueError(f"unknown scan {scan!r} (use 'dyadic' or 'grid')")
    _check_corollary_exponents(p, q)
    lo, hi = _all_intervals(spec.n)
    if len(lo) ** spec.d > max_boxes:
        raise ValueError(f"grid scan needs {len(lo) ** spec.d} boxes, cap is {max_boxes}")
    ranges = [(lo, hi)] * spec.d
    W = omega.prefix.box_sums(ranges)
    S = [s.prefix.box_sums(ranges) for s in sigma]
    vol = np.ones(())
    for side in spec.cell_sides:
        vol = np.multiply.outer(vol, (hi - lo) * side)
    pos = (W > 0) & np.all([s > 0 for s in S], axis=0)
    if not np.any(pos):
        return 0.0, None
    val = np.where(pos, vol, 1.0) ** fk.gamma * np.where(pos, W, 0.0) ** (1.0 / q)
    for s, pi in zip(S, p.p):
        val = val * np.where(pos, s, 0.0) ** (1.0 - 1.0 / pi)
    val = np.where(pos, val, -math.inf)
    at = np.unravel_index(np.argmax(val), val.shape)
    return float(val[at]), tuple((int(lo[i]), int(hi[i])) for i in at)
