"""The n-linear embedding sum over dyadic rectangles and its testing constant.

The best constant ``c1`` in

    sum_R K(R) prod_i |int_R f_i dsigma_i| <= c1 prod_i ||f_i||_{L^p_i(sigma_i)}

is bracketed from below by alternating Hoelder-dual ascent and from above
(up to Carleson constants) by the testing constant ``c2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lattice import DyadicRect, LatticeSpec, axis_nodes, enumeration_order, packed_position, rect_at, scatter_to_cells
from .rect_carleson import rd_geometric_bound, rect_carleson_lhs, slice_testing_constant
from .weights import GridWeight, reverse_doubling_beta

__all__ = [
    "ExponentTuple",
    "KernelMap",
    "DualStep",
    "AscentResult",
    "NecessityReport",
    "HolderCertificate",
    "nlinear_lhs",
    "testing_constant",
    "potential_g",
    "holder_dual_step",
    "estimate_c1_lower",
    "verify_theorem_necessity",
    "holder_certificate",
]


@dataclass(frozen=True)
class ExponentTuple:
    p: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if not p:
            raise ValueError("need at least one exponent")
        for x in p:
            if not 1 < x < math.inf:
                raise ValueError(f"exponents must lie in (1, inf), got {x}")
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def conjugates(self) -> tuple[float, ...]:
        return tuple(x / (x - 1) for x in self.p)

    @property
    def reciprocal_sum(self) -> float:
        return math.fsum(1.0 / x for x in self.p)

    @property
    def super_dual(self) -> bool:
        return self.reciprocal_sum > 1

    @property
    def aux_q(self) -> tuple[float, ...]:
        """Exponents ``q_i > p_i`` with ``sum 1/q_i = 1``, proportional to ``1/p_i``."""
        if not self.super_dual:
            raise ValueError(f"sum 1/p_i = {self.reciprocal_sum} <= 1: no q_i > p_i with sum 1/q_i = 1")
        total = self.reciprocal_sum
        return tuple(x * total for x in self.p)


@dataclass(frozen=True, eq=False)
class KernelMap:
    """Nonnegative values ``K(R)`` on every lattice rectangle, packed layout."""

    spec: LatticeSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != self.spec.packed_shape:
            raise ValueError(f"kernel has shape {v.shape}, lattice needs {self.spec.packed_shape}")
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValueError("kernel values must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __call__(self, rect: DyadicRect) -> float:
        return float(self.values[packed_position(rect)])

    def scaled(self, t: float) -> "KernelMap":
        return KernelMap(self.spec, t * self.values)

    @classmethod
    def volume_power(cls, spec: LatticeSpec, gamma: float) -> "KernelMap":
        """``K(R) = |R|**gamma`` with ``|R|`` in real units of the root box."""
        level = axis_nodes(spec.L)[0]
        factors = [(side / 2.0**level) ** gamma for side in spec.sides]
        return cls(spec, _outer(factors))

    @classmethod
    def calibrated(cls, sigmas: Sequence[GridWeight], p: ExponentTuple) -> "KernelMap":
        """``K(R) = prod_i sigma_i(R)**(1/p_i - 1)`` (zero where some ``sigma_i(R) = 0``)."""
        spec = sigmas[0].spec
        S = [s.rect_measures for s in sigmas]
        pos = np.all([s > 0 for s in S], axis=0)
        v = np.ones(spec.packed_shape)
        for s, pi in zip(S, p.p):
            v = v * np.where(pos, np.where(pos, s, 1.0) ** (1.0 / pi - 1.0), 0.0)
        return cls(spec, v)

    @classmethod
    def single(cls, spec: LatticeSpec, rect: DyadicRect, value: float = 1.0) -> "KernelMap":
        v = np.zeros(spec.packed_shape)
        v[packed_position(rect)] = value
        return cls(spec, v)

    @classmethod
    def random(cls, spec: LatticeSpec, rng: np.random.Generator, sparsity: float = 0.0) -> "KernelMap":
        """Log-uniform values over six decades, a fraction ``sparsity`` zeroed."""
        v = 10.0 ** rng.uniform(-3, 3, size=spec.packed_shape)
        if sparsity > 0:
            v[rng.random(spec.packed_shape) < sparsity] = 0.0
        return cls(spec, v)

    @classmethod
    def from_dense(cls, spec: LatticeSpec, values: Sequence[float]) -> "KernelMap":
        """Values listed in :func:`~dyadic_embed.lattice.enumerate_rects` order."""
        values = np.asarray(values, dtype=np.float64)
        if values.size != spec.rect_count:
            raise ValueError(f"expected {spec.rect_count} kernel values, got {values.size}")
        v = np.empty(spec.rect_count)
        v[enumeration_order(spec)] = values
        return cls(spec, v.reshape(spec.packed_shape))

    def to_dense(self) -> np.ndarray:
        return self.values.ravel()[enumeration_order(self.spec)]


def _outer(factors):
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return out


def _check_lattices(K: KernelMap, sigmas: Sequence[GridWeight], fs: Sequence[np.ndarray] = ()) -> None:
    for s in sigmas:
        if s.spec != K.spec:
            raise ValueError(f"weight lattice {s.spec} does not match kernel lattice {K.spec}")
    for f in fs:
        if np.shape(f) != K.spec.shape:
            raise ValueError(f"function shape {np.shape(f)} does not match lattice {K.spec.shape}")


def nlinear_lhs(K: KernelMap, f: Sequence[np.ndarray], sigma: Sequence[GridWeight]) -> float:
    """``sum_R K(R) prod_i |int_R f_i dsigma_i|``."""
    if len(f) != len(sigma):
        raise ValueError("need one weight per function")
    _check_lattices(K, sigma, f)
    prod = K.values
    for fi, si in zip(f, sigma):
        prod = prod * np.abs(si.integrals(fi))
    return float(prod.sum())


def testing_constant(K: KernelMap, sigma: Sequence[GridWeight], p: ExponentTuple) -> tuple[float, DyadicRect | None]:
    """``max_R K(R) prod_i sigma_i(R)**(1 - 1/p_i)`` and a maximizing rectangle."""
    if len(sigma) != p.n:
        raise ValueError("need one weight per exponent")
    _check_lattices(K, sigma)
    S = [s.rect_measures for s in sigma]
    pos = np.all([s > 0 for s in S], axis=0)
    val = np.where(pos, K.values, 0.0)
    for s, pi in zip(S, p.p):
        val = val * np.where(pos, s, 0.0) ** (1.0 - 1.0 / pi)
    if not np.any(pos):
        return 0.0, None
    val = np.where(pos, val, -math.inf)
    at = np.unravel_index(np.argmax(val), val.shape)
    return float(val[at]), rect_at(at)


def _coefficients(K: KernelMap, skip: int | None, integrals: Sequence[np.ndarray]) -> np.ndarray:
    c = K.values
    for j, a in enumerate(integrals):
        if j != skip:
            c = c * a
    return c


def potential_g(K: KernelMap, i: int, f: Sequence[np.ndarray], sigma: Sequence[GridWeight]) -> np.ndarray:
    """``g_i(x) = sum_{R containing x} K(R) prod_{j != i} int_R f_j dsigma_j``.

    ``f[i]`` is ignored. Pairing ``g_i`` with ``f_i dsigma_i`` reproduces the
    embedding sum for nonnegative ``f``.
    """
    _check_lattices(K, sigma)
    integrals = [None if j == i else s.integrals(fj) for j, (fj, s) in enumerate(zip(f, sigma))]
    return scatter_to_cells(_coefficients(K, i, integrals), K.spec.L)


@dataclass(frozen=True)
class DualStep:
    f: np.ndarray
    value: float
    degenerate: bool = False


def holder_dual_step(g: np.ndarray, p: float, sigma: GridWeight) -> DualStep:
    """Maximize ``int f g dsigma`` over the unit sphere of ``L^p(sigma)``.

    The maximizer is ``g**(p'-1) / ||g||_{p'}**(p'-1)`` and the maximum is
    ``||g||_{L^p'(sigma)}``.
    """
    g = np.asarray(g, dtype=np.float64)
    if np.any(g < 0):
        raise ValueError("g must be nonnegative")
    pc = p / (p - 1.0)
    mass = sigma.cell_mass
    norm = float(np.sum(g**pc * mass)) ** (1.0 / pc)
    if not norm > 0:
        return DualStep(np.zeros_like(g), 0.0, degenerate=True)
    f = np.where(mass > 0, (g / norm) ** (pc - 1.0), 0.0)
    return DualStep(f, norm)


@dataclass
class AscentResult:
    value: float
    f: list[np.ndarray]
    start_values: list[float] = field(default_factory=list)
    history: list[float] = field(default_factory=list, repr=False)
    monotone: bool = True
    witness: DyadicRect | None = None


def _normalized(f: np.ndarray, p: float, sigma: GridWeight) -> np.ndarray:
    norm = sigma.lp_norm(f, p)
    return f / norm if norm > 0 else f


def _indicator(spec: LatticeSpec, rect: DyadicRect) -> np.ndarray:
    out = np.zeros(spec.shape)
    out[rect.slices(spec.L)] = 1.0
    return out


def _objective(K, f, sigma, p) -> float:
    norms = math.prod(s.lp_norm(fi, pi) for fi, s, pi in zip(f, sigma, p.p))
    if not norms > 0:
        return 0.0
    return nlinear_lhs(K, f, sigma) / norms


def estimate_c1_lower(
    K: KernelMap,
    sigma: Sequence[GridWeight],
    p: ExponentTuple,
    starts: int = 4,
    iters: int = 200,
    tol: float = 1e-10,
    seed=0,
) -> AscentResult:
    """Multi-start alternating ascent for the best embedding constant.

    Start 0 is the normalized indicator of the testing-constant witness, so
    the result is never below the testing constant; further starts are
    random nonnegative functions drawn from one generator in order. Each
    start cycles ``f_i <- holder_dual_step(potential_g(K, i, f), p_i)``
    until a sweep gains less than ``tol`` relatively. The returned value is
    the embedding ratio of the returned functions, recomputed from scratch,
    hence a lower bound for the best constant.
    """
    if starts < 1:
        raise ValueError("need at least one start")
    if len(sigma) != p.n:
        raise ValueError("need one weight per exponent")
    _check_lattices(K, sigma)
    spec = K.spec
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    c2, witness = testing_constant(K, sigma, p)
    best = AscentResult(0.0, [np.zeros(spec.shape) for _ in range(p.n)], witness=witness)
    if not np.any(K.values > 0):
        return best

    for start in range(starts):
        if start == 0 and witness is not None:
            f = [_normalized(_indicator(spec, witness), pi, s) for pi, s in zip(p.p, sigma)]
        else:
            f = [_normalized(rng.random(spec.shape), pi, s) for pi, s in zip(p.p, sigma)]
        integrals = [s.integrals(fi) for fi, s in zip(f, sigma)]
        obj = float(np.sum(_coefficients(K, None, integrals)))
        history = [obj]
        monotone = True
        for _ in range(iters):
            sweep_start = obj
            for i in range(p.n):
                g = scatter_to_cells(_coefficients(K, i, integrals), spec.L)
                step = holder_dual_step(g, p.p[i], sigma[i])
                if step.degenerate:
                    continue
                if step.value < obj * (1 - 1e-12):
                    monotone = False
                f[i] = step.f
                integrals[i] = sigma[i].integrals(f[i])
                obj = step.value
                history.append(obj)
            if obj - sweep_start <= tol * obj:
                break
        value = _objective(K, f, sigma, p)
        best.start_values.append(value)
        best.monotone = best.monotone and monotone
        if value > best.value:
            best.value, best.f, best.history = value, f, history
    return best


@dataclass(frozen=True)
class NecessityReport:
    c2: float
    c1_lower: float
    ratio: float
    checked: int
    indicator_violations: list[DyadicRect]

    @property
    def ok(self) -> bool:
        return not self.indicator_violations and self.ratio <= 1 + 1e-9


def verify_theorem_necessity(
    K: KernelMap,
    sigma: Sequence[GridWeight],
    p: ExponentTuple,
    c1_lower: float | None = None,
    max_rects: int = 256,
    seed=0,
) -> NecessityReport:
    """Plug indicators ``f_i = 1_R`` into the embedding sum.

    Each must give at least the single term ``K(R) prod sigma_i(R)``; all
    rectangles are checked when there are at most ``max_rects`` of them,
    otherwise a seeded sample. Also reports ``c2 / c1_lower``.
    """
    spec = K.spec
    if c1_lower is None:
        c1_lower = estimate_c1_lower(K, sigma, p, seed=seed).value
    c2, _ = testing_constant(K, sigma, p)
    flat = np.arange(spec.rect_count)
    if spec.rect_count > max_rects:
        flat = np.sort(np.random.default_rng(seed).choice(flat, size=max_rects, replace=False))
    S = [s.rect_measures for s in sigma]
    violations = []
    for idx in flat:
        pos = np.unravel_index(idx, spec.packed_shape)
        rect = rect_at(pos)
        ind = _indicator(spec, rect)
        term = K.values[pos] * math.prod(float(s[pos]) for s in S)
        if nlinear_lhs(K, [ind] * p.n, sigma) < term * (1 - 1e-12):
            violations.append(rect)
    ratio = c2 / c1_lower if c1_lower > 0 else (0.0 if c2 == 0 else math.inf)
    return NecessityReport(c2, c1_lower, ratio, len(flat), violations)


@dataclass(frozen=True)
class HolderCertificate:
    """Upper certificate ``lhs <= c2 prod_i carleson_i**(1/q_i)`` for one tuple ``f``.

    ``carleson[i]`` is the rectangle Carleson sum of ``|f_i|`` at ``(p_i, q_i)``;
    ``slice_constants[i]`` and ``geometric_bounds[i]`` compare the slice
    testing constant of ``sigma_i`` at ``q_i/p_i`` with the reverse-doubling
    bound built from the dyadic ``beta_hat[i]``.
    """

    lhs: float
    c2: float
    q: tuple[float, ...]
    carleson: tuple[float, ...]
    certificate: float
    beta_hat: tuple[float, ...]
    slice_constants: tuple[float, ...]
    geometric_bounds: tuple[float, ...]

    @property
    def holds(self) -> bool:
        return self.lhs <= self.certificate * (1 + 1e-10) + 1e-300

    @property
    def geometric_holds(self) -> bool:
        return all(c <= b * (1 + 1e-12) for c, b in zip(self.slice_constants, self.geometric_bounds))


def holder_certificate(
    K: KernelMap, sigma: Sequence[GridWeight], p: ExponentTuple, f: Sequence[np.ndarray]
) -> HolderCertificate:
    q = p.aux_q
    lhs = nlinear_lhs(K, f, sigma)
    c2, _ = testing_constant(K, sigma, p)
    carleson = tuple(rect_carleson_lhs(s, np.abs(fi), pi, qi) for s, fi, pi, qi in zip(sigma, f, p.p, q))
    certificate = c2 * math.prod(c ** (1.0 / qi) for c, qi in zip(carleson, q))
    betas, slices, bounds = [], [], []
    for s, pi, qi in zip(sigma, p.p, q):
        beta = reverse_doubling_beta(s).beta_hat
        betas.append(beta)
        slices.append(slice_testing_constant(s, qi / pi)[0])
        bounds.append(rd_geometric_bound(beta, qi / pi) if beta > 1 else math.inf)
    return HolderCertificate(lhs, c2, q, carleson, certificate, tuple(betas), tuple(slices), tuple(bounds))
