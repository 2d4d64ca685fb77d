"""Numerical toolkit for n-linear embeddings over dyadic rectangles.

Finite dyadic lattices, grid weights with O(1) rectangle measures, Carleson
embeddings for cubes and rectangles, n-linear embedding sums with testing
constants and ascent-based lower bounds, and discretized strong positive and
strong fractional integral operators.
"""

from .carleson import carleson_lhs, carleson_testing_constant, dyadic_maximal, principal_cubes, stopping_parent
from .embedding import (
    ExponentTuple,
    KernelMap,
    estimate_c1_lower,
    holder_certificate,
    holder_dual_step,
    nlinear_lhs,
    potential_g,
    testing_constant,
    verify_theorem_necessity,
)
from .lattice import (
    DyadicInterval,
    DyadicRect,
    LatticeError,
    LatticeSpec,
    ancestors,
    children,
    dilate_clip,
    enumerate_rects,
    projection,
    substitute_axis,
)
from .operators import (
    FractionalKernelSpec,
    InvalidExponent,
    apply_I_alpha_direct,
    apply_I_alpha_discrete,
    apply_TK,
    corollary_testing_constant,
    duality_reduction_check,
    hls_exponent,
    prop51_testing_constant,
)
from .rect_carleson import rd_geometric_bound, rect_carleson_lhs, slice_testing_constant, slice_weight
from .weights import (
    GridWeight,
    gen_cascade_weight,
    gen_power_weight,
    lebesgue,
    load_weight,
    reverse_doubling_beta,
    save_weight,
)

__version__ = "0.1.0"
