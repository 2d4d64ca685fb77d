"""Naive reference implementations used as test oracles.

Everything here loops over rectangles and cells explicitly and sums with
``math.fsum``; nothing goes through prefix tables, packed layouts or the
bottom-up passes of the library.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def intervals(L):
    """All dyadic intervals ``(level, index)`` of ``[0, 1)`` down to depth ``L``."""
    return [(k, i) for k in range(L + 1) for i in range(1 << k)]


def rects(d, L):
    return list(itertools.product(intervals(L), repeat=d))


def cubes(d, L):
    for k in range(L + 1):
        for idx in itertools.product(range(1 << k), repeat=d):
            yield tuple((k, i) for i in idx)


def cell_range(interval, L):
    k, i = interval
    w = 1 << (L - k)
    return range(i * w, (i + 1) * w)


def cells_of(rect, L):
    return itertools.product(*(cell_range(iv, L) for iv in rect))


def contains(big, small):
    return all(ks >= kb and (i >> (ks - kb)) == ib for (kb, ib), (ks, i) in zip(big, small))


def integral(values, rect, L):
    return math.fsum(float(values[c]) for c in cells_of(rect, L))


def carleson_lhs(mass, f, p, q, L):
    total = []
    for Q in cubes(mass.ndim, L):
        s = integral(mass, Q, L)
        if s > 0:
            a = integral(f * mass, Q, L)
            total.append(s ** (q / p) * (a / s) ** q)
    return math.fsum(total)


def rect_carleson_lhs(mass, f, p, q, L):
    total = []
    for R in rects(mass.ndim, L):
        s = integral(mass, R, L)
        if s > 0:
            a = integral(f * mass, R, L)
            total.append(s ** (q / p) * (a / s) ** q)
    return math.fsum(total)


def carleson_testing(mass, r, L):
    all_cubes = list(cubes(mass.ndim, L))
    meas = {Q: integral(mass, Q, L) for Q in all_cubes}
    best = -math.inf
    for Q in all_cubes:
        if meas[Q] > 0:
            inner = math.fsum(meas[P] ** r for P in all_cubes if contains(Q, P))
            best = max(best, inner / meas[Q] ** r)
    return best


def slice_testing(mass, r, L):
    """Max over ``R`` and axes ``j`` of ``sum_{I in P_j(R)} sigma([R;I,j])**r / sigma(R)**r``."""
    d = mass.ndim
    meas = {R: integral(mass, R, L) for R in rects(d, L)}
    best = -math.inf
    for R, sR in meas.items():
        if not sR > 0:
            continue
        for j in range(d):
            inner = []
            for I in intervals(L):
                if contains((R[j],), (I,)):
                    inner.append(meas[R[:j] + (I,) + R[j + 1 :]] ** r)
            best = max(best, math.fsum(inner) / sR**r)
    return best


def rect_volume(rect, sides=None):
    sides = sides or (1.0,) * len(rect)
    return math.prod(s / 2**k for (k, _), s in zip(rect, sides))


def kernel_value(K, rect):
    return float(K.values[tuple((1 << k) - 1 + i for k, i in rect)])


def nlinear_lhs(K, fs, masses, L):
    d = masses[0].ndim
    total = []
    for R in rects(d, L):
        terms = [integral(f * m, R, L) for f, m in zip(fs, masses)]
        total.append(kernel_value(K, R) * math.prod(abs(t) for t in terms))
    return math.fsum(total)


def embedding_testing(K, masses, p, L):
    d = masses[0].ndim
    best = 0.0
    for R in rects(d, L):
        s = [integral(m, R, L) for m in masses]
        if all(x > 0 for x in s):
            best = max(best, kernel_value(K, R) * math.prod(x ** (1 - 1 / pi) for x, pi in zip(s, p)))
    return best


def cell_ancestors(cell, L):
    per_axis = [[(k, c >> (L - k)) for k in range(L + 1)] for c in cell]
    return list(itertools.product(*per_axis))


def kernel_function(K, L, d):
    """``sum_R K(R) 1_R`` evaluated on every cell."""
    out = np.zeros((1 << L,) * d)
    for cell in itertools.product(range(1 << L), repeat=d):
        out[cell] = math.fsum(kernel_value(K, R) for R in cell_ancestors(cell, L))
    return out


def potential(K, i, fs, masses, L):
    d = masses[0].ndim
    out = np.zeros((1 << L,) * d)
    for cell in itertools.product(range(1 << L), repeat=d):
        terms = []
        for R in cell_ancestors(cell, L):
            prod = kernel_value(K, R)
            for j, (f, m) in enumerate(zip(fs, masses)):
                if j != i:
                    prod *= integral(f * m, R, L)
            terms.append(prod)
        out[cell] = math.fsum(terms)
    return out


def dilated_cells(interval, L, c):
    """Cell range of ``c``-times the interval about its center, clipped to ``[0, 2**L)``.

    Works in units of one cell so all arithmetic is on exact rationals.
    """
    from fractions import Fraction

    k, i = interval
    w = Fraction(1 << (L - k))
    center = (i + Fraction(1, 2)) * w
    half = Fraction(c) * w / 2
    lo = max(0, math.floor(center - half))
    hi = min(1 << L, math.ceil(center + half))
    return range(lo, hi)


def apply_TK(K, hs, L, dilation=1.0, sides=None):
    """``sum_R K(R) 1_R prod_i int_{cR} h_i dx`` with Lebesgue cell volumes."""
    d = hs[0].ndim
    sides = sides or (1.0,) * d
    vol = math.prod(s / 2**L for s in sides)
    out = np.zeros((1 << L,) * d)
    for cell in itertools.product(range(1 << L), repeat=d):
        terms = []
        for R in cell_ancestors(cell, L):
            ranges = [dilated_cells(iv, L, dilation) for iv in R]
            prod = kernel_value(K, R)
            for h in hs:
                prod *= vol * math.fsum(float(h[c]) for c in itertools.product(*ranges))
            terms.append(prod)
        out[cell] = math.fsum(terms)
    return out


def I_alpha_direct(alpha, fs, L, d):
    """Midpoint quadrature of the strong fractional integral on ``[0,1)**d``."""
    n = len(fs)
    h = 1.0 / (1 << L)
    centers = (np.arange(1 << L) + 0.5) * h
    cells = list(itertools.product(range(1 << L), repeat=d))
    out = np.zeros((1 << L,) * d)
    for x in cells:
        total = []
        for ys in itertools.product(cells, repeat=n):
            prod = 1.0
            for j in range(d):
                prod *= max(abs(centers[x[j]] - centers[y[j]]) for y in ys)
            if prod == 0:
                continue
            weight = math.prod(float(f[y]) for f, y in zip(fs, ys)) * h ** (d * n)
            total.append(weight * prod ** (alpha / d - n))
        out[x] = math.fsum(total)
    return out
