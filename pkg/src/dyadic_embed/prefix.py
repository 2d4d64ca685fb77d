"""Compensated d-dimensional summed-area tables.

A plain float64 prefix table loses relative accuracy on boxes whose sum is
tiny compared with the running total, which is the normal situation for
cascade weights (cell masses spanning many decades). The table here keeps
every prefix value as an unevaluated sum ``hi + lo`` (double-double), built
with error-free transformations, so box sums recovered by inclusion-exclusion
stay accurate to a few ulps of the box sum itself.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

__all__ = ["PrefixTable", "two_sum"]


def two_sum(a, b):
    """Error-free sum: ``a + b == s + e`` exactly (Knuth)."""
    s = a + b
    bp = s - a
    e = (a - (s - bp)) + (b - bp)
    return s, e


def _dd_cumsum(hi: np.ndarray, lo: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    hi = np.moveaxis(hi, axis, 0)
    lo = np.moveaxis(lo, axis, 0)
    n = hi.shape[0]
    out_hi = np.zeros((n + 1,) + hi.shape[1:])
    out_lo = np.zeros_like(out_hi)
    s_hi = np.zeros(hi.shape[1:])
    s_lo = np.zeros(hi.shape[1:])
    for t in range(n):
        s_hi, e = two_sum(s_hi, hi[t])
        s_hi, s_lo = two_sum(s_hi, s_lo + (e + lo[t]))
        out_hi[t + 1] = s_hi
        out_lo[t + 1] = s_lo
    return np.moveaxis(out_hi, 0, axis), np.moveaxis(out_lo, 0, axis)


class PrefixTable:
    """Summed-area table of a cell array, zero-padded to shape ``(n+1,)*d``.

    ``table[i_0, ..., i_{d-1}]`` is the sum of ``values[:i_0, ..., :i_{d-1}]``.
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim < 1:
            raise ValueError("prefix table needs at least one axis")
        hi, lo = values, np.zeros_like(values)
        for axis in range(values.ndim):
            hi, lo = _dd_cumsum(hi, lo, axis)
        self.hi = hi
        self.lo = lo
        self.shape = values.shape

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def total(self) -> float:
        corner = (-1,) * self.d
        return float(self.hi[corner] + self.lo[corner])

    def box_sum(self, box: Sequence[tuple[int, int]]) -> float:
        """Sum over the half-open cell box ``[lo_j, hi_j)`` per axis (2**d lookups)."""
        if len(box) != self.d:
            raise ValueError(f"box has {len(box)} axes, table has {self.d}")
        terms = []
        for corner in itertools.product((0, 1), repeat=self.d):
            idx = tuple(b[c] for b, c in zip(box, corner))
            sign = -1.0 if (self.d - sum(corner)) % 2 else 1.0
            terms.append(sign * self.hi[idx])
            terms.append(sign * self.lo[idx])
        return math.fsum(terms)

    def box_sums(self, ranges: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        """Sums over the outer product of per-axis interval lists.

        ``ranges[j] = (lo_j, hi_j)`` are equal-length integer arrays of
        half-open cell ranges along axis ``j``; the result has shape
        ``(len(lo_0), ..., len(lo_{d-1}))``.
        """
        if len(ranges) != self.d:
            raise ValueError(f"got ranges for {len(ranges)} axes, table has {self.d}")
        ranges = [(np.asarray(a, dtype=np.intp), np.asarray(b, dtype=np.intp)) for a, b in ranges]
        acc_hi = acc_lo = None
        for corner in itertools.product((0, 1), repeat=self.d):
            ix = np.ix_(*(r[c] for r, c in zip(ranges, corner)))
            sign = -1.0 if (self.d - sum(corner)) % 2 else 1.0
            h = sign * self.hi[ix]
            lo = sign * self.lo[ix]
            if acc_hi is None:
                acc_hi, acc_lo = h, lo
            else:
                acc_hi, e = two_sum(acc_hi, h)
                acc_lo = acc_lo + (e + lo)
        return acc_hi + acc_lo
