import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadic_embed import (
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
from dyadic_embed.lattice import (
    enumeration_order,
    node_id,
    node_interval,
    packed_position,
    rect_at,
    scatter_to_cells,
)

import oracles


@st.composite
def intervals(draw, max_level=6):
    k = draw(st.integers(0, max_level))
    return DyadicInterval(k, draw(st.integers(0, (1 << k) - 1)))


@st.composite
def rects(draw, d=None, max_level=5):
    d = d or draw(st.integers(1, 3))
    return DyadicRect(tuple(draw(intervals(max_level)) for _ in range(d)))


class TestChildren:
    def test_root_bisection(self):
        assert children(DyadicInterval(0, 0), 3) == (DyadicInterval(1, 0), DyadicInterval(1, 1))

    def test_index_doubling(self):
        assert children(DyadicInterval(2, 3), 3) == (DyadicInterval(3, 6), DyadicInterval(3, 7))

    def test_depth_bound(self):
        with pytest.raises(LatticeError):
            children(DyadicInterval(3, 5), 3)

    @given(intervals(max_level=5))
    def test_children_tile_parent(self, iv):
        a, b = children(iv, 6)
        lo, hi = iv.cells(6)
        assert a.cells(6) == (lo, (lo + hi) // 2)
        assert b.cells(6) == ((lo + hi) // 2, hi)
        assert iv.contains(a) and iv.contains(b) and not a.contains(b)

    def test_invalid_index(self):
        with pytest.raises(LatticeError):
            DyadicInterval(2, 4)
        with pytest.raises(LatticeError):
            DyadicInterval(-1, 0)


class TestProjectionSubstitution:
    I1, I2, I3 = DyadicInterval(1, 0), DyadicInterval(2, 3), DyadicInterval(3, 5)

    def test_projection(self):
        R = DyadicRect((self.I1, self.I2))
        assert projection(R, 0) == self.I1
        assert projection(R, 1) == self.I2
        assert projection(DyadicRect((self.I3,)), 0) == self.I3

    def test_projection_axis_range(self):
        with pytest.raises(LatticeError):
            projection(DyadicRect((self.I1, self.I2)), 2)

    def test_substitute(self):
        R = DyadicRect((self.I1, self.I2))
        assert substitute_axis(R, self.I3, 1) == DyadicRect((self.I1, self.I3))

    @given(rects(), intervals(), st.data())
    def test_round_trips(self, R, I, data):
        j = data.draw(st.integers(0, R.d - 1))
        assert substitute_axis(R, projection(R, j), j) == R
        assert projection(substitute_axis(R, I, j), j) == I


class TestEnumerate:
    @pytest.mark.parametrize("d,L,count", [(1, 1, 3), (2, 2, 49), (1, 0, 1), (3, 2, 343)])
    def test_counts(self, d, L, count):
        rs = list(enumerate_rects(LatticeSpec(d, L)))
        assert len(rs) == count == LatticeSpec(d, L).rect_count
        assert len(set(rs)) == count

    def test_count_formula_large(self):
        assert LatticeSpec(2, 8).rect_count == 261121 == (2**9 - 1) ** 2

    def test_order_is_lexicographic(self):
        rs = list(enumerate_rects(LatticeSpec(2, 2)))
        assert rs == sorted(rs, key=lambda r: (r.levels, r.indices))

    def test_matches_oracle_set(self):
        got = {tuple((a.level, a.index) for a in r.axes) for r in enumerate_rects(LatticeSpec(2, 3))}
        assert got == set(oracles.rects(2, 3))

    @pytest.mark.parametrize("d,L", [(1, 3), (2, 2), (3, 1)])
    def test_enumeration_order_matches_packed(self, d, L):
        spec = LatticeSpec(d, L)
        order = enumeration_order(spec)
        expected = [np.ravel_multi_index(packed_position(r), spec.packed_shape) for r in enumerate_rects(spec)]
        assert order.tolist() == expected

    @pytest.mark.parametrize("d,L", [(1, 4), (2, 3)])
    def test_levels_tile_root(self, d, L):
        spec = LatticeSpec(d, L)
        for levels in itertools.product(range(L + 1), repeat=d):
            cover = np.zeros(spec.shape, dtype=int)
            for r in enumerate_rects(spec):
                if r.levels == levels:
                    cover[r.slices(L)] += 1
            assert np.all(cover == 1)


class TestPacked:
    @given(intervals(max_level=10))
    def test_node_round_trip(self, iv):
        assert node_interval(node_id(iv)) == iv

    @given(rects())
    def test_rect_round_trip(self, R):
        assert rect_at(packed_position(R)) == R

    def test_scatter_counts_ancestors(self):
        spec = LatticeSpec(2, 3)
        out = scatter_to_cells(np.ones(spec.packed_shape), spec.L)
        assert np.all(out == (spec.L + 1) ** 2)

    def test_scatter_matches_ancestor_loop(self, rng):
        spec = LatticeSpec(2, 2)
        packed = rng.random(spec.packed_shape)
        out = scatter_to_cells(packed, spec.L)
        for cell in itertools.product(range(spec.n), repeat=2):
            want = sum(packed[packed_position(R)] for R in ancestors(cell, spec))
            assert out[cell] == pytest.approx(want, rel=1e-14)


class TestDilate:
    def test_identity(self):
        spec = LatticeSpec(2, 3)
        for R in enumerate_rects(spec):
            assert dilate_clip(R, 1, spec) == R.cell_box(spec.L)

    def test_clipped_at_boundary(self):
        spec = LatticeSpec(1, 3)
        R = DyadicRect.from_pairs((1, 0))
        assert dilate_clip(R, 3, spec) == ((0, 8),)
        R = DyadicRect.from_pairs((2, 3))
        assert dilate_clip(R, 3, spec) == ((4, 8),)

    def test_worked_example(self):
        # [1/4,1/2) x [0,1/4) in [0,1)^2 -> [0,3/4) x [0,1/2)
        spec = LatticeSpec(2, 2)
        R = DyadicRect.from_pairs((2, 1), (2, 0))
        box = dilate_clip(R, 3, spec)
        assert spec.box_bounds(box) == ((0.0, 0.75), (0.0, 0.5))

    @pytest.mark.parametrize("c", [1, 2, 3, 1.5, 5])
    def test_matches_interval_oracle(self, c):
        spec = LatticeSpec(1, 4)
        for R in enumerate_rects(spec):
            rng_ = oracles.dilated_cells((R.axes[0].level, R.axes[0].index), spec.L, c)
            assert dilate_clip(R, c, spec) == ((rng_.start, rng_.stop),)

    @given(rects(d=2, max_level=4), st.sampled_from([1, 1.5, 2, 3, 4]))
    def test_contains_original(self, R, c):
        spec = LatticeSpec(2, 4)
        box = dilate_clip(R, c, spec)
        for (lo, hi), (a, b) in zip(R.cell_box(4), box):
            assert a <= lo and hi <= b and 0 <= a and b <= spec.n

    def test_bad_factor(self):
        spec = LatticeSpec(1, 2)
        with pytest.raises(ValueError):
            dilate_clip(spec.root(), 0, spec)


class TestAncestors:
    def test_chain(self):
        spec = LatticeSpec(1, 2)
        got = [R.axes[0] for R in ancestors((0,), spec)]
        assert got == [DyadicInterval(0, 0), DyadicInterval(1, 0), DyadicInterval(2, 0)]

    def test_d2_L1(self):
        assert len(list(ancestors((1, 1), LatticeSpec(2, 1)))) == 4

    @given(st.integers(1, 3), st.integers(0, 3), st.data())
    def test_count_and_containment(self, d, L, data):
        spec = LatticeSpec(d, L)
        cell = tuple(data.draw(st.integers(0, spec.n - 1)) for _ in range(d))
        anc = list(ancestors(cell, spec))
        assert len(anc) == (L + 1) ** d
        finest = DyadicRect(tuple(DyadicInterval(L, c) for c in cell))
        assert all(R.contains(finest) for R in anc)

    def test_out_of_grid(self):
        with pytest.raises(LatticeError):
            list(ancestors((4,), LatticeSpec(1, 2)))


class TestSpec:
    def test_root_box_geometry(self):
        spec = LatticeSpec(2, 2, origin=(-1, 0), sides=(2, 4))
        assert spec.cell_sides == (0.5, 1.0)
        assert spec.cell_volume == 0.5
        assert spec.cell_edges(0).tolist() == [-1, -0.5, 0, 0.5, 1]
        assert DyadicRect.from_pairs((1, 0), (2, 1)).volume(spec) == 1.0 * 1.0

    def test_check_rect(self):
        spec = LatticeSpec(2, 2)
        with pytest.raises(LatticeError):
            spec.check_rect(DyadicRect.from_pairs((3, 0), (0, 0)))
        with pytest.raises(LatticeError):
            spec.check_rect(DyadicRect.from_pairs((1, 0)))

    def test_invalid(self):
        with pytest.raises(LatticeError):
            LatticeSpec(0, 2)
        with pytest.raises(LatticeError):
            LatticeSpec(1, -1)
        with pytest.raises(LatticeError):
            LatticeSpec(2, 1, sides=(1, 0))
