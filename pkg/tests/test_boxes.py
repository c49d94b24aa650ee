"""
Tests for the dyadic box decomposition
"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from app.models.ladder import BoxIndex
from app.services.boxes import box_service, floor_log2
from app.utils.errors import DomainError


class TestFloorLog2:
    """floor_log2"""

    @pytest.mark.parametrize("value,expected", [(1.0, 0), (1.999, 0), (2.0, 1), (5.0, 2), (0.5, -1), (1024.0, 10)])
    def test_values(self, value, expected):
        """Exact at powers of two"""
        assert floor_log2(value) == expected


class TestBoxIndex:
    """box_index"""

    def test_example(self):
        """w = (3, −5): γ = (1, 2), k = 3, signs (+, −)"""
        box = box_service.box_index((3.0, -5.0), (0.0, 0.0), 1.0)
        assert box == BoxIndex(k=3, gamma=(1, 2), signs=(1, -1))
        assert box.label() == "D3[gamma=[1, 2],signs=[1, -1]]"

    def test_scaled_example(self):
        """Offsets are measured in units of κ"""
        box = box_service.box_index((5.0, 5.0), (1.0, 1.0), 2.0)
        assert box == BoxIndex(k=2, gamma=(1, 1), signs=(1, 1))

    def test_small_coordinate_is_d0(self):
        """Some |w^i| < 1 puts the point in D₀"""
        assert box_service.box_index((0.5, 100.0), (0.0, 0.0), 1.0).is_d0

    def test_unit_cube_shell_is_d0(self):
        """All |w^i| ∈ [1, 2) gives k = 0, which is D₀"""
        assert box_service.box_index((1.5, -1.2), (0.0, 0.0), 1.0).is_d0

    @pytest.mark.parametrize("z,y0,kappa", [
        ((1.0,), (0.0,), 0.0),
        ((1.0, 2.0), (0.0,), 1.0),
        ((math.inf,), (0.0,), 1.0),
        ((), (), 1.0),
    ])
    def test_bad_input(self, z, y0, kappa):
        """Nonpositive κ, mismatched or non-finite points are rejected"""
        with pytest.raises(DomainError):
            box_service.box_index(z, y0, kappa)

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=1, max_size=4))
    def test_box_contains_point(self, w):
        """The classified box contains the point"""
        box = box_service.box_index(w, [0.0] * len(w), 1.0)
        assert box.contains(w)

    def test_points_in_single_box(self):
        """A point belongs to its own box and to no other box of the same level"""
        rng = np.random.default_rng(8)
        for _ in range(100):
            w = rng.choice([-1.0, 1.0], size=2) * 2.0 ** rng.uniform(0.0, 4.0, size=2)
            box = box_service.box_index(w, (0.0, 0.0), 1.0)
            if box.is_d0:
                continue
            owners = [other for other in box_service.enumerate_boxes(box.k, 2) if other.contains(w)]
            assert owners == [box]


class TestCounting:
    """box_count and enumerate_boxes"""

    @pytest.mark.parametrize("k,d,expected", [(3, 2, 16), (2, 3, 48), (5, 1, 2), (1, 2, 8)])
    def test_counts(self, k, d, expected):
        """2^d · C(d+k−1, d−1)"""
        assert box_service.box_count(k, d) == expected

    def test_enumeration_matches_count(self):
        """Enumeration yields box_count distinct boxes"""
        for d in range(1, 5):
            for k in range(1, 11):
                boxes = box_service.enumerate_boxes(k, d)
                assert len(boxes) == box_service.box_count(k, d)
                assert len(set(boxes)) == len(boxes)
                assert all(sum(box.gamma) == k for box in boxes)

    def test_boxes_are_disjoint(self):
        """Distinct boxes of one level do not intersect"""
        boxes = box_service.enumerate_boxes(3, 2)
        for i, a in enumerate(boxes):
            for b in boxes[i + 1:]:
                assert not a.intersects(b)
            assert a.intersects(a)

    @pytest.mark.parametrize("k,d", [(0, 2), (2, 0)])
    def test_bad_levels(self, k, d):
        """k ≥ 1 and d ≥ 1"""
        with pytest.raises(DomainError):
            box_service.box_count(k, d)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
