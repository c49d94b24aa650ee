"""
Box Service - dyadic decomposition around a reference point

A point z is classified through w = (z − y₀)/κ: D₀ when some |w^i| < 1 or
all |w^i| < 2, otherwise the cell with γ^i = ⌊log₂|w^i|⌋, k = Σγ^i and
signs ε^i = sign(w^i).
"""
import itertools
import logging
import math
from typing import List, Sequence

import numpy as np

from app.models.ladder import BoxIndex
from app.utils.errors import DomainError

logger = logging.getLogger("boxes")


def floor_log2(value: float) -> int:
    """⌊log₂ value⌋ for value > 0, exact at powers of two"""
    _, exponent = math.frexp(value)
    return exponent - 1


class BoxService:
    """Service for classifying points into dyadic boxes"""

    def box_index(self, z: Sequence[float], y0: Sequence[float], kappa: float) -> BoxIndex:
        if not (kappa > 0 and math.isfinite(kappa)):
            raise DomainError(f"kappa must be finite and positive, got {kappa}")
        za = np.asarray(z, dtype=float)
        ya = np.asarray(y0, dtype=float)
        if za.shape != ya.shape or za.ndim != 1 or za.size == 0:
            raise DomainError("z and y0 must be points of the same dimension")
        if not np.all(np.isfinite(za)) or not np.all(np.isfinite(ya)):
            raise DomainError("z and y0 must be finite")

        w = (za - ya) / kappa
        magnitude = np.abs(w)
        if np.any(magnitude < 1):
            return BoxIndex(k=0)
        gamma = tuple(floor_log2(float(m)) for m in magnitude)
        k = sum(gamma)
        if k == 0:
            # every |w^i| lies in [1, 2)
            return BoxIndex(k=0)
        signs = tuple(1 if v > 0 else -1 for v in w)
        return BoxIndex(k=k, gamma=gamma, signs=signs)

    def box_count(self, k: int, d: int) -> int:
        """Number of cells at level k ≥ 1: 2^d · C(d+k−1, d−1)"""
        if d < 1:
            raise DomainError(f"dimension must be >= 1, got {d}")
        if k < 1:
            raise DomainError(f"box level must be >= 1, got {k}")
        return 2 ** d * math.comb(d + k - 1, d - 1)

    def enumerate_boxes(self, k: int, d: int) -> List[BoxIndex]:
        """All cells at level k, compositions of k in lexicographic order"""
        self.box_count(k, d)
        boxes = []
        for bars in itertools.combinations(range(k + d - 1), d - 1):
            cuts = (-1,) + bars + (k + d - 1,)
            gamma = tuple(b - a - 1 for a, b in zip(cuts, cuts[1:]))
            for signs in itertools.product((1, -1), repeat=d):
                boxes.append(BoxIndex(k=k, gamma=gamma, signs=signs))
        return boxes


# Global box service instance
box_service = BoxService()
