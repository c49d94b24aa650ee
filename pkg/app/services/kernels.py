"""
Kernel Service - jump kernels J^φ, J, J_λ and heat-kernel envelopes
"""
import logging
import math
from typing import Sequence, Tuple

import numpy as np

from app.models.kernel import (
    AxisValue,
    DiagonalValue,
    EnvelopeValue,
    KernelSpec,
    KernelValue,
    ZeroValue,
)
from app.models.scaling import ScalingBase
from app.services.scaling import scaling_service
from app.utils.errors import DomainError, InvariantViolation

logger = logging.getLogger("kernels")


def _points(x: Sequence[float], y: Sequence[float]):
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise DomainError("x and y must be points of the same dimension")
    return xa, ya


class KernelService:
    """Service for kernel and envelope evaluation"""

    def jump_kernel_phi(self, x, y, phi: ScalingBase) -> KernelValue:
        """J^φ(x, y): nonzero only when exactly one coordinate differs"""
        xa, ya = _points(x, y)
        differing = np.flatnonzero(xa != ya)
        if differing.size == 0:
            return DiagonalValue()
        if differing.size > 1:
            return ZeroValue()
        axis = int(differing[0])
        return AxisValue(axis=axis + 1, value=float(phi.nu1(abs(xa[axis] - ya[axis]))))

    def multiplier_value(self, x, y, spec: KernelSpec) -> float:
        """λ(x, y), checked against [Λ⁻¹, Λ]"""
        xa, ya = _points(x, y)
        value = float(spec.multiplier(xa, ya))
        lam = spec.lambda_bound
        if not (1.0 / lam) * (1 - 1e-12) <= value <= lam * (1 + 1e-12):
            raise InvariantViolation(f"multiplier {value:g} outside [1/{lam:g}, {lam:g}]")
        return value

    def multiplier_bounds(self, spec: KernelSpec) -> Tuple[float, float]:
        """Range of λ; lies inside [Λ⁻¹, Λ] by construction of KernelSpec"""
        return spec.multiplier.bounds()

    def jump_kernel(self, x, y, spec: KernelSpec) -> KernelValue:
        """J(x, y) = λ(x, y) J^φ(x, y), zero beyond the truncation length"""
        base = self.jump_kernel_phi(x, y, spec.phi)
        if not isinstance(base, AxisValue):
            return base
        if spec.truncation is not None:
            xa, ya = _points(x, y)
            if float(np.max(np.abs(xa - ya))) > spec.truncation:
                return ZeroValue()
        weight = self.multiplier_value(x, y, spec)
        return AxisValue(axis=base.axis, value=weight * base.value)

    def truncate(self, spec: KernelSpec, lam: float) -> KernelSpec:
        """J_λ(x, y) = J(x, y) 1{|x − y| ≤ λ}; λ = inf leaves spec unchanged"""
        if not lam > 0:
            raise DomainError(f"truncation length must be positive, got {lam}")
        if math.isinf(lam):
            return spec
        current = spec.truncation if spec.truncation is not None else math.inf
        return spec.model_copy(update={"truncation": min(current, lam)})

    # ---- envelopes ---------------------------------------------------

    def _check_time(self, t: float):
        if not (t > 0 and math.isfinite(t)):
            raise DomainError(f"time must be finite and positive, got {t}")

    def envelope_z(self, t: float, x, y, phi: ScalingBase) -> EnvelopeValue:
        """Π_i ([φ⁻¹(t)]⁻¹ ∧ t ν¹(|Δ^i|))"""
        self._check_time(t)
        xa, ya = _points(x, y)
        kappa = scaling_service.inverse(phi, t)
        terms = []
        for delta in np.abs(xa - ya):
            if delta == 0:
                terms.append(1.0 / kappa)
            else:
                terms.append(min(1.0 / kappa, t * float(phi.nu1(delta))))
        return EnvelopeValue(
            value=float(math.prod(terms)),
            per_axis_factors=[term * kappa for term in terms],
            prefactor=kappa ** (-xa.size),
        )

    def envelope_x(self, t: float, x, y, phi: ScalingBase) -> EnvelopeValue:
        """[φ⁻¹(t)]^{−d} Π_i (1 ∧ t φ⁻¹(t) / (|Δ^i| φ(|Δ^i|)))"""
        self._check_time(t)
        xa, ya = _points(x, y)
        kappa = scaling_service.inverse(phi, t)
        factors = []
        for delta in np.abs(xa - ya):
            if delta == 0:
                factors.append(1.0)
            else:
                factors.append(min(1.0, t * kappa / (delta * float(phi.value(delta)))))
        prefactor = kappa ** (-xa.size)
        return EnvelopeValue(
            value=prefactor * math.prod(factors),
            per_axis_factors=factors,
            prefactor=prefactor,
        )

    def envelope_values(self, t: float, x, points: np.ndarray, phi: ScalingBase) -> np.ndarray:
        """envelope_x(t, x, y) for every row y of points (shape (..., d))"""
        self._check_time(t)
        kappa = scaling_service.inverse(phi, t)
        delta = np.abs(np.asarray(points, dtype=float) - np.asarray(x, dtype=float))
        safe = np.where(delta > 0, delta, 1.0)
        factors = np.where(delta > 0, np.minimum(1.0, t * kappa / (safe * phi.value(safe))), 1.0)
        return kappa ** (-delta.shape[-1]) * np.prod(factors, axis=-1)


# Global kernel service instance
kernel_service = KernelService()
