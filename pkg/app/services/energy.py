"""
Energy Service - Dirichlet energy of tabulated functions

E(f, f) = Σ_i ∫∫ (f(x + e^i τ) − f(x))² J(x, x + e^i τ) dτ dx

for f given on a uniform grid and extended by zero outside its box. Pairs
with both points in the box are integrated on log-spaced τ panels down to
τ_min = h/100; below τ_min the interpolant is linear, so the remaining piece
is f'² λ(x, x) σ²(τ_min)/2 per side. Pairs leaving the box reduce to
f(x)² ∫ J dτ and are counted twice (x inside, x outside).
"""
import logging
import math
from typing import Iterable, List, Optional, Sequence

import numpy as np

from app.models.kernel import GridFunction, KernelSpec
from app.models.scaling import ScalingBase
from app.schemas.reports import (
    EnergyGapReport,
    EnergyGapRow,
    NashReport,
    NashRow,
    Verdict,
)
from app.services.kernels import kernel_service
from app.services.scaling import FAR_FACTOR, scaling_service
from app.utils.errors import DomainError, NumericError
from app.utils.logger import log_duration

logger = logging.getLogger("energy")

NASH_SCALES = (0.25, 0.5, 1.0, 2.0, 4.0)
NASH_MAX_SPREAD = 100.0
GAP_LAMBDAS = (1.0, 2.0, 4.0, 8.0)
TAU_MIN_FRACTION = 0.01


def tent(dim: int, half_width: float = 1.0, nodes_per_unit: int = 200, margin: float = 1.5) -> GridFunction:
    """Product tent Π(1 − |x^i|/w)_+ on [−margin·w, margin·w]^d with nodes on the kinks"""
    k = max(1, int(round(nodes_per_unit * half_width / 2)))
    n = int(round(2 * margin * 2 * k)) + 1
    edge = margin * half_width
    axis = np.linspace(-edge, edge, n)
    profile = np.clip(1.0 - np.abs(axis) / half_width, 0.0, None)
    values = profile
    for _ in range(dim - 1):
        values = np.multiply.outer(values, profile)
    return GridFunction(lower=(-edge,) * dim, upper=(edge,) * dim, values=np.asarray(values))


def dilated_bump(scale: float, dim: int, nodes_per_axis: int) -> GridFunction:
    """L¹-normalised product tent of half-width `scale` on [−1.5 scale, 1.5 scale]^d"""
    k = max(1, (nodes_per_axis - 1) // 6)
    n = 6 * k + 1
    edge = 1.5 * scale
    axis = np.linspace(-edge, edge, n)
    profile = np.clip(1.0 - np.abs(axis) / scale, 0.0, None) / scale
    values = profile
    for _ in range(dim - 1):
        values = np.multiply.outer(values, profile)
    return GridFunction(lower=(-edge,) * dim, upper=(edge,) * dim, values=np.asarray(values))


def _log_panels(panels: int, points: int):
    """Composite Gauss–Legendre rule on [0, 1]"""
    nodes, weights = np.polynomial.legendre.leggauss(points)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return u, w


class EnergyService:
    """Service for Dirichlet-energy quadrature"""

    def __init__(self, panels_per_decade: int = 4, gauss_points: int = 8):
        self.panels_per_decade = panels_per_decade
        self.gauss_points = gauss_points

    # ---- quadrature pieces -------------------------------------------

    def _log_integral(self, a: np.ndarray, b: np.ndarray, integrand) -> np.ndarray:
        """
        Row-wise ∫_a^b integrand(τ) dτ on log panels; a, b shape (n,), a > 0.
        integrand maps τ of shape (n, Q) to values of shape (..., n, Q).
        """
        b = np.maximum(b, a)
        ratio = np.log(b / a)
        decades = float(np.max(ratio)) / math.log(10.0) if ratio.size else 0.0
        if decades <= 0:
            return np.zeros(np.shape(integrand(a[:, None]))[:-1])
        panels = max(1, int(math.ceil(self.panels_per_decade * decades)))
        u, w = _log_panels(panels, self.gauss_points)
        tau = a[:, None] * np.exp(ratio[:, None] * u[None, :])
        jacobian = tau * ratio[:, None] * w[None, :]
        return np.sum(integrand(tau) * jacobian, axis=-1)

    def _axis_energy(self, f: GridFunction, spec: KernelSpec, axis: int) -> float:
        phi = spec.phi
        coords_all = f.axes()
        coords = coords_all[axis]
        h = f.spacing[axis]
        lo, hi = f.lower[axis], f.upper[axis]
        trunc = spec.truncation if spec.truncation is not None else math.inf
        tau_min = TAU_MIN_FRACTION * h
        taylor_scale = 0.5 * scaling_service.small_jump_variance(phi, min(tau_min, trunc))

        lines = np.moveaxis(f.values, axis, -1).reshape(-1, coords.size)
        mesh = np.stack(np.meshgrid(*coords_all, indexing="ij"), axis=-1)
        points = np.moveaxis(mesh, axis, -2).reshape(lines.shape[0], coords.size, f.dim)
        multiplier = spec.multiplier
        uniform = multiplier.state_independent

        # trapezoid weights over x
        weights = np.ones(f.values.shape)
        for ax, n in enumerate(f.values.shape):
            edge = [slice(None)] * f.dim
            for end in (0, n - 1):
                edge[ax] = end
                weights[tuple(edge)] *= 0.5
        weights = np.moveaxis(weights, axis, -1).reshape(lines.shape) * f.cell_volume

        def lam(base: np.ndarray, tau: np.ndarray, sign: float) -> np.ndarray:
            if uniform:
                return np.full(np.shape(tau), multiplier.c)
            target = np.broadcast_to(base[:, None, :], tau.shape + (f.dim,)).copy()
            target[..., axis] += sign * tau
            return multiplier(base[:, None, :], target)

        total = 0.0
        for sign in (1.0, -1.0):
            reach = (hi - coords) if sign > 0 else (coords - lo)
            slopes = np.diff(lines, axis=-1) / h
            one_sided = np.zeros_like(lines)
            if sign > 0:
                one_sided[:, :-1] = slopes
            else:
                one_sided[:, 1:] = slopes
            inner_hi = np.minimum(reach, trunc)
            outer_lo = np.maximum(reach, tau_min)
            outer_hi = np.minimum(trunc, outer_lo * FAR_FACTOR)

            for row in range(lines.shape[0]):
                values = lines[row]
                base = points[row]
                diag = lam(base, np.zeros((coords.size, 1)), sign)[:, 0]

                def inner(tau, values=values, base=base):
                    shifted = np.interp(coords[:, None] + sign * tau, coords, values)
                    jump = (shifted - values[:, None]) ** 2
                    return jump * phi.nu1(tau) * lam(base, tau, sign)

                def outer(tau, base=base):
                    return phi.nu1(tau) * lam(base, tau, sign)

                near = np.sum(weights[row] * one_sided[row] ** 2 * diag) * taylor_scale
                body = np.sum(weights[row] * self._log_integral(np.full(coords.size, tau_min), inner_hi, inner))
                leaving = self._log_integral(outer_lo, outer_hi, outer)
                if math.isinf(trunc):
                    far = outer_hi
                    slope = phi.log_slope(far)
                    far_lam = lam(base, far[:, None], sign)[:, 0]
                    leaving = leaving + far_lam / (slope * phi.value(far))
                outside = np.sum(weights[row] * values ** 2 * np.where(reach < trunc, leaving, 0.0))
                total += near + body + 2.0 * outside
        return float(total)

    # ---- public operations -------------------------------------------

    def dirichlet_energy(self, f: GridFunction, spec: KernelSpec) -> float:
        """Quadrature of the Dirichlet form of f under J"""
        if f.dim != spec.dim:
            raise DomainError(f"function has dimension {f.dim}, kernel has {spec.dim}")
        peak = float(np.max(np.abs(f.values)))
        if peak == 0:
            return 0.0
        for ax in range(f.dim):
            faces = np.concatenate([
                np.take(f.values, 0, axis=ax).ravel(),
                np.take(f.values, -1, axis=ax).ravel(),
            ])
            if np.max(np.abs(faces)) > 1e-12 * peak:
                raise DomainError("function must vanish on the boundary of its grid box")
        energy = sum(self._axis_energy(f, spec, ax) for ax in range(f.dim))
        if not math.isfinite(energy) or energy < 0:
            raise NumericError(f"energy quadrature failed: {energy}")
        return energy

    def nash_check(self, phi: ScalingBase, spec: KernelSpec,
                   scales: Sequence[float] = NASH_SCALES,
                   nodes_per_axis: Optional[int] = None,
                   max_spread: float = NASH_MAX_SPREAD) -> NashReport:
        """r(s) = ‖f_s‖² / (E(f_s, f_s) φ(‖f_s‖₂^{−2/d})) over dilations f_s of a bump"""
        d = spec.dim
        if d > 2:
            raise DomainError("nash_check supports d <= 2")
        if phi != spec.phi:
            spec = spec.model_copy(update={"phi": phi})
        nodes = nodes_per_axis or (601 if d == 1 else 49)
        rows: List[NashRow] = []
        with log_duration(logger, f"nash check d={d}"):
            for s in scales:
                f = dilated_bump(s, d, nodes)
                l2 = f.l2_squared()
                energy = self.dirichlet_energy(f, spec)
                ratio = l2 / (energy * float(phi.value(l2 ** (-1.0 / d))))
                if not math.isfinite(ratio) or ratio <= 0:
                    raise NumericError(f"nash ratio not finite at scale {s}")
                rows.append(NashRow(scale=s, l2_squared=l2, energy=energy, ratio=ratio))
        ratios = [row.ratio for row in rows]
        spread = max(ratios) / min(ratios)
        verdict = Verdict.PASS if spread <= max_spread else Verdict.FAIL
        return NashReport(
            rows=rows,
            max_ratio=max(ratios),
            min_ratio=min(ratios),
            spread=spread,
            max_spread=max_spread,
            verdict=verdict,
        )

    def truncation_gap_check(self, f: GridFunction, spec: KernelSpec,
                             lams: Iterable[float] = GAP_LAMBDAS) -> EnergyGapReport:
        """0 ≤ E(f, f) − E_λ(f, f) ≤ c ‖f‖² / φ(λ) with c = 8 d Λ / (c̲ α̲)"""
        ws = spec.phi.ws
        constant = 8.0 * spec.dim * spec.lambda_bound / (ws.c_lower * ws.alpha_lower)
        full = self.dirichlet_energy(f, spec)
        l2 = f.l2_squared()
        rows = []
        for lam in lams:
            truncated = self.dirichlet_energy(f, kernel_service.truncate(spec, lam))
            rows.append(EnergyGapRow(
                lam=lam,
                energy=full,
                truncated_energy=truncated,
                gap=full - truncated,
                bound=constant * l2 / float(spec.phi.value(lam)),
            ))
        return EnergyGapReport(constant=constant, l2_squared=l2, rows=rows)


# Global energy service instance
energy_service = EnergyService()
