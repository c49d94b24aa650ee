"""
Ladder Service - exponent bookkeeping of the upper-bound bootstrap

θ_l increments and the H(q, l) upgrade schedule, the dyadic decay factor
𝔑(δ) = φ(κ)/(2^δ φ(2^δ κ)) with its two-sided power bounds, the pair
geometry behind the R(i₀) classification, and the Case I/II exponent
inequalities evaluated with the explicit constant c = (C̄/c̲)^d.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.models.ladder import GeometryContext, LadderState, LadderTransition, ThetaTable
from app.models.scaling import ScalingBase
from app.schemas.reports import CaseReport, FrakNReport, FrakNViolation
from app.services.scaling import scaling_service
from app.utils.errors import AnisoError, DomainError

logger = logging.getLogger("ladder")

MAX_SCHEDULE_STEPS = 10_000
THRESHOLD_TOLERANCE = 1e-12
VIOLATION_TOLERANCE = 1e-9
MAX_REPORTED_VIOLATIONS = 50


def _check_exponents(d: int, alpha_lower: float, alpha_upper: float):
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    if not 0 < alpha_lower <= alpha_upper < 2:
        raise DomainError(
            f"need 0 < alpha_lower <= alpha_upper < 2, got ({alpha_lower}, {alpha_upper})"
        )


def _partial_sum(n: Sequence[int], i0: int, a: int, b: int) -> int:
    """Σ_{j=a}^{b} n_j for 1-based j, with n indexed from i0; 0 when a > b"""
    if a > b:
        return 0
    return int(sum(n[j - i0] for j in range(a, b + 1)))


class LadderService:
    """Service for the exponent ladder and 𝔑 bounds"""

    # ---- θ and schedule ----------------------------------------------

    def theta(self, d: int, alpha_lower: float, alpha_upper: float) -> ThetaTable:
        """θ_l = α̲/(2+α̲+ᾱ) · (Σ_{i=1}^{d−l−1} ((ᾱ+1)/α̲)^i)⁻¹ for l ≤ d−2, θ_{d−1} = α̲/(α̲+1)"""
        _check_exponents(d, alpha_lower, alpha_upper)
        b0 = alpha_lower / (alpha_lower + 1.0)
        thetas = [self.theta_i0(d, l, 1, alpha_lower, alpha_upper) for l in range(d - 1)]
        thetas.append(b0)
        threshold = 1.0 / (1.0 + alpha_lower)
        steps = [max(1, math.ceil(threshold / theta - THRESHOLD_TOLERANCE)) for theta in thetas]
        return ThetaTable(
            d=d,
            alpha_lower=alpha_lower,
            alpha_upper=alpha_upper,
            theta=thetas,
            steps=steps,
            b0=b0,
            k0=(alpha_lower + 1.0) / (alpha_upper + 1.0),
        )

    def theta_i0(self, d: int, l: int, i0: int, alpha_lower: float, alpha_upper: float) -> float:
        """θ_l^{i₀}; equals b₀ = α̲/(α̲+1) at i₀ = d − l"""
        _check_exponents(d, alpha_lower, alpha_upper)
        if not 0 <= l <= d - 1 or not 1 <= i0 <= d - l:
            raise DomainError(f"need 0 <= l <= d-1 and 1 <= i0 <= d-l, got l={l}, i0={i0}")
        if i0 == d - l:
            return alpha_lower / (alpha_lower + 1.0)
        ratio = (alpha_upper + 1.0) / alpha_lower
        total = sum(ratio ** i for i in range(1, d - l - i0 + 1))
        return alpha_lower / (2.0 + alpha_lower + alpha_upper) / total

    def ladder_schedule(self, d: int, alpha_lower: float, alpha_upper: float) -> List[LadderTransition]:
        """
        Transitions from H(0, 0) to H(1, d−1).

        q grows by θ_l while below 1/(1+α̲); landing exactly on the threshold
        takes one more step. Past the threshold the level moves up, and on
        the last level the exponent is upgraded to 1.
        """
        table = self.theta(d, alpha_lower, alpha_upper)
        threshold = table.threshold
        state = LadderState(q=0.0, l=0)
        transitions: List[LadderTransition] = []
        for _ in range(MAX_SCHEDULE_STEPS):
            if state.l == d - 1 and state.q >= 1.0:
                return transitions
            theta = table.theta[state.l]
            at_threshold = math.isclose(state.q, threshold, rel_tol=0.0, abs_tol=THRESHOLD_TOLERANCE)
            if state.q < threshold and not at_threshold:
                target, rule = LadderState(q=min(state.q + theta, 1.0), l=state.l), "step"
            elif at_threshold:
                target, rule = LadderState(q=min(state.q + theta, 1.0), l=state.l), "threshold_step"
            elif state.l < d - 1:
                target, rule = LadderState(q=0.0, l=state.l + 1), "next_level"
            else:
                target, rule = LadderState(q=1.0, l=state.l), "final_upgrade"
            transitions.append(LadderTransition(source=state, target=target, rule=rule))
            state = target
        raise AnisoError(f"ladder schedule did not terminate within {MAX_SCHEDULE_STEPS} steps")

    # ---- 𝔑 -----------------------------------------------------------

    def frakN(self, delta: int, kappa: float, phi: ScalingBase) -> float:
        """𝔑(δ) = φ(κ)/(2^δ φ(2^δ κ))"""
        if not kappa > 0:
            raise DomainError(f"kappa must be positive, got {kappa}")
        scale = 2.0 ** delta
        return float(phi.value(kappa)) / (scale * float(phi.value(scale * kappa)))

    def log2_frakN(self, delta: int, kappa: float, phi: ScalingBase) -> float:
        return math.log2(self.frakN(delta, kappa, phi))

    def frakN_bounds_check(self, phi: ScalingBase, kappa_list: Sequence[float],
                           delta_max: int) -> FrakNReport:
        """c⁻¹ 2^{−δ(ᾱ+1)} ≤ 𝔑(δ) ≤ c 2^{−δ(α̲+1)} with c = C̄/c̲, for δ = 0..delta_max"""
        if delta_max < 0:
            raise DomainError("delta_max must be nonnegative")
        ws = phi.ws
        c = ws.ratio_constant
        worst = math.inf
        violations: List[FrakNViolation] = []
        checked = 0
        for kappa in kappa_list:
            for delta in range(delta_max + 1):
                value = self.frakN(delta, kappa, phi)
                lower = 2.0 ** (-delta * (ws.alpha_upper + 1.0)) / c
                upper = c * 2.0 ** (-delta * (ws.alpha_lower + 1.0))
                slack = min(math.log2(value / lower), math.log2(upper / value))
                worst = min(worst, slack)
                checked += 1
                if slack < -VIOLATION_TOLERANCE and len(violations) < MAX_REPORTED_VIOLATIONS:
                    violations.append(FrakNViolation(
                        delta=delta, kappa=kappa, value=value, lower=lower, upper=upper,
                    ))
        if violations:
            logger.warning(f"{phi.label()}: dyadic decay bounds violated ({len(violations)} shown)")
        return FrakNReport(constant=c, n_checked=checked, worst_slack=worst, violations=violations)

    # ---- geometry ----------------------------------------------------

    def geometry_context(self, x0: Sequence[float], y0: Sequence[float], t: float,
                         phi: ScalingBase) -> GeometryContext:
        """n_i with (5/4) 2^{n_i} κ ≤ |Δ^i| < (10/4) 2^{n_i} κ, axes sorted by |Δ^i|"""
        if not (t > 0 and math.isfinite(t)):
            raise DomainError(f"time must be finite and positive, got {t}")
        xa = np.asarray(x0, dtype=float)
        ya = np.asarray(y0, dtype=float)
        if xa.shape != ya.shape or xa.ndim != 1:
            raise DomainError("x0 and y0 must be points of the same dimension")
        kappa = scaling_service.inverse(phi, t)
        deltas = np.abs(xa - ya)
        order = [int(i) for i in np.argsort(deltas, kind="stable")]

        ns: List[Optional[int]] = []
        radii: List[float] = []
        for axis in order:
            delta = float(deltas[axis])
            if delta == 0:
                ns.append(None)
                radii.append(0.0)
                continue
            n = math.floor(math.log2(4.0 * delta / (5.0 * kappa)))
            while 1.25 * math.ldexp(kappa, n) > delta:
                n -= 1
            while delta >= 2.5 * math.ldexp(kappa, n):
                n += 1
            ns.append(n)
            radii.append(math.ldexp(kappa, n))

        i0 = next((j + 1 for j, n in enumerate(ns) if n is not None and n >= 1), len(ns) + 1)
        return GeometryContext(
            t=t,
            kappa=kappa,
            deltas=[float(deltas[axis]) for axis in order],
            order=order,
            n=ns,
            radii=radii,
            i0=i0,
        )

    def exit_ball_radius(self, ctx: GeometryContext, j0: int) -> float:
        """s(j₀) = R_{j₀}/8"""
        if not ctx.i0 <= j0 <= ctx.d:
            raise DomainError(f"j0 must lie in [{ctx.i0}, {ctx.d}], got {j0}")
        return ctx.radius_at(j0) / 8.0

    def min_exit_level(self, ctx: GeometryContext, j0: int, axis: int) -> int:
        """
        Lower bound on k for boxes A_k ≠ A_0 reachable by one jump along
        sorted axis `axis` from B(x₀, R_{j₀}/8): Σ_{j ≥ j₀, j ≠ axis} n_j.
        """
        if not ctx.i0 <= j0 <= ctx.d:
            raise DomainError(f"j0 must lie in [{ctx.i0}, {ctx.d}], got {j0}")
        if not 1 <= axis <= ctx.d:
            raise DomainError(f"axis must lie in [1, {ctx.d}], got {axis}")
        total = sum(ctx.n_at(j) for j in range(j0, ctx.d + 1) if j != axis)
        return max(1, total)

    # ---- products and case inequalities ------------------------------

    def _log2_terms(self, n: Sequence[Optional[int]], kappa: float, phi: ScalingBase) -> List[float]:
        if any(v is None for v in n):
            raise DomainError("products need finite n_j on the indices they cover")
        return [self.log2_frakN(v, kappa, phi) for v in n]

    def g_product(self, n: Sequence[Optional[int]], j0: int, l: int, q: float,
                  kappa: float, phi: ScalingBase) -> float:
        """G_{j₀}(l) = 𝔑(n_{j₀})^{b₀+q} Π_{j₀<j≤d−l} 𝔑(n_j)^q Π_{j>d−l} 𝔑(n_j); n has d entries"""
        d = len(n)
        if not 1 <= j0 <= d - l:
            raise DomainError(f"j0 must lie in [1, {d - l}], got {j0}")
        b0 = phi.alpha_lower / (phi.alpha_lower + 1.0)
        logs = self._log2_terms(n[j0 - 1:], kappa, phi)
        exponents = [b0 + q] + [q] * (d - l - j0) + [1.0] * l
        return 2.0 ** sum(e * v for e, v in zip(exponents, logs))

    def f_product(self, n: Sequence[Optional[int]], j0: int, l: int, q: float,
                  kappa: float, phi: ScalingBase) -> float:
        """F_{j₀}(l) = Π_{j₀≤j≤d−l} 𝔑(n_j)^q Π_{j>d−l} 𝔑(n_j); n has d entries"""
        d = len(n)
        if not 1 <= j0 <= d - l:
            raise DomainError(f"j0 must lie in [1, {d - l}], got {j0}")
        logs = self._log2_terms(n[j0 - 1:], kappa, phi)
        exponents = [q] * (d - l - j0 + 1) + [1.0] * l
        return 2.0 ** sum(e * v for e, v in zip(exponents, logs))

    def check_case_inequalities(self, d: int, l: int, i0: int, alpha_lower: float,
                                alpha_upper: float, q: float, n_vector: Sequence[int],
                                kappa: float, phi: ScalingBase) -> CaseReport:
        """
        Evaluate the exponent-upgrade inequality for one configuration.

        n_vector holds n_{i₀}, …, n_{d−l}. Case I applies when some
        j₀ ∈ [i₀, d−l−1] has θ ≤ (n_{j₀}(α̲+1)b₀ − (ᾱ+1)T(i₀, j₀−1)q)/((ᾱ+1)T(i₀, d−l)),
        T(a, b) = Σ_{a≤j≤b} n_j; Case II otherwise. i₀ = d − l is trivial.
        """
        _check_exponents(d, alpha_lower, alpha_upper)
        if not 0 <= l <= d - 2 and not (d == 1 and l == 0):
            raise DomainError(f"level must lie in [0, {max(d - 2, 0)}], got {l}")
        if not 1 <= i0 <= d - l:
            raise DomainError(f"i0 must lie in [1, {d - l}], got {i0}")
        threshold = 1.0 / (1.0 + alpha_lower)
        if not 0 <= q < threshold:
            raise DomainError(f"q must lie in [0, {threshold:g}), got {q}")
        n = [int(v) for v in n_vector]
        if len(n) != d - l - i0 + 1:
            raise DomainError(f"n_vector needs {d - l - i0 + 1} entries (n_{i0}..n_{d - l}), got {len(n)}")
        if any(v < 1 for v in n) or any(b < a for a, b in zip(n, n[1:])):
            raise DomainError(f"n_vector must be nondecreasing positive integers, got {n}")

        b0 = alpha_lower / (alpha_lower + 1.0)
        theta = self.theta_i0(d, l, i0, alpha_lower, alpha_upper)
        constant = (phi.c_upper / phi.c_lower) ** d
        log2_c = math.log2(constant)
        top = d - l
        log2_n = {j: self.log2_frakN(n[j - i0], kappa, phi) for j in range(i0, top + 1)}
        log2_rhs = sum((q + theta) * log2_n[j] for j in range(i0, top + 1))

        def report(case: str, j0: Optional[int], log2_lhs: float,
                   exponent_gap: Optional[float] = None) -> CaseReport:
            return CaseReport(
                d=d, l=l, i0=i0, q=q, theta=theta, case=case, j0=j0,
                log2_lhs=log2_lhs, log2_rhs=log2_rhs, constant=constant,
                margin=log2_c + log2_rhs - log2_lhs, exponent_gap=exponent_gap,
            )

        if i0 == top:
            return report("trivial", top, (b0 + q) * log2_n[top])

        total = _partial_sum(n, i0, i0, top)
        for j0 in range(i0, top):
            bound = (
                n[j0 - i0] * (alpha_lower + 1.0) * b0
                - (alpha_upper + 1.0) * _partial_sum(n, i0, i0, j0 - 1) * q
            ) / ((alpha_upper + 1.0) * total)
            if theta <= bound:
                log2_lhs = (b0 + q) * log2_n[j0] + sum(q * log2_n[j] for j in range(j0 + 1, top + 1))
                return report("I", j0, log2_lhs)

        gap = (
            -(alpha_upper + 1.0) * _partial_sum(n, i0, i0, top - 1) * (q + theta)
            + (alpha_lower + 1.0) * n[top - i0] * (b0 - theta)
        )
        return report("II", None, (b0 + q) * log2_n[top], exponent_gap=gap)


# Global ladder service instance
ladder_service = LadderService()
