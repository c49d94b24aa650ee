"""
Scaling Service - calculus of weak-scaling functions

Evaluation, generalized inverse, certificate scan, the ν¹ integrals N(ε) and
σ²(ε), inverse-CDF sampling of jump magnitudes, and κ-rescaling.
"""
import logging
import math
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy import integrate, optimize

from app.models.scaling import ScalingBase
from app.schemas.reports import IntegrabilityReport, WsReport, WsViolation
from app.utils.errors import DomainError, NumericError

logger = logging.getLogger("scaling")

WS_RANGE = (1e-6, 1e6)
FAR_FACTOR = 1e6        # tail_mass closes analytically beyond FAR_FACTOR·ε
NEAR_FACTOR = 1e-8      # small_jump_variance closes analytically below NEAR_FACTOR·ε
BRACKET_CAP = 200
WS_TOLERANCE = 1e-9
MAX_REPORTED_VIOLATIONS = 50


def _quad_log(integrand, a: float, b: float, panels_per_decade: int = 1) -> float:
    """∫_a^b integrand(s) ds over log-spaced panels, substituting s = e^u"""
    if b <= a:
        return 0.0
    n_panels = max(1, int(math.ceil(panels_per_decade * math.log10(b / a))))
    edges = np.linspace(math.log(a), math.log(b), n_panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        value, _ = integrate.quad(
            lambda u: integrand(math.exp(u)) * math.exp(u),
            lo, hi, epsabs=0.0, epsrel=1e-12, limit=200,
        )
        total += value
    if not math.isfinite(total):
        raise NumericError(f"quadrature diverged on [{a:g}, {b:g}]")
    return total


class TailSampler:
    """
    Vectorised sampler of jump magnitudes with density ∝ ν¹ on [eps, upper).

    PowerLaw without truncation uses the closed quantile; everything else
    interpolates a log-log table of the tail mass.
    """

    POINTS_PER_DECADE = 100
    DECADES = 12

    def __init__(self, service: "ScalingService", phi: ScalingBase, eps: float,
                 upper: Optional[float] = None):
        if upper is not None and upper <= eps:
            raise DomainError(f"truncation {upper:g} must exceed the cutoff {eps:g}")
        self.phi = phi
        self.eps = eps
        self.upper = upper
        head = service.tail_mass(phi, eps)
        self.rate = head - (service.tail_mass(phi, upper) if upper is not None else 0.0)
        self._closed = upper is None and phi.closed_tail_quantile(eps, np.zeros(1)) is not None
        if not self._closed:
            self._build_table(service)

    def _build_table(self, service: "ScalingService"):
        top = self.upper if self.upper is not None else self.eps * 10.0 ** self.DECADES
        n = int(self.POINTS_PER_DECADE * math.log10(top / self.eps)) + 1
        log_s = np.linspace(math.log(self.eps), math.log(top), n + 1)
        nodes, weights = np.polynomial.legendre.leggauss(8)
        half = 0.5 * np.diff(log_s)
        mid = 0.5 * (log_s[1:] + log_s[:-1])
        u = mid[:, None] + half[:, None] * nodes[None, :]
        pieces = np.sum(weights[None, :] / self.phi.value(np.exp(u)), axis=1) * half
        # mass between eps and each grid point
        mass = np.concatenate([[0.0], np.cumsum(pieces)])
        top_tail = 0.0 if self.upper is not None else service.tail_mass(self.phi, top)
        # normalise the table to the Poisson rate so sampled and simulated tail mass agree
        scale = self.rate / (mass[-1] + top_tail)
        self._log_s = log_s
        self._mass = mass * scale
        self._top_tail = top_tail * scale
        self._table_rate = self.rate

    def quantile(self, u) -> np.ndarray:
        """Magnitude s with N(s) − N(upper) = (1 − u)(N(eps) − N(upper))"""
        u = np.asarray(u, dtype=float)
        if self._closed:
            return self.phi.closed_tail_quantile(self.eps, u)
        target = u * self._table_rate
        if self.upper is not None:
            return np.exp(np.interp(target, self._mass, self._log_s))
        remaining = self._table_rate - target
        tail_n = self._table_rate - self._mass
        inside = remaining >= self._top_tail
        # interpolate log s against −log N, which is close to linear for power tails
        with np.errstate(divide="ignore"):
            log_s = np.interp(-np.log(np.maximum(remaining, 1e-300)), -np.log(tail_n), self._log_s)
            top = math.exp(self._log_s[-1])
            slope = float(self.phi.log_slope(top))
            beyond = self._log_s[-1] - np.log(np.maximum(remaining, 1e-300) / self._top_tail) / slope
        return np.exp(np.where(inside, log_s, beyond))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.quantile(rng.random(size))


class ScalingService:
    """Service for operations on scaling functions"""

    # ---- evaluation --------------------------------------------------

    def eval(self, phi: ScalingBase, r):
        """φ(r) for r ≥ 0"""
        if np.any(np.asarray(r) < 0):
            raise DomainError("phi is only defined for r >= 0")
        return phi.value(r)

    def nu1(self, phi: ScalingBase, r):
        """ν¹(r) = 1/(r φ(r)) for r > 0"""
        if np.any(np.asarray(r) <= 0):
            raise DomainError("nu1 requires r > 0")
        return phi.nu1(r)

    @lru_cache(maxsize=4096)
    def inverse(self, phi: ScalingBase, t: float) -> float:
        """
        Generalized inverse φ⁻¹(t) = inf{r: φ(r) ≥ t}.

        The bracket is seeded from the certificate and grown geometrically if
        the certificate turns out to be wrong.
        """
        if not (t > 0 and math.isfinite(t)):
            raise DomainError(f"inverse requires finite t > 0, got {t}")
        closed = phi.closed_inverse(t)
        if closed is not None:
            return float(closed)
        log_t = math.log(t)
        p1 = float(phi.value(1.0))
        if p1 == t:
            return 1.0

        def gap(u: float) -> float:
            return math.log(float(phi.value(math.exp(u)))) - log_t

        ws = phi.ws
        if p1 > t:
            hi = 0.0
            lo = math.log(ws.c_lower * t / (2.0 * p1)) / ws.alpha_lower
        else:
            lo = 0.0
            hi = math.log(2.0 * t / (ws.c_lower * p1)) / ws.alpha_lower

        step = 1.0
        for _ in range(BRACKET_CAP):
            if gap(lo) < 0:
                break
            lo -= step
            step *= 2.0
        else:
            raise NumericError(f"no lower bracket for phi^-1({t:g})")
        step = 1.0
        for _ in range(BRACKET_CAP):
            if gap(hi) >= 0:
                break
            hi += step
            step *= 2.0
        else:
            raise NumericError(f"no upper bracket for phi^-1({t:g})")

        if gap(hi) == 0:
            return math.exp(hi)
        root = optimize.brentq(gap, lo, hi, xtol=1e-12, maxiter=500)
        return math.exp(root)

    def log_slope(self, phi: ScalingBase, r):
        if np.any(np.asarray(r) <= 0):
            raise DomainError("log_slope requires r > 0")
        return phi.log_slope(r)

    # ---- certificate -------------------------------------------------

    def check_ws(self, phi: ScalingBase, n_samples: int = 200) -> WsReport:
        """Scan all log-spaced pairs r ≤ R in [1e-6, 1e6] against the certificate"""
        if n_samples < 2:
            raise DomainError("check_ws needs at least two sample points")
        ws = phi.ws
        r = np.geomspace(WS_RANGE[0], WS_RANGE[1], n_samples)
        values = phi.value(r)
        monotone = bool(np.all(np.diff(values) >= 0) and np.all(values > 0))

        i, j = np.triu_indices(n_samples, k=1)
        ratio = values[j] / values[i]
        stretch = r[j] / r[i]
        lower = ws.c_lower * stretch ** ws.alpha_lower
        upper = ws.c_upper * stretch ** ws.alpha_upper
        bad = (ratio < lower * (1 - WS_TOLERANCE)) | (ratio > upper * (1 + WS_TOLERANCE))
        severity = np.maximum(lower / ratio, ratio / upper)

        violations: List[WsViolation] = []
        bad_idx = np.flatnonzero(bad)
        for k in bad_idx[np.argsort(-severity[bad_idx])][:MAX_REPORTED_VIOLATIONS]:
            violations.append(WsViolation(
                r=float(r[i[k]]), R=float(r[j[k]]), ratio=float(ratio[k]),
                lower=float(lower[k]), upper=float(upper[k]),
            ))

        report = WsReport(
            family=phi.label(),
            certificate=ws,
            n_samples=n_samples,
            n_pairs=int(ratio.size),
            n_violations=int(bad.sum()),
            violations=violations,
            worst_ratio=float(severity.max()),
            monotone=monotone,
            fitted_c_lower=float(min(1.0, np.min(ratio / stretch ** ws.alpha_lower))),
            fitted_c_upper=float(max(1.0, np.max(ratio / stretch ** ws.alpha_upper))),
        )
        if report.n_violations:
            logger.warning(f"{phi.label()}: {report.n_violations} weak-scaling violations")
        return report

    # ---- ν¹ integrals ------------------------------------------------

    @lru_cache(maxsize=4096)
    def tail_mass(self, phi: ScalingBase, eps: float) -> float:
        """N(ε) = ∫_ε^∞ ν¹(s) ds"""
        if not eps > 0:
            raise DomainError(f"tail_mass requires eps > 0, got {eps}")
        if math.isinf(eps):
            return 0.0
        closed = phi.closed_tail_mass(eps)
        if closed is not None:
            return float(closed)
        far = eps * FAR_FACTOR
        body = _quad_log(lambda s: 1.0 / (s * float(phi.value(s))), eps, far)
        slope = float(phi.log_slope(far))
        if slope <= 0:
            raise NumericError(f"nonpositive tail exponent {slope:g} at r={far:g}")
        # power-law closure: ∫_M^∞ ds / (s φ(M) (s/M)^a) = 1/(a φ(M))
        return body + 1.0 / (slope * float(phi.value(far)))

    @lru_cache(maxsize=4096)
    def small_jump_variance(self, phi: ScalingBase, eps: float) -> float:
        """σ²(ε) = 2 ∫₀^ε s/φ(s) ds"""
        if not eps > 0:
            raise DomainError(f"small_jump_variance requires eps > 0, got {eps}")
        closed = phi.closed_small_jump_variance(eps)
        if closed is not None:
            return float(closed)
        near = eps * NEAR_FACTOR
        body = _quad_log(lambda s: s / float(phi.value(s)), near, eps)
        slope = float(phi.log_slope(near))
        if slope >= 2:
            raise NumericError(f"small-jump variance diverges: exponent {slope:g} at r={near:g}")
        # power-law closure: ∫₀^m s ds / (φ(m)(s/m)^a) = m²/((2−a) φ(m))
        head = near * near / ((2.0 - slope) * float(phi.value(near)))
        return 2.0 * (body + head)

    def tail_quantile(self, phi: ScalingBase, eps: float, u: float) -> float:
        """Magnitude s ≥ eps with N(s)/N(eps) = 1 − u"""
        if not eps > 0:
            raise DomainError("tail_quantile requires eps > 0")
        if not 0 < u < 1:
            raise DomainError(f"tail_quantile requires 0 < u < 1, got {u}")
        closed = phi.closed_tail_quantile(eps, np.asarray(u))
        if closed is not None:
            return float(closed)

        log_target = math.log((1.0 - u) * self.tail_mass(phi, eps))

        def gap(v: float) -> float:
            return math.log(self.tail_mass(phi, math.exp(v))) - log_target

        lo = math.log(eps)
        hi, step = lo + 1.0, 1.0
        for _ in range(BRACKET_CAP):
            if gap(hi) <= 0:
                break
            hi += step
            step *= 2.0
        else:
            raise NumericError(f"tail quantile not bracketed for u={u}")
        return math.exp(optimize.brentq(gap, lo, hi, xtol=1e-12, maxiter=500))

    @lru_cache(maxsize=64)
    def sampler(self, phi: ScalingBase, eps: float, upper: Optional[float] = None) -> TailSampler:
        """Cached TailSampler for (φ, eps, upper)"""
        return TailSampler(self, phi, eps, upper)

    def levy_integrability(self, phi: ScalingBase) -> IntegrabilityReport:
        """∫₀¹ s/φ and N(1) against the bounds the certificate implies"""
        ws = phi.ws
        p1 = float(phi.value(1.0))
        return IntegrabilityReport(
            small_part=0.5 * self.small_jump_variance(phi, 1.0),
            small_lower=ws.c_lower / ((2.0 - ws.alpha_lower) * p1),
            small_upper=ws.c_upper / ((2.0 - ws.alpha_upper) * p1),
            large_part=self.tail_mass(phi, 1.0),
            large_lower=1.0 / (ws.c_upper * ws.alpha_upper * p1),
            large_upper=1.0 / (ws.c_lower * ws.alpha_lower * p1),
        )

    def rescale(self, phi: ScalingBase, kappa: float) -> ScalingBase:
        """φ^(κ)(r) = φ(κr)/φ(κ), keeping the certificate"""
        if not kappa > 0:
            raise DomainError(f"rescale requires kappa > 0, got {kappa}")
        return phi.rescaled(kappa)

    def round_trip_errors(self, phi: ScalingBase, n: int = 1000,
                          t_range: Tuple[float, float] = (1e-6, 1e6)) -> np.ndarray:
        """Relative errors |φ(φ⁻¹(t)) − t|/t over log-spaced t"""
        ts = np.geomspace(t_range[0], t_range[1], n)
        back = np.array([float(phi.value(self.inverse(phi, float(t)))) for t in ts])
        return np.abs(back - ts) / ts


# Global scaling service instance
scaling_service = ScalingService()
