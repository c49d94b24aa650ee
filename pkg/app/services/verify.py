"""
Verification Service - statistical checks of the two-sided estimates

Histogram densities against the heat-kernel envelope, exit-time tails and
moments, and on-diagonal scaling. Fitted constants are reported, never
compared with fixed values: acceptance is boundedness plus a spread
threshold, and too little data gives INCONCLUSIVE rather than FAIL.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from app.models.scaling import PowerLaw, ScalingBase
from app.schemas.experiment import GridSpec, SimConfig, SmallJumpMode
from app.schemas.reports import (
    ControlReport,
    DensityHistogram,
    DiagonalReport,
    DiagonalRow,
    ExitMomentReport,
    ExitMomentRow,
    ExitTailReport,
    ExitTailRow,
    RatioCell,
    RatioReport,
    ScaleEquivarianceReport,
    Verdict,
)
from app.services.kernels import kernel_service
from app.services.pool import PathPool
from app.services.scaling import scaling_service
from app.services.simulate import simulation_service
from app.utils.errors import ConfigError, DomainError

logger = logging.getLogger("verify")

MIN_TRUSTED_COUNT = 300
ENVELOPE_MAX_SPREAD = 200.0
MOMENT_MAX_SPREAD = 10.0
DIAGONAL_MAX_SPREAD = 100.0
SLOPE_TOLERANCE = 0.1
SMALL_JUMP_TOLERANCE = 0.01
CONTROL_MARGIN = 0.1
MOMENT_HORIZON_FACTOR = 50.0
UNEXITED_LIMIT = 0.01
CONFIDENCE = 0.95


def wilson_interval(successes: int, trials: int) -> Tuple[float, float]:
    """95% Wilson score interval of a binomial proportion"""
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(
        confidence_level=CONFIDENCE, method="wilson"
    )
    return float(ci.low), float(ci.high)


class VerificationService:
    """Service for Monte-Carlo verification"""

    # ---- densities ---------------------------------------------------

    def empirical_density(self, samples: np.ndarray, grid: GridSpec) -> DensityHistogram:
        """Histogram over the grid box; samples outside go to the overflow count"""
        points = np.asarray(samples, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[0] < 1:
            raise DomainError("empirical_density needs at least one sample")
        if (
            len(grid.lower) != grid.dim
            or len(grid.upper) != grid.dim
            or any(b < 1 for b in grid.bins)
            or any(hi <= lo for lo, hi in zip(grid.lower, grid.upper))
        ):
            raise ConfigError(f"degenerate grid: {grid}")
        if points.shape[1] != grid.dim:
            raise ConfigError(f"grid has dimension {grid.dim}, samples have {points.shape[1]}")
        edges = [np.linspace(lo, hi, b + 1) for lo, hi, b in zip(grid.lower, grid.upper, grid.bins)]
        counts, _ = np.histogramdd(points, bins=edges)
        counts = counts.astype(np.int64)
        return DensityHistogram(
            edges=edges,
            counts=counts,
            n_paths=points.shape[0],
            overflow=int(points.shape[0] - counts.sum()),
        )

    def small_jump_scale(self, config: SimConfig, t: float) -> float:
        """Spread of the neglected or Gaussian-replaced small jumps at time t"""
        cutoff = config.eps
        return math.sqrt(scaling_service.small_jump_variance(config.phi, cutoff) * t)

    def small_jump_gate(self, config: SimConfig, t: float,
                        tolerance: float = SMALL_JUMP_TOLERANCE) -> bool:
        """σ(eps) ≤ tolerance · φ⁻¹(t)"""
        return self.small_jump_scale(config, t) <= tolerance * scaling_service.inverse(config.phi, t)

    def envelope_ratio_report(self, hist: DensityHistogram, t: float, start: Sequence[float],
                              phi: ScalingBase, min_count: int = MIN_TRUSTED_COUNT,
                              max_spread: float = ENVELOPE_MAX_SPREAD) -> RatioReport:
        """
        Empirical density over envelope_x at every trusted cell centre.

        PASS needs spread c₂/c₁ ≤ max_spread and, on every axis, trusted cells
        both near the start (|Δ| ≤ κ) and in the tail (|Δ| ≥ 2κ).
        """
        kappa = scaling_service.inverse(phi, t)
        centers = hist.centers()
        trusted = hist.counts >= min_count
        origin = np.asarray(start, dtype=float)
        if not np.any(trusted):
            return RatioReport(
                t=t, kappa=kappa, cells=[], n_trusted=0, min_count=min_count,
                max_spread=max_spread, verdict=Verdict.INCONCLUSIVE,
            )

        points = centers[trusted]
        density = hist.density[trusted]
        envelope = kernel_service.envelope_values(t, origin, points, phi)
        ratio = density / envelope
        counts = hist.counts[trusted]
        cells = [
            RatioCell(center=p.tolist(), density=float(de), envelope=float(en), ratio=float(r), count=int(c))
            for p, de, en, r, c in zip(points, density, envelope, ratio, counts)
        ]
        c1, c2 = float(ratio.min()), float(ratio.max())
        spread = c2 / c1

        offsets = np.abs(points - origin)
        coverage: Dict[str, bool] = {}
        for axis in range(hist.dim):
            coverage[f"axis{axis + 1}_near"] = bool(np.any(offsets[:, axis] <= kappa))
            coverage[f"axis{axis + 1}_tail"] = bool(np.any(offsets[:, axis] >= 2.0 * kappa))

        if not (c1 > 0 and math.isfinite(c2)) or spread > max_spread:
            verdict = Verdict.FAIL
        elif all(coverage.values()):
            verdict = Verdict.PASS
        else:
            verdict = Verdict.INCONCLUSIVE
        return RatioReport(
            t=t, kappa=kappa, cells=cells, n_trusted=len(cells), min_count=min_count,
            c1=c1, c2=c2, spread=spread, max_spread=max_spread, coverage=coverage,
            verdict=verdict,
        )

    def control_band_check(self, reference: RatioReport, hist: DensityHistogram, t: float,
                           start: Sequence[float], phi: ScalingBase, kind: str,
                           min_count: int = MIN_TRUSTED_COUNT, margin: float = CONTROL_MARGIN,
                           factor: Optional[float] = None) -> ControlReport:
        """
        Hold a control histogram to the band [c₁/(1+m), c₂(1+m)] of the reference run.

        Only cells trusted in both runs are judged. One whose Wilson interval,
        divided by cell volume and the envelope under phi, lies entirely outside
        the band rejects the control.
        """
        base = dict(kind=kind, t=t, family=phi.label(), factor=factor, margin=margin)
        if reference.c1 is None or reference.c2 is None:
            return ControlReport(**base, n_trusted=0, verdict=Verdict.INCONCLUSIVE)
        lower = reference.c1 / (1.0 + margin)
        upper = reference.c2 * (1.0 + margin)
        band = dict(band_lower=lower, band_upper=upper)

        centers = hist.centers()
        known = {tuple(cell.center) for cell in reference.cells}
        in_reference = np.apply_along_axis(lambda c: tuple(c.tolist()) in known, -1, centers)
        trusted = (hist.counts >= min_count) & in_reference
        if not np.any(trusted):
            return ControlReport(**base, **band, n_trusted=0, verdict=Verdict.INCONCLUSIVE)
        points = centers[trusted]
        counts = hist.counts[trusted]
        scale = hist.cell_volumes[trusted] * kernel_service.envelope_values(
            t, np.asarray(start, dtype=float), points, phi
        )

        escapes: List[float] = []
        for count, s in zip(counts, scale):
            low, high = wilson_interval(int(count), hist.n_paths)
            if high / s < lower:
                escapes.append(lower * s / high)
            elif low / s > upper:
                escapes.append(low / (s * upper))
        verdict = Verdict.FAIL if escapes else Verdict.PASS
        logger.debug(f"{kind} control: {len(escapes)} of {len(counts)} trusted cells outside the band")
        return ControlReport(
            **base, **band, n_trusted=int(len(counts)), n_outside=len(escapes),
            worst_escape=max(escapes) if escapes else None, verdict=verdict,
        )

    def wrong_phi(self, phi: ScalingBase, t: float, alpha: Optional[float] = None) -> PowerLaw:
        """
        Power law of a different exponent through (φ⁻¹(t), t).

        The exponent defaults to halfway between the certificate midpoint and 2,
        so the envelope's tail decay is visibly wrong while its scale at t is right.
        """
        ws = phi.ws
        if alpha is None:
            alpha = 0.5 * (0.5 * (ws.alpha_lower + ws.alpha_upper) + 2.0)
        kappa = scaling_service.inverse(phi, t)
        return PowerLaw(alpha=alpha, scale=t / kappa ** alpha)

    # ---- exit times --------------------------------------------------

    def exit_time_tail(self, config: SimConfig, x: Sequence[float], r_list: Sequence[float],
                       t: float, pool: Optional[PathPool] = None) -> ExitTailReport:
        """P(τ_{B(x, r φ⁻¹(t))} ≤ t) with Wilson intervals, normalised by t/φ(φ⁻¹(t) r)"""
        radii = sorted(float(r) for r in r_list)
        if not radii or radii[0] < 1:
            raise DomainError("r_list must be nonempty with entries >= 1")
        kappa = scaling_service.inverse(config.phi, t)
        run = config.model_copy(update={"horizon": t, "start": tuple(float(v) for v in x)})
        reach = simulation_service.max_displacements(run, x, pool=pool)
        n = reach.size

        rows: List[ExitTailRow] = []
        for r in radii:
            radius = r * kappa
            exits = int(np.count_nonzero(reach >= radius))
            low, high = wilson_interval(exits, n)
            weight = float(config.phi.value(radius)) / t
            p = exits / n
            rows.append(ExitTailRow(
                r=r, radius=radius, exits=exits, n_paths=n, probability=p,
                ci_low=low, ci_high=high,
                normalized=p * weight, normalized_low=low * weight, normalized_high=high * weight,
            ))

        best = max(rows, key=lambda row: row.normalized)
        if rows[-1].exits == 0:
            verdict = Verdict.INCONCLUSIVE
        elif any(b.normalized_low > 2.0 * a.normalized_high for a, b in zip(rows, rows[1:])):
            verdict = Verdict.FAIL
        else:
            verdict = Verdict.PASS
        return ExitTailReport(t=t, rows=rows, sup_const=best.normalized, sup_r=best.r, verdict=verdict)

    def mean_exit_time(self, config: SimConfig, x: Sequence[float], r: float,
                       pool: Optional[PathPool] = None) -> ExitMomentRow:
        """E[τ_{B(x, r)}] and E[τ²] with a t-interval on the mean"""
        if not r > 0:
            raise DomainError(f"radius must be positive, got {r}")
        phi_r = float(config.phi.value(r))
        horizon = max(config.horizon, MOMENT_HORIZON_FACTOR * phi_r)
        run = config.model_copy(update={"horizon": horizon, "start": tuple(float(v) for v in x)})
        taus = simulation_service.exit_times(run, x, r, pool=pool)
        exited = taus[np.isfinite(taus)]
        n = taus.size
        unexited = n - exited.size

        if exited.size >= 2:
            mean = float(exited.mean())
            sem = float(exited.std(ddof=1) / math.sqrt(exited.size))
            if sem > 0:
                low, high = stats.t.interval(CONFIDENCE, exited.size - 1, loc=mean, scale=sem)
            else:
                low = high = mean
            second = float(np.mean(exited ** 2))
        else:
            mean = low = high = second = float("nan")

        degenerate = config.eps > r / 10.0
        missed_ok = True
        if config.small_jump_mode == SmallJumpMode.GAUSSIAN:
            missed_ok = self.small_jump_scale(config, horizon) <= r / 100.0
        if unexited > UNEXITED_LIMIT * n or degenerate or exited.size < 2:
            verdict = Verdict.INCONCLUSIVE
        else:
            verdict = Verdict.PASS
        if not missed_ok:
            logger.warning(f"r={r:g}: Gaussian part may hide exits between events")
        return ExitMomentRow(
            r=r, horizon=horizon, n_paths=n, n_unexited=unexited,
            mean=mean, ci_low=float(low), ci_high=float(high), second_moment=second,
            mean_ratio=mean / phi_r, second_ratio=second / phi_r ** 2,
            missed_exit_ok=missed_ok, degenerate_cutoff=degenerate, verdict=verdict,
        )

    def exit_moments(self, config: SimConfig, x: Sequence[float], radii: Sequence[float],
                     max_spread: float = MOMENT_MAX_SPREAD,
                     pool: Optional[PathPool] = None) -> ExitMomentReport:
        """E[τ]/φ(r) and E[τ²]/φ(r)² across radii; PASS when both bands have spread ≤ max_spread"""
        rows = [self.mean_exit_time(config, x, r, pool=pool) for r in radii]
        if any(row.verdict == Verdict.INCONCLUSIVE for row in rows):
            return ExitMomentReport(rows=rows, max_spread=max_spread, verdict=Verdict.INCONCLUSIVE)
        means = [row.mean_ratio for row in rows]
        seconds = [row.second_ratio for row in rows]
        mean_spread = max(means) / min(means)
        second_spread = max(seconds) / min(seconds)
        passed = mean_spread <= max_spread and second_spread <= max_spread
        return ExitMomentReport(
            rows=rows,
            mean_spread=mean_spread,
            second_spread=second_spread,
            max_spread=max_spread,
            verdict=Verdict.PASS if passed else Verdict.FAIL,
        )

    # ---- on-diagonal -------------------------------------------------

    def on_diagonal_check(self, config: SimConfig, t_list: Sequence[float],
                          min_count: int = MIN_TRUSTED_COUNT,
                          max_spread: float = DIAGONAL_MAX_SPREAD,
                          slope_tolerance: float = SLOPE_TOLERANCE,
                          pool: Optional[PathPool] = None) -> DiagonalReport:
        """
        Density in the cube |Δ^i| ≤ φ⁻¹(t)/8 times φ⁻¹(t)^d, uniformly over t.
        For power-law φ the log-log slope must also match −d/α.
        """
        times = sorted(float(t) for t in t_list)
        if len(set(times)) < 2:
            raise DomainError("t_list needs at least two distinct times")
        d = config.dim
        start = np.asarray(config.start_point, dtype=float)
        rows: List[DiagonalRow] = []
        for t in times:
            kappa = scaling_service.inverse(config.phi, t)
            points = simulation_service.terminals(config.with_horizon(t), pool=pool)
            inside = np.all(np.abs(points - start) <= kappa / 8.0, axis=1)
            count = int(np.count_nonzero(inside))
            n = points.shape[0]
            volume = (kappa / 4.0) ** d
            low, high = wilson_interval(count, n)
            density = count / (n * volume)
            rows.append(DiagonalRow(
                t=t, kappa=kappa, count=count, density=density,
                normalized=density * kappa ** d,
                ci_low=low / volume * kappa ** d, ci_high=high / volume * kappa ** d,
            ))

        if any(row.count < min_count for row in rows):
            return DiagonalReport(rows=rows, verdict=Verdict.INCONCLUSIVE)
        normalized = [row.normalized for row in rows]
        spread = max(normalized) / min(normalized)
        fit = stats.linregress(np.log([row.t for row in rows]), np.log([row.density for row in rows]))
        slope = float(fit.slope)
        expected = -d / config.phi.alpha if isinstance(config.phi, PowerLaw) else None
        passed = spread <= max_spread
        if expected is not None:
            passed = passed and abs(slope - expected) <= slope_tolerance
        return DiagonalReport(
            rows=rows, spread=spread, slope=slope, expected_slope=expected,
            verdict=Verdict.PASS if passed else Verdict.FAIL,
        )

    # ---- harness checks ----------------------------------------------

    def scale_equivariance_check(self, config: SimConfig, kappa: float, grid: GridSpec,
                                 pool: Optional[PathPool] = None) -> ScaleEquivarianceReport:
        """
        Histogram of X_T on grid against the histogram of the κ-rescaled
        paths on grid/κ. Bin-for-bin equality is exact when κ is a power of 2.
        """
        original, rescaled = simulation_service.rescaled_terminals(config, kappa, pool=pool)
        first = self.empirical_density(original, grid)
        second = self.empirical_density(rescaled, grid.scaled(kappa))
        return ScaleEquivarianceReport(
            kappa=kappa,
            n_bins=int(first.counts.size),
            mismatched_bins=int(np.count_nonzero(first.counts != second.counts)),
            overflow_original=first.overflow,
            overflow_rescaled=second.overflow,
        )


# Global verification service instance
verification_service = VerificationService()
