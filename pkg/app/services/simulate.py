"""
Simulation Service - event-driven Monte Carlo for Z and X

Jumps longer than eps are simulated exactly as a compound Poisson process;
shorter ones are dropped or replaced by a variance-matched Brownian part.
X is obtained from the dominating kernel Λ·J^φ by thinning: a proposal of
size h along axis i at the pre-jump state x is kept with probability
λ(x, x + h e^i)/Λ.
"""
import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from scipy import integrate, special
from scipy.stats import levy_stable

from app.models.path import PathDiagnostics, PathSample
from app.models.scaling import PowerLaw, ScalingBase
from app.schemas.experiment import ProcessKind, SimConfig, SmallJumpMode
from app.services.pool import PathPool, bind
from app.services.scaling import TailSampler, scaling_service
from app.utils.errors import ConfigError, DomainError, InvariantViolation
from app.utils.rng import PathStreams

logger = logging.getLogger("simulate")

MAX_EXPECTED_JUMPS = 1e7
ACCEPTANCE_TOLERANCE = 1e-12


class SimulationService:
    """Service for path simulation"""

    # ---- rates -------------------------------------------------------

    def _sampler(self, config: SimConfig) -> Optional[TailSampler]:
        """Magnitude sampler on [eps, truncation); None when no jump is long enough"""
        trunc = config.spec.truncation
        if trunc is not None and trunc <= config.eps:
            return None
        return scaling_service.sampler(config.phi, config.eps, trunc)

    def coordinate_rate(self, config: SimConfig) -> float:
        """Jump rate of one coordinate: 2 (N(eps) − N(λ))"""
        sampler = self._sampler(config)
        return 0.0 if sampler is None else 2.0 * sampler.rate

    def small_jump_variance(self, config: SimConfig) -> float:
        """Variance rate of the Brownian part of one coordinate"""
        if config.small_jump_mode == SmallJumpMode.DROP:
            return 0.0
        cutoff = config.eps
        if config.spec.truncation is not None:
            cutoff = min(cutoff, config.spec.truncation)
        return scaling_service.small_jump_variance(config.phi, cutoff)

    def expected_jumps(self, config: SimConfig) -> float:
        """Expected number of events of one path"""
        per_axis = self.coordinate_rate(config) * config.horizon
        if config.process == ProcessKind.X:
            return per_axis * config.dim * config.spec.lambda_bound
        return per_axis * config.dim

    def check_config(self, config: SimConfig):
        """Reject configurations whose jump count is not simulable"""
        expected = self.expected_jumps(config)
        if not math.isfinite(expected) or expected > MAX_EXPECTED_JUMPS:
            raise ConfigError(
                f"expected {expected:.3g} jumps per path exceeds {MAX_EXPECTED_JUMPS:.0e}; raise eps"
            )

    # ---- paths -------------------------------------------------------

    def _gaussian(self, streams: PathStreams, dt: np.ndarray, dim: int, variance: float) -> np.ndarray:
        if variance == 0:
            return np.zeros((dt.size, dim))
        noise = streams.gaussian.standard_normal((dt.size, dim))
        return noise * np.sqrt(variance * dt)[:, None]

    def sample_z_path(self, config: SimConfig, path_index: int) -> PathSample:
        """Independent coordinates, each a compound Poisson process with kernel ν¹"""
        self.check_config(config)
        streams = PathStreams(config.base_seed, path_index)
        d, horizon = config.dim, config.horizon
        sampler = self._sampler(config)
        rate = self.coordinate_rate(config)

        counts = streams.times.poisson(rate * horizon, size=d) if rate > 0 else np.zeros(d, dtype=int)
        total = int(counts.sum())
        times = streams.times.uniform(0.0, horizon, size=total)
        axes = np.repeat(np.arange(d), counts)
        magnitudes = sampler.sample(streams.magnitudes, total) if total else np.zeros(0)
        signs = np.where(streams.signs.random(total) < 0.5, -1.0, 1.0)

        order = np.argsort(times, kind="stable")
        times, axes, sizes = times[order], axes[order], (signs * magnitudes)[order]
        dt = np.diff(np.concatenate([[0.0], times, [horizon]]))
        variance = self.small_jump_variance(config)
        gaussian = self._gaussian(streams, dt, d, variance)

        return PathSample(
            path_index=path_index,
            horizon=horizon,
            start=np.asarray(config.start_point, dtype=float),
            times=times,
            axes=axes,
            sizes=sizes,
            accepted=np.ones(total, dtype=bool),
            gaussian=gaussian,
            diagnostics=PathDiagnostics(
                n_proposed=total,
                n_accepted=total,
                n_gaussian=gaussian.size if variance > 0 else 0,
            ),
        )

    def sample_x_path(self, config: SimConfig, path_index: int) -> PathSample:
        """Thinning of the dominating kernel Λ·J^φ at the pre-jump state"""
        self.check_config(config)
        streams = PathStreams(config.base_seed, path_index)
        spec = config.spec
        d, horizon, lam = config.dim, config.horizon, spec.lambda_bound
        sampler = self._sampler(config)
        rate = self.coordinate_rate(config) * d * lam

        n = int(streams.times.poisson(rate * horizon)) if rate > 0 else 0
        times = np.sort(streams.times.uniform(0.0, horizon, size=n))
        axes = streams.axes.integers(0, d, size=n)
        magnitudes = sampler.sample(streams.magnitudes, n) if n else np.zeros(0)
        sizes = np.where(streams.signs.random(n) < 0.5, -1.0, 1.0) * magnitudes
        uniforms = streams.thinning.random(n)
        dt = np.diff(np.concatenate([[0.0], times, [horizon]]))
        variance = self.small_jump_variance(config)
        noise = streams.gaussian.standard_normal((n + 1, d)) if variance > 0 else np.zeros((n + 1, d))
        start = np.asarray(config.start_point, dtype=float)

        multiplier = spec.multiplier
        if multiplier.state_independent:
            value = float(multiplier(start, start))
            probability = np.full(n, value / lam)
            gaussian = noise * np.sqrt(value * variance * dt)[:, None]
        else:
            probability = np.empty(n)
            gaussian = np.empty((n + 1, d))
            x = start.copy()
            for k in range(n):
                gaussian[k] = noise[k] * math.sqrt(float(multiplier(x, x)) * variance * dt[k])
                x += gaussian[k]
                target = x.copy()
                target[axes[k]] += sizes[k]
                probability[k] = float(multiplier(x, target)) / lam
                if uniforms[k] < probability[k]:
                    x = target
            gaussian[n] = noise[n] * math.sqrt(float(multiplier(x, x)) * variance * dt[n])

        if n and (np.any(probability <= 0) or np.any(probability > 1 + ACCEPTANCE_TOLERANCE)):
            bad = probability[(probability <= 0) | (probability > 1 + ACCEPTANCE_TOLERANCE)][0]
            raise InvariantViolation(f"acceptance probability {bad:g} outside (0, 1]")
        accepted = uniforms < probability

        return PathSample(
            path_index=path_index,
            horizon=horizon,
            start=start,
            times=times,
            axes=axes,
            sizes=sizes,
            accepted=accepted,
            gaussian=gaussian,
            diagnostics=PathDiagnostics(
                n_proposed=n,
                n_accepted=int(accepted.sum()),
                n_gaussian=gaussian.size if variance > 0 else 0,
                min_acceptance=float(probability.min()) if n else 1.0,
                max_acceptance=float(probability.max()) if n else 1.0,
            ),
        )

    def sample_path(self, config: SimConfig, path_index: int) -> PathSample:
        if config.process == ProcessKind.X:
            return self.sample_x_path(config, path_index)
        return self.sample_z_path(config, path_index)

    def terminal(self, config: SimConfig, path_index: int) -> np.ndarray:
        return self.sample_path(config, path_index).terminal

    # ---- path functionals --------------------------------------------

    def first_exit_time(self, path: PathSample, center: Sequence[float], radius: float) -> Optional[float]:
        """
        First checkpoint time at which the path is outside the open Euclidean
        ball B(center, radius); None when it never leaves before the horizon.
        """
        if not radius > 0:
            raise DomainError(f"radius must be positive, got {radius}")
        distance = np.linalg.norm(path.checkpoints() - np.asarray(center, dtype=float), axis=1)
        outside = np.flatnonzero(distance >= radius)
        if outside.size == 0:
            return None
        return float(path.checkpoint_times()[outside[0]])

    def rescale_path(self, path: PathSample, kappa: float, phi: ScalingBase) -> PathSample:
        """Y_t = κ⁻¹ X_{φ(κ) t}: times divided by φ(κ), lengths by κ"""
        if not kappa > 0:
            raise DomainError(f"kappa must be positive, got {kappa}")
        time_scale = float(phi.value(kappa))
        return path.model_copy(update={
            "horizon": path.horizon / time_scale,
            "times": path.times / time_scale,
            "start": path.start / kappa,
            "sizes": path.sizes / kappa,
            "gaussian": path.gaussian / kappa,
        })

    # ---- stable oracle -----------------------------------------------

    def exact_stable_sample(self, alpha: float, scale_c: float, rng: np.random.Generator,
                            size: Optional[int] = None):
        """Symmetric α-stable draws with characteristic function exp(−c|ξ|^α)"""
        if not 0 < alpha < 2:
            raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
        if not scale_c > 0:
            raise DomainError(f"scale must be positive, got {scale_c}")
        return levy_stable.rvs(alpha, 0.0, loc=0.0, scale=scale_c ** (1.0 / alpha),
                               size=size, random_state=rng)

    def stable_calibration(self, alpha: float) -> float:
        """c_α = 2 ∫₀^∞ (1 − cos u) u^{−1−α} du by quadrature"""
        if not 0 < alpha < 2:
            raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
        head, _ = integrate.quad(
            lambda u: 2.0 * math.sin(0.5 * u) ** 2 * u ** (-1.0 - alpha),
            0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200,
        )
        oscillating, _ = integrate.quad(
            lambda u: u ** (-1.0 - alpha), 1.0, np.inf, weight="cos", wvar=1.0,
        )
        return 2.0 * (head + 1.0 / alpha - oscillating)

    def stable_calibration_closed(self, alpha: float) -> float:
        """π / (Γ(1+α) sin(πα/2))"""
        return math.pi / (special.gamma(1.0 + alpha) * math.sin(0.5 * math.pi * alpha))

    def stable_scale(self, phi: ScalingBase, t: float) -> float:
        """Stable scale c of Z^i_t for φ = scale·r^α: c = t c_α / scale"""
        if not isinstance(phi, PowerLaw):
            raise DomainError("the stable oracle exists only for power-law phi")
        return t * self.stable_calibration(phi.alpha) / phi.scale

    # ---- batches -----------------------------------------------------

    def terminals(self, config: SimConfig, pool: Optional[PathPool] = None) -> np.ndarray:
        """Terminal points of paths 0..n_paths−1, shape (n_paths, d)"""
        self.check_config(config)
        pool = pool or PathPool()
        chunks = pool.map(bind(terminal_chunk, config), config.n_paths)
        return np.concatenate(chunks, axis=0)

    def exit_times(self, config: SimConfig, center: Sequence[float], radius: float,
                   pool: Optional[PathPool] = None) -> np.ndarray:
        """First exit times; NaN for paths that stay inside until the horizon"""
        self.check_config(config)
        pool = pool or PathPool()
        chunks = pool.map(bind(exit_chunk, config, tuple(center), radius), config.n_paths)
        return np.concatenate(chunks)

    def max_displacements(self, config: SimConfig, center: Sequence[float],
                          pool: Optional[PathPool] = None) -> np.ndarray:
        """sup_{s ≤ T} |X_s − center| over checkpoints, one value per path"""
        self.check_config(config)
        pool = pool or PathPool()
        chunks = pool.map(bind(displacement_chunk, config, tuple(center)), config.n_paths)
        return np.concatenate(chunks)

    def rescaled_terminals(self, config: SimConfig, kappa: float,
                           pool: Optional[PathPool] = None):
        """Terminal points of the same paths before and after κ-rescaling"""
        self.check_config(config)
        pool = pool or PathPool()
        chunks = pool.map(bind(rescaled_chunk, config, kappa), config.n_paths)
        both = np.concatenate(chunks, axis=1)
        return both[0], both[1]

    def summaries(self, config: SimConfig, events: bool = False,
                  pool: Optional[PathPool] = None) -> List[dict]:
        """NDJSON records, optionally with the full event list"""
        self.check_config(config)
        pool = pool or PathPool()
        chunks = pool.map(bind(summary_chunk, config, events), config.n_paths)
        return [record for chunk in chunks for record in chunk]


# Global simulation service instance
simulation_service = SimulationService()


# ---- chunk workers (top level so they pickle) ------------------------

def terminal_chunk(config: SimConfig, start: int, stop: int) -> np.ndarray:
    out = np.empty((stop - start, config.dim))
    for row, index in enumerate(range(start, stop)):
        out[row] = simulation_service.terminal(config, index)
    return out


def exit_chunk(config: SimConfig, center, radius: float, start: int, stop: int) -> np.ndarray:
    out = np.full(stop - start, np.nan)
    for row, index in enumerate(range(start, stop)):
        exit_time = simulation_service.first_exit_time(
            simulation_service.sample_path(config, index), center, radius
        )
        if exit_time is not None:
            out[row] = exit_time
    return out


def summary_chunk(config: SimConfig, events: bool, start: int, stop: int) -> List[dict]:
    records = []
    for index in range(start, stop):
        path = simulation_service.sample_path(config, index)
        record = path.summary()
        record["n_proposed"] = path.diagnostics.n_proposed
        if events:
            record["events"] = path.events()
        records.append(record)
    return records


def displacement_chunk(config: SimConfig, center, start: int, stop: int) -> np.ndarray:
    """sup over checkpoints of |X − center| per path"""
    origin = np.asarray(center, dtype=float)
    out = np.empty(stop - start)
    for row, index in enumerate(range(start, stop)):
        path = simulation_service.sample_path(config, index)
        out[row] = float(np.max(np.linalg.norm(path.checkpoints() - origin, axis=1)))
    return out


def rescaled_chunk(config: SimConfig, kappa: float, start: int, stop: int) -> np.ndarray:
    """Terminal points before and after κ-rescaling, shape (2, stop − start, d)"""
    out = np.empty((2, stop - start, config.dim))
    for row, index in enumerate(range(start, stop)):
        path = simulation_service.sample_path(config, index)
        out[0, row] = path.terminal
        out[1, row] = simulation_service.rescale_path(path, kappa, config.phi).terminal
    return out
