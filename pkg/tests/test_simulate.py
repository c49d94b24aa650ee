"""
Tests for path simulation, thinning and the stable oracle
"""
import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from app.models.kernel import CheckerboardMultiplier, ConstantMultiplier, KernelSpec
from app.models.path import PathSample
from app.models.scaling import PowerLaw, SumOfPowers
from app.schemas.experiment import ProcessKind, SimConfig, SmallJumpMode
from app.services.pool import PathPool, chunk_ranges
from app.services.scaling import scaling_service
from app.services.simulate import simulation_service
from app.utils.errors import ConfigError, DomainError

CAUCHY = PowerLaw(alpha=1.0)
MIXTURE = SumOfPowers(terms=((1.0, 0.5), (1.0, 1.5)))


def make_config(phi=CAUCHY, dim=1, eps=0.1, horizon=1.0, n_paths=50, **kwargs) -> SimConfig:
    spec_kwargs = {key: kwargs.pop(key) for key in ("lambda_bound", "multiplier", "truncation") if key in kwargs}
    return SimConfig(
        spec=KernelSpec(phi=phi, dim=dim, **spec_kwargs),
        eps=eps,
        horizon=horizon,
        n_paths=n_paths,
        **kwargs,
    )


def truncated_cdf(phi, eps: float, upper):
    """CDF of ν¹ restricted to [eps, upper), from the tail mass N"""
    cut = scaling_service.tail_mass(phi, upper) if upper is not None else 0.0
    total = scaling_service.tail_mass(phi, eps) - cut

    def cdf(s):
        values = [(scaling_service.tail_mass(phi, eps) - scaling_service.tail_mass(phi, float(v))) / total
                  for v in np.atleast_1d(s)]
        return np.clip(values, 0.0, 1.0)
    return cdf


def one_jump_path() -> PathSample:
    return PathSample(
        path_index=0,
        horizon=1.0,
        start=np.zeros(1),
        times=np.array([0.5]),
        axes=np.array([0]),
        sizes=np.array([2.0]),
        accepted=np.array([True]),
        gaussian=np.zeros((2, 1)),
    )


class TestRates:
    """Jump rates and the simulability guard"""

    def test_coordinate_rate(self):
        """Two-sided rate 2 N(eps); N(eps) = 1/eps for the Cauchy kernel"""
        assert simulation_service.coordinate_rate(make_config(eps=0.5)) == pytest.approx(4.0)

    def test_truncation_below_cutoff_has_no_jumps(self):
        """λ ≤ eps leaves no jumps to simulate"""
        config = make_config(eps=0.5, truncation=0.25)
        assert simulation_service.coordinate_rate(config) == 0.0
        assert simulation_service.sample_path(config, 0).n_events == 0

    def test_drop_mode_has_no_variance(self):
        """Drop mode carries no Brownian part"""
        assert simulation_service.small_jump_variance(make_config(small_jump_mode=SmallJumpMode.DROP)) == 0.0

    def test_expected_jumps_x(self):
        """X proposals come from Λ·J^φ on every axis"""
        config = make_config(dim=2, eps=0.5, process=ProcessKind.X, lambda_bound=2.0,
                             multiplier=ConstantMultiplier(c=1.0))
        assert simulation_service.expected_jumps(config) == pytest.approx(4.0 * 2 * 2.0)

    def test_unsimulable_config_rejected(self):
        """A tiny cutoff with a heavy small-jump mass raises ConfigError"""
        config = make_config(phi=PowerLaw(alpha=1.5), eps=1e-9)
        with pytest.raises(ConfigError):
            simulation_service.check_config(config)

    def test_start_dimension_checked(self):
        """The start point must match the dimension"""
        with pytest.raises(ValidationError):
            make_config(dim=2, start=(0.0,))


class TestPaths:
    """sample_z_path and sample_x_path"""

    def test_huge_cutoff_drop_is_constant(self):
        """No jump beyond eps and no Brownian part: the path stays at its start"""
        config = make_config(dim=2, eps=1e30, small_jump_mode=SmallJumpMode.DROP, start=(1.0, -2.0))
        for index in range(20):
            path = simulation_service.sample_path(config, index)
            assert path.n_events == 0
            np.testing.assert_array_equal(path.terminal, [1.0, -2.0])

    def test_reproducible(self):
        """The same (seed, index) gives the same path"""
        config = make_config(dim=2, base_seed=11)
        first = simulation_service.sample_path(config, 7)
        second = simulation_service.sample_path(config, 7)
        np.testing.assert_array_equal(first.times, second.times)
        np.testing.assert_array_equal(first.terminal, second.terminal)

    def test_seed_changes_paths(self):
        """Different seeds give different paths"""
        a = simulation_service.terminal(make_config(base_seed=1), 0)
        b = simulation_service.terminal(make_config(base_seed=2), 0)
        assert not np.array_equal(a, b)

    def test_terminals_independent_of_workers(self):
        """Chunking and worker count do not change the terminals"""
        config = make_config(dim=2, n_paths=40, base_seed=3)
        serial = simulation_service.terminals(config, PathPool(workers=1, chunk_size=40))
        chunked = simulation_service.terminals(config, PathPool(workers=1, chunk_size=7))
        parallel = simulation_service.terminals(config, PathPool(workers=2, chunk_size=5))
        np.testing.assert_array_equal(serial, chunked)
        np.testing.assert_array_equal(serial, parallel)

    def test_event_times_sorted(self):
        """Event times increase and stay inside the horizon"""
        path = simulation_service.sample_path(make_config(dim=3, eps=0.05, horizon=2.0), 0)
        assert path.n_events > 0
        assert np.all(np.diff(path.times) > 0)
        assert path.times[-1] <= 2.0

    def test_unit_lambda_accepts_everything(self):
        """Λ = 1, λ ≡ 1: every proposal is accepted"""
        config = make_config(dim=2, process=ProcessKind.X)
        for index in range(10):
            diagnostics = simulation_service.sample_path(config, index).diagnostics
            assert diagnostics.n_accepted == diagnostics.n_proposed
            assert diagnostics.min_acceptance == 1.0

    def test_acceptance_rate(self):
        """λ ≡ 1/2 under Λ = 2 accepts a quarter of the proposals"""
        config = make_config(eps=0.5, process=ProcessKind.X, lambda_bound=2.0,
                             multiplier=ConstantMultiplier(c=0.5))
        proposed = accepted = 0
        for index in range(500):
            diagnostics = simulation_service.sample_path(config, index).diagnostics
            proposed += diagnostics.n_proposed
            accepted += diagnostics.n_accepted
        assert accepted / proposed == pytest.approx(0.25, abs=0.04)

    def test_state_dependent_thinning(self):
        """Checkerboard acceptance probabilities stay inside [low/Λ, high/Λ]"""
        config = make_config(dim=2, eps=0.2, process=ProcessKind.X, lambda_bound=2.0,
                             multiplier=CheckerboardMultiplier(low=0.5, high=2.0))
        for index in range(10):
            diagnostics = simulation_service.sample_path(config, index).diagnostics
            if diagnostics.n_proposed:
                assert diagnostics.min_acceptance >= 0.25 - 1e-12
                assert diagnostics.max_acceptance <= 1.0 + 1e-12

    def test_mean_event_count(self):
        """Mean event count matches d · 2 N(eps) · T"""
        config = make_config(dim=2, eps=0.5, horizon=1.5, small_jump_mode=SmallJumpMode.DROP)
        counts = [simulation_service.sample_path(config, i).n_events for i in range(400)]
        assert np.mean(counts) == pytest.approx(2 * 4.0 * 1.5, rel=0.1)


class TestPathFunctionals:
    """Checkpoints, exit times, rescaling and event export"""

    def test_checkpoints(self):
        """One event gives four checkpoints with matching time stamps"""
        path = one_jump_path()
        np.testing.assert_array_equal(path.checkpoints()[:, 0], [0.0, 0.0, 2.0, 2.0])
        np.testing.assert_array_equal(path.checkpoint_times(), [0.0, 0.5, 0.5, 1.0])

    def test_first_exit_time(self):
        """The jump at t = 0.5 leaves the unit ball, not the ball of radius 5"""
        path = one_jump_path()
        assert simulation_service.first_exit_time(path, (0.0,), 1.0) == 0.5
        assert simulation_service.first_exit_time(path, (0.0,), 5.0) is None

    def test_first_exit_bad_radius(self):
        """The radius must be positive"""
        with pytest.raises(DomainError):
            simulation_service.first_exit_time(one_jump_path(), (0.0,), 0.0)

    def test_events_are_one_based(self):
        """Exported axes start at 1"""
        assert one_jump_path().events() == [{"time": 0.5, "axis": 1, "size": 2.0, "accepted": True}]

    def test_unsorted_times_rejected(self):
        """Event times must increase"""
        with pytest.raises(ValidationError):
            PathSample(
                path_index=0, horizon=1.0, start=np.zeros(1),
                times=np.array([0.6, 0.4]), axes=np.array([0, 0]), sizes=np.array([1.0, 1.0]),
                accepted=np.array([True, True]), gaussian=np.zeros((3, 1)),
            )

    def test_rescale(self):
        """Rescaling divides lengths by κ and times by φ(κ)"""
        phi = PowerLaw(alpha=1.5)
        path = simulation_service.sample_path(make_config(phi=phi, dim=2, eps=0.2), 4)
        scaled = simulation_service.rescale_path(path, 2.0, phi)
        np.testing.assert_allclose(scaled.terminal, path.terminal / 2.0)
        assert scaled.horizon == pytest.approx(1.0 / 2.0 ** 1.5)
        np.testing.assert_allclose(scaled.times, path.times / 2.0 ** 1.5)

    def test_summary_record(self):
        """Summaries carry index, terminal and counters"""
        record = one_jump_path().summary()
        assert record == {"path_index": 0, "terminal": [2.0], "n_events": 1, "n_accepted": 0}

    def test_summaries_with_events(self):
        """summaries() includes event lists on request"""
        records = simulation_service.summaries(make_config(n_paths=3), events=True)
        assert [r["path_index"] for r in records] == [0, 1, 2]
        assert all(len(r["events"]) == r["n_events"] for r in records)


class TestLaws:
    """Distributional properties of simulated paths"""

    def test_unit_lambda_matches_z(self):
        """Λ = 1, λ ≡ 1: X has the law of Z coordinate by coordinate"""
        z = simulation_service.terminals(make_config(dim=2, n_paths=2000, base_seed=1))
        x = simulation_service.terminals(make_config(dim=2, n_paths=2000, base_seed=2, process=ProcessKind.X))
        for axis in range(2):
            assert stats.ks_2samp(z[:, axis], x[:, axis]).pvalue > 1e-3

    def test_z_coordinates_independent(self):
        """Coordinates of Z are uncorrelated in rank"""
        points = simulation_service.terminals(make_config(dim=2, n_paths=4000, base_seed=3))
        rho = stats.spearmanr(points[:, 0], points[:, 1]).statistic
        assert abs(rho) < 4.0 / math.sqrt(4000)

    def test_checkerboard_acceptance_frequency(self):
        """Proposals landing on low cells are accepted with probability low/Λ"""
        multiplier = CheckerboardMultiplier(low=0.5, high=2.0)
        config = make_config(dim=2, eps=0.2, process=ProcessKind.X, lambda_bound=2.0,
                             multiplier=multiplier, small_jump_mode=SmallJumpMode.DROP)
        accepted = rejected = 0
        for index in range(300):
            path = simulation_service.sample_path(config, index)
            x = path.start.copy()
            for axis, size, took in zip(path.axes, path.sizes, path.accepted):
                target = x.copy()
                target[axis] += size
                probability = float(multiplier(x, target)) / 2.0
                if probability == 1.0:
                    assert took
                elif took:
                    accepted += 1
                else:
                    rejected += 1
                if took:
                    x = target
            np.testing.assert_allclose(x, path.terminal)
        n = accepted + rejected
        assert n > 1000
        assert stats.chisquare([accepted, rejected], [0.25 * n, 0.75 * n]).pvalue > 1e-3

    @pytest.mark.parametrize("process", [ProcessKind.Z, ProcessKind.X])
    def test_sign_symmetry(self, process):
        """Started at the origin, X and −X have the same law"""
        kwargs = dict(dim=2, eps=0.2, n_paths=1500, process=process)
        if process == ProcessKind.X:
            kwargs.update(lambda_bound=2.0, multiplier=CheckerboardMultiplier(low=0.5, high=2.0))
        first = simulation_service.terminals(make_config(base_seed=4, **kwargs))
        second = simulation_service.terminals(make_config(base_seed=5, **kwargs))
        for axis in range(2):
            assert stats.ks_2samp(first[:, axis], -second[:, axis]).pvalue > 1e-3

    @pytest.mark.parametrize("phi,truncation", [(CAUCHY, 2.0), (MIXTURE, None), (MIXTURE, 3.0)],
                             ids=["cauchy-truncated", "mixture", "mixture-truncated"])
    def test_jump_sizes_follow_levy_measure(self, phi, truncation):
        """|jump| has the law of ν¹ restricted to [eps, truncation)"""
        eps = 0.1
        config = make_config(phi=phi, eps=eps, n_paths=200, base_seed=6, truncation=truncation)
        sizes = np.concatenate([simulation_service.sample_path(config, i).sizes for i in range(config.n_paths)])
        magnitudes = np.abs(sizes)
        assert magnitudes.min() >= eps
        if truncation is not None:
            assert magnitudes.max() < truncation
        assert stats.kstest(magnitudes, truncated_cdf(phi, eps, truncation)).pvalue > 1e-3

    def test_accepted_sizes_follow_levy_measure(self):
        """Thinning by a constant λ does not bias accepted jump sizes"""
        config = make_config(eps=0.1, n_paths=300, base_seed=7, process=ProcessKind.X,
                             lambda_bound=2.0, multiplier=ConstantMultiplier(c=0.5))
        paths = [simulation_service.sample_path(config, i) for i in range(config.n_paths)]
        magnitudes = np.abs(np.concatenate([p.sizes[p.accepted] for p in paths]))
        assert stats.kstest(magnitudes, truncated_cdf(CAUCHY, 0.1, None)).pvalue > 1e-3

    def test_rescaled_paths_match_direct_simulation(self):
        """κ⁻¹X_{φ(κ)t} simulated at eps has the law of X_t simulated at eps/κ"""
        phi = PowerLaw(alpha=1.5)
        coarse = make_config(phi=phi, eps=0.2, horizon=2.0 ** 1.5, n_paths=2000, base_seed=8)
        _, rescaled = simulation_service.rescaled_terminals(coarse, 2.0)
        direct = simulation_service.terminals(make_config(phi=phi, eps=0.1, n_paths=2000, base_seed=9))
        assert stats.ks_2samp(rescaled[:, 0], direct[:, 0]).pvalue > 1e-3


class TestStableOracle:
    """Stable calibration and exact draws"""

    def test_cauchy_calibration(self):
        """c_1 = π"""
        assert simulation_service.stable_calibration(1.0) == pytest.approx(math.pi, rel=1e-8)

    @pytest.mark.parametrize("alpha", [0.5, 0.9, 1.3, 1.7])
    def test_calibration_matches_closed_form(self, alpha):
        """Quadrature agrees with π / (Γ(1+α) sin(πα/2))"""
        assert simulation_service.stable_calibration(alpha) == \
            pytest.approx(simulation_service.stable_calibration_closed(alpha), rel=1e-6)

    def test_stable_scale(self):
        """c = t c_α / scale"""
        assert simulation_service.stable_scale(PowerLaw(alpha=1.0, scale=2.0), 3.0) == pytest.approx(1.5 * math.pi)

    def test_stable_scale_needs_power_law(self):
        """Only power laws have a stable oracle"""
        with pytest.raises(DomainError):
            simulation_service.stable_scale(SumOfPowers(terms=((1.0, 0.5), (1.0, 1.5))), 1.0)

    def test_exact_sample_bad_alpha(self):
        """α must lie in (0, 2)"""
        with pytest.raises(DomainError):
            simulation_service.exact_stable_sample(2.0, 1.0, np.random.default_rng(0))

    def test_exact_sample_shape(self):
        """Draws come back with the requested shape"""
        draws = simulation_service.exact_stable_sample(1.2, 1.0, np.random.default_rng(0), size=100)
        assert draws.shape == (100,)

    @pytest.mark.slow
    def test_cauchy_terminal_distribution(self):
        """Z_1 for the Cauchy kernel is Cauchy with scale π"""
        config = make_config(eps=0.01, n_paths=100_000, base_seed=5)
        samples = simulation_service.terminals(config)[:, 0]
        assert stats.kstest(samples, "cauchy", args=(0.0, math.pi)).statistic < 0.01


class TestPool:
    """chunk_ranges"""

    def test_chunk_ranges(self):
        """Chunks cover every index once, in order"""
        assert chunk_ranges(10, 4) == [(0, 4), (4, 8), (8, 10)]
        assert chunk_ranges(0, 4) == []

    def test_chunk_size_positive(self):
        """A zero chunk size is rejected"""
        with pytest.raises(ValueError):
            chunk_ranges(10, 0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
