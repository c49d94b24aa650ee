"""
Tests for the exponent ladder, dyadic decay bounds and case inequalities
"""
import math

import numpy as np
import pytest

from app.models.scaling import PowerLaw, SumOfPowers
from app.services.boxes import box_service
from app.services.ladder import ladder_service
from app.utils.errors import DomainError

CAUCHY = PowerLaw(alpha=1.0)


def mixture(alpha_lower: float, alpha_upper: float):
    """Scaling function whose exact exponents are (alpha_lower, alpha_upper)"""
    if alpha_lower == alpha_upper:
        return PowerLaw(alpha=alpha_lower)
    return SumOfPowers(terms=((1.0, alpha_lower), (1.0, alpha_upper)))


class TestTheta:
    """theta and theta_i0"""

    def test_two_dimensional_table(self):
        """d=2, α̲=ᾱ=1: θ = (1/8, 1/2), N = (4, 1)"""
        table = ladder_service.theta(2, 1.0, 1.0)
        assert table.theta == pytest.approx([0.125, 0.5])
        assert table.steps == [4, 1]
        assert table.b0 == pytest.approx(0.5)
        assert table.k0 == pytest.approx(1.0)
        assert table.threshold == pytest.approx(0.5)

    def test_three_dimensional_first_increment(self):
        """d=3, α=1: θ₀ = 1/24"""
        assert ladder_service.theta(3, 1.0, 1.0).theta[0] == pytest.approx(1.0 / 24.0)

    def test_last_level_is_b0(self):
        """θ_{d−1} = α̲/(α̲+1) in every dimension"""
        for d in range(1, 6):
            assert ladder_service.theta(d, 0.8, 1.4).theta[-1] == pytest.approx(0.8 / 1.8)

    def test_increments_increase_with_level(self):
        """Higher levels take larger steps"""
        thetas = ladder_service.theta(5, 0.7, 1.6).theta
        assert thetas == sorted(thetas)

    def test_theta_i0_top_is_b0(self):
        """θ_l^{i₀} at i₀ = d − l equals b₀"""
        assert ladder_service.theta_i0(4, 1, 3, 1.0, 1.5) == pytest.approx(0.5)

    def test_steps_reach_threshold(self):
        """N_l θ_l ≥ 1/(1+α̲) > (N_l − 1) θ_l"""
        table = ladder_service.theta(4, 0.6, 1.3)
        for theta, steps in zip(table.theta, table.steps):
            assert steps * theta >= table.threshold - 1e-12
            assert (steps - 1) * theta < table.threshold

    @pytest.mark.parametrize("args", [(0, 1.0, 1.0), (2, 0.0, 1.0), (2, 1.5, 1.0), (2, 1.0, 2.0)])
    def test_bad_arguments(self, args):
        """d ≥ 1 and 0 < α̲ ≤ ᾱ < 2"""
        with pytest.raises(DomainError):
            ladder_service.theta(*args)

    def test_theta_i0_range(self):
        """i₀ must lie in [1, d − l]"""
        with pytest.raises(DomainError):
            ladder_service.theta_i0(3, 1, 3, 1.0, 1.0)


class TestSchedule:
    """ladder_schedule"""

    def test_two_dimensional_schedule(self):
        """d=2, α=1 climbs level 0 in eighths, then level 1 in halves"""
        schedule = ladder_service.ladder_schedule(2, 1.0, 1.0)
        rules = [edge.rule for edge in schedule]
        assert rules == ["step"] * 4 + ["threshold_step", "next_level", "step", "threshold_step"]
        assert (schedule[4].target.q, schedule[4].target.l) == (0.625, 0)
        assert (schedule[5].target.q, schedule[5].target.l) == (0.0, 1)
        assert (schedule[-1].target.q, schedule[-1].target.l) == (1.0, 1)

    def test_one_dimension(self):
        """d=1 stays on level 0 and ends at H(1, 0)"""
        schedule = ladder_service.ladder_schedule(1, 1.0, 1.0)
        assert (schedule[-1].target.q, schedule[-1].target.l) == (1.0, 0)
        assert all(edge.target.l == 0 for edge in schedule)

    def test_final_upgrade(self):
        """A last-level step past the threshold is followed by the upgrade to q = 1"""
        schedule = ladder_service.ladder_schedule(1, 1.5, 1.5)
        assert [edge.rule for edge in schedule] == ["step", "final_upgrade"]
        assert schedule[0].target.q == pytest.approx(0.6)

    @pytest.mark.parametrize("d,lo,hi", [(2, 0.5, 1.5), (3, 1.0, 1.0), (4, 1.0, 1.5), (5, 1.2, 1.2)])
    def test_schedule_is_connected(self, d, lo, hi):
        """Each edge starts where the previous one ended, and q never decreases within a level"""
        schedule = ladder_service.ladder_schedule(d, lo, hi)
        assert (schedule[0].source.q, schedule[0].source.l) == (0.0, 0)
        for a, b in zip(schedule, schedule[1:]):
            assert a.target == b.source
        for edge in schedule:
            if edge.rule != "next_level":
                assert edge.target.l == edge.source.l and edge.target.q > edge.source.q
        assert (schedule[-1].target.q, schedule[-1].target.l) == (1.0, d - 1)


class TestFrakN:
    """Dyadic decay factor and its bounds"""

    def test_power_law_exact(self):
        """𝔑(δ) = 2^{−δ(1+α)} for a power law"""
        phi = PowerLaw(alpha=1.3, scale=3.0)
        for delta in range(8):
            assert ladder_service.log2_frakN(delta, 0.7, phi) == pytest.approx(-delta * 2.3)

    @pytest.mark.parametrize("phi", [
        PowerLaw(alpha=0.5),
        PowerLaw(alpha=1.8, scale=4.0),
        SumOfPowers(terms=((1.0, 0.5), (1.0, 1.5))),
        SumOfPowers(terms=((2.0, 0.2), (0.5, 1.1), (1.0, 1.9))),
    ])
    def test_bounds_hold(self, phi):
        """Every family satisfies the two-sided power bounds"""
        report = ladder_service.frakN_bounds_check(phi, (1e-3, 1.0, 1e3), 40)
        assert report.passed
        assert report.n_checked == 3 * 41
        assert report.worst_slack >= -1e-9

    def test_bad_kappa(self):
        """κ must be positive"""
        with pytest.raises(DomainError):
            ladder_service.frakN(1, 0.0, CAUCHY)


class TestGeometry:
    """geometry_context, exit_ball_radius, min_exit_level"""

    def test_example(self):
        """κ = 1: |Δ| = 3 gives n = 1, |Δ| = 1 gives n = −1"""
        ctx = ladder_service.geometry_context((0.0, 0.0), (3.0, 1.0), 1.0, CAUCHY)
        assert ctx.kappa == pytest.approx(1.0)
        assert ctx.order == [1, 0]
        assert ctx.deltas == [1.0, 3.0]
        assert ctx.n == [-1, 1]
        assert ctx.radii == [0.5, 2.0]
        assert ctx.i0 == 2
        assert ladder_service.exit_ball_radius(ctx, 2) == pytest.approx(0.25)

    def test_zero_offset(self):
        """Δ = 0 has no dyadic level"""
        ctx = ladder_service.geometry_context((0.0, 0.0), (0.0, 5.0), 1.0, CAUCHY)
        assert ctx.n[0] is None and ctx.radii[0] == 0.0

    def test_all_near(self):
        """No far axis gives i₀ = d + 1"""
        ctx = ladder_service.geometry_context((0.0, 0.0), (0.5, 1.0), 1.0, CAUCHY)
        assert ctx.i0 == 3

    def test_bracket_property(self):
        """(5/4) 2^{n} κ ≤ |Δ| < (10/4) 2^{n} κ on random pairs"""
        rng = np.random.default_rng(17)
        phi = PowerLaw(alpha=1.4)
        for _ in range(200):
            x0 = rng.uniform(-100, 100, size=3)
            y0 = x0 + rng.standard_cauchy(size=3) * 10
            ctx = ladder_service.geometry_context(x0, y0, float(rng.uniform(0.01, 10)), phi)
            for delta, n in zip(ctx.deltas, ctx.n):
                if n is not None:
                    assert 1.25 * 2.0 ** n * ctx.kappa <= delta < 2.5 * 2.0 ** n * ctx.kappa
            assert ctx.deltas == sorted(ctx.deltas)

    def test_min_exit_level_bounds_landing_boxes(self):
        """One jump from the exit ball lands in D₀ or a box of level ≥ min_exit_level"""
        rng = np.random.default_rng(23)
        checked = 0
        for _ in range(300):
            y0 = np.zeros(3)
            x0 = rng.choice([-1.0, 1.0], size=3) * rng.uniform(0.0, 200.0, size=3)
            ctx = ladder_service.geometry_context(x0, y0, 1.0, CAUCHY)
            if ctx.i0 > ctx.d:
                continue
            j0 = ctx.i0
            radius = ladder_service.exit_ball_radius(ctx, j0)
            for axis in range(1, ctx.d + 1):
                bound = ladder_service.min_exit_level(ctx, j0, axis)
                z = x0 + rng.uniform(-1, 1, size=3) * radius / math.sqrt(3)
                z[ctx.order[axis - 1]] += rng.standard_cauchy() * 50
                box = box_service.box_index(z, y0, ctx.kappa)
                if not box.is_d0:
                    assert box.k >= bound
                    checked += 1
        assert checked > 0

    def test_j0_range(self):
        """j₀ must lie in [i₀, d]"""
        ctx = ladder_service.geometry_context((0.0, 0.0), (3.0, 1.0), 1.0, CAUCHY)
        with pytest.raises(DomainError):
            ladder_service.exit_ball_radius(ctx, 1)
        with pytest.raises(DomainError):
            ladder_service.min_exit_level(ctx, 2, 3)


class TestProducts:
    """g_product and f_product"""

    def test_power_law_products(self):
        """For a power law the products are explicit powers of 2"""
        n = [1, 2, 3]
        g = ladder_service.g_product(n, 1, 1, 0.25, 1.0, CAUCHY)
        # exponents (b0 + q, q, 1) on log2 𝔑 = (−2, −4, −6)
        assert math.log2(g) == pytest.approx(0.75 * -2 + 0.25 * -4 + -6)
        f = ladder_service.f_product(n, 2, 1, 0.25, 1.0, CAUCHY)
        assert math.log2(f) == pytest.approx(0.25 * -4 + -6)

    def test_missing_level_rejected(self):
        """Products need finite n on their indices"""
        with pytest.raises(DomainError):
            ladder_service.f_product([None, 2], 1, 0, 0.1, 1.0, CAUCHY)


class TestCaseInequalities:
    """check_case_inequalities"""

    def test_case_one_example(self):
        """d=2, l=0, i₀=1, α=1, n=(1,1), q=0: Case I at j₀=1 with margin 1/2"""
        report = ladder_service.check_case_inequalities(2, 0, 1, 1.0, 1.0, 0.0, (1, 1), 1.0, CAUCHY)
        assert report.case == "I" and report.j0 == 1
        assert report.theta == pytest.approx(0.125)
        assert report.margin == pytest.approx(0.5)
        assert report.holds

    def test_case_two_example(self):
        """n=(1,4) fails every Case I bound; the exponent gap is 11/4"""
        report = ladder_service.check_case_inequalities(2, 0, 1, 1.0, 1.0, 0.0, (1, 4), 1.0, CAUCHY)
        assert report.case == "II" and report.j0 is None
        assert report.exponent_gap == pytest.approx(2.75)
        assert report.margin == pytest.approx(2.75)
        assert report.holds

    def test_trivial_case(self):
        """i₀ = d − l has zero margin for a power law"""
        report = ladder_service.check_case_inequalities(2, 0, 2, 1.0, 1.0, 0.2, (3,), 1.0, CAUCHY)
        assert report.case == "trivial"
        assert report.margin == pytest.approx(0.0, abs=1e-12)

    def test_random_configurations_hold(self):
        """No violation over a thousand random configurations"""
        rng = np.random.default_rng(2718)
        violations = []
        for _ in range(1000):
            d = int(rng.integers(2, 6))
            l = int(rng.integers(0, d - 1))
            i0 = int(rng.integers(1, d - l + 1))
            lo = float(rng.uniform(0.1, 1.9))
            hi = float(rng.uniform(lo, 1.95)) if rng.random() < 0.8 else lo
            q = float(rng.uniform(0.0, 1.0 / (1.0 + lo))) * (1 - 1e-9)
            n = np.sort(rng.integers(1, 12, size=d - l - i0 + 1)).tolist()
            kappa = float(10 ** rng.uniform(-3, 3))
            report = ladder_service.check_case_inequalities(d, l, i0, lo, hi, q, n, kappa, mixture(lo, hi))
            if not report.holds:
                violations.append(report)
        assert violations == []

    @pytest.mark.parametrize("args", [
        (2, 1, 1, 1.0, 1.0, 0.0, (1,)),      # level above d − 2
        (2, 0, 3, 1.0, 1.0, 0.0, (1,)),      # i₀ out of range
        (2, 0, 1, 1.0, 1.0, 0.5, (1, 1)),    # q at the threshold
        (2, 0, 1, 1.0, 1.0, 0.0, (1,)),      # wrong length
        (2, 0, 1, 1.0, 1.0, 0.0, (2, 1)),    # decreasing n
        (2, 0, 1, 1.0, 1.0, 0.0, (0, 1)),    # nonpositive n
    ])
    def test_domain_errors(self, args):
        """Malformed configurations are rejected"""
        with pytest.raises(DomainError):
            ladder_service.check_case_inequalities(*args, 1.0, CAUCHY)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
