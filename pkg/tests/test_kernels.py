"""
Tests for jump kernels, multipliers and heat-kernel envelopes
"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from pydantic import ValidationError

from app.models.kernel import (
    AxisValue,
    CheckerboardMultiplier,
    ConstantMultiplier,
    DiagonalValue,
    KernelSpec,
    WaveMultiplier,
    ZeroValue,
)
from app.models.scaling import PowerLaw, SumOfPowers
from app.services.kernels import kernel_service
from app.utils.errors import DomainError

CAUCHY = PowerLaw(alpha=1.0)

phis = st.sampled_from([
    PowerLaw(alpha=0.6),
    PowerLaw(alpha=1.0),
    PowerLaw(alpha=1.7, scale=2.0),
    SumOfPowers(terms=((1.0, 0.5), (1.0, 1.5))),
])
coords = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_subnormal=False)


def points(dim: int):
    return st.lists(coords, min_size=dim, max_size=dim)


class TestJumpKernel:
    """J^φ, J and J_λ"""

    def test_axis_pair(self):
        """Pairs differing in one coordinate get ν¹ of the gap"""
        value = kernel_service.jump_kernel_phi((0.0, 0.0), (2.0, 0.0), CAUCHY)
        assert value == AxisValue(axis=1, value=0.25)

    def test_off_axis_pair(self):
        """Pairs differing in two coordinates carry no mass"""
        assert isinstance(kernel_service.jump_kernel_phi((0.0, 0.0), (1.0, 1.0), CAUCHY), ZeroValue)

    def test_diagonal(self):
        """x = y is a distinct variant, not a number"""
        assert isinstance(kernel_service.jump_kernel_phi((1.0, 2.0), (1.0, 2.0), CAUCHY), DiagonalValue)

    def test_dimension_mismatch(self):
        """Points of different dimension are rejected"""
        with pytest.raises(DomainError):
            kernel_service.jump_kernel_phi((0.0,), (1.0, 0.0), CAUCHY)

    def test_constant_multiplier_matches_base(self):
        """λ ≡ 1 reproduces J^φ"""
        spec = KernelSpec(phi=CAUCHY, dim=2)
        assert kernel_service.jump_kernel((0.0, 0.0), (0.0, 3.0), spec) == \
            kernel_service.jump_kernel_phi((0.0, 0.0), (0.0, 3.0), CAUCHY)

    def test_checkerboard_within_bounds(self):
        """Checkerboard values stay within [1/2, 2] times the base value"""
        spec = KernelSpec(
            phi=CAUCHY, dim=2, lambda_bound=2.0,
            multiplier=CheckerboardMultiplier(low=0.5, high=2.0),
        )
        rng = np.random.default_rng(1)
        for _ in range(200):
            x = rng.uniform(-5, 5, size=2)
            y = x.copy()
            y[rng.integers(2)] += rng.uniform(0.1, 5.0)
            value = kernel_service.jump_kernel(x, y, spec).value
            base = kernel_service.jump_kernel_phi(x, y, CAUCHY).value
            assert 0.5 * base * (1 - 1e-12) <= value <= 2.0 * base * (1 + 1e-12)

    def test_wave_multiplier_value(self):
        """λ = 1 + 0.5 cos(Δ) scales the base value"""
        spec = KernelSpec(phi=CAUCHY, dim=1, lambda_bound=2.0, multiplier=WaveMultiplier(amplitude=0.5))
        value = kernel_service.jump_kernel((0.0,), (1.3,), spec).value
        assert value == pytest.approx((1 + 0.5 * math.cos(1.3)) / 1.3 ** 2)

    def test_multiplier_outside_lambda_rejected(self):
        """A multiplier range wider than [1/Λ, Λ] is rejected at construction"""
        with pytest.raises(ValidationError):
            KernelSpec(phi=CAUCHY, lambda_bound=1.5, multiplier=CheckerboardMultiplier(low=0.5, high=2.0))

    @given(points(2), st.integers(min_value=0, max_value=1))
    def test_kernel_symmetry(self, x, axis):
        """J(x, y) = J(y, x) for axis pairs under the checkerboard multiplier"""
        y = list(x)
        y[axis] += 1.5
        spec = KernelSpec(
            phi=CAUCHY, dim=2, lambda_bound=2.0,
            multiplier=CheckerboardMultiplier(low=0.5, high=2.0),
        )
        assert kernel_service.jump_kernel(x, y, spec) == kernel_service.jump_kernel(y, x, spec)

    def test_truncation(self):
        """Jumps longer than λ vanish, shorter ones are unchanged"""
        spec = KernelSpec(phi=CAUCHY, dim=2)
        truncated = kernel_service.truncate(spec, 1.0)
        assert isinstance(kernel_service.jump_kernel((0.0, 0.0), (2.0, 0.0), truncated), ZeroValue)
        assert kernel_service.jump_kernel((0.0, 0.0), (0.5, 0.0), truncated) == \
            kernel_service.jump_kernel((0.0, 0.0), (0.5, 0.0), spec)

    def test_truncation_infinite_is_identity(self):
        """λ = ∞ leaves the kernel unchanged"""
        spec = KernelSpec(phi=CAUCHY)
        assert kernel_service.truncate(spec, math.inf) == spec

    def test_truncation_nonpositive_rejected(self):
        """λ must be positive"""
        with pytest.raises(DomainError):
            kernel_service.truncate(KernelSpec(phi=CAUCHY), 0.0)

    def test_multiplier_bounds(self):
        """Wave multipliers range over 1 ± amplitude"""
        spec = KernelSpec(phi=CAUCHY, lambda_bound=2.0, multiplier=WaveMultiplier(amplitude=0.5))
        assert kernel_service.multiplier_bounds(spec) == (0.5, 1.5)

    def test_default_multiplier(self):
        """Specs default to λ ≡ 1"""
        assert KernelSpec(phi=CAUCHY).multiplier == ConstantMultiplier()


class TestEnvelopes:
    """envelope_z, envelope_x and their vectorised form"""

    def test_diagonal_value(self):
        """x = y gives [φ⁻¹(t)]^{−d}"""
        value = kernel_service.envelope_x(8.0, (1.0, 1.0), (1.0, 1.0), PowerLaw(alpha=1.5))
        assert value.value == pytest.approx(4.0 ** -2)
        assert value.per_axis_factors == [1.0, 1.0]

    def test_one_dimensional_example(self):
        """PowerLaw(1), t=1, |Δ|=2 gives 1/4"""
        assert kernel_service.envelope_z(1.0, (0.0,), (2.0,), CAUCHY).value == pytest.approx(0.25)

    def test_two_dimensional_example(self):
        """PowerLaw(1), t=1, Δ=(2,4) gives (1/4)(1/16)"""
        value = kernel_service.envelope_x(1.0, (0.0, 0.0), (2.0, 4.0), CAUCHY)
        assert value.value == pytest.approx(0.25 / 16.0)
        assert value.per_axis_factors == pytest.approx([0.25, 1.0 / 16.0])

    def test_nonpositive_time_rejected(self):
        """t must be positive"""
        with pytest.raises(DomainError):
            kernel_service.envelope_x(0.0, (0.0,), (1.0,), CAUCHY)

    @given(phis, st.floats(min_value=1e-3, max_value=1e3), points(3), points(3))
    def test_forms_agree(self, phi, t, x, y):
        """envelope_z ≡ envelope_x to 1e-12 relative"""
        z = kernel_service.envelope_z(t, x, y, phi).value
        xv = kernel_service.envelope_x(t, x, y, phi).value
        assert xv == pytest.approx(z, rel=1e-12)

    @given(phis, st.floats(min_value=1e-2, max_value=1e2), points(2), points(2))
    def test_symmetry_and_permutation(self, phi, t, x, y):
        """Swapping x and y, or permuting coordinates, leaves the value unchanged"""
        value = kernel_service.envelope_x(t, x, y, phi).value
        assert kernel_service.envelope_x(t, y, x, phi).value == pytest.approx(value, rel=1e-14)
        swapped = kernel_service.envelope_x(t, x[::-1], y[::-1], phi).value
        assert swapped == pytest.approx(value, rel=1e-14)

    @given(phis, st.floats(min_value=1e-2, max_value=1e2),
           st.floats(min_value=1e-3, max_value=1e3), st.floats(min_value=1.0, max_value=10.0))
    def test_factor_monotone(self, phi, t, delta, stretch):
        """Axis factors do not increase with |Δ|"""
        near = kernel_service.envelope_x(t, (0.0,), (delta,), phi).per_axis_factors[0]
        far = kernel_service.envelope_x(t, (0.0,), (delta * stretch,), phi).per_axis_factors[0]
        assert far <= near * (1 + 1e-12)

    def test_power_law_closed_form(self):
        """PowerLaw(α): t^{−d/α} Π(1 ∧ t^{1+1/α}/|Δ|^{1+α})"""
        alpha, t = 1.5, 0.7
        phi = PowerLaw(alpha=alpha)
        delta = (0.3, 2.5)
        expected = t ** (-2 / alpha) * math.prod(min(1.0, t ** (1 + 1 / alpha) / d ** (1 + alpha)) for d in delta)
        assert kernel_service.envelope_x(t, (0.0, 0.0), delta, phi).value == pytest.approx(expected, rel=1e-12)

    def test_large_time_limit(self):
        """As t grows the prefactor vanishes and the factors saturate"""
        value = kernel_service.envelope_x(1e8, (0.0,), (1.0,), CAUCHY)
        assert value.per_axis_factors == [1.0]
        assert value.prefactor == pytest.approx(1e-8)

    def test_vectorised_matches_scalar(self):
        """envelope_values agrees with envelope_x row by row"""
        rng = np.random.default_rng(5)
        grid = rng.uniform(-10, 10, size=(50, 2))
        batch = kernel_service.envelope_values(2.0, (0.5, -1.0), grid, CAUCHY)
        single = [kernel_service.envelope_x(2.0, (0.5, -1.0), p, CAUCHY).value for p in grid]
        np.testing.assert_allclose(batch, single, rtol=1e-12)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
