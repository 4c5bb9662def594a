import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdeldp import conditions, fields
from sdeldp.conditions import (EnvelopeSpec, ModulusSpec, SampleConfig,
                               check_bounded_integrability, check_growth_condition,
                               check_local_integrability, check_localized_condition,
                               check_modulus_continuity, osgood_integral)
from sdeldp.errors import SingularIntegrandError, ValidationError

ONE = EnvelopeSpec.constant(1.0)
ETA_LIN = ModulusSpec(fn=lambda u: u, label="u")
GAMMA_LIN = ModulusSpec(fn=lambda u: u, kind="at-infinity", lower=1.0, label="u")


def sqrt_field_onesided():
    """b(x) = -sign(x) sqrt(|x|), sigma = 0: dissipative one-sided drift."""
    return fields.CoefficientField(
        d=1, m=1,
        drift=lambda t, x: -np.sign(np.asarray(x, dtype=float)) * np.sqrt(np.abs(x)),
        diffusion=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (1, 1)),
        label="neg-sqrt", time_invariant=True)


class TestModulusContinuity:
    def test_brownian_trivial_pass(self):
        rep = check_modulus_continuity(fields.brownian(1), ONE, ETA_LIN,
                                       SampleConfig(count=512, seed=1))
        assert rep.verdict == "pass"
        assert rep.violations == []

    def test_rotational_lipschitz_scale(self):
        # dense grid search bounds the Lipschitz ratio on the unit ball by ~5
        rep = check_modulus_continuity(
            fields.rotational(1.0), EnvelopeSpec.constant(10.0), ETA_LIN,
            SampleConfig(count=4096, seed=2, radius=1.0, gap_max=0.5))
        assert rep.passed
        assert rep.worst_ratio < 1.0

    def test_sqrt_drift_fails_linear_modulus(self):
        # |sqrt(1e-6) - 0| = 1e-3 exceeds G*H(1e-6) = 1e-6 at the pinned pair
        rep = check_modulus_continuity(
            fields.sqrt_drift(), ONE, ETA_LIN,
            SampleConfig(count=64, seed=3, include_pairs=(([0.0], [1e-6]),)))
        assert rep.verdict == "fail"
        pinned = [v for v in rep.violations if v[1] == [0.0]]
        assert pinned
        t, x, y, lhs, rhs = pinned[0]
        assert lhs == pytest.approx(1e-3)
        assert rhs == pytest.approx(1e-6)

    def test_needs_near_zero_modulus(self):
        with pytest.raises(ValidationError):
            check_modulus_continuity(fields.brownian(1), ONE, GAMMA_LIN, SampleConfig())


class TestLocalizedCondition:
    def test_boundary_equality_is_not_a_violation(self):
        assert not conditions._violates(0.0, 0.0, conditions.REL_TOL, conditions.ABS_TOL)
        assert not conditions._violates(1.0, 1.0, conditions.REL_TOL, conditions.ABS_TOL)

    def test_rotational_passes_with_constant_envelope(self):
        # grid search puts the lhs/|x-y|^2 ratio near 0.5 on the unit ball
        rep = check_localized_condition(
            fields.rotational(1.0), EnvelopeSpec.constant(4.0), ETA_LIN,
            R=1.0, c0=0.9, sampler=SampleConfig(count=4096, seed=4, gap_min=1e-8))
        assert rep.passed

    def test_one_sided_drift_passes(self):
        # monotone drift makes the inner product negative; every pair passes
        rep = check_localized_condition(
            sqrt_field_onesided(), ONE, ETA_LIN, R=1.0, c0=0.9,
            sampler=SampleConfig(count=2048, seed=5))
        assert rep.passed

    def test_weak_variant_drops_diffusion_square(self):
        rep = check_localized_condition(
            fields.rotational(1.0), EnvelopeSpec.constant(4.0), ETA_LIN,
            R=1.0, c0=0.9, sampler=SampleConfig(count=1024, seed=6),
            drop_diffusion_square=True)
        assert rep.condition_id == "localized-weak"
        assert rep.passed

    @pytest.mark.parametrize("c0", [0.0, 1.0, -0.2, 1.5])
    def test_c0_domain(self, c0):
        with pytest.raises(ValidationError):
            check_localized_condition(fields.brownian(1), ONE, ETA_LIN,
                                      R=1.0, c0=c0, sampler=SampleConfig())


class TestGrowthCondition:
    def test_rotational_zero_lhs(self):
        rep = check_growth_condition(
            fields.rotational(1.0), ONE, GAMMA_LIN, K=1.0,
            sampler=SampleConfig(count=2048, seed=7, rmax=1e3))
        assert rep.passed
        assert rep.violations == []

    def test_brownian_direct_inequality(self):
        rep = check_growth_condition(
            fields.brownian(1), ONE, GAMMA_LIN, K=1.0,
            sampler=SampleConfig(count=1024, seed=8, rmax=100.0))
        assert rep.passed

    def test_explosive_cubic_fails(self):
        # b = +x^3 gives lhs = 2 x^4; u log u cannot dominate it
        f = fields.CoefficientField(
            d=1, m=1,
            drift=lambda t, x: np.asarray(x, dtype=float) ** 3,
            diffusion=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (1, 1)),
            label="explosive", time_invariant=True)
        gamma = ModulusSpec(fn=lambda u: u * np.log(u), kind="at-infinity",
                            lower=math.e, label="u log u")
        rep = check_growth_condition(f, ONE, gamma, K=2.0,
                                     sampler=SampleConfig(count=512, seed=9, rmax=100.0))
        assert rep.verdict == "fail"
        # the example point x = 10: lhs = 2e4 against 100 log(100) + 1
        x = 10.0
        lhs = 2.0 * x ** 4
        rhs = x * x * math.log(x * x) + 1.0
        assert lhs > rhs

    def test_needs_at_infinity_modulus(self):
        with pytest.raises(ValidationError):
            check_growth_condition(fields.brownian(1), ONE, ETA_LIN, K=1.0,
                                   sampler=SampleConfig())


class TestToleranceMonotonicity:
    """Enlarging the slack never turns a pass into a fail."""

    def test_violation_counts_nonincreasing(self):
        # b(x) = x against G = 0.999, H(u) = u: every pair violates at tight
        # tolerance, none at 1% slack
        f = fields.CoefficientField(
            d=1, m=1,
            drift=lambda t, x: np.asarray(x, dtype=float),
            diffusion=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (1, 1)),
            label="linear", time_invariant=True)
        env = EnvelopeSpec.constant(0.999)
        counts = []
        for tol in (0.0, 1e-9, 1e-4, 2e-3, 0.1):
            rep = check_modulus_continuity(f, env, ETA_LIN,
                                           SampleConfig(count=256, seed=10), rel_tol=tol)
            counts.append(len(rep.violations) + (rep.samples_checked - 256 * 16) * 0)
        assert counts == sorted(counts, reverse=True)
        assert counts[0] > 0 and counts[-1] == 0


class TestIntegrabilityAudits:
    def test_truncated_field_bounded(self):
        tr = fields.truncate(fields.cubic(), 2.0)
        rep = check_bounded_integrability(tr, SampleConfig(count=512, seed=11, rmax=1e6))
        assert rep.passed
        assert math.isfinite(rep.integral)

    def test_local_integrability_cubic(self):
        rep = check_local_integrability(fields.cubic(), 5.0,
                                        SampleConfig(count=512, seed=12))
        assert rep.passed
        # sup |b| + sup ||sigma||^2 on [-5,5] is 125 + 1
        assert rep.integral == pytest.approx(126.0, rel=1e-6)


class TestOsgood:
    CUTS = np.logspace(-0.25, -12, 48)

    def test_linear_modulus_diverges(self):
        v = osgood_integral(ETA_LIN, 1.0, self.CUTS, 20.0)
        assert v.verdict == "diverges-heuristic"
        # closed form: integral down to delta is ln(1/delta)
        assert v.integral_values[-1][1] == pytest.approx(math.log(1e12), rel=1e-6)

    def test_sqrt_modulus_converges(self):
        eta = ModulusSpec(fn=np.sqrt, label="sqrt")
        v = osgood_integral(eta, 1.0, self.CUTS, 20.0)
        assert v.verdict == "converges"
        assert v.integral_values[-1][1] == pytest.approx(2.0, rel=1e-2)
        # closed form 2 - 2 sqrt(delta), tight check
        assert v.integral_values[-1][1] == pytest.approx(2.0 * (1 - 1e-6), rel=1e-6)

    def test_u_log_inverse_u_diverges(self):
        eta = ModulusSpec(fn=lambda u: u * np.log(1.0 / u), label="u log(1/u)")
        cuts = np.logspace(-1.5, -30, 115)
        v = osgood_integral(eta, 0.1, cuts, 3.0)
        assert v.verdict == "diverges-heuristic"
        closed = math.log(math.log(1e30)) - math.log(math.log(10.0))
        assert v.integral_values[-1][1] == pytest.approx(closed, rel=1e-4)

    def test_gamma_u_log_u_diverges(self):
        gamma = ModulusSpec(fn=lambda u: u * np.log(u), kind="at-infinity",
                            lower=math.e, label="u log u")
        cuts = np.logspace(1.0, 30, 117)
        v = osgood_integral(gamma, math.e, cuts, 3.0)
        assert v.verdict == "diverges-heuristic"

    def test_accumulation_monotone(self):
        v = osgood_integral(ETA_LIN, 1.0, self.CUTS, 20.0)
        vals = [t for _, t in v.integral_values]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_singular_interior_node(self):
        eta = ModulusSpec(fn=lambda u: np.where(np.asarray(u) < 1e-6, 0.0, u),
                          label="vanishing")
        with pytest.raises(SingularIntegrandError):
            osgood_integral(eta, 1.0, self.CUTS, 20.0)

    def test_cutoff_ordering_validated(self):
        with pytest.raises(ValidationError):
            osgood_integral(ETA_LIN, 1.0, [0.1, 0.2], 20.0)
        with pytest.raises(ValidationError):
            osgood_integral(GAMMA_LIN, 1.0, [100.0, 10.0], 20.0)


class TestDiagnosticWeight:
    def test_empty_integral(self):
        assert conditions.test_function(ETA_LIN, 1.0, 1.0, 0.0) == 1.0

    def test_closed_forms(self):
        assert conditions.test_function(ETA_LIN, 1.0, 1.0, 1.0) == pytest.approx(2.0, rel=1e-9)
        assert conditions.test_function(ETA_LIN, 0.5, 2.0, 2.0) == pytest.approx(25.0, rel=1e-9)

    def test_rho_must_be_positive(self):
        with pytest.raises(ValidationError):
            conditions.test_function(ETA_LIN, 0.0, 1.0, 1.0)

    @settings(max_examples=30, deadline=None)
    @given(x=st.floats(0.0, 5.0), lam=st.floats(0.1, 3.0), rho=st.floats(0.05, 2.0))
    def test_bounds_and_monotonicity(self, x, lam, rho):
        phi = conditions.test_function(ETA_LIN, rho, lam, x)
        assert 1.0 <= phi <= math.exp(lam * x / rho) * (1 + 1e-9)
        phi_further = conditions.test_function(ETA_LIN, rho, lam, x + 0.5)
        assert phi_further >= phi


class TestSpecsValidation:
    def test_modulus_kind_validated(self):
        with pytest.raises(ValidationError):
            ModulusSpec(fn=lambda u: u, kind="sideways")

    def test_modulus_audit(self):
        probs = ETA_LIN.audit(np.linspace(0, 1, 50))
        assert probs == []
        bad = ModulusSpec(fn=lambda u: -np.asarray(u), label="neg")
        assert bad.audit(np.linspace(0, 1, 50))

    def test_envelope_witness(self):
        env = EnvelopeSpec.from_fn(lambda t: 2.0 * np.ones_like(t), label="2")
        assert env.square_integral == pytest.approx(4.0, rel=1e-9)
        with pytest.raises(ValidationError):
            EnvelopeSpec.from_fn(lambda t: -np.ones_like(t))
