import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdeldp import fields
from sdeldp.errors import DivergenceError, ValidationError
from sdeldp.skeleton import (ControlPath, SamplePath, common_nodes, energy,
                             integrate_skeleton, integrate_skeleton_euler,
                             skeleton_gap)
from conftest import make_random_control


class TestControlPath:
    def test_invariants(self):
        with pytest.raises(ValidationError):
            ControlPath(np.array([0.0, 0.5]), np.array([[0.0], [1.0]]))  # grid not to 1
        with pytest.raises(ValidationError):
            ControlPath(np.array([0.0, 1.0]), np.array([[1.0], [0.0]]))  # l(0) != 0
        with pytest.raises(ValidationError):
            ControlPath(np.array([0.0, 0.0, 1.0]), np.zeros((3, 1)))  # not increasing

    def test_interpolation(self):
        l = ControlPath(np.array([0.0, 0.5, 1.0]), np.array([[0.0], [1.0], [1.0]]))
        assert l.at(0.25)[0] == pytest.approx(0.5)
        assert l.at(0.75)[0] == pytest.approx(1.0)

    def test_from_slopes_roundtrip(self, rng):
        l = make_random_control(rng, m=2, intervals=7)
        l2 = ControlPath.from_slopes(l.grid, l.slopes)
        assert np.allclose(l.values, l2.values, atol=1e-12)


class TestEnergy:
    def test_zero_control(self):
        assert energy(ControlPath.zero(3)) == 0.0

    def test_constant_slope(self):
        v = np.array([1.2, -1.6])  # |v| = 2
        assert energy(ControlPath.linear(v, nodes=9)) == pytest.approx(4.0, rel=1e-12)

    def test_two_piece(self):
        l = ControlPath(np.array([0.0, 0.5, 1.0]), np.array([[0.0], [1.0], [1.0]]))
        assert energy(l) == pytest.approx(2.0)

    @settings(max_examples=25, deadline=None)
    @given(c=st.floats(-5, 5, allow_nan=False), seed=st.integers(0, 10 ** 6))
    def test_quadratic_scaling(self, c, seed):
        l = make_random_control(np.random.default_rng(seed), m=2, intervals=6)
        scaled = ControlPath(l.grid, c * l.values)
        assert energy(scaled) == pytest.approx(c * c * energy(l), rel=1e-12, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10 ** 6))
    def test_collinear_refinement_invariance(self, seed):
        l = make_random_control(np.random.default_rng(seed), m=1, intervals=5)
        # insert midpoints: the piecewise-linear function is unchanged
        mid = 0.5 * (l.grid[:-1] + l.grid[1:])
        grid = np.sort(np.concatenate([l.grid, mid]))
        refined = ControlPath(grid, l.at(grid))
        assert energy(refined) == pytest.approx(energy(l), rel=1e-12)


class TestSkeletonFlow:
    def test_state_independent_exact(self, rng):
        br = fields.brownian(2)
        l = make_random_control(rng, m=2, intervals=8)
        path = integrate_skeleton(br, l, 4, np.array([0.3, -0.2]))
        ia, ib = common_nodes(path.grid, l.grid)
        assert np.allclose(path.values[ia], np.array([0.3, -0.2]) + l.values[ib], atol=1e-14)

    def test_ou_closed_form(self):
        ou = fields.ornstein_uhlenbeck(-1.0)
        path = integrate_skeleton(ou, ControlPath.zero(1), 10 ** 4, np.array([1.0]))
        assert abs(path.values[-1, 0] - math.exp(-1.0)) < 1e-3

    def test_rotational_radius_law(self):
        # |F(0)(t)|^2 solves v' = -2 v^2, v(0)=1, so v(1) = 1/3
        rot = fields.rotational(1.0)
        path = integrate_skeleton(rot, ControlPath.zero(1), 10 ** 4, np.array([1.0, 0.0]))
        assert np.sum(path.values[-1] ** 2) == pytest.approx(1.0 / 3.0, abs=1e-3)

    def test_divergence_detected(self):
        f = fields.CoefficientField(
            d=1, m=1,
            drift=lambda t, x: np.asarray(x, dtype=float) ** 7,
            diffusion=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (1, 1)),
            label="explosive", time_invariant=True)
        with pytest.raises(DivergenceError):
            integrate_skeleton(f, ControlPath.zero(1), 100, np.array([3.0]))


class TestFrozenEuler:
    def test_state_independent_matches_flow(self, rng):
        br = fields.brownian(1)
        l = make_random_control(rng, m=1, intervals=5)
        poly = integrate_skeleton_euler(br, l, 16, np.array([0.0]))
        flow = integrate_skeleton(br, l, 16, np.array([0.0]))
        ia, ib = common_nodes(poly.grid, flow.grid)
        assert ia.size >= l.grid.size
        assert np.allclose(poly.values[ia], flow.values[ib], atol=1e-14)

    def test_single_step(self):
        ou = fields.ornstein_uhlenbeck(-1.0)
        poly = integrate_skeleton_euler(ou, ControlPath.zero(1), 1, np.array([1.0]))
        assert poly.values[-1, 0] == 0.0

    def test_first_order_convergence(self):
        ou = fields.ornstein_uhlenbeck(-1.0)
        errs = []
        for n in (10, 100, 1000):
            poly = integrate_skeleton_euler(ou, ControlPath.zero(1), n, np.array([1.0]))
            errs.append(abs(poly.values[-1, 0] - math.exp(-1.0)))
        assert errs[0] > errs[1] > errs[2]
        assert errs[0] / errs[1] == pytest.approx(10.0, rel=0.15)
        assert errs[1] / errs[2] == pytest.approx(10.0, rel=0.15)


class TestSkeletonGap:
    def test_state_independent_zero(self, rng):
        br = fields.brownian(1)
        l = make_random_control(rng, m=1, intervals=5)
        assert skeleton_gap(br, l, 20, 1000, np.array([0.0])) == pytest.approx(0.0, abs=1e-13)

    def test_ou_gap_magnitude(self):
        # global Euler error for x' = -x lands near e^{-1}/(2n)
        g = skeleton_gap(fields.ornstein_uhlenbeck(-1.0), ControlPath.zero(1),
                         100, 10 ** 5, np.array([1.0]))
        assert 1e-3 < g < 1e-2

    def test_rotational_halving(self):
        rot = fields.rotational(1.0)
        l = ControlPath.linear(np.array([1.0]))
        ref = integrate_skeleton(rot, l, 10 ** 4, np.array([1.0, 0.0]))
        g50 = skeleton_gap(rot, l, 50, 10 ** 4, np.array([1.0, 0.0]), reference=ref)
        g200 = skeleton_gap(rot, l, 200, 10 ** 4, np.array([1.0, 0.0]), reference=ref)
        assert g200 < g50 / 2.0

    def test_reference_must_be_finer(self):
        with pytest.raises(ValidationError):
            skeleton_gap(fields.brownian(1), ControlPath.zero(1), 100, 5, np.array([0.0]))


class TestBoundedness:
    def test_rotational_sublevel_controls_stay_in_ball(self):
        """Energy-bounded controls cannot push the planar field far out:
        trajectories of 100 random controls with e(l) <= 4 stay in a fixed
        ball, and the empirical radius is stable across the batch."""
        rot = fields.rotational(1.0)
        rng = np.random.default_rng(99)
        sups = []
        for _ in range(100):
            l = make_random_control(rng, m=1, intervals=10, energy_budget=4.0)
            path = integrate_skeleton(rot, l, 100, np.array([1.0, 0.0]))
            sups.append(path.sup_norm())
        sups = np.array(sups)
        assert np.all(sups < 3.0)
        # stability: the two batch halves see the same envelope (within 25%)
        assert np.max(sups[:50]) == pytest.approx(np.max(sups[50:]), rel=0.25)
