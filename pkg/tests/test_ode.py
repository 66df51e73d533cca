"""Homogeneous integration and equilibrium location.

The positive-equilibrium golden values come from the reported steady state
(B, p, P) = (16.2785, 0.1920, 0.0080) of the persistent regime; note the
middle entry is internal phosphorus, so the quota there is p/B = 0.0118.
"""

import numpy as np
import pytest

from bloomsim.core import HomState, b_bar, default_params
from bloomsim.ode import find_equilibrium, integrate_homogeneous

U_STAR = (16.2785, 0.1920, 0.0080)


class TestIntegrateHomogeneous:
    def test_extinction_equilibrium_stays_fixed(self, params_case2):
        start = HomState(0.0, 0.0, params_case2.P_h)
        traj = integrate_homogeneous(start, params_case2, 100.0)
        assert np.allclose(traj.y, traj.y[:, :1], atol=1e-12)

    def test_case3_reaches_reported_equilibrium(self, params_case3):
        start = HomState(5.0, 5.0 * 0.02, 0.15)
        traj = integrate_homogeneous(start, params_case3, 4000.0, rtol=1e-10, atol=1e-12)
        final = traj.final_state()
        for got, want in zip((final.B, final.p, final.P), U_STAR):
            assert abs(got - want) / want < 0.01
        # equivalently (B, Q, P) = (16.2785, 0.0118, 0.0080)
        assert final.quota(params_case3) == pytest.approx(0.0118, rel=0.01)

    def test_case2_biomass_dies_out(self, params_case2):
        start = HomState(5.0, 5.0 * 0.02, 0.15)
        traj = integrate_homogeneous(start, params_case2, 4000.0, rtol=1e-10, atol=1e-13)
        assert traj.B[-1] < 1e-3

    def test_quota_tube_and_positivity_along_trajectory(self, params_case3):
        start = HomState(0.5, 0.5 * params_case3.Q_m, 1.0)  # starved cells
        traj = integrate_homogeneous(start, params_case3, 500.0)
        q = traj.quota()
        assert q.min() >= params_case3.Q_m - 1e-6
        assert q.max() <= params_case3.Q_M + 1e-6
        assert traj.y.min() > -1e-10
        assert np.all(traj.B > 0.0)

    def test_closed_budget_without_exchange(self):
        p = default_params(r=1.0, P_h=0.2, D=0.0, P_in=0.0)
        start = HomState(3.0, 3.0 * 0.02, 0.4)
        traj = integrate_homogeneous(start, p, 200.0, rtol=1e-10, atol=1e-13)
        total = traj.p + traj.P
        assert np.abs(total - total[0]).max() / total[0] < 1e-8

    def test_biomass_bound_when_bbar_positive(self, params_case3):
        bb = b_bar(params_case3)
        assert bb > 0
        start = HomState(900.0, 900.0 * 0.02, 2.0)
        traj = integrate_homogeneous(start, params_case3, 800.0)
        assert traj.B.max() <= max(start.B, bb) + 1e-6

    def test_invalid_arguments(self, params_case2):
        with pytest.raises(ValueError):
            integrate_homogeneous(HomState(1.0, 0.02, 0.1), params_case2, -5.0)
        with pytest.raises(ValueError):
            integrate_homogeneous(HomState(1.0, 0.02, 0.1), params_case2, 10.0, rtol=0.0)


class TestFindEquilibrium:
    def test_no_phosphorus_gives_bare_extinction(self, params_case1):
        state, kind = find_equilibrium(params_case1)
        assert kind == "extinction"
        assert state.B == 0.0 and state.p == 0.0
        assert state.P == pytest.approx(params_case1.P_h)

    def test_case2_returns_extinction_at_P_h(self, params_case2):
        state, kind = find_equilibrium(params_case2)
        assert kind == "extinction"
        assert (state.B, state.p, state.P) == (0.0, 0.0, pytest.approx(0.2))

    def test_case3_matches_long_integration(self, params_case3):
        state, kind = find_equilibrium(params_case3)
        assert kind == "positive"
        traj = integrate_homogeneous(
            HomState(5.0, 0.1, 0.15), params_case3, 4000.0, rtol=1e-11, atol=1e-13
        )
        oracle = traj.y[:, -1]
        got = state.as_array()
        assert np.all(np.abs(got - oracle) / np.abs(oracle) < 1e-6)

    def test_residual_below_tolerance(self, params_case3):
        from bloomsim.core import reaction_rhs

        state, _ = find_equilibrium(params_case3, rtol=1e-12)
        res = np.linalg.norm(reaction_rhs(state, params_case3))
        assert res < 1e-12 * max(1.0, np.linalg.norm(state.as_array(), np.inf))

    def test_extinction_with_external_source(self):
        p = default_params(r=0.7, P_h=0.1, P_in=0.001)
        state, kind = find_equilibrium(p)
        if kind == "extinction":
            assert state.P == pytest.approx(p.P_h + p.P_in / p.exchange)

    def test_poor_guess_falls_back_to_integration(self, params_case3):
        # a guess near the (unstable) extinction state still finds E*
        state, kind = find_equilibrium(params_case3, guess=HomState(1e-3, 1e-3 * 0.01, 0.2))
        assert kind == "positive"
        assert state.B == pytest.approx(U_STAR[0], rel=0.01)
