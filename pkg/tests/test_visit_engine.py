import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings

from mfbwalk import (
    FormulaDiscrepancy,
    barrier_recurrence_residual,
    barrier_spectrum,
    barrier_visits,
    absorption_mass,
    boundary_coefficients,
    make_model,
    mean_time_any,
    occupancy_residual,
    reach_probability,
    site_visits,
    total_absorption,
    truncated_visits,
    visit_profile,
)
from conftest import model_strategy, random_model

# frozen oracle values (truncated solver, K = 60, tail < 1e-27)
SYM_X = {-2: 0.6188021535170064, -1: 0.7320508075688775, 0: 2.309401076758504,
         1: 0.7320508075688774, 2: 0.6188021535170063, 3: 0.19615242270663194}
DRIFT_X = {-4: 0.08893419027681684, -2: 0.5021003213538063,
           -1: 1.1122779563076701, 0: 2.8347335475692046,
           1: 1.2796447300922722, 2: 1.0042006427076127,
           3: 0.45331246793829333, 4: 0.3557367611072674}
# drift walk with N = 3 and an off-barrier start (same oracle, K = 80)
M3 = dict(p=0.35, q=0.25, p0=0.15, q0=0.25, s0=0.25, N=3, i0=1)
M3_X = {-3: 0.2766933852839672, -2: 0.4944198102171015,
        -1: 1.0205915133506633, 0: 1.75723189773765,
        1: 3.1399748154269616, 2: 2.4816004183821176,
        3: 1.559876262519337, 4: 0.5814376968153114,
        5: 0.4595247148451452, 6: 0.28884654008691246}


class TestBarrierVisits:
    def test_symmetric_goldens(self, cfg_sym):
        assert barrier_visits(cfg_sym, 0) == pytest.approx(SYM_X[0], rel=1e-10)
        assert barrier_visits(cfg_sym, 1) == pytest.approx(SYM_X[2], rel=1e-10)
        # analytic forms: x_0 = 4/sqrt(3), x_2 = x_0 (2 - sqrt(3))
        assert barrier_visits(cfg_sym, 0) == \
            pytest.approx(4.0 / math.sqrt(3.0), rel=1e-14)

    def test_drift_goldens(self, cfg_drift):
        for k in (-2, -1, 0, 1, 2):
            assert barrier_visits(cfg_drift, k) == \
                pytest.approx(DRIFT_X[2 * k], rel=1e-10)

    def test_symmetric_recurrence_value_at_zero(self, cfg_sym):
        # q0 x_N - (p0 + q0 + N s0) x_0 + p0 x_{-N} must equal i0 - N = -2
        x0 = barrier_visits(cfg_sym, 0)
        xp = barrier_visits(cfg_sym, 1)
        xm = barrier_visits(cfg_sym, -1)
        lhs = 0.25 * xp - 1.0 * x0 + 0.25 * xm
        assert lhs == pytest.approx(-2.0, abs=1e-12)

    def test_geometric_decay_ratios(self, cfg_drift):
        # left tail decays with ratio 1/xi1, right tail with ratio xi2
        spectrum = barrier_spectrum(cfg_drift)
        for k in range(-4, 1):
            ratio = barrier_visits(cfg_drift, k) / barrier_visits(cfg_drift, k - 1)
            assert ratio == pytest.approx(spectrum.xi1, rel=1e-12)
        for k in range(1, 5):
            ratio = barrier_visits(cfg_drift, k + 1) / barrier_visits(cfg_drift, k)
            assert ratio == pytest.approx(spectrum.xi2, rel=1e-12)

    def test_display_form_agrees_everywhere(self):
        rng = np.random.default_rng(11)
        with warnings.catch_warnings():
            warnings.simplefilter("error", FormulaDiscrepancy)
            for trial in range(60):
                m = random_model(rng, "DRIFT" if trial % 2 else "BALANCED")
                for k in range(-4, 5):
                    barrier_visits(m, k)

    def test_recurrence_residuals_vanish(self):
        rng = np.random.default_rng(12)
        models = [random_model(rng, "DRIFT" if t % 2 else "BALANCED")
                  for t in range(40)]
        for m in models:
            for k in range(-4, 5):
                assert abs(barrier_recurrence_residual(m, k)) < 1e-10


class TestSiteVisits:
    def test_symmetric_interior_golden(self, cfg_sym):
        assert site_visits(cfg_sym, 1) == pytest.approx(SYM_X[1], rel=1e-10)
        assert site_visits(cfg_sym, 1) == \
            pytest.approx(0.25 * (SYM_X[2] + SYM_X[0]) / (0.5 * 2), rel=1e-9)

    def test_drift_interior_golden(self, cfg_drift):
        for j, want in DRIFT_X.items():
            assert site_visits(cfg_drift, j) == pytest.approx(want, rel=1e-9)

    def test_off_barrier_start_goldens(self):
        m = make_model(**M3)
        for j, want in M3_X.items():
            assert site_visits(m, j) == pytest.approx(want, rel=1e-9)

    def test_start_interval_branches_overlap(self):
        rng = np.random.default_rng(13)
        for trial in range(30):
            branch = "DRIFT" if trial % 2 else "BALANCED"
            m = random_model(rng, branch)
            if m.i0 == 0:
                continue
            n, i0 = m.i0, m.i0
            xk = barrier_visits(m, 0)
            xk1 = barrier_visits(m, 1)
            if branch == "BALANCED":
                a = (m.q0 * n * xk1 + m.p0 * (m.N - n) * xk
                     + n * (m.N - i0)) / (m.p * m.N)
                b = (m.q0 * n * xk1 + m.p0 * (m.N - n) * xk
                     + i0 * (m.N - n)) / (m.p * m.N)
            else:
                rho = m.rho
                common = ((m.p0 / m.p) * (rho ** n - rho ** m.N) * xk
                          + (m.q0 / m.q) * (1.0 - rho ** n) * xk1)
                a = (common + (1.0 - rho ** n) * (rho ** (m.N - i0) - 1.0)
                     / (m.p - m.q)) / (1.0 - rho ** m.N)
                b = (common + (rho ** n - rho ** m.N) * (1.0 - rho ** (-i0))
                     / (m.p - m.q)) / (1.0 - rho ** m.N)
            assert a == pytest.approx(b, rel=1e-10)
            assert site_visits(m, m.i0) == pytest.approx(b, rel=1e-12)

    def test_oracle_equivalence_window(self):
        rng = np.random.default_rng(14)
        for trial in range(20):
            m = random_model(rng, "DRIFT" if trial % 2 else "BALANCED")
            tv = truncated_visits(m)
            assert tv.tail_bound < 1e-12
            for j in range(-3 * m.N, 3 * m.N + 1):
                closed = site_visits(m, j)
                assert abs(closed - tv.values[j]) / max(closed, 1e-30) < 1e-8

    def test_occupancy_balance_everywhere(self):
        rng = np.random.default_rng(15)
        for trial in range(30):
            m = random_model(rng, "DRIFT" if trial % 2 else "BALANCED")
            for j in range(-2 * m.N, 2 * m.N + 1):
                assert abs(occupancy_residual(m, j)) < 1e-10

    def test_all_visits_nonnegative(self):
        rng = np.random.default_rng(16)
        for trial in range(30):
            m = random_model(rng, "DRIFT" if trial % 2 else "BALANCED")
            assert all(site_visits(m, j) >= 0.0
                       for j in range(-2 * m.N, 2 * m.N + 1))

    def test_total_arrivals_equal_mean_time_plus_one(self):
        # every step occupies a site and so does time zero
        rng = np.random.default_rng(17)
        for trial in range(10):
            m = random_model(rng, "DRIFT" if trial % 2 else "BALANCED")
            tv = truncated_visits(m)
            half = tv.K * m.N
            total = sum(site_visits(m, j) for j in range(-half + 1, half))
            assert total == pytest.approx(mean_time_any(m, m.i0) + 1.0,
                                          rel=1e-8)


class TestAbsorption:
    def test_symmetric_masses(self, cfg_sym):
        assert absorption_mass(cfg_sym, 0) == \
            pytest.approx(0.25 * SYM_X[0], rel=1e-10)
        assert absorption_mass(cfg_sym, 1) == \
            pytest.approx(absorption_mass(cfg_sym, -1), rel=1e-13)

    def test_total_absorption_reference_configs(self, cfg_sym, cfg_drift):
        assert total_absorption(cfg_sym) == pytest.approx(1.0, abs=1e-10)
        assert total_absorption(cfg_drift) == pytest.approx(1.0, abs=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(model_strategy())
    def test_total_absorption_is_one(self, m):
        assert total_absorption(m) == pytest.approx(1.0, abs=1e-10)

    def test_masses_are_probabilities(self):
        rng = np.random.default_rng(18)
        for trial in range(20):
            m = random_model(rng, "DRIFT" if trial % 2 else "BALANCED")
            for k in range(-5, 6):
                assert 0.0 <= absorption_mass(m, k) <= 1.0


class TestReach:
    def test_self_reach_golden(self, cfg_sym):
        assert reach_probability(cfg_sym, 0, 0) == \
            pytest.approx(0.5669872981077808, rel=1e-12)

    def test_symmetry(self, cfg_sym):
        assert reach_probability(cfg_sym, 0, 2) == \
            pytest.approx(reach_probability(cfg_sym, 0, -2), rel=1e-12)

    def test_translation_invariance(self, cfg_drift):
        # starts shifted by whole periods see the same lattice
        assert reach_probability(cfg_drift, 4, 6) == \
            pytest.approx(reach_probability(cfg_drift, 0, 2), rel=1e-12)
        assert reach_probability(cfg_drift, -3, 0) == \
            pytest.approx(reach_probability(cfg_drift, 1, 4), rel=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(19)
        for trial in range(15):
            m = random_model(rng, "DRIFT" if trial % 2 else "BALANCED")
            for i, j in [(0, 1), (1, 0), (-2, 3), (2, -1), (5, 5)]:
                assert 0.0 <= reach_probability(m, i, j) <= 1.0 + 1e-12


class TestVisitProfile:
    def test_window_and_coefficients(self, cfg_sym):
        prof = visit_profile(cfg_sym, -3, 3)
        assert set(prof.values) == set(range(-6, 7))
        c1, k2 = boundary_coefficients(cfg_sym)
        assert prof.barrier_coeff_left == c1
        assert prof.barrier_coeff_right == k2
        assert c1 == pytest.approx(4.0 / math.sqrt(3.0), rel=1e-13)
        assert k2 == pytest.approx(c1, rel=1e-13)

    def test_empty_window_rejected(self, cfg_sym):
        with pytest.raises(ValueError):
            visit_profile(cfg_sym, 2, 1)
