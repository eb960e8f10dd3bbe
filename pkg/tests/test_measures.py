"""Conditional risk measures: crossing level, deltas, MES, sensitivities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from corisk.copulas import (
    ComonotoneCopula,
    CountermonotoneCopula,
    GumbelCopula,
    IndependenceCopula,
    fit_beta_copula,
    pseudo_observations,
    sample_gumbel,
    tau_to_theta,
)
from corisk.exceptions import SolverError
from corisk.margins import GpdTail, LossSample, NormalParams, StudentTParams, hist_es
from corisk.measures import (
    RiskLevelPair,
    SensitivityInput,
    analytic_normal_eqcond,
    analytic_t_eqcond,
    coes,
    covar,
    delta_measures,
    estimate_from_losses,
    gpd_corisk_closed_forms,
    gumbel_omega_equation,
    hist_mes,
    mes,
    sensitivity_coes,
    sensitivity_covar,
    sensitivity_dcoes,
    slide_covar,
    solve_omega,
    xi_from_ratio,
)

THETA = 1.0 / 0.45
LEVELS = RiskLevelPair(0.95, 0.95)
T3 = StudentTParams(3.0)

# Frozen reference values for the Gumbel(theta = 1/0.45) + t(3) pipeline at
# alpha = beta = 0.95, obtained from an independent Brent solve of the
# survival equation and quadrature of the tail integrals.
OMEGA_REF = 0.997472664034929
DCOV_REF = 5.071827126283732
DCOES_REF = 7.383256908542629
RATIO_REF = 1.455739070892297
XI_REF = 0.31306370764161134
MES_REF = 3.3755033364276525  # alpha = 0.95, beta = 0 boundary case


class TestRiskLevelPair:
    def test_bounds(self):
        levels = RiskLevelPair(0.95, 0.95)
        assert levels.independence_omega == 0.95
        assert levels.comonotone_omega == pytest.approx(0.9975, rel=1e-15)

    def test_boundary_beta_zero_allowed(self):
        assert RiskLevelPair(0.9, 0.0).beta == 0.0

    @pytest.mark.parametrize("alpha,beta", [(0.0, 0.5), (1.0, 0.5), (0.5, 1.0), (0.5, -0.1)])
    def test_validation(self, alpha, beta):
        with pytest.raises(ValueError):
            RiskLevelPair(alpha, beta)


class TestOmegaSolver:
    def test_gumbel_reference_value(self):
        sol = solve_omega(LEVELS, GumbelCopula(THETA))
        assert sol.omega == pytest.approx(OMEGA_REF, abs=1e-9)
        assert abs(sol.residual) < 1e-8

    def test_direct_equation_agrees(self):
        direct = gumbel_omega_equation(LEVELS, THETA)
        assert direct.omega == pytest.approx(OMEGA_REF, abs=1e-10)

    def test_two_solvers_agree_on_grid(self):
        for alpha in (0.9, 0.95, 0.99):
            for beta in (0.5, 0.9, 0.975):
                for theta in (1.0, 1.3, THETA, 5.0, 20.0):
                    levels = RiskLevelPair(alpha, beta)
                    a = solve_omega(levels, GumbelCopula(theta)).omega
                    b = gumbel_omega_equation(levels, theta).omega
                    assert a == pytest.approx(b, abs=1e-10)

    def test_independence_hits_lower_bound_exactly(self):
        sol = solve_omega(LEVELS, IndependenceCopula())
        assert sol.omega == LEVELS.beta

    def test_unit_theta_is_independence(self):
        sol = gumbel_omega_equation(LEVELS, 1.0)
        assert sol.omega == LEVELS.beta

    def test_comonotone_hits_upper_bound(self):
        sol = solve_omega(LEVELS, ComonotoneCopula())
        assert sol.omega == pytest.approx(LEVELS.comonotone_omega, abs=1e-9)

    def test_theta_monotonicity(self):
        omegas = [
            solve_omega(LEVELS, GumbelCopula(th)).omega
            for th in (1.0, 1.5, 2.0, 4.0, 16.0)
        ]
        assert all(a < b for a, b in zip(omegas, omegas[1:]))
        assert omegas[-1] < LEVELS.comonotone_omega + 1e-12

    def test_countermonotone_raises_with_diagnostics(self):
        with pytest.raises(SolverError) as exc:
            solve_omega(LEVELS, CountermonotoneCopula())
        err = exc.value
        assert err.bracket is not None
        assert err.bracket[0] == pytest.approx(0.95, abs=1e-9)
        assert err.residuals[0] < 0.0
        assert "bracket=" in str(err)

    def test_unattainable_tolerance_raises(self):
        with pytest.raises(SolverError, match="residual"):
            solve_omega(LEVELS, GumbelCopula(THETA), tol=1e-300)

    def test_solution_inside_band(self):
        sol = solve_omega(LEVELS, GumbelCopula(THETA))
        assert LEVELS.beta <= sol.omega <= LEVELS.comonotone_omega
        assert sol.bracket[0] <= sol.omega <= sol.bracket[1]

    @given(
        alpha=st.floats(0.05, 0.99),
        beta=st.floats(0.05, 0.99),
        theta=st.floats(1.0, 20.0),
    )
    @settings(max_examples=80, deadline=None)
    def test_omega_band_property(self, alpha, beta, theta):
        levels = RiskLevelPair(alpha, beta)
        sol = solve_omega(levels, GumbelCopula(theta))
        assert levels.beta - 1e-12 <= sol.omega <= levels.comonotone_omega + 1e-12


class TestDeltaMeasures:
    def test_reference_pipeline(self):
        est = delta_measures(LEVELS, GumbelCopula(THETA), T3)
        assert est.omega == pytest.approx(OMEGA_REF, abs=1e-9)
        assert est.dcov == pytest.approx(DCOV_REF, abs=1e-6)
        assert est.dcoes == pytest.approx(DCOES_REF, abs=1e-6)
        assert est.ratio == pytest.approx(RATIO_REF, abs=1e-8)
        assert est.xi_hat == pytest.approx(XI_REF, abs=1e-8)
        assert est.mes is None

    def test_covar_coes_are_margin_evaluations(self):
        est = delta_measures(LEVELS, GumbelCopula(THETA), T3)
        assert est.covar == pytest.approx(covar(T3, est.omega), rel=1e-15)
        assert est.coes == pytest.approx(coes(T3, est.omega), rel=1e-15)
        assert est.coes > est.covar

    def test_independence_gives_exact_zero_and_undefined_ratio(self):
        est = delta_measures(LEVELS, IndependenceCopula(), T3)
        assert est.dcov == 0.0
        assert est.dcoes == 0.0
        assert est.ratio is None
        assert est.xi_hat is None

    def test_comonotone_upper_extreme(self):
        est = delta_measures(LEVELS, ComonotoneCopula(), T3)
        assert est.covar == pytest.approx(T3.var(0.9975), abs=1e-6)
        assert est.dcov > 0 and est.dcoes > est.dcov

    def test_deltas_grow_with_dependence(self):
        vals = [
            delta_measures(LEVELS, GumbelCopula(th), T3).dcov
            for th in (1.0, 1.5, 3.0, 10.0)
        ]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_beta_zero_refused(self):
        with pytest.raises(ValueError, match="mes"):
            delta_measures(RiskLevelPair(0.95, 0.0), GumbelCopula(THETA), T3)

    def test_include_mes_attaches_boundary_case(self):
        est = delta_measures(LEVELS, GumbelCopula(THETA), T3, include_mes=True)
        direct = mes(RiskLevelPair(0.95, 0.0), GumbelCopula(THETA), T3)
        assert est.mes == pytest.approx(direct, rel=1e-12)

    def test_normal_margin_pipeline(self):
        est = delta_measures(LEVELS, GumbelCopula(THETA), NormalParams(0.0, 2.0))
        assert est.dcov > 0
        # normal tails imply a CoES/CoVaR ratio near 1, i.e. tail index near 0
        assert est.xi_hat < XI_REF


class TestXiFromRatio:
    def test_values(self):
        assert xi_from_ratio(1.0) == 0.0
        assert xi_from_ratio(2.0) == 0.5
        assert xi_from_ratio(1.5) == pytest.approx(1.0 / 3.0, rel=1e-15)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            xi_from_ratio(0.0)


class TestGpdClosedForms:
    TAIL_LEVELS = RiskLevelPair(0.97, 0.96)

    def test_ratio_identity_on_shape_grid(self):
        tail_levels = self.TAIL_LEVELS
        omega = 0.995
        for xi in np.arange(0.05, 0.901, 0.05):
            tail = GpdTail(gamma=0.95, u=1.0, s=0.8, xi=float(xi))
            est = gpd_corisk_closed_forms(tail_levels, omega, tail)
            assert est.ratio == pytest.approx(1.0 / (1.0 - xi), abs=1e-12)
            assert est.xi_hat == pytest.approx(xi, abs=1e-12)

    def test_identity_is_level_free(self):
        tail = GpdTail(gamma=0.9, u=0.0, s=1.0, xi=1.0 / 3.0)
        for beta, omega in ((0.91, 0.93), (0.95, 0.999), (0.99, 0.995)):
            est = gpd_corisk_closed_forms(RiskLevelPair(0.9, beta), omega, tail)
            assert est.ratio == pytest.approx(1.5, abs=1e-12)

    def test_degenerate_omega_equals_beta(self):
        tail = GpdTail(gamma=0.9, u=0.0, s=1.0, xi=0.4)
        est = gpd_corisk_closed_forms(RiskLevelPair(0.9, 0.95), 0.95, tail)
        assert est.dcov == 0.0
        assert est.ratio is None

    def test_validation(self):
        tail = GpdTail(gamma=0.95, u=0.0, s=1.0, xi=0.2)
        with pytest.raises(ValueError, match="threshold"):
            gpd_corisk_closed_forms(RiskLevelPair(0.9, 0.9), 0.99, tail)
        with pytest.raises(ValueError, match="omega"):
            gpd_corisk_closed_forms(RiskLevelPair(0.9, 0.96), 0.95, tail)
        with pytest.raises(ValueError, match="beta"):
            gpd_corisk_closed_forms(RiskLevelPair(0.9, 0.0), 0.99, tail)


class TestSlide:
    def test_endpoints_and_midpoint(self):
        assert slide_covar(2.0, 5.0, 0.0) == 2.0
        assert slide_covar(2.0, 5.0, 1.0) == 5.0
        assert slide_covar(2.0, 5.0, 0.25) == pytest.approx(2.75)

    def test_validation(self):
        with pytest.raises(ValueError):
            slide_covar(2.0, 5.0, 1.5)
        with pytest.raises(ValueError):
            slide_covar(5.0, 2.0, 0.5)


class TestMes:
    def test_gumbel_reference_value(self):
        value = mes(RiskLevelPair(0.95, 0.0), GumbelCopula(THETA), T3)
        assert value == pytest.approx(MES_REF, abs=1e-6)

    def test_independence_recovers_mean(self):
        value = mes(RiskLevelPair(0.95, 0.0), IndependenceCopula(), T3)
        assert value == pytest.approx(0.0, abs=1e-6)

    def test_comonotone_recovers_es(self):
        value = mes(RiskLevelPair(0.95, 0.0), ComonotoneCopula(), T3)
        assert value == pytest.approx(T3.es(0.95), rel=1e-7)

    def test_monotone_in_dependence(self):
        vals = [
            mes(RiskLevelPair(0.95, 0.0), GumbelCopula(th), T3)
            for th in (1.0, 1.5, 3.0, 12.0)
        ]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_requires_beta_zero(self):
        with pytest.raises(ValueError):
            mes(LEVELS, GumbelCopula(THETA), T3)

    def test_sample_margin_stieltjes_path(self):
        # comonotone + sample margin must reproduce the sample tail mean
        rng = np.random.default_rng(4)
        sample = LossSample(rng.standard_t(3, 4001))
        value = mes(RiskLevelPair(0.95, 0.0), ComonotoneCopula(), sample)
        assert value == pytest.approx(hist_es(sample, 0.95), rel=5e-3)

    def test_sample_margin_independence(self):
        rng = np.random.default_rng(4)
        sample = LossSample(rng.standard_t(3, 4001))
        value = mes(RiskLevelPair(0.95, 0.0), IndependenceCopula(), sample)
        assert value == pytest.approx(float(np.mean(sample.values)), rel=1e-10)


class TestHistMes:
    def test_hand_case(self):
        x = [1.0, 2.0, 3.0, 4.0, 5.0]
        y = [10.0, 20.0, 30.0, 40.0, 50.0]
        assert hist_mes(x, y, 0.6) == pytest.approx(45.0)

    def test_antimonotone_hand_case(self):
        x = [1.0, 2.0, 3.0, 4.0, 5.0]
        y = [50.0, 40.0, 30.0, 20.0, 10.0]
        assert hist_mes(x, y, 0.6) == pytest.approx(15.0)

    def test_matches_hist_es_under_comonotonicity(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(997)
        y = np.exp(x) + 3.0
        assert hist_mes(x, y, 0.95) == hist_es(LossSample(y), 0.95)

    def test_validation(self):
        with pytest.raises(ValueError):
            hist_mes([1.0, 2.0], [1.0], 0.9)
        with pytest.raises(ValueError):
            hist_mes([1.0, 2.0], [1.0, 2.0], 1.0)


class TestSensitivities:
    INP = dict(
        omega=0.9975,
        var_omega=7.45,
        es_omega=10.8,
        density_at_var_omega=0.00035,
        beta=0.95,
        var_beta=2.35,
        es_beta=3.87,
    )

    def _inp(self, l, **overrides):
        kw = {**self.INP, **overrides}
        return SensitivityInput(l=l, **kw)

    def test_covar_three_branches(self):
        f = self.INP["density_at_var_omega"]
        assert sensitivity_covar(self._inp(9.0)) == pytest.approx(0.9975 / f)
        assert sensitivity_covar(self._inp(1.0)) == pytest.approx(-0.0025 / f)
        assert sensitivity_covar(self._inp(7.45)) == 0.0

    def test_covar_needs_density(self):
        with pytest.raises(ValueError):
            sensitivity_covar(self._inp(9.0, density_at_var_omega=None))
        with pytest.raises(ValueError):
            sensitivity_covar(self._inp(9.0, density_at_var_omega=0.0))

    def test_coes_continuity_at_kink(self):
        v = self.INP["var_omega"]
        at = sensitivity_coes(self._inp(v))
        below = sensitivity_coes(self._inp(v - 1e-13))
        above = sensitivity_coes(self._inp(v + 1e-13))
        assert at == pytest.approx(v + self.INP["es_omega"], rel=1e-12)
        assert abs(above - at) < 1e-10
        assert abs(at - below) < 1e-10

    def test_coes_slopes(self):
        omega = self.INP["omega"]
        lo = sensitivity_coes(self._inp(1.0))
        lo2 = sensitivity_coes(self._inp(5.0))
        assert lo == lo2  # flat below the omega-quantile
        hi1 = sensitivity_coes(self._inp(8.0))
        hi2 = sensitivity_coes(self._inp(9.0))
        assert hi2 - hi1 == pytest.approx(1.0 / (1.0 - omega), rel=1e-9)

    def test_coes_needs_es(self):
        with pytest.raises(ValueError):
            sensitivity_coes(self._inp(9.0, es_omega=None))

    def test_dcoes_slopes_in_three_regimes(self):
        omega, beta = self.INP["omega"], self.INP["beta"]
        # constant below both quantiles
        assert sensitivity_dcoes(self._inp(0.0)) == sensitivity_dcoes(self._inp(2.0))
        # slope -1/(1-beta) between the quantiles
        mid1, mid2 = sensitivity_dcoes(self._inp(4.0)), sensitivity_dcoes(self._inp(5.0))
        assert mid2 - mid1 == pytest.approx(-1.0 / (1.0 - beta), rel=1e-9)
        # slope (omega-beta)/((1-omega)(1-beta)) beyond VaR_omega
        hi1, hi2 = sensitivity_dcoes(self._inp(8.0)), sensitivity_dcoes(self._inp(9.0))
        expected = (omega - beta) / ((1.0 - omega) * (1.0 - beta))
        assert hi2 - hi1 == pytest.approx(expected, rel=1e-9)

    def test_dcoes_continuity_at_both_breaks(self):
        for point in (self.INP["var_beta"], self.INP["var_omega"]):
            below = sensitivity_dcoes(self._inp(point - 1e-13))
            above = sensitivity_dcoes(self._inp(point + 1e-13))
            assert abs(above - below) < 1e-10

    def test_dcoes_vanishes_when_omega_equals_beta(self):
        for l in (-3.0, 0.0, 2.35, 5.0, 40.0):
            inp = SensitivityInput(
                l=l,
                omega=0.95,
                var_omega=2.35,
                es_omega=3.87,
                beta=0.95,
                var_beta=2.35,
                es_beta=3.87,
            )
            assert sensitivity_dcoes(inp) == pytest.approx(0.0, abs=1e-12)

    def test_dcoes_validation(self):
        with pytest.raises(ValueError):
            sensitivity_dcoes(self._inp(1.0, es_beta=None))
        with pytest.raises(ValueError, match="omega"):
            sensitivity_dcoes(self._inp(1.0, omega=0.9, beta=0.95, var_omega=2.0))

    def test_input_validation(self):
        with pytest.raises(ValueError):
            SensitivityInput(l=math.inf, omega=0.5, var_omega=1.0)
        with pytest.raises(ValueError):
            SensitivityInput(l=0.0, omega=1.5, var_omega=1.0)


class TestEqCondBaselines:
    def test_normal_independence_reduces_to_margin(self):
        levels = RiskLevelPair(0.9, 0.95)
        pair = analytic_normal_eqcond(levels, 2.0, 0.0)
        margin = NormalParams(0.0, 2.0)
        assert pair.covar == pytest.approx(margin.var(0.95), rel=1e-12)
        assert pair.coes == pytest.approx(margin.es(0.95), rel=1e-12)

    def test_normal_perfect_correlation_collapses(self):
        levels = RiskLevelPair(0.9, 0.95)
        pair = analytic_normal_eqcond(levels, 2.0, 1.0)
        center = 2.0 * stats.norm.ppf(0.9)
        assert pair.covar == pytest.approx(center, rel=1e-12)
        assert pair.coes == pytest.approx(center, rel=1e-12)

    def test_coes_dominates_covar(self):
        for rho in (-0.5, 0.0, 0.4, 0.9):
            for nu in (2.5, 5.0, 30.0):
                pair = analytic_t_eqcond(RiskLevelPair(0.9, 0.9), 1.3, rho, nu)
                assert pair.coes >= pair.covar

    def test_t_converges_to_normal(self):
        for rho in (0.0, 0.3, 0.8):
            for levels in (RiskLevelPair(0.9, 0.9), RiskLevelPair(0.95, 0.99)):
                t_pair = analytic_t_eqcond(levels, 1.5, rho, 1e6)
                n_pair = analytic_normal_eqcond(levels, 1.5, rho)
                assert t_pair.covar == pytest.approx(n_pair.covar, abs=1e-3)
                assert t_pair.coes == pytest.approx(n_pair.coes, abs=1e-3)

    def test_t_formula_against_monte_carlo(self):
        """Spot-conditioning oracle: simulate the bivariate t directly and
        compare the conditional quantile/tail mean inside a thin window."""
        nu, rho, sigma = 3.0, 0.6, 1.5
        levels = RiskLevelPair(0.9, 0.95)
        ref = analytic_t_eqcond(levels, sigma, rho, nu)
        rng = np.random.default_rng(2718)
        n = 4_000_000
        z1 = rng.standard_normal(n)
        z2 = rng.standard_normal(n)
        w = np.sqrt(nu / rng.chisquare(nu, n))
        x = z1 * w
        y = sigma * (rho * z1 + math.sqrt(1.0 - rho * rho) * z2) * w
        window = np.abs(x - stats.t.ppf(levels.alpha, nu)) < 0.05
        ys = np.sort(y[window])
        k = int(np.ceil(ys.size * levels.beta))
        assert ys[k - 1] == pytest.approx(ref.covar, abs=0.1)
        assert ys[k - 1 :].mean() == pytest.approx(ref.coes, abs=0.15)

    def test_validation(self):
        with pytest.raises(ValueError):
            analytic_normal_eqcond(RiskLevelPair(0.9, 0.0), 1.0, 0.5)
        with pytest.raises(ValueError):
            analytic_normal_eqcond(RiskLevelPair(0.9, 0.9), -1.0, 0.5)
        with pytest.raises(ValueError):
            analytic_t_eqcond(RiskLevelPair(0.9, 0.9), 1.0, 1.5, 3.0)
        with pytest.raises(ValueError):
            analytic_t_eqcond(RiskLevelPair(0.9, 0.9), 1.0, 0.5, 1.0)


class TestEmpiricalPipeline:
    @staticmethod
    def _paired_sample(n=2000, seed=3):
        u, v = sample_gumbel(n, THETA, seed)
        x = stats.t.ppf(u, 3)
        y = stats.t.ppf(v, 3)
        return x, y

    def test_recovers_population_values(self):
        x, y = self._paired_sample()
        est = estimate_from_losses(x, y, LEVELS)
        assert est.omega == pytest.approx(OMEGA_REF, abs=2e-3)
        assert est.dcov == pytest.approx(DCOV_REF, abs=4.0)
        assert est.ratio is not None and est.xi_hat is not None

    def test_invariant_to_monotone_transform_of_x(self):
        x, y = self._paired_sample(n=500)
        a = estimate_from_losses(x, y, LEVELS)
        b = estimate_from_losses(np.exp(x), y, LEVELS)
        assert a == b

    def test_exchangeable_on_symmetrized_sample(self):
        x, y = self._paired_sample(n=400)
        xs = np.concatenate([x, y])
        ys = np.concatenate([y, x])
        fwd = estimate_from_losses(xs, ys, LEVELS)
        rev = estimate_from_losses(ys, xs, LEVELS)
        assert fwd.omega == pytest.approx(rev.omega, abs=1e-9)
        assert fwd.dcov == pytest.approx(rev.dcov, rel=1e-9, abs=1e-9)
        assert fwd.dcoes == pytest.approx(rev.dcoes, rel=1e-9, abs=1e-9)

    def test_include_mes_matches_hist_mes(self):
        x, y = self._paired_sample(n=600)
        est = estimate_from_losses(x, y, LEVELS, include_mes=True)
        assert est.mes == hist_mes(x, y, 0.95)

    def test_comonotone_sample_drives_omega_to_bound(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal(1500)
        est = estimate_from_losses(x, 2.0 * x + 1.0, LEVELS)
        assert est.omega > 0.996
