"""Tests for the dual-decomposition equilibrium solver."""

import math

import numpy as np
import pytest

from prosumer_market import (
    Allocation,
    DomainError,
    DualBracket,
    ExponentialUtility,
    MarketConfig,
    MODE_MODIFIED,
    MODE_TRUE,
    brute_force_program,
    check_eq21,
    clearing_price,
    marginal_inverse_modified,
    marginal_inverse_true,
    modified_utility,
    modified_utility_deriv,
    quantity_from_bid,
    recover_bids,
    solve_dual,
    welfare,
)
from prosumer_market.solver import _find_bracket


def symmetric_config(n=11, beta=2.5, d_min=4.0, s_max=3.0):
    return MarketConfig(n, d_min, s_max, (beta,) * n)


class TestMarginalInverseTrue:
    def test_inverse_at_known_point(self):
        spec = ExponentialUtility(2.5, 4.0)
        assert marginal_inverse_true(spec, spec.deriv(0.0), 3.0) == pytest.approx(
            0.0, abs=1e-12)

    def test_large_eta_clips_at_capacity(self):
        spec = ExponentialUtility(2.5, 4.0)
        assert marginal_inverse_true(spec, 1e6, 3.0) == -3.0

    def test_symbolic_inversion(self):
        spec = ExponentialUtility(2.5, 4.0)
        eta = (2.5 / 20.0) * math.exp(-0.5)
        assert marginal_inverse_true(spec, eta, 3.0) == pytest.approx(4.0, rel=1e-14)

    def test_eta_must_be_positive(self):
        spec = ExponentialUtility(2.5, 4.0)
        with pytest.raises(DomainError):
            marginal_inverse_true(spec, 0.0, 3.0)

    def test_numeric_fallback_matches_closed_form(self):
        class NoInverse(ExponentialUtility):
            def deriv_inverse(self, eta):
                raise NotImplementedError

        a = ExponentialUtility(1.4, 2.0)
        b = NoInverse(1.4, 2.0)
        for eta in (0.01, 0.1, 0.5, 3.0):
            assert marginal_inverse_true(b, eta, 5.0) == pytest.approx(
                marginal_inverse_true(a, eta, 5.0), abs=1e-10)


class TestMarginalInverseModified:
    def test_inverse_at_known_point_concave(self):
        # beta large enough that the concave region covers [-s_max, inf)
        spec = ExponentialUtility(6.0, 1.0)
        n, s_max = 11, 3.0
        assert spec.modified_concavity_threshold(n) <= -s_max
        eta = modified_utility_deriv(spec, n, 0.0)
        res = marginal_inverse_modified(spec, n, eta, s_max, 30.0)
        assert res.q == pytest.approx(0.0, abs=1e-10)
        assert not res.non_concave

    def test_capacity_clip_concave(self):
        spec = ExponentialUtility(6.0, 1.0)
        n, s_max = 11, 3.0
        eta = modified_utility_deriv(spec, n, -s_max) * 2.0
        res = marginal_inverse_modified(spec, n, eta, s_max, 30.0)
        assert res.q == -s_max
        assert not res.non_concave

    def test_non_concave_matches_dense_grid(self):
        # capacity extends past the concavity onset: enumeration regime
        spec = ExponentialUtility(0.6, 1.0)
        n, s_max, q_upper = 11, 3.0, 30.0
        assert spec.modified_concavity_threshold(n) > -s_max
        for eta in (0.02, 0.05, 0.08, 0.11):
            res = marginal_inverse_modified(spec, n, eta, s_max, q_upper)
            grid = np.linspace(-s_max, q_upper, 1_000_001)
            lagr = modified_utility(spec, n, grid) - eta * grid
            q_star = grid[int(np.argmax(lagr))]
            assert res.q == pytest.approx(q_star, abs=1e-4)

    def test_flags_non_concave_point(self):
        spec = ExponentialUtility(0.6, 1.0)
        # huge eta forces the capacity bound, which sits off the concave region
        res = marginal_inverse_modified(spec, 11, 10.0, 3.0, 30.0)
        assert res.q == -3.0
        assert res.non_concave


class TestSolveDual:
    @pytest.mark.parametrize("mode", [MODE_TRUE, MODE_MODIFIED])
    def test_symmetric_market_is_all_zero(self, mode):
        cfg = symmetric_config()
        res = solve_dual(cfg, mode)
        np.testing.assert_allclose(res.allocation.quantities, 0.0, atol=1e-9)
        assert res.price == pytest.approx(2.5 / 20.0, abs=1e-9)
        assert res.converged

    def test_symmetric_prices_match_across_modes(self):
        # the concave regime is required for the modified program to share
        # the symmetric optimum: -s_max must sit above the concavity onset
        cfg = symmetric_config(n=5, beta=2.0, d_min=2.0, s_max=1.0)
        assert cfg.utilities()[0].modified_concavity_threshold(5) <= -cfg.s_max
        a = solve_dual(cfg, MODE_TRUE)
        b = solve_dual(cfg, MODE_MODIFIED)
        assert a.price == pytest.approx(b.price, abs=1e-9)
        assert a.welfare_true == pytest.approx(b.welfare_true, abs=1e-9)

    def test_against_brute_force_n2(self):
        cfg = MarketConfig(2, 4.0, 3.0, (2.0, 3.0))
        dual = solve_dual(cfg, MODE_TRUE)
        grid = brute_force_program(cfg, MODE_TRUE, grid_points=1_000_001,
                                   zoom_passes=0)
        np.testing.assert_allclose(
            dual.allocation.quantities, grid.quantities, atol=1e-4)

    def test_feasibility_and_kkt(self):
        cfg = MarketConfig(11, 4.0, 3.0,
                           tuple(2.0 + 0.1 * i for i in range(11)))
        for mode in (MODE_TRUE, MODE_MODIFIED):
            res = solve_dual(cfg, mode)
            q = res.allocation.quantities
            assert abs(q.sum()) <= cfg.tol_root
            assert np.all(q >= -cfg.s_max - cfg.tol_root)
            interior = ~res.allocation.at_capacity
            assert np.all(res.allocation.kkt_residuals[interior] <= cfg.tol_kkt)
            assert res.price > 0

    def test_bounded_panel_has_no_flags(self):
        # conditions hold on this configuration, so no prosumer is flagged
        cfg = MarketConfig(11, 4.0, 3.0,
                           tuple(2.0 + 0.1 * i for i in range(11)))
        res = solve_dual(cfg, MODE_MODIFIED)
        assert res.non_concave_prosumers == ()
        assert not res.non_concave
        assert np.all(check_eq21(res.allocation.quantities, cfg))

    def test_theta_recovery_invariants(self):
        cfg = MarketConfig(11, 4.0, 3.0,
                           tuple(2.0 + 0.1 * i for i in range(11)))
        for mode in (MODE_TRUE, MODE_MODIFIED):
            res = solve_dual(cfg, mode)
            q = res.allocation.quantities
            np.testing.assert_allclose(
                res.thetas, res.price * (q - cfg.d_min), atol=1e-10)
            assert res.thetas.sum() <= 0
            assert clearing_price(res.thetas, cfg.d_min) == pytest.approx(
                res.price, rel=1e-12)

    def test_welfare_true_in_both_modes(self):
        cfg = MarketConfig(3, 2.0, 0.8, (3.0, 4.0, 5.5))
        for mode in (MODE_TRUE, MODE_MODIFIED):
            res = solve_dual(cfg, mode)
            assert res.welfare_true == pytest.approx(
                welfare(cfg, res.allocation.quantities), rel=1e-12)

    def test_efficiency_ordering(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(2, 7))
            cfg = MarketConfig(
                n, float(rng.uniform(0.5, 5.0)), float(rng.uniform(0.2, 3.0)),
                tuple(rng.uniform(0.5, 4.0, n)))
            w_comp = solve_dual(cfg, MODE_TRUE).welfare_true
            w_nash = solve_dual(cfg, MODE_MODIFIED).welfare_true
            assert w_nash <= w_comp + 1e-10

    def test_dual_excess_monotone(self):
        cfg = MarketConfig(11, 1.0, 3.0,
                           tuple(0.5 + 0.1 * i for i in range(1, 12)))
        specs = cfg.utilities()

        def excess(eta, mode):
            if mode == MODE_TRUE:
                qs = [min(marginal_inverse_true(s, eta, cfg.s_max), cfg.q_upper)
                      for s in specs]
            else:
                qs = [marginal_inverse_modified(
                    s, cfg.n_prosumers, eta, cfg.s_max, cfg.q_upper).q
                    for s in specs]
            return sum(qs)

        for mode in (MODE_TRUE, MODE_MODIFIED):
            etas = np.geomspace(1e-4, 10.0, 60)
            vals = [excess(e, mode) for e in etas]
            assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_non_concave_tie_jump_is_reported(self):
        # two identical prosumers whose shaded curves are convex on the whole
        # feasible range: the per-prosumer argmax jumps between the endpoints
        # at the same eta, so no multiplier balances the market exactly
        cfg = MarketConfig(2, 4.0, 3.0, (2.5, 2.5))
        res = solve_dual(cfg, MODE_MODIFIED)
        assert not res.converged
        assert abs(res.balance_residual) > cfg.tol_root
        assert res.non_concave

    def test_asymmetric_vertex_case_balances(self):
        # distinct switch points let the dual split the endpoints exactly
        cfg = MarketConfig(2, 4.0, 3.0, (2.0, 3.0))
        res = solve_dual(cfg, MODE_MODIFIED)
        assert res.converged
        np.testing.assert_allclose(np.sort(res.allocation.quantities),
                                   [-3.0, 3.0], atol=1e-9)

    def test_mode_validation(self):
        with pytest.raises(DomainError):
            solve_dual(symmetric_config(n=2), "competitive")

    def test_iterations_reported(self):
        res = solve_dual(symmetric_config(), MODE_TRUE)
        assert res.iterations > 10


class TestRecoverBids:
    def test_symmetric_bids(self):
        cfg = symmetric_config()
        res = solve_dual(cfg, MODE_TRUE)
        thetas = recover_bids(res.allocation, cfg.d_min)
        np.testing.assert_allclose(thetas, -res.price * cfg.d_min, atol=1e-10)

    def test_round_trip_against_quantities(self):
        cfg = MarketConfig(11, 4.0, 3.0,
                           tuple(2.0 + 0.1 * i for i in range(11)))
        res = solve_dual(cfg, MODE_MODIFIED)
        thetas = recover_bids(res.allocation, cfg.d_min)
        for theta, q in zip(thetas, res.allocation.quantities):
            assert quantity_from_bid(theta, res.allocation.dual_price,
                                     cfg.d_min) == pytest.approx(q, abs=1e-10)

    def test_rival_sums_negative_at_bounded_panel(self):
        cfg = MarketConfig(11, 4.0, 3.0,
                           tuple(2.0 + 0.1 * i for i in range(11)))
        res = solve_dual(cfg, MODE_MODIFIED)
        thetas = recover_bids(res.allocation, cfg.d_min)
        rival_sums = thetas.sum() - thetas
        assert np.all(rival_sums < 0)

    def test_rejects_nonpositive_price(self):
        alloc = Allocation(np.zeros(2), 0.0)
        with pytest.raises(DomainError):
            recover_bids(alloc, 1.0)


class TestWelfare:
    def test_zero_at_inelastic_point(self):
        cfg = symmetric_config(n=4, beta=1.5, d_min=2.0)
        assert welfare(cfg, np.full(4, 2.0)) == pytest.approx(0.0, abs=1e-15)

    def test_symmetric_equilibrium_value(self):
        cfg = symmetric_config()
        expected = 11 * (math.exp(-0.5) - 1.0)
        assert welfare(cfg, np.zeros(11)) == pytest.approx(expected, rel=1e-14)

    def test_length_validation(self):
        cfg = symmetric_config(n=3, beta=1.0, d_min=1.0, s_max=1.0)
        with pytest.raises(DomainError):
            welfare(cfg, np.zeros(4))


class TestBracketPlumbing:
    def test_dual_bracket_validation(self):
        with pytest.raises(DomainError):
            DualBracket(1.0, 0.5, 1.0, -1.0)
        with pytest.raises(DomainError):
            DualBracket(0.5, 1.0, -1.0, -2.0)

    def test_bracket_failure_diagnostics(self):
        from prosumer_market import BracketFailure

        def always_negative(eta):
            return (-1.0, np.zeros(2), ())

        with pytest.raises(BracketFailure) as err:
            _find_bracket(always_negative, 0.1, 10.0)
        assert "excess" in str(err.value)
