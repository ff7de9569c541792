"""Diagnostics: cESS, replicate statistics, delta-method constants, and
sample allocation plans."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import focusedeig as fe
from focusedeig import diagnostics as dg


class TestCess:
    def test_uniform(self):
        assert dg.cess(np.full(50, 1 / 50)) == pytest.approx(50.0)

    def test_one_hot(self):
        w = np.zeros(20)
        w[7] = 1.0
        assert dg.cess(w) == pytest.approx(1.0)

    def test_half_half(self):
        w = np.zeros(10)
        w[0] = w[1] = 0.5
        assert dg.cess(w) == pytest.approx(2.0)

    def test_all_zero(self):
        with pytest.raises(dg.AllZero):
            dg.cess(np.zeros(5))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(min_value=1e-6, max_value=1e6), min_size=1, max_size=64))
    def test_range_and_scale_invariance(self, raw):
        w = np.array(raw)
        normed = w / w.sum()
        val = dg.cess(normed)
        assert 1.0 - 1e-9 <= val <= len(raw) + 1e-9
        scaled = (w * 17.5) / (w * 17.5).sum()
        assert dg.cess(scaled) == pytest.approx(val, rel=1e-9)


class TestReplicateStats:
    def test_constant_values(self):
        st_ = dg.replicate_stats([2.0, 2.0, 2.0], 2.0)
        assert st_.bias == 0.0 and st_.variance == 0.0 and st_.mse == 0.0

    def test_hand_arithmetic(self):
        st_ = dg.replicate_stats([0.0, 2.0], 0.0)
        assert st_.bias == pytest.approx(1.0)
        assert st_.variance == pytest.approx(2.0)
        assert st_.mse == pytest.approx(3.0)
        assert st_.se_bias == pytest.approx(1.0)

    def test_variance_moment_oracle(self):
        draws = np.random.default_rng(8).standard_normal(10000)
        st_ = dg.replicate_stats(draws, 0.0)
        assert st_.variance == pytest.approx(1.0, rel=0.05)

    def test_mse_identity(self):
        draws = np.random.default_rng(9).standard_normal(64) + 0.3
        st_ = dg.replicate_stats(draws, 0.0)
        assert st_.mse == pytest.approx(st_.bias**2 + st_.variance, abs=1e-12)

    def test_too_few(self):
        with pytest.raises(dg.TooFewReplicates):
            dg.replicate_stats([1.0], 0.0)


class TestDeltaConstants:
    def test_oracle_constants_vanish(self):
        m = fe.LinearGaussianModel(n=4, gain=5.0, noise_sigma=0.4)
        est = fe.estimate_eig(
            m, [0.5], fe.EstimatorConfig(N=50, M1=4, biasing="exact_oracle", seed=1)
        )
        c = dg.estimate_delta_constants(est)
        assert c.c1 < 1e-12 and c.c2 < 1e-12
        assert c.d1 < 1e-24 and c.d2 < 1e-24

    def test_joint_mode_pure_positive_bias(self):
        m = fe.LinearGaussianModel(n=2, noise_sigma=0.4)
        est = fe.estimate_eig_joint(
            m, [0.5], fe.EstimatorConfig(N=200, M1=16, biasing="prior", seed=2)
        )
        c = dg.estimate_delta_constants(est)
        assert c.c2 == 0.0
        assert c.predicted_bias(est.config.M1, est.config.M2) > 0

    def test_insufficient_inner_samples(self):
        m = fe.LinearGaussianModel(n=2, noise_sigma=0.4)
        est = fe.estimate_eig(
            m, [0.5], fe.EstimatorConfig(N=16, M1=1, biasing="prior", seed=3)
        )
        with pytest.raises(dg.InsufficientInnerSamples):
            dg.estimate_delta_constants(est)

    def test_predictions_within_factor_two(self):
        # frozen operating point: n=2, d=1, N=M=100, 500 replicates
        m = fe.LinearGaussianModel(n=2, noise_sigma=0.4)
        truth = m.eig_closed_form([1.0], "marginal")
        vals, pred_b, pred_v = [], [], []
        for r in range(500):
            est = fe.estimate_eig(
                m, [1.0],
                fe.EstimatorConfig(N=100, M1=100, biasing="prior", seed=4000 + r),
            )
            vals.append(est.value)
            c = dg.estimate_delta_constants(est)
            pred_b.append(c.predicted_bias(100, 100))
            pred_v.append(c.predicted_variance(100, 100, 100))
        vals = np.asarray(vals)
        emp_bias = vals.mean() - truth
        emp_var = vals.var(ddof=1)
        assert 0.5 < np.mean(pred_b) / emp_bias < 2.0
        assert 0.5 < np.mean(pred_v) / emp_var < 2.0


class TestPlans:
    def test_optimal_alpha_example(self):
        plan = dg.optimal_alpha(1.0, 1.0, 1e6)
        assert plan.alpha_sq == pytest.approx(0.04)
        assert plan.m_inner / plan.n_outer == pytest.approx(0.02)
        assert plan.n_outer == 5000 and plan.m_inner == 100

    def test_optimal_alpha_power_law(self):
        a1 = dg.optimal_alpha(1.0, 1.0, 1e4)
        a2 = dg.optimal_alpha(1.0, 1.0, 64 * 1e4)
        r1 = math.sqrt(a1.alpha_sq)
        r2 = math.sqrt(a2.alpha_sq)
        assert r2 / r1 == pytest.approx(0.5, rel=0.05)

    def test_degenerate_bias_floors_inner(self):
        plan = dg.optimal_alpha(0.0, 1.0, 1000)
        assert plan.m_inner == 1
        assert plan.n_outer == 500

    def test_fixed_ratio_examples(self):
        plan = dg.fixed_ratio_plan(1.0, 200)
        assert (plan.n_outer, plan.m_inner) == (10, 10)
        plan = dg.fixed_ratio_plan(100.0, 2e4)
        assert (plan.n_outer, plan.m_inner) == (10, 1000)

    def test_budget_inequality_exhaustive(self):
        for w in range(8, 1001):
            for ratio in (0.05, 0.5, 1.0, 3.0, 40.0):
                plan = dg.fixed_ratio_plan(ratio, w)
                assert plan.n_outer >= 1 and plan.m_inner >= 1
                assert 2 * plan.m_inner * plan.n_outer <= w
                assert 2 * (plan.m_inner + 1) * (plan.n_outer + 1) > w

    @settings(max_examples=80, deadline=None)
    @given(
        st.floats(min_value=0.0, max_value=100.0),
        st.floats(min_value=1e-3, max_value=100.0),
        st.floats(min_value=8, max_value=1e8),
    )
    def test_optimal_alpha_budget_property(self, c_tilde, d3, w):
        plan = dg.optimal_alpha(c_tilde, d3, w)
        assert plan.n_outer >= 1 and plan.m_inner >= 1
        assert 2 * plan.m_inner * plan.n_outer <= w
        assert 2 * (plan.m_inner + 1) * (plan.n_outer + 1) > w

    def test_invalid_budget(self):
        with pytest.raises(dg.InvalidBudget):
            dg.fixed_ratio_plan(1.0, 4)
        with pytest.raises(dg.InvalidBudget):
            dg.optimal_alpha(1.0, 0.0, 100)
