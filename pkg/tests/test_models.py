"""Model-layer tests: forward maps, counters, priors, and closed forms."""

import math

import numpy as np
import pytest

from focusedeig.models import (
    DimensionMismatch,
    ForwardCache,
    LinearGaussianModel,
    MossbauerModel,
    make_model,
)
from focusedeig.numkit import GaussianMoments, mvn_logpdf, stream

rng = np.random.default_rng(17)


class TestForwardAndCounter:
    def test_linear_forward_matches_matrix(self):
        m = LinearGaussianModel(n=2, gain=1.0, noise_sigma=0.4)
        out = m.forward(np.array([1.0, 1.0]), [1.0])
        np.testing.assert_allclose(out, [1.0, 0.0])

    def test_counter_counts_rows(self):
        m = LinearGaussianModel(n=2)
        before = m.counter.count
        m.forward(rng.standard_normal((7, 2)), [0.5])
        assert m.counter.count - before == 7

    def test_cache_token_skips_count(self):
        m = LinearGaussianModel(n=2)
        cache = ForwardCache()
        z = rng.standard_normal(2)
        m.forward(z, [0.5], cache=cache)
        before = m.counter.count
        again = m.forward(z, [0.5], cache=cache)
        assert m.counter.count == before
        np.testing.assert_array_equal(again, m.forward(z, [0.5]))

    def test_deterministic(self):
        m = MossbauerModel()
        z = m.sample_prior(stream(3, 0), 4)
        d = [-1.0, 0.0, 2.0]
        np.testing.assert_array_equal(m.forward(z, d), m.forward(z, d))

    def test_dimension_mismatch(self):
        m = LinearGaussianModel(n=4)
        with pytest.raises(DimensionMismatch):
            m.forward(np.zeros(3), [0.5])
        with pytest.raises(DimensionMismatch):
            m.forward(np.zeros(4), [0.5, 0.5])

    def test_design_bounds(self):
        m = LinearGaussianModel(n=2)
        with pytest.raises(ValueError):
            m.check_design([1.5])


class TestMossbauer:
    def test_peak_and_tail(self):
        m = MossbauerModel(n_velocities=1)
        z = np.array([[0.3, 1.1, 0.9, 2.5]])  # center, width, height, offset
        at_center = m.forward(z, [0.3])[0, 0]
        assert at_center == pytest.approx(2.5 - 0.9)
        # a kilometer away the dip vanishes; widen the design box for the probe
        m_far = MossbauerModel(n_velocities=1)
        m_far.design_lo, m_far.design_hi = -1e6, 1e6
        far = m_far.forward(z, [1e5])[0, 0]
        assert far == pytest.approx(2.5, abs=1e-8)

    def test_prior_positivity_and_log_moments(self):
        m = MossbauerModel()
        draws = m.sample_prior(stream(11, 0), 100000)
        assert np.all(draws[:, 1:] > 0)
        logs = np.log(draws[:, 1:])
        # (width, height, offset) log-moments vs declared priors, 3 SE bands
        for col, (mean, sd) in enumerate([(0.0, 0.3), (0.0, 0.3), (1.0, 0.2)]):
            se = sd / math.sqrt(draws.shape[0])
            assert abs(logs[:, col].mean() - mean) < 3 * se
            assert abs(logs[:, col].std() - sd) < 0.01

    def test_focus_reorders_parameters(self):
        m = MossbauerModel(focus="offset")
        assert m.param_order[0] == "offset"
        z = np.array([[2.5, 0.3, 1.1, 0.9]])  # offset, center, width, height
        out = m.forward(z, [0.3, 0.0, 0.0])
        assert out[0, 0] == pytest.approx(2.5 - 0.9)

    def test_prior_logpdf_rejects_negative(self):
        m = MossbauerModel()
        z = np.array([0.0, -1.0, 1.0, 2.0])
        assert m.prior_logpdf(z) == -np.inf


class TestLoglike:
    def test_zero_residual_constant(self):
        m = LinearGaussianModel(n=2, noise_sigma=0.4)
        g = np.array([0.3, -0.8])
        assert m.loglike(g, g) == pytest.approx(-math.log(2 * math.pi * 0.16))

    def test_shift_invariance(self):
        m = LinearGaussianModel(n=2, noise_sigma=0.7)
        y = rng.standard_normal(2)
        g = rng.standard_normal(2)
        delta = rng.standard_normal(2)
        assert m.loglike(y + delta, g + delta) == pytest.approx(m.loglike(y, g))

    def test_matches_mvn_oracle(self):
        m = LinearGaussianModel(n=3, noise_sigma=0.55)
        y = rng.standard_normal(3)
        g = rng.standard_normal(3)
        oracle = mvn_logpdf(GaussianMoments(g, 0.55**2 * np.eye(3)), y)
        assert m.loglike(y, g) == pytest.approx(oracle, rel=1e-12)


class TestClosedForms:
    def test_posterior_uninformative_limit(self):
        m = LinearGaussianModel(n=2, noise_sigma=1e6)
        post = m.posterior(np.array([0.5, -0.5]), [0.7])
        assert np.max(np.abs(post.cov - np.eye(2))) < 1e-6

    def test_posterior_cov_ignores_data(self):
        m = LinearGaussianModel(n=2, noise_sigma=0.4)
        a = m.posterior(np.array([0.0, 0.0]), [0.3])
        b = m.posterior(np.array([5.0, -2.0]), [0.3])
        np.testing.assert_allclose(a.cov, b.cov, atol=1e-12)

    def test_joint_eig_at_half(self):
        m = LinearGaussianModel(n=2, noise_sigma=0.4)
        # 0.5*log(0.41^2 / 0.4^4)
        assert m.eig_closed_form([0.5], "joint") == pytest.approx(
            0.5 * math.log(0.41**2 / 0.4**4), rel=1e-10
        )
        post = m.posterior(np.zeros(2), [0.5])
        assert -0.5 * math.log(np.linalg.det(post.cov)) == pytest.approx(0.9410, abs=5e-5)

    def test_marginal_eig_formula(self):
        m = LinearGaussianModel(n=2, noise_sigma=0.4)
        assert m.eig_closed_form([0.0], "marginal") == pytest.approx(0.0, abs=1e-12)
        assert m.eig_closed_form([1.0], "marginal") == pytest.approx(
            0.5 * math.log(1 + 1 / 0.16), rel=1e-10
        )

    def test_two_dim_grid_matches_formulas(self):
        m = LinearGaussianModel(n=2, noise_sigma=0.4)
        s2 = 0.16
        for d in np.linspace(0, 1, 101):
            joint = 0.5 * math.log((((1 - d) ** 2 + s2) * (d**2 + s2)) / s2**2)
            marg = 0.5 * math.log(1 + d**2 / s2)
            assert m.eig_closed_form([d], "joint") == pytest.approx(joint, abs=1e-10)
            assert m.eig_closed_form([d], "marginal") == pytest.approx(marg, abs=1e-10)

    def test_optimal_designs_two_dim(self):
        m = LinearGaussianModel(n=2, noise_sigma=0.4)
        grid = np.linspace(0, 1, 101)
        marg = [m.eig_closed_form([d], "marginal") for d in grid]
        assert grid[int(np.argmax(marg))] == pytest.approx(1.0)
        # At sigma=0.4 the joint objective peaks at the endpoints (the
        # half-point optimum requires sigma < 1/(2*sqrt(2))).
        joint = [m.eig_closed_form([d], "joint") for d in grid]
        assert grid[int(np.argmax(joint))] in (0.0, 1.0)
        assert joint[0] == pytest.approx(joint[-1], rel=1e-12)
        low_noise = LinearGaussianModel(n=2, noise_sigma=0.3)
        joint_ln = [low_noise.eig_closed_form([d], "joint") for d in grid]
        assert grid[int(np.argmax(joint_ln))] == pytest.approx(0.5)

    @pytest.mark.parametrize("n", [4, 8])
    def test_optimal_designs_higher_dim(self, n):
        m = LinearGaussianModel(n=n, gain=5.0, noise_sigma=0.4)
        grid = np.linspace(0, 1, 101)
        joint = [m.eig_closed_form([d], "joint") for d in grid]
        marg = [m.eig_closed_form([d], "marginal") for d in grid]
        assert grid[int(np.argmax(joint))] == pytest.approx(0.0)
        # Regression anchor: the corner-coupled trade-off puts the focused
        # optimum at d = 0.72 for this gain and noise level.
        assert grid[int(np.argmax(marg))] == pytest.approx(0.72)

    def test_marginal_likelihood_pure_noise(self):
        # at d=0 with n=2 the first row of G vanishes; y_0 is pure noise
        m = LinearGaussianModel(n=2, noise_sigma=0.4)
        g = m.design_matrix([0.0])
        assert g[0, 0] == 0.0
        pp = m.prior_predictive([0.0])
        assert pp.cov[0, 0] == pytest.approx(0.16)

    def test_marginal_likelihood_mc_oracle(self):
        m = LinearGaussianModel(n=2, noise_sigma=0.4)
        d = [0.6]
        y = np.array([0.4, -0.2])
        gen = stream(21, 0)
        z = m.sample_prior(gen, 1_000_000)
        g = z @ m.design_matrix(d).T
        logp = m.loglike(y, g)
        hi = logp.max()
        vals = np.exp(logp - hi)
        est = hi + math.log(vals.mean())
        se = vals.std() / (vals.mean() * math.sqrt(vals.size))
        assert abs(est - m.marginal_loglike(y, d)) < 3 * se

    def test_conditional_equals_loglike_without_nuisance(self):
        # all-interest variant: conditioning on every parameter is the plain
        # likelihood with the forward output as mean
        m = LinearGaussianModel(n=2, noise_sigma=0.4, split=2)
        y = rng.standard_normal(2)
        z = rng.standard_normal(2)
        g = m.forward(z, [0.4])
        assert m.conditional_loglike(y, z, [0.4]) == pytest.approx(
            m.loglike(y, g), rel=1e-10
        )

    def test_conditional_likelihood_mc_oracle(self):
        m = LinearGaussianModel(n=4, gain=5.0, noise_sigma=0.4)
        d = [0.3]
        y = rng.standard_normal(4)
        theta = np.array([0.7])
        gen = stream(22, 0)
        eta = m.sample_eta_given_theta(theta, gen, 400000)
        z = np.concatenate([np.broadcast_to(theta, (eta.shape[0], 1)), eta], axis=1)
        logp = m.loglike(y, z @ m.design_matrix(d).T)
        hi = logp.max()
        vals = np.exp(logp - hi)
        est = hi + math.log(vals.mean())
        se = vals.std() / (vals.mean() * math.sqrt(vals.size))
        assert abs(est - m.conditional_loglike(y, theta, d)) < 3 * se


class TestDesignMatrix:
    def test_two_dim_is_diagonal(self):
        m = LinearGaussianModel(n=2, gain=1.0)
        np.testing.assert_allclose(m.design_matrix([0.3]), np.diag([0.3, 0.7]))

    def test_corner_coupling_above_two(self):
        m = LinearGaussianModel(n=4, gain=5.0)
        g = m.design_matrix([0.2])
        np.testing.assert_allclose(np.diag(g), [1.0, 4.0, 4.0, 4.0])
        assert g[0, 3] == 1.0 and g[3, 0] == 1.0
        off = g - np.diag(np.diag(g))
        off[0, 3] = off[3, 0] = 0.0
        assert np.all(off == 0.0)


def test_factory():
    assert isinstance(make_model("linear_gaussian", n=2), LinearGaussianModel)
    assert isinstance(make_model("mossbauer"), MossbauerModel)
    with pytest.raises(ValueError):
        make_model("nope")
