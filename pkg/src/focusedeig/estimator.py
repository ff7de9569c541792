"""Nested Monte Carlo estimators of expected information gain.

Three biasing modes are implemented behind one entry point:

* ``prior`` -- the classical nested estimator that draws every inner sample
  from the prior, so all importance weights are one;
* ``exact_oracle`` -- linear-Gaussian only; the inner proposals are the
  exact joint posterior and its exact conditional, which makes both inner
  estimators zero-variance;
* ``lmis`` -- layered multiple importance sampling: the outer loop runs
  sequentially, recycling all previously drawn samples (and their cached
  forward outputs) through a pruned mixture to estimate posterior moments,
  then builds heavy-tailed Student-t proposals from those moments for the
  unbiased inner estimates.

All density arithmetic is carried out in log space and assembled with
log-sum-exp; self-normalized weights are exponentiated only after the
normalizing shift.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .numkit import (
    GaussianMoments,
    StudentTParams,
    floor_eigenvalues,
    gaussian_condition,
    mvn_logpdf,
    mvn_sample,
    mvt_logpdf,
    mvt_sample,
    stream,
)
from .models import EvalCounter

BIASING_MODES = ("prior", "lmis", "exact_oracle")
PRUNING_MODES = ("density", "all", "none")
ORDERING_MODES = ("prior_density_desc", "as_drawn")
COND_BIAS_MODES = ("t_conditional", "t_marginal_eta")

# Outer-index chunk size for the vectorized prior path; bounds peak memory.
_CHUNK_FLOATS = 4_000_000

# Soft cap on cached per-component mixture log densities (in floats).
_CACHE_CAP_FLOATS = 32_000_000

# Scale of the effective-sample-size-adaptive widening applied to moment
# estimates before building t proposals. A weighted covariance backed by
# only a handful of effective samples collapses toward a rank-deficient
# needle; sampling from such a proposal is catastrophic, while an overly
# wide proposal merely costs some variance. The widening term shrinks as
# 1/ess^2, so it vanishes as enrichment accumulates and the moment
# estimates sharpen.
MOMENT_REG_SCALE = 0.3


class AllWeightsZero(RuntimeError):
    """Every summand of an importance sampling estimate vanished."""


@dataclass
class EstimatorConfig:
    """Tuning knobs of one estimator run."""

    N: int
    M1: int
    M2: int = None
    nu: float = 2.5
    biasing: str = "lmis"
    pruning: str = "density"
    ordering: str = "prior_density_desc"
    cond_bias: str = "t_conditional"
    seed: int = 0
    # Upper bound on the pruned mixture size; when more components pass the
    # density criterion, the ones with the highest density at the current
    # parameter point are kept. None disables the cap.
    prune_cap: int = 32

    def __post_init__(self):
        if self.M2 is None:
            self.M2 = self.M1
        if min(self.N, self.M1, self.M2) < 1:
            raise ValueError("N, M1 and M2 must all be at least 1")
        if self.prune_cap is not None and self.prune_cap < 1:
            raise ValueError("prune_cap must be positive or None")
        if not self.nu > 2:
            raise ValueError("nu must exceed 2 for finite proposal covariance")
        if self.biasing not in BIASING_MODES:
            raise ValueError(f"biasing must be one of {BIASING_MODES}")
        if self.pruning not in PRUNING_MODES:
            raise ValueError(f"pruning must be one of {PRUNING_MODES}")
        if self.ordering not in ORDERING_MODES:
            raise ValueError(f"ordering must be one of {ORDERING_MODES}")
        if self.cond_bias not in COND_BIAS_MODES:
            raise ValueError(f"cond_bias must be one of {COND_BIAS_MODES}")


@dataclass
class EigEstimate:
    """Point estimate of the expected information gain plus diagnostics."""

    value: float
    log_cond: np.ndarray
    log_marg: np.ndarray
    cess_marg: np.ndarray
    cess_cond: np.ndarray
    var_ratio_marg: np.ndarray
    var_ratio_cond: np.ndarray
    n_evals: int
    wall_time: float
    n_theta: int
    n_eta: int
    config: EstimatorConfig
    marg_fallbacks: int = 0
    cond_fallbacks: int = 0
    degenerate_moments: int = 0


@dataclass
class OuterSamples:
    """Prior draws with simulated data and cached forward outputs."""

    z: np.ndarray
    g: np.ndarray
    y: np.ndarray
    prior_lp: np.ndarray

    def __len__(self):
        return self.z.shape[0]

    def take(self, idx):
        return OuterSamples(self.z[idx], self.g[idx], self.y[idx], self.prior_lp[idx])


# ---------------------------------------------------------------------------
# proposals
# ---------------------------------------------------------------------------

class PriorProposal:
    """Joint prior as a biasing distribution (weights identically one)."""

    def __init__(self, model):
        self.model = model

    def sample(self, rng, size):
        return self.model.sample_prior(rng, size)

    def logpdf(self, z):
        return self.model.prior_logpdf(np.atleast_2d(z))


class EtaPriorProposal:
    """Conditional prior of the nuisance block as a biasing distribution."""

    def __init__(self, model, theta):
        self.model = model
        self.theta = theta

    def sample(self, rng, size):
        return self.model.sample_eta_given_theta(self.theta, rng, size)

    def logpdf(self, eta):
        return self.model.eta_logpdf_given_theta(np.atleast_2d(eta), self.theta)


class GaussianProposal:
    def __init__(self, moments):
        self.moments = moments

    def sample(self, rng, size):
        return mvn_sample(self.moments, rng, size)

    def logpdf(self, x):
        return mvn_logpdf(self.moments, np.atleast_2d(x))


class StudentTProposal:
    def __init__(self, params):
        self.params = params

    def sample(self, rng, size):
        return mvt_sample(self.params, rng, size)

    def logpdf(self, x):
        return mvt_logpdf(self.params, np.atleast_2d(x))


# ---------------------------------------------------------------------------
# inner estimators
# ---------------------------------------------------------------------------

@dataclass
class InnerEstimate:
    """One importance sampling estimate of a (log) likelihood integral."""

    log_p: float
    samples: np.ndarray
    g: np.ndarray
    log_summands: np.ndarray
    var_ratio: float
    cess: float


def _reduce_summands(log_summands):
    """Log mean, relative summand variance and cESS from log summands.

    Raises AllWeightsZero when every summand underflowed to zero even in
    log space (all entries -inf).
    """
    m = log_summands.size
    hi = float(np.max(log_summands))
    if hi == -np.inf:
        raise AllWeightsZero("all inner summands are zero")
    log_sum = hi + math.log(float(np.sum(np.exp(log_summands - hi))))
    log_p = log_sum - math.log(m)
    r = np.exp(log_summands - log_p)  # summand / estimate, mean exactly 1
    var_ratio = float(np.var(r, ddof=1)) if m > 1 else float("nan")
    cess = m * m / float(r @ r)
    return log_p, var_ratio, cess


def estimate_marginal_likelihood(model, y, d, proposal, m1, rng, tally=None):
    """Importance sampling estimate of the log marginal likelihood.

    Draws ``m1`` joint parameter samples from ``proposal``, evaluates the
    forward model at each (counted), and averages likelihood times
    prior-over-proposal weight in log space. Returns the drawn samples and
    their forward outputs so the caller can bank them for reuse.
    """
    z = proposal.sample(rng, m1)
    g = model.forward(z, d, tally=tally)
    log_w = model.prior_logpdf(z) - proposal.logpdf(z)
    log_summands = model.loglike(y, g) + log_w
    log_p, var_ratio, cess = _reduce_summands(log_summands)
    return InnerEstimate(log_p, z, g, log_summands, var_ratio, cess)


def estimate_conditional_likelihood(model, y, theta, d, proposal, m2, rng, tally=None):
    """Importance sampling estimate of the log conditional likelihood.

    Samples the nuisance block from ``proposal`` while the interest block
    stays fixed at ``theta``; weights are conditional-prior over proposal.
    """
    if model.n_eta == 0:
        raise ValueError("conditional estimation needs a nuisance block")
    eta = proposal.sample(rng, m2)
    z = np.concatenate([np.broadcast_to(theta, (m2, theta.size)), eta], axis=1)
    g = model.forward(z, d, tally=tally)
    log_w = model.eta_logpdf_given_theta(eta, theta) - proposal.logpdf(eta)
    log_summands = model.loglike(y, g) + log_w
    log_p, var_ratio, cess = _reduce_summands(log_summands)
    return InnerEstimate(log_p, z, g, log_summands, var_ratio, cess)


# ---------------------------------------------------------------------------
# outer loop pieces
# ---------------------------------------------------------------------------

def draw_outer(model, d, n, rng, tally=None):
    """Draw n outer samples: prior parameters, forward outputs, data."""
    if n < 1:
        raise ValueError("need at least one outer sample")
    z = model.sample_prior(rng, n)
    g = model.forward(z, d, tally=tally)
    y = model.sample_y(g, rng)
    return OuterSamples(z, g, y, model.prior_logpdf(z))


def order_samples(outer):
    """Sort outer samples by decreasing prior density (stable for ties)."""
    idx = np.argsort(-outer.prior_lp, kind="stable")
    return outer.take(idx)


class MixtureBias:
    """Count-weighted mixture of the prior and earlier t proposals."""

    def __init__(self, components):
        self.components = list(components)
        self.total = sum(c for c, _ in self.components)
        if self.total < 1:
            raise ValueError("mixture needs a positive total count")

    def logpdf(self, pts):
        pts = np.atleast_2d(pts)
        rows = np.empty((len(self.components), pts.shape[0]))
        for r, (count, dist) in enumerate(self.components):
            rows[r] = math.log(count) + dist.logpdf(pts)
        hi = np.max(rows, axis=0)
        safe = np.where(np.isfinite(hi), hi, 0.0)
        with np.errstate(divide="ignore"):
            out = safe + np.log(np.sum(np.exp(rows - safe), axis=0))
        return np.where(np.isfinite(hi), out, hi) - math.log(self.total)


class SampleBank:
    """All samples drawn so far, their forward outputs, and the Student-t
    components they came from.

    Every pruned mixture contains the full prior block, so each
    component's log density over the prior block is cached the first time
    the component is used (evicted least-recently-used beyond a soft cap).
    Densities over the other components' sample blocks are cheap by
    comparison (pruned sets are small) and are evaluated per iteration.
    """

    def __init__(self, model, outer, dof, capacity=None):
        self.model = model
        self.dof = float(dof)
        n = len(outer)
        if capacity is None:
            capacity = n  # grown on demand; estimate_eig passes the exact bound
        self._z = np.empty((capacity, model.n))
        self._g = np.empty((capacity, model.n_y))
        self._prior_lp = np.empty(capacity)
        self._z[:n] = outer.z
        self._g[:n] = outer.g
        self._prior_lp[:n] = outer.prior_lp
        self._len = n
        self.n_prior = n
        self.counts = []  # per-component sample count
        self.starts = []  # per-component offset into the arrays
        self.t_params = []
        self._locs = np.empty((0, model.n))
        self._chols = np.empty((0, model.n, model.n))
        self._logdets = np.empty(0)
        self._cache = {}  # component index -> log density row over prior block
        self._cache_clock = {}
        self._cache_floats = 0
        self._tick = 0

    @property
    def size(self):
        return self._len

    @property
    def z(self):
        return self._z[: self._len]

    @property
    def g(self):
        return self._g[: self._len]

    @property
    def prior_lp(self):
        return self._prior_lp[: self._len]

    @property
    def n_components(self):
        return len(self.counts)

    def _reserve(self, extra):
        need = self._len + extra
        cap = self._z.shape[0]
        if need <= cap:
            return
        cap = max(need, 2 * cap)
        for name in ("_z", "_g", "_prior_lp"):
            old = getattr(self, name)
            fresh = np.empty((cap,) + old.shape[1:])
            fresh[: self._len] = old[: self._len]
            setattr(self, name, fresh)

    def append(self, z, g, prior_lp, t, count):
        count = int(count)
        self._reserve(count)
        self.starts.append(self._len)
        self.counts.append(count)
        self.t_params.append(t)
        self._z[self._len : self._len + count] = z
        self._g[self._len : self._len + count] = g
        self._prior_lp[self._len : self._len + count] = prior_lp
        self._len += count
        self._locs = np.concatenate([self._locs, t.loc[None, :]], axis=0)
        self._chols = np.concatenate([self._chols, t.chol[None, :, :]], axis=0)
        self._logdets = np.concatenate([self._logdets, [t.logdet]])

    def component_logpdf_at_point(self, x):
        """Log density of every banked component at one point."""
        if self.n_components == 0:
            return np.empty(0)
        return _kernels.tstack_logpdf_point(
            self._locs, self._chols, self._logdets, self.dof, np.ascontiguousarray(x)
        )

    def _prior_row(self, m):
        # Component m's log density over the prior block, cached.
        self._tick += 1
        self._cache_clock[m] = self._tick
        row = self._cache.get(m)
        if row is None:
            t = self.t_params[m]
            row = _kernels.mvt_logpdf(
                np.ascontiguousarray(self._z[: self.n_prior]),
                t.loc, t.chol, t.logdet, self.dof,
            )
            self._cache[m] = row
            self._cache_floats += row.size
            if self._cache_floats > _CACHE_CAP_FLOATS:
                for k in sorted(self._cache, key=self._cache_clock.get):
                    if k == m:
                        continue
                    self._cache_floats -= self._cache.pop(k).size
                    if self._cache_floats <= _CACHE_CAP_FLOATS:
                        break
        return row

    def cross_indices(self, j_idx):
        """Bank rows of the sample blocks of the components in ``j_idx``."""
        if len(j_idx) == 0:
            return np.empty(0, dtype=int)
        return np.concatenate(
            [np.arange(self.starts[m], self.starts[m] + self.counts[m]) for m in j_idx]
        )

    def subset_indices(self, j_idx):
        """Bank rows forming the mixture sample: prior block plus the
        sample block of every component in ``j_idx``."""
        return np.concatenate([np.arange(self.n_prior), self.cross_indices(j_idx)])

    def mixture_logpdf_at_subset(self, j_idx, cross_idx):
        """Pruned-mixture log density at the prior block followed by the
        bank rows ``cross_idx``."""
        c = len(j_idx)
        n = self.n_prior
        rows = np.empty((c, n + cross_idx.size))
        log_counts = np.empty(c)
        if c:
            pts = np.ascontiguousarray(self._z[cross_idx])
            sel = np.asarray(j_idx, dtype=int)
            rows[:, n:] = _kernels.tstack_logpdf_points(
                np.ascontiguousarray(self._locs[sel]),
                np.ascontiguousarray(self._chols[sel]),
                np.ascontiguousarray(self._logdets[sel]),
                self.dof, pts,
            )
        for r, m in enumerate(j_idx):
            rows[r, :n] = self._prior_row(m)
            log_counts[r] = math.log(self.counts[m])
        total = n + int(sum(self.counts[m] for m in j_idx))
        prior_lp = np.concatenate([self._prior_lp[:n], self._prior_lp[cross_idx]])
        out = _kernels.mixture_logpdf(
            rows, log_counts, prior_lp, math.log(n)
        )
        return out - math.log(total)

    def as_mixture(self, j_idx):
        """The same pruned mixture as an explicit MixtureBias (slow path)."""
        comps = [(self.n_prior, PriorProposal(self.model))]
        for m in j_idx:
            comps.append((self.counts[m], StudentTProposal(self.t_params[m])))
        return MixtureBias(comps)


def prune(bank, z_i, prior_lp_i, i, mode="density", cap=None):
    """Component indices kept in the mixture for outer iteration ``i``.

    ``density`` keeps components whose density at the generating parameter
    point strictly exceeds the prior's; ``all`` keeps every earlier
    component; ``none`` keeps none. ``cap`` optionally bounds the result
    to the components with the highest density at the point (mixture
    evaluation cost grows with the pruned set, while distant components
    contribute almost nothing to the moment weights).
    """
    earlier = min(i, bank.n_components)
    if mode == "none" or earlier == 0:
        return np.empty(0, dtype=int)
    if mode not in ("all", "density"):
        raise ValueError(f"unknown pruning mode {mode!r}")
    lp = bank.component_logpdf_at_point(z_i)[:earlier]
    if mode == "all":
        keep = np.arange(earlier)
    else:
        keep = np.nonzero(lp > prior_lp_i)[0]
    if cap is not None and keep.size > cap:
        top = np.argsort(lp[keep], kind="stable")[-cap:]
        keep = np.sort(keep[top])
    return keep


def estimate_posterior_moments(model, y, bank, j_idx):
    """Self-normalized multiple importance sampling posterior moments.

    Uses cached forward outputs only; no new model evaluations. Returns
    ``(moments, info)`` where ``info`` flags degenerate weights (a single
    surviving weight), whether the covariance eigenvalue floor bit, and
    the effective sample size of the normalized weights.
    """
    cross = bank.cross_indices(j_idx)
    n = bank.n_prior
    mix_lp = bank.mixture_logpdf_at_subset(j_idx, cross)
    g = np.concatenate([bank.g[:n], bank.g[cross]])
    z = np.concatenate([bank.z[:n], bank.z[cross]])
    prior_lp = np.concatenate([bank.prior_lp[:n], bank.prior_lp[cross]])
    loglik = model.loglike(y, np.ascontiguousarray(g))
    log_w = loglik + prior_lp - mix_lp
    hi = float(np.max(log_w))
    if hi == -np.inf:
        raise AllWeightsZero("all posterior-moment weights are zero")
    w = np.exp(log_w - hi)
    w /= w.sum()
    mean, cov = _kernels.weighted_moments(np.ascontiguousarray(z), w)
    cov = 0.5 * (cov + cov.T)
    degenerate = bool(np.max(w) == 1.0 and w.size > 1)
    cov, floored = floor_eigenvalues(cov)
    info = {
        "degenerate": degenerate,
        "floored": floored,
        "L": int(w.size),
        "ess": 1.0 / float(w @ w),
    }
    return GaussianMoments(mean, cov), info


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def _chunked(n, per_row):
    step = max(1, _CHUNK_FLOATS // max(1, per_row))
    for lo in range(0, n, step):
        yield lo, min(n, lo + step)


def _prior_mode(model, d, outer, config, split, rng_marg, rng_cond, tally):
    """Vectorized prior-biased nested estimator."""
    n, m1, m2 = len(outer), config.M1, config.M2
    n_dim, n_eta, n_y = model.n, model.n - split, model.n_y
    log_marg = np.empty(n)
    cess_marg = np.empty(n)
    vr_marg = np.empty(n)
    log_cond = np.empty(n)
    cess_cond = np.full(n, np.nan)
    vr_cond = np.zeros(n)

    for lo, hi in _chunked(n, m1 * max(n_dim, n_y)):
        z = model.sample_prior(rng_marg, (hi - lo) * m1)
        g = model.forward(z, d, tally=tally).reshape(hi - lo, m1, n_y)
        a = model.loglike_pairs(outer.y[lo:hi], g)
        log_marg[lo:hi], vr_marg[lo:hi], cess_marg[lo:hi] = _reduce_rows(a)

    if n_eta == 0:
        # Exact conditional likelihood from the cached outer forward outputs.
        log_cond[:] = _paired_loglike(model, outer.y, outer.g)
    else:
        for lo, hi in _chunked(n, m2 * max(n_dim, n_y)):
            eta = model.sample_eta_given_theta(
                outer.z[lo:hi, :split], rng_cond, (hi - lo) * m2
            )
            theta = np.repeat(outer.z[lo:hi, :split], m2, axis=0)
            z = np.concatenate([theta, eta], axis=1)
            g = model.forward(z, d, tally=tally).reshape(hi - lo, m2, n_y)
            a = model.loglike_pairs(outer.y[lo:hi], g)
            log_cond[lo:hi], vr_cond[lo:hi], cess_cond[lo:hi] = _reduce_rows(a)

    return log_marg, log_cond, cess_marg, cess_cond, vr_marg, vr_cond


def _paired_loglike(model, y, g):
    out = np.empty(y.shape[0])
    for i in range(y.shape[0]):
        out[i] = model.loglike(y[i], g[i])
    return out


def _reduce_rows(a):
    """Row-wise log mean, relative summand variance, and cESS."""
    m = a.shape[1]
    log_p = _kernels.logsumexp_rows(np.ascontiguousarray(a)) - math.log(m)
    if np.any(np.isinf(log_p) & (log_p < 0)):
        raise AllWeightsZero("all inner summands are zero for some outer sample")
    r = np.exp(a - log_p[:, None])
    vr = np.var(r, axis=1, ddof=1) if m > 1 else np.full(a.shape[0], np.nan)
    cess = m * m / np.einsum("ij,ij->i", r, r)
    return log_p, vr, cess


def _sequential_mode(model, d, outer, config, split, rng_marg, rng_cond, tally):
    """LMIS and exact-oracle modes; the outer loop is sequential."""
    n, m1, m2 = len(outer), config.M1, config.M2
    n_eta = model.n - split
    lmis = config.biasing == "lmis"
    oracle = config.biasing == "exact_oracle"
    if oracle and not hasattr(model, "posterior"):
        raise ValueError("exact_oracle biasing needs a model with a closed-form posterior")

    log_marg = np.empty(n)
    log_cond = np.empty(n)
    cess_marg = np.empty(n)
    cess_cond = np.full(n, np.nan)
    vr_marg = np.empty(n)
    vr_cond = np.zeros(n)
    marg_fb = cond_fb = degen = 0

    bank = (
        SampleBank(model, outer, config.nu, capacity=n * (1 + m1)) if lmis else None
    )
    prior_prop = PriorProposal(model)
    prior_vars = model.prior_variances()

    for i in range(n):
        y_i = outer.y[i]
        theta_i = outer.z[i, :split]
        q_marg = q_cond = None
        t_marg = None

        if oracle:
            post = model.posterior(y_i, d)
            q_marg = GaussianProposal(post)
            if n_eta > 0:
                q_cond = GaussianProposal(gaussian_condition(post, split, theta_i))
        else:
            j_idx = prune(
                bank, outer.z[i], outer.prior_lp[i], i, config.pruning,
                cap=config.prune_cap,
            )
            moments, info = estimate_posterior_moments(model, y_i, bank, j_idx)
            if info["degenerate"]:
                degen += 1
            # Widen the scale in proportion to how unreliable the weighted
            # moments are (see MOMENT_REG_SCALE).
            widen = (MOMENT_REG_SCALE / info["ess"]) ** 2
            scale = moments.cov + widen * np.diag(prior_vars)
            reg = GaussianMoments(moments.mean, scale)
            t_marg = StudentTParams(reg.mean, reg.cov, config.nu)
            q_marg = StudentTProposal(t_marg)
            if n_eta > 0:
                if config.cond_bias == "t_conditional":
                    cond = gaussian_condition(reg, split, theta_i)
                    q_cond = StudentTProposal(
                        StudentTParams(cond.mean, cond.cov, config.nu)
                    )
                else:
                    q_cond = StudentTProposal(
                        StudentTParams(
                            reg.mean[split:], reg.cov[split:, split:], config.nu
                        )
                    )

        # marginal likelihood
        used_fallback = False
        try:
            est = estimate_marginal_likelihood(
                model, y_i, d, q_marg, m1, rng_marg, tally=tally
            )
        except AllWeightsZero:
            used_fallback = True
            marg_fb += 1
            est = estimate_marginal_likelihood(
                model, y_i, d, prior_prop, m1, rng_marg, tally=tally
            )
        log_marg[i] = est.log_p
        vr_marg[i] = est.var_ratio
        cess_marg[i] = est.cess
        if lmis and not used_fallback:
            bank.append(
                est.samples, est.g, model.prior_logpdf(est.samples), t_marg, m1
            )

        # conditional likelihood
        if n_eta == 0:
            log_cond[i] = model.loglike(y_i, outer.g[i])
            continue
        try:
            cest = estimate_conditional_likelihood(
                model, y_i, theta_i, d, q_cond, m2, rng_cond, tally=tally
            )
        except AllWeightsZero:
            cond_fb += 1
            cest = estimate_conditional_likelihood(
                model, y_i, theta_i, d, EtaPriorProposal(model, theta_i),
                m2, rng_cond, tally=tally,
            )
        log_cond[i] = cest.log_p
        vr_cond[i] = cest.var_ratio
        cess_cond[i] = cest.cess

    return (
        log_marg, log_cond, cess_marg, cess_cond, vr_marg, vr_cond,
        marg_fb, cond_fb, degen,
    )


def estimate_eig(model, d, config, mode="marginal"):
    """Estimate the expected information gain at design ``d``.

    ``mode="marginal"`` targets the information gain in the model's
    interest block alone; ``mode="joint"`` treats every parameter as an
    interest parameter, in which case the conditional likelihood is exact
    and needs no inner sampling.
    """
    if mode not in ("marginal", "joint"):
        raise ValueError(f"unknown mode {mode!r}")
    split = model.n if mode == "joint" else model.split
    d = model.check_design(d)
    t0 = time.perf_counter()
    tally = EvalCounter()

    rng_outer = stream(config.seed, 0)
    rng_marg = stream(config.seed, 1)
    rng_cond = stream(config.seed, 2)

    outer = draw_outer(model, d, config.N, rng_outer, tally=tally)
    if config.ordering == "prior_density_desc":
        outer = order_samples(outer)

    marg_fb = cond_fb = degen = 0
    if config.biasing == "prior":
        (log_marg, log_cond, cess_marg, cess_cond, vr_marg, vr_cond) = _prior_mode(
            model, d, outer, config, split, rng_marg, rng_cond, tally
        )
    else:
        (
            log_marg, log_cond, cess_marg, cess_cond, vr_marg, vr_cond,
            marg_fb, cond_fb, degen,
        ) = _sequential_mode(
            model, d, outer, config, split, rng_marg, rng_cond, tally
        )

    value = float(np.mean(log_cond - log_marg))
    return EigEstimate(
        value=value,
        log_cond=log_cond,
        log_marg=log_marg,
        cess_marg=cess_marg,
        cess_cond=cess_cond,
        var_ratio_marg=vr_marg,
        var_ratio_cond=vr_cond,
        n_evals=tally.count,
        wall_time=time.perf_counter() - t0,
        n_theta=split,
        n_eta=model.n - split,
        config=config,
        marg_fallbacks=marg_fb,
        cond_fallbacks=cond_fb,
        degenerate_moments=degen,
    )


def estimate_eig_joint(model, d, config):
    """Joint-mode estimate: every parameter treated as an interest parameter."""
    return estimate_eig(model, d, config, mode="joint")
