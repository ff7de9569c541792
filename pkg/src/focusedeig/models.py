"""Probabilistic models: prior, forward map, likelihood, and closed forms.

Two built-in families are provided. The linear-Gaussian family has closed
forms for the posterior, the marginal/conditional likelihoods and the
expected information gain, which the estimators are validated against. The
Mossbauer family is a nonlinear Lorentzian absorption model with lognormal
priors on its positive parameters.

Forward-model evaluations are the unit of computational budget. Every
call to ``forward`` adds the batch size to the model's evaluation tally
unless the requested inputs are found in the supplied cache.
"""

import math
import threading

import numpy as np

from . import _kernels
from .numkit import GaussianMoments, cholesky, chol_logdet, gaussian_condition

_LOG_2PI = math.log(2.0 * math.pi)


class DimensionMismatch(ValueError):
    """Input array shape is inconsistent with the model's dimensions."""


class EvalCounter:
    """Thread-safe tally of forward-model evaluations."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, k):
        with self._lock:
            self._count += int(k)

    @property
    def count(self):
        return self._count


class ForwardCache:
    """Exact-input memo for forward evaluations, keyed bit-for-bit.

    Reuse requires the parameter vector and design to match a previous
    call exactly; no tolerance is applied.
    """

    def __init__(self):
        self._store = {}

    @staticmethod
    def _key(z, d):
        return (z.tobytes(), d.tobytes())

    def get(self, z, d):
        return self._store.get(self._key(z, d))

    def put(self, z, d, g):
        self._store[self._key(z, d)] = g

    def __len__(self):
        return len(self._store)


# Per-coordinate independent priors; kind is "normal" or "lognormal" with
# (m, s) living on the log scale for the lognormal case.
class _CoordPrior:
    __slots__ = ("kind", "m", "s")

    def __init__(self, kind, m, s):
        self.kind = kind
        self.m = float(m)
        self.s = float(s)

    def transform(self, u):
        # u: standard normal draws
        x = self.m + self.s * u
        return np.exp(x) if self.kind == "lognormal" else x

    def logpdf(self, x):
        if self.kind == "normal":
            return -0.5 * (((x - self.m) / self.s) ** 2 + _LOG_2PI) - math.log(self.s)
        out = np.full(np.shape(x), -np.inf)
        pos = x > 0
        lx = np.log(x, where=pos, out=np.zeros_like(np.asarray(x, dtype=float)))
        val = (
            -0.5 * (((lx - self.m) / self.s) ** 2 + _LOG_2PI)
            - math.log(self.s)
            - lx
        )
        return np.where(pos, val, out)


class Model:
    """Shared plumbing for models with independent coordinate priors and
    additive isotropic Gaussian observation noise."""

    def __init__(self, coord_priors, split, n_y, n_d, noise_sigma, design_lo, design_hi):
        if not 1 <= split <= len(coord_priors):
            raise ValueError("interest split must satisfy 1 <= split <= n")
        if not noise_sigma > 0:
            raise ValueError("noise_sigma must be positive")
        self._priors = list(coord_priors)
        self.split = int(split)
        self.n_y = int(n_y)
        self.n_d = int(n_d)
        self.noise_sigma = float(noise_sigma)
        self.design_lo = float(design_lo)
        self.design_hi = float(design_hi)
        self.counter = EvalCounter()

    @property
    def n(self):
        return len(self._priors)

    @property
    def n_theta(self):
        return self.split

    @property
    def n_eta(self):
        return self.n - self.split

    # -- designs ------------------------------------------------------------

    def check_design(self, d):
        d = np.atleast_1d(np.asarray(d, dtype=float))
        if d.shape != (self.n_d,):
            raise DimensionMismatch(f"design must have shape ({self.n_d},)")
        if np.any(d < self.design_lo) or np.any(d > self.design_hi):
            raise ValueError(
                f"design outside [{self.design_lo}, {self.design_hi}]^{self.n_d}"
            )
        return d

    # -- prior --------------------------------------------------------------

    def sample_prior(self, rng, size):
        # One row-major block of normals keeps the stream consumption
        # identical whether samples are drawn in one batch or per row.
        u = rng.standard_normal((size, self.n))
        out = np.empty((size, self.n))
        for j, pr in enumerate(self._priors):
            out[:, j] = pr.transform(u[:, j])
        return out

    def prior_logpdf(self, z):
        z = np.asarray(z, dtype=float)
        squeeze = z.ndim == 1
        z2 = np.atleast_2d(z)
        if z2.shape[1] != self.n:
            raise DimensionMismatch(f"parameter vectors must have length {self.n}")
        acc = np.zeros(z2.shape[0])
        for j, pr in enumerate(self._priors):
            acc = acc + pr.logpdf(z2[:, j])
        return float(acc[0]) if squeeze else acc

    def prior_variances(self):
        """Per-coordinate prior variances (priors are independent)."""
        out = np.empty(self.n)
        for j, pr in enumerate(self._priors):
            if pr.kind == "normal":
                out[j] = pr.s**2
            else:
                s2 = pr.s**2
                out[j] = (math.exp(s2) - 1.0) * math.exp(2.0 * pr.m + s2)
        return out

    def sample_eta_given_theta(self, theta, rng, size):
        # Coordinate priors are independent, so eta | theta is the eta prior.
        u = rng.standard_normal((size, self.n_eta))
        out = np.empty((size, self.n_eta))
        for j, pr in enumerate(self._priors[self.split:]):
            out[:, j] = pr.transform(u[:, j])
        return out

    def eta_logpdf_given_theta(self, eta, theta):
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        if eta.shape[1] != self.n_eta:
            raise DimensionMismatch(f"eta vectors must have length {self.n_eta}")
        acc = np.zeros(eta.shape[0])
        for j, pr in enumerate(self._priors[self.split:]):
            acc = acc + pr.logpdf(eta[:, j])
        return acc

    # -- forward model and likelihood ----------------------------------------

    def _evaluate(self, z2, d):
        raise NotImplementedError

    def forward(self, z, d, cache=None, tally=None):
        """Forward-model outputs for one parameter vector or a batch.

        Each evaluated row adds one to the model's evaluation counter (and
        to ``tally`` when given, so concurrent runs can keep their own
        books); rows served from ``cache`` are free.
        """
        d = self.check_design(d)
        z = np.asarray(z, dtype=float)
        squeeze = z.ndim == 1
        z2 = np.ascontiguousarray(np.atleast_2d(z))
        if z2.shape[1] != self.n:
            raise DimensionMismatch(f"parameter vectors must have length {self.n}")
        if cache is None:
            g = self._evaluate(z2, d)
            evals = z2.shape[0]
        else:
            g = np.empty((z2.shape[0], self.n_y))
            misses = []
            for i in range(z2.shape[0]):
                hit = cache.get(z2[i], d)
                if hit is None:
                    misses.append(i)
                else:
                    g[i] = hit
            if misses:
                fresh = self._evaluate(z2[misses], d)
                for k, i in enumerate(misses):
                    g[i] = fresh[k]
                    cache.put(z2[i], d, fresh[k].copy())
            evals = len(misses)
        if evals:
            self.counter.add(evals)
            if tally is not None:
                tally.add(evals)
        return g[0] if squeeze else g

    def sample_y(self, g, rng):
        g = np.asarray(g, dtype=float)
        return g + self.noise_sigma * rng.standard_normal(g.shape)

    def loglike(self, y, g):
        """Gaussian log likelihood of ``y`` for each forward output row."""
        y = np.ascontiguousarray(np.asarray(y, dtype=float))
        g = np.asarray(g, dtype=float)
        squeeze = g.ndim == 1
        g2 = np.ascontiguousarray(np.atleast_2d(g))
        if y.shape != (self.n_y,) or g2.shape[1] != self.n_y:
            raise DimensionMismatch(f"observations must have length {self.n_y}")
        out = _kernels.iso_loglike(y, g2, self.noise_sigma)
        return float(out[0]) if squeeze else out

    def loglike_pairs(self, y, g):
        """Row-paired likelihoods: y (N, n_y) against g (N, M, n_y)."""
        y = np.ascontiguousarray(np.asarray(y, dtype=float))
        g = np.ascontiguousarray(np.asarray(g, dtype=float))
        return _kernels.iso_loglike_pairs(y, g, self.noise_sigma)


class LinearGaussianModel(Model):
    """Linear observation model with standard normal priors.

    The design matrix trades signal between the first (interest) coordinate
    and the remaining ones: its diagonal is ``(k*d, k*(1-d), ..., k*(1-d))``
    and for n > 2 the two corner entries couple the interest parameter to
    the last nuisance parameter. For n = 2 the matrix is the plain diagonal
    two-parameter trade-off.
    """

    def __init__(self, n=2, gain=1.0, noise_sigma=0.4, split=1):
        if n < 2:
            raise ValueError("n must be at least 2")
        if not gain > 0:
            raise ValueError("gain must be positive")
        priors = [_CoordPrior("normal", 0.0, 1.0) for _ in range(n)]
        super().__init__(priors, split, n, 1, noise_sigma, 0.0, 1.0)
        self.gain = float(gain)

    def design_matrix(self, d):
        d = self.check_design(d)
        dv = float(d[0])
        n, k = self.n, self.gain
        g = np.zeros((n, n))
        g[0, 0] = k * dv
        for i in range(1, n):
            g[i, i] = k * (1.0 - dv)
        if n > 2:
            g[0, n - 1] = 1.0
            g[n - 1, 0] = 1.0
        return g

    def _evaluate(self, z2, d):
        return z2 @ self.design_matrix(d).T

    # -- closed forms ---------------------------------------------------------

    def posterior(self, y, d):
        """Exact Gaussian posterior moments given data ``y`` at design ``d``."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n,):
            raise DimensionMismatch(f"observations must have length {self.n}")
        g = self.design_matrix(d)
        s = g @ g.T + self.noise_sigma**2 * np.eye(self.n)
        ls = cholesky(s)
        half = np.linalg.solve(ls, np.column_stack([g, y]))
        full = np.linalg.solve(ls.T, half)
        mean = g.T @ full[:, -1]
        cov = np.eye(self.n) - g.T @ full[:, :-1]
        return GaussianMoments(mean, 0.5 * (cov + cov.T))

    def posterior_cov(self, d):
        # Posterior covariance does not depend on y for a linear model.
        return self.posterior(np.zeros(self.n), d).cov

    def eig_closed_form(self, d, mode="marginal"):
        """Exact expected information gain at design ``d``.

        ``mode="joint"`` gives ``-0.5 log det(post cov)``; ``"marginal"``
        gives ``-0.5 log(post var of the interest coordinate)``.
        """
        cov = self.posterior_cov(d)
        if mode == "joint":
            sign, ld = np.linalg.slogdet(cov)
            if sign <= 0:
                raise np.linalg.LinAlgError("posterior covariance not PD")
            return -0.5 * ld + 0.0
        if mode == "marginal":
            if self.split != 1:
                raise ValueError("marginal closed form assumes a scalar interest")
            return -0.5 * math.log(cov[0, 0]) + 0.0
        raise ValueError(f"unknown mode {mode!r}")

    def prior_predictive(self, d):
        """Moments of y at design ``d`` marginalized over the prior."""
        g = self.design_matrix(d)
        return GaussianMoments(
            np.zeros(self.n), g @ g.T + self.noise_sigma**2 * np.eye(self.n)
        )

    def marginal_loglike(self, y, d):
        """Exact log marginal likelihood log p(y | d)."""
        from .numkit import mvn_logpdf

        return mvn_logpdf(self.prior_predictive(d), np.asarray(y, dtype=float))

    def y_given_theta(self, d):
        """Conditional moments of y given the interest block, as a pair.

        Returns ``(coef, base)`` where the conditional distribution of y at
        interest value t is ``N(base.mean + coef @ t, base.cov)``. Derived
        by conditioning the joint Gaussian of (theta, y) on theta.
        """
        g = self.design_matrix(d)
        s_y = g @ g.T + self.noise_sigma**2 * np.eye(self.n)
        k = self.split
        joint_cov = np.zeros((k + self.n, k + self.n))
        joint_cov[:k, :k] = np.eye(k)
        joint_cov[:k, k:] = g[:, :k].T
        joint_cov[k:, :k] = g[:, :k]
        joint_cov[k:, k:] = s_y
        joint = GaussianMoments(np.zeros(k + self.n), joint_cov)
        base = gaussian_condition(joint, k, np.zeros(k))
        unit = gaussian_condition(joint, k, np.ones(k))
        coef = (unit.mean - base.mean)[:, None] if k == 1 else None
        if k != 1:
            coef = np.empty((self.n, k))
            for j in range(k):
                e = np.zeros(k)
                e[j] = 1.0
                coef[:, j] = gaussian_condition(joint, k, e).mean - base.mean
        return coef, base

    def conditional_loglike(self, y, theta, d):
        """Exact log conditional likelihood log p(y | theta, d)."""
        from .numkit import mvn_logpdf

        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        coef, base = self.y_given_theta(d)
        shifted = GaussianMoments(base.mean + coef @ theta, base.cov)
        return mvn_logpdf(shifted, np.asarray(y, dtype=float))


MOSSBAUER_PARAMS = ("center", "width", "height", "offset")


class MossbauerModel(Model):
    """Lorentzian absorption line observed at a set of drive velocities.

    The signal at velocity d_i is
    ``offset - height * width^2 / (width^2 + (center - d_i)^2)`` plus
    N(0, 0.1^2) noise. The parameter of interest named by ``focus`` is
    moved to the front of the parameter vector; the rest keep their
    canonical order and act as nuisance parameters.
    """

    _PRIORS = {
        "center": _CoordPrior("normal", 0.0, 1.0),
        "width": _CoordPrior("lognormal", 0.0, 0.3),
        "height": _CoordPrior("lognormal", 0.0, 0.3),
        "offset": _CoordPrior("lognormal", 1.0, 0.2),
    }

    def __init__(self, n_velocities=3, focus="center", noise_sigma=0.1):
        if focus not in MOSSBAUER_PARAMS:
            raise ValueError(f"focus must be one of {MOSSBAUER_PARAMS}")
        self.param_order = (focus,) + tuple(
            p for p in MOSSBAUER_PARAMS if p != focus
        )
        priors = [self._PRIORS[p] for p in self.param_order]
        super().__init__(priors, 1, n_velocities, n_velocities, noise_sigma, -3.0, 3.0)
        self._idx = {p: self.param_order.index(p) for p in MOSSBAUER_PARAMS}

    def _evaluate(self, z2, d):
        return _kernels.lorentzian(
            np.ascontiguousarray(z2[:, self._idx["center"]]),
            np.ascontiguousarray(z2[:, self._idx["width"]]),
            np.ascontiguousarray(z2[:, self._idx["height"]]),
            np.ascontiguousarray(z2[:, self._idx["offset"]]),
            d,
        )


def make_model(name, **kwargs):
    """Model factory used by the experiment harness."""
    if name == "linear_gaussian":
        return LinearGaussianModel(**kwargs)
    if name == "mossbauer":
        return MossbauerModel(**kwargs)
    raise ValueError(f"unknown model {name!r}")
