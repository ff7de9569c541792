"""Small dense linear algebra plus the Gaussian / Student-t toolkit.

Everything here operates on plain numpy arrays of modest dimension (the
models in this package live in R^2 .. R^16). Covariances coming out of
self-normalized weighted moment estimates can be arbitrarily close to
singular, so every factorization goes through a fixed jitter ladder instead
of failing on the first LinAlgError.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp as _scipy_logsumexp

from . import _kernels

# Relative jitter ladder; each step is scaled by max(1, trace/p).
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4)

SYMMETRY_RTOL = 1e-12


class NotSymmetric(ValueError):
    """Matrix is not symmetric to within the accepted tolerance."""


class NotPDAfterMaxJitter(np.linalg.LinAlgError):
    """Cholesky failed for every jitter level in the ladder."""


class SingularBlock(np.linalg.LinAlgError):
    """Conditioning block is not invertible even after jitter."""


class EmptyInput(ValueError):
    """Operation requires at least one element."""


def check_symmetric(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 0.0)
    if float(np.max(np.abs(a - a.T))) > SYMMETRY_RTOL * scale:
        raise NotSymmetric("matrix is not symmetric to 1e-12 relative tolerance")
    return a


def cholesky(cov, ladder=JITTER_LADDER):
    """Lower Cholesky factor of ``cov + eps*I`` for the smallest workable eps.

    Parameters
    ----------
    cov : ndarray (p, p)
        Symmetric matrix; symmetry is checked up front.
    ladder : sequence of float
        Relative jitter levels, each scaled by ``max(1, trace/p)``.

    Raises
    ------
    NotSymmetric
        If ``cov`` is not symmetric.
    NotPDAfterMaxJitter
        If no jitter level in the ladder makes the factorization succeed.
    """
    cov = check_symmetric(cov)
    p = cov.shape[0]
    unit = max(1.0, float(np.trace(cov)) / p)
    eye = np.eye(p)
    for eps in ladder:
        try:
            return np.linalg.cholesky(cov + (eps * unit) * eye)
        except np.linalg.LinAlgError:
            continue
    raise NotPDAfterMaxJitter(
        f"not positive definite after max jitter {ladder[-1]:g}*{unit:g}"
    )


def chol_logdet(chol):
    """Log determinant of the matrix factored by a lower-triangular ``chol``."""
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def floor_eigenvalues(cov, rel_floor=1e-10):
    """Clamp eigenvalues of a symmetric matrix from below.

    The floor is ``rel_floor * max(1, trace/p)``. Returns the repaired
    matrix and a flag telling whether any eigenvalue was clamped.
    """
    cov = check_symmetric(cov)
    p = cov.shape[0]
    floor = rel_floor * max(1.0, float(np.trace(cov)) / p)
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] >= floor:
        return cov, False
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T, True


@dataclass
class GaussianMoments:
    """Mean and covariance of a multivariate normal."""

    mean: np.ndarray
    cov: np.ndarray
    _chol: np.ndarray = field(default=None, repr=False, compare=False)
    _logdet: float = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("cov shape does not match mean length")

    @property
    def dim(self):
        return self.mean.size

    @property
    def chol(self):
        if self._chol is None:
            self._chol = cholesky(self.cov)
        return self._chol

    @property
    def logdet(self):
        if self._logdet is None:
            self._logdet = chol_logdet(self.chol)
        return self._logdet


@dataclass
class StudentTParams:
    """Location, scale matrix and degrees of freedom of a multivariate t."""

    loc: np.ndarray
    scale: np.ndarray
    dof: float
    _chol: np.ndarray = field(default=None, repr=False, compare=False)
    _logdet: float = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.loc = np.atleast_1d(np.asarray(self.loc, dtype=float))
        self.scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        if self.scale.shape != (self.loc.size, self.loc.size):
            raise ValueError("scale shape does not match loc length")
        if not self.dof > 0:
            raise ValueError("dof must be positive")

    @property
    def dim(self):
        return self.loc.size

    @property
    def chol(self):
        if self._chol is None:
            self._chol = cholesky(self.scale)
        return self._chol

    @property
    def logdet(self):
        if self._logdet is None:
            self._logdet = chol_logdet(self.chol)
        return self._logdet

    def covariance(self):
        """Covariance matrix; requires dof > 2 for it to be finite."""
        if not self.dof > 2:
            raise ValueError("covariance is finite only for dof > 2")
        return self.scale * (self.dof / (self.dof - 2.0))


def mvn_sample(m, rng, size=None):
    """Draw from N(mean, cov); shape (p,) or (size, p)."""
    squeeze = size is None
    n = 1 if squeeze else int(size)
    z = rng.standard_normal((n, m.dim))
    x = z @ m.chol.T + m.mean
    return x[0] if squeeze else x


def mvn_logpdf(m, x):
    """Gaussian log density at ``x`` (a point or a batch of rows)."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    pts = np.ascontiguousarray(np.atleast_2d(x))
    out = _kernels.mvn_logpdf(pts, m.mean, m.chol, m.logdet)
    return float(out[0]) if squeeze else out


def mvt_sample(t, rng, size=None):
    """Draw from a multivariate Student-t; shape (p,) or (size, p)."""
    squeeze = size is None
    n = 1 if squeeze else int(size)
    z = rng.standard_normal((n, t.dim))
    u = rng.chisquare(t.dof, size=n)
    x = t.loc + (z @ t.chol.T) * np.sqrt(t.dof / u)[:, None]
    return x[0] if squeeze else x


def mvt_logpdf(t, x):
    """Student-t log density at ``x`` (a point or a batch of rows)."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    pts = np.ascontiguousarray(np.atleast_2d(x))
    out = _kernels.mvt_logpdf(pts, t.loc, t.chol, t.logdet, float(t.dof))
    return float(out[0]) if squeeze else out


def gaussian_condition(m, split, value):
    """Condition a Gaussian on its first ``split`` coordinates.

    Returns the moments of the trailing block given that the leading block
    equals ``value``: mean ``mu_b + S_ab^T S_a^{-1} (value - mu_a)`` and
    covariance ``S_b - S_ab^T S_a^{-1} S_ab``.

    Raises
    ------
    SingularBlock
        If the leading block is not invertible after the jitter ladder.
    """
    value = np.atleast_1d(np.asarray(value, dtype=float))
    p = m.dim
    if not 0 < split < p:
        raise ValueError(f"split must lie strictly inside (0, {p})")
    if value.size != split:
        raise ValueError("conditioning value length does not match split")
    s_a = m.cov[:split, :split]
    s_ab = m.cov[:split, split:]
    s_b = m.cov[split:, split:]
    try:
        la = cholesky(s_a)
    except NotPDAfterMaxJitter as exc:
        raise SingularBlock("leading block not invertible after jitter") from exc
    # S_a^{-1} S_ab and S_a^{-1} (value - mu_a) via two triangular solves.
    half = np.linalg.solve(la, np.column_stack([s_ab, value - m.mean[:split]]))
    full = np.linalg.solve(la.T, half)
    mean = m.mean[split:] + s_ab.T @ full[:, -1]
    cov = s_b - s_ab.T @ full[:, :-1]
    cov = 0.5 * (cov + cov.T)
    return GaussianMoments(mean, cov)


def logsumexp(values):
    """log(sum(exp(values))), stable far below the float underflow point."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptyInput("logsumexp of an empty sequence")
    return float(_scipy_logsumexp(values))


def stream(root_seed, *path):
    """Independent counter-based generator for a (replicate, design, ...) path.

    Streams are derived by spawn keys of a SeedSequence over a Philox
    bit generator, so any two distinct paths give statistically independent
    streams and the assignment is reproducible across runs and platforms.
    """
    ss = np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(k) for k in path))
    return np.random.Generator(np.random.Philox(ss))
