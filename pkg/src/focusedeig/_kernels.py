"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Every kernel exists in two functionally identical versions: ``<name>_numpy``
and (when numba is importable) ``<name>_numba``. The module-level public
names bind to one of the two at import time, controlled by the
``FOCUSEDEIG_BACKEND`` environment variable (``"numba"`` by default,
``"numpy"`` to force the fallback). ``benchmarks/bench_kernels.py`` times
both paths side by side.

All kernels operate on plain contiguous float64 arrays and know nothing
about the rest of the package.
"""

import math
import os

import numpy as np

_BACKEND = os.environ.get("FOCUSEDEIG_BACKEND", "numba").lower()
if _BACKEND not in ("numba", "numpy"):
    raise ValueError(
        f"FOCUSEDEIG_BACKEND must be 'numba' or 'numpy', got {_BACKEND!r}"
    )

USING_NUMBA = False
if _BACKEND == "numba":
    try:
        from numba import njit

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USING_NUMBA = False

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _solve_lower(chol, x):
    # x: (B, p); returns L^{-1} x^T as (p, B) without scipy (kernels stay
    # dependency-light); p is tiny so the explicit loop is fine.
    p = chol.shape[0]
    v = np.empty((p, x.shape[0]))
    for i in range(p):
        acc = x[:, i].copy()
        for j in range(i):
            acc -= chol[i, j] * v[j]
        v[i] = acc / chol[i, i]
    return v


def mvn_logpdf_numpy(x, mean, chol, logdet):
    """Gaussian log density at each row of ``x`` given a Cholesky factor.

    Parameters
    ----------
    x : ndarray (B, p)
    mean : ndarray (p,)
    chol : ndarray (p, p)
        Lower-triangular factor of the covariance.
    logdet : float
        Log determinant of the covariance.
    """
    p = mean.shape[0]
    v = _solve_lower(chol, x - mean)
    maha = np.einsum("ib,ib->b", v, v)
    return -0.5 * (p * _LOG_2PI + logdet + maha)


def mvt_logpdf_numpy(x, loc, chol, logdet, dof):
    """Multivariate Student-t log density at each row of ``x``.

    ``chol``/``logdet`` factor the scale matrix (not the covariance).
    """
    p = loc.shape[0]
    v = _solve_lower(chol, x - loc)
    maha = np.einsum("ib,ib->b", v, v)
    const = (
        math.lgamma(0.5 * (dof + p))
        - math.lgamma(0.5 * dof)
        - 0.5 * p * math.log(dof * math.pi)
        - 0.5 * logdet
    )
    return const - 0.5 * (dof + p) * np.log1p(maha / dof)


def iso_loglike_numpy(y, g, sigma):
    """log N(y; g_row, sigma^2 I) for each row of ``g`` against one ``y``."""
    n = y.shape[0]
    r = g - y
    ss = np.einsum("bi,bi->b", r, r)
    return -0.5 * (n * (_LOG_2PI + 2.0 * math.log(sigma)) + ss / sigma**2)


def iso_loglike_pairs_numpy(y, g, sigma):
    """log N(y_i; g_{ij}, sigma^2 I) for y (N, n) against g (N, M, n)."""
    n = y.shape[1]
    r = g - y[:, None, :]
    ss = np.einsum("bji,bji->bj", r, r)
    return -0.5 * (n * (_LOG_2PI + 2.0 * math.log(sigma)) + ss / sigma**2)


def logsumexp_rows_numpy(a):
    """Row-wise log-sum-exp of a 2-D array; all -inf rows give -inf."""
    hi = np.max(a, axis=1)
    safe = np.where(np.isfinite(hi), hi, 0.0)
    with np.errstate(divide="ignore"):
        out = safe + np.log(np.sum(np.exp(a - safe[:, None]), axis=1))
    return np.where(np.isfinite(hi), out, hi)


def mixture_logpdf_numpy(comp_logpdf, log_counts, prior_logpdf, log_n_prior):
    """Log density of a count-weighted mixture, up to the -log(L) shift.

    Parameters
    ----------
    comp_logpdf : ndarray (C, L)
        Log density of each non-prior component at every point.
    log_counts : ndarray (C,)
        Log of the sample count attached to each component.
    prior_logpdf : ndarray (L,)
        Prior log density at every point.
    log_n_prior : float
        Log of the prior's sample count.

    Returns
    -------
    ndarray (L,) equal to ``logsumexp`` over the stacked, count-weighted
    component rows. The caller subtracts ``log(total count)``.
    """
    stacked = np.concatenate(
        [
            (log_n_prior + prior_logpdf)[None, :],
            log_counts[:, None] + comp_logpdf,
        ],
        axis=0,
    )
    hi = np.max(stacked, axis=0)
    safe = np.where(np.isfinite(hi), hi, 0.0)
    with np.errstate(divide="ignore"):
        out = safe + np.log(np.sum(np.exp(stacked - safe[None, :]), axis=0))
    return np.where(np.isfinite(hi), out, hi)


def weighted_moments_numpy(z, w):
    """Weighted mean and covariance of rows of ``z`` (weights sum to 1)."""
    mean = w @ z
    c = z - mean
    cov = (c * w[:, None]).T @ c
    return mean, cov


def tstack_logpdf_point_numpy(locs, chols, logdets, dof, x):
    """Student-t log density of one point under a stack of components.

    Parameters
    ----------
    locs : ndarray (C, p)
    chols : ndarray (C, p, p)
    logdets : ndarray (C,)
    dof : float
    x : ndarray (p,)
    """
    c = locs.shape[0]
    out = np.empty(c)
    for k in range(c):
        out[k] = mvt_logpdf_numpy(x[None, :], locs[k], chols[k], logdets[k], dof)[0]
    return out


def tstack_logpdf_points_numpy(locs, chols, logdets, dof, pts):
    """Student-t log densities of a batch of points under a component stack.

    Returns an array of shape (C, B).
    """
    c = locs.shape[0]
    out = np.empty((c, pts.shape[0]))
    for k in range(c):
        out[k] = mvt_logpdf_numpy(pts, locs[k], chols[k], logdets[k], dof)
    return out


def lorentzian_numpy(center, width, height, offset, d):
    """Lorentzian absorption profile for parameter batches at velocities d."""
    w2 = width[:, None] ** 2
    dip = height[:, None] * w2 / (w2 + (center[:, None] - d[None, :]) ** 2)
    return offset[:, None] - dip


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if USING_NUMBA:

    @njit(cache=True, nogil=True)
    def _mvn_logpdf_nb(x, mean, chol, logdet):
        b, p = x.shape
        out = np.empty(b)
        v = np.empty(p)
        for r in range(b):
            maha = 0.0
            for i in range(p):
                acc = x[r, i] - mean[i]
                for j in range(i):
                    acc -= chol[i, j] * v[j]
                v[i] = acc / chol[i, i]
                maha += v[i] * v[i]
            out[r] = -0.5 * (p * _LOG_2PI + logdet + maha)
        return out

    @njit(cache=True, nogil=True)
    def _mvt_logpdf_nb(x, loc, chol, logdet, dof):
        b, p = x.shape
        const = (
            math.lgamma(0.5 * (dof + p))
            - math.lgamma(0.5 * dof)
            - 0.5 * p * math.log(dof * math.pi)
            - 0.5 * logdet
        )
        out = np.empty(b)
        v = np.empty(p)
        for r in range(b):
            maha = 0.0
            for i in range(p):
                acc = x[r, i] - loc[i]
                for j in range(i):
                    acc -= chol[i, j] * v[j]
                v[i] = acc / chol[i, i]
                maha += v[i] * v[i]
            out[r] = const - 0.5 * (dof + p) * math.log1p(maha / dof)
        return out

    @njit(cache=True, nogil=True)
    def _iso_loglike_nb(y, g, sigma):
        b, n = g.shape
        const = -0.5 * n * (_LOG_2PI + 2.0 * math.log(sigma))
        inv = 1.0 / (sigma * sigma)
        out = np.empty(b)
        for r in range(b):
            ss = 0.0
            for i in range(n):
                diff = g[r, i] - y[i]
                ss += diff * diff
            out[r] = const - 0.5 * ss * inv
        return out

    @njit(cache=True, nogil=True)
    def _iso_loglike_pairs_nb(y, g, sigma):
        nb_, m, n = g.shape
        const = -0.5 * n * (_LOG_2PI + 2.0 * math.log(sigma))
        inv = 1.0 / (sigma * sigma)
        out = np.empty((nb_, m))
        for r in range(nb_):
            for j in range(m):
                ss = 0.0
                for i in range(n):
                    diff = g[r, j, i] - y[r, i]
                    ss += diff * diff
                out[r, j] = const - 0.5 * ss * inv
        return out

    @njit(cache=True, nogil=True)
    def _logsumexp_rows_nb(a):
        b, m = a.shape
        out = np.empty(b)
        for r in range(b):
            hi = -np.inf
            for j in range(m):
                if a[r, j] > hi:
                    hi = a[r, j]
            if hi == -np.inf or hi == np.inf:
                out[r] = hi
                continue
            s = 0.0
            for j in range(m):
                s += math.exp(a[r, j] - hi)
            out[r] = hi + math.log(s)
        return out

    @njit(cache=True, nogil=True)
    def _mixture_logpdf_nb(comp_logpdf, log_counts, prior_logpdf, log_n_prior):
        c, ell = comp_logpdf.shape
        out = np.empty(ell)
        for l in range(ell):
            hi = log_n_prior + prior_logpdf[l]
            for k in range(c):
                v = log_counts[k] + comp_logpdf[k, l]
                if v > hi:
                    hi = v
            if hi == -np.inf or hi == np.inf:
                out[l] = hi
                continue
            s = math.exp(log_n_prior + prior_logpdf[l] - hi)
            for k in range(c):
                s += math.exp(log_counts[k] + comp_logpdf[k, l] - hi)
            out[l] = hi + math.log(s)
        return out

    @njit(cache=True, nogil=True)
    def _weighted_moments_nb(z, w):
        ell, p = z.shape
        mean = np.zeros(p)
        for l in range(ell):
            for i in range(p):
                mean[i] += w[l] * z[l, i]
        cov = np.zeros((p, p))
        for l in range(ell):
            for i in range(p):
                ci = z[l, i] - mean[i]
                for j in range(i + 1):
                    cov[i, j] += w[l] * ci * (z[l, j] - mean[j])
        for i in range(p):
            for j in range(i):
                cov[j, i] = cov[i, j]
        return mean, cov

    @njit(cache=True, nogil=True)
    def _tstack_logpdf_point_nb(locs, chols, logdets, dof, x):
        c, p = locs.shape
        out = np.empty(c)
        v = np.empty(p)
        lgconst = (
            math.lgamma(0.5 * (dof + p))
            - math.lgamma(0.5 * dof)
            - 0.5 * p * math.log(dof * math.pi)
        )
        for k in range(c):
            maha = 0.0
            for i in range(p):
                acc = x[i] - locs[k, i]
                for j in range(i):
                    acc -= chols[k, i, j] * v[j]
                v[i] = acc / chols[k, i, i]
                maha += v[i] * v[i]
            out[k] = (
                lgconst
                - 0.5 * logdets[k]
                - 0.5 * (dof + p) * math.log1p(maha / dof)
            )
        return out

    @njit(cache=True, nogil=True)
    def _tstack_logpdf_points_nb(locs, chols, logdets, dof, pts):
        c, p = locs.shape
        b = pts.shape[0]
        out = np.empty((c, b))
        v = np.empty(p)
        lgconst = (
            math.lgamma(0.5 * (dof + p))
            - math.lgamma(0.5 * dof)
            - 0.5 * p * math.log(dof * math.pi)
        )
        for k in range(c):
            const = lgconst - 0.5 * logdets[k]
            for r in range(b):
                maha = 0.0
                for i in range(p):
                    acc = pts[r, i] - locs[k, i]
                    for j in range(i):
                        acc -= chols[k, i, j] * v[j]
                    v[i] = acc / chols[k, i, i]
                    maha += v[i] * v[i]
                out[k, r] = const - 0.5 * (dof + p) * math.log1p(maha / dof)
        return out

    @njit(cache=True, nogil=True)
    def _lorentzian_nb(center, width, height, offset, d):
        b = center.shape[0]
        nd = d.shape[0]
        out = np.empty((b, nd))
        for r in range(b):
            w2 = width[r] * width[r]
            for i in range(nd):
                dc = center[r] - d[i]
                out[r, i] = offset[r] - height[r] * w2 / (w2 + dc * dc)
        return out

    mvn_logpdf_numba = _mvn_logpdf_nb
    mvt_logpdf_numba = _mvt_logpdf_nb
    iso_loglike_numba = _iso_loglike_nb
    iso_loglike_pairs_numba = _iso_loglike_pairs_nb
    logsumexp_rows_numba = _logsumexp_rows_nb
    mixture_logpdf_numba = _mixture_logpdf_nb
    weighted_moments_numba = _weighted_moments_nb
    tstack_logpdf_point_numba = _tstack_logpdf_point_nb
    tstack_logpdf_points_numba = _tstack_logpdf_points_nb
    lorentzian_numba = _lorentzian_nb

    mvn_logpdf = mvn_logpdf_numba
    mvt_logpdf = mvt_logpdf_numba
    iso_loglike = iso_loglike_numba
    iso_loglike_pairs = iso_loglike_pairs_numba
    logsumexp_rows = logsumexp_rows_numba
    mixture_logpdf = mixture_logpdf_numba
    weighted_moments = weighted_moments_numba
    tstack_logpdf_point = tstack_logpdf_point_numba
    tstack_logpdf_points = tstack_logpdf_points_numba
    lorentzian = lorentzian_numba
else:
    mvn_logpdf_numba = None
    mvt_logpdf_numba = None
    iso_loglike_numba = None
    iso_loglike_pairs_numba = None
    logsumexp_rows_numba = None
    mixture_logpdf_numba = None
    weighted_moments_numba = None
    tstack_logpdf_point_numba = None
    tstack_logpdf_points_numba = None
    lorentzian_numba = None

    mvn_logpdf = mvn_logpdf_numpy
    mvt_logpdf = mvt_logpdf_numpy
    iso_loglike = iso_loglike_numpy
    iso_loglike_pairs = iso_loglike_pairs_numpy
    logsumexp_rows = logsumexp_rows_numpy
    mixture_logpdf = mixture_logpdf_numpy
    weighted_moments = weighted_moments_numpy
    tstack_logpdf_point = tstack_logpdf_point_numpy
    tstack_logpdf_points = tstack_logpdf_points_numpy
    lorentzian = lorentzian_numpy

KERNEL_NAMES = [
    "mvn_logpdf",
    "mvt_logpdf",
    "iso_loglike",
    "iso_loglike_pairs",
    "logsumexp_rows",
    "mixture_logpdf",
    "weighted_moments",
    "tstack_logpdf_point",
    "tstack_logpdf_points",
    "lorentzian",
]
