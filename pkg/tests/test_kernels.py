"""Both kernel backends must agree with each other and with references."""

import numpy as np
import pytest
from scipy import stats
from scipy.special import logsumexp

from focusedeig import _kernels as K

rng = np.random.default_rng(2024)


def _spd(p, scale=1.0):
    a = rng.standard_normal((p, p))
    return scale * (a @ a.T + 0.5 * np.eye(p))


def both(name):
    impls = [("numpy", getattr(K, name + "_numpy"))]
    if K.USING_NUMBA:
        impls.append(("numba", getattr(K, name + "_numba")))
    return impls


@pytest.mark.parametrize("backend,fn", both("mvn_logpdf"))
def test_mvn_logpdf_matches_scipy(backend, fn):
    cov = _spd(3)
    mean = rng.standard_normal(3)
    x = rng.standard_normal((40, 3)) * 2
    chol = np.linalg.cholesky(cov)
    logdet = 2 * np.sum(np.log(np.diag(chol)))
    ref = stats.multivariate_normal(mean, cov).logpdf(x)
    np.testing.assert_allclose(fn(x, mean, chol, logdet), ref, rtol=1e-12)


@pytest.mark.parametrize("backend,fn", both("mvt_logpdf"))
def test_mvt_logpdf_matches_scipy(backend, fn):
    scale = _spd(4)
    loc = rng.standard_normal(4)
    x = rng.standard_normal((40, 4)) * 3
    chol = np.linalg.cholesky(scale)
    logdet = 2 * np.sum(np.log(np.diag(chol)))
    ref = stats.multivariate_t(loc, scale, df=2.5).logpdf(x)
    np.testing.assert_allclose(fn(x, loc, chol, logdet, 2.5), ref, rtol=1e-12)


@pytest.mark.parametrize("backend,fn", both("iso_loglike"))
def test_iso_loglike(backend, fn):
    y = rng.standard_normal(3)
    g = rng.standard_normal((25, 3))
    ref = stats.multivariate_normal(y, 0.4**2 * np.eye(3)).logpdf(g)
    np.testing.assert_allclose(fn(y, g, 0.4), ref, rtol=1e-12)


@pytest.mark.parametrize("backend,fn", both("iso_loglike_pairs"))
def test_iso_loglike_pairs(backend, fn):
    y = rng.standard_normal((6, 3))
    g = rng.standard_normal((6, 9, 3))
    got = fn(y, g, 0.7)
    for i in range(6):
        ref = K.iso_loglike_numpy(y[i], g[i], 0.7)
        np.testing.assert_allclose(got[i], ref, rtol=1e-12)


@pytest.mark.parametrize("backend,fn", both("logsumexp_rows"))
def test_logsumexp_rows(backend, fn):
    a = rng.standard_normal((10, 30)) * 50
    np.testing.assert_allclose(fn(a), logsumexp(a, axis=1), rtol=1e-12)
    hole = np.full((2, 4), -np.inf)
    assert np.all(np.isneginf(fn(hole)))


@pytest.mark.parametrize("backend,fn", both("mixture_logpdf"))
def test_mixture_logpdf_matches_direct_sum(backend, fn):
    c, n = 5, 60
    comp = rng.standard_normal((c, n)) * 3
    counts = rng.integers(1, 30, size=c).astype(float)
    prior = rng.standard_normal(n)
    n_prior = 100.0
    got = fn(comp, np.log(counts), prior, np.log(n_prior))
    stack = np.vstack([np.log(n_prior) + prior, np.log(counts)[:, None] + comp])
    np.testing.assert_allclose(got, logsumexp(stack, axis=0), rtol=1e-12)


@pytest.mark.parametrize("backend,fn", both("weighted_moments"))
def test_weighted_moments(backend, fn):
    z = rng.standard_normal((200, 3))
    w = rng.random(200)
    w /= w.sum()
    mean, cov = fn(z, w)
    np.testing.assert_allclose(mean, w @ z, rtol=1e-12)
    c = z - w @ z
    np.testing.assert_allclose(cov, (c * w[:, None]).T @ c, atol=1e-12)


@pytest.mark.parametrize("backend,fn", both("tstack_logpdf_points"))
def test_tstack_batch(backend, fn):
    c, p, b = 4, 3, 17
    locs = rng.standard_normal((c, p))
    chols = np.array([np.linalg.cholesky(_spd(p)) for _ in range(c)])
    logdets = np.array([2 * np.sum(np.log(np.diag(ch))) for ch in chols])
    pts = rng.standard_normal((b, p)) * 2
    got = fn(locs, chols, logdets, 2.5, pts)
    for k in range(c):
        ref = stats.multivariate_t(locs[k], chols[k] @ chols[k].T, df=2.5).logpdf(pts)
        np.testing.assert_allclose(got[k], ref, rtol=1e-12)


@pytest.mark.parametrize("backend,fn", both("tstack_logpdf_point"))
def test_tstack_point(backend, fn):
    c, p = 6, 4
    locs = rng.standard_normal((c, p))
    chols = np.array([np.linalg.cholesky(_spd(p)) for _ in range(c)])
    logdets = np.array([2 * np.sum(np.log(np.diag(ch))) for ch in chols])
    x = rng.standard_normal(p)
    got = fn(locs, chols, logdets, 3.0, x)
    ref = K.tstack_logpdf_point_numpy(locs, chols, logdets, 3.0, x)
    np.testing.assert_allclose(got, ref, rtol=1e-12)


@pytest.mark.parametrize("backend,fn", both("lorentzian"))
def test_lorentzian(backend, fn):
    b = 9
    center = rng.standard_normal(b)
    width = np.exp(rng.standard_normal(b) * 0.3)
    height = np.exp(rng.standard_normal(b) * 0.3)
    offset = np.exp(1 + rng.standard_normal(b) * 0.2)
    d = np.array([-1.3, 0.0, 1.3])
    got = fn(center, width, height, offset, d)
    ref = offset[:, None] - height[:, None] * width[:, None] ** 2 / (
        width[:, None] ** 2 + (center[:, None] - d[None, :]) ** 2
    )
    np.testing.assert_allclose(got, ref, rtol=1e-12)
