import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from wrapskew.circular import circ_summary, wrap
from wrapskew.distributions import SkewNormalParams, sn_sample
from wrapskew.spacetime import (
    ModelParams,
    NumericalError,
    SingularSitesWarning,
    SiteSet,
    SpaceTimeDataset,
    cholesky,
    circ_corr_mc,
    exp_corr_matrix,
    increment_loglik,
    increments,
    simulate,
)


def test_exp_corr_matrix():
    sites = SiteSet([[0.0, 0.0], [2.0, 0.0]])
    c = exp_corr_matrix(sites, 0.5)
    assert np.all(np.diag(c) == 1.0)
    assert c[0, 1] == pytest.approx(math.exp(-1.0))
    assert c[0, 1] == pytest.approx(0.36788, abs=1e-5)
    rs = SiteSet(np.random.default_rng(0).uniform(0, 10, (20, 2)))
    cc = exp_corr_matrix(rs, 0.3)
    assert np.array_equal(cc, cc.T)
    assert np.linalg.eigvalsh(cc).min() > 0
    with pytest.raises(ValueError):
        exp_corr_matrix(rs, 0.0)


def test_duplicate_sites_warn_and_cholesky_jitters():
    sites = SiteSet([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    with pytest.warns(SingularSitesWarning):
        c = exp_corr_matrix(sites, 0.5)
    L = cholesky(c)
    assert np.allclose(L @ L.T, c, atol=1e-5)
    with pytest.raises(NumericalError):
        cholesky(c, jitter=(0.0,))


def test_param_validation():
    with pytest.raises(ValueError):
        ModelParams(0.0, 1.0, 0.0, 1.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        ModelParams(0.0, 1.0, 0.0, 0.5, 0.0, 0.5)
    with pytest.raises(ValueError):
        SpaceTimeDataset(SiteSet([[0.0, 0.0]]), [[7.0]])


def test_simulate_wrap_commutes():
    rng = np.random.default_rng(1)
    sites = SiteSet(rng.uniform(0, 10, (6, 2)))
    tr = simulate(ModelParams(math.pi, 1.0, 3.0, 0.5, 0.5, 0.2), sites, 7, rng)
    assert np.array_equal(wrap(tr.latent_z), tr.dataset.angles)
    assert tr.dataset.angles.shape == (6, 7)


def test_simulate_lambda0_gamma0_moments():
    rng = np.random.default_rng(2)
    sites = SiteSet(rng.uniform(0, 3, (5, 2)))
    p = ModelParams(1.0, 0.8, 0.0, 0.0, 0.5, 0.4)
    z = np.stack([simulate(p, sites, 3, rng).latent_z for _ in range(2000)])
    cov = p.sigma2 * exp_corr_matrix(sites, p.psi_w)
    for t in range(3):
        col = z[:, :, t]
        se = np.sqrt(np.diag(cov) / len(col))
        assert np.all(np.abs(col.mean(axis=0) - p.mu) < 4 * se)
        # entries of a Wishart-type estimate have sd about sigma2 * sqrt(2 / reps)
        assert np.max(np.abs(np.cov(col.T) - cov)) < 4 * p.sigma2 * math.sqrt(2 / len(col))
    # different times are independent when gamma = 0
    c01 = np.cov(z[:, 0, 0], z[:, 0, 1])[0, 1]
    assert abs(c01) < 4 * p.sigma2 / math.sqrt(len(z))


def test_simulate_mean_is_mu_all_times():
    rng = np.random.default_rng(3)
    sites = SiteSet(rng.uniform(0, 10, (4, 2)))
    p = ModelParams(2.0, 1.0, 10.0, 0.7, 0.5, 0.2)
    z = np.stack([simulate(p, sites, 6, rng).latent_z for _ in range(2000)])
    m = z.mean(axis=0)
    sd = z.std(axis=0) / math.sqrt(len(z))
    assert np.all(np.abs(m - p.mu) < 4 * sd)


def test_simulate_long_run_marginal():
    # t=50 marginal at one site against a direct scalar recursion
    p = ModelParams(math.pi, 1.0, 10.0, 0.5, 0.5, 0.2)
    rng = np.random.default_rng(4)
    sites = SiteSet([[0.0, 0.0]])
    ends = np.array([simulate(p, sites, 50, rng).latent_z[0, -1] for _ in range(200)])
    sk = SkewNormalParams(p.mu, p.sigma2, p.lam)
    oracle_rng = np.random.default_rng(5)
    z = np.full(20000, p.mu)
    for _ in range(50):
        z = p.mu + p.gamma * (z - p.mu) + sn_sample(sk, z.size, oracle_rng) - p.mu
    got = circ_summary(wrap(ends)).mean_resultant_length
    want = circ_summary(wrap(z)).mean_resultant_length
    assert abs(got - want) < 0.05


def test_circ_corr_limits_and_monotone():
    rng = np.random.default_rng(6)
    p = ModelParams(math.pi, 1.0, 3.0, 0.5, 0.5, 0.5)
    assert circ_corr_mc(p, 0.0, 20000, rng) == pytest.approx(1.0, abs=1e-12)
    far = circ_corr_mc(p, 100.0, 20000, rng)
    assert abs(far) < 3 / math.sqrt(20000)
    for lam in (0.0, 1.5, 3.0, 10.0):
        q = p.replace(lam=lam)
        vals = [circ_corr_mc(q, h, 100_000, np.random.default_rng(7)) for h in range(1, 11)]
        assert all(b <= a + 0.01 for a, b in zip(vals, vals[1:]))


def test_increment_loglik_collapses():
    rng = np.random.default_rng(8)
    sites = SiteSet(rng.uniform(0, 5, (4, 2)))
    p = ModelParams(1.5, 0.7, 0.0, 0.3, 0.5, 0.2)
    z = rng.normal(1.5, 1.0, (4, 1))
    x = rng.normal(size=(4, 1))
    mvn = multivariate_normal(np.full(4, 1.5), 0.7 * exp_corr_matrix(sites, 0.2)).logpdf(z[:, 0])
    assert increment_loglik(z, x, p, sites) == pytest.approx(mvn, abs=1e-10)
    # one site: a Gaussian AR(1) started from its innovation variance
    one = SiteSet([[0.0, 0.0]])
    zs = rng.normal(size=(1, 8))
    e = increments(zs, 1.5, 0.3)[0]
    want = np.sum(-0.5 * np.log(2 * np.pi * 0.7) - 0.5 * e**2 / 0.7)
    assert increment_loglik(zs, np.zeros_like(zs), p, one) == pytest.approx(want, abs=1e-10)


def test_increment_loglik_joint_covariance_oracle():
    rng = np.random.default_rng(9)
    sites = SiteSet(rng.uniform(0, 3, (2, 2)))
    p = ModelParams(0.5, 1.2, 2.0, 0.6, 0.5, 0.3)
    T = 3
    z = rng.normal(0.5, 1.0, (2, T))
    x = rng.normal(size=(2, T))
    a, b, c = p.coefficients()
    # Z = mu + L (a|X| - c + b W) over time, stacked time-major
    L = np.tril(p.gamma ** np.subtract.outer(np.arange(T), np.arange(T)).clip(0))
    big = np.kron(L, np.eye(2))
    mean = p.mu + big @ (a * np.abs(x) - c).T.ravel()
    cov = b * b * big @ np.kron(np.eye(T), exp_corr_matrix(sites, p.psi_w)) @ big.T
    want = multivariate_normal(mean, cov).logpdf(z.T.ravel())
    assert increment_loglik(z, x, p, sites) == pytest.approx(want, abs=1e-10)


def test_simulation_likelihood_consistency():
    # mean loglik of simulated data agrees across two independent batches
    rng = np.random.default_rng(10)
    sites = SiteSet(rng.uniform(0, 5, (3, 2)))
    p = ModelParams(1.0, 0.9, 4.0, 0.4, 0.5, 0.2)
    batches = []
    for _ in range(2):
        vals = []
        for _ in range(400):
            tr = simulate(p, sites, 4, rng)
            vals.append(increment_loglik(tr.latent_z, tr.latent_x, p, sites))
        batches.append(np.array(vals))
    se = math.sqrt(batches[0].var() / 400 + batches[1].var() / 400)
    assert abs(batches[0].mean() - batches[1].mean()) < 3 * se
    # expected value of a Gaussian loglik: -(N/2)(log 2 pi) - logdet/2 - N/2
    N = 12
    C = exp_corr_matrix(sites, p.psi_w)
    b2 = p.coefficients()[1] ** 2
    analytic = -0.5 * N * math.log(2 * math.pi * b2) - 0.5 * 4 * np.linalg.slogdet(C)[1] - 0.5 * N
    assert abs(batches[0].mean() - analytic) < 3 * math.sqrt(batches[0].var() / 400)


def test_dataset_subset():
    sites = SiteSet(np.arange(8.0).reshape(4, 2))
    d = SpaceTimeDataset(sites, np.full((4, 5), 1.0))
    s = d.subset([0, 2], slice(0, 3))
    assert s.angles.shape == (2, 3)
    assert list(s.site_ids) == [1, 3]
