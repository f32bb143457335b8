"""Skew normal and wrapped skew normal distributions.

The skew normal is parameterized so that its mean equals ``mu``::

    Z = mu + sigma*delta*|X| + sigma*sqrt(1 - delta**2)*W - sigma*delta*sqrt(2/pi)

with ``delta = lam / sqrt(1 + lam**2)`` and ``X``, ``W`` independent standard
normals. ``mu_star`` is the location of the uncentered density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, ndtr

from .circular import TWO_PI, CircularSummary, atan_star, wrap

DEFAULT_KMAX = 3
J_OVERFLOW = 35.0
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SkewNormalParams:
    """Location ``mu``, squared scale ``sigma2`` and skewness ``lam``."""

    mu: float
    sigma2: float
    lam: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.mu, self.sigma2, self.lam)):
            raise ValueError("skew normal parameters must be finite")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def delta(self) -> float:
        return self.lam / math.sqrt(1.0 + self.lam**2)

    @property
    def half_normal_coef(self) -> float:
        """Coefficient of ``|X|``."""
        return self.sigma * self.delta

    @property
    def noise_sd(self) -> float:
        """Standard deviation of ``Z`` given ``X``."""
        return self.sigma / math.sqrt(1.0 + self.lam**2)

    @property
    def offset(self) -> float:
        """Centering constant ``sigma*delta*sqrt(2/pi)``."""
        return self.sigma * self.delta * _SQRT_2_OVER_PI

    @property
    def mu_star(self) -> float:
        return self.mu - self.offset

    @property
    def variance(self) -> float:
        d2 = self.delta**2
        return self.sigma2 * (d2 * (1.0 - 2.0 / math.pi) + (1.0 - d2))


@dataclass(frozen=True)
class BivariatePairParams:
    """Two skew normal marginals coupled through Cor(X1, X2) and Cor(W1, W2)."""

    marginal1: SkewNormalParams
    marginal2: SkewNormalParams
    rho_x: float = 0.0
    rho_w: float = 0.0

    def __post_init__(self):
        if abs(self.rho_x) > 1 or abs(self.rho_w) > 1:
            raise ValueError("correlations must lie in [-1, 1]")


@dataclass(frozen=True)
class TrigMoments:
    alpha: float
    beta: float
    order: int = 1

    @property
    def mean_direction(self) -> float:
        return atan_star(self.beta, self.alpha)

    @property
    def concentration(self) -> float:
        return math.hypot(self.alpha, self.beta)


def _check_kmax(kmax):
    if int(kmax) != kmax or kmax < 1:
        raise ValueError("kmax must be an integer >= 1")
    return int(kmax)


def sn_sample(params: SkewNormalParams, count: int, rng: np.random.Generator):
    """Draw ``count`` skew normal values (X draws first, then W)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    x = rng.standard_normal(count)
    w = rng.standard_normal(count)
    return (
        params.mu
        + params.half_normal_coef * np.abs(x)
        + params.noise_sd * w
        - params.offset
    )


def sn_logpdf(params: SkewNormalParams, z):
    u = (np.asarray(z, dtype=float) - params.mu_star) / params.sigma
    return (
        math.log(2.0 / params.sigma)
        - _LOG_SQRT_2PI
        - 0.5 * u**2
        + log_ndtr(params.lam * u)
    )


def sn_pdf(params: SkewNormalParams, z):
    """Skew normal density at ``z``."""
    u = (np.asarray(z, dtype=float) - params.mu_star) / params.sigma
    return 2.0 / params.sigma * np.exp(-0.5 * u**2 - _LOG_SQRT_2PI) * ndtr(params.lam * u)


def wsn_pdf(params: SkewNormalParams, theta, kmax: int = DEFAULT_KMAX):
    """Wrapped skew normal density, winding sum truncated to ``|k| <= kmax``."""
    kmax = _check_kmax(kmax)
    theta = np.asarray(theta, dtype=float)
    ks = np.arange(-kmax, kmax + 1)
    z = theta[..., None] + TWO_PI * ks
    return sn_pdf(params, z).sum(axis=-1)


def wsn_sample(params: SkewNormalParams, count: int, rng: np.random.Generator):
    return wrap(sn_sample(params, count, rng))


def j_function(a: float, epsabs: float = 1e-13, epsrel: float = 1e-13) -> float:
    """Integral of ``sqrt(2/pi) * exp(u**2 / 2)`` from 0 to ``a``.

    Evaluated by adaptive Gauss-Kronrod quadrature. Equal to
    ``erfi(a / sqrt(2))``.
    """
    a = float(a)
    if not math.isfinite(a) or abs(a) >= J_OVERFLOW:
        raise OverflowError(f"|a| = {abs(a)} exceeds the J-function range ({J_OVERFLOW})")
    if a == 0.0:
        return 0.0
    val, _ = integrate.quad(
        lambda u: _SQRT_2_OVER_PI * math.exp(0.5 * u * u),
        0.0,
        abs(a),
        epsabs=epsabs,
        epsrel=epsrel,
        limit=200,
    )
    return math.copysign(val, a)


def trig_moments_closed(params: SkewNormalParams, p: int = 1) -> TrigMoments:
    """Order-``p`` cosine and sine moments of the wrapped skew normal."""
    if p < 1:
        raise ValueError("order must be >= 1")
    damp = math.exp(-0.5 * p**2 * params.sigma2)
    j = j_function(params.half_normal_coef * p)
    ms = p * params.mu_star
    alpha = damp * (math.cos(ms) - j * math.sin(ms))
    beta = damp * (math.sin(ms) + j * math.cos(ms))
    return TrigMoments(alpha, beta, p)


def trig_moments_mc(params: SkewNormalParams, p: int, B: int, rng: np.random.Generator) -> TrigMoments:
    """Monte Carlo trig moments, averaging the conditional wrapped-normal moments over ``|X|``."""
    if B < 1:
        raise ValueError("B must be >= 1")
    if p < 1:
        raise ValueError("order must be >= 1")
    x = np.abs(rng.standard_normal(B))
    centre = p * (params.mu + params.half_normal_coef * x - params.offset)
    damp = math.exp(-0.5 * p**2 * params.noise_sd**2)
    return TrigMoments(damp * np.cos(centre).mean(), damp * np.sin(centre).mean(), p)


def circ_mean_conc(params: SkewNormalParams) -> CircularSummary:
    """Population circular mean and concentration from the first trig moments."""
    m = trig_moments_closed(params, 1)
    return CircularSummary(m.mean_direction, min(m.concentration, 1.0))


# ---------------------------------------------------------------------------
# bivariate wrapped skew normal


def _gauss_halfline_legendre(nodes: int, upper: float = 10.0):
    u, w = np.polynomial.legendre.leggauss(nodes)
    x = 0.5 * upper * (u + 1.0)
    return x, 0.5 * upper * w


def _norm_pdf(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def _bsn_density_quad(pair: BivariatePairParams, z1, z2, nodes: int):
    """Bivariate skew normal density of ``(z1, z2)``.

    The latent pair ``(X1, X2)`` is integrated out: ``X2`` analytically on
    each sign branch (Gaussian times Gaussian restricted to a half line), and
    ``X1`` by Gauss-Legendre quadrature on each half line.
    """
    m1, m2 = pair.marginal1, pair.marginal2
    rx, rw = pair.rho_x, pair.rho_w
    if abs(rw) >= 1 or abs(rx) >= 1:
        raise ValueError("bivariate density requires |rho_x| < 1 and |rho_w| < 1")
    a1, b1, c1 = m1.half_normal_coef, m1.noise_sd, m1.mu - m1.offset
    a2, b2, c2 = m2.half_normal_coef, m2.noise_sd, m2.mu - m2.offset

    xs, ws = _gauss_halfline_legendre(nodes)
    z1 = np.asarray(z1, dtype=float)[..., None]
    z2 = np.asarray(z2, dtype=float)[..., None]
    total = 0.0
    for sign in (1.0, -1.0):
        x1 = sign * xs
        prior1 = _norm_pdf(x1, 0.0, 1.0)
        dens1 = _norm_pdf(z1, c1 + a1 * xs, b1**2)
        # Z2 | Z1, X1, X2 is normal: c + a2*|X2|, variance v
        c = c2 + rw * b2 / b1 * (z1 - c1 - a1 * xs)
        v = b2**2 * (1.0 - rw**2)
        # X2 | X1 ~ N(rx*x1, 1 - rx^2), integrated over both signs of X2
        mx, sx2 = rx * x1, 1.0 - rx**2
        inner = 0.0
        for m in (mx, -mx):
            var_obs = v + a2**2 * sx2
            marg = _norm_pdf(z2 - c, a2 * m, var_obs)
            post_mean = m + sx2 * a2 * (z2 - c - a2 * m) / var_obs
            post_sd = np.sqrt(sx2 * v / var_obs)
            inner = inner + marg * ndtr(post_mean / post_sd)
        total = total + (ws * prior1 * dens1 * inner).sum(axis=-1)
    return total


def _bsn_density_mc(pair: BivariatePairParams, z1, z2, draws: int, rng):
    m1, m2 = pair.marginal1, pair.marginal2
    rx, rw = pair.rho_x, pair.rho_w
    u = rng.standard_normal((2, draws))
    x1 = np.abs(u[0])
    x2 = np.abs(rx * u[0] + math.sqrt(1.0 - rx**2) * u[1])
    b1, b2 = m1.noise_sd, m2.noise_sd
    d1 = np.asarray(z1, dtype=float)[..., None] - (m1.mu - m1.offset + m1.half_normal_coef * x1)
    d2 = np.asarray(z2, dtype=float)[..., None] - (m2.mu - m2.offset + m2.half_normal_coef * x2)
    e1, e2 = d1 / b1, d2 / b2
    det = 1.0 - rw**2
    q = (e1**2 - 2 * rw * e1 * e2 + e2**2) / det
    dens = np.exp(-0.5 * q) / (2 * np.pi * b1 * b2 * math.sqrt(det))
    return dens.mean(axis=-1)


def bwsn_pdf(
    pair: BivariatePairParams,
    theta1,
    theta2,
    kmax: int = DEFAULT_KMAX,
    method: str = "quad",
    nodes: int = 64,
    mc_draws: int = 20000,
    rng: np.random.Generator | None = None,
):
    """Bivariate wrapped skew normal density.

    Sums the linear bivariate density over winding pairs in
    ``[-kmax, kmax]**2``. ``method="quad"`` (default) is deterministic;
    ``method="mc"`` averages over ``mc_draws`` latent pairs.
    """
    kmax = _check_kmax(kmax)
    t1 = np.asarray(theta1, dtype=float)
    t2 = np.asarray(theta2, dtype=float)
    t1, t2 = np.broadcast_arrays(t1, t2)
    ks = TWO_PI * np.arange(-kmax, kmax + 1)
    z1 = t1[..., None, None] + ks[:, None]
    z2 = t2[..., None, None] + ks[None, :]
    z1, z2 = np.broadcast_arrays(z1, z2)
    if method == "quad":
        g = _bsn_density_quad(pair, z1, z2, nodes)
    elif method == "mc":
        if rng is None:
            raise ValueError("method='mc' needs an rng")
        g = _bsn_density_mc(pair, z1, z2, mc_draws, rng)
    else:
        raise ValueError(f"unknown method {method!r}")
    return g.sum(axis=(-1, -2))
