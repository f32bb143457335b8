"""Dynamic wrapped skew Gaussian process.

The linear process follows a mean-centred AR(1) recursion with i.i.d. skew
Gaussian increments::

    Z_1 = mu + e_1
    Z_t = mu + gamma * (Z_{t-1} - mu) + e_t
    e_t = a*|X_t| + b*W_t - c

where ``X_t`` and ``W_t`` are independent zero-mean Gaussian fields with
exponential correlations ``exp(-h * psi_x)`` and ``exp(-h * psi_w)``, and
``a``, ``b``, ``c`` are the skew normal coefficients. Angles are
``wrap(Z)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .circular import TWO_PI, wrap
from .distributions import SkewNormalParams, circ_mean_conc


class NumericalError(RuntimeError):
    """A linear-algebra or log-density computation broke down."""


class SingularSitesWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SiteSet:
    """Planar site coordinates, shape ``(n, 2)``."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if c.ndim != 2 or c.shape[1] != 2:
            raise ValueError("coordinates must have shape (n, 2)")
        if not np.all(np.isfinite(c)):
            raise ValueError("coordinates must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    def __len__(self):
        return self.coords.shape[0]

    def distances(self) -> np.ndarray:
        return cdist(self.coords, self.coords)

    def distances_to(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float).reshape(1, 2)
        return cdist(self.coords, p)[:, 0]

    def subset(self, index) -> "SiteSet":
        return SiteSet(self.coords[np.asarray(index)])

    def has_duplicates(self) -> bool:
        d = self.distances()
        np.fill_diagonal(d, np.inf)
        return bool(np.any(d == 0.0))


@dataclass(frozen=True)
class ModelParams:
    mu: float
    sigma2: float
    lam: float
    gamma: float
    psi_x: float
    psi_w: float

    def __post_init__(self):
        if abs(self.gamma) > 1:
            raise ValueError("gamma must lie in [-1, 1]")
        if self.psi_x <= 0 or self.psi_w <= 0:
            raise ValueError("decays must be positive")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")

    @property
    def skew(self) -> SkewNormalParams:
        return SkewNormalParams(self.mu, self.sigma2, self.lam)

    def coefficients(self):
        """``(a, b, c)``: the ``|X|`` coefficient, the noise sd and the centring offset."""
        s = self.skew
        return s.half_normal_coef, s.noise_sd, s.offset

    def as_dict(self):
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def replace(self, **changes) -> "ModelParams":
        d = self.as_dict()
        d.update(changes)
        return ModelParams(**d)


PARAM_NAMES = ("mu", "sigma2", "lam", "gamma", "psi_x", "psi_w")


@dataclass
class SpaceTimeDataset:
    """Angles observed on an ``n x T`` site-by-time grid."""

    sites: SiteSet
    angles: np.ndarray
    site_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.shape[0] != len(self.sites):
            raise ValueError(f"angles have {a.shape[0]} rows but there are {len(self.sites)} sites")
        if np.any(~np.isfinite(a)) or np.any(a < 0) or np.any(a >= TWO_PI):
            raise ValueError("angles must lie in [0, 2*pi)")
        self.angles = a
        if self.site_ids is None:
            self.site_ids = np.arange(1, a.shape[0] + 1)
        self.site_ids = np.asarray(self.site_ids, dtype=int)
        if len(np.unique(self.site_ids)) != len(self.site_ids):
            raise ValueError("site ids must be unique")

    @property
    def n(self) -> int:
        return self.angles.shape[0]

    @property
    def T(self) -> int:
        return self.angles.shape[1]

    def subset(self, sites=None, times=None) -> "SpaceTimeDataset":
        """Restrict to site indices and/or a slice/array of time indices (0-based)."""
        si = np.arange(self.n) if sites is None else np.asarray(sites)
        ti = slice(None) if times is None else times
        return SpaceTimeDataset(self.sites.subset(si), self.angles[si][:, ti], self.site_ids[si])


@dataclass
class SimTruth:
    dataset: SpaceTimeDataset
    latent_x: np.ndarray
    latent_z: np.ndarray
    params: ModelParams


def exp_corr_matrix(sites: SiteSet, psi: float) -> np.ndarray:
    """Exponential correlation matrix ``exp(-h * psi)`` over a site set."""
    if psi <= 0:
        raise ValueError("decay must be positive")
    if sites.has_duplicates():
        warnings.warn("duplicate sites make the correlation matrix singular", SingularSitesWarning)
    return np.exp(-psi * sites.distances())


def cholesky(corr: np.ndarray, jitter=(0.0, 1e-10, 1e-8, 1e-6)) -> np.ndarray:
    """Lower Cholesky factor, retrying with growing diagonal jitter."""
    for eps in jitter:
        try:
            return linalg.cholesky(corr + eps * np.eye(len(corr)), lower=True)
        except linalg.LinAlgError:
            continue
    raise NumericalError("correlation matrix is not positive definite")


def simulate(params: ModelParams, sites: SiteSet, T: int, rng: np.random.Generator) -> SimTruth:
    """Forward-simulate the dynamic process on ``sites`` for ``T`` steps."""
    if T < 1:
        raise ValueError("T must be >= 1")
    n = len(sites)
    lx = cholesky(exp_corr_matrix(sites, params.psi_x))
    lw = cholesky(exp_corr_matrix(sites, params.psi_w))
    a, b, c = params.coefficients()
    x = np.empty((n, T))
    z = np.empty((n, T))
    prev = np.full(n, params.mu)
    for t in range(T):
        x[:, t] = lx @ rng.standard_normal(n)
        w = lw @ rng.standard_normal(n)
        e = a * np.abs(x[:, t]) + b * w - c
        z[:, t] = params.mu + params.gamma * (prev - params.mu) + e
        prev = z[:, t]
    data = SpaceTimeDataset(sites, wrap(z))
    return SimTruth(data, x, z, params)


def circ_corr_mc(params: ModelParams, h: float, B: int, rng: np.random.Generator) -> float:
    """Monte Carlo circular correlation of the static process at two sites ``h`` apart."""
    if h < 0 or B < 1:
        raise ValueError("need h >= 0 and B >= 1")
    a, b, c = params.coefficients()
    rx = math.exp(-h * params.psi_x)
    rw = math.exp(-h * params.psi_w)
    u = rng.standard_normal((4, B))
    x1 = u[0]
    x2 = rx * u[0] + math.sqrt(max(1.0 - rx**2, 0.0)) * u[1]
    w1 = u[2]
    w2 = rw * u[2] + math.sqrt(max(1.0 - rw**2, 0.0)) * u[3]
    t1 = params.mu + a * np.abs(x1) + b * w1 - c
    t2 = params.mu + a * np.abs(x2) + b * w2 - c
    m = circ_mean_conc(params.skew).mean_direction
    s1 = np.sin(t1 - m)
    s2 = np.sin(t2 - m)
    return float(np.mean(s1 * s2) / math.sqrt(np.mean(s1**2) * np.mean(s2**2)))


def increments(z: np.ndarray, mu: float, gamma: float) -> np.ndarray:
    """AR innovations ``e_t`` of a linear ``n x T`` field."""
    e = np.empty_like(z, dtype=float)
    e[:, 0] = z[:, 0] - mu
    e[:, 1:] = z[:, 1:] - mu - gamma * (z[:, :-1] - mu)
    return e


def increment_loglik(z, x, params: ModelParams, sites: SiteSet, chol_w=None) -> float:
    """Log density of the linear field ``z`` given the latent ``x`` field."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if z.shape != x.shape or z.shape[0] != len(sites):
        raise ValueError("z, x and sites have inconsistent shapes")
    n, T = z.shape
    if chol_w is None:
        chol_w = cholesky(exp_corr_matrix(sites, params.psi_w), jitter=(0.0,))
    a, b, c = params.coefficients()
    resid = increments(z, params.mu, params.gamma) - (a * np.abs(x) - c)
    white = linalg.solve_triangular(chol_w, resid, lower=True)
    logdet = 2.0 * np.log(np.diag(chol_w)).sum()
    out = (
        -0.5 * n * T * math.log(2.0 * math.pi * b * b)
        - 0.5 * T * logdet
        - 0.5 * np.sum(white**2) / (b * b)
    )
    if not math.isfinite(out):
        raise NumericalError("non-finite log likelihood")
    return float(out)
