"""Composition-sampling prediction: kriging inside the time window and forecasting past it.

Every target owns a random stream ``np.random.default_rng([seed, kind, *key])``
(``kind`` 0 for kriging, 1 for forecasting), so results do not depend on
which other targets are requested in the same call. Within a stream the
standard normals for all posterior draws are generated row by row: for
kriging at time ``t`` the rows are ``X_t(s0)``, then ``Z_t(s0)``, then
``X_{t-1}(s0), ..., X_1(s0)``; for forecasting the rows alternate ``X`` and
``W`` per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .circular import TWO_PI, wrap
from .mcmc import PosteriorDraws
from .spacetime import NumericalError, SpaceTimeDataset, cholesky

COV_FORMS = ("exact", "paper")
_NEG_VAR_TOL = 1e-8


@dataclass
class PredictiveDraws:
    """Linear predictive draws and their wrapped angles."""

    linear: np.ndarray
    site_id: int | None = None
    time: int | None = None

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float)
        self.angles = wrap(self.linear)

    def __len__(self):
        return self.linear.size


@dataclass(frozen=True)
class ForecastRequest:
    horizon: int
    sites: tuple | None = None  # site ids; None means every site

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be a positive integer")


@dataclass
class CovBlocks:
    """Covariance pieces of the joint normal for one new site and one draw."""

    gamma_corr: np.ndarray  # T x T, gamma**|i-j|
    gamma_lower: np.ndarray  # lower triangle of gamma_corr (diagonal included)
    corr_w: np.ndarray  # n x n
    cross_w: np.ndarray  # length n
    f_t: np.ndarray  # length T


def cov_blocks(gamma, corr_w, cross_w, T, t) -> CovBlocks:
    idx = np.arange(T)
    g = float(gamma) ** np.abs(idx[:, None] - idx[None, :])
    return CovBlocks(g, np.tril(g), np.asarray(corr_w), np.asarray(cross_w), g[t - 1].copy())


def _check_var(v):
    if np.any(v < -_NEG_VAR_TOL):
        raise NumericalError(f"negative conditional variance {v.min():.3g}")
    return np.maximum(v, 0.0)


def _latent_arrays(draws: PosteriorDraws, dataset: SpaceTimeDataset):
    if draws.winding is None:
        raise ValueError("posterior draws carry no latent states; refit with store_latent")
    if draws.winding.shape[1:] != dataset.angles.shape:
        raise ValueError("draws and dataset have different site/time shapes")
    z = dataset.angles[None] + TWO_PI * draws.winding
    x = draws.x_field if draws.x_field is not None else np.zeros_like(z)
    return z, x


def _param_arrays(draws: PosteriorDraws):
    B = len(draws)
    p = draws.params
    mu = np.asarray(p["mu"], dtype=float)
    s2 = np.asarray(p["sigma2"], dtype=float)
    lam = np.asarray(p["lam"], dtype=float) if "lam" in p else np.zeros(B)
    gamma = np.asarray(p["gamma"], dtype=float)
    psi_w = np.asarray(p["psi_w"], dtype=float)
    psi_x = np.asarray(p["psi_x"], dtype=float) if "psi_x" in p else np.full(B, np.nan)
    sigma = np.sqrt(s2)
    delta = lam / np.sqrt(1.0 + lam**2)
    a = sigma * delta
    b = sigma / np.sqrt(1.0 + lam**2)
    c = a * np.sqrt(2.0 / np.pi)
    return mu, gamma, a, b, c, psi_x, psi_w


def _site_weights(sites, new_coords, psi, jitter):
    """Kriging weights ``R^-1 r`` and conditional variances ``1 - r'R^-1 r``."""
    d_obs = sites.distances()
    diff = sites.coords[:, None, :] - new_coords[None, :, :]
    d_new = np.sqrt((diff**2).sum(axis=-1))
    corr = np.exp(-psi * d_obs)
    cross = np.exp(-psi * d_new)
    ladder = tuple(e for e in (0.0, 1e-10, 1e-8, 1e-6) if e >= jitter) or (jitter,)
    L = cholesky(corr + jitter * np.eye(len(corr)), jitter=ladder)
    w = linalg.cho_solve((L, True), cross)
    var = _check_var(1.0 - (cross * w).sum(axis=0))
    return w, var


def _weights_per_draw(draws, dataset, new_coords, skew, jitter):
    mu, gamma, a, b, c, psi_x, psi_w = _param_arrays(draws)
    B = len(draws)
    n, m = dataset.n, len(new_coords)
    kc = np.empty((B, n, m))
    vc = np.empty((B, m))
    kx = np.zeros((B, n, m))
    vx = np.zeros((B, m))
    cache_w, cache_x = {}, {}
    for i in range(B):
        key = float(psi_w[i])
        if key not in cache_w:
            cache_w = {key: _site_weights(dataset.sites, new_coords, key, jitter)}
        kc[i], vc[i] = cache_w[key]
        if skew and a[i] != 0.0:
            key = float(psi_x[i])
            if key not in cache_x:
                cache_x = {key: _site_weights(dataset.sites, new_coords, key, jitter)}
            kx[i], vx[i] = cache_x[key]
    return kc, vc, kx, vx


def _krige_core(draws, dataset, new_coords, targets, seed, cov_form, jitter, slice_time=None, keys=None):
    """Sample every ``(site index k, time t)`` target; returns an array (targets, B)."""
    if cov_form not in COV_FORMS:
        raise ValueError(f"cov_form must be one of {COV_FORMS}")
    new_coords = np.atleast_2d(np.asarray(new_coords, dtype=float))
    if not np.all(np.isfinite(new_coords)):
        raise ValueError("new site coordinates must be finite")
    z, x = _latent_arrays(draws, dataset)
    mu, gamma, a, b, c, _, _ = _param_arrays(draws)
    if slice_time is not None:
        z = z[:, :, slice_time - 1 : slice_time]
        x = x[:, :, slice_time - 1 : slice_time]
        gamma = np.zeros_like(gamma)
    B, n, T = z.shape
    skew = draws.variant == "wrapped_skew"
    kc, vc, kx, vx = _weights_per_draw(draws, dataset, new_coords, skew, jitter)

    mu_ = mu[:, None]
    g_ = gamma[:, None]
    e = np.empty_like(z)
    e[:, :, 0] = z[:, :, 0] - mu_
    e[:, :, 1:] = z[:, :, 1:] - mu_[..., None] - g_[..., None] * (z[:, :, :-1] - mu_[..., None])
    m_obs = a[:, None, None] * np.abs(x) - c[:, None, None]
    resid = e - m_obs
    lag = np.arange(T)
    cols = {}

    def columns(k):
        # column-by-column reductions keep the arithmetic independent of T
        if k not in cols:
            xm = np.stack([(kx[:, :, k] * x[:, :, j]).sum(axis=1) for j in range(T)], axis=1)
            rm = np.stack([(kc[:, :, k] * resid[:, :, j]).sum(axis=1) for j in range(T)], axis=1)
            cols.clear()
            cols[k] = (xm, rm)
        return cols[k]

    out = np.empty((len(targets), B))
    for row, (k, t) in enumerate(targets):
        if not 1 <= t <= T:
            raise ValueError(f"time {t} outside 1..{T}")
        key = keys[row] if keys is not None else (k, t)
        rng = np.random.default_rng([seed, 0, *key])
        u = rng.standard_normal((t + 1, B))
        # rows: X_t(s0), Z_t(s0), X_{t-1}(s0) ... X_1(s0)
        ux = np.empty((B, t))
        ux[:, t - 1] = u[0]
        if t > 1:
            ux[:, : t - 1] = u[:1:-1].T
        uz = u[1]
        xm, rm = columns(k)
        x0 = xm[:, :t] + np.sqrt(vx[:, k])[:, None] * ux
        if cov_form == "exact":
            rm = rm[:, :t]
            powers = g_ ** (t - 1 - lag[:t])[None, :]
            v = a[:, None] * np.abs(x0) - c[:, None] + rm
            mean = mu + (powers * v).sum(axis=1)
            var = b**2 * vc[:, k] * (powers**2).sum(axis=1)
        else:
            powers = g_ ** (t - 1 - lag[:t])[None, :]
            delta_t = mu[:, None] + np.einsum("bj,bij->bi", powers, m_obs[:, :, :t])
            dev = z[:, :, t - 1] - delta_t
            mean = mu - c + a * np.abs(x0[:, t - 1]) + (kc[:, :, k] * dev).sum(axis=1)
            var = b**2 * vc[:, k]
        out[row] = mean + np.sqrt(var) * uz
    return out


def krige_spacetime(
    draws: PosteriorDraws,
    dataset: SpaceTimeDataset,
    s0,
    t: int,
    seed: int = 0,
    cov_form: str = "exact",
    site_key: int = 0,
    jitter: float = 0.0,
) -> PredictiveDraws:
    """Predictive draws of the angle at new site ``s0`` and time ``t`` (1-based).

    ``cov_form="exact"`` conditions on the covariance implied by the AR
    recursion started at time 1, which needs ``X_j(s0)`` for every
    ``j <= t``. ``cov_form="paper"`` uses the stationary ``Gamma x C``
    covariance with mean vector ``delta``.
    """
    lin = _krige_core(draws, dataset, [s0], [(0, t)], seed, cov_form, jitter, keys=[(site_key, t)])
    return PredictiveDraws(lin[0], site_key, t)


def krige_static(
    draws: PosteriorDraws,
    dataset: SpaceTimeDataset,
    s0,
    seed: int = 0,
    time: int = 1,
    site_key: int = 0,
    jitter: float = 0.0,
) -> PredictiveDraws:
    """Spatial-only kriging on the time slice ``time`` (dynamics ignored)."""
    lin = _krige_core(
        draws, dataset, [s0], [(0, 1)], seed, "exact", jitter, slice_time=time, keys=[(site_key, time)]
    )
    return PredictiveDraws(lin[0], site_key, time)


def krige_many(
    draws: PosteriorDraws,
    dataset: SpaceTimeDataset,
    new_coords,
    times,
    seed: int = 0,
    cov_form: str = "exact",
    site_keys=None,
    jitter: float = 0.0,
) -> dict:
    """Krige every new site at every time in ``times``.

    Returns ``{(site_key, t): PredictiveDraws}``; each entry is identical to
    the corresponding single :func:`krige_spacetime` call.
    """
    new_coords = np.atleast_2d(np.asarray(new_coords, dtype=float))
    site_keys = list(range(len(new_coords))) if site_keys is None else list(site_keys)
    targets = [(k, int(t)) for k in range(len(new_coords)) for t in times]
    keys = [(site_keys[k], t) for k, t in targets]
    lin = _krige_core(draws, dataset, new_coords, targets, seed, cov_form, jitter, keys=keys)
    return {key: PredictiveDraws(lin[r], key[0], key[1]) for r, key in enumerate(keys)}


def forecast(draws: PosteriorDraws, dataset: SpaceTimeDataset, request: ForecastRequest, seed: int = 0) -> dict:
    """Forecast at observed sites for horizons ``1..request.horizon``.

    Rolls the AR recursion forward from each draw's ``Z_T`` with fresh
    ``|X|`` and ``W`` values. Returns ``{(site_id, T + h): PredictiveDraws}``.
    """
    z, _ = _latent_arrays(draws, dataset)
    mu, gamma, a, b, c, _, _ = _param_arrays(draws)
    ids = list(dataset.site_ids)
    wanted = ids if request.sites is None else list(request.sites)
    out = {}
    T = dataset.T
    for sid in wanted:
        if sid not in ids:
            raise ValueError(f"unknown site id {sid}")
        i = ids.index(sid)
        rng = np.random.default_rng([seed, 1, int(sid)])
        u = rng.standard_normal((request.horizon, 2, len(draws)))
        cur = z[:, i, T - 1]
        for h in range(request.horizon):
            cur = mu + gamma * (cur - mu) + a * np.abs(u[h, 0]) + b * u[h, 1] - c
            out[(int(sid), T + h + 1)] = PredictiveDraws(cur.copy(), int(sid), T + h + 1)
    return out
