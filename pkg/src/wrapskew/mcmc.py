"""Metropolis-within-Gibbs fitting of the dynamic wrapped (skew) Gaussian process.

The sampler augments the observed angles with winding numbers ``K`` (so the
linear field is ``Z = theta + 2*pi*K``) and, for the skew model, with the
latent Gaussian field ``X``. One sweep updates, in order: winding numbers,
the ``X`` field, ``mu`` and ``gamma`` (exact truncated-normal draws),
``sigma2`` and ``lam`` (random-walk Metropolis), then the decays.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit, log_ndtr, ndtr, ndtri, ndtri_exp

from .circular import TWO_PI, UndefinedDirectionError, circ_summary
from .distributions import DEFAULT_KMAX
from .spacetime import (
    ModelParams,
    NumericalError,
    SpaceTimeDataset,
    cholesky,
    exp_corr_matrix,
    increments,
)

log = logging.getLogger(__name__)

VARIANTS = {"ws": "wrapped_skew", "wrapped_skew": "wrapped_skew", "w": "wrapped", "wrapped": "wrapped"}
SKEW_PARAMS = ("mu", "sigma2", "lam", "gamma", "psi_x", "psi_w")
WRAPPED_PARAMS = ("mu", "sigma2", "gamma", "psi_w")


def canonical_variant(variant: str) -> str:
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown model variant {variant!r}") from None


def variant_params(variant: str):
    return SKEW_PARAMS if canonical_variant(variant) == "wrapped_skew" else WRAPPED_PARAMS


@dataclass
class Priors:
    """Uniform priors on bounded parameters and a normal prior on ``lam``."""

    mu_range: tuple = (0.0, TWO_PI)
    gamma_range: tuple = (-1.0, 1.0)
    sigma2_range: tuple = (0.0, 10.0)
    lam_mean: float = 0.0
    lam_var: float = 100.0
    psi_x_range: tuple = (0.1, 1.0)
    psi_w_range: tuple = (0.1, 1.0)

    def __post_init__(self):
        for name in ("mu_range", "gamma_range", "sigma2_range", "psi_x_range", "psi_w_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"{name} must be a finite nonempty interval")
        if self.sigma2_range[0] < 0 or self.psi_x_range[0] < 0 or self.psi_w_range[0] < 0:
            raise ValueError("sigma2 and decay ranges must be nonnegative")
        if self.lam_var <= 0:
            raise ValueError("lam_var must be positive")

    def contains(self, p: ModelParams, variant="wrapped_skew") -> bool:
        ok = (
            self.mu_range[0] <= p.mu < self.mu_range[1]
            and self.gamma_range[0] <= p.gamma <= self.gamma_range[1]
            and self.sigma2_range[0] < p.sigma2 <= self.sigma2_range[1]
            and self.psi_w_range[0] <= p.psi_w <= self.psi_w_range[1]
        )
        if canonical_variant(variant) == "wrapped_skew":
            ok = ok and self.psi_x_range[0] <= p.psi_x <= self.psi_x_range[1]
        return ok

    def sample(self, rng: np.random.Generator) -> ModelParams:
        u = rng.uniform(size=5)
        lo_hi = [self.mu_range, self.sigma2_range, self.gamma_range, self.psi_x_range, self.psi_w_range]
        mu, s2, g, px, pw = (lo + ui * (hi - lo) for ui, (lo, hi) in zip(u, lo_hi))
        lam = self.lam_mean + math.sqrt(self.lam_var) * rng.standard_normal()
        return ModelParams(mu, max(s2, 1e-12), lam, g, px, pw)


@dataclass
class ChainConfig:
    iterations: int = 5000
    burn_in: int = 2000
    thin: int = 1
    kmax: int = DEFAULT_KMAX
    seed: int = 0
    proposal_scales: dict = field(
        default_factory=lambda: {"sigma2": 0.1, "lam": 0.1, "psi_x": 0.1, "psi_w": 0.1}
    )
    adapt: bool = True
    adapt_interval: int = 50
    joint_sigma_lambda: bool = False
    store_latent: bool = True
    use_likelihood: bool = True

    def __post_init__(self):
        if self.burn_in < 0 or self.burn_in >= self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.kmax < 1:
            raise ValueError("kmax must be >= 1")
        if any(s <= 0 for s in self.proposal_scales.values()):
            raise ValueError("proposal scales must be positive")

    @property
    def n_stored(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class LatentState:
    winding: np.ndarray
    x_field: np.ndarray


@dataclass
class PosteriorDraws:
    """Post burn-in draws.

    ``params`` maps each sampled parameter name to a 1-d array; ``winding``
    and ``x_field`` have shape ``(draws, n, T)`` (``None`` when not stored).
    """

    variant: str
    params: dict
    winding: np.ndarray | None
    x_field: np.ndarray | None
    acceptance: dict
    kmax: int = DEFAULT_KMAX
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.params["mu"])

    @property
    def param_names(self):
        return variant_params(self.variant)

    def model_params(self, b: int) -> ModelParams:
        p = self.params
        if self.variant == "wrapped_skew":
            return ModelParams(*(float(p[k][b]) for k in SKEW_PARAMS))
        return ModelParams(float(p["mu"][b]), float(p["sigma2"][b]), 0.0, float(p["gamma"][b]), 1.0, float(p["psi_w"][b]))

    def state(self, b: int) -> LatentState:
        if self.winding is None:
            raise ValueError("latent states were not stored")
        x = self.x_field[b] if self.x_field is not None else np.zeros(self.winding.shape[1:])
        return LatentState(self.winding[b], x)


# ---------------------------------------------------------------------------
# exact conditional building blocks


def std_truncnorm_above(alpha, u):
    """Standard normal draws conditioned on ``z >= alpha`` by inversion of ``u``."""
    return -ndtri_exp(np.log(u) + log_ndtr(-np.asarray(alpha, dtype=float)))


def truncnorm_interval(mean, sd, lo, hi, u):
    """Normal(mean, sd) restricted to ``[lo, hi]`` by inversion of a uniform ``u``."""
    if sd == 0.0 or not math.isfinite(sd):
        return float(np.clip(mean, lo, hi))
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    # invert on the side with more tail precision
    if a > 0:
        qa, qb = ndtr(-a), ndtr(-b)
        z = -ndtri(qa - u * (qa - qb))
    else:
        pa, pb = ndtr(a), ndtr(b)
        z = ndtri(pa + u * (pb - pa))
    if not math.isfinite(z):
        z = a if abs(a) < abs(b) else b
    return float(np.clip(mean + sd * z, lo, hi))


def z_conditional(resid, cinv, b2, gamma, i, ts):
    """Gaussian full conditional of ``Z[i, ts]`` as ``(shift, precision)``.

    ``resid`` is the current residual field (increments minus their
    conditional mean given ``X``). The conditional mean is the current
    ``Z[i, ts]`` plus ``shift``. Entries of ``ts`` must not be adjacent.
    """
    T = resid.shape[1]
    ts = np.atleast_1d(ts)
    row = cinv[i] / b2
    g = row @ resid[:, ts]
    has_next = ts + 1 < T
    g_next = np.zeros_like(g)
    if np.any(has_next):
        g_next[has_next] = row @ resid[:, ts[has_next] + 1]
    prec = row[i] * (1.0 + gamma**2 * has_next)
    return -(g - gamma * g_next) / prec, prec


def winding_logweights(theta, z_mean, prec, kmax):
    """Unnormalized log probabilities of ``k = -kmax..kmax`` (last axis)."""
    ks = np.arange(-kmax, kmax + 1)
    z = np.asarray(theta)[..., None] + TWO_PI * ks
    return -0.5 * np.asarray(prec)[..., None] * (z - np.asarray(z_mean)[..., None]) ** 2


def normalize_logweights(lw):
    lw = lw - lw.max(axis=-1, keepdims=True)
    w = np.exp(lw)
    return w / w.sum(axis=-1, keepdims=True)


@dataclass
class XConditional:
    """Two-piece full conditional of one latent ``X`` entry.

    Density proportional to ``N(x; m_pos, sd) 1{x >= 0}`` with weight
    ``w_pos`` and ``N(x; m_neg, sd) 1{x < 0}`` with weight ``1 - w_pos``.
    """

    w_pos: np.ndarray
    m_pos: np.ndarray
    m_neg: np.ndarray
    sd: np.ndarray

    def sample(self, rng, size=None):
        shape = np.shape(self.w_pos) if size is None else size
        u_side = rng.uniform(size=shape)
        u = rng.uniform(size=shape)
        u = np.where(u == 0.0, np.finfo(float).tiny, u)
        pos = u_side < self.w_pos
        xp = self.m_pos + self.sd * std_truncnorm_above(-self.m_pos / self.sd, u)
        xn = -(-self.m_neg + self.sd * std_truncnorm_above(self.m_neg / self.sd, u))
        return np.where(pos, xp, xn)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        dens_p = np.exp(-0.5 * ((x - self.m_pos) / self.sd) ** 2) / (self.sd * math.sqrt(2 * math.pi))
        dens_n = np.exp(-0.5 * ((x - self.m_neg) / self.sd) ** 2) / (self.sd * math.sqrt(2 * math.pi))
        zp = ndtr(self.m_pos / self.sd)
        zn = ndtr(-self.m_neg / self.sd)
        return np.where(x >= 0, self.w_pos * dens_p / zp, (1 - self.w_pos) * dens_n / zn)


def x_conditional(resid, cinv, b2, a, rinv, x, i, ts) -> XConditional:
    """Full conditional of ``X[i, ts]`` given everything else."""
    ts = np.atleast_1d(ts)
    rii = rinv[i, i]
    m0 = x[i, ts] - (rinv[i] @ x[:, ts]) / rii
    prior_prec = rii
    q = cinv[i, i] / b2
    g = (cinv[i] / b2) @ resid[:, ts]
    g0 = g + a * np.abs(x[i, ts]) * q
    prec = prior_prec + a * a * q
    lin_p = m0 * prior_prec + a * g0
    lin_n = m0 * prior_prec - a * g0
    mp = lin_p / prec
    mn = lin_n / prec
    sd = 1.0 / math.sqrt(prec) if np.ndim(prec) == 0 else 1.0 / np.sqrt(prec)
    lwp = 0.5 * lin_p**2 / prec + log_ndtr(mp / sd)
    lwn = 0.5 * lin_n**2 / prec + log_ndtr(-mn / sd)
    w_pos = expit(lwp - lwn)
    return XConditional(w_pos, mp, mn, np.broadcast_to(sd, mp.shape).astype(float))


# ---------------------------------------------------------------------------
# the sampler


class GibbsSampler:
    """Stateful Metropolis-within-Gibbs chain for one dataset."""

    def __init__(
        self,
        dataset: SpaceTimeDataset,
        priors: Priors | None = None,
        config: ChainConfig | None = None,
        variant: str = "wrapped_skew",
        rng: np.random.Generator | None = None,
        init: ModelParams | None = None,
        init_state: LatentState | None = None,
    ):
        self.dataset = dataset
        self.priors = priors or Priors()
        self.config = config or ChainConfig()
        self.variant = canonical_variant(variant)
        self.skew = self.variant == "wrapped_skew"
        self.rng = rng if rng is not None else np.random.default_rng(self.config.seed)
        self.kmax = int(self.config.kmax)
        self.theta = np.asarray(dataset.angles, dtype=float)
        self.n, self.T = self.theta.shape
        self.sample_decays = self.n >= 2
        self.scales = {k: float(v) for k, v in self.config.proposal_scales.items()}
        self.accepts = {k: 0 for k in self._mh_blocks()}
        self.tries = {k: 0 for k in self._mh_blocks()}
        self.params = init if init is not None else self._initial_params()
        if not self.skew:
            self.params = self.params.replace(lam=0.0)
        self._set_psi_w(self.params.psi_w)
        self._set_psi_x(self.params.psi_x)
        if init_state is not None:
            self.winding = np.asarray(init_state.winding, dtype=int).copy()
            self.x = np.asarray(init_state.x_field, dtype=float).copy() if self.skew else np.zeros_like(self.theta)
        else:
            k0 = np.rint((self.params.mu - self.theta) / TWO_PI).astype(int)
            self.winding = np.clip(k0, -self.kmax, self.kmax)
            if self.skew:
                self.x = self._chol_x @ self.rng.standard_normal((self.n, self.T))
            else:
                self.x = np.zeros_like(self.theta)
        self.refresh()

    # -- setup -------------------------------------------------------------

    def _mh_blocks(self):
        blocks = ["sigma2"]
        if self.skew:
            blocks.append("lam")
        if self.n >= 2:
            blocks.append("psi_w")
            if self.skew:
                blocks.append("psi_x")
        return blocks

    def _initial_params(self) -> ModelParams:
        pr = self.priors
        try:
            s = circ_summary(self.theta)
            mu = s.mean_direction
            rbar = max(s.mean_resultant_length, 1e-3)
            s2 = -2.0 * math.log(rbar)
        except UndefinedDirectionError:
            mu, s2 = math.pi, 1.0
        mu = min(max(mu, pr.mu_range[0]), np.nextafter(pr.mu_range[1], -np.inf))
        lo, hi = pr.sigma2_range
        s2 = min(max(s2, lo + 0.05 * (hi - lo)), hi * 0.9)
        g = min(max(0.0, pr.gamma_range[0]), pr.gamma_range[1])
        return ModelParams(
            mu=mu,
            sigma2=s2,
            lam=0.0,
            gamma=g,
            psi_x=0.5 * sum(pr.psi_x_range),
            psi_w=0.5 * sum(pr.psi_w_range),
        )

    def _set_psi_w(self, psi_w):
        corr = exp_corr_matrix(self.dataset.sites, psi_w)
        self._chol_w = cholesky(corr)
        self._cinv = linalg.cho_solve((self._chol_w, True), np.eye(self.n))
        self._logdet_c = 2.0 * np.log(np.diag(self._chol_w)).sum()

    def _set_psi_x(self, psi_x):
        corr = exp_corr_matrix(self.dataset.sites, psi_x)
        self._chol_x = cholesky(corr)
        self._rinv = linalg.cho_solve((self._chol_x, True), np.eye(self.n))
        self._logdet_r = 2.0 * np.log(np.diag(self._chol_x)).sum()

    # -- state helpers -----------------------------------------------------

    @property
    def z(self):
        return self.theta + TWO_PI * self.winding

    def refresh(self):
        """Recompute the residual field from scratch."""
        a, b, c = self.params.coefficients()
        self.resid = increments(self.z, self.params.mu, self.params.gamma) - (a * np.abs(self.x) - c)

    def set_data(self, theta, winding):
        """Replace the observed angles and winding numbers (used by joint checks)."""
        self.theta = np.asarray(theta, dtype=float)
        self.winding = np.asarray(winding, dtype=int)
        self.refresh()

    def state(self) -> LatentState:
        return LatentState(self.winding.copy(), self.x.copy())

    def _quad(self, resid):
        return float(np.sum(resid * (self._cinv @ resid)))

    def loglik(self, params: ModelParams | None = None, resid=None, logdet_c=None, cinv=None) -> float:
        """Log likelihood of the current linear field given ``X``."""
        if not self.config.use_likelihood:
            return 0.0
        p = params or self.params
        a, b, c = p.coefficients()
        if resid is None:
            resid = increments(self.z, p.mu, p.gamma) - (a * np.abs(self.x) - c)
        cinv = self._cinv if cinv is None else cinv
        logdet_c = self._logdet_c if logdet_c is None else logdet_c
        quad = float(np.sum(resid * (cinv @ resid)))
        return (
            -0.5 * self.n * self.T * math.log(2.0 * math.pi * b * b)
            - 0.5 * self.T * logdet_c
            - 0.5 * quad / (b * b)
        )

    # -- Gibbs blocks ------------------------------------------------------

    def update_winding(self):
        if not self.config.use_likelihood:
            return
        _, b, _ = self.params.coefficients()
        b2 = b * b
        gamma = self.params.gamma
        kmax = self.kmax
        for i in range(self.n):
            for parity in (0, 1):
                ts = np.arange(parity, self.T, 2)
                if ts.size == 0:
                    continue
                shift, prec = z_conditional(self.resid, self._cinv, b2, gamma, i, ts)
                z_cur = self.theta[i, ts] + TWO_PI * self.winding[i, ts]
                probs = normalize_logweights(winding_logweights(self.theta[i, ts], z_cur + shift, prec, kmax))
                u = self.rng.uniform(size=ts.size)
                k_new = (probs.cumsum(axis=-1) < u[:, None]).sum(axis=-1) - kmax
                k_new = np.minimum(k_new, kmax)
                dz = TWO_PI * (k_new - self.winding[i, ts])
                self.winding[i, ts] = k_new
                self.resid[i, ts] += dz
                nxt = ts + 1 < self.T
                self.resid[i, ts[nxt] + 1] -= gamma * dz[nxt]

    def update_x(self):
        if not self.skew:
            return
        a, b, _ = self.params.coefficients()
        if not self.config.use_likelihood:
            a = 0.0
        ts = np.arange(self.T)
        for i in range(self.n):
            cond = x_conditional(self.resid, self._cinv, b * b, a, self._rinv, self.x, i, ts)
            new = cond.sample(self.rng)
            self.resid[i] -= a * (np.abs(new) - np.abs(self.x[i]))
            self.x[i] = new

    def update_mu(self):
        pr = self.priors
        lo, hi = pr.mu_range
        hi_open = np.nextafter(hi, -np.inf)
        u = self.rng.uniform()
        if not self.config.use_likelihood:
            self.params = self.params.replace(mu=float(min(lo + u * (hi - lo), hi_open)))
            self.refresh()
            return
        _, b, _ = self.params.coefficients()
        mu, gamma = self.params.mu, self.params.gamma
        coef = np.full(self.T, 1.0 - gamma)
        coef[0] = 1.0
        y = self.resid + mu * coef  # residual with mu removed
        ones_c = self._cinv.sum(axis=0)
        prec = (coef**2).sum() * ones_c.sum() / (b * b)
        if prec <= 0:
            new = lo + u * (hi - lo)
        else:
            mean = float(coef @ (ones_c @ y)) / (b * b) / prec
            new = truncnorm_interval(mean, 1.0 / math.sqrt(prec), lo, hi_open, u)
        self.params = self.params.replace(mu=float(new))
        self.refresh()

    def update_gamma(self):
        lo, hi = self.priors.gamma_range
        u = self.rng.uniform()
        if self.T < 2 or not self.config.use_likelihood:
            self.params = self.params.replace(gamma=float(lo + u * (hi - lo)))
            self.refresh()
            return
        a, b, c = self.params.coefficients()
        mu = self.params.mu
        z = self.z
        lag = z[:, :-1] - mu
        target = z[:, 1:] - mu - (a * np.abs(self.x[:, 1:]) - c)
        prec = float(np.sum(lag * (self._cinv @ lag))) / (b * b)
        mean = float(np.sum(lag * (self._cinv @ target))) / (b * b) / prec
        new = truncnorm_interval(mean, 1.0 / math.sqrt(prec), lo, hi, u)
        self.params = self.params.replace(gamma=float(new))
        self.refresh()

    def _mh(self, block, proposal: ModelParams, log_ratio_extra: float, target_fn):
        """Generic Metropolis accept step; ``target_fn(p)`` is the log target."""
        self.tries[block] += 1
        if not self.priors.contains(proposal, self.variant):
            return False
        cur = target_fn(self.params)
        new = target_fn(proposal)
        if not math.isfinite(new):
            return False
        if math.log(self.rng.uniform()) < new - cur + log_ratio_extra:
            self.accepts[block] += 1
            return True
        return False

    def _lam_logprior(self, lam):
        pr = self.priors
        return -0.5 * (lam - pr.lam_mean) ** 2 / pr.lam_var

    def _scale_target(self, p: ModelParams):
        out = self.loglik(p)
        if self.skew:
            out += self._lam_logprior(p.lam)
        return out

    def update_sigma_lambda(self):
        s = self.scales
        if self.skew and self.config.joint_sigma_lambda:
            eps = self.rng.standard_normal(2)
            s2 = self.params.sigma2 * math.exp(s["sigma2"] * eps[0])
            prop = self.params.replace(sigma2=s2, lam=self.params.lam + s["lam"] * eps[1])
            if self._mh("sigma2", prop, math.log(s2 / self.params.sigma2), self._scale_target):
                self.params = prop
            self.tries["lam"] += 1
            self.accepts["lam"] = self.accepts["sigma2"]
            self.refresh()
            return
        s2 = self.params.sigma2 * math.exp(s["sigma2"] * self.rng.standard_normal())
        prop = self.params.replace(sigma2=s2)
        if self._mh("sigma2", prop, math.log(s2 / self.params.sigma2), self._scale_target):
            self.params = prop
        if self.skew:
            prop = self.params.replace(lam=self.params.lam + s["lam"] * self.rng.standard_normal())
            if self._mh("lam", prop, 0.0, self._scale_target):
                self.params = prop
        self.refresh()

    def _x_prior_logpdf(self, chol_x):
        white = linalg.solve_triangular(chol_x, self.x, lower=True)
        return -0.5 * self.T * 2.0 * np.log(np.diag(chol_x)).sum() - 0.5 * float(np.sum(white**2))

    def update_decays(self):
        if not self.sample_decays:
            return
        s = self.scales
        if self.skew:
            cur = self.params.psi_x
            new = cur * math.exp(s["psi_x"] * self.rng.standard_normal())
            self.tries["psi_x"] += 1
            lo, hi = self.priors.psi_x_range
            if lo <= new <= hi:
                try:
                    chol_new = cholesky(exp_corr_matrix(self.dataset.sites, new), jitter=(0.0,))
                except NumericalError:
                    chol_new = None
                if chol_new is not None:
                    lr = self._x_prior_logpdf(chol_new) - self._x_prior_logpdf(self._chol_x) + math.log(new / cur)
                    if math.log(self.rng.uniform()) < lr:
                        self.accepts["psi_x"] += 1
                        self.params = self.params.replace(psi_x=new)
                        self._set_psi_x(new)
        cur = self.params.psi_w
        new = cur * math.exp(s["psi_w"] * self.rng.standard_normal())
        self.tries["psi_w"] += 1
        lo, hi = self.priors.psi_w_range
        if lo <= new <= hi:
            try:
                chol_new = cholesky(exp_corr_matrix(self.dataset.sites, new), jitter=(0.0,))
            except NumericalError:
                return
            cinv = linalg.cho_solve((chol_new, True), np.eye(self.n))
            logdet = 2.0 * np.log(np.diag(chol_new)).sum()
            lr = (
                self.loglik(resid=self.resid, cinv=cinv, logdet_c=logdet)
                - self.loglik(resid=self.resid)
                + math.log(new / cur)
            )
            if math.log(self.rng.uniform()) < lr:
                self.accepts["psi_w"] += 1
                self.params = self.params.replace(psi_w=new)
                self._set_psi_w(new)

    def sweep(self):
        self.update_winding()
        self.update_x()
        self.update_mu()
        self.update_gamma()
        self.update_sigma_lambda()
        self.update_decays()
        lp = self.loglik()
        if not math.isfinite(lp):
            raise NumericalError(f"non-finite log posterior at params={self.params}")

    # -- driver ------------------------------------------------------------

    def _adapt(self, window_acc, window_try):
        for k in self.scales:
            if k not in window_try or window_try[k] == 0:
                continue
            rate = window_acc[k] / window_try[k]
            if rate < 0.2:
                self.scales[k] *= 0.8
            elif rate > 0.45:
                self.scales[k] *= 1.25

    def run(self) -> PosteriorDraws:
        cfg = self.config
        names = variant_params(self.variant)
        n_store = cfg.n_stored
        out = {k: np.empty(n_store) for k in names}
        wind = np.empty((n_store, self.n, self.T), dtype=np.int8) if cfg.store_latent else None
        xs = np.empty((n_store, self.n, self.T)) if (cfg.store_latent and self.skew) else None
        snap_acc = dict(self.accepts)
        snap_try = dict(self.tries)
        stored = 0
        for it in range(cfg.iterations):
            self.sweep()
            if cfg.adapt and it < cfg.burn_in and (it + 1) % cfg.adapt_interval == 0:
                self._adapt(
                    {k: self.accepts[k] - snap_acc[k] for k in self.accepts},
                    {k: self.tries[k] - snap_try[k] for k in self.tries},
                )
                snap_acc, snap_try = dict(self.accepts), dict(self.tries)
            if it == cfg.burn_in - 1:
                snap_acc, snap_try = dict(self.accepts), dict(self.tries)
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0 and stored < n_store:
                for k in names:
                    out[k][stored] = getattr(self.params, k)
                if wind is not None:
                    wind[stored] = self.winding
                if xs is not None:
                    xs[stored] = self.x
                stored += 1
        if cfg.burn_in == 0:
            snap_acc = {k: 0 for k in self.accepts}
            snap_try = {k: 0 for k in self.tries}
        acceptance = {}
        for k in self.accepts:
            tries = self.tries[k] - snap_try[k]
            acceptance[k] = (self.accepts[k] - snap_acc[k]) / tries if tries else float("nan")
        for k in ("mu", "gamma"):
            acceptance[k] = 1.0
        return PosteriorDraws(
            variant=self.variant,
            params=out,
            winding=wind,
            x_field=xs,
            acceptance=acceptance,
            kmax=self.kmax,
            meta={"proposal_scales": dict(self.scales), "n": self.n, "T": self.T},
        )


def fit(
    dataset: SpaceTimeDataset,
    priors: Priors | None = None,
    config: ChainConfig | None = None,
    variant: str = "wrapped_skew",
    init: ModelParams | None = None,
) -> PosteriorDraws:
    """Run one chain and return the post burn-in draws."""
    config = config or ChainConfig()
    sampler = GibbsSampler(dataset, priors, config, variant, np.random.default_rng(config.seed), init=init)
    log.info("fitting %s model: n=%d T=%d iterations=%d", sampler.variant, sampler.n, sampler.T, config.iterations)
    return sampler.run()


# ---------------------------------------------------------------------------
# single-entry conditionals on an explicit state


def _state_pieces(state: LatentState, params: ModelParams, dataset: SpaceTimeDataset):
    z = dataset.angles + TWO_PI * np.asarray(state.winding)
    a, b, c = params.coefficients()
    resid = increments(z, params.mu, params.gamma) - (a * np.abs(state.x_field) - c)
    chol = cholesky(exp_corr_matrix(dataset.sites, params.psi_w))
    cinv = linalg.cho_solve((chol, True), np.eye(dataset.n))
    return z, resid, cinv, b * b


def winding_probabilities(state, params, dataset, i, t, kmax=DEFAULT_KMAX):
    """Full conditional probabilities of ``K[i, t]`` over ``-kmax..kmax``."""
    z, resid, cinv, b2 = _state_pieces(state, params, dataset)
    shift, prec = z_conditional(resid, cinv, b2, params.gamma, i, np.array([t]))
    lw = winding_logweights(dataset.angles[i, t], z[i, t] + shift[0], prec[0], kmax)
    return normalize_logweights(lw)


def update_winding(state, params, dataset, i, t, rng, kmax=DEFAULT_KMAX) -> int:
    probs = winding_probabilities(state, params, dataset, i, t, kmax)
    return int(rng.choice(np.arange(-kmax, kmax + 1), p=probs))


def x_full_conditional(state, params, dataset, i, t) -> XConditional:
    _, resid, cinv, b2 = _state_pieces(state, params, dataset)
    a = params.coefficients()[0]
    chol_x = cholesky(exp_corr_matrix(dataset.sites, params.psi_x))
    rinv = linalg.cho_solve((chol_x, True), np.eye(dataset.n))
    return x_conditional(resid, cinv, b2, a, rinv, np.asarray(state.x_field, dtype=float), i, np.array([t]))


def update_x(state, params, dataset, i, t, rng) -> float:
    return float(x_full_conditional(state, params, dataset, i, t).sample(rng)[0])


def mu_full_conditional(state, params, dataset):
    """Mean and variance of the (untruncated) Gaussian full conditional of ``mu``."""
    z, resid, cinv, b2 = _state_pieces(state, params, dataset)
    coef = np.full(dataset.T, 1.0 - params.gamma)
    coef[0] = 1.0
    y = resid + params.mu * coef
    ones_c = cinv.sum(axis=0)
    prec = (coef**2).sum() * ones_c.sum() / b2
    return float(coef @ (ones_c @ y)) / b2 / prec, 1.0 / prec


def update_scalars(state, params, dataset, priors, config, rng, variant="wrapped_skew") -> ModelParams:
    """One pass of the scalar blocks (mu, gamma, sigma2/lam, decays) from ``state``."""
    s = GibbsSampler(dataset, priors, config, variant, rng, init=params, init_state=state)
    s.update_mu()
    s.update_gamma()
    s.update_sigma_lambda()
    s.update_decays()
    return s.params


# ---------------------------------------------------------------------------
# summaries


@dataclass
class ParamSummary:
    mean: float
    lower: float
    upper: float
    acceptance: float
    ess: float


def effective_sample_size(chain) -> float:
    """ESS from overlapping batch means with batch size ``floor(sqrt(N))``."""
    x = np.asarray(chain, dtype=float)
    n = x.size
    var = x.var(ddof=1) if n > 1 else 0.0
    if n < 4 or var == 0.0:
        return float(n)
    bsize = int(math.floor(math.sqrt(n)))
    csum = np.concatenate([[0.0], np.cumsum(x)])
    bmeans = (csum[bsize:] - csum[:-bsize]) / bsize
    sigma2 = n * bsize / ((n - bsize) * (n - bsize + 1)) * np.sum((bmeans - x.mean()) ** 2)
    if sigma2 <= 0:
        return float(n)
    return float(n * var / sigma2)


def summarize_chain(chain, acceptance=float("nan"), level=0.95) -> ParamSummary:
    x = np.asarray(chain, dtype=float)
    if x.size == 0:
        raise ValueError("empty chain")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [tail, 1.0 - tail])
    return ParamSummary(float(x.mean()), float(lo), float(hi), float(acceptance), effective_sample_size(x))


def diagnostics(draws: PosteriorDraws) -> dict:
    """Per-parameter posterior mean, equal-tailed 95% interval, acceptance and ESS."""
    if len(draws) == 0:
        raise ValueError("no draws")
    return {
        k: summarize_chain(draws.params[k], draws.acceptance.get(k, float("nan")))
        for k in draws.param_names
    }
