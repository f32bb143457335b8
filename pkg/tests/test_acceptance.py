"""Acceptance criteria 1-11, one test each, each printing a PASS/FAIL line.

Criteria 7 and 8 share one desk-scale experiment (about 30 minutes on one
core). Set ``WRAPSKEW_DESK_RUN`` to the output directory of a completed
``wrapskew experiment --config desk`` run to reuse it; the directory is
accepted only if its manifest matches the shipped desk config and seed and
every stage finished.
"""

import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from oracles import (
    NAMES,
    ks_pvalue_ess,
    make_draws,
    oracle_exact,
    oracle_paper,
    oracle_static,
    random_setup,
    stream,
)
from scipy import stats
from scipy.integrate import cumulative_trapezoid
from scipy.stats import multivariate_normal

from wrapskew import cli
from wrapskew import io as wio
from wrapskew.circular import TWO_PI, circ_summary, wrap
from wrapskew.distributions import (
    SkewNormalParams,
    circ_mean_conc,
    trig_moments_closed,
    trig_moments_mc,
    wsn_pdf,
    wsn_sample,
)
from wrapskew.evaluation import crps_circular, rayleigh_test
from wrapskew.mcmc import (
    ChainConfig,
    GibbsSampler,
    LatentState,
    Priors,
    update_winding,
    update_x,
    winding_probabilities,
)
from wrapskew.prediction import krige_spacetime, krige_static
from wrapskew.spacetime import (
    ModelParams,
    SiteSet,
    SpaceTimeDataset,
    cholesky,
    exp_corr_matrix,
    increment_loglik,
    simulate,
)

LAM_GRID = (0.0, 1.5, 3.0, 10.0)


def check(number, title, ok, detail):
    print(f"\n[acceptance {number:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    assert ok, f"criterion {number} failed: {detail}"


def _angle_diff(a, b):
    return abs((a - b + math.pi) % TWO_PI - math.pi)


# 1 -------------------------------------------------------------------------


def test_criterion_01_lambda0_reduction():
    theta = np.linspace(0, TWO_PI, 100, endpoint=False)
    worst = 0.0
    for s2 in (0.5, 1.0, 2.0):
        for mu in (0.0, math.pi):
            got = wsn_pdf(SkewNormalParams(mu, s2, 0.0), theta, kmax=3)
            # wrapped normal through its Fourier series
            p = np.arange(1, 60)[:, None]
            want = (1 + 2 * np.sum(np.exp(-(p**2) * s2 / 2) * np.cos(p * (theta - mu)), axis=0)) / TWO_PI
            worst = max(worst, float(np.max(np.abs(got - want))))
    check(1, "lambda=0 wrapped normal reduction", worst < 1e-12, f"max abs diff {worst:.2e} (< 1e-12)")


# 2 -------------------------------------------------------------------------


def test_criterion_02_trig_moments_closed_vs_mc():
    rng = np.random.default_rng(2)
    worst = 0.0
    for lam in LAM_GRID:
        p = SkewNormalParams(math.pi, 1.0, lam)
        c = trig_moments_closed(p, 1)
        m = trig_moments_mc(p, 1, 10**6, rng)
        worst = max(worst, abs(c.alpha - m.alpha), abs(c.beta - m.beta))
    check(2, "closed-form vs Monte Carlo first trig moments", worst < 0.005, f"max abs diff {worst:.4f} (< 0.005)")


# 3 -------------------------------------------------------------------------


def test_criterion_03_sampler_fidelity():
    rng = np.random.default_rng(3)
    worst = 0.0
    for lam in LAM_GRID:
        p = SkewNormalParams(math.pi, 1.0, lam)
        got = circ_summary(wsn_sample(p, 10**6, rng))
        want = circ_mean_conc(p)
        worst = max(
            worst,
            _angle_diff(got.mean_direction, want.mean_direction),
            abs(got.mean_resultant_length - want.mean_resultant_length),
        )
    check(3, "sampled vs closed-form circular mean and concentration", worst < 0.01, f"max diff {worst:.4f} (< 0.01)")


# 4 -------------------------------------------------------------------------


def test_criterion_04_conditional_normal_oracle():
    worst = 0.0
    cases = 0
    for n in (1, 2, 3):
        for T in (1, 2, 3):
            data, params, wind, x, s0 = random_setup(10 * n + T, n=n, T=T, B=3)
            draws = make_draws(params, wind, x)
            for t in range(1, T + 1):
                for form, oracle in (("exact", oracle_exact), ("paper", oracle_paper)):
                    got = krige_spacetime(draws, data, s0, t, seed=5, cov_form=form, site_key=1)
                    ux, uz = stream(5, (1, t), t, len(draws))
                    for b in range(len(draws)):
                        p = {k: params[k][b] for k in NAMES}
                        want = oracle(data, p, wind[b], x[b], s0, t, ux[b], uz[b])[0]
                        worst = max(worst, abs(got.linear[b] - want))
                        cases += 1
                got = krige_static(draws, data, s0, seed=6, time=t, site_key=2)
                u = np.random.default_rng([6, 0, 2, t]).standard_normal((2, len(draws)))
                for b in range(len(draws)):
                    p = {k: params[k][b] for k in NAMES}
                    want = oracle_static(data, p, wind[b], x[b], s0, t, u[0, b], u[1, b])[0]
                    worst = max(worst, abs(got.linear[b] - want))
                    cases += 1
    check(4, "kriging vs joint-normal oracle", worst < 1e-8, f"{cases} draws, max abs diff {worst:.2e} (< 1e-8)")


# 5 -------------------------------------------------------------------------


def _toy_state(seed, p, box):
    """Simulated toy instance with the true latent state."""
    rng = np.random.default_rng(seed)
    sites = SiteSet(rng.uniform(0, box, (2, 2)))
    tr = simulate(p, sites, 2, rng)
    return p, tr.dataset, LatentState(np.floor(tr.latent_z / TWO_PI).astype(int), tr.latent_x)


def test_criterion_05_full_conditional_oracles():
    # winding: enumeration of the joint density over k; a large innovation
    # variance and distant sites leave several winding numbers plausible
    p = ModelParams(mu=2.0, sigma2=8.0, lam=0.5, gamma=0.6, psi_x=0.5, psi_w=0.3)
    p, data, state = _toy_state(5, p, 20.0)
    kmax = 3
    enum_err, tv_k = 0.0, 0.0
    rng = np.random.default_rng(55)
    for i, t in ((0, 0), (1, 1)):
        logp = []
        for k in range(-kmax, kmax + 1):
            w = state.winding.copy()
            w[i, t] = k
            logp.append(increment_loglik(data.angles + TWO_PI * w, state.x_field, p, data.sites))
        want = np.exp(np.array(logp) - max(logp))
        want /= want.sum()
        enum_err = max(enum_err, float(np.max(np.abs(winding_probabilities(state, p, data, i, t, kmax) - want))))
        draws = [update_winding(state, p, data, i, t, rng, kmax) for _ in range(20_000)]
        freq = np.bincount(np.array(draws) + kmax, minlength=2 * kmax + 1) / len(draws)
        tv_k = max(tv_k, 0.5 * float(np.abs(freq - want).sum()))

    # latent X: 2000-point grid of the unnormalized full conditional
    p = ModelParams(mu=2.0, sigma2=0.8, lam=3.0, gamma=0.6, psi_x=0.5, psi_w=0.3)
    p, data, state = _toy_state(5, p, 3.0)
    i, t = 0, 1
    grid = np.linspace(-8, 8, 2000)
    R = exp_corr_matrix(data.sites, p.psi_x)
    ld = []
    for v in grid:
        x = state.x_field.copy()
        x[i, t] = v
        z = data.angles + TWO_PI * state.winding
        ld.append(increment_loglik(z, x, p, data.sites) + multivariate_normal(np.zeros(2), R).logpdf(x[:, t]))
    dens = np.exp(np.array(ld) - max(ld))
    cdf = cumulative_trapezoid(dens, grid, initial=0.0)
    cdf /= cdf[-1]
    # 20 equal-probability bins keep the sampling noise of the TV well below 0.01
    edges = np.interp(np.linspace(0, 1, 21), cdf, grid)
    edges[0], edges[-1] = -np.inf, np.inf
    xs = np.array([update_x(state, p, data, i, t, rng) for _ in range(100_000)])
    freq = np.histogram(xs, edges)[0] / xs.size
    tv_x = 0.5 * float(np.abs(freq - 0.05).sum())
    ok = enum_err < 1e-10 and tv_k < 0.01 and tv_x < 0.01
    check(
        5,
        "winding and latent-X full conditionals",
        ok,
        f"enumeration max diff {enum_err:.1e}, winding TV {tv_k:.4f}, X grid TV {tv_x:.4f} (< 0.01)",
    )


# 6 -------------------------------------------------------------------------


def test_criterion_06_geweke_joint_check():
    """Successive-conditional simulator: data | parameters, then Gibbs sweeps | data."""
    rng = np.random.default_rng(606)
    sites = SiteSet([[0.0, 0.0], [1.5, 0.5]])
    priors = Priors()
    kmax = 6
    cfg = ChainConfig(
        iterations=2,
        burn_in=1,
        kmax=kmax,
        adapt=False,
        proposal_scales={"sigma2": 0.5, "lam": 3.0, "psi_x": 0.5, "psi_w": 0.5},
    )

    def simulate_data(p, x):
        # rejection keeps the winding numbers inside the sampler's window
        lw = cholesky(exp_corr_matrix(sites, p.psi_w))
        a, b, c = p.coefficients()
        while True:
            z = np.empty((2, 2))
            prev = np.full(2, p.mu)
            for t in range(2):
                z[:, t] = p.mu + p.gamma * (prev - p.mu) + a * np.abs(x[:, t]) + b * (lw @ rng.standard_normal(2)) - c
                prev = z[:, t]
            k = np.floor(z / TWO_PI).astype(int)
            if np.all(np.abs(k) <= kmax):
                return wrap(z), k

    p0 = priors.sample(rng)
    x0 = cholesky(exp_corr_matrix(sites, p0.psi_x)) @ rng.standard_normal((2, 2))
    theta, k = simulate_data(p0, x0)
    s = GibbsSampler(SpaceTimeDataset(sites, theta), priors, cfg, "ws", rng, init=p0, init_state=LatentState(k, x0))
    cycles, sweeps = 5000, 5
    out = {name: np.empty(cycles) for name in ("mu", "gamma", "sigma2", "lam")}
    for c in range(cycles):
        theta, k = simulate_data(s.params, s.x)
        s.set_data(theta, k)
        for _ in range(sweeps):
            s.sweep()
        for name in out:
            out[name][c] = getattr(s.params, name)
    dists = {
        "mu": stats.uniform(0, TWO_PI).cdf,
        "gamma": stats.uniform(-1, 2).cdf,
        "sigma2": stats.uniform(0, 10).cdf,
        "lam": stats.norm(0, 10).cdf,
    }
    pv = {name: ks_pvalue_ess(out[name], dists[name]) for name in out}
    ok = pv["mu"] > 0.01 and pv["gamma"] > 0.01
    detail = ", ".join(f"{k} p={v:.3f}" for k, v in pv.items())
    check(6, "Geweke joint check (ESS-adjusted KS at 1% for mu, gamma)", ok, f"{cycles} cycles: {detail}")


# 7 and 8 -------------------------------------------------------------------


def _run_is_complete(path: Path, cfg) -> bool:
    try:
        doc = json.loads((path / "manifest.json").read_text())
    except (OSError, ValueError):
        return False
    head = doc.get("header", {})
    stages = doc.get("stages", [])
    return (
        head.get("config_hash") == cfg.hash
        and head.get("seed") == cfg.seed
        and bool(stages)
        and stages[-1]["stage"] == "report"
        and all(s["status"] == "done" for s in stages)
    )


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    from wrapskew.experiment import experiment_from_config

    cfg = experiment_from_config(wio.parse_config(wio.config_text("desk")))
    reuse = os.environ.get("WRAPSKEW_DESK_RUN")
    if reuse and _run_is_complete(Path(reuse), cfg):
        print(f"\nreusing desk experiment at {reuse}")
        return Path(reuse)
    out = tmp_path_factory.mktemp("desk")
    assert cli.main(["experiment", "--config", "desk", "--out", str(out)]) == 0
    assert _run_is_complete(out, cfg)
    return out


def _read_params(path):
    rows = [ln.split(",") for ln in path.read_text().splitlines() if not ln.startswith("#")][1:]
    return {r[0]: (float(r[1]), float(r[2]), float(r[3])) for r in rows}


def test_criterion_07_parameter_recovery(desk_run):
    parts, ok = [], True
    for scn in ("lam0", "lam10"):
        truth = wio.read_truth(desk_run / scn / "truth.json")["params"]
        est = _read_params(desk_run / scn / "params_WS.csv")
        for name in ("mu", "gamma"):
            mean, lo, hi = est[name]
            inside = lo <= getattr(truth, name) <= hi
            ok &= inside
            parts.append(f"{scn} {name} {getattr(truth, name):.3f} in ({lo:.3f}, {hi:.3f}): {inside}")
        if scn == "lam10":
            lam_mean = est["lam"][0]
            ok &= lam_mean > 3
            parts.append(f"lam10 posterior mean lambda {lam_mean:.2f} (> 3)")
    check(7, "parameter recovery at desk scale", ok, "; ".join(parts))


def _summary(desk_run):
    rows = [ln.split(",") for ln in (desk_run / "summary.csv").read_text().splitlines() if not ln.startswith("#")][1:]
    return {(r[0], r[1], r[2]): float(r[3]) for r in rows}


def test_criterion_08_crps_ordering(desk_run):
    s = _summary(desk_run)
    sp_ws, sp_w = s[("lam10", "WS", "spatial")], s[("lam10", "W", "spatial")]
    tm_ws, tm_w = s[("lam10", "WS", "temporal")], s[("lam10", "W", "temporal")]
    rel = abs(tm_ws - tm_w) / tm_w
    ok = sp_ws < sp_w and rel <= 0.05
    check(
        8,
        "CRPS ordering on lambda=10 data",
        ok,
        f"spatial WS {sp_ws:.4f} vs W {sp_w:.4f}; temporal WS {tm_ws:.4f} vs W {tm_w:.4f} (rel diff {rel:.3f} <= 0.05)",
    )


# 9 -------------------------------------------------------------------------


def test_criterion_09_crps_unit_cases():
    vals = [
        (crps_circular([1.0] * 4, 1.0), 0.0),
        (crps_circular([1.0 + math.pi] * 4, 1.0), 2.0),
        (crps_circular([0.0, math.pi], 0.0), 0.5),
    ]
    worst = max(abs(a - b) for a, b in vals)
    check(9, "CRPS unit cases 0, 2, 0.5", worst <= 1e-12, f"max abs error {worst:.1e} (<= 1e-12)")


# 10 ------------------------------------------------------------------------


def test_criterion_10_rayleigh_prior_calibration():
    rates = {}
    for lam in LAM_GRID:
        rng = np.random.default_rng([10, int(lam * 10)])
        p = SkewNormalParams(math.pi, 10.0, lam)
        rej = [rayleigh_test(wsn_sample(p, 200, rng))[1] < 0.05 for _ in range(500)]
        rates[lam] = float(np.mean(rej))
    # with skewness the first trig moment decays more slowly, so only lambda = 0
    # is near uniform at sigma2 = 10; the other rates are reported for context
    ok = 0.02 <= rates[0.0] <= 0.09
    detail = ", ".join(f"lambda={k:g}: {v:.3f}" for k, v in rates.items())
    check(10, "Rayleigh rejection rate at sigma2=10, n=200 (lambda=0 in [0.02, 0.09])", ok, detail)


# 11 ------------------------------------------------------------------------

TINY = """
[experiment]
seed = 11

[scenario.small]
n = 8
T = 5
lam = 3.0

[chain]
iterations = 40
burn_in = 10

[splits]
fraction_sites = 0.75
holdout_times = 2
repetitions = 2
"""

COMMANDS = [
    ["simulate", "--config", "tiny.cfg", "--out", "sim"],
    ["fit", "sim/small.csv", "--config", "tiny.cfg", "--out", "fit"],
    ["fit", "sim/small.csv", "--config", "tiny.cfg", "--variant", "w", "--out", "fitw"],
    ["predict", "--config", "tiny.cfg", "--draws", "fit", "--data", "sim/small.csv", "--at", "1,1;2.5,3", "--times", "1-3", "--out", "at.csv"],
    ["predict", "--config", "tiny.cfg", "--draws", "fitw", "--data", "sim/small.csv", "--horizon", "2", "--out", "fc.csv"],
    ["score", "--predictive", "at.csv", "--data", "sim/small.csv", "--out", "score.csv"],
    ["experiment", "--config", "tiny.cfg", "--out", "exp"],
    ["moments", "--lam", "3", "--draws", "20000", "--seed", "4"],
]


def _run_all(workdir: Path):
    workdir.mkdir()
    (workdir / "tiny.cfg").write_text(TINY)
    outputs = []
    for args in COMMANDS:
        res = subprocess.run([sys.executable, "-m", "wrapskew", *args], cwd=workdir, capture_output=True)
        outputs.append((args[0], res.returncode, res.stdout))
    files = {p.relative_to(workdir): p.read_bytes() for p in sorted(workdir.rglob("*")) if p.is_file()}
    return outputs, files


def test_criterion_11_cli_determinism(tmp_path):
    out_a, files_a = _run_all(tmp_path / "a")
    out_b, files_b = _run_all(tmp_path / "b")
    failed = [cmd for (cmd, rc, _), (_, _, _) in zip(out_a, out_b) if rc != 0]
    same_stdout = all(a == b for a, b in zip(out_a, out_b))
    diff_files = sorted(str(f) for f in set(files_a) | set(files_b) if files_a.get(f) != files_b.get(f))
    ok = not failed and same_stdout and not diff_files
    check(
        11,
        "CLI byte reproducibility",
        ok,
        f"{len(COMMANDS)} commands, {len(files_a)} files; failed={failed} differing={diff_files} stdout_equal={same_stdout}",
    )
