"""Config parsing and the end-to-end simulation study driver."""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io as wio
from .evaluation import SPLIT_TYPES, ScoreTable, make_splits, score_split
from .mcmc import ChainConfig, Priors, canonical_variant, diagnostics, fit
from .prediction import ForecastRequest, forecast, krige_many
from .spacetime import ModelParams, SimTruth, SiteSet, simulate

VARIANT_LABELS = {"wrapped_skew": "WS", "wrapped": "W"}


@dataclass
class Scenario:
    name: str
    n: int
    T: int
    params: ModelParams
    box: float = 10.0


@dataclass
class SplitPolicy:
    fraction_sites: float = 0.9
    holdout_times: int = 10
    repetitions: int = 40


@dataclass
class ExperimentConfig:
    seed: int
    scenarios: list = field(default_factory=list)
    chain: ChainConfig = field(default_factory=ChainConfig)
    priors: Priors = field(default_factory=Priors)
    splits: SplitPolicy = field(default_factory=SplitPolicy)
    cov_form: str = "exact"
    store_draws: bool = False
    hash: str = ""


def _get(cp, section, key, conv, default):
    if not cp.has_section(section) or not cp.has_option(section, key):
        return default
    try:
        if conv is bool:
            return cp.getboolean(section, key)
        return conv(cp.get(section, key))
    except ValueError as exc:
        raise wio.DataFormatError(f"config [{section}] {key}: {exc}") from None


def priors_from_config(cp) -> Priors:
    s = "priors"
    return Priors(
        mu_range=(_get(cp, s, "mu_low", float, 0.0), _get(cp, s, "mu_high", float, 2 * math.pi)),
        gamma_range=(_get(cp, s, "gamma_low", float, -1.0), _get(cp, s, "gamma_high", float, 1.0)),
        sigma2_range=(0.0, _get(cp, s, "sigma2_high", float, 10.0)),
        lam_mean=_get(cp, s, "lam_mean", float, 0.0),
        lam_var=_get(cp, s, "lam_var", float, 100.0),
        psi_x_range=(_get(cp, s, "psi_x_low", float, 0.1), _get(cp, s, "psi_x_high", float, 1.0)),
        psi_w_range=(_get(cp, s, "psi_w_low", float, 0.1), _get(cp, s, "psi_w_high", float, 1.0)),
    )


def chain_from_config(cp, seed=0, kmax=None) -> ChainConfig:
    s = "chain"
    base = ChainConfig()
    scales = dict(base.proposal_scales)
    for k in scales:
        scales[k] = _get(cp, s, f"scale_{k}", float, scales[k])
    return ChainConfig(
        iterations=_get(cp, s, "iterations", int, base.iterations),
        burn_in=_get(cp, s, "burn_in", int, base.burn_in),
        thin=_get(cp, s, "thin", int, base.thin),
        kmax=kmax if kmax is not None else _get(cp, "experiment", "kmax", int, base.kmax),
        seed=seed,
        proposal_scales=scales,
        adapt=_get(cp, s, "adapt", bool, True),
        joint_sigma_lambda=_get(cp, s, "joint_sigma_lambda", bool, False),
    )


def experiment_from_config(cp: configparser.ConfigParser, seed=None, kmax=None, cov_form=None) -> ExperimentConfig:
    if seed is None:
        seed = _get(cp, "experiment", "seed", int, None)
    if seed is None:
        raise wio.DataFormatError("a master seed is required ([experiment] seed or --seed)")
    scenarios = []
    for sec in cp.sections():
        if not sec.startswith("scenario."):
            continue
        p = ModelParams(
            mu=_get(cp, sec, "mu", float, math.pi),
            sigma2=_get(cp, sec, "sigma2", float, 1.0),
            lam=_get(cp, sec, "lam", float, 0.0),
            gamma=_get(cp, sec, "gamma", float, 0.5),
            psi_x=_get(cp, sec, "psi_x", float, 0.5),
            psi_w=_get(cp, sec, "psi_w", float, 0.2),
        )
        n = _get(cp, sec, "n", int, None)
        T = _get(cp, sec, "T", int, None)
        if n is None or T is None or n < 1 or T < 1:
            raise wio.DataFormatError(f"config [{sec}] needs positive n and T")
        scenarios.append(Scenario(sec.split(".", 1)[1], n, T, p, _get(cp, sec, "box", float, 10.0)))
    splits = SplitPolicy(
        fraction_sites=_get(cp, "splits", "fraction_sites", float, 0.9),
        holdout_times=_get(cp, "splits", "holdout_times", int, 10),
        repetitions=_get(cp, "splits", "repetitions", int, 40),
    )
    cov = cov_form or _get(cp, "experiment", "cov_form", str, "exact")
    return ExperimentConfig(
        seed=int(seed),
        scenarios=scenarios,
        chain=chain_from_config(cp, 0, kmax),
        priors=priors_from_config(cp),
        splits=splits,
        cov_form=cov,
        store_draws=_get(cp, "experiment", "store_draws", bool, False),
        hash=wio.config_hash(cp),
    )


def derived_seed(*keys) -> int:
    """Deterministic 32-bit seed from a key tuple."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def simulate_scenario(scn: Scenario, seed: int, index: int) -> SimTruth:
    rng = np.random.default_rng([seed, 0, index])
    sites = SiteSet(rng.uniform(0.0, scn.box, size=(scn.n, 2)))
    return simulate(scn.params, sites, scn.T, rng)


class Manifest:
    """Stage ledger rewritten after every status change."""

    def __init__(self, path: Path, header: dict):
        self.path = path
        self.doc = {"header": header, "stages": []}
        self._write()

    def start(self, name):
        self.doc["stages"].append({"stage": name, "status": "running"})
        self._write()

    def finish(self, status="done", detail=None):
        st = self.doc["stages"][-1]
        st["status"] = status
        if detail:
            st["detail"] = detail
        self._write()

    def _write(self):
        self.path.write_text(json.dumps(self.doc, indent=1) + "\n")


def _stage(manifest, name, fn):
    manifest.start(name)
    try:
        out = fn()
    except Exception as exc:
        manifest.finish("failed", f"{type(exc).__name__}: {exc}")
        raise
    manifest.finish()
    return out


def _fit_seed(cfg, sc_index, rep, variant):
    return derived_seed(cfg.seed, 1, sc_index, rep, 0 if variant == "wrapped_skew" else 1)


def param_table(summaries: dict, names) -> str:
    """Parameter means and 95% intervals, one column per scenario."""
    cols = list(summaries)
    width = 24
    lines = [f"{'':<8}" + "".join(f"{c:>{width}}" for c in cols)]
    for p in names:
        means, cis = [], []
        for c in cols:
            s = summaries[c].get(p)
            means.append(f"{s.mean:>{width}.3f}" if s else f"{'-':>{width}}")
            cis.append(f"{f'({s.lower:.3f}, {s.upper:.3f})':>{width}}" if s else f"{'':>{width}}")
        lines.append(f"{p:<8}" + "".join(means))
        lines.append(f"{'C.I.':<8}" + "".join(cis))
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir, variants=("wrapped_skew", "wrapped")) -> dict:
    """Simulate, split, fit, predict and score every scenario.

    Writes datasets, truth sidecars, parameter tables, per-point CRPS, a
    summary table and ``manifest.json`` under ``out_dir``. Returns the
    summary as ``{scenario: {(variant, split): mean CRPS}}``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    head = wio.header_line(cfg.hash, cfg.seed)
    manifest = Manifest(out / "manifest.json", {"config_hash": cfg.hash, "seed": cfg.seed})
    variants = [canonical_variant(v) for v in variants]
    summary = {}
    param_summaries = {v: {} for v in variants}
    report = [head.rstrip("\n"), ""]
    for si, scn in enumerate(cfg.scenarios):
        sdir = out / scn.name
        sdir.mkdir(exist_ok=True)
        truth = _stage(manifest, f"simulate:{scn.name}", lambda: simulate_scenario(scn, cfg.seed, si))
        data = truth.dataset
        wio.write_dataset(sdir / "data.csv", data, head)
        wio.write_truth(sdir / "truth.json", truth, {"config_hash": cfg.hash, "seed": cfg.seed})

        for v in variants:
            chain = replace(cfg.chain, seed=derived_seed(cfg.seed, 4, si, 0 if v == "wrapped_skew" else 1), store_latent=cfg.store_draws)
            draws = _stage(manifest, f"fit:{scn.name}:full:{v}", lambda: fit(data, cfg.priors, chain, v))
            summ = diagnostics(draws)
            param_summaries[v][scn.name] = summ
            (sdir / f"params_{VARIANT_LABELS[v]}.csv").write_text(wio.summary_csv(summ, head))
            if cfg.store_draws:
                wio.write_draws(sdir / f"draws_{VARIANT_LABELS[v]}", draws, head)

        T_train = data.T - cfg.splits.holdout_times
        splits = make_splits(data, cfg.splits.fraction_sites, T_train, cfg.splits.repetitions, derived_seed(cfg.seed, 2, si))
        table = ScoreTable()
        point_rows = []
        for sp in splits:
            train = sp.training_data(data)
            _, ho_idx = sp.indices(data)
            for v in variants:
                chain = replace(cfg.chain, seed=_fit_seed(cfg, si, sp.repetition, v), store_latent=True)
                label = f"fit:{scn.name}:rep{sp.repetition}:{v}"
                draws = _stage(manifest, label, lambda: fit(train, cfg.priors, chain, v))

                def predict_and_score():
                    pseed = derived_seed(cfg.seed, 3, si, sp.repetition)
                    spatial = krige_many(
                        draws,
                        train,
                        data.sites.coords[ho_idx],
                        range(1, T_train + 1),
                        seed=pseed,
                        cov_form=cfg.cov_form,
                        site_keys=sp.holdout_sites,
                    )
                    temporal = forecast(draws, train, ForecastRequest(cfg.splits.holdout_times), seed=pseed)
                    return {"spatial": score_split(spatial, data), "temporal": score_split(temporal, data)}

                scores = _stage(manifest, f"score:{scn.name}:rep{sp.repetition}:{v}", predict_and_score)
                for st in SPLIT_TYPES:
                    table.add(VARIANT_LABELS[v], st, scores[st])
                    point_rows.extend((sp.repetition, VARIANT_LABELS[v], st, s) for s in scores[st])
        (sdir / "crps_points.csv").write_text(
            head
            + "repetition,variant,split,crps\n"
            + "".join(f"{r},{v},{s},{c!r}\n" for r, v, s, c in point_rows)
        )
        (sdir / "crps.csv").write_text(head + table.to_csv())
        summary[scn.name] = {(v, s): table.mean(v, s) for v, s, _, _ in table.rows()}
        report += [f"scenario {scn.name}: mean CRPS over {len(splits)} validation sets", table.to_text()]

    for v in variants:
        names = ("mu", "sigma2", "lam", "gamma", "psi_x", "psi_w") if v == "wrapped_skew" else ("mu", "sigma2", "gamma", "psi_w")
        report += [f"parameter estimates, {VARIANT_LABELS[v]} model", param_table(param_summaries[v], names)]
    rows = ["scenario,variant,split,mean_crps"]
    for name, d in summary.items():
        rows += [f"{name},{v},{s},{m!r}" for (v, s), m in sorted(d.items())]
    manifest.start("report")
    (out / "summary.csv").write_text(head + "\n".join(rows) + "\n")
    (out / "report.txt").write_text("\n".join(report))
    manifest.finish()
    return {"summary": summary, "params": param_summaries}
