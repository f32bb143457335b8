"""Command line interface.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy import linalg

from . import io as wio
from .distributions import (
    SkewNormalParams,
    circ_mean_conc,
    trig_moments_closed,
    trig_moments_mc,
)
from .evaluation import score_split
from .experiment import (
    chain_from_config,
    derived_seed,
    experiment_from_config,
    priors_from_config,
    run_experiment,
    simulate_scenario,
)
from .mcmc import canonical_variant, diagnostics, fit
from .prediction import ForecastRequest, forecast, krige_many
from .spacetime import NumericalError

log = logging.getLogger("wrapskew")

VARIANT_CHOICES = {"ws": "wrapped_skew", "w": "wrapped"}


def _load_config(arg):
    if arg is None:
        return wio.parse_config("")
    return wio.parse_config(wio.config_text(arg))


def _master_seed(args, cp):
    if args.seed is not None:
        return int(args.seed)
    if cp.has_option("experiment", "seed"):
        return cp.getint("experiment", "seed")
    return 0


def _int_list(text):
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def _coords(text):
    pts = []
    for item in text.split(";"):
        x, y = (float(v) for v in item.split(","))
        pts.append((x, y))
    return np.array(pts)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    cp = _load_config(args.config)
    cfg = experiment_from_config(cp, seed=_master_seed(args, cp))
    if not cfg.scenarios:
        raise wio.DataFormatError("config has no [scenario.*] sections")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    head = wio.header_line(cfg.hash, cfg.seed)
    for i, scn in enumerate(cfg.scenarios):
        truth = simulate_scenario(scn, cfg.seed, i)
        wio.write_dataset(out / f"{scn.name}.csv", truth.dataset, head)
        wio.write_truth(out / f"{scn.name}.truth.json", truth, {"config_hash": cfg.hash, "seed": cfg.seed})
        print(f"wrote {out / scn.name}.csv ({scn.n} sites x {scn.T} times)")
    return 0


def cmd_fit(args):
    cp = _load_config(args.config)
    seed = _master_seed(args, cp)
    data = wio.read_dataset(args.data, degrees=args.degrees)
    chain = chain_from_config(cp, derived_seed(seed, 10), args.kmax)
    overrides = {k: getattr(args, k) for k in ("iterations", "burn_in", "thin") if getattr(args, k) is not None}
    if overrides:
        chain = replace(chain, **overrides)
    variant = VARIANT_CHOICES[args.variant]
    draws = fit(data, priors_from_config(cp), chain, variant)
    out = Path(args.out)
    head = wio.header_line(wio.config_hash(cp), seed)
    wio.write_draws(out, draws, head, store_latent=not args.no_latent)
    summ = diagnostics(draws)
    (out / "diagnostics.csv").write_text(wio.summary_csv(summ, head))
    text = wio.summary_text(summ, f"{'WS' if variant == 'wrapped_skew' else 'W'} model, {len(draws)} draws")
    (out / "diagnostics.txt").write_text(head + text)
    print(text, end="")
    return 0


def cmd_predict(args):
    cp = _load_config(args.config)
    seed = _master_seed(args, cp)
    data = wio.read_dataset(args.data, degrees=args.degrees)
    draws = wio.read_draws(args.draws)
    if draws.winding is None:
        raise wio.DataFormatError("draws directory has no latent states (refit without --no-latent)")
    if draws.winding.shape[1:] != data.angles.shape:
        raise wio.DataFormatError("draws and dataset disagree on the site/time grid")
    if (args.horizon is None) == (args.at is None):
        raise wio.DataFormatError("give exactly one of --horizon or --at")
    pseed = derived_seed(seed, 20)
    if args.horizon is not None:
        sites = tuple(_int_list(args.sites)) if args.sites else None
        if sites is not None:
            unknown = [s for s in sites if s not in set(data.site_ids.tolist())]
            if unknown:
                raise wio.DataFormatError(f"unknown site id(s) {unknown}")
        pred = forecast(draws, data, ForecastRequest(args.horizon, sites), seed=pseed)
    else:
        coords = _coords(args.at)
        times = _int_list(args.times) if args.times else list(range(1, data.T + 1))
        bad = [t for t in times if not 1 <= t <= data.T]
        if bad:
            raise wio.DataFormatError(f"time(s) {bad} outside 1..{data.T}")
        keys = list(range(1, len(coords) + 1))
        pred = krige_many(draws, data, coords, times, seed=pseed, cov_form=args.cov_form, site_keys=keys)
    head = wio.header_line(wio.config_hash(cp), seed)
    Path(args.out).write_text(wio.predictive_to_csv(pred, head))
    print(f"wrote {len(pred)} predictive blocks to {args.out}")
    return 0


def cmd_score(args):
    data = wio.read_dataset(args.data, degrees=args.degrees)
    pred = wio.read_predictive(args.predictive)
    ids = set(data.site_ids.tolist())
    for sid, t in pred:
        if sid not in ids:
            raise wio.DataFormatError(f"unknown site id {sid} in predictive file")
        if not 1 <= t <= data.T:
            raise wio.DataFormatError(f"time {t} outside 1..{data.T}")
    scores = score_split(pred, data)
    lines = ["site_id,t,crps"]
    lines += [f"{sid},{t},{s!r}" for (sid, t), s in zip(sorted(pred), scores)]
    mean = math.fsum(scores) / len(scores)
    text = "\n".join(lines) + "\n" + f"# mean_crps={mean!r} points={len(scores)}\n"
    if args.out:
        Path(args.out).write_text(text)
    print(f"mean CRPS {mean:.6f} over {len(scores)} points")
    return 0


def cmd_experiment(args):
    cp = _load_config(args.config)
    cfg = experiment_from_config(cp, seed=_master_seed(args, cp), kmax=args.kmax, cov_form=args.cov_form)
    if not cfg.scenarios:
        raise wio.DataFormatError("config has no [scenario.*] sections")
    res = run_experiment(cfg, args.out)
    for name, d in res["summary"].items():
        for (v, s), m in sorted(d.items()):
            print(f"{name:<12} {v:<3} {s:<9} {m:.4f}")
    return 0


def cmd_moments(args):
    p = SkewNormalParams(args.mu, args.sigma2, args.lam)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    print(f"{'order':>5} {'alpha_closed':>14} {'alpha_mc':>14} {'beta_closed':>14} {'beta_mc':>14}")
    for order in range(1, args.order + 1):
        c = trig_moments_closed(p, order)
        m = trig_moments_mc(p, order, args.draws, rng)
        print(f"{order:>5} {c.alpha:>14.6f} {m.alpha:>14.6f} {c.beta:>14.6f} {m.beta:>14.6f}")
    s = circ_mean_conc(p)
    print(f"circular mean {s.mean_direction:.6f}  concentration {s.mean_resultant_length:.6f}")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="wrapskew", description="Dynamic wrapped skew Gaussian process toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--config", help="config file, or a shipped name: desk, paper, wave")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        if data:
            p.add_argument("--degrees", action="store_true", help="dataset theta column is in degrees")

    p = sub.add_parser("simulate", help="simulate every scenario of a config")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the WS or W model to a dataset")
    common(p, data=True)
    p.add_argument("data")
    p.add_argument("--variant", choices=("ws", "w"), default="ws")
    p.add_argument("--kmax", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--no-latent", action="store_true", help="do not store winding/X draws")
    p.add_argument("--out", required=True, help="draws directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="krige new sites or forecast observed sites")
    common(p, data=True)
    p.add_argument("--draws", required=True)
    p.add_argument("--data", required=True, help="dataset the draws were fitted to")
    p.add_argument("--horizon", type=int)
    p.add_argument("--sites", help="site ids for forecasting, e.g. 1,2,5-9")
    p.add_argument("--at", help="new site coordinates 'x,y;x,y'")
    p.add_argument("--times", help="times for kriging, e.g. 1-10")
    p.add_argument("--cov-form", choices=("exact", "paper"), default="exact")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="CRPS of predictive draws against observed angles")
    p.add_argument("--predictive", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--degrees", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("experiment", help="simulate, split, fit, predict and score")
    common(p)
    p.add_argument("--kmax", type=int)
    p.add_argument("--cov-form", choices=("exact", "paper"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("moments", help="closed-form vs Monte Carlo trig moments")
    p.add_argument("--mu", type=float, default=math.pi)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--draws", type=int, default=10**6)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_moments)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "variant", None) is not None:
        canonical_variant(args.variant)
    try:
        return args.func(args)
    except (NumericalError, OverflowError, linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
