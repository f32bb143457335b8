"""File formats: dataset CSV, truth sidecar, posterior and predictive draws, configs.

Every text output begins with a ``# config_hash=<hex> seed=<int>`` comment
line; readers skip lines starting with ``#``.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .mcmc import PosteriorDraws, canonical_variant, variant_params
from .spacetime import ModelParams, SimTruth, SiteSet, SpaceTimeDataset

DATASET_COLUMNS = ("site_id", "x", "y", "t", "theta")
PREDICTIVE_COLUMNS = ("site_id", "t", "draw", "linear", "theta")


class DataFormatError(ValueError):
    """Malformed input file; the message names the line or column."""


def header_line(config_hash: str, seed) -> str:
    return f"# config_hash={config_hash} seed={seed}\n"


def _fmt(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# configs


def config_text(path_or_name) -> str:
    """Read a config file; bare names ``desk`` / ``paper`` resolve to the shipped files."""
    p = Path(path_or_name)
    if p.exists():
        return p.read_text()
    name = str(path_or_name)
    if not name.endswith(".cfg"):
        name += ".cfg"
    try:
        return resources.files("wrapskew").joinpath("configs", name).read_text()
    except FileNotFoundError:
        raise DataFormatError(f"config {path_or_name!r} not found") from None


def parse_config(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise DataFormatError(f"invalid config: {exc}") from None
    return cp


def config_hash(cp: configparser.ConfigParser) -> str:
    """Short hash of the normalized config content (section and key order ignored)."""
    canon = {s: dict(sorted(cp[s].items())) for s in sorted(cp.sections())}
    blob = json.dumps(canon, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# dataset CSV


def dataset_to_csv(dataset: SpaceTimeDataset, header: str = "") -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_COLUMNS)
    for i in range(dataset.n):
        x, y = dataset.sites.coords[i]
        for t in range(dataset.T):
            w.writerow([int(dataset.site_ids[i]), _fmt(x), _fmt(y), t + 1, _fmt(dataset.angles[i, t])])
    return buf.getvalue()


def write_dataset(path, dataset: SpaceTimeDataset, header: str = ""):
    Path(path).write_text(dataset_to_csv(dataset, header))


def _data_lines(text):
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() and not line.lstrip().startswith("#"):
            yield lineno, line


def read_dataset(path, degrees: bool = False) -> SpaceTimeDataset:
    """Parse and validate a dataset CSV (complete site-by-time grid)."""
    text = Path(path).read_text()
    lines = list(_data_lines(text))
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    head_no, head = lines[0]
    cols = [c.strip() for c in next(csv.reader([head]))]
    missing = [c for c in DATASET_COLUMNS if c not in cols]
    if missing:
        raise DataFormatError(f"{path}: missing column(s) {', '.join(missing)}")
    pos = {c: cols.index(c) for c in DATASET_COLUMNS}
    records = {}
    coords = {}
    for lineno, line in lines[1:]:
        row = next(csv.reader([line]))
        if len(row) != len(cols):
            raise DataFormatError(f"line {lineno}: expected {len(cols)} fields, got {len(row)}")
        try:
            sid = int(row[pos["site_id"]])
            x = float(row[pos["x"]])
            y = float(row[pos["y"]])
            t = int(row[pos["t"]])
            theta = float(row[pos["theta"]])
        except ValueError as exc:
            raise DataFormatError(f"line {lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in (x, y, theta)):
            raise DataFormatError(f"line {lineno}: non-finite value")
        if degrees:
            if not 0.0 <= theta < 360.0:
                raise DataFormatError(f"line {lineno}: theta={theta} outside [0, 360) degrees")
            theta = math.radians(theta)
            if theta >= 2.0 * math.pi:
                theta = 0.0
        elif not 0.0 <= theta < 2.0 * math.pi:
            raise DataFormatError(f"line {lineno}: theta={theta} outside [0, 2*pi)")
        if t < 1:
            raise DataFormatError(f"line {lineno}: t must be >= 1")
        if sid in coords and coords[sid] != (x, y):
            raise DataFormatError(f"line {lineno}: site {sid} has inconsistent coordinates")
        coords[sid] = (x, y)
        if (sid, t) in records:
            raise DataFormatError(f"line {lineno}: duplicate (site_id={sid}, t={t})")
        records[(sid, t)] = theta
    if not records:
        raise DataFormatError(f"{path}: no data rows")
    ids = sorted(coords)
    T = max(t for _, t in records)
    angles = np.empty((len(ids), T))
    for i, sid in enumerate(ids):
        for t in range(1, T + 1):
            if (sid, t) not in records:
                raise DataFormatError(f"{path}: incomplete grid, site {sid} has no row for t={t}")
            angles[i, t - 1] = records[(sid, t)]
    sites = SiteSet(np.array([coords[s] for s in ids]))
    return SpaceTimeDataset(sites, angles, np.array(ids))


# ---------------------------------------------------------------------------
# truth sidecar


def write_truth(path, truth: SimTruth, header_info: dict | None = None):
    doc = {
        "meta": header_info or {},
        "params": truth.params.as_dict(),
        "site_ids": [int(s) for s in truth.dataset.site_ids],
        "latent_x": truth.latent_x.tolist(),
        "latent_z": truth.latent_z.tolist(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_truth(path) -> dict:
    doc = json.loads(Path(path).read_text())
    doc["params"] = ModelParams(**doc["params"])
    doc["latent_x"] = np.asarray(doc["latent_x"])
    doc["latent_z"] = np.asarray(doc["latent_z"])
    return doc


# ---------------------------------------------------------------------------
# posterior draws directory


def write_draws(directory, draws: PosteriorDraws, header: str = "", store_latent: bool = True):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = draws.param_names
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["draw", *names])
    for b in range(len(draws)):
        w.writerow([b, *(_fmt(draws.params[k][b]) for k in names)])
    (d / "draws.csv").write_text(buf.getvalue())
    latent = store_latent and draws.winding is not None
    if latent:
        np.save(d / "winding.npy", draws.winding)
        if draws.x_field is not None:
            np.save(d / "x_field.npy", draws.x_field)
    meta = {
        "variant": draws.variant,
        "kmax": draws.kmax,
        "acceptance": {k: (None if math.isnan(v) else v) for k, v in draws.acceptance.items()},
        "latent_stored": bool(latent),
        "header": header.strip(),
        **{k: v for k, v in draws.meta.items() if k != "proposal_scales"},
        "proposal_scales": draws.meta.get("proposal_scales", {}),
    }
    (d / "draws_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def read_draws(directory) -> PosteriorDraws:
    d = Path(directory)
    meta = json.loads((d / "draws_meta.json").read_text())
    variant = canonical_variant(meta["variant"])
    lines = [ln for _, ln in _data_lines((d / "draws.csv").read_text())]
    rows = list(csv.reader(lines))
    head, body = rows[0], rows[1:]
    names = variant_params(variant)
    if tuple(head[1:]) != tuple(names):
        raise DataFormatError(f"{d / 'draws.csv'}: columns {head[1:]} do not match variant {variant}")
    arr = np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), len(names))
    params = {k: arr[:, j].copy() for j, k in enumerate(names)}
    winding = np.load(d / "winding.npy") if (d / "winding.npy").exists() else None
    x_field = np.load(d / "x_field.npy") if (d / "x_field.npy").exists() else None
    acc = {k: (float("nan") if v is None else v) for k, v in meta.get("acceptance", {}).items()}
    return PosteriorDraws(variant, params, winding, x_field, acc, meta.get("kmax", 3), {})


# ---------------------------------------------------------------------------
# predictive draws and score files


def predictive_to_csv(predictive: dict, header: str = "") -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PREDICTIVE_COLUMNS)
    for (sid, t), pred in sorted(predictive.items()):
        for b, (z, th) in enumerate(zip(pred.linear, pred.angles)):
            w.writerow([sid, t, b, _fmt(z), _fmt(th)])
    return buf.getvalue()


def read_predictive(path) -> dict:
    from .prediction import PredictiveDraws

    lines = [ln for _, ln in _data_lines(Path(path).read_text())]
    rows = list(csv.reader(lines))
    if tuple(rows[0]) != PREDICTIVE_COLUMNS:
        raise DataFormatError(f"{path}: expected columns {PREDICTIVE_COLUMNS}")
    groups = {}
    for r in rows[1:]:
        groups.setdefault((int(r[0]), int(r[1])), []).append(float(r[3]))
    return {k: PredictiveDraws(np.array(v), k[0], k[1]) for k, v in groups.items()}


def summary_csv(summary: dict, header: str = "") -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter", "mean", "ci_lower", "ci_upper", "acceptance", "ess"])
    for k, s in summary.items():
        w.writerow([k, _fmt(s.mean), _fmt(s.lower), _fmt(s.upper), _fmt(s.acceptance), _fmt(s.ess)])
    return buf.getvalue()


def summary_text(summary: dict, title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"{'':<8}{'mean':>10}{'C.I.':>22}{'acc':>8}{'ESS':>9}")
    for k, s in summary.items():
        ci = f"({s.lower:.3f}, {s.upper:.3f})"
        acc = "-" if math.isnan(s.acceptance) else f"{s.acceptance:.2f}"
        lines.append(f"{k:<8}{s.mean:>10.3f}{ci:>22}{acc:>8}{s.ess:>9.0f}")
    return "\n".join(lines) + "\n"
