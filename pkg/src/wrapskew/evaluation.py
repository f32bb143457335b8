"""Circular CRPS, the Rayleigh uniformity test, and validation splits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .circular import circ_distance
from .spacetime import SpaceTimeDataset

SPLIT_TYPES = ("spatial", "temporal")


def crps_circular(draws, holdout: float, method: str = "fast") -> float:
    """Draw-based circular CRPS with distance ``1 - cos(a - b)``.

    ``mean_b d(theta_b, y) - (1 / (2 B**2)) sum_{l,b} d(theta_l, theta_b)``.

    ``method="pairwise"`` evaluates the double sum directly in O(B**2);
    ``method="fast"`` uses ``sum_{l,b} cos(theta_l - theta_b) = |sum exp(i theta)|**2``
    and is O(B).
    """
    theta = np.asarray(getattr(draws, "angles", draws), dtype=float).ravel()
    B = theta.size
    if B < 2:
        raise ValueError("CRPS needs at least two draws")
    first = float(np.mean(circ_distance(theta, holdout)))
    if method == "pairwise":
        pair_sum = float(circ_distance(theta[:, None], theta[None, :]).sum())
    elif method == "fast":
        s, c = np.sin(theta).sum(), np.cos(theta).sum()
        pair_sum = B * B - (s * s + c * c)
    else:
        raise ValueError(f"unknown method {method!r}")
    return max(first - pair_sum / (2.0 * B * B), 0.0)


def rayleigh_test(samples):
    """Rayleigh test of circular uniformity.

    Returns ``(Z, p)`` with ``Z = n * Rbar**2`` and the p-value from the
    second-order series approximation.
    """
    theta = np.asarray(samples, dtype=float).ravel()
    n = theta.size
    if n < 2:
        raise ValueError("the Rayleigh test needs n >= 2")
    rbar = math.hypot(np.cos(theta).sum(), np.sin(theta).sum()) / n
    z = n * rbar**2
    p = math.exp(-z) * (
        1.0 + (2.0 * z - z**2) / (4.0 * n) - (24.0 * z - 132.0 * z**2 + 76.0 * z**3 - 9.0 * z**4) / (288.0 * n**2)
    )
    return z, float(min(max(p, 0.0), 1.0))


@dataclass(frozen=True)
class ValidationSplit:
    train_sites: tuple  # site ids
    holdout_sites: tuple
    train_times: tuple  # (first, last), 1-based inclusive
    holdout_times: tuple
    seed: int
    repetition: int = 0

    def indices(self, dataset: SpaceTimeDataset):
        ids = list(dataset.site_ids)
        return [ids.index(s) for s in self.train_sites], [ids.index(s) for s in self.holdout_sites]

    def training_data(self, dataset: SpaceTimeDataset) -> SpaceTimeDataset:
        tr, _ = self.indices(dataset)
        a, b = self.train_times
        return dataset.subset(tr, slice(a - 1, b))


def make_splits(dataset, fraction_sites=0.9, train_times=None, repetitions=40, seed=0):
    """Random site partitions with a common time cut.

    Training uses ``round(fraction_sites * n)`` sites and times
    ``1..train_times`` (default ``T - 10``).
    """
    n, T = dataset.n, dataset.T
    if not 0.0 < fraction_sites < 1.0:
        raise ValueError("fraction_sites must lie in (0, 1)")
    train_times = T - 10 if train_times is None else int(train_times)
    if not 1 <= train_times < T:
        raise ValueError("need 1 <= train_times < T")
    n_train = int(round(fraction_sites * n))
    if not 1 <= n_train < n:
        raise ValueError("fraction leaves no training or no held-out sites")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    rng = np.random.default_rng(seed)
    ids = np.asarray(dataset.site_ids)
    out = []
    for r in range(repetitions):
        perm = rng.permutation(n)
        tr = tuple(int(i) for i in np.sort(ids[perm[:n_train]]))
        ho = tuple(int(i) for i in np.sort(ids[perm[n_train:]]))
        out.append(ValidationSplit(tr, ho, (1, train_times), (train_times + 1, T), seed, r))
    return out


@dataclass
class ScoreTable:
    """Per-point CRPS keyed by ``(variant, split_type)``."""

    scores: dict = field(default_factory=dict)

    def add(self, variant, split_type, values):
        self.scores.setdefault((variant, split_type), []).extend(float(v) for v in np.ravel(values))

    def mean(self, variant, split_type) -> float:
        vals = self.scores.get((variant, split_type))
        if not vals:
            raise KeyError(f"no scores for {(variant, split_type)}")
        return math.fsum(vals) / len(vals)

    def rows(self):
        return [(v, s, self.mean(v, s), len(vals)) for (v, s), vals in sorted(self.scores.items())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "split", "mean_crps", "points"])
        for v, s, m, k in self.rows():
            w.writerow([v, s, repr(m), k])
        return buf.getvalue()

    def to_text(self) -> str:
        variants = sorted({v for v, _ in self.scores})
        splits = [s for s in SPLIT_TYPES if any((v, s) in self.scores for v in variants)]
        lines = [f"{'':<12}" + "".join(f"{v:>16}" for v in variants)]
        for s in splits:
            cells = []
            for v in variants:
                cells.append(f"{self.mean(v, s):>16.4f}" if (v, s) in self.scores else f"{'-':>16}")
            lines.append(f"{s:<12}" + "".join(cells))
        return "\n".join(lines) + "\n"


def score_split(predictive: dict, dataset: SpaceTimeDataset) -> list:
    """CRPS of each ``{(site_id, t): PredictiveDraws}`` entry against ``dataset``."""
    ids = list(dataset.site_ids)
    out = []
    for (sid, t), pred in sorted(predictive.items()):
        out.append(crps_circular(pred, dataset.angles[ids.index(sid), t - 1]))
    return out


def score_models(fits: dict, splits, dataset: SpaceTimeDataset, predict_fn) -> ScoreTable:
    """Score fitted variants over validation splits.

    ``fits[(variant, repetition)]`` holds posterior draws for the split's
    training data; ``predict_fn(draws, split, split_type)`` returns the
    predictive dictionary for that split type.
    """
    table = ScoreTable()
    for split in splits:
        for variant in sorted({v for v, _ in fits}):
            key = (variant, split.repetition)
            if key not in fits:
                raise KeyError(f"missing fit for {key}")
            for split_type in SPLIT_TYPES:
                pred = predict_fn(fits[key], split, split_type)
                table.add(variant, split_type, score_split(pred, dataset))
    return table
