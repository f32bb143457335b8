"""Angle arithmetic and circular summaries.

All angles are radians. Functions accept scalars or numpy arrays and are
vectorized where that makes sense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


class UndefinedDirectionError(ValueError):
    """Raised when a resultant vector has zero length."""


def wrap(z):
    """Map real values onto ``[0, 2*pi)``.

    Parameters
    ----------
    z : float or array_like
        Linear values in radians. Must be finite.

    Returns
    -------
    float or np.ndarray
        ``z mod 2*pi``, guaranteed strictly below ``2*pi``.
    """
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("wrap() requires finite input")
    out = np.mod(arr, TWO_PI)
    # mod of values just below a multiple of 2*pi can round up to 2*pi
    out = np.where(out >= TWO_PI, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def atan_star(sin_sum, cos_sum):
    """Direction of the resultant vector ``(cos_sum, sin_sum)`` in ``[0, 2*pi)``."""
    s = np.asarray(sin_sum, dtype=float)
    c = np.asarray(cos_sum, dtype=float)
    if np.any((s == 0.0) & (c == 0.0)):
        raise UndefinedDirectionError("zero resultant has no direction")
    return wrap(np.arctan2(s, c))


def circ_distance(a, b):
    """Circular distance ``1 - cos(a - b)``, in ``[0, 2]``."""
    return 1.0 - np.cos(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


@dataclass(frozen=True)
class CircularSummary:
    mean_direction: float
    mean_resultant_length: float

    def __post_init__(self):
        if not 0.0 <= self.mean_direction < TWO_PI:
            raise ValueError("mean_direction must lie in [0, 2*pi)")
        if not 0.0 <= self.mean_resultant_length <= 1.0 + 1e-12:
            raise ValueError("mean_resultant_length must lie in [0, 1]")


def circ_summary(samples, tol=1e-12) -> CircularSummary:
    """Sample mean direction and mean resultant length.

    A resultant whose length is below ``tol`` (relative to the sample size)
    is treated as zero and raises :class:`UndefinedDirectionError`.
    """
    theta = np.asarray(samples, dtype=float).ravel()
    if theta.size == 0:
        raise ValueError("circ_summary() needs at least one angle")
    s = np.sin(theta).sum()
    c = np.cos(theta).sum()
    length = np.hypot(s, c) / theta.size
    if length < tol:
        raise UndefinedDirectionError(
            f"mean resultant length {length:.3g} is zero; direction undefined"
        )
    return CircularSummary(atan_star(s, c), min(float(length), 1.0))
