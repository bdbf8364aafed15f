"""Circular arithmetic on the unit ring [0, 1)."""
from __future__ import annotations

import math

import numpy as np


def circular_error(x, y):
    """Distance on the unit circle, in [0, 0.5]."""
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) % 1.0
    out = np.minimum(d, 1.0 - d)
    return float(out) if out.ndim == 0 else out


def weighted_circular_mean(positions, weights) -> tuple[float, float]:
    """(mean position in [0, 1), resultant length / total weight)."""
    positions = np.asarray(positions, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        return math.nan, 0.0
    ang = 2.0 * np.pi * positions
    s = float(weights @ np.sin(ang))
    c = float(weights @ np.cos(ang))
    r = math.hypot(s, c) / total
    return (math.atan2(s, c) / (2.0 * np.pi)) % 1.0, r


def preferred_positions(pre, post, w, n_pre: int, n_post: int) -> np.ndarray:
    """Weight-weighted circular mean of presynaptic ring positions, per target.

    Targets without incoming weight get NaN. On a vanishing resultant the
    position of the strongest synapse (lowest index on ties) is used.
    """
    ang = 2.0 * np.pi * np.asarray(pre, dtype=float) / n_pre
    tot = np.bincount(post, weights=w, minlength=n_post)
    s = np.bincount(post, weights=w * np.sin(ang), minlength=n_post)
    c = np.bincount(post, weights=w * np.cos(ang), minlength=n_post)
    out = (np.arctan2(s, c) / (2.0 * np.pi)) % 1.0
    out[tot <= 0] = np.nan
    flat = (np.hypot(s, c) <= 1e-9 * tot) & (tot > 0)
    for j in np.flatnonzero(flat):
        sel = np.flatnonzero(post == j)
        best = sel[np.lexsort((pre[sel], -w[sel]))[0]]
        out[j] = pre[best] / n_pre
    return out
