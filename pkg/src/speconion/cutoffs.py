"""Smooth compactly supported cutoffs built from the exp(-1/t) mollifier."""

import numpy as np


def _edge(t):
    # exp(-1/t) for t > 0, exactly 0 otherwise
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def bump(t):
    """exp(-1/(1-t^2)) on |t| < 1, zero elsewhere (unnormalised)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, monotone in between."""
    a = _edge(t)
    b = _edge(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def plateau(x, inner, outer):
    """Even cutoff equal to 1 on |x| <= inner and 0 on |x| >= outer."""
    if not 0 <= inner < outer:
        raise ValueError("need 0 <= inner < outer")
    r = np.abs(np.asarray(x, dtype=float))
    return smooth_step((outer - r) / (outer - inner))


def band_cutoff(x, lo, hi, lo_support, hi_support):
    """Cutoff in |x|: 1 on [lo, hi], 0 outside (lo_support, hi_support).

    Exact zeros outside the support matter: symbol arithmetic relies on
    them to decide whether a shifted value is ever needed.
    """
    if not (0 <= lo_support < lo <= hi < hi_support):
        raise ValueError("cutoff needs lo_support < lo <= hi < hi_support")
    r = np.abs(np.asarray(x, dtype=float))
    up = smooth_step((r - lo_support) / (lo - lo_support))
    down = smooth_step((hi_support - r) / (hi_support - hi))
    return up * down
