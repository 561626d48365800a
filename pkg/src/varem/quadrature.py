"""Composite and adaptive Gauss-Legendre quadrature on kink-free panels."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

ORDER = 10
MAX_LEVELS = 40


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def clean_breaks(breaks, lo: float, hi: float, rel_tol: float = 1e-12) -> np.ndarray:
    """Sorted break points inside ``[lo, hi]`` with near-duplicates merged."""
    pts = np.asarray(breaks, dtype=float).ravel()
    pts = pts[(pts > lo) & (pts < hi)]
    pts = np.unique(np.concatenate([[lo], pts, [hi]]))
    tol = rel_tol * (1.0 + np.abs(pts))
    keep = np.concatenate([[True], np.diff(pts) > tol[1:]])
    pts = pts[keep]
    pts[-1] = hi
    return pts


def panel_points(a: np.ndarray, b: np.ndarray, order: int = ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes and weights on each panel ``[a_k, b_k]``; shapes ``(k, order)``."""
    x, w = gauss_legendre(order)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    return mid[:, None] + half[:, None] * x[None, :], half[:, None] * w[None, :]


def fixed_rule(breaks, order: int = ORDER, subdivisions: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Flattened nodes/weights of a composite rule over consecutive breaks."""
    breaks = np.asarray(breaks, dtype=float)
    a, b = breaks[:-1], breaks[1:]
    if subdivisions > 1:
        frac = np.linspace(0.0, 1.0, subdivisions + 1)
        edges = a[:, None] + (b - a)[:, None] * frac[None, :]
        a, b = edges[:, :-1].ravel(), edges[:, 1:].ravel()
    pts, wts = panel_points(a, b, order)
    return pts.ravel(), wts.ravel()


def integrate(func, breaks, tol: float = 1e-10, order: int = ORDER) -> tuple[float, float]:
    """Adaptive panel-halving Gauss-Legendre quadrature.

    ``func`` maps an array of times to an array of values (leading axis).
    Each panel is accepted once the one-panel and two-half-panel estimates
    agree within its share of ``tol`` (proportional to its length).  Returns
    ``(value, error_estimate)``; accumulation uses ``math.fsum``.
    """
    breaks = np.asarray(breaks, dtype=float)
    a, b = breaks[:-1], breaks[1:]
    total_len = float(breaks[-1] - breaks[0])
    if total_len <= 0:
        return 0.0, 0.0
    accepted: list[float] = []
    errors: list[float] = []
    for level in range(MAX_LEVELS):
        mid = 0.5 * (a + b)
        p_whole, w_whole = panel_points(a, b, order)
        p_left, w_left = panel_points(a, mid, order)
        p_right, w_right = panel_points(mid, b, order)
        pts = np.concatenate([p_whole, p_left, p_right], axis=1)
        vals = np.asarray(func(pts.ravel()), dtype=float).reshape(pts.shape)
        k = order
        whole = np.sum(w_whole * vals[:, :k], axis=1)
        halves = np.sum(w_left * vals[:, k:2 * k], axis=1) + np.sum(w_right * vals[:, 2 * k:], axis=1)
        err = np.abs(whole - halves)
        local = tol * (b - a) / total_len
        floor = 4 * np.finfo(float).eps * np.abs(halves)
        ok = (err <= np.maximum(local, floor)) | (level == MAX_LEVELS - 1)
        accepted.extend(halves[ok].tolist())
        errors.extend(err[ok].tolist())
        if np.all(ok):
            break
        a, b = np.concatenate([a[~ok], mid[~ok]]), np.concatenate([mid[~ok], b[~ok]])
    return math.fsum(accepted), math.fsum(errors)
