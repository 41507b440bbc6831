"""Numeric extraction of equal-probability contours from a probability field.

Probes a callable p(points) -> values along rays from a center, bisecting
the first downward level crossing per ray, then summarizes the level set by
its second-moment ellipse.
"""

from __future__ import annotations

import numpy as np


def ray_directions(n_rays: int, d: int = 2) -> np.ndarray:
    """Evenly spaced unit directions (2-D only)."""
    if d != 2:
        raise ValueError("evenly spaced rays are only defined here for d=2")
    angles = np.linspace(0.0, 2.0 * np.pi, n_rays, endpoint=False)
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def level_crossing_radii(
    prob_fn,
    center: np.ndarray,
    level: float = 0.5,
    n_rays: int = 72,
    r_max: float = 20.0,
    n_march: int = 200,
    n_bisect: int = 60,
) -> tuple[np.ndarray, np.ndarray]:
    """Radius of the first downward crossing of `level` along each ray.

    Marches outward on a uniform radius grid to bracket the crossing, then
    bisects. Rays that never drop below the level within r_max come back as
    nan. Returns (radii, directions).
    """
    center = np.asarray(center, dtype=float)
    dirs = ray_directions(n_rays, center.shape[0])
    radii = np.full(n_rays, np.nan)
    march = np.linspace(0.0, r_max, n_march + 1)[1:]
    for k, u in enumerate(dirs):
        values = prob_fn(center[None, :] + march[:, None] * u[None, :])
        below = np.nonzero(values < level)[0]
        if below.size == 0:
            continue
        hi_idx = below[0]
        lo = 0.0 if hi_idx == 0 else march[hi_idx - 1]
        hi = march[hi_idx]
        for _ in range(n_bisect):
            mid = 0.5 * (lo + hi)
            if prob_fn(center[None, :] + mid * u[None, :])[0] < level:
                hi = mid
            else:
                lo = mid
        radii[k] = 0.5 * (lo + hi)
    return radii, dirs


def anisotropy_ratio(radii: np.ndarray) -> float:
    """max/min crossing radius, ignoring rays without a crossing."""
    finite = radii[np.isfinite(radii)]
    if finite.size == 0:
        raise ValueError("no level crossings found")
    return float(finite.max() / finite.min())


def ellipse_fit(radii: np.ndarray, dirs: np.ndarray, center: np.ndarray):
    """Second-moment summary of the level-set points center + r*u.

    Returns (axes, lengths): orthonormal principal directions (rows,
    descending) and the RMS extent along each.
    """
    mask = np.isfinite(radii)
    if mask.sum() < 3:
        raise ValueError("too few level-set points for an ellipse fit")
    points = radii[mask, None] * dirs[mask]
    moment = points.T @ points / points.shape[0]
    vals, vecs = np.linalg.eigh(moment)
    order = np.argsort(vals)[::-1]
    return vecs[:, order].T, np.sqrt(vals[order])


def angle_to_axis_deg(v: np.ndarray, axis: int) -> float:
    """Angle in degrees between a direction and a coordinate axis (as lines,
    i.e. sign-insensitive)."""
    v = np.asarray(v, dtype=float)
    cos = abs(v[axis]) / np.linalg.norm(v)
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
