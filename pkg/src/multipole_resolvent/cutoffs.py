"""Smooth cutoff functions (chi, chi_1 families) built from distances to a core set."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f0 = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        s = 1.0 - t
        f1 = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return f0 / (f0 + f1)


def smoothstep_derivative(t):
    """Derivative of :func:`smoothstep` in t."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    out = np.zeros_like(t)
    ti = t[inside]
    si = 1.0 - ti
    f0 = np.exp(-1.0 / ti)
    f1 = np.exp(-1.0 / si)
    df0 = f0 / ti**2
    df1 = -f1 / si**2
    den = f0 + f1
    out[inside] = (df0 * den - f0 * (df0 + df1)) / den**2
    return out


def _segment_distance(x, a, b):
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        return np.linalg.norm(x - a, axis=-1)
    t = np.clip(((x - a) @ ab) / L2, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(x - proj, axis=-1)


def hull_distance(x, core):
    """Euclidean distance from points x (..., d) to the convex hull of `core` (m, d).

    Exact for m <= 2 in any dimension and for any m in two dimensions.
    """
    x = np.asarray(x, dtype=float)
    core = np.atleast_2d(np.asarray(core, dtype=float))
    m, d = core.shape
    if m == 1:
        return np.linalg.norm(x - core[0], axis=-1)
    if m == 2:
        return _segment_distance(x, core[0], core[1])
    if d != 2:
        raise NotImplementedError("hull distance with more than two points needs d = 2")
    from scipy.spatial import ConvexHull

    hull = ConvexHull(core)
    verts = core[hull.vertices]
    dist = np.full(x.shape[:-1], np.inf)
    for i in range(len(verts)):
        dist = np.minimum(dist, _segment_distance(x, verts[i], verts[(i + 1) % len(verts)]))
    # inside the polygon the distance is zero
    inside = np.ones(x.shape[:-1], dtype=bool)
    for eq in hull.equations:
        inside &= (x @ eq[:2] + eq[2]) <= 0
    return np.where(inside, 0.0, dist)


@dataclass(frozen=True)
class Cutoff:
    """Bump equal to 1 within r_in of the core hull and 0 beyond r_out."""

    core: tuple
    r_in: float
    r_out: float

    def __post_init__(self):
        if not (0 <= self.r_in < self.r_out):
            raise ValueError("need 0 <= r_in < r_out")

    @classmethod
    def around(cls, points, r_in, r_out):
        pts = tuple(tuple(float(c) for c in p) for p in np.atleast_2d(points))
        return cls(pts, float(r_in), float(r_out))

    def __call__(self, x):
        dist = hull_distance(x, np.array(self.core))
        return 1.0 - smoothstep((dist - self.r_in) / (self.r_out - self.r_in))

    def radial(self, r):
        """Profile as a function of distance to the core."""
        return 1.0 - smoothstep((np.asarray(r, float) - self.r_in) / (self.r_out - self.r_in))

    @property
    def extent(self):
        """Radius (from the origin) of a ball containing the support."""
        c = np.array(self.core)
        return float(np.max(np.linalg.norm(c, axis=1)) + self.r_out)

    def describe(self):
        return {"core": [list(p) for p in self.core], "r_in": self.r_in, "r_out": self.r_out}
