"""Multipolar potentials: representation, hypothesis validation, effective radial data.

A potential is a bounded compactly supported background plus, near each pole
p_j, a local description V_j(|x - p_j|) + b_j(theta)/|x - p_j|^2.  Local
descriptions are exact on |x - p_j| <= l and fade out smoothly over a taper
band beyond l, so V is smooth away from the poles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .cutoffs import smoothstep
from .errors import DomainError, GeometryError, UndefinedQuotientError, UnsupportedConfiguration


# --------------------------------------------------------------------------
# radial profiles


@dataclass(frozen=True)
class RadialProfile:
    """Radial function V_j(r) on (0, l].

    `coefficient` is the leading inverse-square coefficient when the profile
    is exactly a/r^2 (None otherwise).
    """

    name: str
    func: Callable = field(repr=False, compare=False)
    coefficient: Optional[float] = None
    params: tuple = ()

    def __call__(self, r):
        return self.func(np.asarray(r, dtype=float))


def inverse_square(a: float) -> RadialProfile:
    a = float(a)
    return RadialProfile("inverse_square", lambda r: a / r**2, coefficient=a, params=(("a", a),))


def log_squared(a: float) -> RadialProfile:
    """a log(r)^2 / r^2: satisfies the lower bound but violates |V| <= C/r^2 near 0."""
    a = float(a)
    return RadialProfile(
        "log_squared_counterexample", lambda r: a * np.log(r) ** 2 / r**2, params=(("a", a),)
    )


def custom_table(r_table: Sequence[float], v_table: Sequence[float]) -> RadialProfile:
    """Piecewise-linear interpolant of (r, V) pairs, constant outside the table."""
    rt = np.asarray(r_table, dtype=float)
    vt = np.asarray(v_table, dtype=float)
    if rt.ndim != 1 or rt.shape != vt.shape or np.any(np.diff(rt) <= 0):
        raise ValueError("custom table needs strictly increasing r with matching V")
    return RadialProfile(
        "custom_table",
        lambda r: np.interp(r, rt, vt),
        params=(("r", tuple(rt)), ("V", tuple(vt))),
    )


@dataclass(frozen=True)
class AngularTable:
    """b(theta) on S^1 from uniform samples on [0, 2 pi), periodic linear interpolation."""

    samples: tuple

    @classmethod
    def from_array(cls, b):
        return cls(tuple(float(v) for v in np.asarray(b, dtype=float).ravel()))

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.samples)

    def __call__(self, theta):
        b = self.values
        n = b.size
        t = np.mod(np.asarray(theta, dtype=float), 2 * np.pi) * n / (2 * np.pi)
        i0 = np.floor(t).astype(int) % n
        w = t - np.floor(t)
        return (1 - w) * b[i0] + w * b[(i0 + 1) % n]


# --------------------------------------------------------------------------
# poles and backgrounds


@dataclass(frozen=True)
class Pole:
    position: tuple
    radial_profile: RadialProfile
    cutoff_radius: float
    angular_profile: Optional[AngularTable] = None
    taper: Optional[float] = None

    def __post_init__(self):
        if self.cutoff_radius <= 0:
            raise ValueError("cutoff radius must be positive")
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        if self.taper is None:
            object.__setattr__(self, "taper", float(self.cutoff_radius))
        if self.taper < 0:
            raise ValueError("taper must be nonnegative")

    @property
    def support_radius(self) -> float:
        return self.cutoff_radius + self.taper

    @property
    def is_radial(self) -> bool:
        return self.angular_profile is None

    def envelope(self, r):
        """1 on (0, l], smooth decay to 0 at l + taper."""
        r = np.asarray(r, dtype=float)
        if self.taper == 0:
            return (r <= self.cutoff_radius).astype(float)
        return 1.0 - smoothstep((r - self.cutoff_radius) / self.taper)

    def local_radial(self, r):
        """V_j(r) times the envelope (no angular part)."""
        r = np.asarray(r, dtype=float)
        inside = r < self.support_radius
        out = np.zeros_like(r)
        ri = r[inside]
        out[inside] = self.radial_profile(ri) * self.envelope(ri)
        return out

    def local(self, x):
        """Local contribution at points x (..., d)."""
        diff = np.asarray(x, dtype=float) - np.asarray(self.position)
        r = np.linalg.norm(diff, axis=-1)
        out = self.local_radial(r)
        if self.angular_profile is not None:
            inside = r < self.support_radius
            theta = np.arctan2(diff[..., 1], diff[..., 0])
            ang = np.zeros_like(r)
            ang[inside] = self.angular_profile(theta[inside]) / r[inside] ** 2 * self.envelope(r[inside])
            out = out + ang
        return out


@dataclass(frozen=True)
class Background:
    """Bounded background with declared support radius (about `center`).

    `radial_profile`, when given, makes the background radial about `center`.
    """

    name: str
    func: Callable = field(repr=False, compare=False)
    support_radius: float = 0.0
    center: tuple = (0.0, 0.0)
    radial_profile: Optional[Callable] = field(default=None, repr=False, compare=False)
    params: tuple = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x - np.asarray(self.center[: x.shape[-1]]), axis=-1)
        vals = np.asarray(self.func(x), dtype=float) * np.ones(r.shape)
        return np.where(r <= self.support_radius, vals, 0.0)

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"


def zero_background(d: int = 2) -> Background:
    return Background("zero", lambda x: np.zeros(np.asarray(x).shape[:-1]), 0.0, (0.0,) * d,
                      radial_profile=lambda r: np.zeros_like(np.asarray(r, float)))


def radial_background(name, profile, support_radius, d=2, params=()) -> Background:
    def f(x):
        return profile(np.linalg.norm(np.asarray(x, float), axis=-1))

    def prof(r):
        r = np.asarray(r, float)
        return np.where(r <= support_radius, profile(r), 0.0)

    return Background(name, f, float(support_radius), (0.0,) * d, radial_profile=prof, params=params)


def barrier_well(depth=50.0, height=50.0, r_well=(1.0, 2.0), r_barrier=(2.0, 2.5), d=2) -> Background:
    """V = -depth on r_well, +height on r_barrier, 0 elsewhere (trapping control)."""

    def profile(r):
        r = np.asarray(r, float)
        v = np.zeros_like(r)
        v[(r >= r_well[0]) & (r < r_well[1])] = -depth
        v[(r >= r_barrier[0]) & (r < r_barrier[1])] = height
        return v

    params = (("depth", depth), ("height", height), ("r_well", tuple(r_well)), ("r_barrier", tuple(r_barrier)))
    return radial_background("barrier_well", profile, r_barrier[1], d=d, params=params)


# --------------------------------------------------------------------------
# the full specification


@dataclass(frozen=True)
class PotentialSpec:
    dimension: int
    poles: tuple = ()
    background: Optional[Background] = None
    hardy_constant: float = 0.0
    bound_constant: float = 1.0
    gradient_constant: Optional[float] = None

    def __post_init__(self):
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        object.__setattr__(self, "poles", tuple(self.poles))
        if self.background is None:
            object.__setattr__(self, "background", zero_background(self.dimension))
        for p in self.poles:
            if len(p.position) != self.dimension:
                raise GeometryError("pole position dimension mismatch")
        for i, p in enumerate(self.poles):
            for j in range(i + 1, len(self.poles)):
                q = self.poles[j]
                sep = float(np.linalg.norm(np.subtract(p.position, q.position)))
                if sep <= p.support_radius + q.support_radius:
                    raise GeometryError(
                        f"poles {i} and {j} are {sep:.4g} apart; local supports "
                        f"({p.support_radius:.4g}, {q.support_radius:.4g}) overlap"
                    )

    @property
    def d(self) -> int:
        return self.dimension

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.poles], dtype=float).reshape(-1, self.dimension)

    @property
    def support_radius(self) -> float:
        """Radius about the origin of a ball containing supp V."""
        rad = self.background.support_radius + float(np.linalg.norm(self.background.center))
        if self.background.is_zero:
            rad = 0.0
        for p in self.poles:
            rad = max(rad, float(np.linalg.norm(p.position)) + p.support_radius)
        return rad

    def values(self, x) -> np.ndarray:
        """Vectorised V at points x (..., d); no pole check."""
        x = np.asarray(x, dtype=float)
        v = np.array(self.background(x), dtype=float)
        for p in self.poles:
            v = v + p.local(x)
        return v

    def is_unipolar_radial(self) -> bool:
        if len(self.poles) > 1:
            return False
        if self.poles:
            p = self.poles[0]
            if not p.is_radial or np.any(np.asarray(p.position) != 0):
                return False
        bg = self.background
        return bg.is_zero or (bg.radial_profile is not None and not np.any(np.asarray(bg.center) != 0))

    def radial_potential(self, r) -> np.ndarray:
        """V(r) for a unipolar radial configuration centered at the origin."""
        if not self.is_unipolar_radial():
            raise UnsupportedConfiguration("radial potential requires a single radial pole at the origin")
        r = np.asarray(r, dtype=float)
        v = np.zeros_like(r)
        if self.poles:
            v = v + self.poles[0].local_radial(r)
        if not self.background.is_zero:
            v = v + self.background.radial_profile(r)
        return v


def evaluate_potential(spec: PotentialSpec, x) -> float | np.ndarray:
    """V(x) = background(x) + sum of pole contributions.

    Raises DomainError if x coincides with a pole.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dimension:
        raise ValueError(f"points must have last dimension {spec.dimension}")
    for j, p in enumerate(spec.poles):
        hit = np.all(x == np.asarray(p.position), axis=-1)
        if np.any(hit):
            raise DomainError(f"V is undefined at pole {j} located at {p.position}")
    v = spec.values(x)
    return float(v) if v.ndim == 0 else v


# --------------------------------------------------------------------------
# hypothesis validation


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    worst_value: float
    worst_point: Optional[tuple] = None
    detail: str = ""
    failing_radius: Optional[float] = None


@dataclass(frozen=True)
class ValidationReport:
    entries: tuple
    dimension: int

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def __getitem__(self, name) -> HypothesisCheck:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def failures(self):
        return [e for e in self.entries if not e.passed]

    def names(self):
        return [e.name for e in self.entries]

    def summary(self) -> str:
        lines = []
        for e in self.entries:
            status = "pass" if e.passed else "FAIL"
            where = "" if e.worst_point is None else f" at {tuple(round(float(c), 8) for c in e.worst_point)}"
            lines.append(f"{e.name:18s} {status}  worst={e.worst_value:.6g}{where} {e.detail}".rstrip())
        return "\n".join(lines)


def _directions(d: int, n: int) -> np.ndarray:
    if d == 2:
        t = 2 * np.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if d == 3:
        # Fibonacci sphere
        i = np.arange(n) + 0.5
        z = 1 - 2 * i / n
        phi = np.pi * (1 + 5**0.5) * i
        s = np.sqrt(1 - z**2)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(0)
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def validate_hypotheses(spec: PotentialSpec, lattice_resolution: int = 16) -> ValidationReport:
    """Check the structural hypotheses on a validation lattice.

    Radial samples near each pole are logarithmic (16 per decade from l*1e-6
    to l) plus `lattice_resolution` uniform radii; directions number
    4*lattice_resolution.  Failures are report entries, never exceptions.
    """
    if lattice_resolution < 8:
        raise ValueError("lattice_resolution must be >= 8 points per cutoff radius")
    d = spec.dimension
    a = spec.hardy_constant
    CV = spec.bound_constant
    entries = []

    floor = a + (d / 2 - 1) ** 2
    # the floor only constrains the inverse-square singularities
    entries.append(HypothesisCheck(
        "positivity_floor", floor > 0 or not spec.poles, floor, None,
        f"HypV2: a + (d/2-1)^2 = {floor:.6g} must be > 0" + ("" if spec.poles else " (no poles: vacuous)")))

    bg = spec.background
    ok0 = math.isfinite(bg.support_radius) and bg.support_radius >= 0
    entries.append(HypothesisCheck("HypV0", ok0, bg.support_radius, None, "compact support radius of background"))

    # bounded away from poles: Cartesian lattice over bounding box of supp V
    R = max(spec.support_radius, 1e-12)
    step = min([p.cutoff_radius for p in spec.poles] + [R]) / lattice_resolution
    n1 = int(min(max(2 * R / step + 1, 3), {2: 401, 3: 61}.get(d, 21)))
    axes = [np.linspace(-R, R, n1)] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    mask = np.ones(len(pts), dtype=bool)
    for p in spec.poles:
        mask &= np.linalg.norm(pts - np.asarray(p.position), axis=1) > p.cutoff_radius
    vals = spec.values(pts[mask]) if mask.any() else np.zeros(1)
    sup = float(np.max(np.abs(vals))) if vals.size else 0.0
    entries.append(HypothesisCheck("HypV1", bool(np.all(np.isfinite(vals))), sup, None,
                                   "sup |V| away from the pole balls"))

    dirs = _directions(d, 4 * lattice_resolution)
    for j, p in enumerate(spec.poles):
        l = p.cutoff_radius
        radii = np.unique(np.concatenate([
            l * np.logspace(-6, 0, 16 * 6 + 1),
            l * np.arange(1, lattice_resolution + 1) / lattice_resolution,
        ]))
        pos = np.asarray(p.position)
        X = pos + radii[:, None, None] * dirs[None, :, :]
        V = spec.values(X)  # (nr, ndir)
        r2 = radii[:, None] ** 2

        # lower bound
        lower = V * r2 - a
        idx = np.unravel_index(np.argmin(lower), lower.shape)
        ok = lower[idx] >= -1e-9 * max(1.0, abs(a))
        bad_r = radii[np.any(lower < -1e-9 * max(1.0, abs(a)), axis=1)]
        entries.append(HypothesisCheck(
            f"HypV2[pole {j}]", bool(ok), float(lower[idx]), tuple(X[idx]),
            "min of r^2 V - a over |x-p| <= l",
            float(bad_r.max()) if bad_r.size else None))

        # upper bound
        upper = np.abs(V) * r2 - CV
        idx = np.unravel_index(np.argmax(upper), upper.shape)
        ok = upper[idx] <= 1e-9 * CV
        bad_r = radii[np.any(upper > 1e-9 * CV, axis=1)]
        entries.append(HypothesisCheck(
            f"HypV3[pole {j}]", bool(ok), float(upper[idx]), tuple(X[idx]),
            "max of r^2 |V| - C_V over |x-p| <= l",
            float(bad_r.max()) if bad_r.size else None))

        # gradient bound by centered differences, step r*1e-4
        if spec.gradient_constant is not None:
            hstep = radii[:, None, None] * 1e-4
            grad2 = np.zeros(V.shape)
            for c in range(d):
                e = np.zeros(d)
                e[c] = 1.0
                gp = spec.values(X + hstep * e)
                gm = spec.values(X - hstep * e)
                grad2 += ((gp - gm) / (2 * hstep[..., 0])) ** 2
            g = np.sqrt(grad2) * radii[:, None] ** 3 - spec.gradient_constant
            idx = np.unravel_index(np.argmax(g), g.shape)
            tol = 1e-6 * spec.gradient_constant
            bad_r = radii[np.any(g > tol, axis=1)]
            entries.append(HypothesisCheck(
                f"HypV4[pole {j}]", bool(g[idx] <= tol), float(g[idx]), tuple(X[idx]),
                "max of r^3 |grad V| - C_V'", float(bad_r.max()) if bad_r.size else None))

        # radial structure near the pole, or the angular (b >= 0) form
        if p.is_radial:
            spread = (V.max(axis=1) - V.min(axis=1)) * radii**2
            k = int(np.argmax(spread))
            scale = max(1.0, float(np.max(np.abs(V[k]))) * radii[k] ** 2)
            entries.append(HypothesisCheck(
                f"HypV5[pole {j}]", bool(spread[k] <= 1e-9 * scale), float(spread[k]),
                tuple(pos + radii[k] * dirs[0]), "angular spread of r^2 V on spheres"))
        else:
            bmin = float(np.min(p.angular_profile.values))
            entries.append(HypothesisCheck(
                f"HypV2'[pole {j}]", bmin >= 0, bmin, None, "angular coefficient b_j >= 0"))
    return ValidationReport(tuple(entries), d)


# --------------------------------------------------------------------------
# effective radial data


@dataclass(frozen=True)
class EffectiveRadialPotential:
    mode_index: int
    nu_k: float
    b_k: float
    sigma_k: float
    C1: float
    dimension: int
    local_radial: Callable = field(repr=False, compare=False)
    cutoff_radius: float = 1.0

    def W(self, r):
        """W_k(r) = V_j(r) + b_k / r^2 (the first-order-free radial potential)."""
        r = np.asarray(r, dtype=float)
        return self.local_radial(r) + self.b_k / r**2

    __call__ = W


def effective_radial(spec: PotentialSpec, pole_index: int, nu_k: float, *, mode_index: int = 0,
                     angular: bool = False) -> EffectiveRadialPotential:
    """Effective radial potential of mode nu_k near pole `pole_index`.

    For a pole with an angular profile, nu_k must be an eigenvalue root of
    H = -Delta_theta + b_j (pass angular=True).
    """
    if not 0 <= pole_index < len(spec.poles):
        raise IndexError("pole index out of range")
    pole = spec.poles[pole_index]
    if not pole.is_radial and not angular:
        raise UnsupportedConfiguration(
            "pole has an angular profile; nu_k must come from the angular eigenproblem (angular=True)")
    if nu_k < 0:
        raise ValueError("nu_k must be nonnegative")
    d = spec.dimension
    a = spec.hardy_constant
    b_k = nu_k**2 + (d * d - 4 * d + 3) / 4.0
    s2 = (d / 2 - 1) ** 2 + a + nu_k**2
    if s2 <= 0:
        raise UnsupportedConfiguration("sigma_k^2 <= 0: positivity floor violated")
    sigma = math.sqrt(s2)

    if spec.is_unipolar_radial() and pole_index == 0:
        local = spec.radial_potential
    else:
        local = pole.local_radial
    l = pole.cutoff_radius
    rs = l * np.logspace(-6, 0, 193)
    C1 = float(np.max(np.abs(rs**2 * local(rs) + b_k)))
    return EffectiveRadialPotential(mode_index, float(nu_k), float(b_k), sigma, C1, d, local, l)


# --------------------------------------------------------------------------
# Hardy quotient


def hardy_quotient(d: int, trial_field) -> float:
    """int |grad u|^2 / int |u|^2/|x|^2 for a radial trial field.

    `trial_field` is a pair (r_nodes, values) read as a continuous
    piecewise-linear function (constant on [0, r_0] if r_0 > 0) that vanishes
    at the last node.  Both integrals are evaluated exactly, so the result
    is the quotient of a genuine H^1 function.
    """
    if d < 3:
        raise ValueError("hardy_quotient needs d >= 3")
    r, u = trial_field
    r = np.asarray(r, dtype=float)
    u = np.asarray(u)
    if r.ndim != 1 or r.shape != u.shape or np.any(np.diff(r) <= 0) or r[0] < 0:
        raise ValueError("trial field needs increasing nonnegative nodes with matching values")
    if u[-1] != 0:
        raise ValueError("trial field must vanish at the outer grid boundary")
    if not np.any(u != 0):
        raise UndefinedQuotientError("identically zero trial field")
    dr = np.diff(r)
    du = np.diff(u)
    num = np.sum(np.abs(du / dr) ** 2 * (r[1:] ** d - r[:-1] ** d) / d)

    # exact Gauss-Legendre for polynomial integrands of degree <= 7
    gx, gw = np.polynomial.legendre.leggauss(4)
    t = 0.5 * (gx + 1.0)
    rr = r[:-1, None] + dr[:, None] * t[None, :]
    uu = u[:-1, None] + du[:, None] * t[None, :]
    den = np.sum(0.5 * dr[:, None] * gw[None, :] * np.abs(uu) ** 2 * rr ** (d - 3))
    if r[0] > 0:
        den += abs(u[0]) ** 2 * r[0] ** (d - 2) / (d - 2)
    if den == 0:
        raise UndefinedQuotientError("vanishing denominator")
    return float(num / den)


def hardy_constant(d: int) -> float:
    return (d / 2 - 1) ** 2
