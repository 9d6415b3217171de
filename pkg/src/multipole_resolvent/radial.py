"""Singular radial ODE tools: asymptotic bases, energy estimates, weighted norms.

The basis works in the logarithmic variable s = -log r with y = r^{1/2} z(s),
which turns y'' = (q1 + i q2) y into z'' = Q(s) z with
Q = 1/4 + e^{-2s} (q1 + i q2)(e^{-s}).  The dominant solution z_- is carried
in Riccati form (w = z'/z, log z), so large exponents never overflow.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import DegenerateBasisError, HypothesisError, NotASolutionError


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class RadialGrid:
    """Increasing positive radii; geometric near 0, uniform beyond."""

    r_values: np.ndarray
    policy: str = "custom"
    per_decade: int = 0
    spacing: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.r_values, dtype=float)
        if r.ndim != 1 or r.size < 3 or r[0] <= 0 or np.any(np.diff(r) <= 0):
            raise ValueError("radial grid must be strictly increasing and positive")
        object.__setattr__(self, "r_values", r)

    @classmethod
    def graded(cls, r_min: float, r_max: float, spacing: float, per_decade: int = 64) -> "RadialGrid":
        """Geometric from r_min (ratio 10^(1/per_decade)) until the step reaches
        `spacing`, then uniform with that spacing up to r_max."""
        if per_decade < 64:
            raise ValueError("need at least 64 points per decade in the log region")
        q = 10 ** (1.0 / per_decade)
        r_switch = spacing / (q - 1)
        pts = []
        if r_min < r_switch:
            n = int(math.floor(math.log(min(r_switch, r_max) / r_min) / math.log(q)))
            pts.append(r_min * q ** np.arange(n + 1))
        start = pts[0][-1] if pts else r_min
        if start < r_max:
            n = max(1, int(math.ceil((r_max - start) / spacing)))
            pts.append(start + (r_max - start) * np.arange(1, n + 1) / n)
        return cls(np.concatenate(pts), "log-then-uniform", per_decade, float(spacing))

    @classmethod
    def logarithmic(cls, r_min: float, r_max: float, per_decade: int = 64) -> "RadialGrid":
        n = int(math.ceil(per_decade * math.log10(r_max / r_min)))
        return cls(np.geomspace(r_min, r_max, n + 1), "log", per_decade, 0.0)

    @property
    def r_min(self) -> float:
        return float(self.r_values[0])

    @property
    def r_max(self) -> float:
        return float(self.r_values[-1])

    @property
    def faces(self) -> np.ndarray:
        """Cell faces for the form (finite-volume) discretization: 0 then r_values."""
        return np.concatenate([[0.0], self.r_values])

    def decades(self) -> float:
        return math.log10(self.r_max / self.r_min)


# --------------------------------------------------------------------------
# Lemma-type ODE basis


@dataclass(frozen=True)
class OdeCoefficients:
    """y'' = (q1 + i q2) y on (0, l], with q1 >= b/r^2, |q_j| <= C/r^2."""

    q1: Callable
    q2: Callable
    b: float
    C: float

    def __post_init__(self):
        if not self.b > -0.25:
            raise HypothesisError("floor b must exceed -1/4", "Hyp.q1")

    @property
    def B(self) -> float:
        return self.b + 0.25

    def check(self, r) -> None:
        r = np.asarray(r, float)
        q1 = np.asarray(self.q1(r), float)
        q2 = np.asarray(self.q2(r), float)
        low = r**2 * q1 - self.b
        if np.any(low < -1e-10 * max(1.0, abs(self.b))):
            i = int(np.argmin(low))
            raise HypothesisError(f"q1 below b/r^2 at r={r[i]:.4g}", "Hyp.q1")
        big = np.maximum(np.abs(q1), np.abs(q2)) * r**2 - self.C
        if np.any(big > 1e-10 * self.C):
            i = int(np.argmax(big))
            raise HypothesisError(f"|q| above C/r^2 at r={r[i]:.4g}", "Hyp.q")


@dataclass(frozen=True)
class AsymptoticBasis:
    r: np.ndarray
    y_plus: np.ndarray
    y_minus: np.ndarray
    dy_plus: np.ndarray
    dy_minus: np.ndarray
    sqrtB: float
    wronskian: complex
    log_abs_y_plus: np.ndarray = field(repr=False, default=None)
    log_abs_y_minus: np.ndarray = field(repr=False, default=None)
    Z_minus: np.ndarray = field(repr=False, default=None)
    s: np.ndarray = field(repr=False, default=None)

    def wronskian_profile(self) -> np.ndarray:
        return self.dy_plus * self.y_minus - self.y_plus * self.dy_minus

    def wronskian_drift_per_decade(self) -> float:
        W = self.wronskian_profile()
        dec = math.log10(self.r[-1] / self.r[0])
        return float(np.max(np.abs(W - W[-1])) / abs(W[-1]) / max(dec, 1.0))

    def fitted_exponents(self, decades: float = 2.0):
        """Slopes of log|y+-| against log r over the smallest `decades` decades."""
        sel = self.r <= self.r[0] * 10**decades
        x = np.log(self.r[sel])
        sp = np.polyfit(x, self.log_abs_y_plus[sel], 1)[0]
        sm = np.polyfit(x, self.log_abs_y_minus[sel], 1)[0]
        return float(sp), float(sm)

    def export(self, path) -> None:
        ep, em = self.fitted_exponents()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "re_y_plus", "im_y_plus", "abs_y_plus", "re_y_minus", "im_y_minus",
                        "abs_y_minus", "fitted_exponent_plus", "fitted_exponent_minus"])
            for i in range(self.r.size):
                yp, ym = self.y_plus[i], self.y_minus[i]
                w.writerow([repr(float(self.r[i])), repr(yp.real), repr(yp.imag), repr(abs(yp)),
                            repr(ym.real), repr(ym.imag), repr(abs(ym)), repr(ep), repr(em)])


def build_basis(coeffs: OdeCoefficients, grid: RadialGrid, rtol: float = 1e-12) -> AsymptoticBasis:
    """Basis (y+, y-) of y'' = (q1 + i q2) y with r^{1/2 +- sqrt B} behaviour at 0.

    y- : z-(L) = z-'(L) = 1 at L = -log l, integrated towards s -> infinity.
    y+ : z+ = z- * K with K(s) = int_s^inf dsigma / z-^2, obtained by a
    backward integration of log K started from the analytic exponential tail.
    """
    r = grid.r_values
    if grid.decades() < 4 - 1e-9:
        raise ValueError("grid must reach at least 4 decades below l")
    coeffs.check(r)
    sqrtB = math.sqrt(coeffs.B)
    l = r[-1]
    L, S = -math.log(l), -math.log(r[0])
    s_eval = -np.log(r[::-1])  # increasing

    def Q(s):
        e = math.exp(-s)
        return 0.25 + e * e * (float(coeffs.q1(e)) + 1j * float(coeffs.q2(e)))

    def rhs_fwd(s, y):
        w = y[0]
        return [Q(s) - w * w, w]

    fwd = integrate.solve_ivp(rhs_fwd, (L, S), np.array([1.0 + 0j, 0.0 + 0j]), method="DOP853",
                              rtol=rtol, atol=1e-14, dense_output=True, t_eval=s_eval)
    if not fwd.success:
        raise DegenerateBasisError(f"forward integration failed: {fwd.message}")
    w = fwd.y[0]
    ell = fwd.y[1]
    if not np.all(np.isfinite(w)):
        raise DegenerateBasisError("z- vanished on the integration path")
    Zm = np.exp(2 * ell.real)
    if np.any(np.diff(Zm) < -1e-9 * Zm[1:]):
        raise DegenerateBasisError("|z-|^2 is not increasing")

    wS, ellS = w[-1], ell[-1]
    kappa_S = -2 * ellS - np.log(2 * wS)

    def rhs_bwd(s, k):
        wl = fwd.sol(s)
        return [-np.exp(-2 * wl[1] - k[0])]

    bwd = integrate.solve_ivp(rhs_bwd, (S, L), np.array([kappa_S]), method="DOP853",
                              rtol=rtol, atol=1e-14, t_eval=s_eval[::-1])
    if not bwd.success:
        raise DegenerateBasisError(f"backward quadrature failed: {bwd.message}")
    kappa = bwd.y[0][::-1]

    # back to increasing r order
    w, ell, kappa = w[::-1], ell[::-1], kappa[::-1]
    logr = np.log(r)
    wp = w - np.exp(-2 * ell - kappa)  # z+'/z+
    log_ym = 0.5 * logr + ell
    log_yp = 0.5 * logr + ell + kappa
    y_minus = np.exp(log_ym)
    y_plus = np.exp(log_yp)
    # d/dr = -(1/r) d/ds, y = r^{1/2} z  =>  y'/y = (1/2 - z'/z)/r
    dy_minus = y_minus * (0.5 - w) / r
    dy_plus = y_plus * (0.5 - wp) / r
    W = complex(dy_plus[-1] * y_minus[-1] - y_plus[-1] * dy_minus[-1])
    return AsymptoticBasis(r, y_plus, y_minus, dy_plus, dy_minus, sqrtB, W,
                           log_yp.real, log_ym.real, Zm[::-1], -logr)


def z_monotonicity_defect(basis: AsymptoticBasis) -> float:
    """max over interior s of 2 sqrt(B) Z' - Z'' (should be <= 0 up to tolerance),
    normalised by max |Z''| on the stencil; Z = |z-|^2 on the log grid."""
    s = basis.s[::-1]
    Z = basis.Z_minus[::-1]
    # scale out growth to keep differences well conditioned
    dZ = np.gradient(Z, s)
    d2Z = np.gradient(dZ, s)
    defect = (2 * basis.sqrtB * dZ - d2Z) / np.maximum(np.abs(d2Z), 1e-300)
    return float(np.max(defect[2:-2]))


# --------------------------------------------------------------------------
# membership of r^s phi in the form domain


@dataclass(frozen=True)
class MembershipReport:
    d: int
    a: float
    s_plus: float
    s_minus: float
    deltas: np.ndarray
    grad_plus: np.ndarray
    hardy_plus: np.ndarray
    grad_minus: np.ndarray
    hardy_minus: np.ndarray
    plus_converges: bool
    minus_diverges: bool
    divergence_rate: float
    predicted_rate: float


def _cutoff(r):
    from .cutoffs import smoothstep, smoothstep_derivative

    t = (r - 0.5) / 0.5
    return 1.0 - smoothstep(t), -smoothstep_derivative(t) / 0.5


def _form_integrals(s, d, delta):
    """int_delta^1 |u'|^2 r^{d-1} dr and int_delta^1 |u|^2 r^{d-3} dr for u = r^s phi."""
    area = 2 * math.pi if d == 2 else 4 * math.pi if d == 3 else 2 * math.pi ** (d / 2) / math.gamma(d / 2)

    def g(t):
        r = math.exp(t)
        ph, dph = _cutoff(np.array([r]))
        du = s * r ** (s - 1) * ph[0] + r**s * dph[0]
        return du * du * r ** (d - 1) * r

    def hq(t):
        r = math.exp(t)
        ph, _ = _cutoff(np.array([r]))
        return (r**s * ph[0]) ** 2 * r ** (d - 3) * r

    lo = math.log(delta)
    pts = [math.log(0.5)] if delta < 0.5 else None
    I1 = integrate.quad(g, lo, 0.0, points=pts, limit=400, epsabs=0, epsrel=1e-12)[0]
    I2 = integrate.quad(hq, lo, 0.0, points=pts, limit=400, epsabs=0, epsrel=1e-12)[0]
    return area * I1, area * I2


def verify_u_s_membership(spec, pole_index: int = 0, deltas=None) -> MembershipReport:
    """Form integrals of u_s = r^s phi over (delta, 1) for shrinking delta.

    s_plus = -(d/2-1) + sqrt((d/2-1)^2 + a) gives finite integrals; s_minus
    (the other root) gives divergence like delta^{-2 sqrt((d/2-1)^2 + a)}.
    """
    pole = spec.poles[pole_index]
    a = pole.radial_profile.coefficient
    if a is None:
        raise ValueError("pole must be exactly inverse-square near its center")
    d = spec.dimension
    disc = (d / 2 - 1) ** 2 + a
    root = math.sqrt(max(disc, 0.0))
    sp, sm = -(d / 2 - 1) + root, -(d / 2 - 1) - root
    deltas = np.asarray(deltas if deltas is not None else 10.0 ** -np.arange(1, 9), float)
    gp, hp, gm, hm = [], [], [], []
    for dl in deltas:
        x, y = _form_integrals(sp, d, dl)
        gp.append(x)
        hp.append(y)
        x, y = _form_integrals(sm, d, dl)
        gm.append(x)
        hm.append(y)
    gp, hp, gm, hm = map(np.array, (gp, hp, gm, hm))
    conv = bool(abs(gp[-1] - gp[-2]) <= 1e-3 * abs(gp[-1]) + 1e-12
                and abs(hp[-1] - hp[-2]) <= 1e-3 * abs(hp[-1]) + 1e-12)
    rate = float(-np.polyfit(np.log(deltas[-3:]), np.log(gm[-3:]), 1)[0])
    pred = 2 * root
    div = bool(gm[-1] > 10 * gm[0]) if pred > 0 else False
    return MembershipReport(d, a, sp, sm, deltas, gp, hp, gm, hm, conv, div, rate, pred)


# --------------------------------------------------------------------------
# energy functional and its Gronwall bound


@dataclass(frozen=True)
class ModeEnergy:
    r: np.ndarray
    E: np.ndarray
    C1: float
    m: float
    rho: float


@dataclass(frozen=True)
class GronwallReport:
    energy: ModeEnergy
    pointwise_lhs: np.ndarray
    pointwise_rhs: np.ndarray
    worst_pointwise_ratio: float
    pointwise_holds: bool
    integral_lhs: float
    integral_rhs: float
    integral_holds: bool
    r1: float
    kappa_sq: float


def mode_energy(r, v, h) -> np.ndarray:
    r = np.asarray(r, float)
    v = np.asarray(v)
    dv = np.gradient(v, r, edge_order=2)
    return np.abs(v) ** 2 + np.abs(h * dv) ** 2


def gronwall_energy_bound(r, v, g, h: float, C1: float, m: float = 1.0, rho: Optional[float] = None,
                          r1: Optional[float] = None, alpha: float = 0.0,
                          residual: Optional[float] = None, rtol: float = 1e-6) -> GronwallReport:
    """Check -E' <= (C1 h / r^2 + 1 + alpha) E + |g|^2 on r >= m h, and the
    integrated form int_{mh}^{r1} E <= e^{C1/m + rho}(r1 kappa^2 + int E(t+rho) dt).

    `v`, `g` are the mode solution and forcing on the v-scale; `residual`
    is the relative residual of the discrete solve that produced v.
    """
    if residual is not None and not residual < 1e-8:
        raise NotASolutionError(f"relative residual {residual:.3e} exceeds 1e-8")
    if alpha > 1:
        raise ValueError("alpha must be <= 1")
    r = np.asarray(r, float)
    v = np.asarray(v)
    g = np.asarray(g)
    if r1 is None:
        r1 = 0.5 * r[-1]
    if rho is None:
        rho = r1 / 4
    if r1 + rho > r[-1] * (1 + 1e-12):
        raise ValueError("r1 + rho must lie inside the grid")
    E = mode_energy(r, v, h)
    dE = np.gradient(E, r, edge_order=2)
    sel = (r >= m * h) & (r <= r1)
    lhs = -dE[sel]
    rhs = (C1 * h / r[sel] ** 2 + 1 + alpha) * E[sel] + np.abs(g[sel]) ** 2
    scale = max(float(np.max(E)), 1e-300) * rtol
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > scale, np.inf, 0.0))
    worst = float(np.max(ratio)) if ratio.size else 0.0
    holds = bool(np.all(lhs <= rhs + scale))

    def trap(y, x):
        return float(integrate.trapezoid(y, x)) if x.size > 1 else 0.0

    kappa_sq = trap(np.abs(g) ** 2, r)
    I_lhs = trap(E[sel], r[sel])
    shifted = np.interp(r[sel] + rho, r, E, right=0.0)
    I_rhs = math.exp(C1 / m + rho) * (r1 * kappa_sq + trap(shifted, r[sel]))
    return GronwallReport(ModeEnergy(r, E, C1, m, rho), lhs, rhs, worst, holds, I_lhs, I_rhs,
                          bool(I_lhs <= I_rhs * (1 + 1e-12) + 1e-300), r1, kappa_sq)


# --------------------------------------------------------------------------
# weighted norms


@dataclass(frozen=True)
class WeightedNormReport:
    value: float
    quadrature_part: float
    extrapolated_part: float
    fitted_power: float


def weighted_norm(r, density, t: Optional[float] = 0.5, h: float = 1.0, d: int = 2,
                  weight: str = "power", r_max: Optional[float] = None) -> WeightedNormReport:
    """int |x|^{-t} |u|^2 dx (weight='power') or int h^2 |x|^{-3} |u|^2 dx
    (weight='hardy3') for a field given by its angular-integrated density
    rho(r) = int_{S^{d-1}} |u(r, theta)|^2 dtheta on radii r.

    The piece on (0, r_min) is extrapolated from a power-law fit of rho on the
    first decade and reported separately.
    """
    r = np.asarray(r, float)
    rho = np.asarray(density, float)
    if weight == "power":
        if t is None or not (0 < t <= 1):
            raise ValueError("exponent t must lie in (0, 1]")
        wexp, pref = -t, 1.0
    elif weight == "hardy3":
        wexp, pref = -3.0, h * h
    else:
        raise ValueError("weight must be 'power' or 'hardy3'")
    if r_max is not None:
        keep = r <= r_max
        r, rho = r[keep], rho[keep]
    if not np.any(rho > 0):
        return WeightedNormReport(0.0, 0.0, 0.0, float("nan"))
    f = pref * rho * r ** (wexp + d - 1)
    # integrate in log r: int f dr = int f r dlog r
    quad = float(integrate.simpson(f * r, x=np.log(r)))
    sel = (r <= r[0] * 10) & (rho > 0)
    extra, beta = 0.0, float("nan")
    if sel.sum() >= 3:
        beta, logc = np.polyfit(np.log(r[sel]), np.log(rho[sel]), 1)
        p = beta + wexp + d
        if p > 0:
            extra = float(pref * math.exp(logc) * r[0] ** p / p)
        else:
            extra = float("inf")
    return WeightedNormReport(quad + extra, quad, extra, float(beta))
