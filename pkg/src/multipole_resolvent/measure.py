"""Husimi densities of quasimodes and the defect-measure diagnostics built on them.

Coherent states are g(x) = (pi h)^{-1/2} exp(-|x-x0|^2/(2h) + i xi0.(x-x0)/h)
in d = 2 and H(x0, xi0) = (2 pi h)^{-2} |<u, g>|^2, so that the phase-space
integral of H equals ||u||^2.  The transform is a windowed FFT over a patch
of radius `patch_sigmas` * sqrt(h) around each centre.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import fft as sfft

from .cutoffs import smoothstep, smoothstep_derivative
from .errors import GeometryError, ResolutionError
from .quasimodes import GridField, ModalField
from .sphere import PolarField, analytic_basis, polar_points, split_modes

MAGIC = b"HUSIMI01"


@dataclass
class PhaseSpaceDensity:
    """H on centres x0 (m, 2) times a square xi grid (n, n)."""

    x0: np.ndarray
    cell: float  # area weight of each centre
    xi: np.ndarray  # 1D axis, shared by both components
    H: np.ndarray  # (m, n, n)
    h: float
    windowed_norm2: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def width(self) -> float:
        return math.sqrt(self.h)

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0])

    def xi_grid(self):
        KX, KY = np.meshgrid(self.xi, self.xi, indexing="ij")
        return KX, KY

    def marginal(self) -> np.ndarray:
        """x0 -> int H dxi."""
        return self.H.sum(axis=(1, 2)) * self.dxi**2

    @property
    def mass(self) -> float:
        return float(self.marginal().sum() * self.cell)

    def pair(self, symbol: Callable, select: Optional[np.ndarray] = None) -> float:
        """<H, a> for a(x0 (m,1,1,2), xi (1,n,n,2)) -> (m, n, n)."""
        KX, KY = self.xi_grid()
        XI = np.stack([KX, KY], axis=-1)[None]
        idx = np.arange(len(self.x0)) if select is None else np.flatnonzero(select)
        tot = 0.0
        for s in range(0, idx.size, 256):
            j = idx[s:s + 256]
            vals = symbol(self.x0[j][:, None, None, :], XI)
            tot += float(np.sum(self.H[j] * vals))
        return tot * self.cell * self.dxi**2

    def mass_consistency(self) -> float:
        """|mass / ||phi u||^2 - 1|."""
        return abs(self.mass / self.windowed_norm2 - 1.0) if self.windowed_norm2 > 0 else 0.0


def husimi_stride(dx: float, h: float) -> int:
    """Subsampling step that keeps the field spacing <= h/2 (xi Nyquist 2 pi)."""
    return max(1, int(math.floor(0.5 * h / dx + 1e-9)))


def lattice_centres(fld: GridField, spacing: float, region: Optional[Callable] = None, h: Optional[float] = None):
    """Grid nodes on a sub-lattice of step ~spacing, optionally masked by region(x) -> bool.

    With h given, the lattice is aligned with the Husimi subsampling grid.
    """
    base = husimi_stride(fld.dx, h) if h is not None else 1
    step = base * max(1, int(round(spacing / (base * fld.dx))))
    ix = np.arange(0, fld.x.size, step)
    iy = np.arange(0, fld.y.size, step)
    X, Y = np.meshgrid(fld.x[ix], fld.y[iy], indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    if region is not None:
        pts = pts[np.asarray(region(pts), bool)]
    return pts, (step * fld.dx) ** 2


def husimi(fld: GridField, h: float, centres=None, cell: Optional[float] = None, window: Optional[Callable] = None,
           xi_max: float = 2.5, patch_sigmas: float = 6.0, dxi_factor: float = 0.35,
           batch: int = 64) -> PhaseSpaceDensity:
    """Husimi density of `window * u` at the given centres.

    centres: (m, 2) coordinates (snapped to grid nodes) or None for a lattice
    of spacing sqrt(h)/2 over the whole grid.  `cell` is the area attached to
    each centre.
    """
    dx = fld.dx
    if dx > 2 * math.pi * h / 10 * (1 + 1e-9):
        raise ResolutionError(f"field spacing {dx:.4g} does not resolve h = {h:.4g} (need <= 2 pi h / 10)")
    if centres is None:
        centres, cell = lattice_centres(fld, 0.5 * math.sqrt(h), h=h)
    centres = np.atleast_2d(np.asarray(centres, float))
    if cell is None:
        raise ValueError("cell area is required with explicit centres")
    if math.sqrt(cell) > math.sqrt(h) * (1 + 1e-9):
        raise ResolutionError(f"centre spacing {math.sqrt(cell):.4g} coarser than the packet width {math.sqrt(h):.4g}")
    u = fld.values
    if window is not None:
        u = u * window(fld.points())
    wnorm2 = float(np.sum(np.abs(u) ** 2) * dx * dx)
    # the field is band limited far below the grid Nyquist: subsample first
    st = husimi_stride(dx, h)
    u = u[::st, ::st]
    xs, ys = fld.x[::st], fld.y[::st]
    dx = dx * st

    P = int(math.ceil(patch_sigmas * math.sqrt(h) / dx))
    nf = sfft.next_fast_len(max(2 * P + 1, int(math.ceil(2 * math.pi * h / (dxi_factor * math.sqrt(h) * dx)))))
    k = sfft.fftfreq(nf, d=dx) * 2 * math.pi
    xi_all = h * k
    order = np.argsort(xi_all)
    keep = order[np.abs(xi_all[order]) <= xi_max]
    xi = xi_all[keep]
    if np.any(np.abs(np.diff(np.diff(xi))) > 1e-9):
        raise ResolutionError("xi crop is not contiguous")
    dxi = float(xi[1] - xi[0])
    if dxi > math.sqrt(h) * (1 + 1e-9):
        raise ResolutionError("xi spacing coarser than the packet width")

    up = np.pad(u, P)
    ix = np.rint((centres[:, 0] - xs[0]) / dx).astype(int)
    iy = np.rint((centres[:, 1] - ys[0]) / dx).astype(int)
    if np.any((ix < 0) | (ix >= xs.size) | (iy < 0) | (iy >= ys.size)):
        raise GeometryError("centres outside the field grid")
    # zero padding is only harmless where the field has already decayed
    edge = np.minimum.reduce([ix, xs.size - 1 - ix, iy, ys.size - 1 - iy])
    if np.any(edge < P):
        rim = max(np.abs(u[0]).max(), np.abs(u[-1]).max(), np.abs(u[:, 0]).max(), np.abs(u[:, -1]).max())
        # window weight at the nearest edge bounds what the padding cuts off
        cut = rim * math.exp(-(float(edge.min()) * dx) ** 2 / (2 * h))
        if cut > 1e-4 * max(np.abs(u).max(), 1e-300):
            raise GeometryError("Husimi patches leave the field grid where the field is not negligible")
    snapped = np.stack([xs[ix], ys[iy]], axis=1)
    off = np.arange(-P, P + 1) * dx
    G = np.exp(-(off[:, None] ** 2 + off[None, :] ** 2) / (2 * h))
    const = (2 * math.pi * h) ** -2 / (math.pi * h) * dx**4
    H = np.empty((len(centres), xi.size, xi.size))
    for s in range(0, len(centres), batch):
        jx, jy = ix[s:s + batch], iy[s:s + batch]
        patches = np.stack([up[a:a + 2 * P + 1, b:b + 2 * P + 1] for a, b in zip(jx, jy)]) * G
        F = sfft.fft2(patches, s=(nf, nf), axes=(1, 2))
        F = F[:, keep][:, :, keep]
        H[s:s + batch] = const * np.abs(F) ** 2
    return PhaseSpaceDensity(snapped, float(cell), xi, H, float(h), wnorm2,
                             {"patch": P, "nfft": nf, "dx": dx, "stride": st})


# --------------------------------------------------------------------------
# diagnostics


def _away_from(points, poles, radius):
    keep = np.ones(len(points), bool)
    for p in poles:
        keep &= np.linalg.norm(points - np.asarray(p), axis=1) > radius
    return keep


def shell_localization(density: PhaseSpaceDensity, delta: float, poles: Sequence = (), pole_radius: float = 0.0,
                       region: Optional[Callable] = None) -> float:
    """Fraction of the mass (centres away from poles) with ||xi| - 1| <= delta."""
    sel = _away_from(density.x0, poles, pole_radius)
    if region is not None:
        sel &= np.asarray(region(density.x0), bool)
    KX, KY = density.xi_grid()
    band = np.abs(np.hypot(KX, KY) - 1.0) <= delta
    Hs = density.H[sel]
    total = float(Hs.sum())
    return float(Hs[:, band].sum() / total) if total > 0 else 0.0


@dataclass(frozen=True)
class PhaseSymbol:
    """a(x, xi) = bump(|x - centre| / radius) * exp(-|xi - xi_c|^2 / (2 s^2)).

    With xi_c = None the xi factor is 1.
    """

    centre: tuple
    radius: float
    xi_centre: Optional[tuple] = None
    xi_width: float = 0.5

    def _bump(self, x):
        t = np.linalg.norm(x - np.asarray(self.centre), axis=-1) / self.radius
        return 1.0 - smoothstep(2 * t - 1), -2 * smoothstep_derivative(2 * t - 1) / self.radius, t

    def _xi(self, xi):
        if self.xi_centre is None:
            return np.ones(xi.shape[:-1])
        return np.exp(-np.sum((xi - np.asarray(self.xi_centre)) ** 2, axis=-1) / (2 * self.xi_width**2))

    def __call__(self, x, xi):
        b, _, _ = self._bump(x)
        return b * self._xi(xi)

    def transport(self, x, xi):
        """xi . grad_x a."""
        _, db, t = self._bump(x)
        rel = x - np.asarray(self.centre)
        rn = np.maximum(np.linalg.norm(rel, axis=-1), 1e-300)
        return db * np.sum(xi * rel, axis=-1) / rn * self._xi(xi)

    def support_distance(self, point) -> float:
        return float(np.linalg.norm(np.asarray(point) - np.asarray(self.centre)) - self.radius)


def transport_residual(density: PhaseSpaceDensity, symbol: PhaseSymbol, poles: Sequence = (),
                       pole_radius: float = 0.0) -> float:
    """|<H, xi . grad_x a>| / <H, |xi . grad_x a|>  (0 when the denominator vanishes)."""
    for p in poles:
        if symbol.support_distance(p) <= pole_radius:
            raise GeometryError("test symbol support reaches a pole neighbourhood")
    # the lattice sum must resolve the symbol's profile, not only the packet width
    if math.sqrt(density.cell) > symbol.radius / 12 * (1 + 1e-9):
        raise ResolutionError(f"centre spacing {math.sqrt(density.cell):.4g} does not resolve a symbol of "
                              f"radius {symbol.radius:.4g} (need <= radius / 12)")
    num = density.pair(symbol.transport)
    den = density.pair(lambda x, xi: np.abs(symbol.transport(x, xi)))
    return abs(num) / den if den > 0 else 0.0


def pole_mass(members: Sequence, pole, radii: Sequence[float], which: str = "all", nu_tilde: float = 0.0):
    """Table of ||u||^2 over balls |x - p| <= rho, one row per family member."""
    rows = []
    for m in members:
        fld = getattr(m, "field", m)
        if isinstance(fld, ModalField):
            rows.append([fld.ball_mass(pole, r, which, nu_tilde) for r in radii])
        else:
            if which != "all":
                raise ValueError("mode-restricted masses need a modal field")
            rows.append([fld.ball_mass(pole, r) for r in radii])
    return np.array(rows)


def incoming_fraction(density: PhaseSpaceDensity, M: float, centre=(0.0, 0.0), cos_min: float = 0.5) -> float:
    """Mass share with |x - c| > M and xi pointing inwards (xhat . xi / |xi| < -cos_min)."""
    rel = density.x0 - np.asarray(centre)
    r = np.linalg.norm(rel, axis=1)
    sel = r > M
    if not np.any(sel):
        raise GeometryError("no Husimi centres beyond M")
    KX, KY = density.xi_grid()
    nxi = np.maximum(np.hypot(KX, KY), 1e-300)
    xh = rel[sel] / r[sel, None]
    cosang = (xh[:, 0, None, None] * KX + xh[:, 1, None, None] * KY) / nxi
    Hs = density.H[sel]
    tot = float(Hs.sum())
    return float(Hs[cosang < -cos_min].sum() / tot) if tot > 0 else 0.0


def h_oscillation(quasimode, psi: Optional[Callable] = None, poles: Sequence = ()) -> float:
    """h^2 int |grad u|^2 psi + sum_j h^2 int |u|^2 / |x - p_j|^2 psi."""
    fld = quasimode.field
    if isinstance(fld, ModalField):
        w = None if psi is None else psi(fld.r)
        return fld.gradient_energy(quasimode.h, w)
    w = None if psi is None else psi(fld.points())
    return fld.gradient_energy(quasimode.h, w, poles)


# --------------------------------------------------------------------------
# flux ledger


def radial_step(r, r0: float, width: float):
    """phi(r): 1 for r <= r0 - width, 0 for r >= r0 + width; returns (phi, -phi')."""
    t = (np.asarray(r, float) - (r0 - width)) / (2 * width)
    return 1.0 - smoothstep(t), smoothstep_derivative(t) / (2 * width)


def annulus_centres(fld: GridField, centre, r_in: float, r_out: float, spacing: float, h: Optional[float] = None):
    c = np.asarray(centre, float)
    return lattice_centres(fld, spacing, h=h, region=lambda p: (np.linalg.norm(p - c, axis=1) >= r_in)
                           & (np.linalg.norm(p - c, axis=1) <= r_out))


@dataclass
class FluxLedger:
    directions: np.ndarray  # (J, 2) cone axes
    is_pole_ray: np.ndarray  # (J,) bool
    lam_plus: np.ndarray
    lam_minus: np.ndarray
    r0: float
    theta_c: float

    @property
    def Lambda(self) -> float:
        return 0.5 * float(self.lam_plus.sum() + self.lam_minus.sum())

    @property
    def balance(self) -> float:
        L = self.Lambda
        return abs(float(self.lam_plus.sum() - self.lam_minus.sum())) / L if L > 0 else 0.0

    @property
    def t(self) -> np.ndarray:
        L = self.Lambda
        if L <= 0:
            return np.zeros(len(self.lam_plus))
        return (self.lam_plus + self.lam_minus) / (2 * L)

    @property
    def Z(self) -> np.ndarray:
        return self.t @ self.directions

    @property
    def pole_share(self) -> float:
        return float(self.t[self.is_pole_ray].sum())

    def rows(self):
        ang = np.degrees(np.arctan2(self.directions[:, 1], self.directions[:, 0]))
        return [(float(a), bool(p), float(lp), float(lm), float(t))
                for a, p, lp, lm, t in zip(ang, self.is_pole_ray, self.lam_plus, self.lam_minus, self.t)]


def _cones(pole_dirs, theta_c):
    """(lo, hi, is_pole) angular sectors: pole cones plus background cones of width <= 2 theta_c."""
    two_pi = 2 * math.pi
    angs = sorted(math.atan2(d[1], d[0]) % two_pi for d in pole_dirs)
    if not angs:
        n = int(math.ceil(two_pi / (2 * theta_c) - 1e-9))
        return [(i * two_pi / n, (i + 1) * two_pi / n, False) for i in range(n)]
    cones = []
    for i, a in enumerate(angs):
        nxt = angs[i + 1] if i + 1 < len(angs) else angs[0] + two_pi
        gap = (nxt - theta_c) - (a + theta_c)
        if gap < -1e-12:
            raise GeometryError("cones around the pole directions overlap")
        cones.append((a - theta_c, a + theta_c, True))
        if gap > 1e-12:
            n = int(math.ceil(gap / (2 * theta_c) - 1e-9))
            w = gap / n
            cones += [(a + theta_c + k * w, a + theta_c + (k + 1) * w, False) for k in range(n)]
    return cones


def flux_ledger(density: PhaseSpaceDensity, pole, r0: float, theta_c: float = math.radians(15),
                other_poles: Sequence = (), width: Optional[float] = None, l: Optional[float] = None) -> FluxLedger:
    """Ray weights lambda_j^{+-} on the circle |x - p| = r0.

    lambda^{+-} = <H, (+- xi . xhat)_+ (-phi'(|x - p|)) 1_cone(xhat)> with phi a
    smooth radial step at r0 of half-width `width`.  Cones of half-angle
    theta_c surround the directions to `other_poles`; background cones cover
    the remaining directions.
    """
    p = np.asarray(pole, float)
    if l is not None and not (l / 2 < r0 < l):
        raise GeometryError("r0 must lie in (l/2, l)")
    if width is None:
        width = 0.5 * min(r0 - (l / 2 if l else 0.0), (l - r0) if l else r0 / 2)
    dirs = [np.subtract(q, p) / np.linalg.norm(np.subtract(q, p)) for q in other_poles]
    cones = _cones(dirs, theta_c)
    rel = density.x0 - p
    r = np.linalg.norm(rel, axis=1)
    _, wgt = radial_step(r, r0, width)
    # coverage: sum of weights should reproduce 2 pi r0
    cover = float(np.sum(wgt) * density.cell)
    if abs(cover / (2 * math.pi * r0) - 1) > 0.05:
        raise GeometryError(f"Husimi centres cover {cover / (2 * math.pi * r0):.3f} of the flux annulus")
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    KX, KY = density.xi_grid()
    sel = wgt > 0
    xh = rel[sel] / r[sel, None]
    radial_xi = xh[:, 0, None, None] * KX + xh[:, 1, None, None] * KY
    Hs = density.H[sel]
    plus = np.sum(Hs * np.maximum(radial_xi, 0), axis=(1, 2)) * wgt[sel]
    minus = np.sum(Hs * np.maximum(-radial_xi, 0), axis=(1, 2)) * wgt[sel]
    a_sel = ang[sel]
    lp, lm, axes, pole_flag = [], [], [], []
    scale = density.cell * density.dxi**2
    # cones are contiguous from cones[0][0]: one owner per centre
    bounds = np.array([c[1] for c in cones]) - cones[0][0]
    owner = np.minimum(np.searchsorted(bounds, (a_sel - cones[0][0]) % (2 * math.pi), side="right"),
                       len(cones) - 1)
    for j, (lo, hi, is_pole) in enumerate(cones):
        inside = owner == j
        lp.append(plus[inside].sum() * scale)
        lm.append(minus[inside].sum() * scale)
        mid = 0.5 * (lo + hi)
        axes.append((math.cos(mid), math.sin(mid)))
        pole_flag.append(is_pole)
    return FluxLedger(np.array(axes), np.array(pole_flag), np.array(lp), np.array(lm), float(r0), float(theta_c))


def annulus_flux(density: PhaseSpaceDensity, centre, r0: float, width: float):
    """(<H, xi . grad phi>, <H, |xi . grad phi|>, annulus mass) for the radial step phi."""
    p = np.asarray(centre, float)

    def sym(x, xi, absval=False):
        rel = x - p
        rn = np.maximum(np.linalg.norm(rel, axis=-1), 1e-300)
        _, mdphi = radial_step(rn, r0, width)
        v = -mdphi * np.sum(xi * rel, axis=-1) / rn
        return np.abs(v) if absval else v

    flux = density.pair(sym)
    total = density.pair(lambda x, xi: sym(x, xi, True))
    rel = density.x0 - p
    inside = np.abs(np.linalg.norm(rel, axis=1) - r0) <= width
    mass = float(density.marginal()[inside].sum() * density.cell)
    return flux, total, mass


# --------------------------------------------------------------------------
# large-harmonic weighted quantities around a pole


def polar_split(fld, pole, r_max: float, nu_tilde: float, n_r: Optional[int] = None, n_theta: int = 256,
                r_min: Optional[float] = None):
    """Small/large harmonic split of a field on a polar grid about `pole`.

    Returns (r, rho_small(r), rho_large(r)) with rho = int |u_.|^2 dtheta.
    """
    if isinstance(fld, ModalField):
        if np.any(np.asarray(pole) != 0):
            raise ValueError("modal fields are centred at the origin")
        m = fld.r <= r_max
        return fld.r[m], fld.angular_density("small", nu_tilde)[m], fld.angular_density("large", nu_tilde)[m]
    dx = fld.dx
    r_min = 0.5 * dx if r_min is None else r_min
    n_r = n_r or int(math.ceil((r_max - r_min) / (0.5 * dx))) + 1
    r = np.linspace(r_min, r_max, n_r)
    basis = analytic_basis(2, n_theta // 2 - 1, n_angular=n_theta, threshold=nu_tilde)
    vals = fld.interpolate(polar_points(pole, r, basis))
    split = split_modes(PolarField(r, vals), basis, nu_tilde, tail_tol=1e-3)
    wa = basis.weights
    rho_s = np.sum(np.abs(split.small_part) ** 2 * wa, axis=1)
    rho_l = np.sum(np.abs(split.large_part) ** 2 * wa, axis=1)
    return r, rho_s, rho_l


def weighted_large_harmonic(fld, pole, h: float, nu_tilde: float, phi: Callable, power: float = 3.0,
                            r_max: Optional[float] = None, **kw) -> float:
    """int h^2 |x - p|^{-power} |u_g|^2 phi dx over the polar grid."""
    r, _, rho_l = polar_split(fld, pole, r_max, nu_tilde, **kw)
    integrand = h * h * r ** (1 - power) * rho_l * phi(r)
    return float(np.trapezoid(integrand, r))


def lemma_gap(d: int, nu_tilde: float, gradient_constant: float) -> float:
    """c_d + nu_tilde^2 - C'/2 with c_d = (d-1)(d-3)/4."""
    return (d - 1) * (d - 3) / 4 + nu_tilde**2 - gradient_constant / 2


# --------------------------------------------------------------------------
# IO


def save_density(density: PhaseSpaceDensity, path) -> None:
    """Binary export: magic, uint32 header length, JSON header, float64 x0, xi, H."""
    header = {"m": int(len(density.x0)), "n": int(density.xi.size), "h": density.h, "cell": density.cell,
              "extent_x": [float(density.x0[:, 0].min()), float(density.x0[:, 0].max())],
              "extent_y": [float(density.x0[:, 1].min()), float(density.x0[:, 1].max())],
              "xi_range": [float(density.xi[0]), float(density.xi[-1])],
              "windowed_norm2": density.windowed_norm2}
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        for arr in (density.x0, density.xi, density.H):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_density(path) -> PhaseSpaceDensity:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError("not a Husimi density file")
        (n_h,) = struct.unpack("<I", fh.read(4))
        hd = json.loads(fh.read(n_h))
        m, n = hd["m"], hd["n"]
        data = np.frombuffer(fh.read(), dtype="<f8")
    x0 = data[: 2 * m].reshape(m, 2)
    xi = data[2 * m: 2 * m + n]
    H = data[2 * m + n:].reshape(m, n, n)
    return PhaseSpaceDensity(x0.copy(), hd["cell"], xi.copy(), H.copy(), hd["h"], hd["windowed_norm2"])


def density_summary_csv(density: PhaseSpaceDensity, path, delta: Optional[float] = None) -> None:
    """Rows (x, y, xi-marginal, shell fraction at delta = 4 sqrt(h))."""
    import csv

    delta = 4 * math.sqrt(density.h) if delta is None else delta
    KX, KY = density.xi_grid()
    band = np.abs(np.hypot(KX, KY) - 1) <= delta
    marg = density.marginal()
    inb = density.H[:, band].sum(axis=1) * density.dxi**2
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "marginal", "shell_fraction"])
        for (x, y), mg, b in zip(density.x0, marg, inb):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(mg)), repr(float(b / mg) if mg > 0 else 0.0)])
