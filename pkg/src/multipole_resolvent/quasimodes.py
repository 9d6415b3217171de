"""Quasimode families: solutions of h^2 P u - z u = h chi f with random forcing.

The forcing is a seeded sum of plane waves with |xi| = 1 under a smooth
annular envelope, normalised in L^2; the solution is then rescaled so that
||chi_1 u|| = 1 (f is rescaled with it).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates

from .cutoffs import Cutoff, smoothstep
from .errors import UnsupportedConfiguration
from .operators import SemiclassicalParams, assemble_cartesian, assemble_radial_mode
from .potential import PotentialSpec, effective_radial
from .resolvent import CartesianPolicy, _free_mode, radial_grid_for, radial_outer_radius


@dataclass(frozen=True)
class ForcingSpec:
    center: tuple = (0.0, 0.0)
    r_in: float = 0.3
    r_out: float = 0.7
    n_waves: int = 24
    seed: int = 0
    xi_norm: float = 1.0

    def waves(self):
        rng = np.random.Generator(np.random.Philox(key=int(self.seed)))
        phi = rng.uniform(0, 2 * np.pi, self.n_waves)
        amp = rng.standard_normal(self.n_waves) + 1j * rng.standard_normal(self.n_waves)
        return phi, amp

    def envelope(self, r):
        r = np.asarray(r, float)
        taper = 0.25 * (self.r_out - self.r_in)
        if self.r_in <= 0:
            return 1.0 - smoothstep((r - (self.r_out - taper)) / taper)
        return smoothstep((r - self.r_in) / taper) * (1.0 - smoothstep((r - (self.r_out - taper)) / taper))

    def __call__(self, x, h):
        x = np.asarray(x, float) - np.asarray(self.center)
        r = np.linalg.norm(x, axis=-1)
        phi, amp = self.waves()
        xi = self.xi_norm * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        phase = np.tensordot(x, xi.T, axes=1) / h
        return self.envelope(r) * (np.exp(1j * phase) @ amp)

    def radial_modes(self, r, h, kmax):
        """f_k(r) with f = sum_k f_k(r) e^{ik theta} about `center` (exact Bessel expansion)."""
        phi, amp = self.waves()
        ks = np.arange(-kmax, kmax + 1)
        J = special.jv(np.abs(ks)[:, None], self.xi_norm * np.asarray(r)[None, :] / h)
        J = np.where((ks < 0)[:, None], ((-1.0) ** np.abs(ks))[:, None] * J, J)
        coef = (1j ** ks)[:, None] * (np.exp(-1j * np.outer(ks, phi)) @ amp)[:, None]
        return ks, coef * J * self.envelope(r)[None, :]


# --------------------------------------------------------------------------
# field containers


@dataclass
class GridField:
    """Complex field on a uniform 2D grid (nodes x, y with spacing dx)."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def points(self):
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def norm2(self, weight=None) -> float:
        w = 1.0 if weight is None else weight
        return float(np.sum(np.abs(self.values) ** 2 * w) * self.dx**2)

    def ball_mass(self, center, rho) -> float:
        P = self.points()
        m = np.linalg.norm(P - np.asarray(center), axis=-1) <= rho
        return float(np.sum(np.abs(self.values[m]) ** 2) * self.dx**2)

    def interpolate(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float)
        ix = (pts[..., 0] - self.x[0]) / self.dx
        iy = (pts[..., 1] - self.y[0]) / self.dx
        coords = np.stack([ix.ravel(), iy.ravel()])
        re = map_coordinates(self.values.real, coords, order=3, mode="constant")
        im = map_coordinates(self.values.imag, coords, order=3, mode="constant")
        return (re + 1j * im).reshape(pts.shape[:-1])

    def gradient_energy(self, h, psi=None, poles=()) -> float:
        """h^2 int |grad u|^2 psi + sum_j h^2 int |u|^2/|x-p_j|^2 psi."""
        u = self.values
        gx, gy = np.gradient(u, self.dx)
        w = np.ones(u.shape) if psi is None else psi
        e = np.sum((np.abs(gx) ** 2 + np.abs(gy) ** 2) * w)
        P = self.points()
        for p in poles:
            r2 = np.sum((P - np.asarray(p)) ** 2, axis=-1)
            e += np.sum(np.abs(u) ** 2 / r2 * w)
        return float(h * h * e * self.dx**2)


@dataclass
class ModalField:
    """u(r, theta) = sum_k u_k(r) e^{ik theta} about the origin (d = 2)."""

    r: np.ndarray
    ks: np.ndarray
    coeffs: np.ndarray  # (K, n_r)
    weights: np.ndarray  # r dr quadrature weights at r

    def _spline(self):
        if not hasattr(self, "_sp"):
            rr = np.concatenate([[0.0], self.r])
            # regular at 0: only k = 0 survives at the origin
            c0 = np.zeros((len(self.ks), 1), dtype=complex)
            c0[self.ks == 0, 0] = self.coeffs[self.ks == 0, 0]
            self._sp = CubicSpline(rr, np.concatenate([c0, self.coeffs], axis=1).T, axis=0)
        return self._sp

    def evaluate(self, pts, chunk: int = 20000) -> np.ndarray:
        pts = np.asarray(pts, float)
        flat = pts.reshape(-1, 2)
        out = np.zeros(len(flat), dtype=complex)
        sp = self._spline()
        rmax = self.r[-1]
        for s in range(0, len(flat), chunk):
            q = flat[s:s + chunk]
            r = np.linalg.norm(q, axis=1)
            th = np.arctan2(q[:, 1], q[:, 0])
            vals = sp(np.minimum(r, rmax))  # (m, K)
            vals[r > rmax] = 0
            out[s:s + chunk] = np.sum(vals * np.exp(1j * np.outer(th, self.ks)), axis=1)
        return out.reshape(pts.shape[:-1])

    def to_grid(self, half_width, spacing) -> GridField:
        n = int(round(2 * half_width / spacing))
        x = -0.5 * n * spacing + (np.arange(n) + 0.5) * spacing
        X, Y = np.meshgrid(x, x, indexing="ij")
        vals = self.evaluate(np.stack([X, Y], axis=-1))
        return GridField(x, x.copy(), vals)

    def angular_density(self, which: str = "all", nu_tilde: float = 0.0) -> np.ndarray:
        """int |u(r, .)|^2 d theta restricted to |k| > nu_tilde ('large') or <= ('small')."""
        sel = np.ones(len(self.ks), bool)
        if which == "large":
            sel = np.abs(self.ks) > nu_tilde
        elif which == "small":
            sel = np.abs(self.ks) <= nu_tilde
        return 2 * np.pi * np.sum(np.abs(self.coeffs[sel]) ** 2, axis=0)

    def norm2(self, weight=None) -> float:
        dens = self.angular_density()
        w = 1.0 if weight is None else weight
        return float(np.sum(dens * w * self.weights))

    def ball_mass(self, center, rho, which="all", nu_tilde=0.0) -> float:
        if np.any(np.asarray(center) != 0):
            raise ValueError("modal fields are centered at the origin")
        dens = self.angular_density(which, nu_tilde)
        return float(np.sum(dens[self.r <= rho] * self.weights[self.r <= rho]))

    def gradient_energy(self, h, psi=None) -> float:
        """h^2 int (|grad u|^2 + |u|^2/r^2) psi, mode by mode."""
        w = np.ones_like(self.r) if psi is None else psi
        tot = 0.0
        for k, c in zip(self.ks, self.coeffs):
            dc = np.gradient(c, self.r, edge_order=2)
            tot += np.sum((np.abs(dc) ** 2 + (k * k + 1) * np.abs(c) ** 2 / self.r**2) * w * self.weights)
        return float(2 * np.pi * h * h * tot)


@dataclass
class Quasimode:
    h: float
    alpha: float
    field: object
    forcing_norm: float
    residual: float
    params: SemiclassicalParams
    meta: dict = field(default_factory=dict)


@dataclass
class QuasimodeFamily:
    members: list

    @property
    def hs(self):
        return [m.h for m in self.members]

    @property
    def forcing_norms(self):
        return [m.forcing_norm for m in self.members]


# --------------------------------------------------------------------------
# generators


def radial_quasimode(spec: PotentialSpec, params: SemiclassicalParams, forcing: ForcingSpec, chi: Cutoff,
                     chi1: Cutoff, ppw: float = 10.0, gap: float = 0.1, kmax: Optional[int] = None,
                     r_min: Optional[float] = None) -> Quasimode:
    """Quasimode of a unipolar radial configuration via the angular modes.

    The forcing is expanded exactly in e^{ik theta}; each mode is one 1D
    solve and the two signs of k share a factorization.
    """
    if spec.dimension != 2 or not spec.is_unipolar_radial():
        raise UnsupportedConfiguration("radial quasimodes need d = 2 and a radial pole at the origin")
    if any(forcing.center):
        raise UnsupportedConfiguration("forcing must be centered at the pole")
    h = params.h
    w = 4 * math.pi * h
    R_max = radial_outer_radius(chi, chi1, spec, gap, w)
    grid = radial_grid_for(spec, h, R_max, ppw, r_min)
    if kmax is None:
        kmax = int(math.ceil(1.1 * forcing.r_out * forcing.xi_norm / h + 25))
    ks = np.arange(-kmax, kmax + 1)
    coeffs = None
    worst = 0.0
    nodes = weights = f_modes = None
    for nu in range(kmax + 1):
        mode = effective_radial(spec, 0, float(nu)) if spec.poles else _free_mode(spec, float(nu))
        op = assemble_radial_mode(spec, mode, params, grid, layer_width=w, chi=chi, chi1=chi1)
        if nodes is None:
            nodes, weights = op.grid.nodes, op.grid.weights
            _, f_modes = forcing.radial_modes(nodes, h, kmax)
            coeffs = np.zeros((ks.size, nodes.size), dtype=complex)
        for k in {nu, -nu}:
            rhs = h * op.chi * op.sample(f_modes[k + kmax])
            x = op.solve(rhs)
            worst = max(worst, op.residual(x, rhs))
            coeffs[k + kmax] = op.nodal(x)
        op.release()
    f_norm = math.sqrt(2 * np.pi * np.sum(np.abs(f_modes) ** 2 * weights))
    fld = ModalField(nodes, ks, coeffs / f_norm, weights)
    u_norm = math.sqrt(fld.norm2(chi1.radial(nodes) ** 2))
    fld.coeffs = fld.coeffs / u_norm
    return Quasimode(h, params.alpha, fld, 1.0 / u_norm, worst, params,
                     {"kmax": kmax, "R_max": R_max, "n_r": int(nodes.size), "path": "radial-modes"})


def _parity_part(F, px, py):
    """Component of F (on the full symmetric grid) with parities px, py (+1 / -1)."""
    Fx = F[::-1, :]
    G = 0.5 * (F + px * Fx)
    Gy = G[:, ::-1]
    return 0.5 * (G + py * Gy)


def cartesian_quasimode(spec: PotentialSpec, params: SemiclassicalParams, forcing: ForcingSpec, chi: Cutoff,
                        chi1: Cutoff, ppw: float = 10.0, gap: float = 0.05) -> Quasimode:
    """Quasimode on the 2D Cartesian grid, solved sector by sector.

    The forcing is split into its four reflection-parity components, each
    solved on the quarter domain, and the extensions are summed.
    """
    pol = CartesianPolicy(chi, chi1, ppw=ppw, gap=gap)
    h = params.h
    dx = h / ppw
    L, w = pol.box(spec, h)
    sectors = [("even", "even"), ("even", "odd"), ("odd", "even"), ("odd", "odd")]
    U = None
    worst = 0.0
    full_x = full_y = None
    fnorm2 = None
    for sym in sectors:
        op = assemble_cartesian(spec, params, L, dx, w, chi, chi1, sym)
        gx, gy = op.grid.x, op.grid.y
        if full_x is None:
            full_x = np.concatenate([-gx[::-1], gx])
            full_y = np.concatenate([-gy[::-1], gy])
            FX, FY = np.meshgrid(full_x, full_y, indexing="ij")
            F = forcing(np.stack([FX, FY], axis=-1), h)
            fnorm2 = float(np.sum(np.abs(F) ** 2) * dx * dx)
            F = F / math.sqrt(fnorm2)
            CH = chi(np.stack([FX, FY], axis=-1))
            CH1 = chi1(np.stack([FX, FY], axis=-1))
            U = np.zeros_like(F)
        px = 1 if sym[0] == "even" else -1
        py = 1 if sym[1] == "even" else -1
        Fs = _parity_part(F, px, py)
        nx, ny = gx.size, gy.size
        quad = Fs[nx:, ny:]
        rhs = h * op.chi * (dx * quad.ravel())
        if not np.any(rhs):
            continue
        x = op.solve(rhs)
        worst = max(worst, op.residual(x, rhs))
        op.release()
        Q = op.nodal(x)
        full = np.zeros_like(U)
        full[nx:, ny:] = Q
        full[:nx, ny:] = px * Q[::-1, :]
        full[nx:, :ny] = py * Q[:, ::-1]
        full[:nx, :ny] = px * py * Q[::-1, ::-1]
        U += full
    fld = GridField(full_x, full_y, U)
    unorm = math.sqrt(fld.norm2(CH1**2))
    fld.values = U / unorm
    return Quasimode(h, params.alpha, fld, 1.0 / unorm, worst, params,
                     {"box": L, "dx": dx, "path": "cartesian-sectors", "chi": CH, "chi1": CH1})
