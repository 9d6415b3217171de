"""Angular eigenbases on S^{d-1} and the small/large harmonic split."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy import special

from .errors import BasisTooSmallError, HypothesisError, UnsupportedConfiguration


@dataclass(frozen=True)
class ModeBasis:
    """Eigenpairs (nu_k^2, e_k) sampled on an angular quadrature grid.

    `samples[k]` holds e_k at the grid points, `weights` the quadrature
    weights; `group[k]` labels the eigenspace (equal labels = degenerate).
    """

    dimension: int
    nu2: np.ndarray
    samples: np.ndarray
    weights: np.ndarray
    group: np.ndarray
    grid: dict = field(default_factory=dict)
    angular_potential: Optional[np.ndarray] = None
    threshold: float = 0.0

    def __len__(self):
        return len(self.nu2)

    @property
    def nu(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.nu2, 0.0))

    @property
    def n_angular(self) -> int:
        return self.samples.shape[1]

    def multiplicity(self, k: int) -> int:
        return int(np.sum(self.group == self.group[k]))

    def gram(self) -> np.ndarray:
        return (self.samples * self.weights) @ self.samples.T

    def with_threshold(self, nu_tilde: float) -> "ModeBasis":
        return ModeBasis(self.dimension, self.nu2, self.samples, self.weights, self.group,
                         self.grid, self.angular_potential, float(nu_tilde))

    def directions(self) -> np.ndarray:
        """Unit vectors of the angular grid points, shape (M, d)."""
        if self.dimension == 2:
            t = self.grid["theta"]
            return np.stack([np.cos(t), np.sin(t)], axis=1)
        th, ph = self.grid["theta"], self.grid["phi"]
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)

    def table(self):
        """Rows (k, nu_k^2, multiplicity)."""
        return [(k, float(self.nu2[k]), self.multiplicity(k)) for k in range(len(self))]

    def export(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "nu_sq", "multiplicity"])
            for row in self.table():
                w.writerow([row[0], repr(row[1]), row[2]])


def _group_labels(values, rtol=1e-6):
    labels = np.zeros(len(values), dtype=int)
    g = 0
    for i in range(1, len(values)):
        if abs(values[i] - values[i - 1]) > rtol * max(1.0, abs(values[i])):
            g += 1
        labels[i] = g
    return labels


def analytic_basis(d: int, max_nu: float, n_angular: Optional[int] = None, threshold: float = 0.0) -> ModeBasis:
    """Eigenbasis of the sphere Laplacian with nu_k <= max_nu.

    d = 2: constant, cos(k theta), sin(k theta) on a uniform grid.
    d = 3: real spherical harmonics on a Gauss-Legendre x uniform grid.
    """
    if d == 2:
        K = int(math.floor(max_nu + 1e-12))
        N = n_angular or max(256, 1 << int(math.ceil(math.log2(4 * K + 8))))
        if N <= 2 * K:
            raise ValueError("angular grid too coarse for requested modes")
        theta = 2 * np.pi * np.arange(N) / N
        rows = [np.full(N, 1 / math.sqrt(2 * np.pi))]
        nu2 = [0.0]
        grp = [0]
        for k in range(1, K + 1):
            rows.append(np.cos(k * theta) / math.sqrt(np.pi))
            rows.append(np.sin(k * theta) / math.sqrt(np.pi))
            nu2 += [float(k * k)] * 2
            grp += [k, k]
        return ModeBasis(2, np.array(nu2), np.array(rows), np.full(N, 2 * np.pi / N),
                         np.array(grp), {"theta": theta}, None, float(threshold))
    if d == 3:
        L = int(math.floor((-1 + math.sqrt(1 + 4 * max_nu**2 + 1e-9)) / 2))
        nth = n_angular or max(2 * L + 4, 16)
        nph = 2 * nth
        x, wx = np.polynomial.legendre.leggauss(nth)
        th1 = np.arccos(x)
        ph1 = 2 * np.pi * np.arange(nph) / nph
        TH, PH = np.meshgrid(th1, ph1, indexing="ij")
        W = np.outer(wx, np.full(nph, 2 * np.pi / nph))
        th, ph, w = TH.ravel(), PH.ravel(), W.ravel()
        rows, nu2, grp = [], [], []
        for l in range(L + 1):
            for m in range(-l, l + 1):
                Y = special.sph_harm_y(l, abs(m), th, ph)
                if m == 0:
                    row = Y.real
                elif m > 0:
                    row = math.sqrt(2) * Y.real
                else:
                    row = math.sqrt(2) * Y.imag
                rows.append(row)
                nu2.append(float(l * (l + 1)))
                grp.append(l)
        return ModeBasis(3, np.array(nu2), np.array(rows), w, np.array(grp),
                         {"theta": th, "phi": ph, "shape": (nth, nph)}, None, float(threshold))
    raise UnsupportedConfiguration("analytic bases are implemented for d in {2, 3}")


def _periodic_fd_eigs(b, count):
    N = b.size
    dth = 2 * np.pi / N
    main = 2.0 / dth**2 + b
    off = -np.ones(N - 1) / dth**2
    H = np.diag(main) + np.diag(off, 1) + np.diag(off, -1)
    H[0, -1] = H[-1, 0] = -1.0 / dth**2
    vals, vecs = sla.eigh(H, subset_by_index=[0, count - 1])
    return vals, vecs, dth


def angular_eigenproblem(b_samples, count: int, threshold: float = 0.0, richardson: bool = True) -> ModeBasis:
    """Lowest `count` eigenpairs of -e'' + b e = nu^2 e on S^1.

    Second-order periodic differences with a dense symmetric eigensolve.  With
    `richardson` the eigenvalues are extrapolated from the N and N/2 grids.
    """
    b = np.asarray(b_samples, dtype=float).ravel()
    N = b.size
    if N < 256:
        raise ValueError("angular grid must have at least 256 points")
    if N > 4096:
        raise ValueError("angular grid larger than the dense-solve limit")
    if np.any(b < 0):
        i = int(np.argmin(b))
        raise HypothesisError(f"HypV2': angular coefficient negative (b={b[i]:.4g} at sample {i})", "HypV2'")
    if not 1 <= count <= N // 4:
        raise ValueError("count must be between 1 and N/4")
    vals, vecs, dth = _periodic_fd_eigs(b, count)
    if richardson:
        if N % 2:
            raise ValueError("Richardson extrapolation needs an even grid size")
        coarse, _, _ = _periodic_fd_eigs(b[::2], count)
        vals = (4 * vals - coarse) / 3
    vals = np.maximum(vals, 0.0) if np.all(b >= 0) else vals
    samples = vecs.T / math.sqrt(dth)
    # fix signs deterministically
    for k in range(count):
        i = int(np.argmax(np.abs(samples[k])))
        if samples[k, i] < 0:
            samples[k] *= -1
    theta = 2 * np.pi * np.arange(N) / N
    return ModeBasis(2, vals, samples, np.full(N, dth), _group_labels(vals), {"theta": theta},
                     b.copy(), float(threshold))


# --------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class PolarField:
    """Field sampled at radii r (n_r,) times the angular grid of a basis (M,)."""

    r: np.ndarray
    values: np.ndarray
    radial_weights: Optional[np.ndarray] = None

    def weights(self, d: int) -> np.ndarray:
        if self.radial_weights is not None:
            return self.radial_weights
        return _trapezoid_weights(self.r) * self.r ** (d - 1)


def _trapezoid_weights(r):
    w = np.zeros_like(r)
    dr = np.diff(r)
    w[:-1] += dr / 2
    w[1:] += dr / 2
    return w


def polar_points(center, r, basis: ModeBasis) -> np.ndarray:
    """Cartesian coordinates (n_r, M, d) of the polar grid around `center`."""
    return np.asarray(center, float) + np.asarray(r, float)[:, None, None] * basis.directions()[None, :, :]


@dataclass(frozen=True)
class ModeSplit:
    small_part: np.ndarray
    large_part: np.ndarray
    threshold: float
    coefficients: np.ndarray  # (K, n_r)
    nu: np.ndarray
    r: np.ndarray
    tail_fraction: float

    def energy(self, which: str, radial_weights, angular_weights) -> float:
        u = self.small_part if which == "small" else self.large_part
        return float(np.sum(np.abs(u) ** 2 * angular_weights[None, :] * radial_weights[:, None]))


def split_modes(field: PolarField, basis: ModeBasis, nu_tilde: Optional[float] = None,
                tail_tol: float = 1e-8) -> ModeSplit:
    """u = u_p + u_g with u_p the projection on eigenspaces with nu_k <= nu_tilde.

    Degenerate eigenspaces are kept whole, so the split does not depend on the
    choice of basis inside an eigenspace.
    """
    nt = basis.threshold if nu_tilde is None else float(nu_tilde)
    U = np.asarray(field.values)
    if U.shape != (field.r.size, basis.n_angular):
        raise ValueError("field must be sampled on (r, angular grid of the basis)")
    nu = basis.nu
    if nu.max() <= nt:
        raise BasisTooSmallError("basis contains no mode above the threshold", None)
    coeffs = (basis.samples * basis.weights) @ U.T  # (K, n_r)
    wr = field.weights(basis.dimension)
    total = float(np.sum(np.abs(U) ** 2 * basis.weights[None, :] * wr[:, None]))
    captured = float(np.sum(np.abs(coeffs) ** 2 * wr[None, :]))
    tail = (total - captured) / total if total > 0 else 0.0
    if tail > tail_tol:
        raise BasisTooSmallError(f"basis misses a fraction {tail:.3e} of the field energy", tail)
    small = nu <= nt + 1e-12
    # keep degenerate eigenspaces together
    for g in np.unique(basis.group[small]):
        small |= basis.group == g
    up = coeffs[small].T @ basis.samples[small]
    ug = U - up
    return ModeSplit(up, ug, nt, coeffs, nu, np.asarray(field.r), max(tail, 0.0))
