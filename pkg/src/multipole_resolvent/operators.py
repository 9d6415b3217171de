"""Discrete approximations of h^2(-Delta + V) - z with an absorbing layer.

Two geometries:

* radial modes: one operator per angular mode on a RadialGrid.  The default
  scheme discretizes the Friedrichs form int |u'|^2 r^{d-1} + (V + nu^2/r^2)|u|^2
  r^{d-1} with cell-centred finite volumes and symmetrizes it; the unknown
  sqrt(cell weight) * u has the L^2(r^{d-1} dr) norm.  scheme="stencil" is the
  plain three-point operator on v = r^{(d-1)/2} u with Dirichlet at r_min.
* 2D Cartesian: 5-point Laplacian on a cell-centred grid, optionally reduced
  to one parity sector per reflection-symmetric axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cutoffs import Cutoff
from .errors import GeometryError, ResolutionError, SingularOperatorError, UnsupportedConfiguration
from .potential import EffectiveRadialPotential, PotentialSpec
from .radial import RadialGrid

DEFAULT_ABSORBER_AMPLITUDE = 2.0
PPW_MIN = 10.0  # grid points per h (spacing <= h / 10)


@dataclass(frozen=True)
class SemiclassicalParams:
    """lambda, epsilon and the derived h = 1/sqrt(lambda), alpha = epsilon h.

    sign = +1 selects R_{lambda + i epsilon}: the rescaled spectral point is
    z = 1 + i alpha h; sign = -1 gives the conjugate point.
    """

    lam: float
    epsilon: Optional[float] = None
    sign: int = 1

    def __post_init__(self):
        if self.lam <= 1:
            raise ValueError("lambda must exceed 1 so that h < 1")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 1e-6 * self.lam)
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def h(self) -> float:
        return 1.0 / math.sqrt(self.lam)

    @property
    def alpha(self) -> float:
        return self.epsilon * self.h

    @property
    def z(self) -> complex:
        return 1.0 + 1j * self.sign * self.alpha * self.h

    def spectral_point(self) -> complex:
        """Unscaled spectral parameter lambda +- i epsilon (= z / h^2)."""
        return self.lam + 1j * self.sign * self.epsilon

    @classmethod
    def from_h(cls, h: float, alpha: Optional[float] = None, sign: int = 1):
        lam = 1.0 / h**2
        eps = None if alpha is None else alpha / h
        return cls(lam, eps, sign)


def default_layer_width(h: float) -> float:
    """Two wavelengths, 2 * (2 pi h)."""
    return 4 * math.pi * h


def cubic_ramp(depth, width, amplitude=DEFAULT_ABSORBER_AMPLITUDE):
    """amplitude * (depth/width)^3 on the layer, 0 outside."""
    t = np.clip(np.asarray(depth, float) / width, 0.0, None)
    return amplitude * t**3


class DiscreteOperator:
    """Sparse complex matrix of the rescaled operator, cutoff masks and geometry.

    The unknown is scaled so that the Euclidean norm equals the L^2 norm
    (up to one global constant), hence operator norms are L^2 norms.
    """

    def __init__(self, geometry, matrix, chi, chi1, absorber, params, grid, meta=None):
        self.geometry = geometry
        self.matrix = sp.csc_matrix(matrix)
        self.chi = np.asarray(chi, float)
        self.chi1 = np.asarray(chi1, float)
        self.absorber = np.asarray(absorber, float)
        self.params = params
        self.grid = grid
        self.meta = dict(meta or {})
        self._lu = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def h(self) -> float:
        return self.params.h

    def factor(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix, permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise SingularOperatorError(f"factorization failed: {exc}",
                                            self._nearest_eigenvalue()) from exc
        return self._lu

    def release(self) -> None:
        self._lu = None

    def _nearest_eigenvalue(self):
        if self.n > 20000:
            return None
        try:
            vals = spla.eigs(self.matrix, k=1, sigma=1e-12, return_eigenvectors=False)
            return complex(vals[0])
        except Exception:  # eigen solve is best effort for diagnostics
            return None

    def solve(self, rhs, trans: str = "N") -> np.ndarray:
        rhs = np.asarray(rhs, dtype=complex)
        return self.factor().solve(rhs, trans=trans)

    def residual(self, x, rhs) -> float:
        rhs = np.asarray(rhs)
        nb = np.linalg.norm(rhs)
        return float(np.linalg.norm(self.matrix @ x - rhs) / nb) if nb > 0 else 0.0

    def is_symmetric(self, tol: float = 0.0) -> bool:
        diff = self.matrix - self.matrix.T
        return bool(abs(diff).max() <= tol) if diff.nnz else True

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def export_coo(self, path) -> None:
        coo = self.matrix.tocoo()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# n={self.n} geometry={self.geometry}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {float(v.real)!r} {float(v.imag)!r}\n")

    # --- conversions between functions and unknowns --------------------------
    def sample(self, f) -> np.ndarray:
        """Unknown vector representing the function f (callable or nodal array)."""
        return self.grid.sample(f)

    def nodal(self, x) -> np.ndarray:
        """Nodal values of the function represented by the unknown x."""
        return self.grid.nodal(x)


def read_coo(path):
    """Inverse of DiscreteOperator.export_coo."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline()
        n = int(head.split("n=")[1].split()[0])
        data = np.loadtxt(fh, ndmin=2)
    rows = data[:, 0].astype(int)
    cols = data[:, 1].astype(int)
    return sp.csc_matrix((data[:, 2] + 1j * data[:, 3], (rows, cols)), shape=(n, n))


# --------------------------------------------------------------------------
# radial modes


@dataclass
class RadialModeGrid:
    """Nodes and weights of a radial mode discretization."""

    nodes: np.ndarray  # sample points of the unknowns
    weights: np.ndarray  # quadrature weights (including r^{d-1} for the form scheme)
    scheme: str
    d: int

    def sample(self, f):
        vals = f(self.nodes) if callable(f) else np.asarray(f)
        return np.sqrt(self.weights) * vals

    def nodal(self, x):
        return np.asarray(x) / np.sqrt(self.weights)

    def v_values(self, x):
        """Values of v = r^{(d-1)/2} u at the nodes."""
        if self.scheme == "form":
            return self.nodes ** ((self.d - 1) / 2) * self.nodal(x)
        return self.nodal(x)

    def u_values(self, x):
        if self.scheme == "form":
            return self.nodal(x)
        return self.nodal(x) / self.nodes ** ((self.d - 1) / 2)


def _radial_masks(nodes, chi, chi1):
    def ev(c):
        if c is None:
            return None
        if isinstance(c, Cutoff):
            return c.radial(nodes) if len(c.core) == 1 and not np.any(c.core[0]) else c(
                np.stack([nodes] + [np.zeros_like(nodes)] * (len(c.core[0]) - 1), axis=1))
        return np.asarray(c(nodes), float)

    x = ev(chi)
    x1 = ev(chi1)
    if x is None:
        x = np.ones_like(nodes)
    if x1 is None:
        x1 = np.ones_like(nodes)
    return x, x1


def assemble_radial_mode(spec: PotentialSpec, mode: EffectiveRadialPotential, params: SemiclassicalParams,
                         grid: RadialGrid, R_max: Optional[float] = None, layer_width: Optional[float] = None,
                         chi=None, chi1=None, scheme: str = "form", absorber: bool = True,
                         absorber_amplitude: float = DEFAULT_ABSORBER_AMPLITUDE,
                         check_resolution: bool = True) -> DiscreteOperator:
    """1D operator of mode `mode` for a unipolar radial configuration."""
    if not spec.is_unipolar_radial():
        raise UnsupportedConfiguration("radial mode assembly needs a single radial pole at the origin")
    h = params.h
    r = grid.r_values
    if R_max is not None and abs(R_max - grid.r_max) > 1e-12 * R_max:
        raise GeometryError("R_max must equal the last grid radius")
    R_max = grid.r_max
    if check_resolution:
        step = float(np.max(np.diff(r)))
        if step > h / PPW_MIN * (1 + 1e-9):
            need = int(math.ceil((R_max - grid.r_min) / (h / PPW_MIN))) + 1
            raise ResolutionError(
                f"radial spacing {step:.4g} exceeds h/10 = {h / PPW_MIN:.4g}; "
                f"need at least {need} uniformly spaced points")
    w = default_layer_width(h) if layer_width is None else float(layer_width)
    d = spec.dimension
    h2 = h * h
    nu2 = mode.nu_k**2

    if scheme == "form":
        f = grid.faces
        c = 0.5 * (f[:-1] + f[1:])
        n = c.size
        wts = (f[1:] ** d - f[:-1] ** d) / d
        kap = f[1:-1] ** (d - 1) / np.diff(c)  # interior faces
        kout = f[-1] ** (d - 1) / (f[-1] - c[-1])
        diag = np.zeros(n)
        diag[:-1] += kap
        diag[1:] += kap
        diag[-1] += kout
        pot = (mode.local_radial(c) + nu2 / c**2) * wts
        s = 1.0 / np.sqrt(wts)
        main = h2 * (diag + pot) * s * s
        off = -h2 * kap * s[:-1] * s[1:]
        nodes, weights = c, wts
    elif scheme == "stencil":
        nodes = r[1:-1]
        dl = r[1:-1] - r[:-2]
        dr = r[2:] - r[1:-1]
        mu = 0.5 * (dl + dr)
        inv = 1.0 / np.sqrt(mu)
        main = h2 * ((1 / dl + 1 / dr) / mu + mode.W(nodes))
        off = -h2 * (1 / dr[:-1]) * inv[:-1] * inv[1:]
        weights = mu
    else:
        raise ValueError("scheme must be 'form' or 'stencil'")

    W_abs = np.zeros_like(nodes)
    if absorber:
        W_abs = cubic_ramp(nodes - (R_max - w), w, absorber_amplitude)
    main = main - params.z - 1j * params.sign * W_abs
    A = sp.diags([off, main, off], [-1, 0, 1], format="csc", dtype=complex)
    chi_v, chi1_v = _radial_masks(nodes, chi, chi1)
    g = RadialModeGrid(nodes, weights, scheme, d)
    meta = {"scheme": scheme, "nu": mode.nu_k, "mode_index": mode.mode_index, "layer_width": w,
            "R_max": R_max, "absorber": bool(absorber)}
    return DiscreteOperator("radial-mode", A, chi_v, chi1_v, W_abs, params, g, meta)


# --------------------------------------------------------------------------
# 2D Cartesian


@dataclass
class CartesianGrid:
    x: np.ndarray
    y: np.ndarray
    dx: float
    symmetry: tuple
    shift: tuple

    @property
    def shape(self):
        return (self.x.size, self.y.size)

    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def sample(self, f):
        vals = f(self.points()) if callable(f) else np.asarray(f)
        return self.dx * np.asarray(vals).reshape(-1)

    def nodal(self, x):
        return (np.asarray(x) / self.dx).reshape(self.shape)


def _axis_nodes(L, dx, sym, shift):
    if sym is None:
        n = int(round(2 * L / dx))
        return -0.5 * n * dx + (np.arange(n) + 0.5) * dx + shift
    m = int(round(L / dx))
    return (np.arange(m) + 0.5) * dx


def _second_difference(n, dx, sym):
    main = np.full(n, 2.0)
    if sym == "even":
        main[0] = 1.0
    elif sym == "odd":
        main[0] = 3.0
    off = -np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / dx**2


def _on_node(p, axes):
    for coord, nodes in zip(p, axes):
        if nodes.size == 0 or np.min(np.abs(nodes - coord)) > 1e-9 * (nodes[1] - nodes[0]):
            return False
    return True


def assemble_cartesian(spec: PotentialSpec, params: SemiclassicalParams, half_width, dx: float,
                       layer_width: Optional[float] = None, chi: Optional[Cutoff] = None,
                       chi1: Optional[Cutoff] = None, symmetry: Sequence = (None, None),
                       absorber: bool = True, absorber_amplitude: float = DEFAULT_ABSORBER_AMPLITUDE,
                       check_resolution: bool = True) -> DiscreteOperator:
    """2D operator h^2(-Delta_5pt + V) - z - i sign W_abs on a cell-centred box.

    `half_width` is L or (Lx, Ly).  `symmetry[a]` in {None, 'even', 'odd'}
    restricts axis a to x_a > 0 with the corresponding reflection condition.
    """
    if spec.dimension != 2:
        raise UnsupportedConfiguration("Cartesian assembly is implemented for d = 2")
    h = params.h
    if check_resolution and dx > h / PPW_MIN * (1 + 1e-9):
        raise ResolutionError(f"dx = {dx:.4g} exceeds h/10 = {h / PPW_MIN:.4g}")
    Ls = (float(half_width),) * 2 if np.ndim(half_width) == 0 else tuple(float(v) for v in half_width)
    w = default_layer_width(h) if layer_width is None else float(layer_width)
    sym = tuple(symmetry)
    for s in sym:
        if s not in (None, "even", "odd"):
            raise ValueError("symmetry entries must be None, 'even' or 'odd'")

    for j, p in enumerate(spec.poles):
        for a in range(2):
            margin = Ls[a] - abs(p.position[a])
            if margin < w + 2 * p.cutoff_radius - 1e-12:
                raise GeometryError(f"pole {j} is {margin:.4g} from the box edge along axis {a}; "
                                    f"need >= layer + 2l = {w + 2 * p.cutoff_radius:.4g}")
        if spec.poles and any(sym) and any(p.position[a] != 0 and sym[a] for a in range(2)):
            pass  # mirrored poles are fine if the spec is symmetric; checked below

    shift = [0.0, 0.0]
    axes = [_axis_nodes(Ls[a], dx, sym[a], 0.0) for a in range(2)]
    for p in spec.poles:
        if _on_node(p.position, axes):
            free = [a for a in range(2) if sym[a] is None]
            if not free:
                raise GeometryError("pole lies on a grid node and every axis is symmetry-reduced")
            for a in free:
                shift[a] = 0.5 * dx
            axes = [_axis_nodes(Ls[a], dx, sym[a], shift[a]) for a in range(2)]
            break
    x, y = axes
    grid = CartesianGrid(x, y, dx, sym, tuple(shift))
    P = grid.points()
    if any(sym):
        _check_reflection(spec, chi, sym, P)

    V = spec.values(P)
    W_abs = np.zeros(grid.shape)
    if absorber:
        for a, coords in enumerate((P[..., 0], P[..., 1])):
            W_abs += cubic_ramp(np.abs(coords - 0.0) - (Ls[a] - w), w, absorber_amplitude)
    if chi is not None:
        chi_v = chi(P)
        layer = np.zeros(grid.shape, dtype=bool)
        for a, coords in enumerate((P[..., 0], P[..., 1])):
            layer |= np.abs(coords) >= Ls[a] - w
        if np.any(chi_v[layer] > 1e-14):
            raise GeometryError("box too small: the cutoff chi reaches into the absorbing layer")
    else:
        chi_v = np.ones(grid.shape)
    chi1_v = chi1(P) if chi1 is not None else np.ones(grid.shape)

    Dx = _second_difference(x.size, dx, sym[0])
    Dy = _second_difference(y.size, dx, sym[1])
    lap = sp.kron(Dx, sp.identity(y.size), format="csr") + sp.kron(sp.identity(x.size), Dy, format="csr")
    diag = h * h * V.ravel() - params.z - 1j * params.sign * W_abs.ravel()
    A = (h * h) * lap.astype(complex) + sp.diags(diag, format="csr")
    meta = {"half_width": Ls, "dx": dx, "layer_width": w, "symmetry": sym, "shift": tuple(shift),
            "absorber": bool(absorber)}
    return DiscreteOperator("2d-cartesian", A.tocsc(), chi_v.ravel(), chi1_v.ravel(), W_abs.ravel(),
                            params, grid, meta)


def _check_reflection(spec, chi, sym, P):
    rng = np.random.default_rng(1)
    pts = P.reshape(-1, 2)[rng.choice(P.shape[0] * P.shape[1], size=min(2000, P.shape[0] * P.shape[1]),
                                      replace=False)]
    for a in range(2):
        if sym[a] is None:
            continue
        q = pts.copy()
        q[:, a] *= -1
        v1, v2 = spec.values(pts), spec.values(q)
        if not np.allclose(v1, v2, rtol=1e-12, atol=1e-12):
            raise GeometryError(f"potential is not reflection symmetric along axis {a}")
        if chi is not None and not np.allclose(chi(pts), chi(q), atol=1e-14):
            raise GeometryError(f"cutoff is not reflection symmetric along axis {a}")
