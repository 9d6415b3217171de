"""Truncated resolvent norms, frequency sweeps and decay-law fits.

N(lambda) = || chi (P - lambda -+ i eps)^{-1} chi || = h^2 sigma_max(chi A^{-1} chi)
with A = h^2 P - z the rescaled operator.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import optimize, stats

from .cutoffs import Cutoff
from .errors import ConvergenceError, FitError, GeometryError, ResolventError, SweepError, UnsupportedConfiguration
from .operators import (PPW_MIN, DiscreteOperator, SemiclassicalParams, assemble_cartesian, assemble_radial_mode,
                        default_layer_width)
from .potential import PotentialSpec, effective_radial
from .radial import RadialGrid


@dataclass(frozen=True)
class NormResult:
    value: float
    sigma: float
    iterations: int
    residual: float
    history: tuple = ()
    method: str = "power"


def _philox(seed):
    return np.random.Generator(np.random.Philox(key=int(seed)))


def resolvent_norm(op: DiscreteOperator, tol: float = 1e-8, max_iter: int = 500, block: int = 4,
                   seed: int = 0, left_mask=None, full_output: bool = False, method: str = "power"):
    """h^2 * largest singular value of diag(left) A^{-1} diag(chi).

    Block power iteration on the normal operator with Rayleigh-Ritz; every
    step is one forward and one adjoint solve with the cached LU factors.
    `method='direct'` forms the compressed inverse on the cutoff support
    (for small supports) and takes a dense SVD.
    """
    chi_r = op.chi
    chi_l = op.chi if left_mask is None else np.asarray(left_mask, float)
    J = np.flatnonzero(chi_r)
    I = np.flatnonzero(chi_l)
    h2 = op.h**2
    if J.size == 0 or I.size == 0:
        res = NormResult(0.0, 0.0, 0, 0.0, (), method)
        return res if full_output else 0.0
    n = op.n

    if method == "direct":
        B = np.zeros((n, J.size), dtype=complex)
        B[J, np.arange(J.size)] = chi_r[J]
        X = op.solve(B)
        resid = op.residual(X, B)
        M = chi_l[I, None] * X[I, :]
        s = sla.svdvals(M)[0]
        res = NormResult(float(h2 * s), float(s), 1, resid, (float(s),), "direct")
        return res if full_output else res.value
    if method != "power":
        raise ValueError("method must be 'power' or 'direct'")

    b = max(1, min(block, J.size, I.size))
    rng = _philox(seed)
    X = rng.standard_normal((J.size, b)) + 1j * rng.standard_normal((J.size, b))
    X, _ = np.linalg.qr(X)
    full = np.zeros((n, b), dtype=complex)
    hist = []
    worst_res = 0.0
    prev = None
    for it in range(1, max_iter + 1):
        full[:] = 0
        full[J, :] = chi_r[J, None] * X
        sol = op.solve(full)
        if it <= 2:
            worst_res = max(worst_res, op.residual(sol, full))
        Y = chi_l[I, None] * sol[I, :]
        _, s, Vh = np.linalg.svd(Y, full_matrices=False)
        sigma = float(s[0])
        hist.append(sigma)
        if prev is not None and abs(sigma - prev) <= tol * sigma:
            res = NormResult(float(h2 * sigma), sigma, it, worst_res, tuple(hist), "power")
            return res if full_output else res.value
        prev = sigma
        if sigma == 0.0:
            res = NormResult(0.0, 0.0, it, worst_res, tuple(hist), "power")
            return res if full_output else 0.0
        Y = Y @ Vh.conj().T
        full[:] = 0
        full[I, :] = chi_l[I, None] * Y
        adj = op.solve(full, trans="H")
        X, _ = np.linalg.qr(chi_r[J, None] * adj[J, :])
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations", hist)


def dense_resolvent_norm(op: DiscreteOperator, left_mask=None) -> float:
    """Oracle: dense inverse and SVD (small operators only)."""
    if op.n > 5000:
        raise ValueError("dense oracle limited to n <= 5000")
    chi_l = op.chi if left_mask is None else np.asarray(left_mask, float)
    Ainv = np.linalg.inv(op.to_dense())
    M = chi_l[:, None] * Ainv * op.chi[None, :]
    return float(op.h**2 * sla.svdvals(M)[0])


# --------------------------------------------------------------------------
# power-law fits


@dataclass(frozen=True)
class PowerLawFit:
    C: float
    p: float
    r2: float
    residuals: np.ndarray
    outliers: np.ndarray
    sigma: float
    lams: np.ndarray
    norms: np.ndarray

    def predict(self, lam):
        return self.C * np.asarray(lam, float) ** self.p


def fit_power_law(lams, norms, window: Optional[tuple] = None) -> PowerLawFit:
    """Least squares of log N = log C + p log lambda.

    Outliers are points whose residual from a repeated-median (Siegel) line
    exceeds 3 sigma, sigma being the MAD of those residuals; a single wild
    point cannot drag the reference line and mask itself.
    """
    lam = np.asarray(lams, float)
    N = np.asarray(norms, float)
    if window is not None:
        sel = (lam >= window[0]) & (lam <= window[1])
        lam, N = lam[sel], N[sel]
    if lam.size < 4:
        raise FitError(f"need at least 4 points in the fit window, got {lam.size}")
    x, y = np.log(lam), np.log(N)
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / ss_tot if ss_tot > 0 else 1.0
    slope, icpt = stats.siegelslopes(y, x)
    rres = y - (icpt + slope * x)
    mad = float(np.median(np.abs(rres - np.median(rres))))
    sigma = max(1.4826 * mad, 1e-12 * max(1.0, float(np.max(np.abs(y)))))
    out = np.abs(rres) > 3 * sigma
    return PowerLawFit(float(math.exp(coef[0])), float(coef[1]), r2, res, out, sigma, lam, N)


# --------------------------------------------------------------------------
# geometry policies


def _axis_extent(cut: Cutoff, a: int) -> float:
    return max(abs(c[a]) for c in cut.core) + cut.r_out


@dataclass
class CartesianPolicy:
    """2D Cartesian operator at fixed points per wavelength.

    The box is the smallest one holding supp chi, supp V and the pole margins
    plus `gap` and the absorbing layer; reflection sectors are used when the
    configuration allows it.
    """

    chi: Cutoff
    chi1: Optional[Cutoff] = None
    ppw: float = 10.0
    gap: float = 0.05
    layer_wavelengths: float = 2.0
    sectors: str = "auto"
    tol: float = 1e-8
    block: int = 4
    half_width: Optional[tuple] = None

    def box(self, spec: PotentialSpec, h: float):
        w = self.layer_wavelengths * 2 * math.pi * h
        if self.half_width is not None:
            return tuple(self.half_width), w
        L = []
        for a in range(2):
            ext = _axis_extent(self.chi, a)
            if self.chi1 is not None:
                ext = max(ext, _axis_extent(self.chi1, a))
            for p in spec.poles:
                ext = max(ext, abs(p.position[a]) + p.support_radius, abs(p.position[a]) + 2 * p.cutoff_radius)
            if not spec.background.is_zero:
                ext = max(ext, spec.background.support_radius)
            L.append(ext + self.gap + w)
        return tuple(L), w

    def sector_list(self, spec: PotentialSpec):
        if self.sectors == "none":
            return [(None, None)]
        sym = symmetric_axes(spec, self.chi)
        if not all(sym):
            if self.sectors == "auto":
                return [(None, None)]
            raise GeometryError("configuration is not reflection symmetric")
        out = [("even", "even"), ("even", "odd"), ("odd", "even"), ("odd", "odd")]
        if swap_symmetric(spec, self.chi):
            out.remove(("odd", "even"))
        return out

    def operators(self, spec: PotentialSpec, params: SemiclassicalParams, dx_factor: Optional[float] = None):
        h = params.h
        dx = h / (dx_factor or self.ppw)
        L, w = self.box(spec, h)
        for sym in self.sector_list(spec):
            yield sym, assemble_cartesian(spec, params, L, dx, w, self.chi, self.chi1, sym)

    def norm(self, spec, params, full_output=False):
        best, total_it, worst_res, detail = 0.0, 0, 0.0, {}
        for sym, op in self.operators(spec, params):
            r = resolvent_norm(op, tol=self.tol, block=self.block, full_output=True)
            op.release()
            detail[str(sym)] = r.value
            total_it += r.iterations
            worst_res = max(worst_res, r.residual)
            best = max(best, r.value)
        if full_output:
            return best, total_it, worst_res, detail
        return best


def symmetric_axes(spec: PotentialSpec, chi: Optional[Cutoff], n: int = 4000):
    rng = np.random.default_rng(7)
    R = max(spec.support_radius, chi.extent if chi is not None else 0.0, 1.0)
    pts = rng.uniform(-R, R, size=(n, 2))
    out = []
    for a in range(2):
        q = pts.copy()
        q[:, a] *= -1
        ok = np.allclose(spec.values(pts), spec.values(q), rtol=1e-12, atol=1e-12)
        if chi is not None:
            ok = ok and np.allclose(chi(pts), chi(q), atol=1e-14)
        out.append(bool(ok))
    return tuple(out)


def swap_symmetric(spec: PotentialSpec, chi: Optional[Cutoff], n: int = 4000) -> bool:
    rng = np.random.default_rng(8)
    R = max(spec.support_radius, chi.extent if chi is not None else 0.0, 1.0)
    pts = rng.uniform(-R, R, size=(n, 2))
    q = pts[:, ::-1]
    ok = np.allclose(spec.values(pts), spec.values(q), rtol=1e-12, atol=1e-12)
    if chi is not None:
        ok = ok and np.allclose(chi(pts), chi(q), atol=1e-14)
    return bool(ok)


@dataclass
class RadialModePolicy:
    """Mode-by-mode radial path for unipolar radial configurations."""

    chi: Cutoff
    chi1: Optional[Cutoff] = None
    ppw: float = 10.0
    gap: float = 0.1
    nu_factor: float = 1.5
    r_min: Optional[float] = None
    layer_wavelengths: float = 2.0

    def norm(self, spec, params, full_output=False):
        res = unipolar_mode_norm(spec, params, None, self.chi, self.chi1, ppw=self.ppw, gap=self.gap,
                                 nu_factor=self.nu_factor, r_min=self.r_min,
                                 layer_wavelengths=self.layer_wavelengths, full_output=True)
        if full_output:
            return res.value, res.modes_computed, res.residual, {"argmax_nu": res.argmax_nu,
                                                                  "tail_bound": res.tail_bound}
        return res.value


# --------------------------------------------------------------------------
# unipolar radial path


@dataclass(frozen=True)
class ModeNormResult:
    value: float
    argmax_nu: float
    nus: np.ndarray
    norms: np.ndarray
    tail_bound: float
    modes_computed: int
    residual: float


def radial_outer_radius(chi: Cutoff, chi1: Optional[Cutoff], spec: PotentialSpec, gap: float, w: float) -> float:
    ext = chi.r_out if chi1 is None else max(chi.r_out, chi1.r_out)
    return max(ext, spec.support_radius) + gap + w


def radial_grid_for(spec: PotentialSpec, h: float, R_max: float, ppw: float = 10.0,
                    r_min: Optional[float] = None) -> RadialGrid:
    if r_min is None:
        l = spec.poles[0].cutoff_radius if spec.poles else 1.0
        r_min = 1e-6 * l
    return RadialGrid.graded(r_min, R_max, h / ppw, per_decade=64)


def sphere_nus(d: int, nu_max: float):
    if d == 2:
        return np.arange(0, int(math.floor(nu_max)) + 1, dtype=float)
    if d == 3:
        L = int(math.floor((-1 + math.sqrt(1 + 4 * nu_max**2)) / 2))
        return np.sqrt(np.arange(L + 1) * (np.arange(L + 1) + 1.0))
    raise UnsupportedConfiguration("mode path implemented for d in {2, 3}")


def unipolar_mode_norm(spec: PotentialSpec, params: SemiclassicalParams, nu_max: Optional[float],
                       chi: Cutoff, chi1: Optional[Cutoff] = None, ppw: float = 10.0, gap: float = 0.1,
                       nu_factor: float = 1.5, r_min: Optional[float] = None, tail_modes: int = 4,
                       layer_wavelengths: float = 2.0, full_output: bool = False):
    """sup over modes nu_k <= nu_max of the 1D mode resolvent norms.

    For a radial configuration the truncated resolvent is block diagonal over
    angular modes, so the full norm is the supremum of the mode norms.  The
    next `tail_modes` modes above nu_max are also computed and their maximum
    is reported as the tail bound.
    """
    if not spec.is_unipolar_radial():
        raise UnsupportedConfiguration("unipolar_mode_norm needs a single radial pole at the origin")
    if len(chi.core) != 1 or any(chi.core[0]):
        raise UnsupportedConfiguration("chi must be radial about the pole")
    h = params.h
    if nu_max is None:
        nu_max = math.ceil(nu_factor * chi.r_out / h)
    w = layer_wavelengths * 2 * math.pi * h
    R_max = radial_outer_radius(chi, chi1, spec, gap, w)
    grid = radial_grid_for(spec, h, R_max, ppw, r_min)
    d = spec.dimension
    all_nus = sphere_nus(d, 10 * nu_max + 10 * tail_modes + 10)
    nus = all_nus[all_nus <= nu_max + 1e-12]
    tail = all_nus[len(nus):len(nus) + tail_modes]
    norms = []
    worst = 0.0
    for k, nu in enumerate(np.concatenate([nus, tail])):
        mode = effective_radial(spec, 0, float(nu), mode_index=k) if spec.poles else _free_mode(spec, nu)
        op = assemble_radial_mode(spec, mode, params, grid, layer_width=w, chi=chi, chi1=chi1)
        r = resolvent_norm(op, method="direct", full_output=True)
        norms.append(r.value)
        worst = max(worst, r.residual)
    norms = np.array(norms)
    main = norms[: len(nus)]
    i = int(np.argmax(main))
    tail_bound = float(np.max(norms[len(nus):])) if len(tail) else 0.0
    res = ModeNormResult(float(main[i]), float(nus[i]), nus, main, tail_bound, len(norms), worst)
    return res if full_output else res.value


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepRecord:
    lam: float
    epsilon: float
    norm: float
    iterations: int
    residual: float
    wall_ms: float
    detail: dict = field(default_factory=dict)

    @property
    def scaled(self) -> float:
        return self.norm * math.sqrt(self.lam)


@dataclass(frozen=True)
class SweepResult:
    records: tuple
    failures: dict
    fit: Optional[PowerLawFit]
    window: tuple
    digest: str = ""

    @property
    def lams(self):
        return np.array([r.lam for r in self.records])

    @property
    def norms(self):
        return np.array([r.norm for r in self.records])

    @property
    def scaled(self):
        """N(lambda) sqrt(lambda) per record."""
        return np.array([r.scaled for r in self.records])

    @property
    def C_emp(self) -> float:
        return float(max(r.scaled for r in self.records))

    @property
    def p(self) -> float:
        return self.fit.p if self.fit else float("nan")

    def top_octave_variation(self) -> float:
        """Relative spread of N sqrt(lambda) over lambda in [lambda_max/2, lambda_max]."""
        lam = self.lams
        s = np.array([r.scaled for r in self.records])
        sel = lam >= lam.max() / 2 * (1 - 1e-12)
        return float((s[sel].max() - s[sel].min()) / s[sel].min())


def epsilon_for(lam: float, policy) -> float:
    """policy: float c (epsilon = c lambda), ('relative', c) or ('absolute', e)."""
    if isinstance(policy, (int, float)):
        return float(policy) * lam
    kind, val = policy
    if kind == "relative":
        return float(val) * lam
    if kind == "absolute":
        return float(val)
    raise ValueError(f"unknown epsilon policy {policy!r}")


def default_window(lams):
    """Upper half of the sweep in log space, extended down to 4 points."""
    lam = np.sort(np.asarray(lams, float))
    mid = math.sqrt(lam[0] * lam[-1])
    upper = lam[lam >= mid * (1 - 1e-12)]
    if upper.size < 4:
        upper = lam[-4:]
    return (float(upper[0]), float(upper[-1]))


def frequency_sweep(spec: PotentialSpec, lams: Sequence[float], eps_policy=1e-6, geometry=None,
                    threads: int = 1, sign: int = 1, window: Optional[tuple] = None,
                    digest: str = "", on_record: Optional[Callable] = None) -> SweepResult:
    """N(lambda) over `lams` with the given geometry policy, then a power-law fit."""
    if geometry is None:
        raise ValueError("a geometry policy is required")
    lams = [float(l) for l in lams]
    if any(l < 4 for l in lams):
        raise ValueError("lambda values must be >= 4")

    def one(lam):
        eps = epsilon_for(lam, eps_policy)
        params = SemiclassicalParams(lam, eps, sign)
        t0 = time.perf_counter()
        val, its, res, detail = geometry.norm(spec, params, full_output=True)
        return SweepRecord(lam, eps, float(val), int(its), float(res), 1e3 * (time.perf_counter() - t0),
                           detail)

    results, failures = {}, {}

    def guarded(lam):
        try:
            return lam, one(lam), None
        except ResolventError as exc:
            return lam, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(guarded, lams))
    else:
        outs = [guarded(l) for l in lams]
    for lam, rec, err in outs:
        if rec is None:
            failures[lam] = err
        else:
            results[lam] = rec
            if on_record:
                on_record(rec)
    if len(failures) > 0.25 * len(lams):
        raise SweepError(f"{len(failures)} of {len(lams)} sweep points failed", failures)
    records = tuple(results[l] for l in sorted(results))
    lam_ok = [r.lam for r in records]
    fit = None
    win = window or (default_window(lam_ok) if len(lam_ok) >= 4 else (min(lam_ok), max(lam_ok)))
    try:
        fit = fit_power_law(lam_ok, [r.norm for r in records], win)
    except FitError:
        fit = None
    return SweepResult(records, failures, fit, win, digest)


# --------------------------------------------------------------------------
# trapping control


@dataclass(frozen=True)
class PeakScan:
    lam_grid: np.ndarray
    scaled: np.ndarray  # max over modes of N sqrt(lambda) on the grid
    peak_lam: float
    peak_scaled: float
    peak_nu: float


def mode_scaled_norm(spec, lam, nu, chi, chi1=None, ppw=10.0, gap=0.1, eps_rel=1e-6, r_min=None):
    params = SemiclassicalParams(lam, eps_rel * lam)
    h = params.h
    w = 4 * math.pi * h
    R_max = radial_outer_radius(chi, chi1, spec, gap, w)
    grid = radial_grid_for(spec, h, R_max, ppw, r_min)
    mode = effective_radial(spec, 0, float(nu)) if spec.poles else _free_mode(spec, nu)
    op = assemble_radial_mode(spec, mode, params, grid, layer_width=w, chi=chi, chi1=chi1)
    return resolvent_norm(op, method="direct") * math.sqrt(lam)


def _free_mode(spec, nu):
    from .potential import EffectiveRadialPotential

    d = spec.dimension
    b = nu**2 + (d * d - 4 * d + 3) / 4
    return EffectiveRadialPotential(0, float(nu), b, math.sqrt((d / 2 - 1) ** 2 + spec.hardy_constant + nu**2),
                                    abs(b), d, spec.radial_potential, 1.0)


def resonance_scan(spec: PotentialSpec, lam_min: float, lam_max: float, n_grid: int, chi: Cutoff,
                   chi1: Optional[Cutoff] = None, nu_max: Optional[float] = None, ppw: float = 10.0,
                   refine: int = 3, eps_rel: float = 1e-6) -> PeakScan:
    """Largest N(lambda) sqrt(lambda) over a lambda grid and the radial modes,
    with bounded scalar refinement around the best local maxima."""
    if not spec.is_unipolar_radial():
        raise UnsupportedConfiguration("resonance scan uses the radial mode path")
    lam_grid = np.linspace(lam_min, lam_max, n_grid)
    d = spec.dimension
    if nu_max is None:
        nu_max = math.ceil(1.5 * chi.r_out * math.sqrt(lam_max))
    nus = sphere_nus(d, nu_max)
    table = np.array([[mode_scaled_norm(spec, lam, nu, chi, chi1, ppw, eps_rel=eps_rel) for nu in nus]
                      for lam in lam_grid])
    scaled = table.max(axis=1)
    best = (float(scaled.max()), float(lam_grid[int(np.argmax(scaled))]),
            float(nus[int(np.argmax(table[int(np.argmax(scaled))]))]))
    # refine the strongest local maxima of each mode
    cands = []
    for j in range(len(nus)):
        col = table[:, j]
        for i in range(1, n_grid - 1):
            if col[i] >= col[i - 1] and col[i] >= col[i + 1]:
                cands.append((col[i], i, j))
    cands.sort(reverse=True)
    dl = lam_grid[1] - lam_grid[0]
    for _, i, j in cands[:refine]:
        nu = nus[j]
        f = lambda lam: -mode_scaled_norm(spec, lam, nu, chi, chi1, ppw, eps_rel=eps_rel)
        out = optimize.minimize_scalar(f, bounds=(lam_grid[i] - dl, lam_grid[i] + dl), method="bounded",
                                       options={"xatol": 1e-10 * lam_grid[i], "maxiter": 200})
        if -out.fun > best[0]:
            best = (float(-out.fun), float(out.x), float(nu))
    return PeakScan(lam_grid, scaled, best[1], best[0], best[2])
