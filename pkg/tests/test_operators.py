import math

import numpy as np
import pytest
from scipy import special

from multipole_resolvent import (Cutoff, GeometryError, PotentialSpec, RadialGrid, ResolutionError,
                                 SemiclassicalParams, assemble_cartesian, assemble_radial_mode)
from multipole_resolvent.operators import read_coo
from multipole_resolvent.resolvent import _free_mode


def test_params_derived_quantities():
    p = SemiclassicalParams(400.0, 2.0)
    assert p.h == 0.05
    assert np.isclose(p.alpha, 0.1)
    assert np.isclose(p.z, 1 + 0.005j)
    assert SemiclassicalParams(400.0, 2.0, -1).z == np.conj(p.z)
    assert np.isclose(p.spectral_point(), 400 + 2j)


@pytest.mark.parametrize("bad", [dict(lam=1.0), dict(lam=10.0, epsilon=0.0), dict(lam=10.0, sign=0)])
def test_params_reject(bad):
    with pytest.raises(ValueError):
        SemiclassicalParams(**bad)


def _disk_eigs(nu, spacing, count=3):
    spec = PotentialSpec(2)
    params = SemiclassicalParams(100.0, 1e-4)
    grid = RadialGrid.graded(1e-6, 1.0, spacing)
    op = assemble_radial_mode(spec, _free_mode(spec, nu), params, grid, absorber=False)
    M = op.to_dense() + params.z * np.eye(op.n)
    ev = np.sort(np.linalg.eigvalsh(0.5 * (M + M.T).real)) / params.h**2
    return ev[:count]


@pytest.mark.parametrize("nu", [0, 1, 3])
def test_form_scheme_matches_bessel_zeros(nu):
    """Dirichlet disk of radius 1: eigenvalues j_{nu,n}^2."""
    ev = _disk_eigs(nu, 0.002)
    assert np.allclose(ev, special.jn_zeros(nu, 3) ** 2, rtol=1e-4)


def test_form_scheme_second_order():
    ref = special.jn_zeros(0, 1)[0] ** 2
    e1 = abs(_disk_eigs(0, 0.005, 1)[0] - ref)
    e2 = abs(_disk_eigs(0, 0.0025, 1)[0] - ref)
    assert 1.7 < math.log2(e1 / e2) < 2.3


def test_radial_sample_is_l2_isometry():
    spec = PotentialSpec(2)
    params = SemiclassicalParams(100.0)
    grid = RadialGrid.graded(1e-6, 4.0, 0.005)
    op = assemble_radial_mode(spec, _free_mode(spec, 0), params, grid)
    x = op.sample(lambda r: np.exp(-r**2))
    assert np.isclose(np.vdot(x, x).real, 0.25, rtol=1e-4)  # int e^{-2 r^2} r dr
    assert np.allclose(op.nodal(x), np.exp(-op.grid.nodes**2))


def test_radial_resolution_guard():
    spec = PotentialSpec(2)
    with pytest.raises(ResolutionError):
        assemble_radial_mode(spec, _free_mode(spec, 0), SemiclassicalParams(400.0),
                             RadialGrid.graded(1e-6, 1.0, 0.01))


def _box_eigs_1d(n, dx):
    k = np.arange(1, n + 1)
    return 4 / dx**2 * np.sin(k * np.pi / (2 * (n + 1))) ** 2


def test_cartesian_dirichlet_spectrum():
    spec = PotentialSpec(2)
    params = SemiclassicalParams(100.0, 1e-4)
    dx = 0.01
    op = assemble_cartesian(spec, params, 0.1, dx, absorber=False)
    n = op.grid.x.size
    M = op.to_dense() + params.z * np.eye(op.n)
    ev = np.sort(np.linalg.eigvalsh(0.5 * (M + M.conj().T))) / params.h**2
    e1 = _box_eigs_1d(n, dx)
    expect = np.sort((e1[:, None] + e1[None, :]).ravel())
    assert np.allclose(ev, expect, rtol=1e-10)


def test_parity_sectors_partition_spectrum():
    spec = PotentialSpec(2)
    params = SemiclassicalParams(100.0, 1e-4)
    full = assemble_cartesian(spec, params, 0.1, 0.01, absorber=False)
    ev_full = np.sort(np.linalg.eigvals(full.to_dense()).real)
    parts = []
    for sym in [("even", "even"), ("even", "odd"), ("odd", "even"), ("odd", "odd")]:
        op = assemble_cartesian(spec, params, 0.1, 0.01, absorber=False, symmetry=sym)
        parts.append(np.linalg.eigvals(op.to_dense()).real)
    assert np.allclose(np.sort(np.concatenate(parts)), ev_full, atol=1e-9)


def test_cartesian_absorber_and_symmetry():
    spec = PotentialSpec(2)
    params = SemiclassicalParams(100.0)
    op = assemble_cartesian(spec, params, 1.5, 0.01)
    assert op.is_symmetric(1e-12)
    assert op.absorber.max() > 1.0 and op.absorber.min() == 0.0
    # the absorbing term carries the sign of the spectral point
    d = op.matrix.diagonal()
    assert np.all(d.imag <= 0)


def test_chi_in_layer_rejected():
    spec = PotentialSpec(2)
    chi = Cutoff.around([(0.0, 0.0)], 0.5, 1.0)
    with pytest.raises(GeometryError):
        assemble_cartesian(spec, SemiclassicalParams(100.0), 1.2, 0.01, chi=chi)


def test_cartesian_resolution_guard():
    with pytest.raises(ResolutionError):
        assemble_cartesian(PotentialSpec(2), SemiclassicalParams(100.0), 1.0, 0.02)


def test_coo_round_trip(tmp_path):
    op = assemble_cartesian(PotentialSpec(2), SemiclassicalParams(100.0), 0.8, 0.01)
    path = tmp_path / "a.coo"
    op.export_coo(path)
    B = read_coo(path)
    assert abs(B - op.matrix).max() == 0.0
