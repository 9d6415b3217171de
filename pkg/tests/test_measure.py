import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from multipole_resolvent import GeometryError, ResolutionError
from multipole_resolvent.measure import (PhaseSymbol, annulus_centres, flux_ledger, husimi, husimi_stride,
                                         incoming_fraction, lattice_centres, lemma_gap, load_density, radial_step,
                                         save_density, shell_localization, transport_residual, _cones)
from multipole_resolvent.quasimodes import GridField

H = 0.01


def grid_field(fn, half=1.5, dx=0.005):
    x = -half + (np.arange(int(round(2 * half / dx))) + 0.5) * dx
    X, Y = np.meshgrid(x, x, indexing="ij")
    return GridField(x, x.copy(), fn(X, Y))


def coherent(x0, xi0, h=H):
    def fn(X, Y):
        dX, dY = X - x0[0], Y - x0[1]
        return (math.pi * h) ** -0.5 * np.exp(-(dX**2 + dY**2) / (2 * h) + 1j * (xi0[0] * dX + xi0[1] * dY) / h)
    return fn


def test_coherent_state_oracle():
    """H of a coherent state is (2 pi h)^{-2} exp(-(|dx|^2 + |dxi|^2) / (2h))."""
    x0, xi0 = (0.1, -0.05), (0.6, -0.8)
    fld = grid_field(coherent(x0, xi0))
    cen = np.array([[0.1, -0.05], [0.2, 0.0], [0.0, -0.1]])
    dens = husimi(fld, H, cen, cell=0.0025)
    KX, KY = dens.xi_grid()
    for c, Hc in zip(dens.x0, dens.H):
        dx2 = np.sum((c - np.asarray(x0)) ** 2)
        expect = (2 * math.pi * H) ** -2 * np.exp(-(dx2 + (KX - xi0[0]) ** 2 + (KY - xi0[1]) ** 2) / (2 * H))
        assert np.max(np.abs(Hc - expect)) < 1e-6 * expect.max()


def test_mass_matches_norm():
    fld = grid_field(lambda X, Y: np.exp(-(X**2 + Y**2) / 0.18 + 1j * X / H))
    dens = husimi(fld, H)
    assert dens.mass_consistency() < 1e-2


def test_zero_field():
    fld = grid_field(lambda X, Y: 0 * X + 0j)
    dens = husimi(fld, H)
    assert dens.mass == 0.0 and dens.mass_consistency() == 0.0
    assert shell_localization(dens, 0.4) == 0.0


def test_plane_wave_concentrates_on_the_shell():
    w = (math.cos(0.4), math.sin(0.4))
    fld = grid_field(lambda X, Y: np.exp(-(X**2 + Y**2) / 0.5 + 1j * (w[0] * X + w[1] * Y) / H))
    cen, cell = lattice_centres(fld, 0.05, region=lambda p: np.linalg.norm(p, axis=1) < 0.5, h=H)
    dens = husimi(fld, H, cen, cell)
    assert shell_localization(dens, 4 * math.sqrt(H)) > 0.999
    # an incoming plane wave pointing at -w
    inward = incoming_fraction(dens, 0.2, cos_min=0.5)
    assert 0.0 <= inward <= 1.0


def test_resolution_guards():
    fld = grid_field(lambda X, Y: 0 * X + 0j, dx=0.01)
    with pytest.raises(ResolutionError):
        husimi(fld, 0.01)
    fld = grid_field(lambda X, Y: 0 * X + 0j)
    with pytest.raises(ResolutionError):
        husimi(fld, H, np.zeros((1, 2)), cell=0.04)
    with pytest.raises(ValueError):
        husimi(fld, H, np.zeros((1, 2)))
    with pytest.raises(GeometryError):
        husimi(fld, H, np.array([[5.0, 0.0]]), cell=0.0025)


def test_stride_and_lattice_alignment():
    assert husimi_stride(0.005, 0.01) == 1
    assert husimi_stride(0.001, 0.01) == 5
    fld = grid_field(lambda X, Y: 0 * X + 0j, dx=0.001, half=0.2)
    _, cell = lattice_centres(fld, 0.05, h=0.01)
    step = math.sqrt(cell) / 0.001
    assert np.isclose(step % 5, 0) or np.isclose(step % 5, 5)


def test_density_io_round_trip(tmp_path):
    fld = grid_field(coherent((0.0, 0.0), (1.0, 0.0)), half=0.8)
    dens = husimi(fld, H, np.array([[0.0, 0.0], [0.05, 0.05]]), cell=0.0025)
    save_density(dens, tmp_path / "d.bin")
    back = load_density(tmp_path / "d.bin")
    assert np.array_equal(back.H, dens.H) and np.array_equal(back.x0, dens.x0)
    assert back.h == dens.h and back.cell == dens.cell
    (tmp_path / "bad.bin").write_bytes(b"NOTHUSIM")
    with pytest.raises(ValueError):
        load_density(tmp_path / "bad.bin")


@given(st.floats(0.05, 1.0), st.floats(0.01, 0.2))
def test_radial_step_derivative(r0, width):
    r = np.linspace(r0 - 2 * width, r0 + 2 * width, 4001)
    phi, mdphi = radial_step(r, r0, width)
    assert phi[0] == 1.0 and phi[-1] == 0.0
    assert np.allclose(-np.gradient(phi, r), mdphi, atol=1e-3 / width)
    assert np.isclose(np.trapezoid(mdphi, r), 1.0, atol=1e-6)


@given(st.floats(math.radians(5), math.radians(40)), st.lists(st.floats(0, 2 * math.pi), max_size=3))
def test_cones_partition_the_circle(theta_c, angles):
    dirs = [(math.cos(a), math.sin(a)) for a in angles]
    try:
        cones = _cones(dirs, theta_c)
    except GeometryError:
        return
    widths = [hi - lo for lo, hi, _ in cones]
    assert np.isclose(sum(widths), 2 * math.pi)
    assert max(widths) <= 2 * theta_c * (1 + 1e-9)
    assert sum(p for *_, p in cones) == len(set(round(a % (2 * math.pi), 12) for a in angles))
    for (_, hi, _), (lo, _, _) in zip(cones, cones[1:]):
        assert np.isclose(hi, lo)


def test_flux_of_outgoing_wave():
    """A radially outgoing packet gives lambda^+ > 0 and lambda^- = 0."""
    def fn(X, Y):
        r = np.hypot(X, Y)
        return np.exp(-((r - 0.4) ** 2) / 0.02 + 1j * r / H)
    fld = grid_field(fn, half=1.2)
    cen, cell = annulus_centres(fld, (0, 0), 0.25, 0.55, 0.05, h=H)
    dens = husimi(fld, H, cen, cell)
    led = flux_ledger(dens, (0, 0), 0.4, width=0.1)
    assert led.lam_minus.sum() < 1e-3 * led.lam_plus.sum()
    assert np.isclose(led.t.sum(), 1.0)
    assert np.linalg.norm(led.Z) < 0.05  # isotropic
    with pytest.raises(GeometryError):
        flux_ledger(dens, (0, 0), 0.4, l=0.3)


def test_transport_guards_and_plane_wave():
    fld = grid_field(lambda X, Y: np.exp(-(X**2 + Y**2) / 0.5 + 1j * X / H))
    sym = PhaseSymbol((0.0, 0.0), 0.3)
    cen, cell = annulus_centres(fld, (0, 0), 0, 0.3, 0.3 / 16, h=H)
    dens = husimi(fld, H, cen, cell)
    # xi . grad a integrates against a slowly varying amplitude: small residual
    assert transport_residual(dens, sym) < 0.1
    with pytest.raises(GeometryError):
        transport_residual(dens, sym, poles=[(0.35, 0.0)], pole_radius=0.1)
    coarse, cc = annulus_centres(fld, (0, 0), 0, 0.3, 0.05, h=H)
    with pytest.raises(ResolutionError):
        transport_residual(husimi(fld, H, coarse, cc), sym)


def test_symbol_transport_is_directional_derivative():
    sym = PhaseSymbol((0.2, 0.1), 0.4, xi_centre=(1.0, 0.0))
    x = np.array([0.35, 0.05])
    xi = np.array([0.3, -0.7])
    e = 1e-6
    fd = (sym(x + e * xi, xi) - sym(x - e * xi, xi)) / (2 * e)
    assert np.isclose(sym.transport(x, xi), fd, rtol=1e-6, atol=1e-9)


def test_lemma_gap():
    assert lemma_gap(3, 0.0, 0.0) == 0.0
    assert lemma_gap(2, 3.0, 2.0) == -0.25 + 9 - 1


def test_patches_may_not_leave_a_live_field():
    fld = grid_field(lambda X, Y: np.exp(1j * X / H), half=0.5)
    with pytest.raises(GeometryError):
        husimi(fld, H, np.array([[0.45, 0.0]]), cell=0.0025)
