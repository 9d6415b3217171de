import math

import numpy as np
import pytest

from multipole_resolvent import Cutoff, PotentialSpec, SemiclassicalParams, UnsupportedConfiguration
from multipole_resolvent.quasimodes import ForcingSpec, cartesian_quasimode, radial_quasimode

from conftest import single_pole, two_poles


def test_forcing_mode_expansion_matches_plane_waves():
    """Jacobi-Anger: sum_k f_k(r) e^{ik theta} reproduces the plane-wave sum."""
    fs = ForcingSpec(r_in=0.3, r_out=0.7, n_waves=12, seed=5)
    h = 0.05
    r = np.linspace(0.05, 0.8, 40)
    th = np.linspace(0, 2 * np.pi, 17)
    ks, fk = fs.radial_modes(r, h, 60)
    recon = np.einsum("kr,kt->rt", fk, np.exp(1j * np.outer(ks, th)))
    R, T = np.meshgrid(r, th, indexing="ij")
    direct = fs(np.stack([R * np.cos(T), R * np.sin(T)], axis=-1), h)
    assert np.max(np.abs(recon - direct)) < 1e-10 * np.max(np.abs(direct))


def test_forcing_is_seeded():
    a = ForcingSpec(seed=3).waves()
    b = ForcingSpec(seed=3).waves()
    c = ForcingSpec(seed=4).waves()
    assert np.array_equal(a[1], b[1]) and not np.array_equal(a[1], c[1])


@pytest.fixture(scope="module")
def free_pair():
    spec = PotentialSpec(2)
    params = SemiclassicalParams(100.0)
    chi = Cutoff.around([(0.0, 0.0)], 0.9, 1.2)
    chi1 = Cutoff.around([(0.0, 0.0)], 1.2, 1.8)
    fs = ForcingSpec(seed=1)
    return radial_quasimode(spec, params, fs, chi, chi1), cartesian_quasimode(spec, params, fs, chi, chi1)


def test_radial_quasimode_normalised(free_pair):
    q, _ = free_pair
    chi1 = Cutoff.around([(0.0, 0.0)], 1.2, 1.8)
    assert np.isclose(q.field.norm2(chi1.radial(q.field.r) ** 2), 1.0, rtol=1e-12)
    assert q.residual < 1e-6
    assert q.forcing_norm > 0


def test_radial_and_cartesian_quasimodes_agree(free_pair):
    qr, qc = free_pair
    pts = np.array([[0.3, 0.1], [-0.5, 0.4], [0.0, -0.8], [1.0, 0.2], [-0.7, -0.6]])
    a = qr.field.evaluate(pts)
    b = qc.field.interpolate(pts)
    assert np.linalg.norm(a - b) < 0.05 * np.linalg.norm(a)
    assert abs(qr.forcing_norm / qc.forcing_norm - 1) < 0.05


def test_radial_path_rejects_off_centre():
    params = SemiclassicalParams(100.0)
    chi = Cutoff.around([(0.0, 0.0)], 0.9, 1.2)
    with pytest.raises(UnsupportedConfiguration):
        radial_quasimode(two_poles(), params, ForcingSpec(), chi, chi)
    with pytest.raises(UnsupportedConfiguration):
        radial_quasimode(single_pole(), params, ForcingSpec(center=(0.1, 0.0)), chi, chi)


def test_pole_quasimode_vanishes_at_pole():
    """With a = 1 the slowest mode behaves like r^{sqrt(a)}: density ~ r^2 at the pole."""
    params = SemiclassicalParams(100.0)
    chi = Cutoff.around([(0.0, 0.0)], 0.9, 1.2)
    chi1 = Cutoff.around([(0.0, 0.0)], 1.2, 1.8)
    q = radial_quasimode(single_pole(a=1.0), params, ForcingSpec(seed=2), chi, chi1)
    dens = q.field.angular_density()
    small = q.field.r < 1e-3
    slope = np.polyfit(np.log(q.field.r[small]), np.log(dens[small]), 1)[0]
    assert abs(slope - 2.0) < 0.05
    assert math.isfinite(q.field.gradient_energy(q.h))
