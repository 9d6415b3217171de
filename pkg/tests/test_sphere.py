import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from multipole_resolvent import analytic_basis, angular_eigenproblem, split_modes
from multipole_resolvent.errors import BasisTooSmallError, HypothesisError
from multipole_resolvent.sphere import PolarField


@pytest.mark.parametrize("d,max_nu", [(2, 6), (3, 5)])
def test_analytic_basis_orthonormal(d, max_nu):
    b = analytic_basis(d, max_nu)
    assert np.allclose(b.gram(), np.eye(len(b)), atol=1e-12)


def test_d3_multiplicities():
    b = analytic_basis(3, math.sqrt(4 * 5))
    for l in range(5):
        k = int(np.flatnonzero(np.isclose(b.nu2, l * (l + 1)))[0])
        assert b.multiplicity(k) == 2 * l + 1


def test_d2_multiplicities_and_values():
    b = analytic_basis(2, 4)
    assert b.nu2[0] == 0 and b.multiplicity(0) == 1
    assert all(b.multiplicity(k) == 2 for k in range(1, len(b)))
    assert np.allclose(sorted(set(b.nu2)), [0, 1, 4, 9, 16])


def test_constant_angular_potential_shifts_spectrum():
    c = 0.7
    basis = angular_eigenproblem(np.full(1024, c), 9)
    expect = np.sort([c] + [k * k + c for k in range(1, 5) for _ in range(2)])
    assert np.allclose(basis.nu2, expect, atol=1e-6)


def test_mathieu_oracle():
    """b = 2q(1 + cos 2 theta) reduces to Mathieu's equation with a = nu^2 - 2q."""
    q = 1.3
    N = 1024
    theta = 2 * np.pi * np.arange(N) / N
    basis = angular_eigenproblem(2 * q * (1 + np.cos(2 * theta)), 7)
    chars = [special.mathieu_a(0, q)]
    for m in range(1, 4):
        chars += [special.mathieu_a(m, q), special.mathieu_b(m, q)]
    expect = np.sort(np.array(chars) + 2 * q)
    assert np.allclose(basis.nu2, expect, atol=1e-6)


def test_raw_scheme_second_order():
    b = lambda n: 1.0 + 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    e = []
    ref = angular_eigenproblem(b(4096), 5).nu2
    for n in (256, 512):
        e.append(np.max(np.abs(angular_eigenproblem(b(n), 5, richardson=False).nu2 - ref)))
    order = math.log2(e[0] / e[1])
    assert 1.8 < order < 2.2


def test_negative_angular_potential_rejected():
    with pytest.raises(HypothesisError):
        angular_eigenproblem(np.r_[np.ones(511), -0.1], 4)


def _random_field(rng, basis, nr, kmax):
    r = np.linspace(0.05, 1.0, nr)
    th = basis.grid["theta"]
    U = np.zeros((nr, th.size), complex)
    for k in range(-kmax, kmax + 1):
        U += np.outer(rng.standard_normal(nr) + 1j * rng.standard_normal(nr), np.exp(1j * k * th))
    return PolarField(r, U)


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 7.5))
def test_split_is_orthogonal_and_complete(seed, nu_t):
    rng = np.random.default_rng(seed)
    basis = analytic_basis(2, 10)
    fld = _random_field(rng, basis, 12, 8)
    s = split_modes(fld, basis, nu_t)
    wr = fld.weights(2)
    wa = basis.weights
    tot = float(np.sum(np.abs(fld.values) ** 2 * wa * wr[:, None]))
    parts = s.energy("small", wr, wa) + s.energy("large", wr, wa)
    assert np.isclose(parts, tot, rtol=1e-10)
    cross = np.sum(np.conj(s.small_part) * s.large_part * wa * wr[:, None])
    assert abs(cross) <= 1e-10 * tot


def test_split_invariant_under_rotation():
    """Eigenspaces are kept whole, so rotating the field rotates both parts."""
    rng = np.random.default_rng(3)
    basis = analytic_basis(2, 10)
    fld = _random_field(rng, basis, 6, 6)
    shift = 37
    rot = PolarField(fld.r, np.roll(fld.values, shift, axis=1))
    a = split_modes(fld, basis, 3.0)
    b = split_modes(rot, basis, 3.0)
    assert np.allclose(np.roll(a.small_part, shift, axis=1), b.small_part, atol=1e-10)


def test_split_detects_missing_modes():
    rng = np.random.default_rng(4)
    basis = analytic_basis(2, 4, n_angular=256)
    fld = _random_field(rng, basis, 5, 9)
    with pytest.raises(BasisTooSmallError):
        split_modes(fld, basis, 2.0)
