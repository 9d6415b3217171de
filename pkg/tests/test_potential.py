import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from multipole_resolvent import (DomainError, GeometryError, Pole, PotentialSpec, UnsupportedConfiguration,
                                 barrier_well, effective_radial, evaluate_potential, hardy_quotient,
                                 inverse_square, validate_hypotheses)
from multipole_resolvent.errors import UndefinedQuotientError
from multipole_resolvent.potential import AngularTable, custom_table, log_squared

from conftest import single_pole, two_poles


def test_inverse_square_values_inside_cutoff():
    spec = single_pole(a=2.0)
    x = np.array([[0.1, 0.0], [0.0, 0.3], [0.2, -0.2]])
    r2 = np.sum(x**2, axis=1)
    assert np.allclose(evaluate_potential(spec, x), 2.0 / r2, rtol=1e-14)


def test_potential_vanishes_beyond_support():
    spec = single_pole(l=0.5, taper=0.25)
    assert evaluate_potential(spec, np.array([0.76, 0.0])) == 0.0
    # taper band: between 0 and the pure profile
    v = evaluate_potential(spec, np.array([0.6, 0.0]))
    assert 0 < v < 1 / 0.36


def test_pole_evaluation_raises():
    spec = two_poles()
    with pytest.raises(DomainError):
        evaluate_potential(spec, np.array([[0.0, 0.0], [1.5, 0.0]]))


def test_overlapping_poles_rejected():
    with pytest.raises(GeometryError):
        two_poles(l=0.5, sep=0.7)


def test_barrier_well_profile():
    bg = barrier_well()
    spec = PotentialSpec(2, (), bg)
    pts = np.array([[0.5, 0], [1.5, 0], [2.2, 0], [3.0, 0]])
    assert np.allclose(evaluate_potential(spec, pts), [0, -50, 50, 0])


def test_custom_table_interpolates():
    prof = custom_table([0.1, 0.2, 0.4], [1.0, 3.0, 7.0])
    assert np.allclose(prof([0.15, 0.3]), [2.0, 5.0])


def test_angular_table_periodic():
    tab = AngularTable.from_array([0.0, 1.0, 2.0, 1.0])
    assert np.isclose(tab(2 * np.pi), 0.0)
    assert np.isclose(tab(np.pi / 4), 0.5)


def test_validation_passes_for_admissible_pole():
    rep = validate_hypotheses(single_pole(a=1.0))
    assert rep.passed, rep.summary()


def test_validation_flags_floor_violation_d3():
    spec = PotentialSpec(3, (Pole((0, 0, 0), inverse_square(-0.3), 0.5),), hardy_constant=-0.3)
    rep = validate_hypotheses(spec)
    assert not rep["positivity_floor"].passed


def test_validation_flags_log_squared_upper_bound():
    spec = PotentialSpec(2, (Pole((0, 0), log_squared(1.0), 0.5),), hardy_constant=0.0, bound_constant=5.0)
    rep = validate_hypotheses(spec)
    assert not rep["HypV3[pole 0]"].passed
    assert rep["HypV2[pole 0]"].passed
    assert rep["HypV3[pole 0]"].failing_radius is not None


def test_gradient_bound_uses_2a():
    a = 1.5
    ok = PotentialSpec(2, (Pole((0, 0), inverse_square(a), 0.5, taper=0.25),), hardy_constant=a,
                       bound_constant=a, gradient_constant=2 * a)
    assert validate_hypotheses(ok)["HypV4[pole 0]"].passed
    bad = PotentialSpec(2, ok.poles, hardy_constant=a, bound_constant=a, gradient_constant=1.9 * a)
    assert not validate_hypotheses(bad)["HypV4[pole 0]"].passed


def test_effective_radial_coefficients():
    spec = single_pole(a=1.0, d=3)
    m = effective_radial(spec, 0, math.sqrt(6.0))
    assert np.isclose(m.b_k, 6.0 + 0.0)  # (d^2 - 4d + 3)/4 = 0 in d = 3
    assert np.isclose(m.sigma_k, math.sqrt(0.25 + 1.0 + 6.0))
    r = np.array([0.1, 0.2])
    assert np.allclose(m.W(r), 1 / r**2 + 6 / r**2)


def test_effective_radial_rejects_angular_pole():
    spec = PotentialSpec(2, (Pole((0, 0), inverse_square(1.0), 0.5, AngularTable.from_array(np.ones(8))),),
                         hardy_constant=1.0)
    with pytest.raises(UnsupportedConfiguration):
        effective_radial(spec, 0, 1.0)


def test_hardy_quotient_zero_field():
    with pytest.raises(UndefinedQuotientError):
        hardy_quotient(3, (np.linspace(0, 1, 5), np.zeros(5)))


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=4, max_size=40), st.floats(1e-3, 0.5))
def test_hardy_quotient_never_below_floor(vals, r0):
    """Conforming trial fields respect the d = 3 constant 1/4 exactly."""
    vals = np.array(vals + [0.0])
    if not np.any(np.abs(vals) > 1e-150):  # |u|^2 underflows: the quotient is undefined in doubles
        return
    r = r0 + np.cumsum(np.r_[0.0, np.full(vals.size - 1, (1 - r0) / (vals.size - 1))])
    assert hardy_quotient(3, (r, vals)) >= 0.25 * (1 - 1e-12)


def test_hardy_quotient_constant_field_oracle():
    """u = 1 on [0, 1/2], linear to 0 at 1: closed-form quotient."""
    r = np.array([0.5, 1.0])
    u = np.array([1.0, 0.0])
    num = 4.0 * (1 - 0.125) / 3  # |u'|^2 = 4 times int r^2 dr over (1/2, 1)
    den = 0.5 + 4 * 0.5**3 / 3  # int_0^{1/2} 1 dr + int_{1/2}^1 (2 - 2r)^2 dr
    assert np.isclose(hardy_quotient(3, (r, u)), num / den, rtol=1e-12)
