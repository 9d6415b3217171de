import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from multipole_resolvent import (CartesianPolicy, Cutoff, PotentialSpec, RadialGrid, RadialModePolicy,
                                 SemiclassicalParams, assemble_radial_mode, effective_radial, fit_power_law,
                                 frequency_sweep, resolvent_norm, unipolar_mode_norm)
from multipole_resolvent.errors import FitError, UnsupportedConfiguration
from multipole_resolvent.resolvent import default_window, dense_resolvent_norm, epsilon_for

from conftest import single_pole, two_poles


def small_radial_operator(seed):
    """Random unipolar mode operator with n <= 400 unknowns."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.05, 3.0)
    lam = rng.uniform(16, 40)
    nu = int(rng.integers(0, 6))
    spec = single_pole(a=a, l=0.5, taper=0.25)
    params = SemiclassicalParams(lam, rng.uniform(1e-6, 1e-2) * lam)
    h = params.h
    R = 1.2 + 4 * math.pi * h
    grid = RadialGrid.graded(1e-2, R, h / 10)
    r_in = rng.uniform(0.2, 0.6)
    chi = Cutoff.around([(0.0, 0.0)], r_in, r_in + rng.uniform(0.1, 0.5))
    op = assemble_radial_mode(spec, effective_radial(spec, 0, float(nu)), params, grid, chi=chi)
    assert op.n <= 400
    return op


@given(st.integers(0, 10**6))
def test_power_iteration_matches_dense(seed):
    op = small_radial_operator(seed)
    assert np.isclose(resolvent_norm(op, tol=1e-12), dense_resolvent_norm(op), rtol=1e-8)


def test_direct_method_matches_dense():
    op = small_radial_operator(7)
    assert np.isclose(resolvent_norm(op, method="direct"), dense_resolvent_norm(op), rtol=1e-10)


def test_zero_cutoff_gives_zero():
    op = small_radial_operator(1)
    op.chi[:] = 0
    assert resolvent_norm(op) == 0.0


@given(st.floats(0.1, 10), st.floats(-1.5, 0.5), st.integers(4, 12))
def test_fit_recovers_power_law(C, p, n):
    lams = np.geomspace(50, 5000, n)
    fit = fit_power_law(lams, C * lams**p)
    assert np.isclose(fit.p, p, atol=1e-9)
    assert np.isclose(fit.C, C, rtol=1e-8)
    assert not fit.outliers.any()


def test_fit_flags_outlier_and_needs_four_points():
    lams = np.geomspace(100, 1600, 8)
    N = 0.5 * lams**-0.5 * (1 + 1e-3 * np.sin(np.arange(8)))
    N[3] *= 3
    fit = fit_power_law(lams, N)
    assert fit.outliers[3] and fit.outliers.sum() == 1
    with pytest.raises(FitError):
        fit_power_law(lams[:3], N[:3])


def test_default_window_and_epsilon_policy():
    assert default_window([100, 200, 400, 800, 1600]) == (200.0, 1600.0)
    assert np.allclose(default_window(np.geomspace(100, 1600, 9)), (400.0, 1600.0), rtol=1e-12)
    assert np.isclose(epsilon_for(400, 1e-6), 4e-4, rtol=1e-14)
    assert epsilon_for(400, ("absolute", 0.5)) == 0.5
    with pytest.raises(ValueError):
        epsilon_for(400, ("weird", 1.0))


def test_mode_path_requires_radial_configuration():
    chi = Cutoff.around([(0.0, 0.0)], 0.9, 1.2)
    with pytest.raises(UnsupportedConfiguration):
        unipolar_mode_norm(two_poles(), SemiclassicalParams(100.0), 5, chi)


def test_free_mode_and_cartesian_paths_agree():
    spec = PotentialSpec(2)
    chi = Cutoff.around([(0.0, 0.0)], 0.5, 0.8)
    params = SemiclassicalParams(100.0)
    radial = unipolar_mode_norm(spec, params, None, chi)
    cart = CartesianPolicy(chi, ppw=10).norm(spec, params)
    assert abs(radial / cart - 1) < 0.02


def test_tail_bound_below_sup():
    res = unipolar_mode_norm(single_pole(), SemiclassicalParams(100.0), None,
                             Cutoff.around([(0.0, 0.0)], 0.9, 1.2), full_output=True)
    assert res.tail_bound < 0.1 * res.value


def test_norm_stable_in_epsilon():
    """Nontrapping: N changes by < 2% when epsilon goes from 1e-4 lambda to 1e-6 lambda."""
    chi = Cutoff.around([(0.0, 0.0)], 0.9, 1.2)
    spec = single_pole()
    a = unipolar_mode_norm(spec, SemiclassicalParams(200.0, 1e-4 * 200), None, chi)
    b = unipolar_mode_norm(spec, SemiclassicalParams(200.0, 1e-6 * 200), None, chi)
    assert abs(a / b - 1) < 0.02


def test_sweep_is_thread_independent():
    chi = Cutoff.around([(0.0, 0.0)], 0.5, 0.8)
    geom = RadialModePolicy(chi)
    lams = [50.0, 70.0, 100.0, 140.0]
    s1 = frequency_sweep(PotentialSpec(2), lams, 1e-6, geom, threads=1)
    s2 = frequency_sweep(PotentialSpec(2), lams, 1e-6, geom, threads=2)
    assert np.array_equal(s1.norms, s2.norms)
    assert s1.fit is not None and -0.8 < s1.p < -0.2
