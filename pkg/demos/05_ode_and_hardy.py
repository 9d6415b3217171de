"""
Near-pole analysis: Hardy's inequality and the ODE basis
========================================================

In d = 3, int |grad u|^2 >= (1/4) int |u|^2/|x|^2, and the constant is
approached by u = r^{-1/2 + delta} log(1/r).  Near a pole each angular mode
solves y'' = (q1 + i q2) y with q1 >= b/r^2; its two solutions behave like
r^{1/2 +- sqrt(b + 1/4)}.
"""

import math

import numpy as np

from multipole_resolvent import OdeCoefficients, RadialGrid, build_basis, hardy_quotient

for delta in (0.2, 0.1, 0.05, 0.02):
    r = np.geomspace(1e-60, 1.0, 60 * 64 + 1)
    q = hardy_quotient(3, (r, r ** (-0.5 + delta) * np.log(1 / r)))
    print(f"delta = {delta:5.2f}: quotient {q:.5f}  (1/4 + delta^2 = {0.25 + delta**2:.5f})")

grid = RadialGrid.logarithmic(1e-12, 1.0, 64)
print("\n   b   fitted exponents          expected")
for b in (-0.2, 0.0, 0.75, 2.0, 6.0):
    co = OdeCoefficients(lambda r, b=b: b / r**2 + 1.0, lambda r: 1.0 / r, b, abs(b) + 2.0)
    basis = build_basis(co, grid)
    sp, sm = basis.fitted_exponents()
    s = math.sqrt(b + 0.25)
    print(f"{b:5.2f}   {sp:8.5f} {sm:8.5f}   {0.5 + s:8.5f} {0.5 - s:8.5f}   "
          f"Wronskian drift {basis.wronskian_drift_per_decade():.1e}/decade")
