"""
Quasimodes and their phase-space picture
========================================

A quasimode solves (h^2 P - z) u = h chi f with ||chi_1 u|| = 1.  Along a
sequence h -> 0 its Husimi density concentrates on the energy shell
|xi| = 1, it is transported along straight rays away from the pole, and the
small angular harmonics carry less and less mass near the pole.
"""

import math

from multipole_resolvent import Cutoff, Pole, PotentialSpec, SemiclassicalParams, inverse_square
from multipole_resolvent.measure import (PhaseSymbol, annulus_centres, husimi, lattice_centres,
                                         shell_localization, transport_residual)
from multipole_resolvent.quasimodes import ForcingSpec, radial_quasimode

spec = PotentialSpec(2, (Pole((0.0, 0.0), inverse_square(1.0), 0.5, taper=0.25),), hardy_constant=1.0)
chi = Cutoff.around([(0.0, 0.0)], 0.9, 1.2)
chi1 = Cutoff.around([(0.0, 0.0)], 1.2, 1.8)
symbol = PhaseSymbol((1.1, 0.0), 0.3)

print(" lambda     ||f||   shell   transport   small-mode ball mass")
for lam in (400.0, 1600.0):
    q = radial_quasimode(spec, SemiclassicalParams(lam, 1e-6 * lam), ForcingSpec(seed=0), chi, chi1)
    h = q.h
    fld = q.field.to_grid(chi1.extent + 6 * math.sqrt(h), h / 2.5)

    # Husimi density on a lattice covering chi_1
    cen, cell = lattice_centres(fld, 0.5 * math.sqrt(h), lambda P: chi1(P) > 0, h=h)
    shell = shell_localization(husimi(fld, h, cen, cell), 4 * math.sqrt(h), [(0.0, 0.0)], 0.5)

    # transport: pair the density with xi . grad a on a lattice fine enough for the symbol
    cen, cell = annulus_centres(fld, symbol.centre, 0.0, symbol.radius, symbol.radius / 16, h=h)
    tr = transport_residual(husimi(fld, h, cen, cell), symbol, [(0.0, 0.0)], 0.5)

    small = q.field.ball_mass((0.0, 0.0), 0.25, "small", 3.0)
    print(f"{lam:7.0f}  {q.forcing_norm:8.4f}  {shell:6.4f}  {tr:10.3e}  {small:10.3e}")
