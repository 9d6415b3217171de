"""
Two poles
=========

Two inverse-square poles at (+-1.5, 0) break the radial symmetry, so the
norm is computed on a Cartesian grid at 10 points per wavelength, in the
four reflection-parity sectors.  The ray between the poles is the only
candidate for trapping; the sweep shows that it does not spoil the
lambda^{-1/2} law.
"""

import math

from multipole_resolvent import CartesianPolicy, Cutoff, Pole, PotentialSpec, frequency_sweep, inverse_square

poles = tuple(Pole((s, 0.0), inverse_square(1.0), 0.5, taper=0.25) for s in (-1.5, 1.5))
spec = PotentialSpec(2, poles, hardy_constant=1.0)
chi = Cutoff.around([p.position for p in poles], 0.5, 0.8)

lams = [100.0, 200.0, 400.0, 800.0]
res = frequency_sweep(spec, lams, 1e-6, CartesianPolicy(chi, ppw=10))
for r in res.records:
    print(f"lambda = {r.lam:6.0f}  N = {r.norm:.6f}  N sqrt(lambda) = {r.scaled:.4f}  ({r.iterations} iterations)")
print(f"fitted exponent p = {res.p:.4f}")

# box and layer used at the largest lambda
box, layer = CartesianPolicy(chi, ppw=10).box(spec, 1 / math.sqrt(lams[-1]))
print(f"box half-widths {box[0]:.3f} x {box[1]:.3f}, absorbing layer {layer:.3f}")
