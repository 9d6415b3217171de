"""
Resolvent scaling: free plane and one inverse-square pole
=========================================================

The truncated resolvent norm N(lambda) = ||chi (P - lambda - i eps)^{-1} chi||
of a nontrapping operator decays like lambda^{-1/2}.  We check this for the
free Laplacian and for P = -Delta + a/|x|^2 near the origin, using the radial
mode path (one 1D problem per angular frequency).
"""

import numpy as np

from multipole_resolvent import (Cutoff, Pole, PotentialSpec, RadialModePolicy, SemiclassicalParams,
                                 CartesianPolicy, frequency_sweep, inverse_square)

lams = [100.0, 200.0, 400.0, 800.0, 1600.0]
chi = Cutoff.around([(0.0, 0.0)], 0.5, 0.8)

# free plane, then poles of three strengths
specs = {"free": PotentialSpec(2)}
for a in (0.1, 1.0, 3.0):
    specs[f"a = {a}"] = PotentialSpec(2, (Pole((0.0, 0.0), inverse_square(a), 0.5, taper=0.25),), hardy_constant=a)

print(f"{'potential':>10} " + " ".join(f"{lam:>9.0f}" for lam in lams) + "        p")
for name, spec in specs.items():
    res = frequency_sweep(spec, lams, 1e-6, RadialModePolicy(chi))
    print(f"{name:>10} " + " ".join(f"{v:9.4f}" for v in res.scaled) + f"  {res.p:7.4f}")
print("(columns: N(lambda) sqrt(lambda); p is the fitted exponent)")

# the same norm on a Cartesian grid, solved sector by sector
spec = specs["a = 1.0"]
params = SemiclassicalParams(400.0, 4e-4)
mode = RadialModePolicy(chi).norm(spec, params)
cart = CartesianPolicy(chi, ppw=10).norm(spec, params)
print(f"\nlambda = 400, a = 1: modes {mode:.6f}, Cartesian {cart:.6f}, ratio {mode / cart:.4f}")
