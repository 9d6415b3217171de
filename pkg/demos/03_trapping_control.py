"""
A trapping potential violates the estimate
==========================================

A radial well V = -50 on 1 < r < 2 surrounded by a barrier V = +50 on
2 < r < 2.5 traps waves with energy below the barrier top.  Near the
resonances N(lambda) sqrt(lambda) is far above the nontrapping constant.
"""

import numpy as np

from multipole_resolvent import Cutoff, PotentialSpec, barrier_well
from multipole_resolvent.resolvent import resonance_scan

spec = PotentialSpec(2, (), barrier_well())
chi = Cutoff.around([(0.0, 0.0)], 2.6, 3.0)

scan = resonance_scan(spec, 10.0, 45.0, 40, chi)
for lam, s in zip(scan.lam_grid[::4], scan.scaled[::4]):
    print(f"lambda = {lam:7.3f}  max_k N sqrt(lambda) = {s:9.3f}")
print(f"\npeak {scan.peak_scaled:.2f} at lambda = {scan.peak_lam:.5f}, angular frequency {scan.peak_nu:g}")
print(f"median over the grid {np.median(scan.scaled):.2f}")
