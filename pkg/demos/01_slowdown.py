"""The slow-down near the fixed point.

Outside the disk D_r0 the map is the cat map A. Inside, the linear flow is
slowed by ψ(u) = (u/r0)^α, so orbits linger near the origin and the
expansion rate degrades. This script shows the profile, one passage
through D_{r0/2}, and the cone margins that keep the map hyperbolic.
"""
import math

import numpy as np

from katoklab import KatokParams
from katoklab import bounds as B
from katoklab.cones import cone_scan, mu0_analytic
from katoklab.slowdown import psi, trace

p = KatokParams()
print(f"alpha={p.alpha} r0={p.r0} r1={p.r1:.4f} kappa0={p.kappa0:.6f}")

u = np.array([1e-6, 1e-4, 1e-2, p.r0 / 2, 0.08, p.r0])
for ui, v in zip(u, psi(u, p)):
    print(f"  psi({ui:.0e}) = {v:.6f}")

# entering D_{r0/2} close to the stable axis: the deeper the entry, the longer the stay
for ratio in (1e-1, 1e-3, 1e-5):
    rec = B.make_passage(math.acos(ratio), p)
    print(f"s1(0)/|s0| = {ratio:.0e}: passage time T = {rec.T:8.2f}, exit at s = {rec.sT.round(5)}")

rows = trace(np.array([1e-3, math.sqrt(p.r0 / 2)]), 20.0, 5.0, p)
print("flow samples (t, s1, s2):")
print(np.array2string(rows, precision=5, suppress_small=True))

pts = p.rng(1).random((20_000, 2))
print(f"mu0(alpha) = {mu0_analytic(p.alpha):.6f}")
for mu in (0.3, 0.5, 0.9):
    r = cone_scan(pts, mu, p)
    print(f"  mu={mu}: failures fwd/bwd {r['forward_failures']}/{r['backward_failures']}, "
          f"worst margin {r['worst_forward_margin']:.3e}")
