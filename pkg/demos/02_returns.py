"""Markov partition, first-return words and the base of the tower.

A level-7 Fibonacci refinement of the two-square tiling gives 4181
rectangles. One of them, P, is used as the tower base. S_n counts
first-return words of length n; its growth rate h is below log λ. The
measured mean return time to P is then compared with 1/m(P).
"""
import numpy as np

from katoklab import KatokParams
from katoklab import symbolic as S
from katoklab import tower as TW
from katoklab.params import LOG_LAMBDA

p = KatokParams(r0=0.01)
part = S.build_partition(params=p)
print(f"{part.size} elements, max diameter {part.diameters().max():.4f}")
print(f"Perron root {S.perron(part.transition)[0]:.12f}")
print(f"P = element {part.P_index}, area {part.areas()[part.P_index]:.4e}, verified Q = {part.verified_Q}")

Sn = S.count_first_return_words(part, 40)
print("S_1..S_15:", Sn[:15])
fit = S.estimate_h(Sn)
print(f"fitted h = {fit['h']:.5f}, exact h = {S.exact_h(part):.5f}, log λ = {LOG_LAMBDA:.5f}")

base = TW.base_from_partition(part)
tau, entries = TW.return_times(2000, p.with_(ode_tol=1e-9), base, rng=p.rng(7))
kept = tau[tau > 0]
print(f"mean first return {kept.mean():.1f} ± {kept.std(ddof=1) / np.sqrt(kept.size):.1f}, "
      f"1/m(P) = {1 / base.area:.1f}")
print(f"median {np.median(kept):.0f}, max {kept.max()}, mean D_r1 entries per return {entries.mean():.2f}")

pairs, failed = TW.tower_pairs(5, p, base, rng=p.rng(8))
y = TW.check_Y3_Y4(pairs)
print(f"log contraction over one return: stable {y['log_a_stable']:.1f}, unstable {y['log_a_unstable']:.1f}")
print(f"distortion sum {y['distortion_max_sum']:.2e}")
