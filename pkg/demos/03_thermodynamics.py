"""Lyapunov exponents, pressure and statistics.

The exponent of the area approaches log λ as r0 shrinks. The pressure of
the geometric potential is estimated from the periodic orbits, which are
found by Newton's method starting from the exact periodic points of A.
The last part estimates the autocorrelations of a few trigonometric
observables.
"""
import numpy as np

from katoklab import KatokParams
from katoklab import thermo as TH
from katoklab.params import LOG_LAMBDA

p = KatokParams()
for r0 in (0.1, 0.05, 0.01):
    q = p.with_(r0=r0)
    chi, se = TH.lyapunov_exponent(q.rng(111).random(2), 200_000, q)
    print(f"r0={r0:<5} chi = {chi:.4f} ± {se:.4f}   (log λ = {LOG_LAMBDA:.4f})")

t = np.linspace(-1, 2, 7)
curve = TH.pressure_curve(t, 9, p)
print("t      " + " ".join(f"{x:7.2f}" for x in t))
for n, row in zip(curve.levels, curve.per_level):
    print(f"P_{n:<4} " + " ".join(f"{x:7.4f}" for x in row))
print("extrap " + " ".join(f"{x:7.4f}" for x in curve.extrapolated))
print(TH.curve_shape(curve))

s = p.with_(r0=0.01, ode_tol=1e-9)
lags, res = TH.autocorrelations(TH.OBSERVABLES, 60, 20_000, s, rng=s.rng(3))
for name, (C, err) in res.items():
    print(f"{name:9s} C_1={C[1]:+.4f} C_10={C[10]:+.4f} C_60={C[60]:+.4f} ± {err[60]:.4f}, "
          f"decorrelated from lag {TH.decorrelation_lag(C, err)}")
