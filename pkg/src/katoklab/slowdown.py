"""Slow-down profile ψ and the flow ds1/dt = s1 ψ logλ, ds2/dt = -s2 ψ logλ."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _kernels as K
from .params import KatokParams, P_RTOL


class StepFailure(RuntimeError):
    pass


class ChartExitError(RuntimeError):
    pass


@njit(cache=True)
def _psi_arr(u, v, deriv):
    out = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        out[i] = K.dpsi(u[i], v) if deriv else K.psi(u[i], v)
    return out


def _apply(fun, u, params, deriv):
    u = np.asarray(u, dtype=float)
    flat = np.ascontiguousarray(u.reshape(-1))
    out = fun(flat, params.vec(), deriv).reshape(u.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PsiProfile:
    params: KatokParams

    def __call__(self, u):
        return psi(u, self.params)

    def prime(self, u):
        return psi_prime(u, self.params)

    def check(self, n=10_000):
        """Grid verification of ψ' > 0, ψ' non-increasing and continuity at the joints."""
        r0 = self.params.r0
        u = np.linspace(r0 * 1e-6, r0 * (1 - 1e-9), n)
        d = psi_prime(u, self.params)
        jumps = []
        for x in (r0 / 2, r0):
            e = 1e-13 * r0
            jumps.append(abs(psi(x - e, self.params) - psi(x + e, self.params)))
            jumps.append(abs(psi_prime(x - e, self.params) - psi_prime(x + e, self.params)) * e)
        return {
            "positive": bool(np.all(d > 0)),
            "nonincreasing": bool(np.all(np.diff(d) <= 1e-12 * np.abs(d[:-1]))),
            "max_jump": float(max(jumps)),
        }


def psi(u, params=KatokParams()):
    return _apply(_psi_arr, u, params, False)


def psi_prime(u, params=KatokParams()):
    return _apply(_psi_arr, u, params, True)


def _check(status):
    if status == 1:
        raise StepFailure("adaptive integrator could not meet the tolerance")
    if status == 2:
        raise ChartExitError("trajectory left the chart")


def flow(s0, t, params=KatokParams()):
    """Time-t map of the slowed flow in eigen coordinates."""
    y, st, _ = K.flow(float(s0[0]), float(s0[1]), float(t), params.vec())
    _check(st)
    return y.copy()


def flow_with_jacobian(s0, t, params=KatokParams()):
    y, st, _ = K.flow_jac(float(s0[0]), float(s0[1]), float(t), params.vec())
    _check(st)
    return y[:2].copy(), y[2:].reshape(2, 2).copy()


def variational_matrix(s, params=KatokParams()):
    return K.variational(float(s[0]), float(s[1]), params.vec())


def vector_field(s, params=KatokParams()):
    s = np.asarray(s, dtype=float)
    u = float(s @ s)
    ps = K.psi(u, params.vec())
    return params.log_lam * ps * np.array([s[0], -s[1]])


@njit(cache=True)
def _trace(s1, s2, t_end, dt, v):
    n = int(np.floor(t_end / dt + 1e-9)) + 1
    out = np.empty((n, 3))
    out[0, 0] = 0.0
    out[0, 1] = s1
    out[0, 2] = s2
    y = np.array([s1, s2])
    status = 0
    for k in range(1, n):
        y, st, _ = K.integrate(y, dt, v, 2, v[P_RTOL])
        if st != 0:
            status = st
        out[k, 0] = k * dt
        out[k, 1] = y[0]
        out[k, 2] = y[1]
    return out, status


def trace(s0, t_end, dt=0.1, params=KatokParams()):
    """Samples (t, s1, s2) of the flow on a uniform time grid."""
    out, st = _trace(float(s0[0]), float(s0[1]), float(t_end), float(dt), params.vec())
    _check(st)
    return out
