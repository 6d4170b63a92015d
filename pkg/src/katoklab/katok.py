"""The maps G, φ and G_T2 = φ ∘ G ∘ φ⁻¹ on the torus, with differentials.

G is the time-1 map of the slowed flow on the region W of points whose
linear trajectory over [0, 1] meets D_r0, and A elsewhere. φ is the radial
change sending κ dm on D_r0 to a smooth radial density followed by a global
Knothe correction S onto the area. All jacobians are in the eigen chart.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numba import njit

from . import _kernels as K
from .params import KatokParams, P_LAM, P_R0, centered, reduce_torus, to_eigen
from .slowdown import StepFailure, psi

LINEAR = "linear"
SLOWDOWN = "slowdown"


class MapEvaluation(NamedTuple):
    image: np.ndarray
    jacobian: np.ndarray
    branch: object  # "linear"/"slowdown", or a bool array (True = slowdown) for batches


def _pts(p):
    a = np.asarray(p, dtype=float)
    single = a.ndim == 1
    return np.ascontiguousarray(np.atleast_2d(a)), single


def _finish(out, jac, slow, status, single):
    if np.any(status != 0):
        raise StepFailure(f"{int(np.count_nonzero(status))} integrations failed")
    out = reduce_torus(out)
    if single:
        return MapEvaluation(out[0], jac[0], SLOWDOWN if slow[0] else LINEAR)
    return MapEvaluation(out, jac, slow)


def apply_G(p, params=KatokParams(), jacobian=True):
    pts, single = _pts(p)
    return _finish(*K.G_many(pts, 1, params.vec(), jacobian), single)


def apply_G_inv(p, params=KatokParams(), jacobian=True):
    pts, single = _pts(p)
    return _finish(*K.G_many(pts, -1, params.vec(), jacobian), single)


def apply_GT2(p, params=KatokParams()):
    pts, single = _pts(p)
    return _finish(*K.GT2_many(pts, 1, params.vec()), single)


def apply_GT2_inv(p, params=KatokParams()):
    pts, single = _pts(p)
    return _finish(*K.GT2_many(pts, -1, params.vec()), single)


def dGT2(p, params=KatokParams()):
    return apply_GT2(p, params).jacobian


def phi(p, params=KatokParams()):
    pts, single = _pts(p)
    out, _ = K.phi_many(pts, params.vec(), False)
    out = reduce_torus(out)
    return out[0] if single else out


def phi_inv(p, params=KatokParams()):
    pts, single = _pts(p)
    out, _ = K.phi_many(pts, params.vec(), True)
    out = reduce_torus(out)
    return out[0] if single else out


def dphi(p, params=KatokParams()):
    pts, single = _pts(p)
    _, jac = K.phi_many(pts, params.vec(), False)
    return jac[0] if single else jac


def phi_radial(s, params=KatokParams()):
    """Radial part of φ in eigen coordinates; returns (image, jacobian)."""
    a, b, J = K.phi_rad(float(s[0]), float(s[1]), params.vec())
    return np.array([a, b]), J


def in_slowdown_region(p, params=KatokParams(), direction=1):
    """Whether G (direction=+1) or G⁻¹ (-1) uses the flow branch at p."""
    pts, single = _pts(p)
    res = _region_many(pts, direction, params.vec())
    return bool(res[0]) if single else res


@njit(cache=True)
def _region_many(pts, direction, v):
    out = np.zeros(pts.shape[0], dtype=np.bool_)
    for k in range(pts.shape[0]):
        c1 = K.center(pts[k, 0])
        c2 = K.center(pts[k, 1])
        for i in range(-1, 2):
            for j in range(-1, 2):
                r1 = c1 - i
                r2 = c2 - j
                s1 = K.R00 * r1 + K.R01 * r2
                s2 = K.R10 * r1 + K.R11 * r2
                if K.meets_disk(s1, s2, v[P_R0], direction, v[P_LAM]):
                    out[k] = True
    return out


def kappa(p, params=KatokParams()):
    """Density of ν (before normalization): 1/ψ inside D_r0, 1 outside."""
    s = to_eigen(p)
    u = np.sum(s * s, axis=-1)
    with np.errstate(divide="ignore"):
        val = np.where(u < params.r0, 1.0 / np.maximum(psi(u, params), 1e-300), 1.0)
    return float(val) if np.ndim(val) == 0 else val


def kappa0(params=KatokParams()):
    """Normalizer ∫ κ dm (computed by adaptive quadrature at construction)."""
    return params.kappa0


def kappa0_monte_carlo(params=KatokParams(), n=1_000_000, rng=None):
    """Independent Monte Carlo estimate of κ0 with its standard error."""
    rng = params.rng(7) if rng is None else rng
    r = np.sqrt(params.r0)
    # sample the disk's bounding square; outside the disk κ = 1
    s = rng.uniform(-r, r, size=(n, 2))
    u = np.sum(s * s, axis=1)
    vals = np.where(u < params.r0, 1.0 / np.maximum(psi(u, params), 1e-300) - 1.0, 0.0)
    area = 4 * params.r0
    return 1.0 + area * vals.mean(), area * vals.std() / np.sqrt(n)


def check_nu_invariance(pts, params=KatokParams(), exclude=1e-8):
    """max |det dG(p) κ(Gp)/κ(p) - 1| over the sample, skipping ‖s‖² < exclude."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    s = to_eigen(pts)
    keep = np.sum(s * s, axis=1) >= exclude
    ev = apply_G(pts[keep], params)
    det = np.linalg.det(ev.jacobian)
    res = np.abs(det * kappa(ev.image, params) / kappa(pts[keep], params) - 1.0)
    return float(res.max()) if res.size else 0.0


def det_defect(pts, params=KatokParams(), exclude=1e-8):
    """max |det dGT2 - 1| over the sample, skipping ‖s‖² < exclude."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    s = to_eigen(pts)
    keep = np.sum(s * s, axis=1) >= exclude
    det = np.linalg.det(dGT2(pts[keep], params))
    return float(np.abs(det - 1.0).max())


def torus_distance(p, q):
    d = centered(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))
    return np.sqrt(np.sum(d * d, axis=-1))
