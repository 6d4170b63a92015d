"""Unstable directions, Lyapunov exponents, periodic orbits, pressure of the
geometric t-potential, the threshold t0, and correlation/CLT diagnostics.

Orbit work is done on G and transported by φ: G_T2ⁿ = φ ∘ Gⁿ ∘ φ⁻¹, so
Birkhoff sums of log|Jᵘ| differ only by boundary terms and periodic-orbit
multipliers coincide exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import optimize, stats

from . import _kernels as K
from .katok import apply_GT2, apply_GT2_inv, phi_inv
from .params import A, LOG_LAMBDA, KatokParams, to_eigen
from .slowdown import StepFailure
from .symbolic import InsufficientData, fixed_point_count, periodic_points


class ConvergenceError(RuntimeError):
    pass


class NewtonDivergence(RuntimeError):
    pass


# ------------------------------------------------------------------ kernels

@njit(cache=True)
def _norm(v):
    return math.sqrt(v[0] * v[0] + v[1] * v[1])


@njit(cache=True)
def _eu_G(q1, q2, nb, v):
    """Unstable direction of G at q (eigen chart), pushed along a backward pseudo-orbit."""
    pts = np.empty((nb + 1, 2))
    pts[0, 0] = q1
    pts[0, 1] = q2
    for k in range(nb):
        a, b, J, s, st = K.G_torus(pts[k, 0], pts[k, 1], -1, v, False)
        pts[k + 1, 0] = a
        pts[k + 1, 1] = b
    e = np.array([1.0, 0.0])
    for k in range(nb, 0, -1):
        _, _, J, s, st = K.G_torus(pts[k, 0], pts[k, 1], 1, v, True)
        e = J @ e
        e /= _norm(e)
    return e


@njit(cache=True)
def _es_G(q1, q2, nf, v):
    """Stable direction of G at q, pulled back along a forward pseudo-orbit."""
    pts = np.empty((nf + 1, 2))
    pts[0, 0] = q1
    pts[0, 1] = q2
    for k in range(nf):
        a, b, J, s, st = K.G_torus(pts[k, 0], pts[k, 1], 1, v, False)
        pts[k + 1, 0] = a
        pts[k + 1, 1] = b
    e = np.array([0.0, 1.0])
    for k in range(nf - 1, -1, -1):
        _, _, J, s, st = K.G_torus(pts[k, 0], pts[k, 1], 1, v, True)
        e = K.inv2(J) @ e
        e /= _norm(e)
    return e


@njit(cache=True)
def _push(q1, q2, e, n, v):
    """Iterate G n times from q carrying e; returns (q, e_unit, Σ log growth, slow count)."""
    acc = 0.0
    ns = 0
    e = e / _norm(e)
    for k in range(n):
        q1, q2, J, s, st = K.G_torus(q1, q2, 1, v, True)
        e = J @ e
        g = _norm(e)
        acc += math.log(g)
        e /= g
        ns += s
    return q1, q2, e, acc, ns


@njit(cache=True)
def _lyap(q1, q2, n, nbatch, v):
    e = np.array([1.0, 0.0])
    bs = n // nbatch
    out = np.zeros(nbatch)
    for b in range(nbatch):
        acc = 0.0
        for k in range(bs):
            q1, q2, J, s, st = K.G_torus(q1, q2, 1, v, True)
            if st != 0:
                return out, -1
            e = J @ e
            g = _norm(e)
            acc += math.log(g)
            e /= g
        out[b] = acc / bs
    return out, 0


@njit(cache=True)
def _shoot(X, Kshift, v, tol, maxit):
    """Multiple-shooting Newton for G̃(q_j) = q_{j+1} + k_j (cyclic), x-coordinates.

    Returns (q, log of the unstable multiplier, status, iterations).
    """
    n = X.shape[0]
    q = X.copy()
    Rm = np.array([[K.R00, K.R01], [K.R10, K.R11]])
    status = 1
    it = 0
    Js = np.zeros((n, 2, 2))
    for it in range(maxit):
        F = np.zeros(2 * n)
        D = np.zeros((2 * n, 2 * n))
        for j in range(n):
            X1, X2, J, s, st = K.G_lift(q[j, 0], q[j, 1], 1, v, True)
            if st != 0:
                return q, 0.0, 3, it
            Js[j] = J
            Jx = Rm.T @ J @ Rm
            jn = (j + 1) % n
            F[2 * j] = X1 - Kshift[j, 0] - q[jn, 0]
            F[2 * j + 1] = X2 - Kshift[j, 1] - q[jn, 1]
            D[2 * j:2 * j + 2, 2 * j:2 * j + 2] += Jx
            D[2 * j, 2 * jn] -= 1.0
            D[2 * j + 1, 2 * jn + 1] -= 1.0
        res = np.max(np.abs(F))
        if res < tol:
            status = 0
            break
        dq = np.linalg.solve(D, -F)
        step = np.max(np.abs(dq))
        damp = 1.0 if step < 0.05 else 0.05 / step
        for j in range(n):
            q[j, 0] += damp * dq[2 * j]
            q[j, 1] += damp * dq[2 * j + 1]
    # monodromy in the eigen chart
    M = np.eye(2)
    for j in range(n):
        M = Js[j] @ M
    tr = M[0, 0] + M[1, 1]
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    disc = tr * tr - 4.0 * det
    if disc < 0.0:
        disc = 0.0
    lam1 = 0.5 * (abs(tr) + math.sqrt(disc))
    return q, math.log(lam1), status, it


@njit(cache=True)
def _birkhoff(q, marks, coef, v):
    """Sums over j < marks[k] of trig observables at φ(Gʲ q), for each start q
    and each checkpoint (marks increasing)."""
    m = q.shape[0]
    nobs = coef.shape[0]
    out = np.zeros((marks.shape[0], m, nobs))
    acc = np.zeros(nobs)
    for i in range(m):
        q1, q2 = q[i, 0], q[i, 1]
        acc[:] = 0.0
        k = 0
        for j in range(marks[-1]):
            p1, p2 = K.phi_pos(q1, q2, v)
            for o in range(nobs):
                acc[o] += _trig(coef[o], p1, p2)
            if j + 1 == marks[k]:
                out[k, i, :] = acc
                k += 1
            q1, q2, J, s, st = K.G_torus(q1, q2, 1, v, False)
    return out


@njit(cache=True)
def _trig(c, x1, x2):
    # c = (kind, k1, k2, amplitude); kind 0 = cos, 1 = sin
    a = 2.0 * math.pi * (c[1] * x1 + c[2] * x2)
    return c[3] * (math.cos(a) if c[0] == 0 else math.sin(a))


@njit(cache=True)
def _lagged(q, lags, coef, v):
    """Observable values at φ(Gⁿ q) for n = 0..lags."""
    m = q.shape[0]
    nobs = coef.shape[0]
    out = np.zeros((lags + 1, m, nobs))
    for i in range(m):
        q1, q2 = q[i, 0], q[i, 1]
        for j in range(lags + 1):
            p1, p2 = K.phi_pos(q1, q2, v)
            for o in range(nobs):
                out[j, i, o] = _trig(coef[o], p1, p2)
            q1, q2, J, s, st = K.G_torus(q1, q2, 1, v, False)
    return out


# ------------------------------------------------------------------ directions

@dataclass
class UnstableDirection:
    p: np.ndarray
    e_u: np.ndarray
    settle_iters: int
    residual: float


def unstable_direction(p, n_back=60, params=KatokParams(), tol=1e-8):
    """Eᵘ of G_T2 at p by push-forward along the backward orbit of p.

    The residual compares the directions reached at p from histories of
    length n_back and n_back - 1, i.e. the invariance defect of the estimate.
    """
    p = np.asarray(p, dtype=float)
    if np.sum(to_eigen(p) ** 2) < 1e-12:
        raise ConvergenceError("neutral fixed point: no unstable direction")
    back = [p]
    for _ in range(n_back):
        back.append(apply_GT2_inv(back[-1], params).image)
    jac = [apply_GT2(x, params).jacobian for x in back[1:]]

    def push(start):
        e = np.array([1.0, 0.0])
        for J in reversed(jac[:start]):
            e = J @ e
            e /= np.linalg.norm(e)
        return e

    e, alt = push(n_back), push(n_back - 1)
    res = float(min(np.linalg.norm(e - alt), np.linalg.norm(e + alt)))
    if res > tol:
        raise ConvergenceError(f"invariance residual {res:.2e} exceeds {tol:.0e}")
    return UnstableDirection(p, e, n_back, res)


def direction_residuals(p, n_values, params=KatokParams()):
    """Residual versus n_back (for the geometric-rate diagnostic)."""
    out = []
    for n in n_values:
        try:
            out.append(unstable_direction(p, n, params, tol=np.inf).residual)
        except ConvergenceError:
            out.append(np.nan)
    return np.array(out)


def log_Ju(p, params=KatokParams(), n_back=60):
    p = np.asarray(p, dtype=float)
    if np.sum(to_eigen(p) ** 2) < 1e-24:
        return 0.0
    e = unstable_direction(p, n_back, params).e_u
    return float(math.log(np.linalg.norm(apply_GT2(p, params).jacobian @ e)))


def log_Ju_sum(p, n, params=KatokParams(), n_back=60):
    """log‖dG_T2ⁿ(p) eᵘ(p)‖ by the cocycle (for additivity checks)."""
    e = unstable_direction(p, n_back, params).e_u
    x = np.asarray(p, dtype=float)
    acc = 0.0
    for _ in range(n):
        ev = apply_GT2(x, params)
        e = ev.jacobian @ e
        g = np.linalg.norm(e)
        acc += math.log(g)
        e /= g
        x = ev.image
    return acc


def lyapunov_exponent(p0, N=10**6, params=KatokParams(), nbatch=50):
    """Birkhoff average of log|Jᵘ| along the orbit; returns (χ, standard error)."""
    q = phi_inv(np.asarray(p0, dtype=float), params)
    c = q - np.floor(q + 0.5)
    vals, st = _lyap(float(c[0]), float(c[1]), int(N), int(nbatch), params.vec())
    if st != 0:
        raise StepFailure("integration failed along the orbit")
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(nbatch))


# ------------------------------------------------------------------ periodic orbits

@dataclass
class PeriodicOrbit:
    points: np.ndarray      # G_T2 orbit on the torus
    period: int
    log_multiplier: float   # Σ log|Jᵘ| over one period
    linear: bool            # orbit avoids the slow-down region


def _orbits_of_A(n):
    """Exact A-orbits with period dividing n: list of (numerators (d,2), shifts (d,2), N)."""
    num, N = periodic_points(n)
    Ai = np.array(A, dtype=np.int64)
    seen = np.zeros(len(num), dtype=bool)
    key = {tuple(r): i for i, r in enumerate(num.tolist())}
    orbits = []
    for i in range(len(num)):
        if seen[i]:
            continue
        pts, shifts = [num[i]], []
        seen[i] = True
        cur = num[i]
        while True:
            img = Ai @ cur
            nxt = np.mod(img, N)
            shifts.append((img - nxt) // N)
            j = key[tuple(nxt.tolist())]
            if j == i:
                break
            seen[j] = True
            pts.append(nxt)
            cur = nxt
        orbits.append((np.array(pts), np.array(shifts, dtype=np.float64), N))
    return orbits


def periodic_orbits(n, params=KatokParams(), tol=1e-11, maxit=60):
    """All orbits of G_T2 with period dividing n, by Newton from the A-orbits."""
    from .katok import in_slowdown_region, phi
    v = params.vec()
    out = []
    failures = 0
    for pts, shifts, N in _orbits_of_A(n):
        X = pts / N
        slow = in_slowdown_region(X, params)
        if not np.any(slow):
            out.append(PeriodicOrbit(phi(X, params), len(X), len(X) * LOG_LAMBDA, True))
            continue
        q, lm, st, it = _shoot(X.astype(np.float64), shifts, v, tol, maxit)
        if st != 0:
            failures += 1
            continue
        if len(X) == 1 and np.allclose(np.mod(q + 0.5, 1.0) - 0.5, 0.0, atol=1e-14):
            lm = 0.0
        out.append(PeriodicOrbit(phi(np.mod(q, 1.0), params), len(X), lm, False))
    if failures:
        raise NewtonDivergence(f"{failures} orbits failed to converge at n={n}")
    pts = np.vstack([o.points for o in out])
    if len(pts) != fixed_point_count(n):
        raise NewtonDivergence(f"found {len(pts)} points, expected {fixed_point_count(n)}")
    return out


def orbit_points(orbits):
    return np.vstack([o.points for o in orbits])


def dedup_count(orbits, tol=1e-9):
    pts = np.mod(orbit_points(orbits), 1.0)
    keys = np.round(pts / tol).astype(np.int64)
    return len(np.unique(keys, axis=0))


# ------------------------------------------------------------------ pressure

@dataclass
class PressureCurve:
    t: np.ndarray
    levels: list
    per_level: np.ndarray    # shape (len(levels), len(t))
    extrapolated: np.ndarray
    drift: np.ndarray = field(default=None)


def _log_partition(orbits, n, t):
    """log Σ over Fix(G_T2ⁿ) of exp(-t Sₙ log|Jᵘ|), for orbits of period dividing n."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    terms = []
    mult = []
    for o in orbits:
        if n % o.period:
            continue
        terms.append(-(n // o.period) * o.log_multiplier)
        mult.append(o.period)
    terms = np.array(terms)
    lw = np.log(np.array(mult, dtype=float))
    a = np.outer(t, terms) + lw
    mx = a.max(axis=1, keepdims=True)
    return (mx[:, 0] + np.log(np.exp(a - mx).sum(axis=1)))


def aitken(seq):
    """Δ² extrapolation of the last three entries (falls back to the last entry)."""
    s = np.asarray(seq, dtype=float)
    if len(s) < 3:
        return s[-1]
    a, b, c = s[-3], s[-2], s[-1]
    den = c - 2 * b + a
    if abs(den) < 1e-14 or not np.isfinite(den):
        return c
    d1, d2 = b - a, c - b
    # Δ² needs a monotone sequence with shrinking increments
    if d1 * d2 <= 0 or abs(d2) >= abs(d1):
        return c
    return c - d2 * d2 / den


def pressure_estimate(t, n, params=KatokParams(), orbits=None):
    orbits = periodic_orbits(n, params) if orbits is None else orbits
    return float(_log_partition(orbits, n, t)[0] / n)


def pressure_curve(t_grid, n_max=12, params=KatokParams(), n_min=None, orbit_cache=None):
    t_grid = np.asarray(t_grid, dtype=float)
    n_min = max(1, n_max - 4) if n_min is None else n_min
    levels = list(range(n_min, n_max + 1))
    per = []
    for n in levels:
        orbits = orbit_cache[n] if orbit_cache and n in orbit_cache else periodic_orbits(n, params)
        per.append(_log_partition(orbits, n, t_grid) / n)
    per = np.array(per)
    ext = np.array([aitken(per[:, k]) for k in range(len(t_grid))])
    drift = np.abs(per[-1] - per[-2]) if len(levels) > 1 else np.zeros(len(t_grid))
    return PressureCurve(t_grid, levels, per, ext, drift)


def curve_shape(curve: PressureCurve, tol=1e-3, which="extrapolated"):
    P = curve.extrapolated if which == "extrapolated" else curve.per_level[-1]
    d1 = np.diff(P)
    t = curve.t
    # second differences on a possibly non-uniform grid
    slopes = d1 / np.diff(t)
    d2 = np.diff(slopes)
    return {"monotone": bool(np.all(d1 <= tol)), "convex": bool(np.all(d2 >= -tol)),
            "nonnegative": bool(np.all(P >= -tol)),
            "max_increase": float(d1.max()) if len(d1) else 0.0,
            "min_second_difference": float(d2.min()) if len(d2) else 0.0}


# ------------------------------------------------------------------ t0

@dataclass
class T0Estimate:
    h: float
    h_mu1: float
    log_lambda1: float
    t0: float


def t0_from(h, h_mu1, log_lambda1):
    return T0Estimate(h, h_mu1, log_lambda1, (h - h_mu1) / (log_lambda1 - h_mu1))


def t0_estimate(h, h_mu1, return_records):
    """log λ1 as the max over sampled returns of logJu_return/τ."""
    recs = [r for r in return_records if r.tau >= 1 and np.isfinite(r.logJu_return)]
    if not recs:
        raise InsufficientData("no return records with Jacobian data")
    ll1 = max(r.logJu_return / r.tau for r in recs)
    return t0_from(h, h_mu1, ll1)


# ------------------------------------------------------------------ correlations and CLT

# built-in observables: zero-mean trig polynomials (kind, k1, k2, amplitude)
TRIG = {
    "cos_x": (0, 1, 0, 1.0),
    "sin_xy": (1, 1, 1, 1.0),
    "cos_x_2y": (0, 1, -2, 1.0),
    "zero": (0, 0, 0, 0.0),
    "one": (0, 0, 0, 1.0),
}
# all have mean zero under the area except "one"
OBSERVABLES = ("cos_x", "sin_xy", "cos_x_2y")


def _coef(names):
    return np.array([TRIG[n] for n in names], dtype=np.float64)


def autocorrelation(h1="cos_x", h2=None, lags=50, samples=100_000, params=KatokParams(),
                    rng=None, nbatch=20):
    """Ĉ_n = mean h1(Gⁿx) h2(x) − mean h1 · mean h2 with batch-mean error bars."""
    h2 = h1 if h2 is None else h2
    rng = params.rng(30) if rng is None else rng
    x = rng.random((samples, 2))
    q = phi_inv(x, params)
    q = q - np.floor(q + 0.5)
    vals = _lagged(np.ascontiguousarray(q), int(lags), _coef([h1, h2]), params.vec())
    a, b = vals[:, :, 0], vals[0, :, 1]
    C = (a * b).mean(axis=1) - a.mean(axis=1) * b.mean()
    bs = samples // nbatch
    Cb = np.array([(a[:, i * bs:(i + 1) * bs] * b[i * bs:(i + 1) * bs]).mean(axis=1)
                   - a[:, i * bs:(i + 1) * bs].mean(axis=1) * b[i * bs:(i + 1) * bs].mean()
                   for i in range(nbatch)])
    err = Cb.std(axis=0, ddof=1) / math.sqrt(nbatch)
    return np.arange(lags + 1), C, err


def autocorrelations(names=OBSERVABLES, lags=100, samples=100_000, params=KatokParams(),
                     rng=None, nbatch=20):
    """Diagonal Ĉ_n for several observables from one set of orbits."""
    rng = params.rng(32) if rng is None else rng
    names = list(names)
    x = rng.random((samples, 2))
    q = phi_inv(x, params)
    q = q - np.floor(q + 0.5)
    vals = _lagged(np.ascontiguousarray(q), int(lags), _coef(names), params.vec())
    bs = samples // nbatch
    out = {}
    for o, name in enumerate(names):
        a = vals[:, :, o]
        Cb = np.array([(a[:, i * bs:(i + 1) * bs] * a[0, i * bs:(i + 1) * bs]).mean(axis=1)
                       - a[:, i * bs:(i + 1) * bs].mean(axis=1) * a[0, i * bs:(i + 1) * bs].mean()
                       for i in range(nbatch)])
        C = (a * a[0]).mean(axis=1) - a.mean(axis=1) * a[0].mean()
        out[name] = (C, Cb.std(axis=0, ddof=1) / math.sqrt(nbatch))
    return np.arange(lags + 1), out


def decorrelation_lag(C, err, factor=3.0):
    """First lag from which |Ĉ_n| stays below factor × its error bar."""
    ok = np.abs(C) < factor * err
    for n in range(len(C)):
        if ok[n:].all():
            return n
    return -1


def _ks_fit(S):
    """Smallest Kolmogorov distance to N(0, σ²) over σ, and the minimizer."""
    s0 = float(np.sqrt(np.mean(S * S)))
    if s0 == 0.0:
        return 0.0, 0.0
    f = lambda ls: stats.kstest(S, "norm", args=(0.0, math.exp(ls))).statistic
    res = optimize.minimize_scalar(f, bounds=(math.log(s0) - 1.0, math.log(s0) + 1.0),
                                   method="bounded", options={"xatol": 1e-6})
    return float(res.fun), float(math.exp(res.x))


def clt_diagnostic(h="cos_x", n=10_000, samples=10_000, params=KatokParams(), rng=None):
    """Kolmogorov distance of n^{-1/2}·Birkhoff sums to the best-fit centered
    Gaussian. h may be a name or a list of names and n an int or an increasing
    list; all are computed from the same orbits."""
    rng = params.rng(31) if rng is None else rng
    names = [h] if isinstance(h, str) else list(h)
    marks = np.atleast_1d(np.asarray(n, dtype=np.int64))
    x = rng.random((samples, 2))
    q = phi_inv(x, params)
    q = q - np.floor(q + 0.5)
    sums = _birkhoff(np.ascontiguousarray(q), marks, _coef(names), params.vec())
    out = {}
    for o, name in enumerate(names):
        rows = []
        for k, nk in enumerate(marks):
            S = sums[k, :, o] / math.sqrt(nk)
            d, sig = _ks_fit(S)
            rows.append({"n": int(nk), "distance": d, "sigma": sig,
                         "sigma_rms": float(np.sqrt(np.mean(S * S))), "mean": float(S.mean())})
        out[name] = rows
    if isinstance(h, str) and np.ndim(n) == 0:
        return out[h][0]
    return out
