"""Sampled verification of the flow estimates near the neutral fixed point.

Every check returns a report dict with ``hypotheses_met``, ``bound_value``,
``observed_value`` and ``margin``; samples violating a lemma's hypotheses
are counted and skipped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from . import _kernels as K
from .params import KatokParams
from .slowdown import flow, flow_with_jacobian, psi


class HypothesisViolation(ValueError):
    pass


def report(hyp, bound, observed, margin, **extra):
    d = {"hypotheses_met": bool(hyp), "bound_value": float(bound),
         "observed_value": float(observed), "margin": float(margin)}
    d.update(extra)
    return d


# ------------------------------------------------------------------ Hessian

def _f(s1, s2, params):
    return s2 * psi(s1 * s1 + s2 * s2, params)


def hessian_fd(s, params=KatokParams()):
    """Second partials of s2 ψ(s1²+s2²) by central differences."""
    s1, s2 = float(s[0]), float(s[1])
    h = 1e-5 * max(math.hypot(s1, s2), 1e-3)
    f = lambda a, b: _f(a, b, params)
    d11 = (f(s1 + h, s2) - 2 * f(s1, s2) + f(s1 - h, s2)) / h ** 2
    d22 = (f(s1, s2 + h) - 2 * f(s1, s2) + f(s1, s2 - h)) / h ** 2
    d12 = (f(s1 + h, s2 + h) - f(s1 + h, s2 - h) - f(s1 - h, s2 + h) + f(s1 - h, s2 - h)) / (4 * h * h)
    return np.array([[d11, d12], [d12, d22]])


def hessian_exact(s, params=KatokParams()):
    """Closed form on D_{r0/2}, where ψ(u) = (u/r0)^α."""
    s1, s2 = float(s[0]), float(s[1])
    a, r0 = params.alpha, params.r0
    u = s1 * s1 + s2 * s2
    k = 2 * a / r0 ** a
    d11 = k * s2 * (u ** (a - 1) + 2 * (a - 1) * s1 * s1 * u ** (a - 2))
    d12 = k * s1 * (u ** (a - 1) + 2 * (a - 1) * s2 * s2 * u ** (a - 2))
    d22 = k * s2 * (3 * u ** (a - 1) + 2 * (a - 1) * s2 * s2 * u ** (a - 2))
    return np.array([[d11, d12], [d12, d22]])


def hessian_bound(s, params=KatokParams()):
    u = float(s[0]) ** 2 + float(s[1]) ** 2
    return 6 * params.alpha / params.r0 ** params.alpha * u ** (params.alpha - 0.5)


def check_hessian_bound(points, params=KatokParams(), slack=1e-3):
    """Worst ratio max|d_ij| / bound over points of D_{r0/2} \\ {0}."""
    worst = 0.0
    for s in np.atleast_2d(points):
        u = s @ s
        if u == 0 or u > params.r0 / 2:
            continue
        worst = max(worst, np.abs(hessian_fd(s, params)).max() / hessian_bound(s, params))
    return report(True, 1.0 + slack, worst, 1.0 + slack - worst)


# ------------------------------------------------------------------ passages

@dataclass
class PassageRecord:
    s0: np.ndarray
    sT: np.ndarray
    T: float
    T1: float
    times: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)


def passage_time(s0, params=KatokParams(), r=None):
    """Time for the flow from s0 (first quadrant, s1 < s2, |s0|² = r) to
    leave D_r, by quadrature in ξ = log s1 along the hyperbola s1 s2 = c."""
    r = params.r0 / 2 if r is None else r
    s1, s2 = float(s0[0]), float(s0[1])
    c = s1 * s2
    L = params.log_lam
    g = lambda xi: 1.0 / (L * psi(math.exp(2 * xi) + c * c * math.exp(-2 * xi), params))
    x0, x1, xm = math.log(s1), math.log(s2), 0.5 * math.log(c)
    T1 = integrate.quad(g, x0, xm, epsabs=0, epsrel=1e-12, limit=500)[0]
    T2 = integrate.quad(g, xm, x1, epsabs=0, epsrel=1e-12, limit=500)[0]
    return T1 + T2, T1


def make_passage(theta, params=KatokParams(), n_samples=201):
    """Passage through D_{r0/2} entering at angle θ ∈ (π/4, π/2)."""
    if not (math.pi / 4 < theta < math.pi / 2):
        raise HypothesisViolation("entry must satisfy 0 < s1 < s2")
    rad = math.sqrt(params.r0 / 2)
    s0 = np.array([rad * math.cos(theta), rad * math.sin(theta)])
    T, T1 = passage_time(s0, params)
    times = np.unique(np.concatenate([np.linspace(0.0, T, n_samples), [T1]]))
    states = np.empty((len(times), 2))
    states[0] = s0
    y = s0.copy()
    v = params.vec()
    for k in range(1, len(times)):
        y, st, _ = K.flow(y[0], y[1], times[k] - times[k - 1], v)
        states[k] = y[:2]
    return PassageRecord(s0, states[-1].copy(), T, T1, times, states)


def check_passage_bounds(rec: PassageRecord, params=KatokParams(), slack=1e-6):
    """The five two-time inequalities and the total-time estimate."""
    a_ = params.alpha
    C1 = params.C1
    e = -1.0 / (2 * a_)
    t = rec.times
    s1, s2 = np.abs(rec.states[:, 0]), np.abs(rec.states[:, 1])
    if np.any(rec.states[:, 0] <= 0) or np.any(rec.states[:, 1] <= 0):
        raise HypothesisViolation("passage leaves the open first quadrant")
    A, B = np.meshgrid(np.arange(len(t)), np.arange(len(t)), indexing="ij")
    later = B >= A                                   # pairs a = t[A] <= t = t[B]
    dt = t[B] - t[A]
    T1 = rec.T1
    first = (t[B] <= T1 + 1e-12)
    second = (t[A] >= T1 - 1e-12)
    worst = np.inf
    checks = {}

    def rel(lhs, rhs, mask, upper):
        if not mask.any():
            return np.inf
        d = (rhs - lhs) if upper else (lhs - rhs)
        return float(np.min(d[mask] / np.abs(rhs[mask])))

    # |s2(t)| >= |s2(a)| (1 + 2^α C1 s2(a)^{2α} (t-a))^{-1/(2α)}, t <= T1
    checks["s2_lower"] = rel(s2[B], s2[A] * (1 + 2 ** a_ * C1 * s2[A] ** (2 * a_) * dt) ** e, later & first, False)
    # |s2(t)| <= |s2(a)| (1 + C1 s2(a)^{2α} (t-a))^{-1/(2α)}
    checks["s2_upper"] = rel(s2[B], s2[A] * (1 + C1 * s2[A] ** (2 * a_) * dt) ** e, later, True)
    # |s1(t)| >= |s1(a)| (1 - C1 s1(a)^{2α} (t-a))^{-1/(2α)}
    base = 1 - C1 * s1[A] ** (2 * a_) * dt
    checks["s1_lower"] = rel(s1[B], s1[A] * np.abs(base) ** e, later & (base > 0), False)
    # |s1(t)| <= |s1(T1)| (1 - 2^α C1 s1(T1)^{2α} (t-T1))^{-1/(2α)}, t >= T1
    s1T1 = math.sqrt(rec.s0[0] * rec.s0[1])
    tt = t[t >= T1 - 1e-12]
    st = s1[t >= T1 - 1e-12]
    base4 = 1 - 2 ** a_ * C1 * s1T1 ** (2 * a_) * (tt - T1)
    ok4 = base4 > 0
    rhs4 = s1T1 * base4[ok4] ** e
    checks["s1_upper_T1"] = float(np.min((rhs4 - st[ok4]) / rhs4)) if ok4.any() else np.inf
    # |s1(t)| <= |s1(b)| (1 + C1 s1(b)^{2α} (b - t))^{-1/(2α)}, t <= b
    checks["s1_upper_back"] = rel(s1[A], s1[B] * (1 + C1 * s1[B] ** (2 * a_) * dt) ** e, later, True)
    T_bound = params.r0 ** a_ / (a_ * 2 ** a_ * params.log_lam) * s1T1 ** (-2 * a_)
    checks["T_estimate"] = (T_bound - rec.T) / T_bound
    worst = min(checks.values())
    return report(True, T_bound, rec.T, worst + slack, checks=checks, s1_T1=s1T1)


def passage_sample(params=KatokParams(), n=1000, rng=None, depth=(1e-6, 0.7)):
    """Entry angles with s1(0)/|s0| log-uniform in ``depth``."""
    rng = params.rng(52) if rng is None else rng
    ratio = np.exp(rng.uniform(math.log(depth[0]), math.log(depth[1]), n))
    return np.arccos(ratio)


def passage_scaling(records):
    """Least-squares slope of log T against log s1(T1)."""
    x = np.log([math.sqrt(r.s0[0] * r.s0[1]) for r in records])
    y = np.log([r.T for r in records])
    slope, icpt = np.polyfit(x, y, 1)
    return float(slope)


# ------------------------------------------------------------------ stable pairs

@dataclass
class PairRecord:
    base: PassageRecord
    delta0: np.ndarray
    deltas: np.ndarray = field(repr=False)
    mu: float = 0.5


def beta(mu, alpha):
    return (1 - mu) / 2 ** (alpha + 2)


def make_pair(rec: PassageRecord, frac, mu=0.5, params=KatokParams()):
    """Partner orbit through x(T) + (0, δ), integrated backward, so the chord
    Δs(t) is tangent-segment to K⁻ throughout. δ is set from the linearized
    passage so that |Δs2/s2|(0) ≈ frac·(1-μ)/72."""
    _, J = flow_with_jacobian(rec.s0, rec.T, params)
    g = np.linalg.solve(J, [0.0, 1.0])
    delta = frac * (1 - mu) / 72 * rec.s0[1] / abs(g[1])
    v = params.vec()
    out = np.empty_like(rec.states)
    y = rec.states[-1] + np.array([0.0, delta])
    out[-1] = y
    for k in range(len(rec.times) - 1, 0, -1):
        y, st, _ = K.flow(y[0], y[1], rec.times[k - 1] - rec.times[k], v)
        out[k - 1] = y[:2]
    D = out - rec.states
    return PairRecord(rec, D[0].copy(), D, mu)


def check_pair_contraction(pair: PairRecord, params=KatokParams(), slack=1e-6):
    rec, D, mu = pair.base, pair.deltas, pair.mu
    a_ = params.alpha
    hyp = bool(np.all(D[:, 1] > 0) and np.all(np.abs(D[:, 0]) <= mu * D[:, 1])
               and abs(D[0, 1] / rec.s0[1]) < (1 - mu) / 72)
    t, s = rec.times, rec.states
    T1 = rec.T1
    k1 = int(np.argmin(np.abs(t - T1)))
    C1 = params.C1
    checks = {}
    first = t <= T1 + 1e-12
    b = beta(mu, a_)
    rhs1 = D[0, 1] / s[0, 1] * s[:, 1] * (1 + 2 ** a_ * C1 * s[0, 1] ** (2 * a_) * t) ** (-b)
    checks["first"] = float(np.min((rhs1 - D[:, 1])[first] / rhs1[first]))
    second = t >= T1 - 1e-12
    s1T1 = s[k1, 0]
    base = 1 - 2 ** a_ * C1 * s1T1 ** (2 * a_) * (t - T1)
    ok = second & (base > 0)
    b_proof = (1 - mu) / (a_ * 2 ** (a_ + 2))
    for name, ex in (("second_stated", b), ("second_proof", b_proof)):
        rhs = D[k1, 1] / s1T1 * s[ok, 0] * base[ok] ** (-ex)
        checks[name] = float(np.min((rhs - D[ok, 1]) / rhs)) if ok.any() else np.inf
    checks["ratio_T1"] = float(D[0, 1] / s[0, 1] - D[k1, 1] / s[k1, 1]) / (D[0, 1] / s[0, 1])
    bound = math.sqrt(1 + mu * mu) * s[-1, 0] / s[0, 1] * np.linalg.norm(D[0])
    obs = np.linalg.norm(D[-1])
    checks["final"] = (bound * (1 + slack) - obs) / bound
    margin = min(checks["first"], checks["second_proof"], checks["ratio_T1"], checks["final"])
    return report(hyp, bound, obs, margin + slack, checks=checks)


# ------------------------------------------------------------------ annulus transit

def T0_star(alpha, log_lam=None):
    from .params import LOG_LAMBDA
    L = LOG_LAMBDA if log_lam is None else log_lam
    return max(2 * 2 ** alpha, 16 * 2 ** alpha) / L


def annulus_transits(s0, params=KatokParams(), dt=0.05, t_max=None):
    """Durations of the maximal time intervals spent in D_r0 \\ D_{r0/2}
    by the flow from s0 ∈ ∂D_r0, until the orbit leaves D_r0."""
    r0 = params.r0
    v = params.vec()
    t_max = 50.0 * T0_star(params.alpha) if t_max is None else t_max

    def region(y):
        u = y[0] ** 2 + y[1] ** 2
        return 0 if u <= r0 / 2 else (1 if u <= r0 else 2)

    def crossing(y, level, h):
        def g(tau):
            z = K.flow(y[0], y[1], tau, v)[0]
            return z[0] * z[0] + z[1] * z[1] - level
        ga, gb = g(0.0), g(h)
        if ga * gb > 0:  # start sits on the level up to round-off
            return 0.0 if abs(ga) < abs(gb) else h
        return optimize.brentq(g, 0.0, h, xtol=1e-14, rtol=1e-15)

    y = np.asarray(s0, dtype=float)
    t = 0.0
    reg = 1
    start = 0.0
    out = []
    # leave the boundary before classifying
    while t < t_max:
        yn, st, _ = K.flow(y[0], y[1], dt, v)
        rn = region(yn)
        if rn != reg:
            level = r0 / 2 if (reg == 0 or rn == 0) else r0
            tc = t + crossing(y, level, dt)
            if reg == 1:
                out.append(tc - start)
            if rn == 2 or (reg == 1 and rn == 2):
                break
            start = tc
            reg = rn
            if reg == 0 and rn == 2:
                break
        y = yn[:2]
        t += dt
    return out


def transit_time_axis(params=KatokParams()):
    """Annulus transit on the stable axis by 1-D quadrature: u' = -2uψ logλ."""
    f = lambda u: 1.0 / (2 * u * psi(u, params) * params.log_lam)
    return integrate.quad(f, params.r0 / 2, params.r0, epsabs=0, epsrel=1e-13)[0]


def check_transit_bound(thetas, params=KatokParams()):
    """Max annulus transit over entries at angles θ on ∂D_r0 (first quadrant, incoming)."""
    rr = math.sqrt(params.r0)
    worst = 0.0
    for th in np.atleast_1d(thetas):
        s0 = np.array([rr * math.cos(th), rr * math.sin(th)])
        tr = annulus_transits(s0, params)
        if tr:
            worst = max(worst, max(tr))
    T0 = T0_star(params.alpha, params.log_lam)
    return report(True, T0, worst, T0 - worst)


# ------------------------------------------------------------------ summability

def _delta_n(JA, JB, mu, n_dir=64):
    """max over the unstable cone of ‖(A−B)v‖/‖Av‖ (d(x,y) not yet divided out)."""
    from .cones import cone_directions
    V = cone_directions(mu, n_dir, "+")
    AV = np.einsum("nij,kj->nki", JA, V)
    DV = np.einsum("nij,kj->nki", JA - JB, V)
    return (np.linalg.norm(DV, axis=2) / np.linalg.norm(AV, axis=2)).max(axis=1)


def check_summability(p, params=KatokParams(), base=None, d=1e-3, mu=0.5, C_tilde=50.0,
                      h_min=1e-6, cap=100_000):
    """Σδ_n, Σ_n ∏_{j≤n} γ_j and ∏γ_n over the first return of p ∈ P.

    The partner y lies on the stable line of x at distance d; once the
    separation drops below h_min the jacobian difference is taken at h_min
    and scaled linearly.
    """
    from . import tower as TW
    from .cones import gamma_factor_from_jacobian
    from .katok import apply_G
    from .params import R
    base = TW.default_base(params) if base is None else base
    v = params.vec()
    q = TW._to_q(p, params)[0]
    pts, jac, T, st = TW._orbit_returns(q[0], q[1], base.box(), 1, int(cap), 60, v)
    if st == 3:
        raise TW.ReturnCapExceeded(cap)
    tau = int(T[1])
    es, sigma = TW._pullback(jac)
    sep = d * np.exp(sigma[:tau])
    step = np.maximum(sep, h_min)
    y = pts[:tau] + (step[:, None] * es[:tau]) @ R
    JA = jac[:tau]
    JB = apply_G(y, params).jacobian
    delta = _delta_n(JA, JB, mu) * (sep / step) / d
    lin = np.array([np.allclose(a, [[params.lam, 0], [0, 1 / params.lam]], atol=0, rtol=0)
                    for a in JA])
    delta[lin & np.array([np.array_equal(a, b) for a, b in zip(JA, JB)])] = 0.0
    g = gamma_factor_from_jacobian(JA, mu)
    lg = np.cumsum(np.log(g))
    sum_delta = float(delta.sum())
    sum_prod = float(np.exp(lg).sum())
    prod = float(math.exp(lg[-1]))
    hyp = True
    margin = min(C_tilde - sum_delta, C_tilde - sum_prod, 1.0 - prod)
    return report(hyp, C_tilde, max(sum_delta, sum_prod), margin, tau=tau,
                  sum_delta=sum_delta, sum_prod_gamma=sum_prod, prod_gamma=prod,
                  log_prod_gamma=float(lg[-1]), slow_steps=int((~lin).sum()))
