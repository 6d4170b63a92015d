"""First returns of G_T2 to the base element P and orbit-sampled checks of
the tower conditions (Y3), (Y4), (Y5) and the expansion bound.

Orbits are run on G in the φ-chart: the G_T2 orbit of p is φ(Gʲ φ⁻¹p), so
membership in P is tested on φ(qⱼ) and the D_r1 itinerary on qⱼ itself.
Stable separations over a full return are of order λ^{-τ} and underflow, so
they are carried in log form; finite pairs are used only while the
separation stays above the curve tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _kernels as K
from .katok import phi_inv, torus_distance
from .params import KatokParams, R, reduce_torus
from .symbolic import SCALE, MarkovPartition, build_partition
from .thermo import InsufficientData, _eu_G, _norm

INSET = 1e-9
DEFAULT_CAP = 100_000


class ReturnCapExceeded(RuntimeError):
    def __init__(self, cap):
        super().__init__(f"no return within {cap} iterates")
        self.cap = cap


class CurveGrowthFailure(RuntimeError):
    pass


@dataclass
class ReturnRecord:
    start: np.ndarray
    tau: int
    itinerary: np.ndarray | None
    logJu_return: float = math.nan

    @property
    def k(self):
        return -1 if self.itinerary is None else (len(self.itinerary) - 2) // 2


@dataclass(frozen=True)
class Base:
    """The rectangle P in the eigen chart: center (x and s) and half-widths."""
    center_x: np.ndarray
    center_s: np.ndarray
    half: np.ndarray
    area: float
    index: int = -1

    def box(self, inset=INSET):
        return np.array([self.center_x[0], self.center_x[1], self.half[0], self.half[1], inset])

    def contains(self, p, inset=INSET):
        d = np.asarray(p, dtype=float) - self.center_x
        s = (d - np.round(d)) @ R.T
        return (np.abs(s[..., 0]) < self.half[0] - inset) & (np.abs(s[..., 1]) < self.half[1] - inset)

    def sample(self, n, rng):
        s = self.center_s + self.half * rng.uniform(-1.0, 1.0, size=(n, 2))
        return reduce_torus(s @ R)


def base_from_partition(part: MarkovPartition, k=None):
    k = part.P_index if k is None else k
    x0, x1, y0, y1 = part.rects[k].floats() * SCALE
    cs = np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1)])
    half = np.array([0.5 * (x1 - x0), 0.5 * (y1 - y0)])
    return Base(reduce_torus(cs @ R), cs, half, float(4 * half[0] * half[1]), k)


def default_base(params=KatokParams(), delta=0.05):
    return base_from_partition(build_partition(delta=delta, params=params))


# ------------------------------------------------------------------ kernels

@njit(cache=True)
def _inside(q1, q2, b, v):
    p1, p2 = K.phi_pos(q1, q2, v)
    d1 = K.center(p1 - b[0])
    d2 = K.center(p2 - b[1])
    s1 = K.R00 * d1 + K.R01 * d2
    s2 = K.R10 * d1 + K.R11 * d2
    return abs(s1) < b[2] - b[4] and abs(s2) < b[3] - b[4]


@njit(cache=True)
def _in_disk(q1, q2, r):
    s1 = K.R00 * q1 + K.R01 * q2
    s2 = K.R10 * q1 + K.R11 * q2
    return s1 * s1 + s2 * s2 < r


@njit(cache=True)
def _return_time(q1, q2, b, r1, cap, v):
    """(τ, number of D_r1 entries, status); τ = -1 past the cap."""
    inside = _in_disk(q1, q2, r1)
    entries = 0
    for j in range(1, cap + 1):
        q1, q2, J, s, st = K.G_torus(q1, q2, 1, v, False)
        if st != 0:
            return -1, entries, st
        if _inside(q1, q2, b, v):
            return j, entries, 0
        now = _in_disk(q1, q2, r1)
        if now and not inside:
            entries += 1
        inside = now
    return -1, entries, 0


@njit(cache=True)
def _return_many(q, b, r1, cap, v):
    m = q.shape[0]
    tau = np.empty(m, dtype=np.int64)
    ent = np.empty(m, dtype=np.int64)
    st = np.empty(m, dtype=np.int64)
    for i in range(m):
        tau[i], ent[i], st[i] = _return_time(q[i, 0], q[i, 1], b, r1, cap, v)
    return tau, ent, st


@njit(cache=True)
def _orbit_returns(q1, q2, b, n_ret, cap, extra, v):
    """One jacobian-carrying orbit through n_ret returns to P plus extra steps.

    Returns (points, jacobians, return steps T_0..T_n_ret, status); status 3
    means a return took longer than cap.
    """
    size = 1024
    pts = np.empty((size, 2))
    jac = np.empty((size, 2, 2))
    T = np.zeros(n_ret + 1, dtype=np.int64)
    pts[0, 0] = q1
    pts[0, 1] = q2
    k = 0
    got = 0
    stop = -1
    while stop < 0 or k < stop:
        if k + 1 >= size:
            size *= 2
            p2 = np.empty((size, 2))
            j2 = np.empty((size, 2, 2))
            p2[:k + 1] = pts[:k + 1]
            j2[:k] = jac[:k]
            pts = p2
            jac = j2
        a, c, J, s, st = K.G_torus(pts[k, 0], pts[k, 1], 1, v, True)
        if st != 0:
            return pts[:k + 1], jac[:k], T, st
        jac[k] = J
        pts[k + 1, 0] = a
        pts[k + 1, 1] = c
        k += 1
        if stop < 0:
            if _inside(a, c, b, v):
                got += 1
                T[got] = k
                if got == n_ret:
                    stop = k + extra
            elif k - T[got] >= cap:
                return pts[:k + 1], jac[:k], T, 3
    return pts[:k + 1], jac[:k], T, 0


@njit(cache=True)
def _pullback(jac):
    """Unit stable vectors along the orbit and σ_k = log|DGᵏ v_s| for unit v_s at q_0."""
    n = jac.shape[0]
    es = np.empty((n + 1, 2))
    grow = np.zeros(n + 1)
    e = np.array([0.0, 1.0])
    es[n] = e
    for k in range(n - 1, -1, -1):
        e = K.inv2(jac[k]) @ e
        g = _norm(e)
        e /= g
        es[k] = e
        grow[k] = math.log(g)
    sigma = np.zeros(n + 1)
    for k in range(1, n + 1):
        sigma[k] = sigma[k - 1] - grow[k - 1]
    return es, sigma


@njit(cache=True)
def _pushforward(jac, e):
    n = jac.shape[0]
    eu = np.empty((n + 1, 2))
    ups = np.zeros(n + 1)
    e = e / _norm(e)
    eu[0] = e
    for k in range(n):
        e = jac[k] @ e
        g = _norm(e)
        e /= g
        eu[k + 1] = e
        ups[k + 1] = ups[k] + math.log(g)
    return eu, ups


@njit(cache=True)
def _dphi_norms(pts, vec, v):
    out = np.empty(pts.shape[0])
    for k in range(pts.shape[0]):
        _, _, Jp = K.phi(pts[k, 0], pts[k, 1], v)
        w = Jp @ vec[k]
        out[k] = _norm(w)
    return out


@njit(cache=True)
def _pull_points(y1, y2, n, v):
    """y_n given; returns y_0..y_n by inverse iteration."""
    out = np.empty((n + 1, 2))
    out[n, 0] = y1
    out[n, 1] = y2
    for k in range(n - 1, -1, -1):
        a, b, J, s, st = K.G_torus(out[k + 1, 0], out[k + 1, 1], -1, v, False)
        out[k, 0] = a
        out[k, 1] = b
    return out


@njit(cache=True)
def _jacs(pts, v):
    n = pts.shape[0]
    jac = np.empty((n, 2, 2))
    for k in range(n):
        _, _, J, s, st = K.G_torus(pts[k, 0], pts[k, 1], 1, v, True)
        jac[k] = J
    return jac


# ------------------------------------------------------------------ returns

def _to_q(p, params):
    q = phi_inv(np.atleast_2d(p), params)
    return np.ascontiguousarray(q - np.floor(q + 0.5))


def itinerary_of(pts, r1):
    """Alternation times 0 = n_0 < … < n_{2k+1} = τ of D_r1 visits along q_0..q_τ."""
    s = pts @ R.T
    ins = np.sum(s * s, axis=1) < r1
    if ins[0] or ins[-1]:
        raise ValueError("orbit starts or returns inside D_r1")
    flips = np.flatnonzero(ins[1:] != ins[:-1]) + 1
    return np.concatenate([[0], flips, [len(pts) - 1]]).astype(np.int64)


def first_return(p, params=KatokParams(), base=None, cap=DEFAULT_CAP, n_back=60, with_ju=True):
    """First return of G_T2 from p ∈ Int P, with itinerary and log|JᵘF|."""
    base = default_base(params) if base is None else base
    p = np.asarray(p, dtype=float)
    if not base.contains(p):
        raise ValueError("start point not in Int P")
    v = params.vec()
    q = _to_q(p, params)[0]
    pts, jac, T, st = _orbit_returns(q[0], q[1], base.box(), 1, int(cap), 0, v)
    if st == 3:
        raise ReturnCapExceeded(cap)
    if st != 0:
        raise RuntimeError(f"integration failure (status {st})")
    tau = int(T[1])
    try:
        itin = itinerary_of(pts, params.r1)
    except ValueError:
        itin = None  # P meets D_r1: only happens for large r0
    lj = math.nan
    if with_ju:
        e = _eu_G(q[0], q[1], n_back, v)
        eu, ups = _pushforward(jac, e)
        dn = _dphi_norms(pts[[0, -1]], eu[[0, -1]], v)
        lj = float(ups[-1] + math.log(dn[1]) - math.log(dn[0]))
    return ReturnRecord(p, int(tau), itin, lj)


def return_times(n, params=KatokParams(), base=None, cap=DEFAULT_CAP, rng=None):
    """τ for n uniform starts in P (-1 for starts past the cap) and D_r1 entry counts."""
    base = default_base(params) if base is None else base
    rng = params.rng(40) if rng is None else rng
    p = base.sample(n, rng)
    q = _to_q(p, params)
    tau, ent, st = _return_many(q, base.box(), params.r1, int(cap), params.vec())
    if np.any(st != 0):
        raise RuntimeError(f"{int(np.count_nonzero(st))} integration failures")
    return tau, ent


def return_records(n, params=KatokParams(), base=None, cap=DEFAULT_CAP, rng=None, with_ju=True):
    """Full records for n starts; returns (records, discarded count)."""
    base = default_base(params) if base is None else base
    rng = params.rng(41) if rng is None else rng
    out, lost = [], 0
    for p in base.sample(n, rng):
        try:
            out.append(first_return(p, params, base, cap, with_ju=with_ju))
        except ReturnCapExceeded:
            lost += 1
    return out, lost


def kac_check(n=10_000, params=KatokParams(), base=None, cap=DEFAULT_CAP, rng=None, tol=0.02):
    base = default_base(params) if base is None else base
    tau, _ = return_times(n, params, base, cap, rng)
    kept = tau[tau > 0]
    mean = float(kept.mean())
    target = 1.0 / base.area
    return {
        "samples": int(n),
        "discarded": int(n - kept.size),
        "mean_tau": mean,
        "stderr": float(kept.std(ddof=1) / math.sqrt(kept.size)),
        "inverse_area": target,
        "relative_error": abs(mean - target) / target,
        "ok": abs(mean - target) / target < tol,
    }


def return_histogram(tau, area=None, min_records=1000):
    """Empirical law of τ from an array of return times (-1 marks a discarded start)."""
    tau = np.asarray(tau)
    if tau.size < min_records:
        raise InsufficientData(f"{tau.size} records < {min_records}")
    kept = tau[tau > 0]
    values, counts = np.unique(kept, return_counts=True)
    freq = counts / tau.size
    # survival P(τ > n) on the bulk of the tail
    srt = np.sort(kept)
    surv = 1.0 - np.arange(1, srt.size + 1) / tau.size
    lo, hi = np.searchsorted(srt, np.quantile(srt, [0.5, 0.99]))
    sel = slice(lo, hi)
    slope, icpt = np.polyfit(srt[sel], np.log(surv[sel]), 1)
    partial = np.cumsum(values * freq)
    out = {
        "values": values,
        "freq": freq,
        "discarded_fraction": 1.0 - kept.size / tau.size,
        "tail_exponent": float(slope),
        "partial_sums": partial,
        "mean": float(partial[-1] / freq.sum()),
    }
    if area is not None:
        out["kac_relative_error"] = abs(out["mean"] * area - 1.0)
    return out


# ------------------------------------------------------------------ (Y3), (Y4), (9)

@dataclass
class PairData:
    start: np.ndarray
    returns: np.ndarray          # T_0 = 0 < T_1 < … (G-steps of successive returns)
    log_stable: np.ndarray       # log d(F^{n+1}x, F^{n+1}y)/d(Fⁿx, Fⁿy) per return, stable pair
    log_unstable: np.ndarray     # same for the linearized unstable pair
    distortion: np.ndarray       # bounds on |log JᵘF(Fⁿx)/JᵘF(Fⁿy)|
    K_stable: float
    K_unstable: float
    d0: float
    retries: int


def _log_norm_rows(a):
    return np.log(np.hypot(a[:, 0], a[:, 1]))


def _analyze(q0, base, params, h, n_tower, cap, tol, extra, n_back):
    v = params.vec()
    box = base.box()
    pts, jac, T, st = _orbit_returns(q0[0], q0[1], box, n_tower, int(cap), extra, v)
    if st == 3:
        raise ReturnCapExceeded(cap)
    if st != 0:
        raise RuntimeError(f"integration failure (status {st})")
    N = int(T[-1])
    es, sigma = _pullback(jac)
    eu, ups = _pushforward(jac[:N], _eu_G(q0[0], q0[1], n_back, v))
    # GT2 chart factors |dφ e| along the first return and at the return times
    tau0 = int(T[1])
    ns = _dphi_norms(pts[:tau0 + 1], es[:tau0 + 1], v)
    nu = _dphi_norms(pts[:tau0 + 1], eu[:tau0 + 1], v)
    ns_T = _dphi_norms(pts[T], es[T], v)
    nu_T = _dphi_norms(pts[T], eu[T], v)
    lsT = sigma[T] + np.log(ns_T)
    luT = ups[T] + np.log(nu_T)
    log_stable = np.diff(lsT)
    log_unstable = np.diff(luT)

    # finite stable pair: y_J on the stable line at separation ~tol, pulled back
    retries = 0
    hh = h
    while True:
        J = int(np.searchsorted(-(math.log(hh) + sigma[:N + 1]), -math.log(tol)))
        J = min(max(J, 1), N)
        dx = (hh * math.exp(sigma[J]) * es[J]) @ R
        y = _pull_points(pts[J, 0] + dx[0], pts[J, 1] + dx[1], J, v)
        same = _inside(y[0, 0], y[0, 1], box, v)
        if same:
            for k in range(1, min(J, tau0) + 1):
                if _inside(y[k, 0], y[k, 1], box, v) != (k == tau0):
                    same = False
                    break
        if same:
            break
        retries += 1
        hh *= 0.5
        if retries > 8:
            raise CurveGrowthFailure("stable curve left the s-set")
    px = reduce_torus(np.array([K.phi_pos(a, b, v) for a, b in pts[:J + 1]]))
    py = reduce_torus(np.array([K.phi_pos(a, b, v) for a, b in y]))
    dfin = torus_distance(px, py)
    d0 = float(dfin[0])

    # distortion: y's unstable vector along its own orbit up to J, then x's jacobians
    jy = _jacs(y[:J], v)
    euy, upsy = _pushforward(np.concatenate([jy, jac[J:N]]), _eu_G(y[0, 0], y[0, 1], n_back, v))
    ptsy = np.concatenate([y, pts[J + 1:N + 1]])
    nuy_T = _dphi_norms(ptsy[T], euy[T], v)
    ljx = np.diff(luT)
    ljy = np.diff(upsy[T] + np.log(nuy_T))
    # empirical Lipschitz constant of log|DG e_u| over the finite part
    gx = np.diff(ups[:J + 1])
    gy = np.diff(upsy[:J + 1])
    sep = np.hypot(*(((y[:J] - pts[:J]) + 0.5) % 1.0 - 0.5).T)
    L = float(np.max(np.abs(gx - gy) / np.maximum(sep, 1e-300))) if J > 0 else 0.0
    lin = hh * np.exp(sigma[:N])
    dist = np.empty(n_tower)
    for n in range(n_tower):
        a, b = max(int(T[n]), J), int(T[n + 1])
        tail = L * lin[a:b].sum() if b > a else 0.0
        dist[n] = abs(ljx[n] - ljy[n]) + tail
    # differences of sums of ~τ logs are only resolved to this level
    dist = np.maximum(dist, 1e-15 * np.abs(ljx).max() * 10)

    # expansion bound over the first return
    dl = hh * np.exp(sigma[:tau0 + 1]) * ns
    dl[:min(J, tau0) + 1] = dfin[:min(J, tau0) + 1]
    Ks = float(dl.max() / max(dl[0], dl[-1]))
    lu = ups[:tau0 + 1] + np.log(nu)
    Ku = float(math.exp(lu.max() - max(lu[0], lu[-1])))
    return PairData(q0, T, log_stable, log_unstable, dist, Ks, Ku, d0, retries)


def tower_pairs(n, params=KatokParams(), base=None, rng=None, h=1e-3, n_tower=3,
                cap=DEFAULT_CAP, tol=1e-9, extra=60, n_back=60):
    """PairData for n uniform starts in P; returns (pairs, failures by kind)."""
    base = default_base(params) if base is None else base
    rng = params.rng(42) if rng is None else rng
    out = []
    failed = {"cap": 0, "curve": 0}
    for p in base.sample(n, rng):
        q0 = _to_q(p, params)[0]
        try:
            out.append(_analyze(q0, base, params, h, n_tower, cap, tol, extra, n_back))
        except ReturnCapExceeded:
            failed["cap"] += 1
        except CurveGrowthFailure:
            failed["curve"] += 1
    return out, failed


def check_Y3_Y4(pairs, c_tilde=1.0):
    """Empirical (Y3) constants (in log form) and (Y4) distortion sums with a
    fitted geometric rate."""
    if not pairs:
        raise InsufficientData("no pairs")
    ls = np.concatenate([p.log_stable for p in pairs])
    lu = np.concatenate([p.log_unstable for p in pairs])
    D = np.array([p.distortion for p in pairs])
    sums = D.sum(axis=1)
    n = np.arange(D.shape[1])
    logD = np.log(D.max(axis=0))
    slope = float(np.polyfit(n, logD, 1)[0]) if D.shape[1] > 1 else math.nan
    return {
        "pairs": len(pairs),
        "log_a_stable": float(ls.max()),
        "log_a_unstable": float(-lu.min()),
        "a": float(math.exp(max(ls.max(), -lu.min()))),
        "Y3_ok": bool(ls.max() < 0 and lu.min() > 0),
        "distortion_max_sum": float(sums.max()),
        "distortion_by_return": D.max(axis=0),
        "kappa": float(math.exp(slope)),
        "Y4_ok": bool(sums.max() < c_tilde and slope < 0),
    }


def check_expansion_condition(pairs, pairs_doubled=None, tol=0.2):
    """Empirical K = max over pairs of d(fʲx, fʲy)/max(d(x,y), d(Fx,Fy)), 0 ≤ j ≤ τ."""
    K1 = max(max(p.K_stable, p.K_unstable) for p in pairs)
    out = {"pairs": len(pairs), "K": K1,
           "K_stable": max(p.K_stable for p in pairs),
           "K_unstable": max(p.K_unstable for p in pairs)}
    if pairs_doubled is not None:
        K2 = max(max(p.K_stable, p.K_unstable) for p in pairs_doubled)
        out["K_doubled"] = K2
        out["relative_change"] = abs(K2 - K1) / K1
        out["stable"] = bool(np.isfinite(K2) and abs(K2 - K1) <= tol * K1)
    return out
