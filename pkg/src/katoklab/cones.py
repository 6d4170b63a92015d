"""Cone fields K± = {|v2| < μ|v1|} / {|v1| < μ|v2|} in the eigen chart,
slope dynamics η = ζ2/ζ1 and the angle-contraction factor γ."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .katok import apply_G, apply_G_inv
from .params import KatokParams, LAMBDA, from_eigen, to_eigen
from .slowdown import psi, psi_prime


class BlowupError(RuntimeError):
    pass


@dataclass(frozen=True)
class Cone:
    mu: float
    orientation: str = "+"

    def contains(self, v, closed=False):
        v = np.asarray(v, dtype=float)
        a, b = (v[..., 1], v[..., 0]) if self.orientation == "+" else (v[..., 0], v[..., 1])
        return np.abs(a) <= self.mu * np.abs(b) if closed else np.abs(a) < self.mu * np.abs(b)


def mu0_analytic(alpha):
    """Root in (0, 1) of η/(2α) - (η-1)²/2."""
    b = 1.0 + 1.0 / (2.0 * alpha)
    return b - math.sqrt(b * b - 1.0)


def phi_quadratic(eta, alpha):
    eta = np.asarray(eta, dtype=float)
    return eta / (2.0 * alpha) - 0.5 * (eta - 1.0) ** 2


def cone_directions(mu, n=32, orientation="+"):
    """Unit vectors spanning the closed cone (n slopes from -μ to μ)."""
    t = np.linspace(-mu, mu, n)
    v = np.column_stack([np.ones(n), t]) if orientation == "+" else np.column_stack([t, np.ones(n)])
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def cone_margin(J, mu, n=32, orientation="+"):
    """Smallest value of μ|w_major| - |w_minor| over images w = J v of the cone grid,
    normalized by |w|. Positive means J maps the closed cone into the open one."""
    J = np.asarray(J, dtype=float)
    V = cone_directions(mu, n, orientation)
    W = np.einsum("...ij,kj->...ki", J, V)
    if orientation == "+":
        major, minor = W[..., 0], W[..., 1]
    else:
        major, minor = W[..., 1], W[..., 0]
    m = (mu * np.abs(major) - np.abs(minor)) / np.hypot(major, minor)
    return m.min(axis=-1)


def check_cone_invariance(p, mu, params=KatokParams(), n=32):
    """True where dG K⁺(p) ⊂ K⁺(Gp) and dG⁻¹ K⁻(p) ⊂ K⁻(G⁻¹p) on the grid."""
    fwd = cone_margin(apply_G(p, params).jacobian, mu, n, "+")
    bwd = cone_margin(apply_G_inv(p, params).jacobian, mu, n, "-")
    ok = (fwd > 0) & (bwd > 0)
    return bool(ok) if np.ndim(ok) == 0 else ok


def cone_scan(pts, mu, params=KatokParams(), n=32):
    """Failure counts and worst margins over a sample."""
    fwd = cone_margin(apply_G(pts, params).jacobian, mu, n, "+")
    bwd = cone_margin(apply_G_inv(pts, params).jacobian, mu, n, "-")
    return {
        "mu": mu,
        "points": int(len(pts)),
        "forward_failures": int(np.count_nonzero(fwd <= 0)),
        "backward_failures": int(np.count_nonzero(bwd <= 0)),
        "worst_forward_margin": float(fwd.min()),
        "worst_backward_margin": float(bwd.min()),
    }


def eta_rate(s, eta, params=KatokParams()):
    """dη/dt along the flow at base point s."""
    s1, s2 = s
    u = s1 * s1 + s2 * s2
    ps = psi(u, params)
    dp = psi_prime(u, params) if u > 0 else 0.0
    return -2.0 * params.log_lam * ((ps + u * dp) * eta + s1 * s2 * dp * (eta * eta + 1.0))


def eta_flow(s0, eta0, t, params=KatokParams(), t_eval=None, rtol=1e-12):
    """Integrate (s, η) jointly; returns (times, s(t), η(t))."""
    L = params.log_lam

    def rhs(_, y):
        s1, s2, eta = y
        ps = psi(s1 * s1 + s2 * s2, params)
        return [L * ps * s1, -L * ps * s2, eta_rate((s1, s2), eta, params)]

    def blow(_, y):
        return 10.0 - abs(y[2])
    blow.terminal = True

    sol = solve_ivp(rhs, (0.0, t), [s0[0], s0[1], eta0], method="DOP853",
                    rtol=rtol, atol=1e-15, t_eval=t_eval, events=blow)
    if sol.status == 1:
        raise BlowupError("slope left the chart |η| ≤ 10")
    return sol.t, sol.y[:2].T, sol.y[2]


def _angle_rate(J, theta):
    """Derivative of the induced direction map: |det J| / |J v_θ|²."""
    c, s = np.cos(theta), np.sin(theta)
    w1 = J[..., 0, 0, None] * c + J[..., 0, 1, None] * s
    w2 = J[..., 1, 0, None] * c + J[..., 1, 1, None] * s
    det = np.abs(J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0])
    return det[..., None] / (w1 * w1 + w2 * w2)


def gamma_factor_from_jacobian(J, mu, n=64, refine=True):
    """sup over pairs in K⁺ of ∠(Jv, Jw)/∠(v, w).

    In the plane this sup equals the max of the direction-map derivative
    over the cone, found on an n-point grid and refined by golden section.
    """
    J = np.asarray(J, dtype=float)
    single = J.ndim == 2
    J = J[None] if single else J
    th_max = math.atan(mu)
    th = np.linspace(-th_max, th_max, n)
    vals = _angle_rate(J, th)
    best = vals.max(axis=1)
    if refine:
        k = vals.argmax(axis=1)
        step = th[1] - th[0]
        lo = np.maximum(th[k] - step, -th_max)
        hi = np.minimum(th[k] + step, th_max)
        g = (math.sqrt(5) - 1) / 2
        for _ in range(60):
            a = hi - g * (hi - lo)
            b = lo + g * (hi - lo)
            fa = _rate_at(J, a)
            fb = _rate_at(J, b)
            left = fa > fb
            hi = np.where(left, b, hi)
            lo = np.where(left, lo, a)
        best = np.maximum(best, _rate_at(J, 0.5 * (lo + hi)))
    return float(best[0]) if single else best


def _rate_at(J, theta):
    c, s = np.cos(theta), np.sin(theta)
    w1 = J[:, 0, 0] * c + J[:, 0, 1] * s
    w2 = J[:, 1, 0] * c + J[:, 1, 1] * s
    det = np.abs(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0])
    return det / (w1 * w1 + w2 * w2)


def gamma_pairwise(J, mu, n=257):
    """Brute-force max of the angle ratio over pairs of grid directions."""
    th = np.linspace(-math.atan(mu), math.atan(mu), n)
    V = np.column_stack([np.cos(th), np.sin(th)])
    W = V @ np.asarray(J, dtype=float).T
    ang = np.arctan2(W[:, 1], W[:, 0])
    i, j = np.triu_indices(n, 1)
    return float(np.max(np.abs(ang[i] - ang[j]) / (th[j] - th[i])))


def gamma_factor(p, mu, params=KatokParams(), n=64):
    return gamma_factor_from_jacobian(apply_G(p, params).jacobian, mu, n)


def gamma_linear(mu):
    """Exact γ for A: attained at the cone boundary."""
    return (1.0 + mu * mu) / (LAMBDA ** 2 + mu * mu / LAMBDA ** 2)


def product_bound_samples(params=KatokParams(), mu=0.5, n_samples=1000, rng=None, n=64):
    """Sampled check of ∏_{j≤k} γ_j(x) ≤ (1 + C1 s2(0)^{2α} k)^{-1/α}.

    Starting points are drawn uniformly in D_{r0/2}; k is the last index of
    the initial run of iterates staying in D_{r0/2}.
    """
    rng = params.rng(55) if rng is None else rng
    r = math.sqrt(params.r0 / 2)
    rows = []
    while len(rows) < n_samples:
        rad = r * math.sqrt(rng.random())
        ang = 2 * math.pi * rng.random()
        s = np.array([rad * math.cos(ang), rad * math.sin(ang)])
        x = from_eigen(s)
        log_prod = 0.0
        k = -1
        while True:
            ev = apply_G(x, params)
            log_prod += math.log(gamma_factor_from_jacobian(ev.jacobian, mu, n))
            k += 1
            sn = to_eigen(ev.image)
            if sn @ sn > params.r0 / 2 or k > 5000:
                break
            x = ev.image
        bound = -math.log1p(params.C1 * abs(s[1]) ** (2 * params.alpha) * k) / params.alpha
        rows.append((s[0], s[1], k, log_prod, bound))
    return np.array(rows)
