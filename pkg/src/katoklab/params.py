"""Construction parameters of the Katok map and the eigen-chart conventions.

Disks use the radius-squared convention: ``D_r = {s1**2 + s2**2 <= r}``.
Eigen coordinates are taken in the orthonormal basis (e_u, e_s) of A.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

SQRT5 = math.sqrt(5.0)
LAMBDA = (3.0 + SQRT5) / 2.0
LOG_LAMBDA = math.log(LAMBDA)
A = np.array([[2.0, 1.0], [1.0, 1.0]])
A_INV = np.array([[1.0, -1.0], [-1.0, 2.0]])
# exponent of the smooth radial target density used by φ inside D_r0
BUMP_POWER = 4


class ParameterError(ValueError):
    pass


class ChartDomainError(ValueError):
    pass


class TorusPoint(NamedTuple):
    x: float
    y: float


class EigenPoint(NamedTuple):
    s1: float
    s2: float


def eigen_basis():
    """Unit eigenvectors (e_u, e_s) of A, both with positive first component."""
    eu = np.array([1.0, (SQRT5 - 1.0) / 2.0])
    es = np.array([1.0, -(SQRT5 + 1.0) / 2.0])
    return eu / np.linalg.norm(eu), es / np.linalg.norm(es)


_EU, _ES = eigen_basis()
# s = R @ x ; x = R.T @ s
R = np.vstack([_EU, _ES])


def in_disk(s, r):
    """Membership in D_r (radius-squared convention). Works on (2,) or (N, 2)."""
    s = np.asarray(s, dtype=float)
    return np.sum(s * s, axis=-1) <= r


def reduce_torus(p):
    """Reduce to [0, 1)."""
    p = np.mod(np.asarray(p, dtype=float), 1.0)
    return np.where(p >= 1.0, 0.0, p)


def centered(p):
    """Representative of a torus point in [-1/2, 1/2)^2."""
    p = np.asarray(p, dtype=float)
    return p - np.floor(p + 0.5)


def to_eigen(p, radius2=None):
    """Torus point -> eigen coordinates of its representative in [-1/2, 1/2)^2.

    If ``radius2`` is given, raise ChartDomainError when it exceeds the
    injectivity region of the chart.
    """
    if radius2 is not None and radius2 >= 0.25:
        raise ChartDomainError(f"eigen disk D_{radius2} is not inside the chart")
    return centered(p) @ R.T


def from_eigen(s):
    return reduce_torus(np.asarray(s, dtype=float) @ R)


def _blend(alpha, r0):
    """Coefficients of the ψ blend on [r0/2, r0].

    On t = (u - r0/2)/(r0/2) in [0, 1] the derivative is
    ψ'(u) = d0 (1 - B(t)), B(t) = (p+1) t^p - p t^(p+1), which is
    non-increasing and vanishes with zero slope at u = r0. The exponent p
    makes the total increment equal 1 - ψ(r0/2).
    """
    h = r0 / 2.0
    psi_a = 2.0 ** (-alpha)
    d0 = alpha / r0 * 2.0 ** (1.0 - alpha)
    m = (1.0 - psi_a) / (d0 * h)
    p = 2.0 / (1.0 - m) - 2.0
    return {"p": p, "d0": d0, "psi_a": psi_a, "h": h}


def _psi_np(u, alpha, r0, bl):
    u = np.asarray(u, dtype=float)
    a = r0 / 2.0
    t = np.clip((u - a) / bl["h"], 0.0, 1.0)
    p = bl["p"]
    mid = bl["psi_a"] + bl["d0"] * bl["h"] * (t - (t ** (p + 1) - p * t ** (p + 2) / (p + 2)))
    low = np.power(np.maximum(u, 0.0) / r0, alpha)
    return np.where(u < a, low, np.where(u < r0, mid, 1.0))


@dataclass(frozen=True)
class KatokParams:
    alpha: float = 0.5
    r0: float = 0.1
    ode_tol: float = 1e-12
    rng_seed: int = 0
    lam: float = field(init=False)
    log_lam: float = field(init=False)
    r1: float = field(init=False)
    C1: float = field(init=False)
    I_r0: float = field(init=False)
    kappa0: float = field(init=False)
    psi_blend: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0,1), got {self.alpha}")
        if not (0.0 < self.r0 < 1.0):
            raise ParameterError(f"r0 must lie in (0,1), got {self.r0}")
        if not (0.0 < self.ode_tol < 1e-3):
            raise ParameterError("ode_tol must lie in (0, 1e-3)")
        r1 = 2.0 * self.r0 * LOG_LAMBDA
        if r1 >= 0.2:
            raise ParameterError(f"r1 = {r1:.4g} >= 0.2: chart not injective on D_r1")
        bl = _blend(self.alpha, self.r0)
        s = object.__setattr__
        s(self, "lam", LAMBDA)
        s(self, "log_lam", LOG_LAMBDA)
        s(self, "r1", r1)
        s(self, "C1", 2.0 * self.alpha * LOG_LAMBDA / self.r0 ** self.alpha)
        s(self, "psi_blend", bl)
        I_r0 = self.I_a + integrate.quad(
            lambda v: 1.0 / float(_psi_np(v, self.alpha, self.r0, bl)),
            self.r0 / 2.0, self.r0, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
        s(self, "I_r0", I_r0)
        # area element in u = s1^2 + s2^2 is pi du
        s(self, "kappa0", 1.0 + math.pi * (I_r0 - self.r0))

    @property
    def I_a(self):
        """∫_0^{r0/2} dv/ψ(v) in closed form."""
        a = self.r0 / 2.0
        return self.r0 ** self.alpha * a ** (1.0 - self.alpha) / (1.0 - self.alpha)

    @property
    def c(self):
        """Mean of 1/ψ over the disk, I(r0)/r0."""
        return self.I_r0 / self.r0

    @property
    def bump_height(self):
        """e_b in g(u) = 1 + e_b (1 - u/r0)^k, fixed by ∫_0^r0 g = I(r0)."""
        return (self.c - 1.0) * (BUMP_POWER + 1)

    def vec(self):
        """Flat float64 parameter vector consumed by the compiled kernels."""
        bl = self.psi_blend
        v = np.zeros(16)
        v[:] = (self.alpha, self.r0, self.log_lam, self.lam, bl["p"], bl["d0"],
                bl["psi_a"], self.r0 / 2.0, self.I_a, self.c, self.kappa0,
                self.ode_tol, self.ode_tol * 1e-2, self.bump_height, self.I_r0, bl["h"])
        return v

    def with_(self, **kw):
        d = {"alpha": self.alpha, "r0": self.r0, "ode_tol": self.ode_tol,
             "rng_seed": self.rng_seed}
        d.update(kw)
        return KatokParams(**d)

    def to_dict(self):
        return {"alpha": self.alpha, "r0": self.r0, "ode_tol": self.ode_tol,
                "rng_seed": self.rng_seed}

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            cfg = json.load(fh)
        allowed = {"alpha", "r0", "ode_tol", "rng_seed"}
        extra = set(cfg) - allowed
        if extra:
            raise ParameterError(f"unknown config keys: {sorted(extra)}")
        return cls(**cfg)

    def rng(self, stream=0):
        return np.random.default_rng([self.rng_seed, stream])


# indices into KatokParams.vec()
(P_ALPHA, P_R0, P_LOGLAM, P_LAM, P_BP, P_D0, P_PSIA, P_A, P_IA, P_C,
 P_KAPPA0, P_RTOL, P_ATOL, P_E, P_IR0, P_H) = range(16)


def disk_inclusion_margin(params, n=4096):
    """Literal check of D_r0 ⊂ Int A(D_r1) ∩ Int A^{-1}(D_r1) on ∂D_r0.

    Returns the minimum of r1 - |A^{∓1} s|^2 over sampled boundary points;
    a negative value means the inclusion fails.
    """
    th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    rr = math.sqrt(params.r0)
    s1, s2 = rr * np.cos(th), rr * np.sin(th)
    back = (s1 / LAMBDA) ** 2 + (s2 * LAMBDA) ** 2
    fwd = (s1 * LAMBDA) ** 2 + (s2 / LAMBDA) ** 2
    return float(params.r1 - max(back.max(), fwd.max()))


def lattice_vectors(radius):
    """Nonzero vectors of the eigen-chart lattice R Z^2 with norm < radius."""
    k = int(math.ceil(radius)) + 1
    out = []
    for i in range(-k, k + 1):
        for j in range(-k, k + 1):
            if i == 0 and j == 0:
                continue
            v = R @ np.array([i, j], dtype=float)
            if np.hypot(*v) < radius:
                out.append(v)
    return np.array(out)


def slowdown_region_gap(params, n=801):
    """Smallest value of the region function on lattice translates of W.

    W is the set of points whose linear trajectory over [0,1] meets D_r0.
    A positive return value certifies (on a raster) that W is disjoint from
    all its nonzero lattice translates, so the lift used by G is unique.
    """
    rr = math.sqrt(params.r0)
    g1 = np.linspace(-rr, rr, n)
    g2 = np.linspace(-LAMBDA * rr, LAMBDA * rr, 3 * n)
    S1, S2 = np.meshgrid(g1, g2)
    inside = region_value(S1, S2, params.r0) < 0.0
    pts = np.column_stack([S1[inside], S2[inside]])
    worst = np.inf
    for v in lattice_vectors(2.0 * LAMBDA * rr + 2.0):
        q = pts - v
        worst = min(worst, float(region_value(q[:, 0], q[:, 1], params.r0).min()))
    return worst


def region_value(s1, s2, r0, direction=1):
    """min over t in [0,1] of |A^{±t} s|^2 - r0; negative inside W."""
    a = np.asarray(s1, dtype=float) ** 2
    b = np.asarray(s2, dtype=float) ** 2
    k = 2.0 * LOG_LAMBDA * direction
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip(np.log(b / a) / (2.0 * k), 0.0, 1.0)
    t = np.where(np.isfinite(t), t, 0.0)
    f = a * np.exp(k * t) + b * np.exp(-k * t)
    return np.minimum(f, np.minimum(a + b, a * np.exp(k) + b * np.exp(-k))) - r0
