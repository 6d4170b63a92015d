"""Markov partition of A, refined cylinders, first-return words and periodic points.

Geometry lives in scaled eigen coordinates z = s/c, c = 1/sqrt(1+φ²), where the
lattice R Z² is spanned by (φ, 1) and (1, -φ) and A acts as diag(φ², φ⁻²).
Coordinates are exact elements a + bφ of Z[φ].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import total_ordering
from itertools import product

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigs

from .params import A, LAMBDA, LOG_LAMBDA, KatokParams, R

PHI_F = (1 + math.sqrt(5)) / 2
SCALE = 1 / math.sqrt(1 + PHI_F ** 2)


class NoValidElement(RuntimeError):
    pass


class InsufficientData(ValueError):
    pass


@total_ordering
class Golden:
    """a + bφ with integer a, b and φ² = φ + 1."""
    __slots__ = ("a", "b")

    def __init__(self, a=0, b=0):
        self.a = int(a)
        self.b = int(b)

    @staticmethod
    def _c(x):
        return x if isinstance(x, Golden) else Golden(x, 0)

    def __add__(self, o):
        o = self._c(o)
        return Golden(self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __neg__(self):
        return Golden(-self.a, -self.b)

    def __sub__(self, o):
        return self + (-self._c(o))

    def __rsub__(self, o):
        return self._c(o) - self

    def __mul__(self, o):
        o = self._c(o)
        bb = self.b * o.b
        return Golden(self.a * o.a + bb, self.a * o.b + self.b * o.a + bb)

    __rmul__ = __mul__

    def sign(self):
        # sign of (2a + b) + b√5
        p, q = 2 * self.a + self.b, self.b
        if p >= 0 and q >= 0:
            return 0 if p == 0 and q == 0 else 1
        if p <= 0 and q <= 0:
            return -1
        return (1 if p > 0 else -1) * (1 if p * p > 5 * q * q else -1)

    def __eq__(self, o):
        o = self._c(o)
        return self.a == o.a and self.b == o.b

    def __lt__(self, o):
        return (self - o).sign() < 0

    def __hash__(self):
        return hash((self.a, self.b))

    def __float__(self):
        return self.a + self.b * PHI_F

    def __repr__(self):
        return f"Golden({self.a}, {self.b})"


PHI = Golden(0, 1)
LAM = Golden(1, 1)        # φ²
LAM_INV = Golden(2, -1)   # φ⁻²
LATTICE = ((PHI, Golden(1)), (Golden(1), -PHI))


def lattice_point(m, n):
    return (PHI * m + n, Golden(m) - PHI * n)


@dataclass(frozen=True)
class Rect:
    x0: Golden
    x1: Golden
    y0: Golden
    y1: Golden

    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def shift(self, dx, dy):
        return Rect(self.x0 + dx, self.x1 + dx, self.y0 + dy, self.y1 + dy)

    def image(self):
        return Rect(self.x0 * LAM, self.x1 * LAM, self.y0 * LAM_INV, self.y1 * LAM_INV)

    def meet(self, o):
        x0, x1 = max(self.x0, o.x0), min(self.x1, o.x1)
        y0, y1 = max(self.y0, o.y0), min(self.y1, o.y1)
        if x0 < x1 and y0 < y1:
            return Rect(x0, x1, y0, y1)
        return None

    def floats(self):
        return np.array([float(self.x0), float(self.x1), float(self.y0), float(self.y1)])


# Pythagorean tiling by a φ-square and a unit square sharing the s1-axis.
BASE = (Rect(Golden(0), PHI, Golden(0), PHI), Rect(PHI, PHI + 1, Golden(0), Golden(1)))


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    shift: tuple  # lattice translate ℓ with A(R_src) ∩ (R_dst + ℓ) the crossing strip


def base_edges(radius=6):
    """All Markov crossings A(R_i) ∩ (R_j + ℓ); raises if a crossing is not full."""
    out = []
    for i, Ri in enumerate(BASE):
        img = Ri.image()
        for j, Rj in enumerate(BASE):
            for m, n in product(range(-radius, radius + 1), repeat=2):
                lx, ly = lattice_point(m, n)
                tgt = Rj.shift(lx, ly)
                cut = img.meet(tgt)
                if cut is None:
                    continue
                if not (cut.x0 == tgt.x0 and cut.x1 == tgt.x1 and cut.y0 == img.y0 and cut.y1 == img.y1):
                    raise AssertionError("crossing is not Markov")
                out.append(Edge(i, j, (m, n)))
    return out


def base_matrix(edges=None):
    edges = base_edges() if edges is None else edges
    M = np.zeros((len(BASE), len(BASE)), dtype=np.int64)
    for e in edges:
        M[e.src, e.dst] += 1
    return M


@dataclass
class MarkovPartition:
    back: int                     # backward depth b
    fwd: int                      # forward depth f (number of forward edges)
    words: list                   # tuples of edge indices e_{-b}..e_{f-1}
    rects: list                   # Rect in the frame of BASE[node at time 0]
    nodes: np.ndarray             # node at time 0
    transition: sparse.csr_matrix
    edges: list = field(repr=False)
    P_index: int = -1
    verified_Q: int = -1
    collar_Q: int = -1

    @property
    def size(self):
        return len(self.words)

    def areas(self):
        return np.array([float(r.area()) for r in self.rects]) * SCALE ** 2

    def diameters(self):
        f = np.array([r.floats() for r in self.rects])
        return np.hypot(f[:, 1] - f[:, 0], f[:, 3] - f[:, 2]) * SCALE

    def polygon(self, k):
        """Vertices of element k in torus x-coordinates (unreduced, counter-clockwise)."""
        x0, x1, y0, y1 = self.rects[k].floats() * SCALE
        s = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        return s @ R  # R is orthogonal: x = Rᵀ s

    def locate(self, pts, inset=0.0):
        """Element index of each torus point (-1 if within ``inset`` of a boundary)."""
        return locate(self, pts, inset)

    @property
    def P(self):
        return self.P_index


def _interval_forward(path, edges):
    """s1-interval (scaled) of the forward cylinder in the frame of its first node."""
    last = edges[path[-1]].dst
    x0, x1 = BASE[last].x0, BASE[last].x1
    for k in reversed(path):
        lx, _ = lattice_point(*edges[k].shift)
        x0, x1 = (x0 + lx) * LAM_INV, (x1 + lx) * LAM_INV
    return x0, x1


def _interval_backward(path, edges):
    """s2-interval (scaled) of the backward cylinder in the frame of its last node."""
    first = edges[path[0]].src
    y0, y1 = BASE[first].y0, BASE[first].y1
    for k in path:
        _, ly = lattice_point(*edges[k].shift)
        y0, y1 = y0 * LAM_INV - ly, y1 * LAM_INV - ly
    return y0, y1


def _paths(edges, length, start=None):
    out_of = {}
    for k, e in enumerate(edges):
        out_of.setdefault(e.src, []).append(k)
    res = []

    def rec(p):
        if len(p) == length:
            res.append(tuple(p))
            return
        for k in out_of[edges[p[-1]].dst]:
            rec(p + [k])

    for k, e in enumerate(edges):
        if start is None or e.src == start:
            rec([k])
    return res


def refine_depths(level):
    """Alternate joins with A⁻¹𝒫 and A𝒫: level 0 is 𝒫 ∨ A⁻¹𝒫."""
    return level // 2, 1 + (level + 1) // 2


def partition_at(level, edges=None):
    edges = base_edges() if edges is None else edges
    b, f = refine_depths(level)
    words = _paths(edges, b + f)
    rects, nodes = [], []
    cacheF, cacheB = {}, {}
    for w in words:
        bw, fw = w[:b], w[b:]
        if fw not in cacheF:
            cacheF[fw] = _interval_forward(fw, edges)
        x0, x1 = cacheF[fw]
        node = edges[fw[0]].src
        if b:
            if bw not in cacheB:
                cacheB[bw] = _interval_backward(bw, edges)
            y0, y1 = cacheB[bw]
        else:
            y0, y1 = BASE[node].y0, BASE[node].y1
        rects.append(Rect(x0, x1, y0, y1))
        nodes.append(node)
    index = {w: k for k, w in enumerate(words)}
    rows, cols = [], []
    succ = {}
    for k, e in enumerate(edges):
        succ.setdefault(e.src, []).append(k)
    for k, w in enumerate(words):
        for e in succ[edges[w[-1]].dst]:
            rows.append(k)
            cols.append(index[w[1:] + (e,)])
    T = sparse.csr_matrix((np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(len(words), len(words)))
    return MarkovPartition(b, f, words, rects, np.array(nodes), T, edges)


def perron(T):
    """Perron root and left/right eigenvectors of a nonnegative irreducible matrix."""
    T = sparse.csr_matrix(T, dtype=float)
    if T.shape[0] <= 400:
        D = T.toarray()
        w, V = np.linalg.eig(D)
        k = np.argmax(w.real)
        wl, U = np.linalg.eig(D.T)
        kl = np.argmax(wl.real)
        r, l = np.abs(V[:, k].real), np.abs(U[:, kl].real)
        rho = float(w[k].real)
    else:
        vals, V = eigs(T, k=1, which="LR", tol=1e-14)
        _, U = eigs(T.T.tocsr(), k=1, which="LR", tol=1e-14)
        rho = float(vals[0].real)
        r, l = np.abs(V[:, 0].real), np.abs(U[:, 0].real)
    r /= l @ r
    return rho, l, r


def parry_areas(part: MarkovPartition):
    """Cylinder areas predicted by the Perron vectors of the edge matrix."""
    edges = part.edges
    E = np.zeros((len(edges), len(edges)))
    for i, e in enumerate(edges):
        for j, g in enumerate(edges):
            E[i, j] = e.dst == g.src
    rho, l, r = perron(E)
    L = part.back + part.fwd
    return np.array([l[w[0]] * r[w[-1]] / rho ** (L - 1) for w in part.words])


def check_markov(part: MarkovPartition, tol=1e-9):
    """Exact full-crossing and tiling checks."""
    base_edges()  # raises if the base crossings are not Markov
    tot = part.areas().sum()
    return {"area_sum": float(tot), "tiles": abs(tot - 1.0) < tol,
            "closure": all(r.x0 < r.x1 and r.y0 < r.y1 for r in part.rects)}


# ------------------------------------------------------------------ locating points

def _frames():
    return np.array([[float(b.x0), float(b.x1), float(b.y0), float(b.y1)] for b in BASE])


def locate(part: MarkovPartition, pts, inset=0.0):
    """Element index for torus points via their scaled eigen coordinates."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    z = (pts @ R.T) / SCALE
    rect = np.array([r.floats() for r in part.rects])
    out = np.full(len(z), -1, dtype=np.int64)
    # bucket by node at time 0
    by_node = {n: np.flatnonzero(part.nodes == n) for n in range(len(BASE))}
    fr = _frames()
    L = np.array([[PHI_F, 1.0], [1.0, -PHI_F]])  # rows: lattice generators
    Linv = np.linalg.inv(L.T)
    for i, q in enumerate(z):
        mn = Linv @ q
        found = False
        for dm, dn in product(range(-2, 3), repeat=2):
            m, n = math.floor(mn[0]) + dm, math.floor(mn[1]) + dn
            w = q - (m * L[0] + n * L[1])
            for node, f in enumerate(fr):
                if f[0] <= w[0] < f[1] and f[2] <= w[1] < f[3]:
                    ids = by_node[node]
                    rr = rect[ids]
                    hit = np.flatnonzero((rr[:, 0] + inset <= w[0]) & (w[0] < rr[:, 1] - inset)
                                         & (rr[:, 2] + inset <= w[1]) & (w[1] < rr[:, 3] - inset))
                    if hit.size:
                        out[i] = ids[hit[0]]
                    found = True
                    break
            if found:
                break
    return out


def sample_element(part: MarkovPartition, k, n, rng):
    """Uniform points of element k in torus coordinates."""
    x0, x1, y0, y1 = part.rects[k].floats() * SCALE
    s = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
    return np.mod(s @ R, 1.0)


# ------------------------------------------------------------------ condition (10)

def _min_dist_to_lattice(rect_f, radius):
    """Distance (scaled) from an axis rectangle to the nearest lattice point, capped."""
    x0, x1, y0, y1 = rect_f
    best = np.inf
    # lattice point (mφ + n, m - nφ): iterate m over the window's x-range
    Lx = max(abs(x0), abs(x1)) + radius
    mmax = int(Lx / (PHI_F + 1 / PHI_F)) + 3
    ms = np.arange(-mmax - 2, mmax + 3)
    # for each m the y-condition picks n near (m - y)/φ
    for yc in (y0, y1, 0.5 * (y0 + y1)):
        nc = np.round((ms - yc) / PHI_F)
        for dn in (-1, 0, 1):
            n = nc + dn
            px, py = ms * PHI_F + n, ms - n * PHI_F
            dx = np.maximum(np.maximum(x0 - px, px - x1), 0)
            dy = np.maximum(np.maximum(y0 - py, py - y1), 0)
            best = min(best, float(np.min(np.hypot(dx, dy))))
    return best


def verified_Q(rect: Rect, r0, q_max=60):
    """Largest Q with A^n(R) ∩ D_r0 = ∅ for 0 <= n <= Q (exact rectangles)."""
    rad = math.sqrt(r0) / SCALE
    x0, x1, y0, y1 = rect.floats()
    for n in range(q_max + 1):
        f = np.array([x0 * LAMBDA ** n, x1 * LAMBDA ** n, y0 / LAMBDA ** n, y1 / LAMBDA ** n])
        if _min_dist_to_lattice(f, rad) <= rad:
            return n - 1
    return q_max


def collar_Q(params: KatokParams, n_samples=10_000, q_max=40, rng=None):
    """Largest Q such that sampled points x ∉ D_r0 with G⁻¹x ∈ D_r0 stay out of
    D_r0 for Q further steps of G."""
    from .katok import apply_G
    from .params import to_eigen
    rng = params.rng(10) if rng is None else rng
    r = math.sqrt(params.r0)
    rad = r * np.sqrt(rng.random(4 * n_samples))
    ang = 2 * math.pi * rng.random(4 * n_samples)
    s = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    y = np.mod(s @ R, 1.0)
    x = apply_G(y, params, jacobian=False).image
    sx = to_eigen(x)
    keep = np.sum(sx * sx, axis=1) >= params.r0
    x = x[keep][:n_samples]
    alive = np.ones(len(x), dtype=bool)
    for n in range(1, q_max + 1):
        x = apply_G(x, params, jacobian=False).image
        sx = to_eigen(x)
        if np.any(np.sum(sx * sx, axis=1) < params.r0):
            return n - 1
    return q_max


def build_partition(delta=0.05, Q=None, params=KatokParams(), max_level=14):
    """Refine until every element has diameter < δ and pick P maximizing the
    verified Q of condition (10) for its forward A-orbit. Raises NoValidElement
    if Q is given and no element reaches it."""
    edges = base_edges()
    level = 0
    while True:
        part = partition_at(level, edges)
        if part.diameters().max() < delta or level >= max_level:
            break
        level += 1
    if part.diameters().max() >= delta:
        raise NoValidElement("could not reach the requested diameter")
    areas = part.areas()
    best, bestQ = -1, -2
    # prefer large elements among those with the best verified Q
    order = np.argsort(-areas, kind="stable")
    for k in order:
        r = part.rects[k]
        if r.x0 <= 0 <= r.x1 and r.y0 <= 0 <= r.y1:
            continue  # contains the origin
        q = verified_Q(r, params.r0)
        if q > bestQ:
            best, bestQ = int(k), q
    if Q is not None and bestQ < Q:
        raise NoValidElement(f"best element verifies Q={bestQ} < {Q}; shrink r0 or δ")
    part.P_index, part.verified_Q = best, bestQ
    return part


# ------------------------------------------------------------------ counting

def count_first_return_words(part: MarkovPartition, n_max, P=None):
    """S_n = number of length-n transition paths P -> ... -> P with no interior P."""
    P = part.P_index if P is None else P
    T = part.transition.tocoo()
    rows, cols = T.row, T.col
    mask_r = rows != P
    v = np.zeros(part.size, dtype=object)
    v[:] = 0
    v[P] = 1
    out = []
    first = True
    for n in range(1, n_max + 1):
        w = np.zeros(part.size, dtype=object)
        w[:] = 0
        src = rows if first else rows[mask_r]
        dst = cols if first else cols[mask_r]
        np.add.at(w, dst, v[src])
        first = False
        out.append(int(w[P]))
        w[P] = 0
        v = w
    return out


def count_brute_force(part: MarkovPartition, n_max, P=None):
    """Depth-first enumeration of first-return words (oracle, small n only)."""
    P = part.P_index if P is None else P
    T = part.transition.tocsr()
    succ = [T.indices[T.indptr[i]:T.indptr[i + 1]] for i in range(part.size)]
    counts = [0] * n_max
    stack = [(P, 0)]
    while stack:
        node, d = stack.pop()
        for j in succ[node]:
            if j == P:
                counts[d] += 1
            elif d + 1 < n_max:
                stack.append((j, d + 1))
    return counts


def loop_counts(part: MarkovPartition, n_max, P=None):
    """Number of length-n closed paths at P (any interior visits)."""
    P = part.P_index if P is None else P
    T = part.transition.tocoo()
    v = np.zeros(part.size, dtype=object)
    v[:] = 0
    v[P] = 1
    out = []
    for _ in range(n_max):
        w = np.zeros(part.size, dtype=object)
        w[:] = 0
        np.add.at(w, T.col, v[T.row])
        out.append(int(w[P]))
        v = w
    return out


def renewal_residual(S, loops):
    """max |L_n - Σ_k S_k L_{n-k}| with L_0 = 1."""
    L = [1] + list(loops)
    worst = 0
    for n in range(1, len(L)):
        conv = sum(S[k - 1] * L[n - k] for k in range(1, n + 1))
        worst = max(worst, abs(L[n] - conv))
    return worst


def exact_h(part: MarkovPartition, P=None):
    """log of the Perron root of the transition matrix with P removed."""
    P = part.P_index if P is None else P
    keep = np.ones(part.size, dtype=bool)
    keep[P] = False
    T = part.transition.tocsr()[keep][:, keep]
    vals = eigs(T.astype(float), k=1, which="LM", tol=1e-13, return_eigenvectors=False) \
        if T.shape[0] > 400 else np.linalg.eigvals(T.toarray().astype(float))
    return float(math.log(np.max(np.abs(vals))))


def estimate_h(counts, window=None):
    """Tail slope of log S_n. Returns (h, margin below log λ, R² of the fit)."""
    S = np.asarray([float(c) for c in counts])
    n = np.arange(1, len(S) + 1)
    nz = S > 0
    if nz.sum() < 10:
        raise InsufficientData("need at least 10 nonzero counts")
    n, y = n[nz], np.log(S[nz])
    window = max(10, len(n) // 2) if window is None else window

    def fit(xs, ys):
        slope, icpt = np.polyfit(xs, ys, 1)
        res = ys - (slope * xs + icpt)
        return slope, 1 - res @ res / max(((ys - ys.mean()) ** 2).sum(), 1e-300)

    slopes = [fit(n[i:i + window], y[i:i + window])[0]
              for i in range(0, len(n) - window + 1, max(1, window // 4))]
    tail_h, r2 = fit(n[-window:], y[-window:])
    h = float(max(max(slopes), tail_h))
    return {"h": h, "margin": LOG_LAMBDA - h, "tail_h": float(tail_h), "r2": float(r2)}


# ------------------------------------------------------------------ periodic points of A

def fixed_point_count(n):
    """|det(Aⁿ - I)| = λⁿ + λ⁻ⁿ - 2, computed in integers."""
    B = np.linalg.matrix_power(np.array(A, dtype=object), n) - np.eye(2, dtype=object)
    return abs(int(B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]))


def _hnf2(B):
    """Column-style Hermite form of an integer 2×2 matrix: B U = [[a, b], [0, d]]."""
    (p, q), (r, s) = [[int(v) for v in row] for row in B]
    # zero out the (1,0) entry by column operations on (r, s)
    g, x, y = _egcd(r, s)
    # columns c0 = (p, r), c1 = (q, s); new c1' = x c0 + y c1 has bottom g
    c1 = (x * p + y * q, g)
    c0 = ((s // g) * p - (r // g) * q, 0)
    a, b, d = c0[0], c1[0], c1[1]
    if a < 0:
        a = -a
    if d < 0:
        d, b = -d, -b
    return a, b % a if a else b, d


def _egcd(a, b):
    if b == 0:
        return (abs(a), 1 if a >= 0 else -1, 0)
    g, x, y = _egcd(b, a % b)
    return g, y, x - (a // b) * y


def periodic_points(n):
    """All p ∈ [0,1)² with Aⁿ p = p mod 1, as (numerators, denominator) and floats."""
    An = np.linalg.matrix_power(np.array(A, dtype=object), n)
    B = An - np.eye(2, dtype=object)
    det = int(B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0])
    N = abs(det)
    a, b, d = _hnf2(B)
    assert a * d == N
    adj = np.array([[B[1, 1], -B[0, 1]], [-B[1, 0], B[0, 0]]], dtype=object)
    # coset representatives of Z² / B Z²: (i, j), 0 <= i < a, 0 <= j < d
    i = np.repeat(np.arange(a, dtype=np.int64), d)
    j = np.tile(np.arange(d, dtype=np.int64), a)
    num1 = (int(adj[0, 0]) * i + int(adj[0, 1]) * j) * (1 if det > 0 else -1)
    num2 = (int(adj[1, 0]) * i + int(adj[1, 1]) * j) * (1 if det > 0 else -1)
    num = np.column_stack([np.mod(num1, N), np.mod(num2, N)])
    return num, N


def periodic_points_float(n):
    num, N = periodic_points(n)
    return num / N


def minimal_period(num, N, n_max):
    """Minimal period of exact rational points num/N under A (mod 1)."""
    p = np.array(num, dtype=np.int64)
    q = p.copy()
    A_int = np.array(A, dtype=np.int64)
    for k in range(1, n_max + 1):
        q = np.mod(q @ A_int.T, N)
        if np.array_equal(q, p):
            return k
    return -1
