"""Closing-lemma primitives: equivalence, Veech groups, integral subspaces,
discriminants of planes, the spherical function and lattice-point counts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import NamedTuple, Sequence

import numpy as np
import sympy
from scipy import integrate, special
from scipy.spatial import cKDTree

from .errors import (
    BudgetExceeded,
    IrrationalPlane,
    NotSaturated,
    ResolutionTooCoarse,
    ValidationError,
    WordBudgetExceeded,
)
from .norms import agy_norms, dist_e, gnorm, right_dist, splitting
from .surface import (
    TranslationSurface,
    _cells,
    _rooted_encoding,
    a_t,
    apply_gl2,
    area,
    cup_form,
    delaunay,
    encodings_match,
    rooted_encodings,
    saddle_connections,
    u_r,
    ubar_s,
)
from .tori import Prototype, prototype_surface

CELL_TOL = 1e-7


# ---------------------------------------------------------------------------
# one-chart comparison

class ChartDifference(NamedTuple):
    """``x2 = k.x1 + w`` with w in H-perp(x1), all in the marking of the first surface."""
    x1: np.ndarray
    x2: np.ndarray
    k: np.ndarray
    w: np.ndarray
    residual: float


def _matched_slots(s1, s2, tol, cell_tol):
    p1, o1 = _cells(s1, cell_tol)
    p2, o2 = _cells(s2, cell_tol)
    if sorted(map(len, p1)) != sorted(map(len, p2)):
        return None
    slots1 = []
    enc1 = _rooted_encoding(s1, p1, o1, 0, 0, slots1)
    best = None
    for p in range(len(p2)):
        if len(p2[p]) != len(p1[0]):
            continue
        for k in range(len(p2[p])):
            slots2 = []
            enc2 = _rooted_encoding(s2, p2, o2, p, k, slots2)
            if not encodings_match(enc1, enc2, tol):
                continue
            dev = max(abs(a[0] - b[0]) for r1, r2 in zip(enc1, enc2) for a, b in zip(r1, r2))
            if best is None or dev < best[0]:
                best = (dev, slots2)
    if best is None:
        return None
    return slots1, best[1]


def chart_difference(y1: TranslationSurface, y2: TranslationSurface,
                     match_tol: float = 0.05, cell_tol: float = CELL_TOL) -> ChartDifference | None:
    """Write y2 in the period chart of y1, or None when no chart contains both.

    The Delaunay cells are matched combinatorially with side vectors within
    ``match_tol`` (relative to the shortest side); the sides then determine
    the periods of y2 in the marking of y1.
    """
    s1, s2 = delaunay(y1), delaunay(y2)
    tol = match_tol * float(np.abs(s1.tri).min())
    m = _matched_slots(s1, s2, tol, cell_tol)
    if m is None:
        return None
    sl1, sl2 = m
    C = np.array([s1.cls[t, i] for t, i in sl1], dtype=float)
    rhs = np.array([s2.tri[t, i] for t, i in sl2])
    x2, *_ = np.linalg.lstsq(C, rhs, rcond=None)
    res = float(np.abs(C @ x2 - rhs).max())
    x1 = s1.periods
    sp = splitting(s1)
    Q, A = sp.pairing_matrix, sp.area
    v = x2 - x1
    beta = (sp.re_class @ Q @ v) / A
    alpha = -(sp.im_class @ Q @ v) / A
    w = v - alpha * sp.re_class - beta * sp.im_class
    k = np.array([[1 + alpha.real, beta.real], [alpha.imag, 1 + beta.imag]])
    return ChartDifference(x1, x2, k, w, res)


def chart_distance(y1: TranslationSurface, y2: TranslationSurface, **kw) -> float | None:
    """max(|k - e|, AGY norm of w) from :func:`chart_difference`; None is UNKNOWN."""
    d = chart_difference(y1, y2, **kw)
    if d is None:
        return None
    return max(dist_e(d.k), float(agy_norms(delaunay(y1), d.w)))


# ---------------------------------------------------------------------------
# translation equivalence and Veech groups

def relabeled(s: TranslationSurface, perm: Sequence[int], rot: Sequence[int]) -> TranslationSurface:
    """Same surface with triangle t moved to perm[t] and its slots rotated by rot[t]."""
    F = s.n_triangles
    tri = np.zeros((F, 3), dtype=complex)
    glue = np.zeros((F, 3, 2), dtype=np.int64)
    for t in range(F):
        for i in range(3):
            ni = (i - rot[t]) % 3
            tri[perm[t], ni] = s.tri[t, i]
            u, j = s.glue[t, i]
            glue[perm[t], ni] = (perm[u], (j - rot[u]) % 3)
    return TranslationSurface(tri, glue, s.zero_orders)


def is_translation_equivalent(x: TranslationSurface, y: TranslationSurface,
                              tol: float = 1e-6) -> bool:
    """Equal up to cut-and-paste by translations (canonical Delaunay comparison)."""
    ax, ay = area(x), area(y)
    if abs(ax - ay) > tol * max(1.0, ax):
        return False
    if sorted(x.zero_orders) != sorted(y.zero_orders):
        return False
    ex = rooted_encodings(x)
    ey = rooted_encodings(y)
    if len(ex) != len(ey):
        return False
    scale = tol * max(1.0, float(np.abs(x.tri).max()))
    return any(encodings_match(ex[0], e, scale) for e in ey)


class VeechResult(NamedTuple):
    elements: list          # 2x2 arrays, identity first, -I excluded
    minus_identity: bool    # whether -I maps x to itself
    candidates: int         # determinant-filtered pairs tested


def _mat_key(g, digits=6):
    return tuple(round(float(v), digits) + 0.0 for v in np.ravel(g))


def veech_search(x: TranslationSurface, Tmax: float = 5.0, tol: float = 1e-6,
                 budget: int = 200_000) -> VeechResult:
    """Elements g of the Veech group with |g| <= Tmax (max-entry norm of g, g^-1).

    The two shortest non-parallel saddle connections s1, s2 are sent to every
    pair of saddle connections with the same cross product; each resulting
    matrix is screened on the short holonomy set and then confirmed by
    canonical comparison of g.x with x.
    """
    x = delaunay(x)
    first = saddle_connections(x, 4 * float(np.abs(x.tri).max()))
    hol0 = np.array([c.hol for c in first])
    h1 = hol0[0]
    cr = hol0.real * h1.imag - hol0.imag * h1.real
    h2 = hol0[np.flatnonzero(np.abs(cr) > 1e-9 * abs(h1) * np.abs(hol0))[0]]
    X = h1.real * h2.imag - h1.imag * h2.real
    if X < 0:
        h1, h2 = h2, h1
        X = -X
    # images of s1, s2 under |g| <= Tmax are at most this long
    lim = 2 * Tmax * max(abs(h1), abs(h2))
    L = lim
    conns = saddle_connections(x, L)
    hol = np.array([c.hol for c in conns])
    cand = hol[np.abs(hol) <= lim]
    cross = cand.real[:, None] * cand.imag[None, :] - cand.imag[:, None] * cand.real[None, :]
    I, J = np.nonzero(np.abs(cross - X) <= 1e-7 * X)
    if len(I) > budget:
        raise BudgetExceeded(f"{len(I)} candidate pairs exceed budget {budget}")
    S = np.array([[h1.real, h2.real], [h1.imag, h2.imag]])
    Sinv = np.linalg.inv(S)
    short = hol[np.abs(hol) <= 2 * abs(h2) + 1e-12]
    tree = cKDTree(np.c_[hol.real, hol.imag])
    found = {}
    minus = False
    for a, b in zip(I, J):
        T = np.array([[cand[a].real, cand[b].real], [cand[a].imag, cand[b].imag]])
        g = T @ Sinv
        if gnorm(g) > Tmax * (1 + 1e-9):
            continue
        key = _mat_key(g)
        if key in found:
            continue
        img = (g[0, 0] * short.real + g[0, 1] * short.imag) + 1j * (g[1, 0] * short.real + g[1, 1] * short.imag)
        keep = np.abs(img) <= L
        if keep.any():
            d, _ = tree.query(np.c_[img[keep].real, img[keep].imag])
            if d.max() > 1e-6 * max(1.0, L):
                continue
        if not is_translation_equivalent(apply_gl2(g, x), x, tol):
            continue
        if np.allclose(g, -np.eye(2), atol=1e-9):
            minus = True
            continue
        found[key] = np.where(np.abs(g - np.rint(g)) < 1e-9, np.rint(g), g) + 0.0
    els = sorted(found.values(), key=lambda g: (not np.allclose(g, np.eye(2)), gnorm(g), _mat_key(g)))
    return VeechResult(els, minus, int(len(I)))


def contains_hyperbolic(gs, tol: float = 1e-9) -> bool:
    return any(abs(float(np.trace(np.asarray(g, float)))) > 2 + tol for g in gs)


def is_parabolic(g, tol: float = 1e-9) -> bool:
    g = np.asarray(g, float)
    return abs(abs(np.trace(g)) - 2) <= tol and not np.allclose(np.abs(g), np.eye(2), atol=tol)


# ---------------------------------------------------------------------------
# integer linear algebra

def _as_int_rows(M) -> list[list[int]]:
    return [[int(v) for v in row] for row in M]


def integer_kernel(A) -> list[list[int]]:
    """Basis of {v in Z^n : A v = 0}; saturated by construction (column reduction)."""
    A = _as_int_rows(A)
    if not A:
        raise ValidationError("empty matrix")
    m, n = len(A), len(A[0])
    cols = [([A[r][c] for r in range(m)], [int(c == k) for k in range(n)]) for c in range(n)]
    piv = 0
    for r in range(m):
        while True:
            nz = [c for c in range(piv, n) if cols[c][0][r] != 0]
            if len(nz) <= 1:
                break
            c0 = min(nz, key=lambda c: abs(cols[c][0][r]))
            a0 = cols[c0][0][r]
            for c in nz:
                if c == c0:
                    continue
                q = cols[c][0][r] // a0
                cols[c] = ([x - q * y for x, y in zip(cols[c][0], cols[c0][0])],
                           [x - q * y for x, y in zip(cols[c][1], cols[c0][1])])
        nz = [c for c in range(piv, n) if cols[c][0][r] != 0]
        if nz:
            c = nz[0]
            cols[piv], cols[c] = cols[c], cols[piv]
            piv += 1
    return hnf_rows([cols[c][1] for c in range(piv, n)])


def hnf_rows(B) -> list[list[int]]:
    """Row Hermite normal form (positive pivots, reduced above); zero rows dropped."""
    B = [list(r) for r in _as_int_rows(B) if any(r)]
    if not B:
        return []
    n = len(B[0])
    r = 0
    for c in range(n):
        while True:
            nz = [i for i in range(r, len(B)) if B[i][c] != 0]
            if len(nz) <= 1:
                break
            i0 = min(nz, key=lambda i: abs(B[i][c]))
            for i in nz:
                if i != i0:
                    q = B[i][c] // B[i0][c]
                    B[i] = [x - q * y for x, y in zip(B[i], B[i0])]
        nz = [i for i in range(r, len(B)) if B[i][c] != 0]
        if not nz:
            continue
        i = nz[0]
        B[r], B[i] = B[i], B[r]
        if B[r][c] < 0:
            B[r] = [-x for x in B[r]]
        for k in range(r):
            q = B[k][c] // B[r][c]
            if q:
                B[k] = [x - q * y for x, y in zip(B[k], B[r])]
        r += 1
        if r == len(B):
            break
    return [row for row in B[:r]]


def _gram_det(B) -> int:
    if not B:
        return 1
    G = sympy.Matrix(B) * sympy.Matrix(B).T
    return int(G.det())


@dataclass(frozen=True)
class IntegralSubspace:
    """V cap Z^n stored by an HNF basis (rows)."""
    basis: tuple
    n: int

    @property
    def dim(self) -> int:
        return len(self.basis)

    def rows(self) -> list[list[int]]:
        return [list(r) for r in self.basis]

    @classmethod
    def from_basis(cls, B, n: int | None = None, check: bool = True) -> "IntegralSubspace":
        B = _as_int_rows(B)
        if n is None:
            if not B:
                raise ValidationError("ambient dimension needed for the zero space")
            n = len(B[0])
        H = hnf_rows(B)
        if check and len(H) != len(B):
            raise ValidationError("basis rows are linearly dependent")
        sub = cls(tuple(tuple(r) for r in H), n)
        if check and not sub.is_saturated():
            raise NotSaturated("basis spans a sublattice of finite index > 1 in V cap Z^n")
        return sub

    @classmethod
    def span(cls, vectors, n: int | None = None) -> "IntegralSubspace":
        """Saturation of the rational span: V cap Z^n."""
        B = [r for r in _as_int_rows(vectors) if any(r)]
        if n is None:
            n = len(B[0])
        if not B:
            return cls((), n)
        perp = integer_kernel(B)
        if not perp:
            return cls(tuple(tuple(int(i == j) for j in range(n)) for i in range(n)), n)
        return cls(tuple(tuple(r) for r in integer_kernel(perp)), n)

    def is_saturated(self) -> bool:
        if not self.basis:
            return True
        full = IntegralSubspace.span(self.rows(), self.n)
        return _gram_det(self.rows()) == _gram_det(full.rows())

    def contains(self, v) -> bool:
        B = self.rows() + [[int(a) for a in v]]
        return sympy.Matrix(B).rank() == self.dim


def height(V: IntegralSubspace) -> float:
    """Covolume of V cap Z^n: sqrt det(B B^T) for a lattice basis B."""
    if not isinstance(V, IntegralSubspace):
        V = IntegralSubspace.from_basis(V, check=False)
    if not V.is_saturated():
        raise NotSaturated("height needs a basis of V cap Z^n")
    return math.sqrt(_gram_det(V.rows()))


def _fixed_space(ms, n) -> IntegralSubspace:
    if not ms:
        return IntegralSubspace(tuple(tuple(int(i == j) for j in range(n)) for i in range(n)), n)
    A = []
    for M in ms:
        M = _as_int_rows(M)
        for c in range(n):          # row convention: v M = v  <=>  (M^T - I) v^T = 0
            A.append([M[r][c] - (r == c) for r in range(n)])
    K = integer_kernel(A)
    return IntegralSubspace(tuple(tuple(r) for r in K), n)


def common_fixed_subspace(ms) -> tuple[IntegralSubspace, list]:
    """{v : v M = v for all M} and a witness subset of at most n matrices."""
    ms = [_as_int_rows(M) for M in ms]
    if not ms:
        raise ValidationError("need at least one matrix")
    n = len(ms[0])
    if any(len(M) != n or any(len(r) != n for r in M) for M in ms):
        raise ValidationError("matrices must be square of one size")
    witness: list = []
    cur = _fixed_space([], n)
    for M in ms:
        nxt = _fixed_space(witness + [M], n)
        if nxt.dim < cur.dim:
            witness.append(M)
            cur = nxt
    return _fixed_space(ms, n), witness


# ---------------------------------------------------------------------------
# wedge separation of 2-planes in Z^4

def _ball_vectors(dim: int, r2: int) -> np.ndarray:
    R = math.isqrt(r2)
    ax = np.arange(-R, R + 1)
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    P = np.stack([g.ravel() for g in grids], axis=1)
    return P[(P * P).sum(1) <= r2]


def plucker_planes(hmax: int) -> np.ndarray:
    """Primitive decomposable wedge vectors (p12,p13,p14,p23,p24,p34), |p| <= hmax, up to sign.

    These are exactly the saturated 2-planes of Z^4 with height <= hmax.
    """
    r2 = hmax * hmax
    H = _ball_vectors(3, r2)
    n2 = (H * H).sum(1)
    out = []
    for a, na in zip(H, n2):
        # Pluecker relation: p12 p34 - p13 p24 + p14 p23 = 0
        rel = a[0] * H[:, 2] - a[1] * H[:, 1] + a[2] * H[:, 0]
        ok = (rel == 0) & (n2 + na <= r2) & ((na + n2) > 0)
        if ok.any():
            B = H[ok]
            out.append(np.c_[np.repeat(a[None, :], len(B), 0), B])
    P = np.concatenate(out)
    g = np.gcd.reduce(np.abs(P), axis=1)
    P = P[g == 1]
    first = P[np.arange(len(P)), (P != 0).argmax(1)]
    P = P[first > 0]
    return np.unique(P, axis=0)


class WedgeSeparation(NamedTuple):
    min_distance: float
    n_planes: int
    pair: tuple
    c_measured: float      # min_distance * hmax^2


def wedge_separation(hmax: int = 10) -> WedgeSeparation:
    """Minimum distance between unit wedge vectors of distinct planes (sign ignored)."""
    P = plucker_planes(hmax).astype(float)
    U = P / np.linalg.norm(P, axis=1, keepdims=True)
    tree = cKDTree(np.vstack([U, -U]))
    d, idx = tree.query(U, k=3)
    n = len(U)
    best = (math.inf, (0, 0))
    for i in range(n):
        for dist, j in zip(d[i], idx[i]):
            if j % n == i:
                continue
            if dist < best[0]:
                best = (float(dist), (i, int(j % n)))
            break
    i, j = best[1]
    pair = (tuple(int(v) for v in P[i]), tuple(int(v) for v in P[j]))
    return WedgeSeparation(best[0], n, pair, best[0] * hmax * hmax)


# ---------------------------------------------------------------------------
# discriminants of tautological planes

@dataclass(frozen=True)
class QuadraticPlane:
    """A plane span(R, I) with coordinates u + v sqrt(D) (Fractions).

    ``partner`` optionally holds the Galois-conjugate plane; when present the
    rational Lie algebra is sp(T) + sp(T'), otherwise sp(T) acting by zero
    on the symplectic complement.
    """
    D: int
    re: tuple        # ((u_1, v_1), ...)
    im: tuple
    form: tuple      # integral cup form, rows
    partner: "QuadraticPlane | None" = None


def _qf(z, D):
    """Entry (u, v) -> Fractions; square D folds sqrt(D) into u."""
    u, v = Fraction(z[0]), Fraction(z[1])
    r = math.isqrt(D)
    if r * r == D:
        return (u + v * r, Fraction(0))
    return (u, v)


def _qmul(a, b, D):
    return (a[0] * b[0] + a[1] * b[1] * D, a[0] * b[1] + a[1] * b[0])


def _qadd(a, b):
    return (a[0] + b[0], a[1] + b[1])


def _qinv(a, D):
    nrm = a[0] * a[0] - a[1] * a[1] * D
    if nrm == 0:
        raise IrrationalPlane("plane is isotropic")
    return (a[0] / nrm, -a[1] / nrm)


def _projection(plane: QuadraticPlane):
    """P_T = P0 + P1 sqrt(D) (Fraction matrices), projection along the complement."""
    D = plane.D
    Q = [[Fraction(v) for v in row] for row in plane.form]
    n = len(Q)
    R = [_qf(z, D) for z in plane.re]
    I = [_qf(z, D) for z in plane.im]
    zero = (Fraction(0), Fraction(0))

    def qform(a, b):  # a^T Q b
        tot = zero
        for i in range(n):
            for j in range(n):
                if Q[i][j]:
                    tot = _qadd(tot, _qmul(_qmul(a[i], (Q[i][j], Fraction(0)), D), b[j], D))
        return tot

    A = qform(R, I)
    Ai = _qinv(A, D)
    # row vectors R^T Q and I^T Q
    RQ = [reduce(_qadd, [_qmul(R[i], (Q[i][j], Fraction(0)), D) for i in range(n)], zero) for j in range(n)]
    IQ = [reduce(_qadd, [_qmul(I[i], (Q[i][j], Fraction(0)), D) for i in range(n)], zero) for j in range(n)]
    P0 = [[Fraction(0)] * n for _ in range(n)]
    P1 = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            v = _qadd(_qmul((-R[i][0], -R[i][1]), IQ[j], D), _qmul(I[i], RQ[j], D))
            v = _qmul(v, Ai, D)
            P0[i][j], P1[i][j] = v
    return P0, P1


def _commutator_rows(P, n):
    """Coefficient rows of X P - P X = 0 in the row-major entries of X."""
    rows = []
    for i in range(n):
        for k in range(n):
            r = [Fraction(0)] * (n * n)
            for j in range(n):
                r[i * n + j] += P[j][k]
                r[j * n + k] -= P[i][j]
            rows.append(r)
    return rows


def lie_algebra_basis(plane: QuadraticPlane) -> list[list[int]]:
    """Integer basis (flattened n x n, row major) of the rational Lie algebra of the plane."""
    Q = [[Fraction(v) for v in row] for row in plane.form]
    n = len(Q)
    rows = []
    # X^T Q + Q X = 0
    for i in range(n):
        for k in range(n):
            r = [Fraction(0)] * (n * n)
            for j in range(n):
                r[j * n + i] += Q[j][k]
                r[j * n + k] += Q[i][j]
            rows.append(r)
    P0, P1 = _projection(plane)
    rows += _commutator_rows(P0, n) + _commutator_rows(P1, n)
    if plane.partner is None:
        # kill the complement: X (I - P_T) = 0
        for i in range(n):
            for k in range(n):
                r0 = [Fraction(0)] * (n * n)
                r1 = [Fraction(0)] * (n * n)
                for j in range(n):
                    r0[i * n + j] += (1 if j == k else 0) - P0[j][k]
                    r1[i * n + j] -= P1[j][k]
                rows += [r0, r1]
    else:
        Q0, Q1 = _projection(plane.partner)
        rows += _commutator_rows(Q0, n) + _commutator_rows(Q1, n)
    M = sympy.Matrix([[sympy.Rational(v.numerator, v.denominator) for v in r] for r in rows])
    out = []
    for v in M.nullspace():
        den = reduce(sympy.ilcm, [sympy.fraction(c)[1] for c in v], 1)
        out.append([int(c * den) for c in v])
    return out


def plane_discriminant(s: TranslationSurface | None, structure: QuadraticPlane | None) -> float:
    """Height (Frobenius norm on n x n matrices) of the integral Lie algebra of the plane."""
    if structure is None:
        raise IrrationalPlane("no rational structure supplied for the tautological plane")
    rows = lie_algebra_basis(structure)
    if not rows:
        raise ValidationError("empty Lie algebra")
    return height(IntegralSubspace.span(rows, len(rows[0])))


def _exact_periods(p: Prototype):
    ps = prototype_surface(p)
    s = ps.surface
    n = s.dim
    x = [None] * n
    for t in range(s.n_triangles):
        for i in range(3):
            c = s.cls[t, i]
            nz = np.flatnonzero(c)
            if len(nz) == 1 and abs(c[nz[0]]) == 1 and x[nz[0]] is None:
                X, Y = ps.triangles[t][i]
                sg = int(c[nz[0]])
                x[nz[0]] = (X * sg, Y * sg)
    return s, x


def _sqrt_coords(q) -> tuple:
    """QuadElem p + q lam -> (u, v) with value u + v sqrt(D)."""
    return (q.p + q.q * Fraction(q.e, 2), q.q / 2)


def _conj_coords(q) -> tuple:
    u, v = _sqrt_coords(q)
    return (u, -v)


def prototype_plane(p: Prototype) -> tuple[TranslationSurface, QuadraticPlane]:
    """Prototype surface with the exact rational structure of its tautological plane."""
    s, x = _exact_periods(p)
    form = tuple(tuple(int(round(v)) for v in row) for row in cup_form(s))
    re = tuple(_sqrt_coords(X) for X, _ in x)
    im = tuple(_sqrt_coords(Y) for _, Y in x)
    cre = tuple(_conj_coords(X) for X, _ in x)
    cim = tuple(_conj_coords(Y) for _, Y in x)
    partner = QuadraticPlane(p.D, cre, cim, form)
    return s, QuadraticPlane(p.D, re, im, form, partner)


def standard_split_plane() -> QuadraticPlane:
    """span(e1*, e2*) in Q^4 with the standard symplectic form pairing (1,2), (3,4)."""
    form = ((0, 1, 0, 0), (-1, 0, 0, 0), (0, 0, 0, 1), (0, 0, -1, 0))
    re = ((1, 0), (0, 0), (0, 0), (0, 0))
    im = ((0, 0), (1, 0), (0, 0), (0, 0))
    return QuadraticPlane(1, re, im, form)


# ---------------------------------------------------------------------------
# spherical function

def spherical_closed_form(t: float) -> float:
    """phi(a_t) = (2/pi) e^{-t/2} K(1 - e^{-2t})."""
    t = abs(float(t))
    return float(2 / math.pi * math.exp(-t / 2) * special.ellipkm1(math.exp(-2 * t)))


def spherical_function(t: float, rtol: float = 1e-10) -> float:
    """Harish-Chandra phi(a_t) = (1/2pi) int_0^{2pi} |a_t k_theta e1|^{-1} d theta.

    The integrand is the inverse of the A-component of the Iwasawa
    decomposition, which makes phi decay; quadrature over a quarter period.
    """
    if t < 0:
        raise ValidationError("t must be >= 0")
    et, emt = math.exp(t), math.exp(-t)

    def f(th):
        c, s = math.cos(th), math.sin(th)
        return 1.0 / math.sqrt(et * c * c + emt * s * s)

    val, err = integrate.quad(f, 0, math.pi / 2, epsabs=0, epsrel=rtol, limit=500)
    return 2 / math.pi * val


def spherical_trapezoid(t: float, n: int = 1_000_000) -> float:
    """Reference value by the periodic trapezoid rule on n nodes."""
    th = np.arange(n) * (2 * np.pi / n)
    return float(np.mean(1 / np.sqrt(math.exp(t) * np.cos(th) ** 2 + math.exp(-t) * np.sin(th) ** 2)))


def phi_of(g) -> float:
    """phi on an arbitrary element via its Cartan parameter (bi-K-invariance)."""
    g = np.asarray(g, float)
    g = g / math.sqrt(abs(np.linalg.det(g)))
    s1 = np.linalg.svd(g, compute_uv=False)[0]
    return spherical_closed_form(2 * math.log(max(s1, 1.0)))


def _rot(th):
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, -s], [s, c]])


def sample_cartan_ball(T: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar samples of {g : |g|_op <= T} as (n, 2, 2): density sinh(t) in KAK coordinates."""
    tmax = 2 * math.log(T)
    u = rng.uniform(0, 1, n)
    t = np.arccosh(1 + u * (math.cosh(tmax) - 1))
    th1, th2 = rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 2 * np.pi, n)
    out = np.empty((n, 2, 2))
    for k in range(n):
        out[k] = _rot(th1[k]) @ a_t(t[k]) @ _rot(th2[k])
    return out


def spherical_volume_ratio(T: float, p: float, n_mc: int = 4000, seed: int = 0) -> float:
    """(1/Vol^2) int int phi(g1 g2^-1)^{1/p} over the operator-norm ball of radius T."""
    if T < 2 or p < 1:
        raise ValidationError("need T >= 2 and p >= 1")
    rng = np.random.default_rng(seed)
    g1 = sample_cartan_ball(T, n_mc, rng)
    g2 = sample_cartan_ball(T, n_mc, rng)
    h = g1 @ np.linalg.inv(g2)
    s1 = np.linalg.svd(h, compute_uv=False)[:, 0]
    t = 2 * np.log(np.maximum(s1, 1.0))
    phi = 2 / np.pi * np.exp(-t / 2) * special.ellipkm1(np.exp(-2 * t))
    return float(np.mean(phi ** (1.0 / p)))


def spherical_mean(T: float) -> float:
    """(1/Vol) int phi over the ball, for the p = 1 reduction (mean squared)."""
    tmax = 2 * math.log(T)
    num, _ = integrate.quad(lambda t: spherical_closed_form(t) * math.sinh(t), 0, tmax, limit=200)
    return num / (math.cosh(tmax) - 1)


# ---------------------------------------------------------------------------
# counting in group balls

@dataclass(frozen=True)
class GroupBallSpec:
    generators: tuple
    T: float
    separation: float = 1.0


def group_ball_elements(gens, T: float, max_length: int = 64, budget: int = 200_000) -> list:
    """Words in gens^{+-1} staying inside {|g| <= T}, found breadth first.

    Words leaving the ball are not extended (norm pruning).
    """
    G = []
    for g in gens:
        g = np.asarray(g, float)
        G += [g, np.linalg.inv(g)]
    e = np.eye(2)
    seen = {_mat_key(e, 9): e}
    frontier = [e]
    for _ in range(max_length):
        nxt = []
        for h in frontier:
            for g in G:
                m = h @ g
                if gnorm(m) > T * (1 + 1e-12):
                    continue
                k = _mat_key(m, 9)
                if k in seen:
                    continue
                seen[k] = m
                nxt.append(m)
                if len(seen) > budget:
                    raise WordBudgetExceeded(f"more than {budget} group elements")
        if not nxt:
            break
        frontier = nxt
    return sorted(seen.values(), key=lambda m: (gnorm(m), _mat_key(m, 9)))


def separated_subset(els, sep: float) -> list:
    """Greedy maximal subset with |g1 g2^-1 - e| >= sep pairwise (in the given order)."""
    chosen = []
    for g in els:
        if all(right_dist(g, h) >= sep * (1 - 1e-12) for h in chosen):
            chosen.append(g)
    return chosen


def count_group_ball(spec: GroupBallSpec, max_length: int = 64, budget: int = 200_000) -> int:
    els = group_ball_elements(spec.generators, spec.T, max_length, budget)
    return len(separated_subset(els, spec.separation))


def ball_volume(T: float) -> float:
    """Haar volume (up to a constant) of {|g|_op <= T}."""
    return math.cosh(2 * math.log(T)) - 1


def growth_exponent(gens, Ts, separation: float = 1.0) -> float:
    """Slope of log count against log ball volume."""
    c = [count_group_ball(GroupBallSpec(tuple(gens), T, separation)) for T in Ts]
    v = [ball_volume(T) for T in Ts]
    slope, _ = np.polyfit(np.log(v), np.log(c), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# near returns

class NearReturn(NamedTuple):
    i: int
    j: int
    g_i: np.ndarray
    g_j: np.ndarray
    distance: float
    separation: float


def _signature(s: TranslationSurface, cell_tol: float = CELL_TOL) -> np.ndarray:
    polys, _ = _cells(s, cell_tol)
    lens = sorted(abs(s.tri[t, i]) for P in polys for t, i in P)
    return np.array([len(polys)] + lens)


def ball_grid(T: float, n: int) -> list:
    """Elements u_r a_tau ubar_s on a product grid, kept when |g - e| <= T."""
    if n < 2:
        raise ResolutionTooCoarse("grid needs at least two points per axis")
    rs = np.linspace(-T, T, n)
    if rs[1] - rs[0] > 1 + 1e-12:
        raise ResolutionTooCoarse(f"grid step {rs[1] - rs[0]:.3g} exceeds the separation scale 1")
    taus = np.linspace(-2 * math.log(T), 2 * math.log(T), n)
    out = []
    for r in rs:
        for tau in taus:
            for s in rs:
                g = u_r(r) @ a_t(tau) @ ubar_s(s)
                if dist_e(g) <= T * (1 + 1e-12):
                    out.append(g)
    return out


def near_return_scan(x: TranslationSurface, T: float, N: float, grid: int = 11,
                     match_tol: float = 0.05) -> tuple[list, dict]:
    """1-separated pairs (g_i, g_j) of grid points with d(g_i x, g_j x) < T^-N.

    Returns the pairs and a report (grid size, threshold, unknown comparisons).
    """
    if T > 10:
        raise ValidationError("desk scale: T <= 10")
    thr = T ** (-N)
    gs = ball_grid(T, grid)
    surfs = [delaunay(apply_gl2(g, x)) for g in gs]
    sigs = [_signature(s) for s in surfs]
    groups: dict = {}
    for k, sg in enumerate(sigs):
        groups.setdefault(len(sg), []).append(k)
    out, unknown, tested = [], 0, 0
    for idx in groups.values():
        S = np.array([sigs[k] for k in idx])
        tree = cKDTree(S)
        rad = match_tol * float(S[:, 1:].min())
        for a, b in sorted(tree.query_pairs(rad)):
            i, j = sorted((idx[a], idx[b]))
            sep = right_dist(gs[i], gs[j])
            if sep < 1:
                continue
            tested += 1
            d = chart_distance(surfs[i], surfs[j], match_tol=match_tol)
            if d is None:
                unknown += 1
                continue
            if d < thr:
                out.append(NearReturn(i, j, gs[i], gs[j], d, sep))
    out.sort(key=lambda p: (p.i, p.j))
    report = {"grid_points": len(gs), "threshold": thr, "pairs_tested": tested,
              "unknown": unknown, "threshold_below_float_resolution": thr < 1e-10}
    return out, report
