"""Triangulated translation surfaces.

A surface is a list of positively oriented triangles, each stored as three
complex edge vectors ``e0, e1, e2`` (``e_i`` runs from vertex ``i`` to vertex
``i+1``, so the three sum to zero), plus an involution ``glue`` on the edge
slots ``(t, i)``.  Glued slots carry opposite vectors.

The surface also carries a *marking*: an integer class for every slot,
expressed in a fixed basis of relative homology, together with the period
vector ``x`` (the integrals of the 1-form over that basis).  Every edge vector
equals ``cls[t, i] @ x``.  Flips keep the basis and update classes; calling
:func:`remark` switches to the cotree basis of the current triangulation and
returns the integer change-of-basis matrix.  These matrices are the cocycle.
"""
from __future__ import annotations

import json
import math
from collections import deque
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    ClosureViolation,
    ConeAngleMismatch,
    DegenerateTriangle,
    FlipLimitExceeded,
    GluingMismatch,
    NonpositiveDeterminant,
    OrientationViolation,
    ValidationError,
)

TOL = 1e-9
DEFAULT_FLIP_CAP = 10**6
DEFAULT_WINDOW_CAP = 2_000_000


def _cross(u: complex, w: complex) -> float:
    return u.real * w.imag - u.imag * w.real


def _dot(u: complex, w: complex) -> float:
    return u.real * w.real + u.imag * w.imag


def _corner_cot(e: Sequence[complex], k: int) -> float:
    # angle at vertex k lies between e_k and -e_{k-1}
    u, w = e[k], -e[k - 1]
    return _dot(u, w) / _cross(u, w)


class SaddleConnection(NamedTuple):
    hol: complex
    cls: tuple
    start: int
    end: int


class TranslationSurface:
    """Immutable triangulated translation surface with a marking."""

    __slots__ = ("tri", "glue", "zero_orders", "cls", "periods", "_cache")

    def __init__(self, tri, glue, zero_orders, cls=None, periods=None, check=True):
        self.tri = np.asarray(tri, dtype=complex).reshape(-1, 3)
        self.glue = np.asarray(glue, dtype=np.int64).reshape(-1, 3, 2)
        self.zero_orders = tuple(int(a) for a in zero_orders)
        self._cache = {}
        if cls is None:
            cls = cotree_classes(self.glue)
            periods = _periods_from(self.tri, cls)
        self.cls = np.asarray(cls)
        self.periods = np.asarray(periods, dtype=complex)
        for arr in (self.tri, self.glue, self.cls, self.periods):
            arr.setflags(write=False)
        if check:
            validate(self)

    # -- basic combinatorics -------------------------------------------------
    @property
    def n_triangles(self) -> int:
        return self.tri.shape[0]

    @property
    def n_edges(self) -> int:
        return 3 * self.n_triangles // 2

    @property
    def dim(self) -> int:
        return self.cls.shape[2]

    def partner(self, t: int, i: int) -> tuple[int, int]:
        p = self.glue[t, i]
        return int(p[0]), int(p[1])

    def edges(self) -> list[tuple[int, int]]:
        """One representative slot per edge, in lexicographic order."""
        out = []
        for t in range(self.n_triangles):
            for i in range(3):
                if (t, i) < self.partner(t, i):
                    out.append((t, i))
        return out

    def vertex_classes(self) -> np.ndarray:
        """Vertex class of every corner, numbered by first appearance."""
        if "vc" in self._cache:
            return self._cache["vc"]
        F = self.n_triangles
        vc = -np.ones((F, 3), dtype=np.int64)
        nxt = 0
        for t in range(F):
            for i in range(3):
                if vc[t, i] >= 0:
                    continue
                ct, ci = t, i
                while vc[ct, ci] < 0:
                    vc[ct, ci] = nxt
                    pt, pj = self.partner(ct, ci)
                    ct, ci = pt, (pj + 1) % 3
                nxt += 1
        vc.setflags(write=False)
        self._cache["vc"] = vc
        return vc

    def cone_angles(self) -> np.ndarray:
        vc = self.vertex_classes()
        ang = np.zeros(int(vc.max()) + 1)
        for t in range(self.n_triangles):
            e = self.tri[t]
            for k in range(3):
                ang[vc[t, k]] += np.angle(-e[k - 1] / e[k])
        return ang

    def vertex_orders(self) -> list[int]:
        return [int(round(a / (2 * np.pi))) - 1 for a in self.cone_angles()]

    def genus(self) -> int:
        V = int(self.vertex_classes().max()) + 1
        chi = V - self.n_edges + self.n_triangles
        return (2 - chi) // 2

    def with_geometry(self, tri, periods, check=False) -> "TranslationSurface":
        return TranslationSurface(tri, self.glue, self.zero_orders, self.cls, periods, check=check)

    def __repr__(self) -> str:
        return (f"TranslationSurface(F={self.n_triangles}, orders={self.zero_orders}, "
                f"area={area(self):.6g})")


def _periods_from(tri: np.ndarray, cls: np.ndarray) -> np.ndarray:
    """Read the periods of a cotree marking off the triangle data."""
    n = cls.shape[2]
    x = np.zeros(n, dtype=complex)
    found = np.zeros(n, dtype=bool)
    F = tri.shape[0]
    for t in range(F):
        for i in range(3):
            c = cls[t, i]
            nz = np.flatnonzero(c)
            if len(nz) == 1 and abs(c[nz[0]]) == 1 and not found[nz[0]]:
                x[nz[0]] = c[nz[0]] * tri[t, i]
                found[nz[0]] = True
    assert found.all()
    return x


def cotree_classes(glue: np.ndarray) -> np.ndarray:
    """Classes of all slots in the basis given by the cotree edges.

    The dual spanning tree is grown breadth first from triangle 0; edges not
    crossed by it form the basis (ordered by representative slot).  Tree edges
    are then recovered by peeling leaf triangles.
    """
    glue = np.asarray(glue)
    F = glue.shape[0]
    seen = [False] * F
    seen[0] = True
    tree = set()
    q = deque([0])
    while q:
        t = q.popleft()
        for i in range(3):
            s, j = int(glue[t, i, 0]), int(glue[t, i, 1])
            if not seen[s]:
                seen[s] = True
                tree.add(min((t, i), (s, j)))
                q.append(s)
    if not all(seen):
        raise ValidationError("triangulation is disconnected")
    reps = [(t, i) for t in range(F) for i in range(3)
            if (t, i) < (int(glue[t, i, 0]), int(glue[t, i, 1]))]
    basis = [r for r in reps if r not in tree]
    n = len(basis)
    cls = np.zeros((F, 3, n), dtype=np.int64)
    known = np.zeros((F, 3), dtype=bool)
    for j, (t, i) in enumerate(basis):
        s, k = int(glue[t, i, 0]), int(glue[t, i, 1])
        cls[t, i, j] = 1
        cls[s, k, j] = -1
        known[t, i] = known[s, k] = True
    remaining = F - 1
    while remaining:
        progressed = False
        for t in range(F):
            unk = [i for i in range(3) if not known[t, i]]
            if len(unk) != 1:
                continue
            i = unk[0]
            cls[t, i] = -(cls[t, (i + 1) % 3] + cls[t, (i + 2) % 3])
            s, k = int(glue[t, i, 0]), int(glue[t, i, 1])
            cls[s, k] = -cls[t, i]
            known[t, i] = known[s, k] = True
            remaining -= 1
            progressed = True
        if not progressed:
            raise ValidationError("could not peel the dual tree")
    return cls


# ---------------------------------------------------------------------------
# construction and validation

def build_surface(triangles, gluing, zero_orders, check=True) -> TranslationSurface:
    """Build and validate a surface from raw data.

    ``triangles`` holds three edge vectors per triangle (complex numbers or
    pairs); ``gluing`` is a list of ``[t, e, t', e']`` records.
    """
    tri = []
    for T in triangles:
        row = []
        for v in T:
            if isinstance(v, (list, tuple, np.ndarray)):
                row.append(complex(float(v[0]), float(v[1])))
            else:
                row.append(complex(v))
        if len(row) != 3:
            raise ValidationError(f"triangle {len(tri)} does not have three edges")
        tri.append(row)
    F = len(tri)
    glue = -np.ones((F, 3, 2), dtype=np.int64)
    for rec in gluing:
        t, e, s, k = (int(r) for r in rec)
        for a, b in ((t, e), (s, k)):
            if not (0 <= a < F and 0 <= b < 3):
                raise GluingMismatch(f"slot ({a},{b}) does not exist")
        if (t, e) == (s, k):
            raise GluingMismatch(f"slot ({t},{e}) glued to itself")
        for a, b, c, d in ((t, e, s, k), (s, k, t, e)):
            if glue[a, b, 0] >= 0 and (glue[a, b, 0], glue[a, b, 1]) != (c, d):
                raise GluingMismatch(f"slot ({a},{b}) glued twice")
            glue[a, b] = (c, d)
    bad = np.argwhere(glue[:, :, 0] < 0)
    if len(bad):
        t, e = bad[0]
        raise GluingMismatch(f"slot ({t},{e}) is not glued")
    tri = np.array(tri, dtype=complex)
    _check_triangles(tri)
    _check_gluing(tri, glue)
    return TranslationSurface(tri, glue, zero_orders, check=check)


def _check_triangles(tri: np.ndarray, tol: float = TOL) -> None:
    for t, e in enumerate(tri):
        scale = max(1.0, float(np.abs(e).max()))
        if abs(e.sum()) > tol * scale:
            raise ClosureViolation(f"triangle {t}: edges sum to {e.sum():.3g}")
        if _cross(e[0], e[1]) <= tol * scale * scale:
            raise OrientationViolation(f"triangle {t} is not positively oriented")


def _check_gluing(tri: np.ndarray, glue: np.ndarray, tol: float = TOL) -> None:
    F = tri.shape[0]
    for t in range(F):
        for i in range(3):
            s, k = glue[t, i]
            if (glue[s, k, 0], glue[s, k, 1]) != (t, i):
                raise GluingMismatch(f"gluing is not an involution at ({t},{i})")
            scale = max(1.0, abs(tri[t, i]))
            if abs(tri[t, i] + tri[s, k]) > tol * scale:
                raise GluingMismatch(
                    f"slots ({t},{i}) and ({s},{k}) carry non-opposite vectors")


def validate(s: TranslationSurface, tol: float = TOL) -> None:
    """Check closure, orientation, gluing and cone angles."""
    _check_triangles(s.tri, tol)
    _check_gluing(s.tri, s.glue, tol)
    ang = s.cone_angles()
    mult = ang / (2 * np.pi)
    for v, m in enumerate(mult):
        if abs(m - round(m)) > 1e-7 or round(m) < 1:
            raise ConeAngleMismatch(f"vertex {v}: cone angle {ang[v]:.12g} is not a multiple of 2pi")
    orders = sorted(int(round(m)) - 1 for m in mult)
    if orders != sorted(s.zero_orders):
        raise ConeAngleMismatch(
            f"vertex orders {orders} do not match declared zero_orders {sorted(s.zero_orders)}")


# ---------------------------------------------------------------------------
# geometry

def area(s: TranslationSurface) -> float:
    e0, e1 = s.tri[:, 0], s.tri[:, 1]
    return float(0.5 * np.sum(e0.real * e1.imag - e0.imag * e1.real))


def apply_gl2(g, s: TranslationSurface) -> TranslationSurface:
    g = np.asarray(g, dtype=float)
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    if det <= 0:
        raise NonpositiveDeterminant(f"det g = {det:.6g}")
    return s.with_geometry(_act(g, s.tri), _act(g, s.periods))


def _act(g: np.ndarray, z: np.ndarray) -> np.ndarray:
    x, y = z.real, z.imag
    return (g[0, 0] * x + g[0, 1] * y) + 1j * (g[1, 0] * x + g[1, 1] * y)


def a_t(t: float) -> np.ndarray:
    return np.array([[math.exp(t / 2), 0.0], [0.0, math.exp(-t / 2)]])


def u_r(r: float) -> np.ndarray:
    return np.array([[1.0, r], [0.0, 1.0]])


def ubar_s(s: float) -> np.ndarray:
    return np.array([[1.0, 0.0], [s, 1.0]])


def rebuild_from_periods(s: TranslationSurface, new_periods) -> TranslationSurface:
    """Same combinatorics, edge vectors recomputed from new periods."""
    x = np.asarray(new_periods, dtype=complex)
    if x.shape != s.periods.shape:
        raise ValidationError(f"expected {s.periods.shape[0]} periods, got {x.shape}")
    tri = s.cls.astype(float) @ x
    for t, e in enumerate(tri):
        if _cross(e[0], e[1]) <= 0:
            raise DegenerateTriangle(f"triangle {t} collapses or flips orientation")
    return s.with_geometry(tri, x)


def orientation_margin(s: TranslationSurface) -> float:
    """Largest sup-norm period perturbation that keeps every triangle oriented.

    A perturbation ``dx`` moves each edge by at most ``|cls|_1 * |dx|_inf``,
    so every triangle survives as long as that stays below its smallest
    altitude divided by two.  This is a lower bound, sharp up to constants.
    """
    best = math.inf
    for t in range(s.n_triangles):
        e = s.tri[t]
        a2 = _cross(e[0], e[1])
        alt = min(a2 / abs(e[k]) for k in range(3))
        k1 = max(np.abs(s.cls[t, k]).sum() for k in range(3))
        best = min(best, alt / (2 * k1))
    return best


# ---------------------------------------------------------------------------
# flips and Delaunay

def _flip_lists(tri, glue, cls, t, i):
    """Flip the edge at slot (t, i) in place on list-based data."""
    s, j = glue[t][i]
    e, f = tri[t], tri[s]
    ce, cf = cls[t], cls[s]
    i1, i2 = (i + 1) % 3, (i + 2) % 3
    j1, j2 = (j + 1) % 3, (j + 2) % 3
    d = f[j2] + e[i1]
    dc = cf[j2] + ce[i1]
    new_t = [f[j2], e[i1], -d]
    new_s = [e[i2], f[j1], d]
    cls_t = [cf[j2], ce[i1], -dc]
    cls_s = [ce[i2], cf[j1], dc]
    # outer slots: old -> new
    moves = {(s, j2): (t, 0), (t, i1): (t, 1), (t, i2): (s, 0), (s, j1): (s, 1)}
    partners = {old: glue[old[0]][old[1]] for old in moves}
    tri[t], tri[s] = new_t, new_s
    cls[t], cls[s] = cls_t, cls_s
    for old, new in moves.items():
        p = partners[old]
        p = moves.get(p, p)
        glue[new[0]][new[1]] = p
        glue[p[0]][p[1]] = new
    glue[t][2] = (s, 2)
    glue[s][2] = (t, 2)


def _edge_defect(tri, glue, t, i) -> float:
    s, j = glue[t][i]
    return _corner_cot(tri[t], (i + 2) % 3) + _corner_cot(tri[s], (j + 2) % 3)


def _to_lists(s: TranslationSurface):
    tri = [list(map(complex, row)) for row in s.tri]
    glue = [[(int(p[0]), int(p[1])) for p in row] for row in s.glue]
    cls = [[row[k].copy() for k in range(3)] for row in s.cls]
    return tri, glue, cls


def _from_lists(s: TranslationSurface, tri, glue, cls) -> TranslationSurface:
    return TranslationSurface(np.array(tri, dtype=complex), np.array(glue, dtype=np.int64),
                              s.zero_orders, np.array(cls), s.periods, check=False)


def flip(s: TranslationSurface, t: int, i: int) -> TranslationSurface:
    tri, glue, cls = _to_lists(s)
    if glue[t][i][0] == t:
        raise ValidationError(f"edge ({t},{i}) borders a single triangle")
    _flip_lists(tri, glue, cls, t, i)
    for k in (t, glue[t][2][0]):
        if _cross(tri[k][0], tri[k][1]) <= 0:
            raise DegenerateTriangle(f"flip of ({t},{i}) is not convex")
    return _from_lists(s, tri, glue, cls)


def delaunay(s: TranslationSurface, max_flips: int = DEFAULT_FLIP_CAP,
             tol: float = TOL, return_flips: bool = False):
    """Flip non-Delaunay edges until every edge passes the empty-circle test."""
    tri, glue, cls = _to_lists(s)
    F = len(tri)
    stack = [(t, k) for t in range(F) for k in range(3)]
    flips = 0
    while stack:
        t, i = stack.pop()
        if _edge_defect(tri, glue, t, i) >= -tol:
            continue
        if flips >= max_flips:
            raise FlipLimitExceeded(f"more than {max_flips} flips")
        sj = glue[t][i][0]
        _flip_lists(tri, glue, cls, t, i)
        flips += 1
        stack.extend([(t, 0), (t, 1), (sj, 0), (sj, 1)])
    out = s if flips == 0 else _from_lists(s, tri, glue, cls)
    return (out, flips) if return_flips else out


def is_delaunay(s: TranslationSurface, tol: float = TOL) -> bool:
    tri, glue, _ = _to_lists(s)
    return all(_edge_defect(tri, glue, t, i) >= -tol
               for t in range(len(tri)) for i in range(3))


def remark(s: TranslationSurface):
    """Switch to the cotree basis of the current triangulation.

    Returns ``(surface, M)`` where ``M`` is the integer matrix with
    ``x_new = M @ x_old``; cohomology coordinates transform the same way.
    """
    new_cls = cotree_classes(s.glue)
    n = new_cls.shape[2]
    M = np.zeros((n, n), dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    for t in range(s.n_triangles):
        for i in range(3):
            c = new_cls[t, i]
            nz = np.flatnonzero(c)
            if len(nz) == 1 and c[nz[0]] == 1 and not seen[nz[0]]:
                M[nz[0]] = s.cls[t, i]
                seen[nz[0]] = True
    # read periods off the edges; pushing x through M amplifies rounding
    x = _periods_from(s.tri, new_cls)
    return TranslationSurface(s.tri, s.glue, s.zero_orders, new_cls, x, check=False), M


# ---------------------------------------------------------------------------
# saddle connections

def saddle_connections(s: TranslationSurface, L: float,
                       window_cap: int = DEFAULT_WINDOW_CAP) -> list[SaddleConnection]:
    """All oriented saddle connections of length <= L.

    Each corner's angular sector is unfolded across triangle edges.  Sectors
    are half-open (the first edge direction belongs to the corner, the last
    one to the next corner), so every direction at every vertex is scanned
    once.  Straight segments through cone points of angle 2pi are continued,
    so tori report non-primitive vectors too.
    """
    if L <= 0:
        return []
    hit = s._cache.get("sc")
    if hit is not None and hit[0] >= L:
        return [c for c in hit[1] if abs(c.hol) <= L + 1e-12]
    prim = _primitive_connections(s, L, window_cap)
    out = _continue_through_marked(s, prim, L)
    out.sort(key=lambda c: (abs(c.hol), math.atan2(c.hol.imag, c.hol.real), c.start, c.cls))
    s._cache["sc"] = (L, out)
    return out


def _seg_dist(a: complex, b: complex) -> float:
    d = b - a
    dd = _dot(d, d)
    u = 0.0 if dd == 0 else max(0.0, min(1.0, -_dot(a, d) / dd))
    return abs(a + u * d)


def _primitive_connections(s, L, window_cap):
    tri, glue = s.tri, s.glue
    vc = s.vertex_classes()
    clsl = s.cls
    out = []
    windows = 0
    eps = 1e-12
    for t in range(s.n_triangles):
        for i in range(3):
            v0 = int(vc[t, i])
            A = complex(tri[t, i])
            B = complex(-tri[t, i - 1])
            cA = clsl[t, i]
            cB = -clsl[t, i - 1]
            if abs(A) <= L:
                out.append(SaddleConnection(A, tuple(int(c) for c in cA), v0,
                                            int(vc[t, (i + 1) % 3])))
            stack = [(int(glue[t, (i + 1) % 3, 0]), int(glue[t, (i + 1) % 3, 1]),
                      A, B, cA, cB, A, B)]
            while stack:
                tt, k, A, B, cA, cB, lo, hi = stack.pop()
                windows += 1
                if windows > window_cap:
                    raise BudgetExceeded(f"saddle connection search passed {window_cap} windows")
                if _seg_dist(A, B) > L:
                    continue
                # entering slot (tt,k) runs B -> A; apex is vertex k+2
                k1, k2 = (k + 1) % 3, (k + 2) % 3
                R = A + tri[tt, k1]
                cR = cA + clsl[tt, k1]
                rn = abs(R)
                inside_lo = _cross(lo, R) > eps * abs(lo) * rn
                inside_hi = _cross(R, hi) > eps * abs(hi) * rn
                if inside_lo and inside_hi:
                    if rn <= L:
                        out.append(SaddleConnection(R, tuple(int(c) for c in cR), v0,
                                                    int(vc[tt, k2])))
                    p1 = glue[tt, k1]
                    p2 = glue[tt, k2]
                    stack.append((int(p1[0]), int(p1[1]), A, R, cA, cR, lo, R))
                    stack.append((int(p2[0]), int(p2[1]), R, B, cR, cB, R, hi))
                elif not inside_hi:
                    # R at or beyond hi: sector only sees edge A -> R
                    p1 = glue[tt, k1]
                    stack.append((int(p1[0]), int(p1[1]), A, R, cA, cR, lo, hi))
                else:
                    p2 = glue[tt, k2]
                    stack.append((int(p2[0]), int(p2[1]), R, B, cR, cB, lo, hi))
    return out


def _continue_through_marked(s, prim, L):
    orders = s.vertex_orders()
    if all(o != 0 for o in orders):
        return prim
    by_start = {}
    for c in prim:
        by_start.setdefault(c.start, []).append(c)
    out = list(prim)
    frontier = [c for c in prim if orders[c.end] == 0]
    while frontier:
        nxt = []
        for c in frontier:
            ln = abs(c.hol)
            for d in by_start.get(c.end, ()):
                if ln + abs(d.hol) > L + 1e-12:
                    continue
                if _dot(c.hol, d.hol) > 0 and abs(_cross(c.hol, d.hol)) <= 1e-9 * ln * abs(d.hol):
                    cc = SaddleConnection(c.hol + d.hol,
                                          tuple(a + b for a, b in zip(c.cls, d.cls)),
                                          c.start, d.end)
                    out.append(cc)
                    if orders[cc.end] == 0:
                        nxt.append(cc)
                    break
        frontier = nxt
    return out


def systole(s: TranslationSurface) -> float:
    if "systole" in s._cache:
        return s._cache["systole"]
    L = float(np.abs(s.tri).min()) * (1 + 1e-9)
    sc = saddle_connections(s, L)
    val = min(abs(c.hol) for c in sc)
    s._cache["systole"] = val
    return val


# ---------------------------------------------------------------------------
# cup product and symplectic frames

def cup_form(s: TranslationSurface) -> np.ndarray:
    """Skew matrix Q with ``area = Re(x) @ Q @ Im(x)``.

    ``Q[j, k]`` is the cup product of the dual basis classes, summed over
    triangles as ``(E0_j E1_k - E1_j E0_k) / 2``.
    """
    E0 = s.cls[:, 0, :].astype(float)
    E1 = s.cls[:, 1, :].astype(float)
    return 0.5 * (E0.T @ E1 - E1.T @ E0)


class HomologyFrame(NamedTuple):
    basis_cycles: np.ndarray      # rows a_1, b_1, ..., a_g, b_g in marking coordinates
    intersection_matrix: np.ndarray


def _symplectic_reduce(Q: np.ndarray) -> np.ndarray:
    """Unimodular U with ``U Q U^T`` standard symplectic (block diagonal)."""
    Q = [[int(v) for v in row] for row in Q]
    n = len(Q)
    U = [[int(i == j) for j in range(n)] for i in range(n)]

    def rowop(i, j, c):  # row_i += c * row_j, congruence on Q
        for k in range(n):
            U[i][k] += c * U[j][k]
            Q[i][k] += c * Q[j][k]
        for k in range(n):
            Q[k][i] += c * Q[k][j]

    def swap(i, j):
        U[i], U[j] = U[j], U[i]
        Q[i], Q[j] = Q[j], Q[i]
        for row in Q:
            row[i], row[j] = row[j], row[i]

    def neg(i):
        U[i] = [-v for v in U[i]]
        Q[i] = [-v for v in Q[i]]
        for row in Q:
            row[i] = -row[i]

    p = 0
    while p + 1 < n:
        # bring a smallest nonzero entry of the trailing block to (p, p+1)
        while True:
            best = None
            for i in range(p, n):
                for j in range(p, n):
                    if Q[i][j] and (best is None or abs(Q[i][j]) < abs(Q[best[0]][best[1]])):
                        best = (i, j)
            if best is None:
                return np.array(U, dtype=object)
            i, j = best
            if i != p:
                swap(p, i)
                if j == p:
                    j = i
            if j != p + 1:
                swap(p + 1, j)
            if Q[p][p + 1] < 0:
                neg(p + 1)
            piv = Q[p][p + 1]
            clean = True
            for k in range(p + 2, n):
                c = Q[p][k] // piv
                if c:
                    rowop(k, p + 1, -c)
                if Q[p][k]:
                    clean = False
                c = Q[p + 1][k] // piv
                if c:
                    rowop(k, p, c)
                if Q[p + 1][k]:
                    clean = False
            if clean:
                break
        if Q[p][p + 1] != 1:
            raise ValidationError("intersection form is not unimodular")
        p += 2
    return np.array(U, dtype=object)


def homology_frame(s: TranslationSurface) -> HomologyFrame:
    """Integral symplectic basis of absolute homology (|Sigma| = 1 surfaces)."""
    Q = cup_form(s)
    Qi = np.rint(Q).astype(np.int64)
    if np.abs(Q - Qi).max() > 1e-9:
        raise ValidationError("cup form is not integral in this marking")
    if round(abs(np.linalg.det(Q))) != 1:
        raise ValidationError("surface has several cone points; absolute frame needs |Sigma| = 1")
    U = _symplectic_reduce(Qi)
    P = np.array(sympy_inverse(U), dtype=np.int64)
    cycles = P.T  # rows are a_1, b_1, ...
    J = -np.rint(np.linalg.inv(Q)).astype(np.int64)
    return HomologyFrame(cycles, J)


def sympy_inverse(U) -> list:
    import sympy
    return [[int(v) for v in row] for row in sympy.Matrix(U.tolist()).inv().tolist()]


def cohomological_area(s: TranslationSurface) -> float:
    """Area as the sum of Im(conj(A_j) B_j) over a symplectic basis."""
    fr = homology_frame(s)
    per = fr.basis_cycles.astype(float) @ s.periods
    A, B = per[0::2], per[1::2]
    return float(np.sum((np.conj(A) * B).imag))


# ---------------------------------------------------------------------------
# canonical form (Delaunay cell decomposition)

def _cells(s: TranslationSurface, tol: float):
    """Delaunay cells: merge triangles across edges with angle sum pi."""
    tri, glue = s.tri, s.glue
    F = s.n_triangles
    inner = np.zeros((F, 3), dtype=bool)
    for t in range(F):
        for i in range(3):
            sj, j = glue[t, i]
            d = _corner_cot(tri[t], (i + 2) % 3) + _corner_cot(tri[sj], (j + 2) % 3)
            inner[t, i] = abs(d) <= tol
    owner = {}
    polys = []
    for t in range(F):
        for i in range(3):
            if inner[t, i] or (t, i) in owner:
                continue
            sides = []
            ct, ci = t, i
            while (ct, ci) not in owner:
                owner[(ct, ci)] = (len(polys), len(sides))
                sides.append((ct, ci))
                ct, ci = ct, (ci + 1) % 3
                while inner[ct, ci]:
                    pt, pj = glue[ct, ci]
                    ct, ci = int(pt), (int(pj) + 1) % 3
            polys.append(sides)
    return polys, owner


def _rooted_encoding(s, polys, owner, p0, k0, slots=None):
    labels = {p0: 0}
    starts = {p0: k0}
    order = [p0]
    enc = []
    q = 0
    while q < len(order):
        p = order[q]
        q += 1
        sides = polys[p]
        m = len(sides)
        st = starts[p]
        rec = []
        for r in range(m):
            t, i = sides[(st + r) % m]
            pt, pj = s.glue[t, i]
            np_, nk = owner[(int(pt), int(pj))]
            if np_ not in labels:
                labels[np_] = len(order)
                starts[np_] = nk
                order.append(np_)
            nm = len(polys[np_])
            rec.append((s.tri[t, i], labels[np_], (nk - starts[np_]) % nm))
            if slots is not None:
                slots.append((t, i))
        enc.append(rec)
    return enc


def _quantize(enc, digits):
    return tuple(tuple((round(v.real, digits) + 0.0, round(v.imag, digits) + 0.0, lab, rel)
                       for v, lab, rel in rec) for rec in enc)


def rooted_encodings(s: TranslationSurface, tol: float = 1e-7):
    s = delaunay(s)
    polys, owner = _cells(s, tol)
    return [_rooted_encoding(s, polys, owner, p, k)
            for p in range(len(polys)) for k in range(len(polys[p]))]


def canonical_form(s: TranslationSurface, tol: float = 1e-7, digits: int = 6) -> bytes:
    """Relabeling-invariant byte encoding of the Delaunay cell structure."""
    encs = [_quantize(e, digits) for e in rooted_encodings(s, tol)]
    return json.dumps([list(s.zero_orders and sorted(s.zero_orders)), min(encs)]).encode()


def encodings_match(e1, e2, tol: float) -> bool:
    if len(e1) != len(e2):
        return False
    for r1, r2 in zip(e1, e2):
        if len(r1) != len(r2):
            return False
        for (v1, l1, k1), (v2, l2, k2) in zip(r1, r2):
            if l1 != l2 or k1 != k2 or abs(v1 - v2) > tol:
                return False
    return True


# ---------------------------------------------------------------------------
# JSON

def to_json(s: TranslationSurface) -> dict:
    gl = []
    for t, i in s.edges():
        pt, pj = s.partner(t, i)
        gl.append([t, i, pt, pj])
    return {
        "zero_orders": list(s.zero_orders),
        "triangles": [[[float(v.real), float(v.imag)] for v in row] for row in s.tri],
        "gluing": gl,
    }


def from_json(obj) -> TranslationSurface:
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    try:
        return build_surface(obj["triangles"], obj["gluing"], obj["zero_orders"])
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed surface record: {exc!r}") from exc


# ---------------------------------------------------------------------------
# small constructors

def square_torus(w: float = 1.0, h: float = 1.0, shear: float = 0.0) -> TranslationSurface:
    """Torus of the lattice Z(w,0) + Z(shear,h) with one marked point."""
    return torus(complex(w, 0), complex(shear, h))


def _torus_fix(a: complex, b: complex) -> TranslationSurface:
    # triangle 0: 0 -> a -> b ; triangle 1: a -> a+b -> b
    tri = [[a, b - a, -b], [b, -a, a - b]]
    # slots: T0: (0) a, (1) b-a, (2) -b ; T1: (0) b, (1) -a, (2) a-b
    glue = [[0, 0, 1, 1], [0, 1, 1, 2], [0, 2, 1, 0]]
    return build_surface(tri, glue, [0])


def torus(v1: complex, v2: complex) -> TranslationSurface:
    """Flat torus C / (Z v1 + Z v2) with one marked point; det(v1, v2) > 0."""
    v1, v2 = complex(v1), complex(v2)
    if _cross(v1, v2) <= 0:
        raise OrientationViolation("lattice basis is not positively oriented")
    return _torus_fix(v1, v2)
