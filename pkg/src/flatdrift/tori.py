"""Lattices, slit connected sums and real-multiplication prototypes.

Exact arithmetic lives in the module Q + Q*lam with lam^2 = e*lam + bc, so a
prototype never needs sqrt(D) normalized; floats appear only on request.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering
from typing import NamedTuple

import numpy as np

from .errors import BadDiscriminant, SlitHitsLattice, ValidationError
from .surface import TranslationSurface, build_surface


@total_ordering
class QuadElem:
    """p + q*lam inside Q(lam), lam = (e + sqrt(D)) / 2 > 0, lam^2 = e*lam + n."""

    __slots__ = ("p", "q", "e", "n")

    def __init__(self, p, q, e: int, n: int):
        self.p = Fraction(p)
        self.q = Fraction(q)
        self.e = int(e)
        self.n = int(n)

    @property
    def D(self) -> int:
        return self.e * self.e + 4 * self.n

    def _lift(self, o) -> "QuadElem":
        if isinstance(o, QuadElem):
            if (o.e, o.n) != (self.e, self.n):
                raise ValueError("elements of different fields")
            return o
        return QuadElem(o, 0, self.e, self.n)

    def __add__(self, o):
        o = self._lift(o)
        return QuadElem(self.p + o.p, self.q + o.q, self.e, self.n)

    __radd__ = __add__

    def __neg__(self):
        return QuadElem(-self.p, -self.q, self.e, self.n)

    def __sub__(self, o):
        return self + (-self._lift(o))

    def __rsub__(self, o):
        return self._lift(o) - self

    def __mul__(self, o):
        o = self._lift(o)
        # (p + q l)(r + s l) = pr + (ps + qr) l + qs (e l + n)
        qs = self.q * o.q
        return QuadElem(self.p * o.p + qs * self.n,
                        self.p * o.q + self.q * o.p + qs * self.e, self.e, self.n)

    __rmul__ = __mul__

    def conj(self) -> "QuadElem":
        # Galois conjugate: lam -> e - lam
        return QuadElem(self.p + self.q * self.e, -self.q, self.e, self.n)

    def norm(self) -> Fraction:
        return (self * self.conj()).p

    def __truediv__(self, o):
        o = self._lift(o)
        nm = o.norm()
        if nm == 0:
            raise ZeroDivisionError("division by zero in Q(lam)")
        c = self * o.conj()
        return QuadElem(c.p / nm, c.q / nm, self.e, self.n)

    def sign(self) -> int:
        """Exact sign of p + q*lam using lam = (e + sqrt(D))/2."""
        # value = (2p + q e)/2 + q sqrt(D)/2 ; compare A + B sqrt(D) with 0
        A = 2 * self.p + self.q * self.e
        B = self.q
        return _sign_a_b_sqrt(A, B, self.D)

    def __eq__(self, o):
        try:
            d = self - self._lift(o)
        except (ValueError, TypeError):
            return NotImplemented
        return d.p == 0 and d.q == 0

    def __lt__(self, o):
        return (self - self._lift(o)).sign() < 0

    def __hash__(self):
        return hash((self.p, self.q, self.e, self.n))

    def __float__(self):
        lam = (self.e + math.sqrt(self.D)) / 2
        return float(self.p) + float(self.q) * lam

    def __repr__(self):
        return f"QuadElem({self.p} + {self.q}*lam | e={self.e}, bc={self.n})"


def _sign_a_b_sqrt(A: Fraction, B: Fraction, D: int) -> int:
    sa = (A > 0) - (A < 0)
    sb = (B > 0) - (B < 0)
    if sb == 0 or D == 0:
        return sa
    if sa == 0 or sa == sb:
        return sb
    # opposite signs: compare A^2 with B^2 D
    c = A * A - B * B * D
    return sa if c > 0 else (sb if c < 0 else 0)


def lam_of(e: int, n: int) -> QuadElem:
    return QuadElem(0, 1, e, n)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lattice2D:
    v1: tuple
    v2: tuple

    def __post_init__(self):
        if _det(self.v1, self.v2) <= 0:
            raise ValidationError("lattice basis must have positive covolume")

    @property
    def covolume(self):
        return _det(self.v1, self.v2)

    def transformed(self, g) -> "Lattice2D":
        return Lattice2D(_mat_vec(g, self.v1), _mat_vec(g, self.v2))

    def coords(self, v):
        """Real coordinates of v in the basis (v1, v2)."""
        d = _det(self.v1, self.v2)
        return (_det(v, self.v2) / d, _det(self.v1, v) / d)


def _det(u, w):
    return u[0] * w[1] - u[1] * w[0]


def _mat_vec(g, v):
    return (g[0][0] * v[0] + g[0][1] * v[1], g[1][0] * v[0] + g[1][1] * v[1])


def _floor(x):
    if isinstance(x, QuadElem):
        f = math.floor(float(x))
        # repair float rounding exactly
        while QuadElem(f, 0, x.e, x.n) > x:
            f -= 1
        while QuadElem(f + 1, 0, x.e, x.n) <= x:
            f += 1
        return f
    return math.floor(x)


class SlitTriple(NamedTuple):
    L1: Lattice2D
    L2: Lattice2D
    v: tuple

    def check(self, box: int = 6) -> None:
        """Verify [0,v] meets Lambda1 only at 0 and Lambda2 only at 0 and v."""
        for lat, allowed in ((self.L1, 0), (self.L2, 1)):
            c1, c2 = lat.coords(self.v)
            for m in range(-box, box + 1):
                for k in range(-box, box + 1):
                    if (m, k) == (0, 0):
                        continue
                    # lattice point m v1 + k v2 on segment iff coords are t*(c1,c2), 0<t<=1
                    w = (m * lat.v1[0] + k * lat.v2[0], m * lat.v1[1] + k * lat.v2[1])
                    if _on_segment(w, self.v):
                        if allowed and w == tuple(self.v):
                            continue
                        if allowed and _close(w, self.v):
                            continue
                        raise SlitHitsLattice(f"slit [0,v] contains lattice point {w}")
            if allowed and not _in_lattice(lat, self.v):
                raise SlitHitsLattice("slit vector is not a point of the second lattice")


def _close(a, b):
    return all(abs(float(x) - float(y)) < 1e-9 for x, y in zip(a, b))


def _on_segment(w, v) -> bool:
    cr = _det(v, w)
    exact = isinstance(cr, (QuadElem, Fraction, int))
    if exact:
        if cr != 0:
            return False
    elif abs(cr) > 1e-9 * max(1.0, abs(float(v[0])) + abs(float(v[1]))) ** 2:
        return False
    dot = w[0] * v[0] + w[1] * v[1]
    vv = v[0] * v[0] + v[1] * v[1]
    if exact:
        return dot > 0 and not dot > vv
    return float(dot) > 0 and float(dot) <= float(vv) * (1 + 1e-12)


def _in_lattice(lat: Lattice2D, v) -> bool:
    c1, c2 = lat.coords(v)
    if isinstance(c1, QuadElem):
        return c1.q == 0 and c2.q == 0 and c1.p.denominator == 1 and c2.p.denominator == 1
    return abs(float(c1) - round(float(c1))) < 1e-9 and abs(float(c2) - round(float(c2))) < 1e-9


# ---------------------------------------------------------------------------
# connected sum

def _slit_basis(L1: Lattice2D, v, search: int = 24):
    """Basis (w1, w2) of Lambda1 whose open parallelogram contains v."""
    a, b = L1.v1, L1.v2
    cands = []
    for p in range(-search, search + 1):
        for q in range(-search, search + 1):
            if math.gcd(p, q) != 1:
                continue
            cands.append((p, q))
    cands.sort(key=lambda pq: (abs(pq[0]) + abs(pq[1]), pq))
    for p, q in cands:
        w1 = (p * a[0] + q * b[0], p * a[1] + q * b[1])
        # complete (p,q) to a unimodular pair (r,s) with ps - qr = 1
        g, r0, s0 = _ext_gcd(p, q)
        # p*r0 + q*s0 = 1 -> use (r, s) = (-s0, r0): p*r0 - q*(-s0) ... check below
        r, s = -s0, r0
        assert p * s - q * r == 1
        for k in range(-search, search + 1):
            rr, ss = r + k * p, s + k * q
            w2 = (rr * a[0] + ss * b[0], rr * a[1] + ss * b[1])
            lat = Lattice2D.__new__(Lattice2D)
            object.__setattr__(lat, "v1", w1)
            object.__setattr__(lat, "v2", w2)
            d = _det(w1, w2)
            if not d > 0:
                continue
            al, be = lat.coords(v)
            if al > 0 and be > 0 and al < 1 and be < 1:
                return w1, w2
    raise SlitHitsLattice("no lattice basis places the slit inside a fundamental domain")


def _ext_gcd(a, b):
    if b == 0:
        return (abs(a), (1 if a >= 0 else -1), 0)
    g, x, y = _ext_gcd(b, a % b)
    return g, y, x - (a // b) * y


def _second_basis(L2: Lattice2D, v):
    """Basis (v, u) of Lambda2 with det(v, u) = covol(Lambda2)."""
    c1, c2 = L2.coords(v)
    p, q = int(round(float(c1))), int(round(float(c2)))
    if math.gcd(p, q) != 1:
        raise SlitHitsLattice("slit vector is not primitive in the second lattice")
    g, x, y = _ext_gcd(p, q)
    r, s = -y, x
    a, b = L2.v1, L2.v2
    u = (r * a[0] + s * b[0], r * a[1] + s * b[1])
    if not _det(v, u) > 0:
        u = (-u[0], -u[1])
    return u


def slit_sum_data(w1, w2, v, u):
    """Six triangles (edge vectors) and gluing of the cross-glued slit tori.

    Torus one is the parallelogram on (w1, w2) coned off at the slit endpoint
    v; torus two is the parallelogram on (v, u).  Entries may be floats or
    exact field elements.
    """
    def sub(p, q):
        return (p[0] - q[0], p[1] - q[1])

    def tri_of(P, Q, R):
        return [sub(Q, P), sub(R, Q), sub(P, R)]

    O = (0 * w1[0], 0 * w1[1])
    W12 = (w1[0] + w2[0], w1[1] + w2[1])
    VU = (v[0] + u[0], v[1] + u[1])
    tris = [
        tri_of(O, w1, v),        # 0
        tri_of(w1, W12, v),      # 1
        tri_of(W12, w2, v),      # 2
        tri_of(w2, O, v),        # 3
        tri_of(O, v, VU),        # 4
        tri_of(O, VU, u),        # 5
    ]
    glue = [
        [0, 0, 2, 0], [1, 0, 3, 0],   # lattice sides of torus one
        [0, 1, 1, 2], [1, 1, 2, 2], [2, 1, 3, 2],
        [4, 2, 5, 0], [4, 1, 5, 2],   # torus two
        [0, 2, 4, 0], [3, 1, 5, 1],   # cross-glued slit
    ]
    return tris, glue


def connected_sum(t: SlitTriple) -> TranslationSurface:
    t.check()
    w1, w2 = _slit_basis(t.L1, t.v)
    u = _second_basis(t.L2, t.v)
    tris, glue = slit_sum_data(w1, w2, t.v, u)
    ftris = [[(float(a), float(b)) for a, b in T] for T in tris]
    return build_surface(ftris, glue, [2])


# ---------------------------------------------------------------------------
# prototypes

@dataclass(frozen=True, order=True)
class Prototype:
    a: int
    b: int
    c: int
    e: int

    @property
    def D(self) -> int:
        return self.e * self.e + 4 * self.b * self.c

    def key(self):
        return (self.e, self.b, self.c, self.a)

    def is_valid(self) -> bool:
        a, b, c, e = self.a, self.b, self.c, self.e
        return (b > 0 and c > 0 and 0 <= a < math.gcd(b, c) and c + e < b
                and math.gcd(math.gcd(a, b), math.gcd(c, e)) == 1)

    def lam(self) -> QuadElem:
        return lam_of(self.e, self.b * self.c)

    def as_tuple(self):
        return (self.a, self.b, self.c, self.e)


def _check_disc(D: int, strict_mod: bool = True) -> None:
    if not isinstance(D, (int, np.integer)) or D < 5 or (strict_mod and D % 4 not in (0, 1)):
        raise BadDiscriminant(f"D={D}: need D >= 5 and D = 0, 1 mod 4")


def enumerate_prototypes(D: int) -> list[Prototype]:
    """All prototypes of discriminant D, ordered lexicographically on (e, b, c, a)."""
    _check_disc(D)
    out = []
    emax = math.isqrt(D)
    for e in range(-emax, emax + 1):
        rest = D - e * e
        if rest <= 0 or rest % 4:
            continue
        bc = rest // 4
        for b in range(1, bc + 1):
            if bc % b:
                continue
            c = bc // b
            if not c + e < b:
                continue
            for a in range(math.gcd(b, c)):
                p = Prototype(a, b, c, e)
                if p.is_valid():
                    out.append(p)
    out.sort(key=Prototype.key)
    return out


def enumerate_triples(D: int) -> list[tuple[int, int, int]]:
    """All (e, l, m) with D = e^2 + 4 l^2 m, l, m > 0, gcd(e, l) = 1."""
    _check_disc(D)
    out = []
    emax = math.isqrt(D)
    for e in range(-emax, emax + 1):
        rest = D - e * e
        if rest <= 0 or rest % 4:
            continue
        r = rest // 4
        l = 1
        while l * l <= r:
            if r % (l * l) == 0 and math.gcd(e, l) == 1:
                out.append((e, l, r // (l * l)))
            l += 1
    out.sort()
    return out


def component_count(D: int) -> int:
    _check_disc(D)
    return 2 if (D % 8 == 1 and D != 9) else 1


class PrototypeSurface(NamedTuple):
    triple: SlitTriple           # exact entries
    surface: TranslationSurface  # float geometry
    triangles: list              # exact edge vectors


def prototype_surface(p: Prototype) -> PrototypeSurface:
    """Slit torus pair of a prototype, built in exact arithmetic.

    Lambda1 = Z(b,0) + Z(a,c), Lambda2 = lam Z^2, slit v = (lam, 0).  The slit
    stays off Lambda1 exactly because lam < b, which is c + e < b.
    """
    if not p.is_valid():
        raise ValidationError(f"{p} is not a prototype")
    lam = p.lam()
    Z = QuadElem(0, 0, lam.e, lam.n)
    one = Z + 1
    L1 = Lattice2D((one * p.b, Z), (one * p.a, one * p.c))
    L2 = Lattice2D((lam, Z), (Z, lam))
    v = (lam, Z)
    trip = SlitTriple(L1, L2, v)
    if not (Z < lam < p.b):
        raise SlitHitsLattice("lam must lie strictly between 0 and b")
    # (w1 + w2) = (b, 0) so v = (lam/b)(w1 + w2) sits inside the parallelogram
    w1 = (one * (p.b - p.a), one * (-p.c))
    w2 = (one * p.a, one * p.c)
    u = (Z, lam)
    tris, glue = slit_sum_data(w1, w2, v, u)
    ftris = [[(float(x), float(y)) for x, y in T] for T in tris]
    surf = build_surface(ftris, glue, [2])
    return PrototypeSurface(trip, surf, tris)


def exact_area(tris) -> QuadElem:
    tot = None
    for T in tris:
        (x0, y0), (x1, y1) = T[0], T[1]
        a2 = x0 * y1 - y0 * x1
        tot = a2 if tot is None else tot + a2
    return tot * Fraction(1, 2)


def prototype_float(p: Prototype) -> TranslationSurface:
    return prototype_surface(p).surface


def normalize_area(s: TranslationSurface) -> TranslationSurface:
    """Scale all periods so the area is one."""
    from .surface import area
    return s.with_geometry(s.tri / math.sqrt(area(s)), s.periods / math.sqrt(area(s)))


def raw_splitting(D: int, eps: int) -> SlitTriple:
    """Float splitting of type (0, 1, (D-1)/4, (-1)^eps) for odd D.

    These generally violate c + e < b, so they are raw slit data, not
    prototypes; construction may fail with SlitHitsLattice.
    """
    if D % 4 != 1:
        raise BadDiscriminant("raw splitting needs D = 1 mod 4")
    a, b, c, e = 0, 1, (D - 1) // 4, (-1) ** eps
    lam = (e + math.sqrt(D)) / 2
    return SlitTriple(Lattice2D((float(b), 0.0), (float(a), float(c))),
                      Lattice2D((lam, 0.0), (0.0, lam)), (lam, 0.0))


def triple_example(e: int, l: int, m: int) -> SlitTriple:
    """Float slit data Lambda1 = Z(lm,0)+Z(0,l), Lambda2 = lam Z^2, v = (lam, 0)."""
    D = e * e + 4 * l * l * m
    lam = (e + math.sqrt(D)) / 2
    return SlitTriple(Lattice2D((float(l * m), 0.0), (0.0, float(l))),
                      Lattice2D((lam, 0.0), (0.0, lam)), (lam, 0.0))
