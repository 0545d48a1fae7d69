"""AGY norms, balance-space splittings, injectivity scales and Q-boxes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import null_space

from .errors import DegeneratePlane, ZeroCorner
from .surface import (
    SaddleConnection,
    TranslationSurface,
    cup_form,
    saddle_connections,
    systole,
)


# ---------------------------------------------------------------------------
# group norms

def gnorm(g) -> float:
    """max over entries of g and g^{-1}."""
    g = np.asarray(g, dtype=float)
    return float(max(np.abs(g).max(), np.abs(np.linalg.inv(g)).max()))


def dist_e(g) -> float:
    """Size of g - e used for the balls B_G(T): max entry of g - e and g^{-1} - e."""
    g = np.asarray(g, dtype=float)
    I = np.eye(2)
    return float(max(np.abs(g - I).max(), np.abs(np.linalg.inv(g) - I).max()))


def right_dist(g1, g2) -> float:
    """Right-invariant surrogate distance |g1 g2^{-1} - e|."""
    return dist_e(np.asarray(g1, float) @ np.linalg.inv(np.asarray(g2, float)))


# ---------------------------------------------------------------------------
# AGY norm

class NormValue(NamedTuple):
    value: float
    stabilized: bool


def default_cutoff(s: TranslationSurface) -> float:
    return max(10.0, 4.0 / systole(s))


def agy_sup(c, conns: Sequence[SaddleConnection]) -> float:
    """sup over the given saddle connections of |c(gamma)| / |hol(gamma)|."""
    if not conns:
        return 0.0
    C = np.array([cc.cls for cc in conns], dtype=float)
    H = np.abs(np.array([cc.hol for cc in conns]))
    vals = np.abs(C @ np.asarray(c, dtype=complex)) / H
    return float(vals.max())


def agy_norm(s: TranslationSurface, c, L: float | None = None, rtol: float = 1e-6) -> NormValue:
    """AGY norm of the class c (coordinates in the surface marking).

    The sup is taken over saddle connections of length <= L; the value is
    marked stabilized when doubling the cutoff moves it by less than rtol.
    """
    if L is None:
        L = default_cutoff(s)
    v1 = agy_sup(c, saddle_connections(s, L))
    v2 = agy_sup(c, saddle_connections(s, 2 * L))
    return NormValue(v1, abs(v2 - v1) <= rtol * max(1.0, v1))


# ---------------------------------------------------------------------------
# splittings

@dataclass(frozen=True)
class Splitting:
    re_class: np.ndarray
    im_class: np.ndarray
    hperp_basis: np.ndarray      # rows
    pairing_matrix: np.ndarray   # cup form Q in the marking basis

    @property
    def area(self) -> float:
        return float(self.re_class @ self.pairing_matrix @ self.im_class)


def pairing(Q, a, b):
    return np.asarray(a) @ Q @ np.asarray(b)


def splitting(s: TranslationSurface, tol: float = 1e-12) -> Splitting:
    Q = cup_form(s)
    re, im = s.periods.real.copy(), s.periods.imag.copy()
    A = re @ Q @ im
    if abs(A) <= tol * max(1.0, np.abs(s.periods).max() ** 2):
        raise DegeneratePlane("tautological plane is isotropic (area 0)")
    H = null_space(np.vstack([re @ Q, im @ Q]))
    return Splitting(re, im, H.T, Q)


def project_balance(s: TranslationSurface, v, sp: Splitting | None = None) -> np.ndarray:
    """H-perp component of v along C Re(x) + C Im(x) + H-perp_C."""
    sp = sp or splitting(s)
    v = np.asarray(v, dtype=complex)
    Q = sp.pairing_matrix
    A = sp.area
    beta = (sp.re_class @ Q @ v) / A
    alpha = -(sp.im_class @ Q @ v) / A
    return v - alpha * sp.re_class - beta * sp.im_class


def balance_coords(s: TranslationSurface, w, sp: Splitting | None = None) -> np.ndarray:
    """Coordinates of a balance vector in the (orthonormal) H-perp basis."""
    sp = sp or splitting(s)
    return sp.hperp_basis @ np.asarray(w, dtype=complex)


def injectivity_scale(s: TranslationSurface, kappa6: float = 3.0) -> float:
    return systole(s) ** kappa6


# ---------------------------------------------------------------------------
# Q-boxes

def qgu_factor(g, tol: float = 1e-300):
    """(s, a, r) with g = lower(s) diag(a, 1/a) upper(r)."""
    g = np.asarray(g, dtype=float)
    a, b, c = g[0, 0], g[0, 1], g[1, 0]
    if abs(a) <= tol:
        raise ZeroCorner("upper-left entry vanishes")
    return c / a, a, b / a


def qgu_compose(s: float, a: float, r: float) -> np.ndarray:
    return np.array([[1.0, 0.0], [s, 1.0]]) @ np.diag([a, 1 / a]) @ np.array([[1.0, r], [0.0, 1.0]])


@dataclass(frozen=True)
class QBox:
    """ubar[-delta/tau, delta/tau] a[-delta, delta] u[-delta, delta]."""
    delta: float
    tau: float = 1.0

    def __post_init__(self):
        if self.delta <= 0 or self.tau < 1:
            raise ValueError("need delta > 0 and tau >= 1")

    def contains(self, g, slack: float = 1e-12) -> bool:
        g = np.asarray(g, dtype=float)
        if abs(np.linalg.det(g) - 1) > 1e-9 or g[0, 0] <= 0:
            return False
        s, a, r = qgu_factor(g)
        d = self.delta
        return (abs(s) <= d / self.tau * (1 + slack) + slack
                and abs(math.log(a)) <= d / 2 * (1 + slack) + slack
                and abs(r) <= d * (1 + slack) + slack)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        d = self.delta
        s = rng.uniform(-d / self.tau, d / self.tau)
        t = rng.uniform(-d, d)
        r = rng.uniform(-d, d)
        return qgu_compose(s, math.exp(t / 2), r)


def in_ball(g, T: float, slack: float = 1e-12) -> bool:
    return dist_e(g) <= T * (1 + slack)


def sample_ball(T: float, rng: np.random.Generator) -> np.ndarray:
    """Rejection sample of an element of B_G(T) (small T)."""
    while True:
        s, a, r = rng.uniform(-T, T), math.exp(rng.uniform(-T, T)), rng.uniform(-T, T)
        g = qgu_compose(s, a, r)
        if in_ball(g, T):
            return g


# ---------------------------------------------------------------------------
# batched norms for the experiments

EXPERIMENT_CUTOFF = 2.0


def experiment_cutoff(s: TranslationSurface, factor: float = EXPERIMENT_CUTOFF) -> float:
    """Cutoff for repeated norm evaluations: ``factor`` times the longest edge.

    Much cheaper than :func:`default_cutoff`; on a Delaunay triangulation the
    sup is almost always attained well inside it.  Use :func:`agy_norm` when
    a stabilization certificate is needed.
    """
    return factor * float(np.abs(s.tri).max())


def agy_norms(s: TranslationSurface, V, L: float | None = None) -> np.ndarray:
    """AGY norms of the columns of V (or of a single vector) on one connection list."""
    V = np.asarray(V, dtype=complex)
    single = V.ndim == 1
    if single:
        V = V[:, None]
    conns = saddle_connections(s, experiment_cutoff(s) if L is None else L)
    if not conns:
        out = np.zeros(V.shape[1])
    else:
        C = np.array([c.cls for c in conns], dtype=float)
        H = np.abs(np.array([c.hol for c in conns]))
        out = (np.abs(C @ V) / H[:, None]).max(axis=0)
    return out[0] if single else out


def act_vectors(g, V) -> np.ndarray:
    """Linear action of g in GL2(R) on complex cohomology vectors (Re, Im mixing)."""
    g = np.asarray(g, dtype=float)
    V = np.asarray(V, dtype=complex)
    re, im = V.real, V.imag
    return (g[0, 0] * re + g[0, 1] * im) + 1j * (g[1, 0] * re + g[1, 1] * im)


def cross_section(Q, y_from, y_to):
    """k in GL2(R) with k.y_from - y_to in H-perp(y_to); returns (k, k.y_from - y_to).

    Four linear conditions: the real and imaginary parts of the difference
    pair to zero with Re y_to and Im y_to under the cup form.
    """
    A, B = y_to.real, y_to.imag
    R, I = y_from.real, y_from.imag
    M = np.array([[A @ Q @ R, A @ Q @ I], [B @ Q @ R, B @ Q @ I]])
    area = A @ Q @ B
    top = np.linalg.solve(M, [0.0, B @ Q @ A])
    bot = np.linalg.solve(M, [area, 0.0])
    k = np.array([top, bot])
    return k, act_vectors(k, y_from) - y_to
