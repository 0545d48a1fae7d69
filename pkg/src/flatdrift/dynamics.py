"""Teichmueller flow with Delaunay renormalization.

The flow a_t acts on the periods; after each step the triangulation is made
Delaunay again and the marking is switched to the new cotree basis.  The
integer change-of-basis matrices multiply into the Kontsevich-Zorich cocycle
(acting on cohomology coordinates, ``v_new = M v_old``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import sympy

from .errors import ValidationError
from .surface import (
    DEFAULT_FLIP_CAP,
    TranslationSurface,
    a_t,
    apply_gl2,
    area,
    delaunay,
    remark,
    systole,
    u_r,
    ubar_s,
)


def _int_matmul(A, B):
    """Exact product of integer matrices stored as object arrays."""
    return np.array(A, dtype=object).dot(np.array(B, dtype=object))


def identity_obj(n: int):
    M = np.zeros((n, n), dtype=object)
    for i in range(n):
        M[i, i] = 1
    return M


@dataclass(frozen=True)
class FlowState:
    surface: TranslationSurface
    frame: np.ndarray        # columns: tracked cohomology vectors (marking coordinates)
    cocycle: np.ndarray      # exact integer matrix, v_now = cocycle @ v_start
    clock: float = 0.0

    @classmethod
    def start(cls, s: TranslationSurface, frame=None) -> "FlowState":
        s, _ = remark(delaunay(s))
        n = s.dim
        if frame is None:
            frame = np.eye(n)
        return cls(s, np.asarray(frame, dtype=float), identity_obj(n), 0.0)


def _renormalize(s: TranslationSurface, max_flips: int):
    s = delaunay(s, max_flips=max_flips)
    return remark(s)


def act(state: FlowState, g, max_flips: int = DEFAULT_FLIP_CAP) -> FlowState:
    s, M = _renormalize(apply_gl2(g, state.surface), max_flips)
    return FlowState(s, M.astype(float) @ state.frame,
                     _int_matmul(M, state.cocycle), state.clock)


def flow(state: FlowState, t: float, step: float = 0.5,
         max_flips: int = DEFAULT_FLIP_CAP, time_scale: float = 1.0) -> FlowState:
    """Apply a_t in steps of at most ``step``; ``time_scale=2`` uses diag(e^t, e^-t)."""
    if not 0 < step <= 0.5:
        raise ValidationError("step must lie in (0, 0.5]")
    if t == 0:
        return state
    n = max(1, math.ceil(abs(t) / step - 1e-12))
    dt = t / n
    s, frame, coc = state.surface, state.frame, state.cocycle
    g = a_t(dt * time_scale)
    for _ in range(n):
        s, M = _renormalize(apply_gl2(g, s), max_flips)
        frame = M.astype(float) @ frame
        coc = _int_matmul(M, coc)
    return FlowState(s, frame, coc, state.clock + t)


def horocycle(state: FlowState, r: float, max_flips: int = DEFAULT_FLIP_CAP) -> FlowState:
    return act(state, u_r(r), max_flips) if r else state


def opposite_horocycle(state: FlowState, s: float, max_flips: int = DEFAULT_FLIP_CAP) -> FlowState:
    return act(state, ubar_s(s), max_flips) if s else state


def marking_change(s_from: TranslationSurface, s_to: TranslationSurface, tol: float = 1e-6):
    """Integer R with ``x_to = R x_from`` for two markings of the same triangulation.

    Triangles are matched by their edge vectors (up to cyclic rotation); the
    surfaces must be equal as triangulated flat surfaces.
    """
    F = s_from.n_triangles
    match = {}
    used = set()
    for t in range(F):
        for u in range(F):
            if u in used:
                continue
            for rot in range(3):
                if np.all(np.abs(np.roll(s_from.tri[u], -rot) - s_to.tri[t]) < tol):
                    match[t] = (u, rot)
                    used.add(u)
                    break
            if t in match:
                break
        if t not in match:
            raise ValidationError(f"triangle {t} has no match")
    n = s_to.dim
    R = np.zeros((n, n), dtype=object)
    seen = [False] * n
    for t in range(F):
        u, rot = match[t]
        for i in range(3):
            c = s_to.cls[t, i]
            nz = np.flatnonzero(c)
            if len(nz) == 1 and c[nz[0]] == 1 and not seen[nz[0]]:
                R[nz[0]] = [int(v) for v in s_from.cls[u, (i + rot) % 3]]
                seen[nz[0]] = True
    return R


# ---------------------------------------------------------------------------
# Lyapunov exponents

def generic_surface(seed: int, base: TranslationSurface | None = None,
                    size: float = 0.05) -> TranslationSurface:
    """Random small period perturbation of a base surface, area one."""
    from .surface import rebuild_from_periods
    from .tori import Prototype, prototype_float
    if base is None:
        base = prototype_float(Prototype(0, 2, 1, 0))
    rng = np.random.default_rng(seed)
    base = delaunay(base)
    x = base.periods
    scale = np.abs(x).max()
    for _ in range(100):
        dx = rng.uniform(-1, 1, x.shape) + 1j * rng.uniform(-1, 1, x.shape)
        try:
            s = rebuild_from_periods(base, x + size * scale * dx)
            break
        except ValidationError:
            size /= 2
    else:  # pragma: no cover
        raise ValidationError("could not perturb surface")
    k = 1 / math.sqrt(area(s))
    return apply_gl2(np.diag([k, k]), s)


def lyapunov_estimate(s: TranslationSurface, total_time: float = 2000.0, renorm: float = 0.5,
                      n_vectors: int | None = None, seed: int = 0,
                      max_flips: int = DEFAULT_FLIP_CAP, time_scale: float = 1.0,
                      normalize: bool = True) -> np.ndarray:
    """Exponents of the KZ cocycle along the a_t orbit of s, sorted descending.

    A random frame is pushed by the cocycle and re-orthonormalized by QR every
    ``renorm`` time units; log growth rates are divided by flow time, then (by
    default) by the top one.
    """
    if total_time < 100:
        raise ValidationError("total_time must be at least 100")
    if not 0.1 <= renorm <= 1:
        raise ValidationError("renorm must lie in [0.1, 1]")
    rng = np.random.default_rng(seed)
    s, _ = remark(delaunay(s))
    n = s.dim
    k = n if n_vectors is None else n_vectors
    V, _ = np.linalg.qr(rng.standard_normal((n, k)))
    # sub-steps keep each flow increment at most 0.5
    sub = max(1, math.ceil(renorm / 0.5 - 1e-12))
    g = a_t(renorm / sub * time_scale)
    steps = int(round(total_time / renorm))
    logs = np.zeros(k)
    for _ in range(steps):
        for _ in range(sub):
            s, M = _renormalize(apply_gl2(g, s), max_flips)
            V = M @ V
        V, R = np.linalg.qr(V)
        d = np.abs(np.diag(R))
        logs += np.log(d)
        # keep the frame oriented deterministically
        V = V * np.sign(np.diag(R))
    ex = np.sort(logs / (steps * renorm))[::-1]
    if normalize:
        ex = ex / ex[0]
    return ex


# ---------------------------------------------------------------------------
# nondivergence

def systole_samples(s: TranslationSurface, t: float, n_samples: int, seed: int = 0,
                    max_flips: int = DEFAULT_FLIP_CAP) -> np.ndarray:
    """Systoles of a_t u_r s for r drawn uniformly from [0, 1]."""
    rng = np.random.default_rng(seed)
    rs = np.sort(rng.uniform(0, 1, n_samples))
    out = np.empty(n_samples)
    at = a_t(t)
    for k, r in enumerate(rs):
        y = delaunay(apply_gl2(at @ u_r(r), s), max_flips=max_flips)
        out[k] = systole(y)
    return out


def nondivergence_fraction(s: TranslationSurface, t: float, eps: float, n_samples: int = 1000,
                           seed: int = 0) -> float:
    if n_samples < 100:
        raise ValidationError("n_samples must be at least 100")
    return float(np.mean(systole_samples(s, t, n_samples, seed) < eps))


def fit_power_law(eps_grid, fractions):
    """Least squares fit of log(fraction) = log C + kappa log(eps); zeros dropped."""
    e = np.asarray(eps_grid, float)
    f = np.asarray(fractions, float)
    m = f > 0
    if m.sum() < 3:
        return float("nan"), float("nan"), float("nan")
    X, Y = np.log(e[m]), np.log(f[m])
    kappa, logC = np.polyfit(X, Y, 1)
    pred = logC + kappa * X
    ss_res = float(np.sum((Y - pred) ** 2))
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(kappa), float(math.exp(logC)), r2


# ---------------------------------------------------------------------------
# conjugation polynomials

R = sympy.Symbol("R")


def conjugation_polynomials(S, varpi: float, t: float, display_sign: bool = False):
    """Entries of h^{-1} S h, h = a_{5 varpi t} u_R, as polynomials in R.

    With ``display_sign=True`` the substitution R -> -R is applied, which is
    the sign pattern in which the coefficients are often written down; the
    leading coefficients are then +P21 for P11 and -P21 for P12, P22.
    """
    S = [[v if isinstance(v, sympy.Basic) else sympy.Rational(float(v)) for v in row]
         for row in np.asarray(S, dtype=object)]
    E = sympy.exp(sympy.Rational(float(5 * varpi * t)))
    S11, S12, S21, S22 = S[0][0], S[0][1], S[1][0], S[1][1]
    r = -R if display_sign else R
    P = {
        "P11": sympy.expand(S11 - E * S21 * r),
        "P12": sympy.expand(-E * S21 * r**2 + (S11 - S22) * r + S12 / E),
        "P21": sympy.expand(E * S21 + 0 * R),
        "P22": sympy.expand(S22 + E * S21 * r),
    }
    return {k: sympy.Poly(v, R) for k, v in P.items()}


def evaluate_polynomials(P, r: float) -> np.ndarray:
    return np.array([[float(P["P11"].eval(r)), float(P["P12"].eval(r))],
                     [float(P["P21"].eval(r)), float(P["P22"].eval(r))]])


def direct_conjugation(S, varpi: float, t: float, r: float) -> np.ndarray:
    h = a_t(5 * varpi * t) @ u_r(r)
    return np.linalg.inv(h) @ np.asarray(S, float) @ h
