"""Skeletons, transversal spines, local densities and the drift experiments.

Points of a skeleton are stored as ``(spine index i, b)`` with ``b`` in the
bone over ``w_i``; the surface is ``b.(x + w_i)``.  Balance vectors are kept
in the marking of the surface they live on and are pushed through every
renormalization together with it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from .arithmetic import chart_difference
from .dynamics import _renormalize
from .errors import BudgetExceeded, LoopStalled, NotInSkeleton, ResolutionTooCoarse, ValidationError
from .norms import (
    act_vectors,
    agy_norms,
    cross_section,
    dist_e,
    experiment_cutoff,
    project_balance,
    sample_ball,
    splitting,
)
from .surface import (
    DEFAULT_FLIP_CAP,
    TranslationSurface,
    a_t,
    apply_gl2,
    cup_form,
    delaunay,
    rebuild_from_periods,
    remark,
    systole,
    u_r,
)

E2 = math.exp(-2.0)


# ---------------------------------------------------------------------------
# transport

def advance(s: TranslationSurface, V, g, max_flips: int = DEFAULT_FLIP_CAP):
    """Apply g to the surface and to the columns of V, then renormalize both."""
    s = apply_gl2(g, s)
    V = act_vectors(g, V)
    s, M = _renormalize(s, max_flips)
    return s, M.astype(float) @ V


def advance_flow(s: TranslationSurface, V, t: float, step: float = 0.5,
                 max_flips: int = DEFAULT_FLIP_CAP):
    """a_t in sub-steps of at most ``step``."""
    if t == 0:
        return s, V
    n = max(1, math.ceil(abs(t) / step - 1e-12))
    g = a_t(t / n)
    for _ in range(n):
        s, V = advance(s, V, g, max_flips)
    return s, V


def run_path(s: TranslationSurface, V, path):
    """Apply a path: matrices, or ``("a", t)`` flow segments, first entry first."""
    for mv in path:
        if isinstance(mv, tuple) and mv and mv[0] == "a":
            s, V = advance_flow(s, V, mv[1])
        else:
            s, V = advance(s, V, np.asarray(mv, float))
    return s, V


def path_matrix(path) -> np.ndarray:
    g = np.eye(2)
    for mv in path:
        m = a_t(mv[1]) if isinstance(mv, tuple) and mv and mv[0] == "a" else np.asarray(mv, float)
        g = m @ g
    return g


def _as_path(g):
    if g is None:
        return []
    if isinstance(g, np.ndarray) and g.shape == (2, 2):
        return [g]
    if isinstance(g, (list, tuple)) and len(g) == 2 and np.ndim(g[0]) == 1 and np.ndim(g) == 2:
        return [np.asarray(g, float)]
    return list(g)


# ---------------------------------------------------------------------------
# bones

def bone_gap(h, r_u: float) -> float:
    """min over r in [-r_u, r_u] of |h u_{-r} - e|."""
    h = np.asarray(h, float)

    def f(r):
        return dist_e(h @ u_r(-r))

    best = min(f(-r_u), f(0.0), f(r_u))
    if r_u > 0:
        res = minimize_scalar(f, bounds=(-r_u, r_u), method="bounded", options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def in_bone(h, r_G: float, r_u: float, slack: float = 1e-12) -> bool:
    return bone_gap(h, r_u) <= r_G * (1 + slack) + slack


def sample_bone(r_G: float, r_u: float, rng: np.random.Generator) -> np.ndarray:
    """Element of B_G(r_G) u_[-r_u, r_u]: ball sample times a uniform horocycle time."""
    return sample_ball(r_G, rng) @ u_r(rng.uniform(-r_u, r_u))


def bone_volume(r_G: float, r_u: float, n: int = 20000, seed: int = 0) -> float:
    """Monte-Carlo Haar volume of a bone in (s, log a, r) coordinates."""
    rng = np.random.default_rng(seed)
    box = (2 * (r_G + r_u)) * (2 * r_G) * (2 * r_G)
    hits = 0
    for _ in range(n):
        s, t, r = rng.uniform(-r_G, r_G), rng.uniform(-r_G, r_G), rng.uniform(-r_G - r_u, r_G + r_u)
        g = np.array([[1.0, 0.0], [s, 1.0]]) @ np.diag([math.exp(t), math.exp(-t)]) @ u_r(r)
        hits += in_bone(g, r_G, r_u)
    return box * hits / n


# ---------------------------------------------------------------------------
# skeletons

class SkeletonPoint(NamedTuple):
    index: int
    b: np.ndarray


@dataclass
class Skeleton:
    """Base surface, spine of balance vectors (row 0 is zero) and (r_G, r_u) bones."""
    base: TranslationSurface
    spine: np.ndarray
    r_G: float
    r_u: float
    kappa6: float = 3.0
    _links: dict = field(default_factory=dict, repr=False)
    _surfs: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.spine = np.atleast_2d(np.asarray(self.spine, dtype=complex))
        if self.spine.shape[1] != self.base.dim:
            raise ValidationError("spine vectors must live in the base marking")
        if np.abs(self.spine[0]).max() != 0:
            raise ValidationError("spine must start with the zero vector")
        self.Q = cup_form(self.base)

    @property
    def size(self) -> int:
        return self.spine.shape[0]

    def periods(self, i: int) -> np.ndarray:
        return self.base.periods + self.spine[i]

    def surface(self, i: int) -> TranslationSurface:
        if i not in self._surfs:
            self._surfs[i] = rebuild_from_periods(self.base, self.periods(i))
        return self._surfs[i]

    def link(self, i: int, j: int):
        """(k_ij, w'_ij): k_ij.(x + w_j) = (x + w_i) + w'_ij with w'_ij in H-perp(x + w_i)."""
        key = (i, j)
        if key not in self._links:
            self._links[key] = cross_section(self.Q, self.periods(j), self.periods(i))
        return self._links[key]

    def injectivity(self) -> float:
        return systole(self.base) ** self.kappa6

    def check(self, tol: float = 1e-8) -> dict:
        """Verify the skeleton invariants; returns the measured quantities."""
        sp = splitting(self.base)
        scale = max(1.0, float(np.abs(self.base.periods).max()))
        for w in self.spine:
            if np.abs(project_balance(self.base, w, sp) - w).max() > tol * scale:
                raise ValidationError("spine vector is not in the balance space")
        inj = self.injectivity()
        if 3 * self.r_G >= inj / 3:
            raise ValidationError(f"bone radius 3 r_G = {3 * self.r_G:.3g} exceeds inj/3 = {inj / 3:.3g}")
        diffs = self.spine[:, None, :] - self.spine[None, :, :]
        m = self.size
        if m > 1:
            iu = np.triu_indices(m, 1)
            dn = agy_norms(self.base, diffs[iu].T)
            diam = float(dn.max())
        else:
            dn, diam = np.zeros(0), 0.0
        if diam >= inj / 3:
            raise ValidationError(f"spine diameter {diam:.3g} exceeds inj/3 = {inj / 3:.3g}")
        # distinct bones: the G-move relating x + w_j to x + w_i leaves a
        # balance residue that a bone cannot absorb
        norms = agy_norms(self.base, self.spine.T) if m > 1 else np.zeros(1)
        reach = 4 * (self.r_G + self.r_u)
        min_sep = math.inf
        for i in range(m):
            for j in range(i + 1, m):
                _, wp = self.link(i, j)
                sep = float(agy_norms(self.base, wp))
                min_sep = min(min_sep, sep)
                if sep <= reach * (norms[i] + norms[j]) + tol:
                    raise ValidationError(f"bones over spine points {i} and {j} may overlap")
        return {"injectivity_scale": inj, "spine_diameter": diam,
                "min_separation": min_sep if m > 1 else None, "size": m}

    def contains(self, z: SkeletonPoint) -> bool:
        return 0 <= z.index < self.size and in_bone(z.b, self.r_G, self.r_u)


def toy_skeleton(x: TranslationSurface, n_points: int, radius_frac: float = 0.25,
                 r_frac: float = 0.01, seed: int = 0, kappa6: float = 3.0) -> Skeleton:
    """Random spine inside the injectivity ball of x.

    Spine norms are drawn log-uniformly in [radius/50, radius] with radius =
    radius_frac * inj/3 (inj = systole^kappa6); bones are r_frac * inj.
    Candidates that break disjointness are dropped.
    """
    x, _ = remark(delaunay(x))
    rng = np.random.default_rng(seed)
    inj = systole(x) ** kappa6
    radius = radius_frac * inj / 3 / 2
    r = r_frac * inj
    sp = splitting(x)
    H = sp.hperp_basis
    spine = [np.zeros(x.dim, dtype=complex)]
    tries = 0
    while len(spine) < n_points and tries < 50 * n_points:
        tries += 1
        c = rng.standard_normal(H.shape[0]) + 1j * rng.standard_normal(H.shape[0])
        w = c @ H
        w = w / agy_norms(x, w) * radius * math.exp(rng.uniform(math.log(1 / 50), 0))
        cand = Skeleton(x, np.array(spine + [w]), r, r, kappa6)
        try:
            cand.check()
        except ValidationError:
            continue
        spine.append(w)
    sk = Skeleton(x, np.array(spine), r, r, kappa6)
    sk.check()
    return sk


def evenly_spaced_skeleton(x: TranslationSurface, n_points: int, spacing_frac: float = 0.2,
                           r_frac: float = 0.005, seed: int = 0, kappa6: float = 3.0) -> Skeleton:
    """Spine k * v, k = 0..n-1, for one balance direction v (the synthetic case)."""
    x, _ = remark(delaunay(x))
    rng = np.random.default_rng(seed)
    inj = systole(x) ** kappa6
    H = splitting(x).hperp_basis
    c = rng.standard_normal(H.shape[0]) + 1j * rng.standard_normal(H.shape[0])
    v = c @ H
    step = spacing_frac * inj / 3 / max(1, n_points - 1) / 2
    v = v / agy_norms(x, v) * step
    spine = np.array([k * v for k in range(n_points)])
    sk = Skeleton(x, spine, r_frac * inj, r_frac * inj, kappa6)
    sk.check()
    return sk


# ---------------------------------------------------------------------------
# transversal spines and local density

@dataclass
class Transversal:
    surface: TranslationSurface   # gz
    indices: list                 # spine indices j of the kept vectors
    vectors: np.ndarray           # columns, marking of gz
    norms: np.ndarray
    L: float                      # systole(gz)^kappa6
    candidates: int               # bone-compatible spine points before the norm cut


def _bone_candidates(skel: Skeleton, z: SkeletonPoint):
    if not skel.contains(z):
        raise NotInSkeleton(f"point with spine index {z.index} is not in its bone")
    i = z.index
    js, W, ks = [], [], []
    for j in range(skel.size):
        if j == i:
            continue
        k, wp = skel.link(i, j)
        if in_bone(z.b @ k, skel.r_G, skel.r_u):
            js.append(j)
            W.append(wp)
            ks.append(k)
    return js, W, ks


def _density_from(norms, L, s, gamma) -> float:
    keep = (norms > 0) & (norms < L)
    if keep.any():
        return float(np.sum(norms[keep] ** (-gamma)))
    return float(systole(s) ** (-gamma))


def transversal_spine(skel: Skeleton, g, z: SkeletonPoint) -> Transversal:
    """F_{g,z}: balance vectors w at gz with 0 < |w| < L(gz) and gz + w in g.E."""
    js, W, _ = _bone_candidates(skel, z)
    n = skel.base.dim
    V = np.array(W, dtype=complex).T if W else np.zeros((n, 0), dtype=complex)
    s, V = advance(skel.surface(z.index), V, z.b)
    s, V = run_path(s, V, _as_path(g))
    L = systole(s) ** skel.kappa6
    norms = agy_norms(s, V) if V.shape[1] else np.zeros(0)
    keep = (norms > 0) & (norms < L)
    return Transversal(s, [j for j, k in zip(js, keep) if k], V[:, keep], norms[keep],
                       float(L), len(js))


def local_density(skel: Skeleton, g, z: SkeletonPoint, gamma: float) -> float:
    """Sum of |w|^-gamma over F_{g,z}, or systole(gz)^-gamma when it is empty."""
    T = transversal_spine(skel, g, z)
    if len(T.indices):
        return float(np.sum(T.norms ** (-gamma)))
    return float(systole(T.surface) ** (-gamma))


# ---------------------------------------------------------------------------
# contraction

class ProbeResult(NamedTuple):
    t_grid: list
    ratios: list
    t4: float | None
    shortened: int = 0   # norm evaluations that needed a reduced cutoff


def _probe_norm(S: TranslationSurface, v) -> tuple[float, bool]:
    """Experiment norm of v; deep in a cusp the cutoff is halved until the search fits."""
    L = experiment_cutoff(S)
    while True:
        try:
            return float(agy_norms(S, v, L=L)), L < experiment_cutoff(S)
        except BudgetExceeded:
            L /= 2
            if L < systole(S):
                raise


def contraction_probe(s: TranslationSurface, gamma: float, w, t_grid: Sequence[float],
                      n_r: int = 100, seed: int = 0, stop_early: bool = False) -> ProbeResult:
    """Monte-Carlo int_0^1 |a_t u_r w|^-gamma dr / |w|^-gamma on a time grid.

    r is stratified (one uniform draw per cell of [0, 1]).  With
    ``stop_early`` the grid is cut after the first contracting time.
    """
    if not 0 < gamma < 1:
        raise ValidationError("gamma must lie in (0, 1)")
    w = np.asarray(w, dtype=complex)
    if not np.any(w):
        raise ValidationError("w must be nonzero")
    ts = sorted(float(t) for t in t_grid)
    if ts and ts[0] < 0:
        raise ValidationError("grid times must be >= 0")
    rng = np.random.default_rng(seed)
    rs = (np.arange(n_r) + rng.uniform(0, 1, n_r)) / n_r
    s0 = delaunay(s)
    n0 = float(agy_norms(s0, w))
    states = [advance(s0, w[:, None], u_r(r)) for r in rs]
    clock = 0.0
    out_t, out_ratio = [], []
    t4 = None
    shortened = 0
    for t in ts:
        states = [advance_flow(S, V, t - clock) for S, V in states]
        clock = t
        got = [_probe_norm(S, V[:, 0]) for S, V in states]
        vals = np.array([g[0] for g in got])
        shortened += sum(g[1] for g in got)
        ratio = float(np.mean(vals ** (-gamma)) / n0 ** (-gamma))
        out_t.append(t)
        out_ratio.append(ratio)
        if t4 is None and ratio <= E2:
            t4 = t
            if stop_early:
                break
    return ProbeResult(out_t, out_ratio, t4, shortened)


def random_balance_vector(s: TranslationSurface, seed: int = 0, size: float = 1.0) -> np.ndarray:
    """Random element of H-perp_C(s) with AGY norm ``size``."""
    rng = np.random.default_rng(seed)
    H = splitting(s).hperp_basis
    c = rng.standard_normal(H.shape[0]) + 1j * rng.standard_normal(H.shape[0])
    w = c @ H
    return w / agy_norms(s, w) * size


def worst_case_profile(gamma: float, n: int) -> float:
    """sum_{k=1}^{n} 1 / (k^gamma + 1), summed directly."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    k = np.arange(1, n + 1, dtype=float)
    return math.fsum(1.0 / (k ** gamma + 1.0))


def synthetic_density(tau: float, r: float, gamma: float, n: int, lam: float = 1 / 3) -> float:
    """Density at a_tau of the family y_m = -(m/n) b + i b, m = 0..n, shifted by u_r.

    |a_tau u_r y_m| is modelled by e^{(1-lam) tau}|r - m/n| |b| + e^{-(1+lam) tau}|b|
    with |b| = 1, each part raised to gamma separately.
    """
    m = np.arange(0, n + 1, dtype=float) / n
    A = math.exp((1 - lam) * gamma * tau)
    B = math.exp(-(1 + lam) * gamma * tau)
    return math.fsum(1.0 / (A * np.abs(r - m) ** gamma + B))


def synthetic_contraction_probe(gamma: float, n: int, t_grid: Sequence[float],
                                lam: float = 1 / 3, time_scale: float = 0.5,
                                n_shift: int = 9) -> ProbeResult:
    """Worst case over shifts r of density(a_t u_r F) / density(F) for the even family.

    Grid times use the diag(e^{t/2}, e^{-t/2}) convention and are converted
    with ``time_scale`` to the model's e^t convention.  Shifts are taken on
    family points m/n spread over [0, 1].
    """
    m = np.arange(0, n + 1, dtype=float) / n
    f0 = math.fsum((1.0 + m) ** (-gamma))
    shifts = sorted({round(q * n) / n for q in np.linspace(0, 1, n_shift)})
    ts, rats, t4 = [], [], None
    for t in sorted(t_grid):
        tau = time_scale * t
        worst = max(synthetic_density(tau, r, gamma, n, lam) for r in shifts)
        ratio = worst / f0
        ts.append(float(t))
        rats.append(ratio)
        if t4 is None and ratio <= E2:
            t4 = float(t)
    return ProbeResult(ts, rats, t4)


# ---------------------------------------------------------------------------
# random walk

@dataclass(frozen=True)
class DriftWalk:
    """nu = law of a_m u_r, r uniform in [0, 1]; k-fold convolution."""
    gamma: float
    m: float
    k: int

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValidationError("gamma must lie strictly between 0 and 1")
        if self.m <= 0:
            raise ValidationError("step time m must be positive")
        if self.k < 0:
            raise ValidationError("k must be >= 0")

    def sample(self, rng: np.random.Generator) -> list:
        return [float(r) for r in rng.uniform(0, 1, self.k)]

    def path(self, rs) -> list:
        out = []
        for r in rs:
            out += [u_r(r), ("a", self.m)]
        return out


def sample_leb(skel: Skeleton, rng: np.random.Generator) -> SkeletonPoint:
    """Leb_E: equal bones, so a uniform spine index and a bone sample."""
    i = int(rng.integers(skel.size))
    return SkeletonPoint(i, sample_bone(skel.r_G, skel.r_u, rng))


def leb_weights(skel: Skeleton) -> np.ndarray:
    vol = bone_volume(skel.r_G, skel.r_u, n=2000)
    v = np.full(skel.size, vol)
    return v / v.sum()


def density_trajectory(skel: Skeleton, z: SkeletonPoint, walk: DriftWalk, rs, gamma: float):
    """f(h_j, z) for the prefixes h_j of one walk sample, j = 0..k."""
    js, W, _ = _bone_candidates(skel, z)
    n = skel.base.dim
    V = np.array(W, dtype=complex).T if W else np.zeros((n, 0), dtype=complex)
    s, V = advance(skel.surface(z.index), V, z.b)

    def f_now(s, V):
        L = systole(s) ** skel.kappa6
        norms = agy_norms(s, V) if V.shape[1] else np.zeros(0)
        return _density_from(norms, L, s, gamma)

    out = [f_now(s, V)]
    for r in rs:
        s, V = advance(s, V, u_r(r))
        s, V = advance_flow(s, V, walk.m)
        out.append(f_now(s, V))
    return out


class WalkResult(NamedTuple):
    k: list
    lhs: list
    base_integral: float
    decay: list
    residual_C: list
    mass: float
    n_mc: int


def random_walk_expectation(skel: Skeleton, walk: DriftWalk, n_mc: int = 40,
                            seed: int = 0) -> WalkResult:
    """Monte-Carlo lhs_j = E f(h, z) for h ~ nu^(j), z ~ Leb_E, j = 0..k.

    Reported beside e^{-j} E f(e, z) and the measured additive constant
    C_j = (lhs_j - e^{-j} E f(e, z)) / |F|.
    """
    rng = np.random.default_rng(seed)
    F = np.zeros((n_mc, walk.k + 1))
    for t in range(n_mc):
        z = sample_leb(skel, rng)
        rs = walk.sample(rng)
        F[t] = density_trajectory(skel, z, walk, rs, walk.gamma)
    lhs = F.mean(axis=0)
    base = float(lhs[0])
    ks = list(range(walk.k + 1))
    decay = [math.exp(-j) * base for j in ks]
    C = [(float(l) - d) / skel.size for l, d in zip(lhs, decay)]
    mass = float(leb_weights(skel).sum())
    return WalkResult(ks, [float(v) for v in lhs], base, decay, C, mass, n_mc)


# ---------------------------------------------------------------------------
# horocycle scan

class ScanResult(NamedTuple):
    r: np.ndarray
    spines: dict              # sample index -> list of (partner index, |w|)
    densities: np.ndarray
    max_density: float
    coincidences: list        # (s, s', |k - e|) with no transversal part
    cap: float
    cap_ok: bool
    unknown: int


def horocycle_transversal_scan(x: TranslationSurface, t: float, kappa: float, n_samples: int,
                               gamma: float = 0.9, kappa6: float = 3.0, cap_const: float = 1.0,
                               sig_tol: float = 0.05) -> ScanResult:
    """Sample a_t u_r x on a regular r-grid and collect transversal near-coincidences.

    Pairs of samples whose Delaunay signatures are close are written in one
    period chart, z' = k z + w; they are coincidences when |k - e| < e^{-kappa t}
    and, when |w| > 0, contribute w to F_z(t) if |w| < systole(z).  Samples
    closer than one unit along the horocycle are single-linkage neighbours
    and never counted.
    """
    if n_samples < 2:
        raise ValidationError("need at least two samples")
    rad = math.exp(-kappa * t)
    spacing = math.exp(t) / (n_samples - 1)
    if spacing > rad:
        raise ResolutionTooCoarse(f"sample spacing {spacing:.3g} exceeds e^(-kappa t) = {rad:.3g}")
    rs = np.linspace(0.0, 1.0, n_samples)
    x = delaunay(x)
    surfs = []
    for r in rs:
        s, _ = advance(x, np.zeros((x.dim, 0)), u_r(r))
        s, _ = advance_flow(s, np.zeros((x.dim, 0)), t)
        surfs.append(s)
    sig = np.array([np.concatenate([np.sort(np.abs(s.tri.real).ravel()),
                                    np.sort(np.abs(s.tri.imag).ravel())]) for s in surfs])
    tree = cKDTree(sig)
    scale = float(min(np.abs(s.tri).min() for s in surfs))
    spines: dict = {}
    coinc = []
    unknown = 0
    sys_ = np.array([systole(s) for s in surfs])
    wtol = 1e-7
    for a, b in sorted(tree.query_pairs(sig_tol * scale)):
        if math.exp(t) * abs(rs[a] - rs[b]) < 1.0:
            continue
        d = chart_difference(surfs[a], surfs[b])
        if d is None:
            unknown += 1
            continue
        kdist = dist_e(d.k)
        if kdist >= rad:
            continue
        wn = float(agy_norms(delaunay(surfs[a]), act_vectors(np.linalg.inv(d.k), d.w)))
        if wn <= wtol:
            coinc.append((int(a), int(b), kdist))
            continue
        for p, q in ((a, b), (b, a)):
            if wn < sys_[p]:
                spines.setdefault(int(p), []).append((int(q), wn))
    dens = np.array([
        sum(n ** (-gamma) for _, n in spines[k]) if k in spines else sys_[k] ** (-gamma)
        for k in range(n_samples)])
    cap = cap_const * math.exp((3 * kappa6 + 1) * t)
    cap_ok = all(len(v) <= cap for v in spines.values())
    return ScanResult(rs, spines, dens, float(dens.max()), coinc, cap, cap_ok, unknown)


# ---------------------------------------------------------------------------
# bootstrap

class BootstrapRecord(NamedTuple):
    iteration: int
    spine_size: int
    max_density: float
    threshold: float
    stopped: bool
    relation_error: float
    observation_error: float
    note: str


def _max_density(skel: Skeleton, gamma: float) -> float:
    return max(local_density(skel, None, SkeletonPoint(j, np.eye(2)), gamma)
               for j in range(skel.size))


def _observe(skel: Skeleton, z: SkeletonPoint, path):
    """Transport the bone-compatible spine translates and the raw spine differences."""
    js, W, ks = _bone_candidates(skel, z)
    i = z.index
    n = skel.base.dim
    D = [skel.spine[j] - skel.spine[i] for j in js]
    cols = W + D
    V = np.array(cols, dtype=complex).T if cols else np.zeros((n, 0), dtype=complex)
    s, V = advance(skel.surface(i), V, z.b)
    s, V = run_path(s, V, path)
    m = len(js)
    return s, js, ks, V[:, :m], V[:, m:]


def dimension_bootstrap(skel: Skeleton, gamma: float, eps: float, m: float,
                        n_walk: int = 8, max_iter: int = 10, seed: int = 0,
                        stall_limit: int = 3) -> list:
    """Toy rendition of the dimension-improvement loop; returns one record per iteration.

    Each round: measure max f(e, .) over spine points and test
    max f <= 2 |F|^{1+eps}; otherwise draw ``n_walk`` pairs (z, a_m u_r),
    keep the one whose box around gz holds the most observed points, and
    rebuild the skeleton at gz from them.  The relation
    w_jk - w_ik = h_k h_i^-1 w_ji is recomputed on the observed points.
    Raises LoopStalled (with ``.trace``) when neither |F| grows nor the
    density drops by 1% for ``stall_limit`` rounds.
    """
    if not 0 < gamma < 1:
        raise ValidationError("gamma must lie in (0, 1)")
    if max_iter > 10:
        raise ValidationError("toy scale: at most 10 iterations")
    if skel.size > 1000:
        raise ValidationError("toy scale: |F_0| <= 1000")
    rng = np.random.default_rng(seed)
    trace: list = []
    stalled = 0
    rel_err = obs_err = 0.0
    prev = None
    for it in range(max_iter + 1):
        skel.check()
        fmax = _max_density(skel, gamma)
        thr = 2 * skel.size ** (1 + eps)
        stop = fmax <= thr
        note = "trivial spine" if skel.size == 1 else ("stopping condition met" if stop else "")
        trace.append(BootstrapRecord(it, skel.size, fmax, thr, bool(stop or skel.size == 1),
                                     rel_err, obs_err, note))
        if skel.size == 1 or stop or it == max_iter:
            break
        if prev is not None:
            grew = skel.size > prev[0]
            dropped = fmax < 0.99 * prev[1]
            stalled = 0 if (grew or dropped) else stalled + 1
            if stalled >= stall_limit:
                err = LoopStalled(f"no progress for {stall_limit} iterations")
                err.trace = trace
                raise err
        prev = (skel.size, fmax)
        best = None
        for _ in range(n_walk):
            z = sample_leb(skel, rng)
            r = float(rng.uniform(0, 1))
            path = [u_r(r), ("a", m)]
            s, js, ks, V, Dv = _observe(skel, z, path)
            L = systole(s) ** skel.kappa6
            norms = agy_norms(s, V) if V.shape[1] else np.zeros(0)
            inbox = (norms > 0) & (norms < L)
            cnt = int(inbox.sum())
            if best is None or cnt > best[0]:
                best = (cnt, z, path, s, js, ks, V, Dv, inbox)
        cnt, z, path, s, js, ks, V, Dv, inbox = best
        g = _path_matrix(path) @ z.b
        # local observation: h_j = g b k_ij, observed points P_j = gz + V_j
        hs = [g] + [g @ k for k in ks]
        P = [s.periods] + [s.periods + V[:, c] for c in range(V.shape[1])]
        rel_err = _relation_error(hs, P)
        # w_{j, base} against the transported spine difference h_base (w_j - w_i)
        obs = [act_vectors(hs[0] @ np.linalg.inv(hs[c + 1]), P[c + 1]) - P[0] for c in range(V.shape[1])]
        obs_err = max((float(np.abs(o - Dv[:, c]).max()) for c, o in enumerate(obs)), default=0.0)
        cols = np.flatnonzero(inbox)
        skel = _rebuild(s, [V[:, c] for c in cols[np.argsort(norms[cols], kind="stable")]],
                        skel.r_G, skel.r_u, skel.kappa6)
    return trace


def _rebuild(s: TranslationSurface, vectors, r_G: float, r_u: float, kappa6: float) -> Skeleton:
    """Skeleton at s from observed vectors, shortest first, keeping only admissible ones.

    Bones shrink to a hundredth of the new injectivity scale if needed.
    """
    inj = systole(s) ** kappa6
    r_G, r_u = min(r_G, 0.01 * inj), min(r_u, 0.01 * inj)
    spine = [np.zeros(s.dim, dtype=complex)]
    for v in vectors:
        cand = Skeleton(s, np.array(spine + [v]), r_G, r_u, kappa6)
        try:
            cand.check()
        except ValidationError:
            continue
        spine.append(v)
    return Skeleton(s, np.array(spine), r_G, r_u, kappa6)


def _path_matrix(path) -> np.ndarray:
    return path_matrix(path)


def _relation_error(hs, P) -> float:
    """max over i, j, k of |(w_jk - w_ik) - h_k h_i^-1 w_ji| with w_ij = h_j h_i^-1 P_i - P_j."""
    n = len(hs)
    if n < 2:
        return 0.0
    inv = [np.linalg.inv(h) for h in hs]

    def w(i, j):
        return act_vectors(hs[j] @ inv[i], P[i]) - P[j]

    idx = range(min(n, 6))
    err = 0.0
    for i in idx:
        for j in idx:
            for k in idx:
                lhs = w(j, k) - w(i, k)
                rhs = act_vectors(hs[k] @ inv[i], w(j, i))
                scale = max(1.0, float(np.abs(lhs).max()))
                err = max(err, float(np.abs(lhs - rhs).max()) / scale)
    return err


def calibrated_step(skel: Skeleton, gamma: float, target: float = math.e,
                    candidates: Sequence[float] = (1.0, 2.0, 4.0, 6.0, 8.0),
                    n_mc: int = 20, seed: int = 0) -> tuple[float, float]:
    """Smallest candidate step time m whose one-step walk divides the mean density by ``target``.

    Returns (m, measured drop); the last candidate is returned if none reaches it.
    """
    drop = 0.0
    for m in candidates:
        r = random_walk_expectation(skel, DriftWalk(gamma, m, 1), n_mc, seed)
        drop = r.lhs[0] / r.lhs[1]
        if drop >= target:
            return float(m), float(drop)
    return float(candidates[-1]), float(drop)
