import math

import numpy as np
import pytest
import sympy

from flatdrift.arithmetic import (
    GroupBallSpec,
    IntegralSubspace,
    ball_grid,
    chart_difference,
    chart_distance,
    common_fixed_subspace,
    contains_hyperbolic,
    count_group_ball,
    group_ball_elements,
    growth_exponent,
    height,
    hnf_rows,
    integer_kernel,
    is_parabolic,
    is_translation_equivalent,
    lie_algebra_basis,
    near_return_scan,
    phi_of,
    plane_discriminant,
    plucker_planes,
    prototype_plane,
    relabeled,
    spherical_closed_form,
    spherical_function,
    spherical_mean,
    spherical_trapezoid,
    spherical_volume_ratio,
    standard_split_plane,
    veech_search,
    wedge_separation,
)
from flatdrift.dynamics import generic_surface
from flatdrift.errors import (
    IrrationalPlane,
    NotSaturated,
    ResolutionTooCoarse,
    ValidationError,
    WordBudgetExceeded,
)
from flatdrift.surface import apply_gl2, square_torus, u_r
from flatdrift.tori import Prototype, prototype_float


# --- equivalence and Veech groups -------------------------------------------

def test_relabeled_is_equivalent(d8):
    y = relabeled(d8, [3, 1, 5, 0, 2, 4], [1, 0, 2, 1, 0, 0])
    assert is_translation_equivalent(d8, y)
    assert not is_translation_equivalent(d8, prototype_float(Prototype(0, 1, 1, -1)))


def test_torus_veech_group():
    r = veech_search(square_torus(), 2.0)
    lower = np.array([[1.0, 0.0], [1.0, 1.0]])
    assert any(np.allclose(g, u_r(1)) for g in r.elements)
    assert any(np.allclose(g, lower) for g in r.elements)
    assert np.allclose(r.elements[0], np.eye(2))
    assert r.minus_identity


def test_d16_parabolic_and_oracle(d16):
    r = veech_search(d16, 8.0)
    par = [g for g in r.elements if is_parabolic(g)]
    assert par
    for g in par:
        assert is_translation_equivalent(apply_gl2(g, d16), d16)
    oracle = [k for k in range(1, 9) if is_translation_equivalent(apply_gl2(u_r(k), d16), d16)]
    assert oracle
    for k in oracle:
        assert any(np.allclose(g, u_r(k)) for g in r.elements)


def test_generic_surface_has_trivial_veech_group():
    r = veech_search(generic_surface(0), 5.0)
    assert len(r.elements) == 1 and np.allclose(r.elements[0], np.eye(2))


def test_contains_hyperbolic():
    assert not contains_hyperbolic([np.eye(2)])
    assert contains_hyperbolic([np.diag([2.0, 0.5])])
    assert not contains_hyperbolic([u_r(1), u_r(3).T])
    assert is_parabolic(u_r(2)) and not is_parabolic(np.eye(2)) and not is_parabolic(-np.eye(2))


# --- chart comparisons ------------------------------------------------------

def test_chart_difference_recovers_g():
    x = generic_surface(1)
    g = np.array([[1.001, 0.002], [0.0, 1 / 1.001]])
    d = chart_difference(x, apply_gl2(g, x))
    assert d is not None
    assert np.allclose(d.k, g, atol=1e-9)
    assert np.abs(d.w).max() < 1e-9
    assert chart_distance(x, x) == pytest.approx(0.0, abs=1e-12)


def test_chart_difference_unknown_for_far_surfaces(d8):
    assert chart_difference(d8, prototype_float(Prototype(0, 1, 1, -1))) is None


# --- integer linear algebra --------------------------------------------------

def test_heights():
    assert height(IntegralSubspace.from_basis([[1, 0, 0], [0, 1, 0]])) == pytest.approx(1.0)
    assert height(IntegralSubspace.from_basis([[1, 2, 3]])) == pytest.approx(math.sqrt(14), abs=1e-12)


def test_not_saturated():
    with pytest.raises(NotSaturated):
        IntegralSubspace.from_basis([[2, 0, 0]])
    V = IntegralSubspace.span([[2, 4, 6]])
    assert V.rows() == [[1, 2, 3]] or V.rows() == [[-1, -2, -3]]
    with pytest.raises(ValidationError):
        IntegralSubspace.from_basis([[1, 0], [2, 0]])


def test_kernel_and_hnf():
    A = [[1, 2, 3], [4, 5, 6]]
    K = integer_kernel(A)
    assert len(K) == 1
    assert (sympy.Matrix(A) * sympy.Matrix(K).T).is_zero_matrix
    H = hnf_rows([[2, 4], [1, 3]])
    assert abs(sympy.Matrix(H).det()) == 2


def test_common_fixed_subspace():
    V, w = common_fixed_subspace([np.eye(3, dtype=int)])
    assert V.dim == 3 and w == []
    V, w = common_fixed_subspace([[[1, 1], [0, 1]]])
    assert V.dim == 1 and V.contains([0, 1])
    A = [[2, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 0, 1]]
    B = [[1, 0, 0, 0], [0, 2, 0, 1], [0, 1, 1, 1], [1, 0, 0, 1]]
    V, w = common_fixed_subspace([A, B])
    assert V.dim == 0 and len(w) <= 2
    for M in w:
        assert any(M == [list(r) for r in X] for X in (A, B))


def test_plucker_and_wedge_separation():
    P = plucker_planes(3)
    # Pluecker relation p12 p34 - p13 p24 + p14 p23 = 0
    assert np.all(P[:, 0] * P[:, 5] - P[:, 1] * P[:, 4] + P[:, 2] * P[:, 3] == 0)
    ws = wedge_separation(4)
    assert ws.min_distance > 0


# --- discriminants ----------------------------------------------------------

def test_split_plane_gram_oracle():
    rows = lie_algebra_basis(standard_split_plane())
    assert len(rows) == 3
    G = sympy.Matrix(rows) * sympy.Matrix(rows).T
    assert plane_discriminant(None, standard_split_plane()) == pytest.approx(math.sqrt(G.det()))


def test_irrational_plane():
    with pytest.raises(IrrationalPlane):
        plane_discriminant(generic_surface(0), None)


def test_prototype_lie_algebra_commutes():
    s, plane = prototype_plane(Prototype(0, 2, 1, 0))
    rows = lie_algebra_basis(plane)
    assert len(rows) == 6
    Q = np.array(plane.form, dtype=float)
    for r in rows:
        X = np.array(r, dtype=float).reshape(4, 4)
        # symplectic: X^T Q + Q X = 0 in one of the two conventions
        assert np.allclose(X.T @ Q + Q @ X, 0) or np.allclose(X @ Q + Q @ X.T, 0)


def test_discriminant_trend():
    vals = []
    for D in (8, 12, 16, 20):
        s, plane = prototype_plane(Prototype(0, D // 4, 1, 0))
        vals.append(plane_discriminant(s, plane))
    assert all(a <= b for a, b in zip(vals, vals[1:]))


# --- spherical function and counting -----------------------------------------

def test_spherical_values():
    assert spherical_function(0.0) == pytest.approx(1.0, abs=1e-9)
    grid = np.linspace(0, 6, 25)
    vals = [spherical_function(t) for t in grid]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    for t in (0.3, 1.0, 2.0, 5.0):
        assert spherical_function(t) == pytest.approx(spherical_closed_form(t), rel=1e-9)
    assert spherical_function(2.0) == pytest.approx(spherical_trapezoid(2.0), rel=1e-9)
    assert phi_of(np.eye(2)) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        spherical_function(-1.0)


def test_volume_ratio_decreases():
    r = [spherical_volume_ratio(T, 1.0, n_mc=2000, seed=0) for T in (2, 4, 8)]
    assert r[0] > r[1] > r[2] > 0
    assert spherical_volume_ratio(4, 1e6, n_mc=500) == pytest.approx(1.0, abs=1e-3)
    assert 0 < spherical_mean(4) < 1


def power_oracle(T):
    """Powers of diag(2, 1/2) with max-entry norm <= T, then greedy 1-separation."""
    from flatdrift.arithmetic import separated_subset
    from flatdrift.norms import gnorm
    els = [np.diag([2.0 ** k, 2.0 ** -k]) for k in range(-64, 65)
           if gnorm(np.diag([2.0 ** k, 2.0 ** -k])) <= T]
    els.sort(key=lambda m: (gnorm(m), tuple(np.ravel(m))))
    return len(separated_subset(els, 1.0))


def test_count_cyclic():
    spec = GroupBallSpec((np.diag([2.0, 0.5]),), 100.0)
    n = count_group_ball(spec)
    assert n == power_oracle(100.0)
    assert abs(n - 14) <= 1
    assert count_group_ball(GroupBallSpec((np.eye(2),), 10.0)) == 1


def test_word_budget():
    with pytest.raises(WordBudgetExceeded):
        group_ball_elements([u_r(1), u_r(1).T], 1e3, budget=50)


def test_growth_exponent_schottky():
    e = growth_exponent([u_r(3), u_r(3).T], [10, 20, 40, 80])
    assert 0 < e < 1


# --- near returns -----------------------------------------------------------

def test_ball_grid_resolution():
    with pytest.raises(ResolutionTooCoarse):
        ball_grid(5.0, 3)
    assert all(np.isclose(np.linalg.det(g), 1) for g in ball_grid(2.0, 5))


def test_near_returns_veech_nonempty(d16):
    pairs, rep = near_return_scan(d16, 2.0, 2.0, grid=5)
    assert pairs
    for p in pairs:
        assert p.separation >= 1 and p.distance < rep["threshold"]


def test_near_returns_generic_large_N():
    pairs, rep = near_return_scan(generic_surface(0), 2.0, 40.0, grid=5)
    assert pairs == []
    assert rep["threshold_below_float_resolution"]


def test_near_returns_scale_guard(d8):
    with pytest.raises(ValidationError):
        near_return_scan(d8, 20.0, 1.0)
