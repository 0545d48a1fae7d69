import math

import numpy as np
import pytest

from flatdrift.errors import (
    ClosureViolation,
    ConeAngleMismatch,
    DegenerateTriangle,
    FlipLimitExceeded,
    GluingMismatch,
    OrientationViolation,
)
from flatdrift.surface import (
    a_t,
    apply_gl2,
    area,
    build_surface,
    canonical_form,
    cohomological_area,
    cup_form,
    delaunay,
    from_json,
    homology_frame,
    is_delaunay,
    orientation_margin,
    rebuild_from_periods,
    remark,
    saddle_connections,
    square_torus,
    systole,
    to_json,
    torus,
    u_r,
    validate,
)


def lattice_count(L):
    """|v| <= L for v in Z^2 minus 0, brute force."""
    n = int(L) + 1
    return sum(1 for a in range(-n, n + 1) for b in range(-n, n + 1)
               if (a, b) != (0, 0) and math.hypot(a, b) <= L + 1e-12)


def test_square_torus_basics():
    s = square_torus()
    validate(s)
    assert s.n_triangles == 2
    assert np.allclose(s.cone_angles(), [2 * np.pi])
    assert area(s) == pytest.approx(1.0)
    assert systole(s) == pytest.approx(1.0)


@pytest.mark.parametrize("L", [0.5, 1.0, 1.5, 2.3, 3.7])
def test_torus_saddle_connections_match_lattice(L):
    s = square_torus()
    sc = saddle_connections(s, L)
    assert len(sc) == lattice_count(L)
    hol = {(round(c.hol.real, 9), round(c.hol.imag, 9)) for c in sc}
    assert len(hol) == len(sc)


def test_short_cutoff_is_empty(d8):
    assert saddle_connections(d8, 0.5 * systole(d8)) == []


def test_prototype_d8_geometry(d8):
    validate(d8)
    assert d8.n_triangles == 6
    assert np.allclose(sorted(d8.cone_angles()), [6 * np.pi])
    assert area(d8) == pytest.approx(4.0, abs=1e-12)
    hol = [c.hol for c in saddle_connections(d8, 1.2)]
    assert any(abs(h - 1j) < 1e-9 for h in hol)


def test_gluing_mismatch():
    tri = [[1, 1j - 1, -1j], [1j, -1, 1 - 1j]]
    glue = [[0, 0, 1, 0], [0, 1, 1, 2], [0, 2, 1, 1]]
    with pytest.raises(GluingMismatch):
        build_surface(tri, glue, [0])


def test_closure_and_orientation_errors():
    glue = [[0, 0, 1, 1], [0, 1, 1, 2], [0, 2, 1, 0]]
    with pytest.raises(ClosureViolation):
        build_surface([[1, 1j, -1j], [1j, -1, 1 - 1j]], glue, [0])
    with pytest.raises(OrientationViolation):
        build_surface([[1, -1j - 1, 1j], [-1j, -1, 1 + 1j]], glue, [0])


def test_cone_angle_mismatch():
    s = square_torus()
    with pytest.raises(ConeAngleMismatch):
        build_surface(to_json(s)["triangles"], to_json(s)["gluing"], [2])


def test_json_roundtrip(d8):
    s = from_json(to_json(d8))
    assert np.allclose(s.tri, d8.tri)
    assert canonical_form(s) == canonical_form(d8)


def test_apply_gl2_identity_inverse_area(d8):
    assert np.allclose(apply_gl2(np.eye(2), d8).tri, d8.tri)
    back = apply_gl2(a_t(-1.3), apply_gl2(a_t(1.3), d8))
    assert np.allclose(back.tri, d8.tri, atol=1e-9)
    g = np.array([[2.0, 1.0], [3.0, 2.0]])
    assert area(apply_gl2(g, d8)) == pytest.approx(area(d8), abs=1e-9)


def test_u1_on_square_torus_periods():
    s = apply_gl2(u_r(1.0), square_torus())
    per = sorted((round(v.real, 9), round(v.imag, 9)) for v in s.tri[0])
    assert (1.0, 1.0) in [(abs(a), abs(b)) for a, b in per]
    assert (1.0, 0.0) in [(abs(a), abs(b)) for a, b in per]


def test_delaunay_idempotent_and_bounded(d8):
    s, flips = delaunay(delaunay(d8), return_flips=True)
    assert flips == 0
    y = delaunay(apply_gl2(a_t(2.0), d8))
    assert is_delaunay(y)
    assert np.abs(y.tri).max() <= 2 / systole(y) + 1e-9
    assert area(y) == pytest.approx(area(d8))


def test_flip_cap(d8):
    with pytest.raises(FlipLimitExceeded):
        delaunay(apply_gl2(a_t(6.0) @ u_r(0.37), d8), max_flips=1)


def test_rebuild_from_periods(d8):
    same = rebuild_from_periods(d8, d8.periods)
    assert np.allclose(same.tri, d8.tri)
    big = rebuild_from_periods(d8, 2 * d8.periods)
    assert area(big) == pytest.approx(4 * area(d8))


def test_rebuild_margin(d8, rng):
    m = orientation_margin(d8)
    for _ in range(50):
        dx = rng.uniform(-1, 1, d8.dim) + 1j * rng.uniform(-1, 1, d8.dim)
        dx *= 0.9 * m / np.abs(np.r_[dx.real, dx.imag]).max()
        validate(rebuild_from_periods(d8, d8.periods + dx))
    # pushing one period far enough collapses a triangle
    with pytest.raises(DegenerateTriangle):
        rebuild_from_periods(d8, d8.periods * np.r_[1, -1, 1, 1][: d8.dim])


def test_remark_matrix(d8):
    y = delaunay(apply_gl2(a_t(1.5), d8))
    z, M = remark(y)
    assert np.allclose(M.astype(float) @ y.periods, z.periods, atol=1e-9)
    assert abs(round(np.linalg.det(M.astype(float)))) == 1


def test_cup_form_area(d8):
    Q = cup_form(d8)
    assert np.allclose(Q, -Q.T)
    assert d8.periods.real @ Q @ d8.periods.imag == pytest.approx(area(d8))
    assert cohomological_area(d8) == pytest.approx(area(d8))


def test_homology_frame_symplectic(d8):
    fr = homology_frame(d8)
    J = np.asarray(fr.intersection_matrix, float)
    assert np.allclose(J, -J.T)
    assert round(np.linalg.det(J)) == 1


def test_canonical_form_invariances(d8):
    rev = build_surface(*_reversed(d8))
    assert canonical_form(rev) == canonical_form(d8)
    assert canonical_form(square_torus()) != canonical_form(torus(1, 2j))
    assert canonical_form(apply_gl2(u_r(1.0), square_torus())) == canonical_form(square_torus())


def _reversed(s):
    F = s.n_triangles
    tri = [[[v.real, v.imag] for v in s.tri[F - 1 - t]] for t in range(F)]
    gl = [[F - 1 - t, i, F - 1 - p, j] for t, i in s.edges() for p, j in [s.partner(t, i)]]
    return tri, gl, list(s.zero_orders)
