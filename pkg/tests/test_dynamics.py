import math

import numpy as np
import pytest
import sympy

from flatdrift.dynamics import (
    FlowState,
    conjugation_polynomials,
    direct_conjugation,
    evaluate_polynomials,
    fit_power_law,
    flow,
    generic_surface,
    horocycle,
    marking_change,
    lyapunov_estimate,
    nondivergence_fraction,
    systole_samples,
)
from flatdrift.errors import ValidationError
from flatdrift.surface import area, canonical_form, is_delaunay, square_torus, systole, torus, validate


def _integral_unimodular(M):
    A = sympy.Matrix(M.tolist())
    return all(isinstance(v, (int, np.integer)) or v == int(v) for v in M.ravel()) and abs(A.det()) == 1


def test_flow_zero_is_identity(d8):
    st = FlowState.start(d8)
    assert flow(st, 0.0) is st


def test_flow_keeps_invariants(d8):
    st = flow(FlowState.start(d8), 3.0)
    validate(st.surface)
    assert is_delaunay(st.surface)
    assert area(st.surface) == pytest.approx(area(d8))
    assert _integral_unimodular(st.cocycle)
    assert st.clock == 3.0


def test_flow_reversible(d8):
    x = generic_surface(2)
    st = FlowState.start(x)
    fw = flow(st, 2.5)
    back = flow(fw, -2.5)
    assert canonical_form(back.surface) == canonical_form(st.surface)
    # the round trip may relabel triangles; the cocycle is then exactly that relabelling
    R = marking_change(st.surface, back.surface)
    assert np.array_equal(np.asarray(back.cocycle, dtype=np.int64), np.asarray(R, dtype=np.int64))


def test_flow_composes():
    x = generic_surface(8)
    st = FlowState.start(x)
    a = flow(flow(st, 1.2), 1.7)
    b = flow(st, 2.9)
    assert canonical_form(a.surface) == canonical_form(b.surface)


def test_flow_systole_lower_bound(d8):
    st = flow(FlowState.start(d8), 5.0)
    assert systole(st.surface) >= math.exp(-5 / 2) * systole(d8) * (1 - 1e-9)


def test_frame_tracks_periods(d8):
    x = generic_surface(1)
    st = FlowState.start(x, frame=None)
    per0 = st.surface.periods
    out = flow(st, 2.0)
    # periods transform by the cocycle after the a_t action on coordinates
    g = np.diag([math.exp(1.0), math.exp(-1.0)])
    moved = (g[0, 0] * per0.real) + 1j * (g[1, 1] * per0.imag)
    assert np.allclose(np.asarray(out.cocycle, float) @ moved, out.surface.periods, atol=1e-8)


def test_horocycle_veech_torus():
    st = FlowState.start(square_torus())
    assert canonical_form(horocycle(st, 1.0).surface) == canonical_form(st.surface)
    assert horocycle(st, 0.0) is st
    a = horocycle(horocycle(st, 0.3), 0.4)
    b = horocycle(st, 0.7)
    assert canonical_form(a.surface) == canonical_form(b.surface)


def test_torus_exponents():
    # golden shear keeps the orbit bounded; rational shears run into the cusp
    s = torus(1, complex((math.sqrt(5) - 1) / 2, 1))
    ex = lyapunov_estimate(s, 300.0, seed=1)
    assert ex == pytest.approx([1.0, -1.0], abs=0.05)


def test_lyapunov_guard_rails(d8):
    with pytest.raises(ValidationError):
        lyapunov_estimate(d8, 50.0)
    with pytest.raises(ValidationError):
        lyapunov_estimate(d8, 200.0, renorm=2.0)


def test_short_lyapunov_shape():
    ex = lyapunov_estimate(generic_surface(0), 400.0, seed=0)
    assert ex[0] == pytest.approx(1.0)
    assert ex[-1] == pytest.approx(-1.0, abs=0.1)
    assert ex[1] == pytest.approx(-ex[2], abs=0.1)


def test_nondivergence_small_eps():
    x = generic_surface(0)
    assert nondivergence_fraction(x, 2.0, 1e-6, 200) == 0.0
    with pytest.raises(ValidationError):
        nondivergence_fraction(x, 2.0, 0.1, 10)


def test_systole_samples_deterministic():
    x = generic_surface(0)
    assert np.array_equal(systole_samples(x, 3.0, 30, 4), systole_samples(x, 3.0, 30, 4))


def test_fit_power_law_exact():
    e = np.array([0.02, 0.05, 0.1, 0.2])
    k, C, r2 = fit_power_law(e, 3 * e ** 2)
    assert k == pytest.approx(2.0) and C == pytest.approx(3.0) and r2 == pytest.approx(1.0)
    assert math.isnan(fit_power_law(e, [0, 0, 0, 1])[0])


def test_conjugation_identity():
    P = conjugation_polynomials(np.eye(2), 1.0, 0.7)
    R = sympy.Symbol("R")
    assert P["P11"].as_expr() == 1 and P["P22"].as_expr() == 1
    assert P["P12"].as_expr() == 0 and P["P21"].as_expr() == 0
    P = conjugation_polynomials([[1, 1], [0, 1]], 1.0, 0.0)
    assert P["P12"].as_expr() == 1
    assert R not in P["P12"].as_expr().free_symbols


def test_conjugation_matches_numeric(rng):
    for _ in range(10):
        S = rng.normal(size=(2, 2))
        varpi, t, r = rng.uniform(0.1, 1), rng.uniform(0, 0.5), rng.uniform(-2, 2)
        P = conjugation_polynomials(S, varpi, t)
        assert np.allclose(evaluate_polynomials(P, r), direct_conjugation(S, varpi, t, r), rtol=1e-9, atol=1e-9)


def test_conjugation_display_sign(rng):
    S = rng.normal(size=(2, 2))
    P = conjugation_polynomials(S, 1.0, 0.2)
    Q = conjugation_polynomials(S, 1.0, 0.2, display_sign=True)
    assert np.allclose(evaluate_polynomials(P, 0.6), evaluate_polynomials(Q, -0.6))
