import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toric_solitons import vectorfield as vf

from conftest import CATALOG_NAMES, polytope
from oracles import (diagonal_vks_bisection, exact_moment, finite_difference_gradient,
                     golden_diagonal_vk, relative_error)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(CATALOG_NAMES), st.integers(1, 6),
       st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=2))
def test_F_k_derivatives(name, k, xi):
    w = polytope(name).lattice_points(k)
    xi = np.array(xi[:w.dim])
    _, grad, hess = vf.F_k(w, xi)
    assert relative_error(grad, finite_difference_gradient(lambda x: vf.F_k(w, x)[0], xi)) < 1e-6
    fd = np.array([finite_difference_gradient(lambda x: vf.F_k(w, x)[1][i], xi) for i in range(w.dim)])
    assert relative_error(hess, fd) < 1e-6


def test_futaki_is_minus_gradient():
    w = polytope("Bl1P2").lattice_points(3)
    xi_v, xi_w = np.array([0.2, -0.4]), np.array([1.0, -2.0])
    assert vf.futaki_quantized(w, xi_v, xi_w) == pytest.approx(-vf.F_k(w, xi_v)[1] @ xi_w, rel=1e-13)
    P = polytope("Bl1P2")
    assert vf.futaki_continuous(P, xi_v, xi_w) == pytest.approx(-vf.F_continuous(P, xi_v)[1] @ xi_w,
                                                                rel=1e-13)


@pytest.mark.parametrize("name", ["P1", "P1xP1", "dP6"])
def test_symmetric_polytopes_have_trivial_vk(name):
    for k in (1, 2, 4, 8, 16):
        assert np.linalg.norm(vf.minimize_F_k(polytope(name).lattice_points(k)).xi) <= 1e-10


def test_p2_trivial_vk():
    # P2 is not centrally symmetric but its S3 symmetry still forces V_k = 0
    for k in (1, 3, 5):
        assert np.linalg.norm(vf.minimize_F_k(polytope("P2").lattice_points(k)).xi) <= 1e-10


@pytest.mark.parametrize("k", [1, 2, 4, 8, 16])
def test_blowup_vk_matches_golden_section(k):
    w = polytope("Bl1P2").lattice_points(k)
    vk = vf.minimize_F_k(w)
    assert vk.xi[0] == pytest.approx(vk.xi[1], abs=1e-12)
    assert vk.xi[0] == pytest.approx(golden_diagonal_vk(w.points, k), abs=1e-7)
    assert vk.residual <= 1e-10 * k * w.N


def test_vks_matches_bisection():
    P = polytope("Bl1P2")
    vks = vf.minimize_F_continuous(P)
    a = diagonal_vks_bisection(P.vertices)
    assert np.allclose(vks.xi, [a, a], atol=1e-8)
    assert np.linalg.norm(vf.F_continuous(P, vks.xi)[1]) <= 1e-10


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_vk_is_symmetry_invariant(name):
    P = polytope(name)
    vk = vf.minimize_F_k(P.lattice_points(5)).xi
    for S in P.symmetries():
        assert np.allclose(S.T @ vk, vk, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 8), st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_vk_minimizes(k, xi):
    w = polytope("Bl1P2").lattice_points(k)
    vk = vf.minimize_F_k(w)
    assert vf.F_k(w, np.array(xi))[0] >= vk.value - 1e-9 * vk.value


def test_vk_convergence_table():
    P = polytope("Bl1P2")
    vks, rows = vf.vk_convergence(P, [2, 4, 8, 16])
    d = [r.distance for r in rows]
    assert all(b < a for a, b in zip(d, d[1:]))
    e = [r.quantization_error for r in rows]
    assert all(b < a for a, b in zip(e, e[1:]))
    lines = vf.vk_table_csv(P, vks, rows).splitlines()
    assert lines[0].startswith("k,V_k_1,V_k_2,V_KS_1,V_KS_2,distance")
    assert len(lines) == 5


def test_p1_quantized_limit_is_sinh():
    P = polytope("P1")
    assert vf.F_continuous(P, [1.0])[0] == pytest.approx(math.sinh(1.0), abs=1e-14)
    # F_k(e1) / (k N_k) is the average of e^{j/k}, j = -k..k
    for k in (1, 5, 16):
        direct = np.mean(np.exp(np.arange(-k, k + 1) / k))
        w = P.lattice_points(k)
        assert vf.F_k(w, [1.0])[0] / (k * w.N) == pytest.approx(direct, rel=1e-14)


def test_futaki_expansion_exact_blowup():
    P = polytope("Bl1P2")
    coeffs = vf.futaki_expansion_fit(P, [0, 0], [1, 1], range(1, 7))
    assert coeffs == [Fraction(-2, 3), Fraction(-1), Fraction(-1, 3), Fraction(0)]
    # leading coefficient is -int_P <xi_W, x> dx (unnormalized Lebesgue)
    lead = -P.volume * (exact_moment(P.vertices, (1, 0)) + exact_moment(P.vertices, (0, 1)))
    assert coeffs[0] == Fraction(lead).limit_denominator(1000)


@pytest.mark.parametrize("name", ["P1", "P1xP1", "P2", "dP6"])
def test_futaki_expansion_vanishes_for_balanced_polytopes(name):
    P = polytope(name)
    coeffs = vf.futaki_expansion_fit(P, np.zeros(P.dim), np.ones(P.dim), range(1, P.dim + 4))
    assert all(c == 0 for c in coeffs)


def test_futaki_expansion_float_path():
    P = polytope("Bl1P2")
    xi_v = np.array([-0.3, -0.3])
    ks = list(range(1, 7))
    coeffs = vf.futaki_expansion_fit(P, xi_v, [1.0, 1.0], ks)
    for k in ks:
        fit = sum(c * k ** (3 - j) for j, c in enumerate(coeffs))
        exact = vf.futaki_quantized(P.lattice_points(k), xi_v, [1.0, 1.0])
        assert abs(fit - exact) < 5e-3 * abs(exact)
    with pytest.raises(vf.IllConditionedFit):
        vf.futaki_expansion_fit(P, xi_v, [1.0, 1.0], [1, 2, 3])


def test_newton_failure_modes():
    w = polytope("Bl1P2").lattice_points(4)
    with pytest.raises(vf.NoConvergence) as info:
        vf.minimize_F_k(w, tol=1e-14, max_iter=1)
    assert info.value.best is not None
    with pytest.raises(ValueError):
        vf.SolitonVector(xi=np.array([np.nan]))


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_g_weight_normalizations(name):
    P = polytope(name)
    xi = np.full(P.dim, -0.4)
    for k in (1, 3, 6):
        g = vf.GWeight.from_xi(P, xi, k)
        w = P.lattice_points(k)
        assert g.quantized(w.rescaled()).mean() == pytest.approx(1.0, abs=1e-13)
    g = vf.GWeight.from_xi(P, xi)
    from toric_solitons.measures import dh_measure

    assert dh_measure(P).integrate(g.continuous) == pytest.approx(1.0, abs=1e-12)
    assert vf.GWeight.trivial(P).is_trivial
