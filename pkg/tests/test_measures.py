import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toric_solitons import measures as ms

from conftest import CATALOG_NAMES, polytope
from oracles import exact_moment, finite_difference_gradient, relative_error


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 60))
def test_p1_spectral_second_moment(k):
    nu = ms.spectral_measure(polytope("P1").lattice_points(k))
    assert ms.moment(nu, (2,)) == pytest.approx((k + 1) / (3 * k), abs=1e-12)
    assert nu.masses.sum() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_dh_moments_exact(name):
    P = polytope(name)
    dh = ms.dh_measure(P)
    assert dh.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert dh.volume == pytest.approx(P.volume, abs=1e-13)
    for a in ms.multi_indices(P.dim, 4):
        assert ms.moment(dh, a) == pytest.approx(float(exact_moment(P.vertices, a)), abs=1e-13)


def test_blowup_barycenter():
    dh = ms.dh_measure(polytope("Bl1P2"))
    assert np.allclose(dh.barycenter, [1 / 12, 1 / 12], atol=1e-14)


def test_moment_degree_limit():
    with pytest.raises(ValueError):
        ms.moment(ms.dh_measure(polytope("P1")), (5,))


def test_multi_indices_order():
    assert ms.multi_indices(2, 2) == [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_convergence_report(name):
    P = polytope(name)
    rep = ms.convergence_report(P, [2, 4, 8, 16])
    assert rep.monotone
    assert rep.rate_constant >= 0
    lines = rep.to_csv().splitlines()
    assert lines[0] == "k,multi_index,spectral_moment,dh_moment,abs_error"
    assert len(lines) == 1 + 4 * len(ms.multi_indices(P.dim, 2))
    with pytest.raises(ValueError):
        ms.convergence_report(P, [4, 2])


def test_divided_difference_oracle():
    z = np.array([0.3, -1.2, 2.0])
    # distinct nodes: sum_i e^{z_i} / prod_{j != i} (z_i - z_j)
    direct = sum(math.exp(zi) / np.prod([zi - zj for zj in z if zj != zi]) for zi in z)
    assert ms._divided_difference_exp(z) == pytest.approx(direct, rel=1e-13)
    # confluent nodes: exp[z, z, z] = e^z / 2
    assert ms._divided_difference_exp([0.7] * 3) == pytest.approx(math.exp(0.7) / 2, rel=1e-13)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_exp_moments_against_quadrature(name):
    P = polytope(name)
    dh = ms.dh_measure(P, order=20)
    xi = np.linspace(-0.6, 0.5, P.dim)
    F, grad, hess = ms.exp_moments(P, xi)
    e = np.exp(dh.nodes @ xi)
    assert F == pytest.approx(dh.weights @ e, rel=1e-13)
    assert np.allclose(grad, (dh.weights * e) @ dh.nodes, rtol=1e-12, atol=1e-13)
    assert np.allclose(hess, np.einsum("q,qi,qj->ij", dh.weights * e, dh.nodes, dh.nodes),
                       rtol=1e-12, atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(CATALOG_NAMES), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_exp_moments_finite_differences(name, xi):
    P = polytope(name)
    xi = np.array(xi[:P.dim])
    F, grad, hess = ms.exp_moments(P, xi)
    assert relative_error(grad, finite_difference_gradient(lambda x: ms.exp_moments(P, x)[0], xi)) < 1e-6
    fd_hess = np.array([finite_difference_gradient(lambda x: ms.exp_moments(P, x)[1][i], xi)
                        for i in range(P.dim)])
    assert relative_error(hess, fd_hess) < 1e-6
    assert np.all(np.linalg.eigvalsh(hess) > 0)
