import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toric_solitons import balance as bl
from toric_solitons import metric as mt
from toric_solitons import qfunctionals as qf
from toric_solitons import quantization as qz
from toric_solitons.vectorfield import NoConvergence

from conftest import balanced, fubini_study, polytope


def random_product(P, k, seed, scale=0.3):
    H0 = qf.reference(P).H0(k)
    noise = np.random.default_rng(seed).normal(size=len(H0.log_entries)) * scale
    return qz.DiagonalInnerProduct(P, k, H0.log_entries + noise)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["P1", "P2", "Bl1P2"]), st.integers(1, 3), st.integers(0, 10 ** 6),
       st.floats(-3, 3), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_normalize(name, k, seed, c, shift):
    P = polytope(name)
    H = random_product(P, k, seed)
    N = bl.normalize(H)
    assert np.array_equal(bl.normalize(N).log_entries, N.log_entries) or np.allclose(
        bl.normalize(N).log_entries, N.log_entries, atol=1e-14, rtol=0)
    h = N.log_entries - qf.reference(P).H0(k).log_entries
    assert abs(h.mean()) <= 1e-12
    assert np.abs(H.points.T @ h).max() <= 1e-11
    # scale and torus translation are removed
    moved = qz.DiagonalInnerProduct(P, k, H.log_entries + c + H.points @ np.array(shift[:P.dim]))
    assert np.allclose(bl.normalize(moved).log_entries, N.log_entries, atol=1e-11)


def test_p1_closed_form_fixed_point():
    P = polytope("P1")
    start = qz.DiagonalInnerProduct.from_entries(P, 1, [1 / 3, 1 / 6, 1 / 3])
    state = bl.initial_state(P, 1, start)
    assert bl.step(state).residual <= 1e-9


def test_step_is_scale_invariant():
    P = polytope("Bl1P2")
    H = random_product(P, 2, 0)
    a = bl.step(bl.initial_state(P, 2, H))
    b = bl.step(bl.initial_state(P, 2, H.scaled(17.0)))
    assert np.allclose(a.H.log_entries, b.H.log_entries, atol=1e-12)
    assert a.residual == pytest.approx(b.residual, abs=1e-12)


@pytest.mark.parametrize("name", ["P1xP1", "dP6"])
def test_symmetric_iterates_stay_symmetric(name):
    P = polytope(name)
    state = bl.initial_state(P, 2)
    for _ in range(3):
        state = bl.step(state, theta=0.7)
        for S in P.symmetries():
            assert np.allclose(state.H.permuted(S).log_entries, state.H.log_entries, atol=1e-11)
    assert len(state.residuals) == len(state.ding) == 3


def test_plain_iteration_matches_accelerated():
    P = polytope("Bl1P2")
    H1, _, rep1 = bl.balanced_metric(P, 2, accelerate=False)
    H2, _, _ = balanced("Bl1P2", 2)
    assert rep1.method == "picard" and rep1.converged
    assert rep1.ding_nonincreasing
    assert np.allclose(H1.log_entries, H2.log_entries, atol=1e-7)


def test_damping_fallback_and_failure():
    P = polytope("P2")
    with pytest.raises(NoConvergence) as info:
        bl.balanced_metric(P, 2, max_iter=2)
    state, report = info.value.best
    assert report.damping == 0.5
    assert not report.converged
    assert report.iterations <= 2


def test_fixed_point_is_unique_modulo_normalization():
    P = polytope("Bl1P2")
    H_a, _, _ = balanced("Bl1P2", 4)
    H_b, _, _ = bl.balanced_metric(P, 4, H_start=random_product(P, 4, 9, 0.5))
    assert np.allclose(H_a.log_entries, H_b.log_entries, atol=1e-7)


@pytest.mark.parametrize("name, k", [("Bl1P2", 2), ("dP6", 2), ("P2", 1)])
def test_fixed_point_is_ding_critical(name, k):
    P = polytope(name)
    H, _, rep = balanced(name, k)
    g = bl.initial_state(P, k).g
    q = bl._projector_basis(H.points)
    rng = np.random.default_rng(3)
    h = 1e-5
    for _ in range(4):
        d = rng.normal(size=len(H.log_entries))
        d -= q @ (q.T @ d)
        d /= np.abs(d).max()
        plus = qz.DiagonalInnerProduct(P, k, H.log_entries + h * d)
        minus = qz.DiagonalInnerProduct(P, k, H.log_entries - h * d)
        assert abs(qf.D_g_k(plus, g) - qf.D_g_k(minus, g)) / (2 * h) <= 1e-5


@pytest.mark.parametrize("name, k", [("Bl1P2", 4), ("dP6", 2), ("P1xP1", 2)])
def test_fixed_point_symmetry(name, k):
    P = polytope(name)
    H, _, rep = balanced(name, k)
    for S in P.symmetries():
        if np.allclose(S.T @ rep.V_k, rep.V_k):
            assert np.allclose(H.permuted(S).log_entries, H.log_entries, atol=1e-7)


def test_hexagon_has_trivial_vector_field():
    _, _, rep = balanced("dP6", 2)
    assert np.linalg.norm(rep.V_k) <= 1e-10
    assert rep.converged and rep.residual <= 1e-8


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_p1_bergman_potentials_are_fubini_study(k):
    _, phi, rep = balanced("P1", k)
    axes = mt.grid_axes("-6,6,49", 1)
    assert mt.sup_difference(bl.centered(phi), bl.centered(fubini_study()), axes) <= 1e-6


def test_centered():
    phi = fubini_study()
    moved = mt.TorusMetric(phi.polytope, 1, phi.log_coefficients + phi.support @ np.array([0.8]), 2.0)
    c = bl.centered(moved)
    assert abs(c.gradient(np.zeros((1, 1)))[0, 0]) <= 1e-12
    assert abs(c(np.zeros((1, 1)))[0]) <= 1e-14
    axes = mt.grid_axes(None, 1)
    assert mt.sup_difference(c, bl.centered(phi), axes) <= 1e-12


def test_report_json():
    _, _, rep = balanced("P1", 1)
    data = rep.to_json()
    assert set(data) >= {"k", "V_k", "iterations", "final_residual", "ding", "ding_nonincreasing"}
    assert data["final_residual"] <= 1e-8
    assert math.isfinite(data["ding"][-1])


def test_study_reports_stalled_levels():
    P = polytope("P2")
    rows = bl.soliton_convergence_study(P, [1, 2], max_iter=2)
    assert [r.converged for r in rows] == [False, False]
    assert bl.smallest_converged(rows) is None
    rows = bl.soliton_convergence_study(polytope("P1"), [1, 2, 3])
    assert bl.smallest_converged(rows) == 1
    # phi_k is phi_FS at every level, so the Cauchy differences vanish
    assert math.isnan(rows[0].cauchy)
    assert max(r.cauchy for r in rows[1:]) <= 1e-6
    assert bl.study_csv(P, rows).splitlines()[1].endswith(",true")
