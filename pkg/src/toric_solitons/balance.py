"""Fixed points of Hilb_{k, g_{V_k}} o FS_k on torus-invariant inner products.

States are kept normalized: h = log(H / H0) is orthogonal to the constants
(overall scale) and to the coordinate functions a -> a_i (the complex torus,
acting by H_a -> exp(<c, a>) H_a).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgWarning
from scipy.optimize import NoConvergence as ScipyNoConvergence
from scipy.optimize import anderson

from . import metric as mt
from .polytope import ReflexivePolytope
from .qfunctionals import D_g_k, energy_g_k, reference
from .quadrature import QuadratureSpec
from .quantization import DiagonalInnerProduct, fs, hilb
from .vectorfield import GWeight, NoConvergence, minimize_F_continuous, minimize_F_k

logger = logging.getLogger(__name__)

ANDERSON_DEPTH = 10


def _projector_basis(points: np.ndarray) -> np.ndarray:
    A = np.column_stack([np.ones(len(points)), points.astype(float)])
    q, _ = np.linalg.qr(A)
    return q


def normalize(H: DiagonalInnerProduct, H0: DiagonalInnerProduct | None = None) -> DiagonalInnerProduct:
    """Remove the scale and torus-translation components of log(H/H0)."""
    H0 = H0 or reference(H.polytope).H0(H.level)
    h = H.log_entries - H0.log_entries
    q = _projector_basis(H.points)
    h = h - q @ (q.T @ h)
    return DiagonalInnerProduct(H.polytope, H.level, H0.log_entries + h)


@dataclass
class BalanceState:
    level: int
    g: GWeight
    H: DiagonalInnerProduct
    iterations: int = 0
    residuals: list = field(default_factory=list)
    ding: list = field(default_factory=list)

    @property
    def residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("inf")

    @property
    def ding_nonincreasing(self) -> bool:
        d = np.asarray(self.ding)
        return bool(np.all(np.diff(d) <= 1e-12 * np.maximum(1.0, np.abs(d[1:]))))


def initial_state(P: ReflexivePolytope, k: int, H: DiagonalInnerProduct | None = None,
                  spec: QuadratureSpec | None = None) -> BalanceState:
    ref = reference(P, spec)
    g = GWeight.from_xi(P, minimize_F_k(P.lattice_points(k)).xi, k)
    H = normalize(H if H is not None else ref.H0(k), ref.H0(k))
    return BalanceState(level=k, g=g, H=H)


def balance_map(H: DiagonalInnerProduct, g: GWeight, spec: QuadratureSpec | None = None,
                phi: mt.TorusMetric | None = None) -> DiagonalInnerProduct:
    """Hilb_{k, mu_phi, g}(phi), phi = FS_k(H); unnormalized."""
    return hilb(phi if phi is not None else fs(H), H.level, g, None, spec)


def step(state: BalanceState, theta: float = 1.0,
         spec: QuadratureSpec | None = None) -> BalanceState:
    ref = reference(state.H.polytope, spec)
    H0 = ref.H0(state.level)
    hat = normalize(balance_map(state.H, state.g, spec), H0)
    r = float(np.abs(hat.log_entries - state.H.log_entries).max())
    new = DiagonalInnerProduct(state.H.polytope, state.level,
                               (1 - theta) * state.H.log_entries + theta * hat.log_entries)
    new = normalize(new, H0)
    return replace(state, H=new, iterations=state.iterations + 1,
                   residuals=state.residuals + [r],
                   ding=state.ding + [D_g_k(new, state.g, ref)])


@dataclass
class BalanceReport:
    k: int
    V_k: np.ndarray
    iterations: int
    evaluations: int
    residual: float
    converged: bool
    damping: float
    method: str
    residuals: list
    ding: list
    ding_nonincreasing: bool

    def to_json(self) -> dict:
        return {"k": self.k, "V_k": [float(c) for c in self.V_k], "iterations": self.iterations,
                "evaluations": self.evaluations, "final_residual": self.residual,
                "converged": self.converged, "damping": self.damping, "method": self.method,
                "residuals": [float(r) for r in self.residuals],
                "ding": [float(d) for d in self.ding],
                "ding_nonincreasing": self.ding_nonincreasing}


def _picard(state, tol, max_iter, theta, spec):
    best = state
    while state.iterations < max_iter:
        state = step(state, theta, spec)
        if state.residual < best.residual:
            best = state
        if state.residual <= tol:
            return state, True, state.iterations
        if theta == 1.0 and len(state.residuals) > 1 and state.residuals[-1] > state.residuals[-2]:
            return best, False, state.iterations
    return best, False, state.iterations


def _anderson(state, tol, max_iter, theta, spec):
    """Anderson mixing (scipy) on h -> normalize(T(h)) - h, h = log(H/H0)."""
    P, k = state.H.polytope, state.level
    ref = reference(P, spec)
    H0 = ref.H0(k)
    last = {}
    evals = [0]

    def residual_map(h):
        evals[0] += 1
        H = DiagonalInnerProduct(P, k, H0.log_entries + h)
        phi = fs(H)
        hat = normalize(balance_map(H, state.g, spec, phi), H0)
        last.update(h=h.copy(), phi=phi, H=H)
        return hat.log_entries - H.log_entries

    history = {"res": [], "ding": [], "best": (np.inf, None)}

    def record(h, f):
        H = DiagonalInnerProduct(P, k, H0.log_entries + h)
        if "h" in last and np.array_equal(last["h"], h):
            H = last["H"]
            L = mt.L(last["phi"], spec)
        else:
            L = mt.L(fs(H), spec)
        r = float(np.abs(f).max())
        history["res"].append(r)
        history["ding"].append(-energy_g_k(H, state.g, ref) + L)
        if r < history["best"][0]:
            history["best"] = (r, H)

    h0 = state.H.log_entries - H0.log_entries
    ok = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        try:
            anderson(residual_map, h0, alpha=theta, M=ANDERSON_DEPTH, f_tol=tol,
                     maxiter=max_iter, callback=record)
        except (ScipyNoConvergence, ValueError, FloatingPointError) as exc:
            logger.info("k=%d: Anderson mixing stopped (%s)", k, exc)
            ok = False
    r, H = history["best"]
    if H is None:
        return state, False, evals[0]
    ok = ok and r <= tol
    out = replace(state, H=normalize(H, H0), iterations=len(history["res"]),
                  residuals=history["res"], ding=history["ding"])
    return out, ok, evals[0]


def balanced_metric(P: ReflexivePolytope, k: int, tol: float = 1e-8, max_iter: int = 500,
                    theta: float = 1.0, H_start: DiagonalInnerProduct | None = None,
                    spec: QuadratureSpec | None = None, accelerate: bool = True):
    """Iterate to a quantized soliton; returns (H_k, FS_k(H_k), report).

    ``accelerate`` drives the damped map with Anderson mixing (depth 10);
    otherwise plain damped iteration.  A failed first attempt is retried once
    with theta halved.  Raises NoConvergence with ``best = (state, report)``.
    """
    start = initial_state(P, k, H_start, spec)
    run = _anderson if accelerate else _picard
    state, ok, evals = run(start, tol, max_iter, theta, spec)
    if not ok:
        logger.info("k=%d: no convergence with theta=%g, retrying with theta=%g", k, theta, theta / 2)
        theta = theta / 2
        state, ok, evals = run(start, tol, max_iter, theta, spec)
    d = np.asarray(state.ding)
    report = BalanceReport(k=k, V_k=state.g.xi, iterations=state.iterations, evaluations=evals,
                           residual=state.residual, converged=ok, damping=theta,
                           method="anderson" if accelerate else "picard",
                           residuals=state.residuals, ding=state.ding,
                           ding_nonincreasing=state.ding_nonincreasing if len(d) else True)
    if not ok:
        raise NoConvergence(f"k={k}: residual {state.residual:.3e} after {state.iterations} "
                            f"iterations", best=(state, report))
    return state.H, fs(state.H), report


def centered(phi: mt.TorusMetric, tol: float = 1e-13) -> mt.TorusMetric:
    """phi translated so that its minimum sits at t = 0, shifted so that phi(0) = 0.

    Translating t by c multiplies the coefficient at a by exp(<a, c>).
    """
    t = np.zeros(phi.polytope.dim)
    for _ in range(100):
        g = phi.gradient(t)[0]
        if np.linalg.norm(g) <= tol:
            break
        t = t - np.linalg.solve(phi.hessian(t)[0], g)
    lc = phi.log_coefficients + phi.support @ t
    moved = mt.TorusMetric(phi.polytope, phi.level, lc, phi.constant)
    return moved.shifted(-float(moved(np.zeros((1, phi.polytope.dim)))[0]))


@dataclass
class StudyRow:
    k: int
    V_k: np.ndarray
    iterations: int
    residual: float
    ding_vks: float  # continuous D_{g_{V_KS}}(phi_k)
    cauchy: float  # sup-grid |phi_k - phi_{previous k}| after centering; nan for the first
    converged: bool = True


def soliton_convergence_study(P: ReflexivePolytope, k_list, axes=None, tol: float = 1e-8,
                              max_iter: int = 500, spec: QuadratureSpec | None = None):
    axes = axes if axes is not None else mt.grid_axes(None, P.dim)
    ref = reference(P, spec)
    g_ks = GWeight.from_xi(P, minimize_F_continuous(P).xi)
    rows, prev = [], None
    for k in k_list:
        try:
            _, phik, rep = balanced_metric(P, k, tol, max_iter, spec=spec)
        except NoConvergence as exc:
            # keep the best iterate so the table still shows where it stalled
            state, rep = exc.best
            phik = fs(state.H)
            logger.warning("k=%d did not converge (residual %.2e)", k, rep.residual)
        c = centered(phik)
        d = mt.D_g(phik, ref.phi0, g_ks, spec)
        cauchy = float("nan") if prev is None else mt.sup_difference(c, prev, axes)
        rows.append(StudyRow(k, rep.V_k, rep.iterations, rep.residual, d, cauchy, rep.converged))
        prev = c
    return rows


def smallest_converged(rows) -> int | None:
    """Smallest level of a study whose iteration met the tolerance (no claim beyond the run)."""
    return min((r.k for r in rows if r.converged), default=None)


def study_csv(P: ReflexivePolytope, rows) -> str:
    n = P.dim
    head = ["k"] + [f"V_k_{i + 1}" for i in range(n)] + ["iterations", "residual", "ding_vks", "cauchy",
                                                        "converged"]
    lines = [",".join(head)]
    for r in rows:
        lines.append(",".join([str(r.k)] + [repr(float(c)) for c in r.V_k]
                              + [str(r.iterations)]
                              + [repr(float(v)) for v in (r.residual, r.ding_vks, r.cauchy)]
                              + [str(r.converged).lower()]))
    return "\n".join(lines) + "\n"
