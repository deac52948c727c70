"""Spectral measures of the weight sets and the Duistermaat-Heckman measure.

For the full torus of a toric Fano manifold the Duistermaat-Heckman measure is
normalized Lebesgue measure on the moment polytope.  It is realized here by a
collapsed (Duffy) Gauss-Jacobi product rule on each simplex of a triangulation,
which integrates polynomials exactly up to degree ``2 * order - 1``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import roots_jacobi

from .polytope import ReflexivePolytope, WeightSet


@dataclass(frozen=True)
class SpectralMeasure:
    level: int
    atoms: np.ndarray  # (N_k, n), lambda / k
    masses: np.ndarray  # (N_k,), all 1/N_k

    def integrate(self, f) -> float:
        return float(np.sum(self.masses * f(self.atoms)))


@dataclass(frozen=True, eq=False)
class DHMeasure:
    polytope: ReflexivePolytope
    nodes: np.ndarray  # (Q, n)
    weights: np.ndarray  # (Q,), summing to 1
    volume: float

    def integrate(self, f) -> float:
        return float(np.sum(self.weights * f(self.nodes)))

    @property
    def barycenter(self) -> np.ndarray:
        return self.weights @ self.nodes


def spectral_measure(weights: WeightSet) -> SpectralMeasure:
    N = weights.N
    return SpectralMeasure(level=weights.level, atoms=weights.rescaled(),
                           masses=np.full(N, 1.0 / N))


@lru_cache(maxsize=None)
def _duffy_rule(n: int, order: int):
    """Nodes/weights on the unit simplex {u >= 0, sum u <= 1}; weights sum to 1/n!."""
    factors = []
    for i in range(n):
        a = n - 1 - i
        x, w = roots_jacobi(order, a, 0)
        factors.append(((1 + x) / 2, w / 2 ** (a + 1)))
    pts, wts = [], []
    for combo in itertools.product(*[range(order)] * n):
        s = [factors[i][0][c] for i, c in enumerate(combo)]
        w = math.prod(factors[i][1][c] for i, c in enumerate(combo))
        u, rest = [], 1.0
        for si in s:
            u.append(si * rest)
            rest *= 1 - si
        pts.append(u)
        wts.append(w)
    return np.array(pts), np.array(wts)


def simplex_rule(simplex: np.ndarray, order: int = 8):
    """Gauss rule on a simplex given by its (n+1, n) vertex array; weights sum to its volume."""
    n = simplex.shape[1]
    u, w = _duffy_rule(n, order)
    edges = simplex[1:] - simplex[0]
    jac = abs(np.linalg.det(edges)) if n > 1 else abs(float(edges[0, 0]))
    return simplex[0] + u @ edges, w * jac


def dh_measure(P: ReflexivePolytope, order: int = 8) -> DHMeasure:
    nodes, weights = [], []
    for s in P.simplex_list:
        x, w = simplex_rule(s, order)
        nodes.append(x)
        weights.append(w)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    vol = float(weights.sum())
    return DHMeasure(polytope=P, nodes=nodes, weights=weights / vol, volume=vol)


def moment(measure, a) -> float:
    """Integral of the monomial x^a against a spectral or DH measure."""
    a = np.asarray(a, dtype=int)
    if a.sum() > 4:
        raise ValueError("moments are only supported up to total degree 4")
    return measure.integrate(lambda x: np.prod(x ** a, axis=1))


def multi_indices(n: int, max_degree: int) -> list[tuple[int, ...]]:
    """All multi-indices with 1 <= |a| <= max_degree, by degree then lexicographically."""
    out = []
    for d in range(1, max_degree + 1):
        out += sorted((a for a in itertools.product(range(d + 1), repeat=n) if sum(a) == d),
                      reverse=True)
    return out


@dataclass(frozen=True)
class ConvergenceRow:
    k: int
    multi_index: tuple
    spectral: float
    dh: float

    @property
    def error(self) -> float:
        return abs(self.spectral - self.dh)


@dataclass
class ConvergenceReport:
    rows: list
    rate_constant: float  # fitted C in max error <= C / k
    monotone: bool

    def errors(self, multi_index) -> list[float]:
        return [r.error for r in self.rows if r.multi_index == tuple(multi_index)]

    def to_csv(self) -> str:
        lines = ["k,multi_index,spectral_moment,dh_moment,abs_error"]
        for r in self.rows:
            idx = "-".join(str(c) for c in r.multi_index)
            lines.append(f"{r.k},{idx},{r.spectral!r},{r.dh!r},{r.error!r}")
        return "\n".join(lines) + "\n"


def convergence_report(P: ReflexivePolytope, k_list, max_degree: int = 2) -> ConvergenceReport:
    """Moment errors |nu_k - nu^T| per level and multi-index.

    ``rate_constant`` is the least-squares fit of the max-degree error to C/k;
    ``monotone`` says whether the per-level maximal error is non-increasing.
    """
    k_list = list(k_list)
    if any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise ValueError("k_list must be increasing")
    dh = dh_measure(P)
    idx = multi_indices(P.dim, max_degree)
    dh_mom = {a: moment(dh, a) for a in idx}
    rows = []
    for k in k_list:
        nu = spectral_measure(P.lattice_points(k))
        rows += [ConvergenceRow(k, a, moment(nu, a), dh_mom[a]) for a in idx]
    top = [r for r in rows if sum(r.multi_index) == max_degree]
    worst = np.array([max(r.error for r in top if r.k == k) for k in k_list])
    inv = 1.0 / np.array(k_list, dtype=float)
    C = float(inv @ worst / (inv @ inv))
    monotone = bool(np.all(np.diff(worst) <= 1e-15))
    return ConvergenceReport(rows=rows, rate_constant=C, monotone=monotone)


def _divided_difference_exp(z) -> float:
    """exp[z_0, ..., z_m], stable for repeated nodes (top-right entry of expm of a bidiagonal)."""
    z = np.asarray(z, dtype=float)
    m = len(z)
    if m == 1:
        return float(np.exp(z[0]))
    shift = z.max()
    A = np.diag(z - shift) + np.diag(np.ones(m - 1), 1)
    return float(expm(A)[0, -1] * np.exp(shift))


def exp_moments(P: ReflexivePolytope, xi) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact integrals of e^<xi,x>, x e^<xi,x>, x x^T e^<xi,x> against normalized Lebesgue on P.

    With barycentric coordinates b on a simplex, the integral of e^{sum b_i z_i}
    is n! vol * exp[z_0..z_n]; derivatives in the nodes repeat them.
    """
    xi = np.asarray(xi, dtype=float)
    n = P.dim
    val, grad, hess = 0.0, np.zeros(n), np.zeros((n, n))
    for s in P.simplex_list:
        z = s @ xi
        scale = abs(np.linalg.det(s[1:] - s[0])) if n > 1 else abs(s[1, 0] - s[0, 0])
        m = n + 1
        d1 = np.array([_divided_difference_exp(np.append(z, z[i])) for i in range(m)])
        d2 = np.empty((m, m))
        for i in range(m):
            for j in range(i, m):
                d2[i, j] = d2[j, i] = (1 + (i == j)) * _divided_difference_exp(
                    np.append(z, [z[i], z[j]]))
        val += scale * _divided_difference_exp(z)
        grad += scale * (d1 @ s)
        hess += scale * (s.T @ d2 @ s)
    vol = P.volume
    return val / vol, grad / vol, hess / vol
