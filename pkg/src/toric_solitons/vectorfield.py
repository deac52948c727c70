"""Soliton vector fields: minimizers of the quantized functional F_k and of its limit F.

A vector field is identified with xi in the torus Lie algebra R^n.  At level k

    F_k(xi) = k * sum_i exp(<xi, lambda_i> / k)

over the lattice points lambda_i of kP, and in the limit

    F(xi) = int_P exp(<xi, x>) dx / vol(P).

Both are strictly convex and proper; V_k and V_KS are their unique minimizers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .measures import exp_moments
from .polytope import ReflexivePolytope, WeightSet

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
BACKTRACK = 0.5


class SingularHessian(ArithmeticError):
    pass


class NoConvergence(ArithmeticError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class IllConditionedFit(ArithmeticError):
    pass


@dataclass(frozen=True)
class SolitonVector:
    xi: np.ndarray
    value: float = float("nan")
    residual: float = float("nan")
    iterations: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.xi)):
            raise ValueError("soliton vector has non-finite entries")


def F_k(weights: WeightSet, xi) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of k * sum exp(<xi, lambda>/k)."""
    lam = weights.points.astype(float)
    k = weights.level
    s = lam @ np.asarray(xi, dtype=float) / k
    smax = s.max()
    e = np.exp(s - smax)
    scale = np.exp(smax)
    value = k * scale * e.sum()
    grad = scale * (lam.T @ e)
    hess = scale * (lam.T * e) @ lam / k
    return float(value), grad, hess


def futaki_quantized(weights: WeightSet, xi_v, xi_w) -> float:
    """Fut_{V,k}(W) = -sum <xi_W, lambda> exp(<xi_V, lambda>/k)."""
    lam = weights.points.astype(float)
    e = np.exp(lam @ np.asarray(xi_v, dtype=float) / weights.level)
    return float(-np.sum((lam @ np.asarray(xi_w, dtype=float)) * e))


def F_continuous(P: ReflexivePolytope, xi) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of int_P exp(<xi, x>) dnu^T (exact simplex formulas)."""
    return exp_moments(P, xi)


def futaki_continuous(P: ReflexivePolytope, xi_v, xi_w) -> float:
    _, grad, _ = F_continuous(P, xi_v)
    return float(-grad @ np.asarray(xi_w, dtype=float))


def _newton(fun, n, scale, tol, max_iter):
    xi = np.zeros(n)
    f, g, H = fun(xi)
    for it in range(max_iter + 1):
        res = float(np.linalg.norm(g))
        if res <= tol * scale:
            return SolitonVector(xi=xi, value=f, residual=res, iterations=it)
        if it == max_iter:
            break
        try:
            eig_min = np.linalg.eigvalsh(H).min()
            if eig_min <= 1e-14 * max(1.0, np.abs(H).max()):
                raise np.linalg.LinAlgError
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise SingularHessian(f"Hessian is singular at xi={xi}") from None
        slope = g @ step
        t = 1.0
        while True:
            trial = xi + t * step
            ft, gt, Ht = fun(trial)
            if ft <= f + ARMIJO_C * t * slope or t < 1e-12:
                break
            t *= BACKTRACK
        if t < 1e-12 and ft > f:
            # roundoff floor: no further descent possible
            break
        xi, f, g, H = trial, ft, gt, Ht
    raise NoConvergence(f"Newton stopped with residual {np.linalg.norm(g):.3e}",
                        best=SolitonVector(xi=xi, value=f, residual=float(np.linalg.norm(g)),
                                           iterations=max_iter))


def minimize_F_k(weights: WeightSet, tol: float = 1e-10, max_iter: int = 100) -> SolitonVector:
    """V_k by damped Newton from 0; stops when |grad F_k| <= tol * k * N_k."""
    k, N = weights.level, weights.N
    return _newton(lambda xi: F_k(weights, xi), weights.dim, k * N, tol, max_iter)


def minimize_F_continuous(P: ReflexivePolytope, tol: float = 1e-10,
                          max_iter: int = 100) -> SolitonVector:
    """V_KS: the point where the exp-weighted barycenter of P vanishes."""
    return _newton(lambda xi: F_continuous(P, xi), P.dim, 1.0, tol, max_iter)


@dataclass(frozen=True)
class GWeight:
    """g(x) = exp(<xi, x>) / normalizer, normalized against nu_k or nu^T."""

    xi: np.ndarray
    level: int | None
    normalizer_quantized: float
    normalizer_continuous: float

    @classmethod
    def from_xi(cls, P: ReflexivePolytope, xi, level: int | None = None) -> "GWeight":
        xi = np.asarray(xi, dtype=float).reshape(P.dim)
        cont = F_continuous(P, xi)[0] if np.any(xi) else 1.0
        quant = 1.0
        if level is not None and np.any(xi):
            w = P.lattice_points(level)
            quant = F_k(w, xi)[0] / (level * w.N)
        return cls(xi=xi, level=level, normalizer_quantized=quant, normalizer_continuous=cont)

    @classmethod
    def trivial(cls, P: ReflexivePolytope, level: int | None = None) -> "GWeight":
        return cls.from_xi(P, np.zeros(P.dim), level)

    @property
    def is_trivial(self) -> bool:
        return not np.any(self.xi)

    def log_quantized(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.xi - np.log(self.normalizer_quantized)

    def log_continuous(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.xi - np.log(self.normalizer_continuous)

    def quantized(self, x) -> np.ndarray:
        return np.exp(self.log_quantized(x))

    def continuous(self, x) -> np.ndarray:
        return np.exp(self.log_continuous(x))


@dataclass
class VkRow:
    k: int
    V_k: np.ndarray
    distance: float
    futaki_residual: float
    F_k_min: float
    quantization_error: float  # |F_k(V_KS)/(k N_k) - F(V_KS)|


def vk_convergence(P: ReflexivePolytope, k_list, tol: float = 1e-10):
    """Per level: V_k, |V_k - V_KS|, Futaki residual and the quantization error at V_KS."""
    vks = minimize_F_continuous(P, tol=tol)
    F_ks = F_continuous(P, vks.xi)[0]
    rows = []
    for k in k_list:
        w = P.lattice_points(k)
        vk = minimize_F_k(w, tol=tol)
        resid = max(abs(futaki_quantized(w, vk.xi, e)) for e in np.eye(P.dim))
        rows.append(VkRow(k=k, V_k=vk.xi, distance=float(np.linalg.norm(vk.xi - vks.xi)),
                          futaki_residual=resid, F_k_min=vk.value,
                          quantization_error=float(abs(F_k(w, vks.xi)[0] / (k * w.N) - F_ks))))
    return vks, rows


def vk_table_csv(P: ReflexivePolytope, vks: SolitonVector, rows) -> str:
    n = P.dim
    head = ["k"] + [f"V_k_{i + 1}" for i in range(n)] + [f"V_KS_{i + 1}" for i in range(n)]
    head += ["distance", "futaki_residual", "F_k_min", "quantization_error"]
    lines = [",".join(head)]
    for r in rows:
        vals = [str(r.k)] + [repr(float(c)) for c in r.V_k] + [repr(float(c)) for c in vks.xi]
        vals += [repr(r.distance), repr(r.futaki_residual), repr(r.F_k_min), repr(r.quantization_error)]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def futaki_expansion_fit(P: ReflexivePolytope, xi_v, xi_w, k_list) -> list:
    """Coefficients of Fut_{V,k}(W) in the basis k^{n+1}, k^n, ..., k^0.

    For xi_v = 0 the data are integer-valued polynomials in k and are
    interpolated exactly in rational arithmetic (returns Fractions when xi_w is
    integral).  Otherwise a least-squares fit in floating point is returned.
    """
    n = P.dim
    deg = n + 1
    k_list = list(k_list)
    if len(k_list) < n + 2:
        raise IllConditionedFit(f"need at least {n + 2} levels, got {len(k_list)}")
    xi_v = np.asarray(xi_v, dtype=float)
    xi_w_in = list(np.asarray(xi_w).ravel())
    exact = not np.any(xi_v) and all(float(c).is_integer() for c in xi_w_in)
    if exact:
        w = [int(c) for c in xi_w_in]
        ys = [Fraction(-int(np.sum(P.lattice_points(k).points @ np.array(w, dtype=np.int64))))
              for k in k_list]
        V = [[Fraction(k) ** (deg - j) for j in range(deg + 1)] for k in k_list]
        coeffs = _rational_lstsq(V, ys)
        if any(sum(c * v for c, v in zip(coeffs, row)) != y for row, y in zip(V, ys)):
            raise IllConditionedFit("data are not a polynomial of degree n+1 in k")
        return coeffs
    ks = np.array(k_list, dtype=float)
    ys = np.array([futaki_quantized(P.lattice_points(k), xi_v, xi_w) for k in k_list])
    V = np.vander(ks, deg + 1)
    cond = np.linalg.cond(V)
    if cond > 1e12:
        raise IllConditionedFit(f"Vandermonde condition number {cond:.2e}")
    coeffs, *_ = np.linalg.lstsq(V, ys, rcond=None)
    return [float(c) for c in coeffs]


def _rational_lstsq(V, y):
    """Solve the normal equations exactly over Q."""
    m = len(V[0])
    A = [[sum(r[i] * r[j] for r in V) for j in range(m)] for i in range(m)]
    b = [sum(r[i] * yy for r, yy in zip(V, y)) for i in range(m)]
    # Gauss-Jordan elimination over Fractions
    for col in range(m):
        piv = next(r for r in range(col, m) if A[r][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        b[col], b[piv] = b[piv], b[col]
        for r in range(m):
            if r != col and A[r][col] != 0:
                f = A[r][col] / A[col][col]
                A[r] = [a - f * c for a, c in zip(A[r], A[col])]
                b[r] -= f * b[col]
    return [b[i] / A[i][i] for i in range(m)]
