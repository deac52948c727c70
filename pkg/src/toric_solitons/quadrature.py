"""Tensor Gauss-Legendre quadrature on a truncated box in R^n, and log-domain
exponential sums over lattice points evaluated on such grids.

Every integrand handled by this package decays at least like exp(-delta |t|),
delta the inradius of the polytope, so the box half-width R is chosen with
exp(-delta R) below the tolerance.  Panels have width ``core_width`` on
[-core_radius, core_radius] and grow geometrically outside; each refinement
level halves every panel.

Two transforms carry all heavy lifting:

* ``expsum``: t -> log sum_a exp(c_a + <a, t>) with softmax moments of a;
* ``laplace``: a -> log sum_t exp(w(t) + <a, t>) over grid nodes.

For n = 2 both are computed separably (one axis at a time), which is exact and
costs O(n_nodes * n_axis_values) instead of O(n_nodes * N).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

_CHUNK = 64


class QuadratureNotConverged(ArithmeticError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    tolerance: float = 1e-12
    order: int = 10
    core_width: float = 0.5
    core_radius: float = 8.0
    growth: float = 1.05
    refinement: int = 0
    radius_scale: float = 1.0

    def refined(self) -> "QuadratureSpec":
        return replace(self, refinement=self.refinement + 1)

    def truncation_radius(self, delta: float) -> float:
        base = (math.log(1.0 / self.tolerance) + 3.0) / delta
        return max(self.core_radius + self.core_width, self.radius_scale * base)


def panel_breaks(spec: QuadratureSpec, radius: float) -> np.ndarray:
    h, C = spec.core_width, min(spec.core_radius, radius)
    right = list(np.arange(0.0, C + 0.5 * h, h))
    if right[-1] < C:
        right.append(C)
    w = h
    while right[-1] < radius:
        w *= spec.growth
        right.append(min(right[-1] + w, radius))
    right = np.array(right)
    breaks = np.concatenate([-right[:0:-1], right])
    if spec.refinement:
        m = 2 ** spec.refinement
        fine = [np.linspace(a, b, m + 1)[:-1] for a, b in zip(breaks[:-1], breaks[1:])]
        breaks = np.concatenate(fine + [breaks[-1:]])
    return breaks


def gauss_legendre_1d(breaks: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor product of identical 1-D composite rules in ``dim`` variables."""

    dim: int
    nodes_1d: np.ndarray
    weights_1d: np.ndarray
    spec: QuadratureSpec
    radius: float

    @property
    def shape(self) -> tuple[int, ...]:
        return (len(self.nodes_1d),) * self.dim

    @property
    def size(self) -> int:
        return len(self.nodes_1d) ** self.dim

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*[self.nodes_1d] * self.dim, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def weights(self) -> np.ndarray:
        w = self.weights_1d
        out = w
        for _ in range(self.dim - 1):
            out = np.multiply.outer(out, w)
        return out.ravel()

    @cached_property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def integrate_log(self, log_values: np.ndarray) -> float:
        """log of the integral of exp(log_values)."""
        return float(logsumexp(log_values + self.log_weights))


def make_grid(dim: int, delta: float, spec: QuadratureSpec) -> Grid:
    R = spec.truncation_radius(delta)
    nodes, weights = gauss_legendre_1d(panel_breaks(spec, R), spec.order)
    return Grid(dim=dim, nodes_1d=nodes, weights_1d=weights, spec=spec, radius=R)


# ---------------------------------------------------------------- transforms


@dataclass
class ExpSum:
    """log S(t) = log sum_a exp(c_a + <a,t>) and softmax moments of a at each node."""

    log_sum: np.ndarray  # (Q,)
    mean: np.ndarray | None = None  # (Q, n)
    cov: np.ndarray | None = None  # (Q, n, n), centered


def expsum(points: np.ndarray, logc: np.ndarray, t: np.ndarray, moments: int = 0) -> ExpSum:
    """Dense evaluation at arbitrary nodes t of shape (Q, n)."""
    pts = points.astype(float)
    logs, means, covs = [], [], []
    for lo in range(0, len(t), 4096):
        z = t[lo:lo + 4096] @ pts.T + logc
        ls = logsumexp(z, axis=1)
        logs.append(ls)
        if moments:
            p = np.exp(z - ls[:, None])
            mu = p @ pts
            means.append(mu)
            if moments > 1:
                d = pts[None, :, :] - mu[:, None, :]
                covs.append(np.einsum("qa,qai,qaj->qij", p, d, d))
    out = ExpSum(np.concatenate(logs))
    if moments:
        out.mean = np.concatenate(means)
    if moments > 1:
        out.cov = np.concatenate(covs)
    return out


def laplace(points: np.ndarray, logw: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Dense: log sum_q exp(logw_q + <a, t_q>) for every point a."""
    pts = points.astype(float)
    out = np.empty(len(pts))
    for lo in range(0, len(pts), 256):
        z = pts[lo:lo + 256] @ t.T + logw
        out[lo:lo + 256] = logsumexp(z, axis=1)
    return out


def _box_layout(points: np.ndarray):
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    a1 = np.arange(lo[0], hi[0] + 1)
    a2 = np.arange(lo[1], hi[1] + 1)
    i1 = points[:, 0] - lo[0]
    i2 = points[:, 1] - lo[1]
    return a1.astype(float), a2.astype(float), i1, i2


def _softmax_stats(z, vals, axis):
    """logsumexp, mean and centered variance of ``vals`` under softmax(z) along ``axis``."""
    ls = logsumexp(z, axis=axis, keepdims=True)
    finite = np.isfinite(ls)
    p = np.exp(np.where(finite, z - np.where(finite, ls, 0.0), -np.inf))
    mean = np.sum(p * vals, axis=axis, keepdims=True)
    var = np.sum(p * (vals - mean) ** 2, axis=axis, keepdims=True)
    return ls, p, mean, var


def expsum_grid(points: np.ndarray, logc: np.ndarray, grid: Grid, moments: int = 0) -> ExpSum:
    """``expsum`` on all grid nodes (flattened C-order), separable when dim == 2."""
    if grid.dim != 2:
        return expsum(points, logc, grid.points, moments)
    a1, a2, i1, i2 = _box_layout(points)
    L = np.full((len(a1), len(a2)), -np.inf)
    L[i1, i2] = logc
    t = grid.nodes_1d
    # inner stage over a2: (na1, nt, na2)
    z = L[:, None, :] + t[None, :, None] * a2[None, None, :]
    M, _, m2, v2 = _softmax_stats(z, a2[None, None, :], axis=2)
    M, m2, v2 = M[..., 0], m2[..., 0], v2[..., 0]  # (na1, nt)
    nt = len(t)
    log_sum = np.empty((nt, nt))
    mean = np.empty((nt, nt, 2)) if moments else None
    cov = np.empty((nt, nt, 2, 2)) if moments > 1 else None
    for lo in range(0, nt, _CHUNK):
        ti = t[lo:lo + _CHUNK]
        # outer stage over a1: (ci, nt, na1)
        z = ti[:, None, None] * a1[None, None, :] + M.T[None, :, :]
        ls, p, e1, var1 = _softmax_stats(z, a1[None, None, :], axis=2)
        log_sum[lo:lo + _CHUNK] = ls[..., 0]
        if moments:
            e2 = np.sum(p * m2.T[None], axis=2, keepdims=True)
            mean[lo:lo + _CHUNK, :, 0] = e1[..., 0]
            mean[lo:lo + _CHUNK, :, 1] = e2[..., 0]
            if moments > 1:
                d1 = a1[None, None, :] - e1
                d2 = m2.T[None] - e2
                var2 = np.sum(p * (v2.T[None] + d2 ** 2), axis=2)
                c12 = np.sum(p * d1 * d2, axis=2)
                cov[lo:lo + _CHUNK, :, 0, 0] = var1[..., 0]
                cov[lo:lo + _CHUNK, :, 1, 1] = var2
                cov[lo:lo + _CHUNK, :, 0, 1] = c12
                cov[lo:lo + _CHUNK, :, 1, 0] = c12
    out = ExpSum(log_sum.ravel())
    if moments:
        out.mean = mean.reshape(-1, 2)
    if moments > 1:
        out.cov = cov.reshape(-1, 2, 2)
    return out


def laplace_grid(points: np.ndarray, logw: np.ndarray, grid: Grid) -> np.ndarray:
    """``laplace`` over all grid nodes; ``logw`` already includes log quadrature weights."""
    if grid.dim != 2:
        return laplace(points, logw, grid.points)
    a1, a2, i1, i2 = _box_layout(points)
    t = grid.nodes_1d
    nt = len(t)
    W = logw.reshape(nt, nt)
    # stage over t2: A[i, b] = log sum_j exp(W[i, j] + a2_b t_j)
    A = np.empty((nt, len(a2)))
    for lo in range(0, nt, _CHUNK):
        z = W[lo:lo + _CHUNK, None, :] + a2[None, :, None] * t[None, None, :]
        A[lo:lo + _CHUNK] = logsumexp(z, axis=2)
    # stage over t1: out[a, b] = log sum_i exp(a1_a t_i + A[i, b])
    z = a1[:, None, None] * t[None, None, :] + A.T[None, :, :]
    out = logsumexp(z, axis=2)
    return out[i1, i2]
