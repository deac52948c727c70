"""Torus-invariant metrics on -K_X as convex log-sum-exp potentials on R^n.

A level-m metric is

    phi(t) = (1/m) log sum_a c_a exp(<a, t>) + constant,

with a ranging over the lattice points of mP.  Its gradient (the moment map)
is the softmax barycenter of a/m and lies in int(P); its Hessian is the
softmax covariance divided by m.  Angular (2 pi)^n factors are dropped
throughout; the reference metric is normalized so that L(phi_0) = 0.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from . import quadrature as quad
from .polytope import ReflexivePolytope
from .quadrature import Grid, QuadratureNotConverged, QuadratureSpec

logger = logging.getLogger(__name__)

DEFAULT_SPEC = QuadratureSpec()


class DivergentIntegral(ArithmeticError):
    pass


@lru_cache(maxsize=16)
def _grid(dim: int, delta: float, spec: QuadratureSpec) -> Grid:
    return quad.make_grid(dim, delta, spec)


def get_grid(P: ReflexivePolytope, spec: QuadratureSpec | None = None) -> Grid:
    return _grid(P.dim, P.inradius, spec or DEFAULT_SPEC)


@dataclass
class GridEval:
    phi: np.ndarray  # (Q,)
    grad: np.ndarray  # (Q, n)
    hess: np.ndarray  # (Q, n, n)

    @property
    def det(self) -> np.ndarray:
        h = self.hess
        if h.shape[1] == 1:
            d = h[:, 0, 0]
        elif h.shape[1] == 2:
            d = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]
        else:
            d = np.linalg.det(h)
        return np.maximum(d, 0.0)


@dataclass(frozen=True, eq=False)
class TorusMetric:
    polytope: ReflexivePolytope
    level: int
    log_coefficients: np.ndarray  # aligned with polytope.lattice_points(level)
    constant: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("metric level must be >= 1")
        lc = np.asarray(self.log_coefficients, dtype=float)
        if lc.shape != (self.polytope.lattice_points(self.level).N,):
            raise ValueError("one coefficient per lattice point of mP is required")
        if not np.all(np.isfinite(lc)):
            raise ValueError("coefficients must be strictly positive and finite")
        object.__setattr__(self, "log_coefficients", lc)

    @classmethod
    def from_coefficients(cls, P, level, coefficients, constant=0.0) -> "TorusMetric":
        c = np.asarray(coefficients, dtype=float)
        if np.any(c <= 0):
            raise ValueError("coefficients must be strictly positive")
        return cls(P, level, np.log(c), constant)

    @property
    def support(self) -> np.ndarray:
        return self.polytope.lattice_points(self.level).points

    @property
    def coefficients(self) -> np.ndarray:
        return np.exp(self.log_coefficients)

    def shifted(self, c: float) -> "TorusMetric":
        return TorusMetric(self.polytope, self.level, self.log_coefficients, self.constant + c)

    def pullback(self, S: np.ndarray) -> "TorusMetric":
        """phi(S^T t) for a lattice symmetry S of P (permutes the coefficients)."""
        pts = self.support
        index = {tuple(p): i for i, p in enumerate(pts)}
        # coefficient at b is the old coefficient at S^{-1} b
        moved = pts @ np.asarray(S).T
        lc = np.empty_like(self.log_coefficients)
        for i, b in enumerate(moved):
            lc[index[tuple(b)]] = self.log_coefficients[i]
        return TorusMetric(self.polytope, self.level, lc, self.constant)

    # -------------------------------------------------------- dense evaluation
    def _dense(self, t, moments):
        t = np.asarray(t, dtype=float).reshape(-1, self.polytope.dim)
        return quad.expsum(self.support, self.log_coefficients, t, moments)

    def __call__(self, t) -> np.ndarray:
        return self._dense(t, 0).log_sum / self.level + self.constant

    def gradient(self, t) -> np.ndarray:
        return self._dense(t, 1).mean / self.level

    def hessian(self, t) -> np.ndarray:
        return self._dense(t, 2).cov / self.level

    # ---------------------------------------------------------- grid evaluation
    def on_grid(self, grid: Grid, moments: int = 2) -> GridEval:
        """Values (and gradient/Hessian when ``moments`` asks for them) on grid nodes, cached."""
        key = id(grid)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not grid or hit[1] < moments:
            es = quad.expsum_grid(self.support, self.log_coefficients, grid, moments=moments)
            m = self.level
            hit = (grid, moments, GridEval(phi=es.log_sum / m,
                                           grad=None if es.mean is None else es.mean / m,
                                           hess=None if es.cov is None else es.cov / m))
            self._cache[key] = hit
        ev = hit[2]
        if self.constant:
            return GridEval(phi=ev.phi + self.constant, grad=ev.grad, hess=ev.hess)
        return ev

    def grid_values(self, axes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(points, phi, grad phi) on a tensor grid of the given per-axis nodes."""
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        es = self._dense(pts, 1)
        return pts, es.log_sum / self.level + self.constant, es.mean / self.level

    def to_csv(self, axes) -> str:
        pts, phi, grad = self.grid_values(axes)
        n = self.polytope.dim
        head = [f"t{i + 1}" for i in range(n)] + ["phi"] + [f"dphi_{i + 1}" for i in range(n)]
        lines = [",".join(head)]
        for p, f, g in zip(pts, phi, grad):
            lines.append(",".join([repr(float(c)) for c in p] + [repr(float(f))]
                                  + [repr(float(c)) for c in g]))
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {"level": self.level, "coefficients": self.coefficients.tolist(),
                "constant": self.constant}

    @classmethod
    def from_json(cls, P, data) -> "TorusMetric":
        return cls.from_coefficients(P, int(data["level"]), data["coefficients"],
                                     float(data.get("constant", 0.0)))


# ------------------------------------------------------------------ measures


@dataclass(frozen=True)
class MAMeasure:
    """MA(psi): det D^2 psi dt / vol(P), a probability measure."""

    metric: TorusMetric

    def log_density(self, grid: Grid) -> np.ndarray:
        ev = self.metric.on_grid(grid)
        with np.errstate(divide="ignore"):
            return np.log(ev.det) - math.log(self.metric.polytope.volume)


@dataclass(frozen=True)
class MuMeasure:
    """mu_psi: exp(-psi) dt."""

    metric: TorusMetric

    def log_density(self, grid: Grid) -> np.ndarray:
        return -self.metric.on_grid(grid, 0).phi


def ma_measure(phi: TorusMetric) -> MAMeasure:
    return MAMeasure(phi)


def mu_measure(phi: TorusMetric) -> MuMeasure:
    return MuMeasure(phi)


def mass(measure, spec: QuadratureSpec | None = None) -> float:
    grid = get_grid(measure.metric.polytope, spec)
    return math.exp(grid.integrate_log(measure.log_density(grid)))


def ma_g_mass(phi: TorusMetric, g, spec: QuadratureSpec | None = None) -> float:
    """Mass of g(grad phi) MA(phi) with the continuous normalization of g."""
    grid = get_grid(phi.polytope, spec)
    ev = phi.on_grid(grid)
    dens = g.continuous(ev.grad) * ev.det / phi.polytope.volume
    return grid.integrate(dens)


def reference_metric(P: ReflexivePolytope, spec: QuadratureSpec | None = None) -> TorusMetric:
    """Unit-coefficient level-1 metric, shifted so that int exp(-phi_0) dt = 1."""
    raw = TorusMetric(P, 1, np.zeros(P.lattice_points(1).N))
    grid = get_grid(P, spec)
    c0 = grid.integrate_log(-raw.on_grid(grid, 0).phi)
    return raw.shifted(c0)


def L(phi: TorusMetric, spec: QuadratureSpec | None = None) -> float:
    """-log int exp(-phi) dt."""
    grid = get_grid(phi.polytope, spec)
    val = grid.integrate_log(-phi.on_grid(grid, 0).phi)
    if not math.isfinite(val):
        raise DivergentIntegral("exp(-phi) is not integrable")
    return -val


def L_mu0(phi: TorusMetric, phi0: TorusMetric, spec: QuadratureSpec | None = None) -> float:
    """int (phi - phi_0) dMA(phi_0), with the discrete MA(phi_0) normalized to mass 1."""
    grid = get_grid(phi.polytope, spec)
    w = grid.weights * phi0.on_grid(grid).det
    return float(w @ (phi.on_grid(grid, 0).phi - phi0.on_grid(grid, 0).phi) / w.sum())


def moment_identity_residual(phi: TorusMetric, spec: QuadratureSpec | None = None) -> float:
    """|int grad phi exp(-phi) dt| relative to int exp(-phi) dt (vanishes exactly)."""
    grid = get_grid(phi.polytope, spec)
    ev = phi.on_grid(grid, 1)
    shift = ev.phi.min()
    e = grid.weights * np.exp(-(ev.phi - shift))
    return float(np.linalg.norm(e @ ev.grad) / e.sum())


def _path_det(ev, ev0):
    """s -> det(s D2phi + (1-s) D2phi_0) on the grid; for n <= 2 a quadratic in s."""
    n = ev.hess.shape[1]
    if n > 2:
        return lambda s: GridEval(None, None, s * ev.hess + (1 - s) * ev0.hess).det
    d0, d1 = GridEval(None, None, ev0.hess).det, GridEval(None, None, ev.hess).det
    dh = GridEval(None, None, 0.5 * (ev.hess + ev0.hess)).det
    c1, c2 = 4 * dh - 3 * d0 - d1, 2 * (d0 + d1) - 4 * dh
    return lambda s: np.maximum(d0 + s * (c1 + s * c2), 0.0)


def _energy_at(grid, ev, ev0, diff, g, M):
    # each MA_g(phi_s) is renormalized to a discrete probability measure
    s, ws = np.polynomial.legendre.leggauss(M)
    s, ws = 0.5 * (s + 1), 0.5 * ws
    det = _path_det(ev, ev0)
    tilt = None
    if g is not None and not g.is_trivial:
        tilt = (ev0.grad @ g.xi, (ev.grad - ev0.grad) @ g.xi)
    total = 0.0
    for si, wi in zip(s, ws):
        w = grid.weights * det(si)
        if tilt is not None:
            w = w * np.exp(tilt[0] + si * tilt[1])
        total += float(wi) * float(w @ diff / w.sum())
    return total


def energy_g(phi: TorusMetric, phi0: TorusMetric, g=None, spec: QuadratureSpec | None = None,
             nodes: int = 16, max_nodes: int = 256) -> float:
    """E_g(phi): integral over the segment phi_s = s phi + (1-s) phi_0 of
    int (phi - phi_0) MA_g(phi_s), with the path rule doubled until stable."""
    spec = spec or DEFAULT_SPEC
    grid = get_grid(phi.polytope, spec)
    ev, ev0 = phi.on_grid(grid), phi0.on_grid(grid)
    diff = ev.phi - ev0.phi
    M = nodes
    prev = _energy_at(grid, ev, ev0, diff, g, M)
    while M < max_nodes:
        M *= 2
        cur = _energy_at(grid, ev, ev0, diff, g, M)
        if abs(cur - prev) <= spec.tolerance * max(1.0, abs(cur)):
            return float(cur)
        prev = cur
    raise QuadratureNotConverged(f"path rule not stable at {M} nodes: change {abs(cur - prev):.2e}")


def J_g(phi, phi0, g=None, spec=None) -> float:
    return -energy_g(phi, phi0, g, spec) + L_mu0(phi, phi0, spec)


def D_g(phi, phi0, g=None, spec=None) -> float:
    return -energy_g(phi, phi0, g, spec) + L(phi, spec)


def grid_axes(spec: str | None, dim: int):
    """Parse "min,max,npts" into per-axis node arrays."""
    lo, hi, npts = (-3.0, 3.0, 13) if spec is None else spec.split(",")
    ax = np.linspace(float(lo), float(hi), int(npts))
    return [ax] * dim


def sup_difference(a: TorusMetric, b: TorusMetric, axes) -> float:
    _, fa, _ = a.grid_values(axes)
    _, fb, _ = b.grid_values(axes)
    return float(np.abs(fa - fb).max())


def oscillation(a: TorusMetric, b: TorusMetric, axes) -> float:
    """sup |a - b - c| minimized over constants c."""
    _, fa, _ = a.grid_values(axes)
    _, fb, _ = b.grid_values(axes)
    d = fa - fb
    return float(0.5 * (d.max() - d.min()))
