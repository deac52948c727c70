"""Hilb and FS operators between torus metrics and diagonal inner products.

Monomial sections s_a, a in kP, span the one-dimensional weight spaces of
H^0(X, -kK_X), so every torus-invariant inner product is diagonal in them:

    Hilb_{k,mu,g}(phi)_a = g(a/k)^{-1} int exp(<a,t> - k phi(t)) dmu(t),
    FS_k(H)(t)          = (1/k) log( (1/N_k) sum_a exp(<a,t>) / H_a ).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import quadrature as quad
from .metric import MAMeasure, MuMeasure, TorusMetric, get_grid
from .polytope import ReflexivePolytope
from .quadrature import QuadratureSpec
from .vectorfield import GWeight


class LevelMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiagonalInnerProduct:
    polytope: ReflexivePolytope
    level: int
    log_entries: np.ndarray  # log H_a, lexicographic lattice order

    def __post_init__(self):
        le = np.asarray(self.log_entries, dtype=float)
        if le.shape != (self.polytope.lattice_points(self.level).N,):
            raise ValueError("one entry per lattice point of kP is required")
        if not np.all(np.isfinite(le)):
            raise ValueError("entries must be positive and finite")
        object.__setattr__(self, "log_entries", le)

    @classmethod
    def from_entries(cls, P, level, entries) -> "DiagonalInnerProduct":
        e = np.asarray(entries, dtype=float)
        if np.any(e <= 0):
            raise ValueError("entries must be strictly positive")
        return cls(P, level, np.log(e))

    @property
    def entries(self) -> np.ndarray:
        return np.exp(self.log_entries)

    @property
    def points(self) -> np.ndarray:
        return self.polytope.lattice_points(self.level).points

    def scaled(self, c: float) -> "DiagonalInnerProduct":
        return DiagonalInnerProduct(self.polytope, self.level, self.log_entries + math.log(c))

    def torus_action(self, xi_w, t: float = 1.0) -> "DiagonalInnerProduct":
        """exp(tW)^*: H_a -> exp(-t <xi_W, a>) H_a."""
        return DiagonalInnerProduct(self.polytope, self.level,
                                    self.log_entries - t * (self.points @ np.asarray(xi_w, float)))

    def permuted(self, S) -> "DiagonalInnerProduct":
        """Entries moved by a lattice symmetry: new entry at S a is the old entry at a."""
        pts = self.points
        index = {tuple(p): i for i, p in enumerate(pts)}
        out = np.empty_like(self.log_entries)
        for i, b in enumerate(pts @ np.asarray(S).T):
            out[index[tuple(b)]] = self.log_entries[i]
        return DiagonalInnerProduct(self.polytope, self.level, out)

    def to_csv(self) -> str:
        n = self.polytope.dim
        lines = [",".join([f"a{i + 1}" for i in range(n)] + ["H", "log_H"])]
        for p, le in zip(self.points, self.log_entries):
            lines.append(",".join([str(int(c)) for c in p] + [repr(float(np.exp(le))),
                                                               repr(float(le))]))
        return "\n".join(lines) + "\n"


def _log_g(g: GWeight | None, points: np.ndarray, k: int) -> np.ndarray:
    if g is None or g.is_trivial:
        return np.zeros(len(points))
    return g.log_quantized(points / k)


def hilb(phi: TorusMetric, k: int, g: GWeight | None = None, measure=None,
         spec: QuadratureSpec | None = None) -> DiagonalInnerProduct:
    """Hilb_{k,mu,g}(phi); ``measure=None`` means mu_phi, else an MA/Mu measure object."""
    P = phi.polytope
    grid = get_grid(P, spec)
    if measure is None:
        measure = MuMeasure(phi)
    if g is not None and g.level is not None and g.level != k and not g.is_trivial:
        raise LevelMismatch(f"g normalized at level {g.level}, Hilb requested at level {k}")
    logw = grid.log_weights - k * phi.on_grid(grid, 0).phi + measure.log_density(grid)
    pts = P.lattice_points(k).points
    logH = quad.laplace_grid(pts, logw, grid) - _log_g(g, pts, k)
    return DiagonalInnerProduct(P, k, logH)


def fs(H: DiagonalInnerProduct) -> TorusMetric:
    N = len(H.log_entries)
    return TorusMetric(H.polytope, H.level, -H.log_entries - math.log(N))


@dataclass(frozen=True, eq=False)
class BergmanFunction:
    """rho_{k,mu0,g}(phi)(t) = sum_a g(a/k) exp(<a,t> - k phi(t)) / H^{mu0}_a."""

    phi: TorusMetric
    level: int
    g: GWeight | None
    H_mu0: DiagonalInnerProduct
    measure: object

    def _logc(self):
        pts = self.H_mu0.points
        return _log_g(self.g, pts, self.level) - self.H_mu0.log_entries

    def log_rho(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1, self.phi.polytope.dim)
        es = quad.expsum(self.H_mu0.points, self._logc(), t)
        return es.log_sum - self.level * self.phi(t)

    def __call__(self, t) -> np.ndarray:
        return np.exp(self.log_rho(t))

    def log_rho_grid(self, spec=None) -> np.ndarray:
        grid = get_grid(self.phi.polytope, spec)
        es = quad.expsum_grid(self.H_mu0.points, self._logc(), grid)
        return es.log_sum - self.level * self.phi.on_grid(grid, 0).phi

    @property
    def N(self) -> int:
        return len(self.H_mu0.log_entries)

    def measure_mass(self, spec=None) -> float:
        """Total mass of the g-Bergman measure (1/N_k) rho mu_0."""
        grid = get_grid(self.phi.polytope, spec)
        lr = self.log_rho_grid(spec) + self.measure.log_density(grid) - math.log(self.N)
        return math.exp(grid.integrate_log(lr))


def bergman_function(phi: TorusMetric, k: int, g: GWeight | None = None, mu0=None,
                     spec: QuadratureSpec | None = None) -> BergmanFunction:
    """``mu0=None`` selects MA(phi_0) for the reference metric of P."""
    if mu0 is None:
        from .metric import reference_metric

        mu0 = MAMeasure(reference_metric(phi.polytope, spec))
    H = hilb(phi, k, None, mu0, spec)
    return BergmanFunction(phi=phi, level=k, g=g, H_mu0=H, measure=mu0)


def check_identity_311(phi: TorusMetric, k: int, g: GWeight | None = None, mu0=None, t=None,
                       spec: QuadratureSpec | None = None) -> float:
    """sup_t |FS_k(Hilb_{k,mu0,g}(phi)) - phi - (1/k) log(rho/N_k)| on test points t."""
    P = phi.polytope
    if mu0 is None:
        from .metric import reference_metric

        mu0 = MAMeasure(reference_metric(P, spec))
    if t is None:
        ax = np.linspace(-4, 4, 17)
        t = np.stack([m.ravel() for m in np.meshgrid(*[ax] * P.dim, indexing="ij")], axis=1)
    lhs = fs(hilb(phi, k, g, mu0, spec))(t) - phi(t)
    rho = bergman_function(phi, k, g, mu0, spec)
    rhs = (rho.log_rho(t) - math.log(rho.N)) / k
    return float(np.abs(lhs - rhs).max())


def bergman_density_deviation(phi: TorusMetric, k: int, g: GWeight | None = None, mu0=None, t=None,
                     spec: QuadratureSpec | None = None) -> float:
    """sup_t |(1/N_k) rho_{k,mu0,g}(phi) (dmu0/dt) / (MA_g(phi) density) - 1|."""
    P = phi.polytope
    if mu0 is None:
        from .metric import reference_metric

        mu0 = MAMeasure(reference_metric(P, spec))
    if t is None:
        ax = np.linspace(-3, 3, 13)
        t = np.stack([m.ravel() for m in np.meshgrid(*[ax] * P.dim, indexing="ij")], axis=1)
    rho = bergman_function(phi, k, g, mu0, spec)
    ref = mu0.metric
    if isinstance(mu0, MAMeasure):
        log_mu0 = np.log(_det(ref.hessian(t))) - math.log(P.volume)
    else:
        log_mu0 = -ref(t)
    grad = phi.gradient(t)
    log_g = np.zeros(len(t)) if g is None or g.is_trivial else g.log_continuous(grad)
    log_ma_g = log_g + np.log(_det(phi.hessian(t))) - math.log(P.volume)
    ratio = np.exp(rho.log_rho(t) - math.log(rho.N) + log_mu0 - log_ma_g)
    return float(np.abs(ratio - 1).max())


def _det(h):
    return np.linalg.det(h) if h.shape[1] > 2 else (
        h[:, 0, 0] if h.shape[1] == 1 else h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] ** 2)


def fs_hilb_deviation(phi: TorusMetric, k: int, g: GWeight | None = None, mu0=None, t=None,
                      spec: QuadratureSpec | None = None) -> float:
    """sup_t |FS_k(Hilb_{k,mu0,g}(phi)) - phi| on test points."""
    P = phi.polytope
    if mu0 is None:
        from .metric import reference_metric

        mu0 = MAMeasure(reference_metric(P, spec))
    if t is None:
        ax = np.linspace(-3, 3, 13)
        t = np.stack([m.ravel() for m in np.meshgrid(*[ax] * P.dim, indexing="ij")], axis=1)
    return float(np.abs(fs(hilb(phi, k, g, mu0, spec))(t) - phi(t)).max())
