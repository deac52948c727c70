"""Quantized energy, J and Ding functionals on diagonal inner products.

    E_g^(k)(H) = -(1/(k N_k)) sum_a g(a/k) log(H_a / H0_a),
    J_g^(k)(H) = -E_g^(k)(H) + L_mu0(FS_k(H)),
    D_g^(k)(H) = -E_g^(k)(H) + L(FS_k(H)),

with H0 = Hilb_{k,mu0}(phi_0), mu0 = MA(phi_0) and g normalized against nu_k.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from . import metric as mt
from .polytope import ReflexivePolytope
from .quadrature import QuadratureSpec
from .quantization import DiagonalInnerProduct, LevelMismatch, fs, hilb
from .vectorfield import GWeight, futaki_quantized, minimize_F_k

# exp(tW)^* acts on diagonal entries by H_a -> exp(TORUS_ACTION_SIGN * t <xi_W, a>) H_a.
# With this sign d/dt D^(k)_{g_V}(exp(tW)^* H) = Fut_{V,k}(W) / (k N_k Z_k(V)),
# Z_k(V) = F_k(V) / (k N_k) the level-k normalizer of g_V.
TORUS_ACTION_SIGN = -1.0
FD_STEP = 1e-5


@dataclass(eq=False)
class Reference:
    """phi_0, mu_0 = MA(phi_0) and the reference products H0 at each level."""

    polytope: ReflexivePolytope
    spec: QuadratureSpec | None = None
    _H0: dict = field(default_factory=dict, repr=False)

    @cached_property
    def phi0(self) -> mt.TorusMetric:
        return mt.reference_metric(self.polytope, self.spec)

    @cached_property
    def mu0(self) -> mt.MAMeasure:
        return mt.MAMeasure(self.phi0)

    def H0(self, k: int) -> DiagonalInnerProduct:
        if k not in self._H0:
            self._H0[k] = hilb(self.phi0, k, None, self.mu0, self.spec)
        return self._H0[k]


@lru_cache(maxsize=32)
def reference(P: ReflexivePolytope, spec: QuadratureSpec | None = None) -> Reference:
    return Reference(P, spec)


def _g_weights(g: GWeight | None, H: DiagonalInnerProduct) -> np.ndarray:
    if g is None or g.is_trivial:
        return np.ones(len(H.log_entries))
    if g.level != H.level:
        raise LevelMismatch(f"g normalized at level {g.level}, H at level {H.level}")
    return g.quantized(H.points / H.level)


def energy_g_k(H: DiagonalInnerProduct, g: GWeight | None = None,
               ref: Reference | None = None) -> float:
    ref = ref or reference(H.polytope)
    H0 = ref.H0(H.level)
    k, N = H.level, len(H.log_entries)
    return float(-(_g_weights(g, H) @ (H.log_entries - H0.log_entries)) / (k * N))


def J_g_k(H, g=None, ref=None) -> float:
    ref = ref or reference(H.polytope)
    return -energy_g_k(H, g, ref) + mt.L_mu0(fs(H), ref.phi0, ref.spec)


def D_g_k(H, g=None, ref=None) -> float:
    ref = ref or reference(H.polytope)
    return -energy_g_k(H, g, ref) + mt.L(fs(H), ref.spec)


@dataclass(frozen=True, eq=False)
class Geodesic:
    """H_t,a = exp(-mu_a t) H0_a joining H0 (t=0) to H1 (t=1)."""

    H0: DiagonalInnerProduct
    H1: DiagonalInnerProduct

    def __post_init__(self):
        if self.H0.level != self.H1.level or self.H0.polytope is not self.H1.polytope:
            raise LevelMismatch("geodesic endpoints must share polytope and level")

    @property
    def exponents(self) -> np.ndarray:
        return -(self.H1.log_entries - self.H0.log_entries)

    def __call__(self, t: float) -> DiagonalInnerProduct:
        return DiagonalInnerProduct(self.H0.polytope, self.H0.level,
                                    self.H0.log_entries - t * self.exponents)

    def energy_slope(self, g: GWeight | None = None) -> float:
        """d/dt E_g^(k)(H_t) = (1/(k N_k)) sum g(a/k) mu_a, constant in t."""
        k, N = self.H0.level, len(self.H0.log_entries)
        return float(_g_weights(g, self.H0) @ self.exponents / (k * N))


@dataclass
class DingSlope:
    slope: float
    futaki_over_kN: float
    normalizer: float  # Z_k(V)
    richardson: float  # |slope(h) - slope(h/2)|

    @property
    def difference(self) -> float:
        return abs(self.slope - self.futaki_over_kN)


def ding_slope_vs_futaki(P: ReflexivePolytope, k: int, xi_w, xi_v=None,
                         spec: QuadratureSpec | None = None, h: float = FD_STEP) -> DingSlope:
    """Central-difference slope of t -> D^(k)_{g_V}(exp(tW)^* H0) at t = 0 (V = V_k by default)."""
    ref = reference(P, spec)
    w = P.lattice_points(k)
    if xi_v is None:
        xi_v = minimize_F_k(w).xi
    g = GWeight.from_xi(P, xi_v, k)
    H0 = ref.H0(k)
    xi_w = np.asarray(xi_w, dtype=float)

    def ding(t):
        Ht = DiagonalInnerProduct(P, k, H0.log_entries
                                  + TORUS_ACTION_SIGN * t * (H0.points @ xi_w))
        return D_g_k(Ht, g, ref)

    def cd(step):
        return (ding(step) - ding(-step)) / (2 * step)

    s1, s2 = cd(h), cd(h / 2)
    fut = futaki_quantized(w, xi_v, xi_w) / (k * w.N)
    return DingSlope(slope=s2, futaki_over_kN=fut, normalizer=g.normalizer_quantized,
                     richardson=abs(s1 - s2))


@dataclass
class FunctionalRow:
    k: int
    functional: str
    quantized: float
    continuous: float

    @property
    def error(self) -> float:
        return abs(self.quantized - self.continuous)


def prop33_convergence(phi: mt.TorusMetric, xi_g, k_list,
                       spec: QuadratureSpec | None = None) -> list[FunctionalRow]:
    """E, J, D quantized at Hilb_{k,mu0}(phi) against their continuous values."""
    P = phi.polytope
    ref = reference(P, spec)
    g_cont = GWeight.from_xi(P, xi_g)
    cont = {"E": mt.energy_g(phi, ref.phi0, g_cont, spec)}
    cont["J"] = -cont["E"] + mt.L_mu0(phi, ref.phi0, spec)
    cont["D"] = -cont["E"] + mt.L(phi, spec)
    rows = []
    for k in k_list:
        g = GWeight.from_xi(P, xi_g, k)
        H = hilb(phi, k, None, ref.mu0, spec)
        e = energy_g_k(H, g, ref)
        phik = fs(H)
        quant = {"E": e, "J": -e + mt.L_mu0(phik, ref.phi0, spec), "D": -e + mt.L(phik, spec)}
        rows += [FunctionalRow(k, name, quant[name], cont[name]) for name in ("E", "J", "D")]
    return rows


def functional_csv(rows) -> str:
    lines = ["k,functional,quantized,continuous,error"]
    lines += [f"{r.k},{r.functional},{float(r.quantized)!r},{float(r.continuous)!r},{float(r.error)!r}"
              for r in rows]
    return "\n".join(lines) + "\n"
