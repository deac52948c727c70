"""Reflexive moment polytopes of toric Fano manifolds.

A polytope is given by primitive integer facet normals ``nu`` with the fixed
offset -1, i.e. ``P = {x : <x, nu> >= -1}``.  Vertices are derived, never input.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np
import sympy as sp
from scipy.optimize import linprog

logger = logging.getLogger(__name__)


class PolytopeError(ValueError):
    """Validation failure; ``invariant`` names the violated condition."""

    invariant = "polytope"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def report(self):
        return {"invariant": self.invariant, "message": str(self), **self.details}


class NonPrimitiveNormal(PolytopeError):
    invariant = "primitive_normals"


class OriginNotInterior(PolytopeError):
    invariant = "origin_interior"


class NonIntegralVertex(PolytopeError):
    invariant = "integral_vertices"


class Unbounded(PolytopeError):
    invariant = "bounded"


@dataclass(frozen=True)
class WeightSet:
    """Lattice points of kP in lexicographic order."""

    level: int
    points: np.ndarray  # (N_k, n) int64

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def rescaled(self) -> np.ndarray:
        return self.points / self.level

    def to_csv(self) -> str:
        n = self.dim
        rows = [",".join(f"x{i + 1}" for i in range(n))]
        rows += [",".join(str(int(c)) for c in p) for p in self.points]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True, eq=False)
class ReflexivePolytope:
    name: str
    dim: int
    facet_normals: np.ndarray  # (F, n) int64
    vertices: tuple = field(repr=False)  # tuple of tuples of Fraction

    @cached_property
    def vertex_array(self) -> np.ndarray:
        return np.array([[float(c) for c in v] for v in self.vertices])

    @cached_property
    def inradius(self) -> float:
        """Euclidean distance from the origin to the nearest facet hyperplane."""
        return float(min(1.0 / np.linalg.norm(nu) for nu in self.facet_normals))

    @cached_property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        v = np.array([[int(c) for c in vert] for vert in self.vertices], dtype=np.int64)
        return v.min(axis=0), v.max(axis=0)

    def contains(self, x, k: int = 1) -> np.ndarray:
        """Membership in kP, exact for integer or Fraction input."""
        x = np.asarray(x)
        if x.dtype == object:
            return np.array([all(sum(a * int(b) for a, b in zip(row, nu)) >= -k
                                 for nu in self.facet_normals) for row in np.atleast_2d(x)])
        return np.all(np.atleast_2d(x) @ self.facet_normals.T >= -k, axis=1)

    def facet_margin(self, x) -> float:
        """min_F <x, nu_F> + 1; positive iff x is interior."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        return (x @ self.facet_normals.T + 1.0).min(axis=1) if len(x) > 1 else \
            float((x @ self.facet_normals.T + 1.0).min())

    @cached_property
    def _lattice_cache(self) -> dict:
        return {}

    def lattice_points(self, k: int) -> WeightSet:
        """kP intersected with Z^n, sorted lexicographically."""
        if k < 1:
            raise ValueError(f"level must be >= 1, got {k}")
        cache = self._lattice_cache
        if k not in cache:
            lo, hi = self.bounding_box
            axes = [np.arange(k * a, k * b + 1) for a, b in zip(lo, hi)]
            # meshgrid with ij indexing yields lexicographic order after reshape
            box = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
            keep = np.all(box @ self.facet_normals.T >= -k, axis=1)
            pts = box[keep].astype(np.int64)
            pts.setflags(write=False)
            cache[k] = WeightSet(level=k, points=pts)
        return cache[k]

    @cached_property
    def volume(self) -> float:
        """Euclidean volume of P."""
        return float(sum(abs(float(s.det())) for s in self.simplices()) / math.factorial(self.dim))

    def simplices(self) -> list:
        """Triangulation of P as sympy matrices whose rows are vertices (n+1 rows)."""
        verts = [sp.Matrix([list(v)]) for v in self.vertices]
        if self.dim == 1:
            lo, hi = sorted(verts, key=lambda m: m[0])
            return [_simplex_matrix([lo, hi])]
        from scipy.spatial import Delaunay

        tri = Delaunay(self.vertex_array)
        return [_simplex_matrix([verts[i] for i in s]) for s in tri.simplices]

    @cached_property
    def simplex_list(self) -> list[np.ndarray]:
        """Simplices as float arrays of shape (n+1, n)."""
        return [np.array(_rows(s), dtype=float) for s in self.simplices()]

    def symmetries(self) -> list[np.ndarray]:
        """Integer matrices S with S P = P (acting on points), identity first."""
        return _lattice_symmetries(self.facet_normals)

    def is_centrally_symmetric(self) -> bool:
        normals = {tuple(int(c) for c in nu) for nu in self.facet_normals}
        return all(tuple(-c for c in nu) in normals for nu in normals)

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "dim": self.dim,
                           "facet_normals": self.facet_normals.tolist()})


def _simplex_matrix(rows):
    """Store a simplex as an (n+1) x (n+1) matrix [1 | v_i] so that det gives n! vol."""
    return sp.Matrix([[1] + list(r) for r in rows])


def _rows(s):
    return [[float(c) for c in list(s.row(i))[1:]] for i in range(s.rows)]


def validate(facet_normals, dim: int | None = None, name: str = "P") -> ReflexivePolytope:
    """Check reflexivity and return a polytope with derived vertices."""
    normals = [list(nu) for nu in facet_normals]
    if not normals:
        raise Unbounded("no facet normals given")
    if dim is None:
        dim = len(normals[0])
    for nu in normals:
        if len(nu) != dim:
            raise ValueError(f"normal {nu} does not have dimension {dim}")
        if any(not float(c).is_integer() for c in nu):
            raise ValueError(f"normal {nu} has non-integer entries")
    normals = [[int(c) for c in nu] for nu in normals]
    if len(normals) < dim + 1:
        raise Unbounded(f"{len(normals)} normals cannot bound a {dim}-dimensional polytope",
                        count=len(normals))
    for nu in normals:
        if all(c == 0 for c in nu):
            raise OriginNotInterior(f"zero normal {nu} does not cut out a facet", normal=nu)
        g = math.gcd(*nu)
        if g != 1:
            raise NonPrimitiveNormal(f"normal {nu} is not primitive (gcd {g})", normal=nu, gcd=g)

    A = np.array(normals, dtype=float)
    for i in range(dim):
        for sign in (1.0, -1.0):
            c = np.zeros(dim)
            c[i] = -sign
            res = linprog(c, A_ub=-A, b_ub=np.ones(len(A)), bounds=[(None, None)] * dim,
                          method="highs")
            if res.status == 3:
                raise Unbounded("polytope is unbounded", direction=i, sign=sign)

    vertices = _enumerate_vertices(normals, dim)
    for v in vertices:
        if any(c.denominator != 1 for c in v):
            raise NonIntegralVertex(f"vertex {tuple(str(c) for c in v)} is not integral",
                                    vertex=[str(c) for c in v])

    facets = []
    for nu in normals:
        on = [v for v in vertices if sum(a * b for a, b in zip(v, nu)) == -1]
        if _affine_rank(on) == dim - 1:
            facets.append(nu)
        else:
            logger.info("dropping redundant normal %s", nu)
    return ReflexivePolytope(name=name, dim=dim, facet_normals=np.array(facets, dtype=np.int64),
                             vertices=tuple(sorted(vertices)))


def _enumerate_vertices(normals, dim):
    verts = set()
    for idx in itertools.combinations(range(len(normals)), dim):
        M = sp.Matrix([normals[i] for i in idx])
        if M.det() == 0:
            continue
        x = M.LUsolve(sp.Matrix([-1] * dim))
        x = tuple(Fraction(int(sp.fraction(c)[0]), int(sp.fraction(c)[1])) for c in x)
        if all(sum(a * b for a, b in zip(x, nu)) >= -1 for nu in normals):
            verts.add(x)
    return sorted(verts)


def _affine_rank(points):
    if not points:
        return -1
    base = points[0]
    M = sp.Matrix([[a - b for a, b in zip(p, base)] for p in points])
    return M.rank() if len(points) > 1 else 0


def _lattice_symmetries(normals: np.ndarray) -> list[np.ndarray]:
    n = normals.shape[1]
    nset = {tuple(int(c) for c in nu) for nu in normals}
    basis = None
    for idx in itertools.combinations(range(len(normals)), n):
        B = normals[list(idx)].T.astype(float)
        if abs(np.linalg.det(B)) > 0.5:
            basis = list(idx)
            break
    B = normals[basis].T.astype(float)
    Binv = np.linalg.inv(B)
    found = {}
    for targets in itertools.permutations(range(len(normals)), n):
        M = normals[list(targets)].T.astype(float) @ Binv  # M maps normals to normals
        Mi = np.rint(M)
        if not np.allclose(M, Mi, atol=1e-9) or abs(round(np.linalg.det(Mi))) != 1:
            continue
        Mi = Mi.astype(np.int64)
        if {tuple(int(c) for c in Mi @ nu) for nu in normals} != nset:
            continue
        # <Sx, nu> = <x, S^T nu>, so S^T = M permutes the normals
        S = np.linalg.inv(Mi.T.astype(float))
        S = np.rint(S).astype(np.int64)
        found[S.tobytes()] = S
    ident = np.eye(n, dtype=np.int64)
    syms = sorted(found.values(), key=lambda S: (not np.array_equal(S, ident), S.ravel().tolist()))
    return syms


def load(path) -> ReflexivePolytope:
    """Read a polytope JSON file ``{"name", "dim", "facet_normals"}``."""
    data = json.loads(Path(path).read_text())
    for key in ("dim", "facet_normals"):
        if key not in data:
            raise ValueError(f"polytope file {path} lacks '{key}'")
    return validate(data["facet_normals"], data["dim"], name=data.get("name", Path(path).stem))


CATALOG_NORMALS = {
    "P1": [[1], [-1]],
    "P1xP1": [[1, 0], [-1, 0], [0, 1], [0, -1]],
    "P2": [[1, 0], [0, 1], [-1, -1]],
    "dP6": [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1]],
    "Bl1P2": [[1, 0], [0, 1], [-1, -1], [1, 1]],
}


def catalog() -> dict[str, ReflexivePolytope]:
    return {name: validate(nu, name=name) for name, nu in CATALOG_NORMALS.items()}


def get(name: str) -> ReflexivePolytope:
    return validate(CATALOG_NORMALS[name], name=name)


CATALOG_DIR = Path(__file__).with_name("catalog")


def resolve(ref: str) -> ReflexivePolytope:
    """A JSON path, or the name of a shipped catalog polytope."""
    path = Path(ref)
    if path.is_file():
        return load(path)
    shipped = CATALOG_DIR / f"{ref}.json"
    if shipped.is_file():
        return load(shipped)
    raise FileNotFoundError(f"no polytope file or catalog entry named {ref!r}")
