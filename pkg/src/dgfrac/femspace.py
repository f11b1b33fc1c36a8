"""Discontinuous piecewise-affine displacements on an adaptive triangulation.

A displacement carries three corner values per sub-triangle.  Continuity
across an unbroken interior sub-edge, and the trace condition on a
Dirichlet sub-edge, are equalities between corner values at the two
sub-edge endpoints; these are exact for affine traces.  The constrained
elastic problem therefore reduces to an unconstrained one on equivalence
classes of corner DOFs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .geometry import SegmentSet
from .kernels import box_qp, union_labels
from .mesh import (
    SUB_ADAPTIVE,
    SUB_DIRICHLET,
    SUB_INTERIOR,
    AdaptiveTriangulation,
    RegularTriangulation,
    _tri_gradients,
    nodal_gradients,
)

__all__ = [
    "SingularSystem",
    "BoundaryData",
    "BrokenEdgeSet",
    "DiscreteDisplacement",
    "EnergyBreakdown",
    "solve_displacement",
    "jump_edges",
    "jump_set",
    "violated_edges",
    "boundary_violation_set",
    "bulk_energy",
    "truncate",
    "default_tol_jump",
    "displacement_to_dict",
    "displacement_from_dict",
]

DENSE_LIMIT = 150


class SingularSystem(RuntimeError):
    """Inconsistent equality chain among constrained DOFs."""


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Continuous piecewise-affine data on the regular mesh (nodal values)."""

    base: RegularTriangulation
    nodal: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.nodal, dtype=float).copy()
        if v.shape != (self.base.n_points,):
            raise ValueError(f"need one value per mesh vertex ({self.base.n_points})")
        if not np.all(np.isfinite(v)):
            raise ValueError("boundary data must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "nodal", v)

    @classmethod
    def from_function(cls, R: RegularTriangulation, f: Callable) -> "BoundaryData":
        vals = np.asarray(f(R.points[:, 0], R.points[:, 1]), dtype=float)
        return cls(R, np.broadcast_to(vals, (R.n_points,)))

    @classmethod
    def zero(cls, R: RegularTriangulation) -> "BoundaryData":
        return cls(R, np.zeros(R.n_points))

    @cached_property
    def sup(self) -> float:
        # affine per triangle, so the maximum sits at a vertex
        return float(np.abs(self.nodal).max()) if self.nodal.size else 0.0

    @cached_property
    def gradients(self) -> np.ndarray:
        return nodal_gradients(self.base.points, self.base.triangles, self.nodal)

    def vertex_values(self, T: AdaptiveTriangulation) -> np.ndarray:
        return T.vertex_values(self.nodal)

    def corner_values(self, T: AdaptiveTriangulation) -> np.ndarray:
        return T.corner_values(self.nodal)

    def __sub__(self, other: "BoundaryData") -> "BoundaryData":
        return BoundaryData(self.base, self.nodal - other.nodal)


@dataclass(frozen=True)
class BrokenEdgeSet:
    """Interior sub-edges allowed to jump and Dirichlet edges released."""

    interior: tuple = ()
    released: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "interior", tuple(sorted({int(s) for s in self.interior})))
        object.__setattr__(self, "released", tuple(sorted({int(e) for e in self.released})))

    @property
    def size(self) -> int:
        return len(self.interior) + len(self.released)

    def key(self):
        """Tie-break key: fewer broken edges first, then lexicographic ids."""
        return (self.size, self.interior, self.released)

    def validate(self, T: AdaptiveTriangulation) -> None:
        kind = T.topo.kind
        for s in self.interior:
            if not 0 <= s < kind.size or kind[s] not in (SUB_ADAPTIVE, SUB_INTERIOR):
                raise ValueError(f"sub-edge {s} is not an interior sub-edge")
        dir_edges = set(T.base.dirichlet_edges.tolist())
        for e in self.released:
            if e not in dir_edges:
                raise ValueError(f"edge {e} is not a Dirichlet edge")


@dataclass(frozen=True, eq=False)
class DiscreteDisplacement:
    tri: AdaptiveTriangulation
    corner_values: np.ndarray
    broken: BrokenEdgeSet = field(default_factory=BrokenEdgeSet)

    def __post_init__(self):
        c = np.asarray(self.corner_values, dtype=float).copy()
        if c.shape != (self.tri.n_sub, 3):
            raise ValueError(f"corner values must have shape ({self.tri.n_sub}, 3)")
        c.setflags(write=False)
        object.__setattr__(self, "corner_values", c)

    @property
    def sup(self) -> float:
        return float(np.abs(self.corner_values).max())

    @cached_property
    def gradients(self) -> np.ndarray:
        """Constant gradient on each sub-triangle, shape (n_sub, 2)."""
        G, _ = _tri_gradients(self.tri.points, self.tri.sub_triangles)
        return np.einsum("kid,ki->kd", G, self.corner_values)


@dataclass(frozen=True)
class EnergyBreakdown:
    bulk: float
    surface_new: float
    surface_total: float
    total: float

    def to_dict(self) -> dict:
        return {
            "bulk": self.bulk,
            "surface_new": self.surface_new,
            "surface_total": self.surface_total,
            "total": self.total,
        }


def default_tol_jump(g: BoundaryData | float) -> float:
    s = g.sup if isinstance(g, BoundaryData) else float(g)
    return 1e-9 * max(1.0, s)


# ---------------------------------------------------------------------------
# elastic solve
# ---------------------------------------------------------------------------


def _classes(T: AdaptiveTriangulation, B: BrokenEdgeSet):
    """Merge corner DOFs across unbroken interior sub-edges."""
    topo = T.topo
    cont = (topo.kind == SUB_ADAPTIVE) | (topo.kind == SUB_INTERIOR)
    if B.interior:
        cont[list(B.interior)] = False
    d = topo.se_dofs[cont]
    pa = np.concatenate([d[:, 0], d[:, 2]])
    pb = np.concatenate([d[:, 1], d[:, 3]])
    label, ncls = union_labels(3 * T.n_sub, pa, pb)
    return int(ncls), label


def _fixed_values(T, B, g, label, ncls):
    topo = T.topo
    released = np.zeros(T.base.n_edges, dtype=bool)
    if B.released:
        released[list(B.released)] = True
    sel = (topo.kind == SUB_DIRICHLET) & ~released[np.maximum(topo.parent, 0)]
    vert = g.vertex_values(T)
    ends = topo.sub_edges[sel]
    dofs = np.concatenate([topo.se_dofs[sel, 0], topo.se_dofs[sel, 2]])
    vals = np.concatenate([vert[ends[:, 0]], vert[ends[:, 1]]])
    cls = label[dofs]
    fixed = np.zeros(ncls, dtype=bool)
    value = np.zeros(ncls)
    fixed[cls] = True
    value[cls] = vals
    if np.any(np.abs(value[cls] - vals) > 1e-9 * (1.0 + np.abs(vals))):
        raise SingularSystem("conflicting trace values on a merged DOF class")
    return fixed, value


def _pin_floating(T, label, ncls, fixed, value):
    """Pin, per floating component, the class of its lowest DOF at zero."""
    sub = label.reshape(-1, 3)
    pa = np.concatenate([sub[:, 0], sub[:, 0]])
    pb = np.concatenate([sub[:, 1], sub[:, 2]])
    comp, ncomp = union_labels(ncls, pa, pb)
    has_fixed = np.zeros(ncomp, dtype=bool)
    has_fixed[comp[fixed]] = True
    # class labels follow first appearance, so the smallest class id of a
    # component holds its lowest DOF index
    first = np.full(ncomp, ncls, dtype=np.int64)
    np.minimum.at(first, comp, np.arange(ncls))
    pin = first[~has_fixed]
    fixed[pin] = True
    value[pin] = 0.0
    return fixed, value


def _box_qp_sparse(H, f, lo, hi, max_iter=None):
    """Primal active-set method for bounded sparse SPD quadratic programs."""
    n = f.size
    x = np.clip(spsolve(H, -f) if n > 1 else -f / H.toarray().ravel(), lo, hi)
    state = np.where(x <= lo, -1, np.where(x >= hi, 1, 0))
    x = np.where(state == -1, lo, np.where(state == 1, hi, x))
    mtol = 1e-13 * max(1.0, np.abs(f).max())
    Hc = H.tocsc()
    for _ in range(max_iter or 20 * n + 50):
        free = np.flatnonzero(state == 0)
        moved = False
        if free.size:
            bound = np.flatnonzero(state != 0)
            rhs = -f[free] - Hc[free][:, bound] @ x[bound]
            Hff = Hc[free][:, free]
            target = spsolve(Hff.tocsc(), rhs) if free.size > 1 else rhs / Hff.toarray().ravel()
            step = target - x[free]
            alpha, block = 1.0, -1
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(
                    (step < 0) & (target < lo[free]),
                    (lo[free] - x[free]) / step,
                    np.where((step > 0) & (target > hi[free]), (hi[free] - x[free]) / step, np.inf),
                )
            if r.size and r.min() < 1.0:
                block = int(np.argmin(r))
                alpha = float(r[block])
            x[free] += alpha * step
            if block >= 0:
                i = free[block]
                if target[block] < lo[i]:
                    x[i], state[i] = lo[i], -1
                else:
                    x[i], state[i] = hi[i], 1
                moved = True
        if moved:
            continue
        grad = H @ x + f
        viol = np.where(state == -1, -grad, np.where(state == 1, grad, -np.inf))
        i = int(np.argmax(viol))
        if viol[i] <= mtol:
            break
        state[i] = 0
    return np.clip(x, lo, hi)


def _solve_reduced(H, f, bound):
    n = f.size
    if n == 0:
        return np.zeros(0)
    if n <= DENSE_LIMIT:
        Hd = H if isinstance(H, np.ndarray) else H.toarray()
        if bound is None:
            return np.linalg.solve(Hd, -f)
        return box_qp(Hd, f, np.full(n, -bound), np.full(n, bound))
    Hs = H.tocsc()
    x = spsolve(Hs, -f)
    if bound is None or np.abs(x).max() <= bound:
        return x
    if np.abs(x).max() <= bound + 1e-13 * max(1.0, bound):
        return np.clip(x, -bound, bound)
    return _box_qp_sparse(Hs, f, np.full(n, -bound), np.full(n, bound))


def solve_displacement(
    T: AdaptiveTriangulation,
    B: BrokenEdgeSet,
    g: BoundaryData,
    bound: float | None = None,
    check: bool = True,
) -> DiscreteDisplacement:
    """Minimize the bulk energy given the broken edges and Dirichlet data.

    Parameters
    ----------
    T, B, g
        Triangulation, broken/released edges and boundary data.
    bound : float, optional
        If given, additionally impose ``|u| <= bound`` at every corner (an
        exact box-constrained solve).
    check : bool
        Verify the relative residual of the unbounded linear solve.
    """
    ncls, label = _classes(T, B)
    fixed, value = _fixed_values(T, B, g, label, ncls)
    fixed, value = _pin_floating(T, label, ncls, fixed, value)
    lab = label.reshape(-1, 3)
    free_idx = np.cumsum(~fixed) - 1
    nf = int((~fixed).sum())
    I = np.repeat(lab, 3, axis=1).ravel()
    J = np.tile(lab, (1, 3)).ravel()
    Kv = T.stiffness.ravel()
    fi = ~fixed[I]
    ff = fi & ~fixed[J]
    fc = fi & fixed[J]
    f = np.bincount(free_idx[I[fc]], weights=Kv[fc] * value[J[fc]], minlength=nf)
    if nf <= DENSE_LIMIT:
        flat = free_idx[I[ff]] * nf + free_idx[J[ff]]
        H = np.bincount(flat, weights=Kv[ff], minlength=nf * nf).reshape(nf, nf)
    else:
        H = sp.csr_matrix((Kv[ff], (free_idx[I[ff]], free_idx[J[ff]])), shape=(nf, nf))
    x = _solve_reduced(H, f, bound)
    if check and nf and bound is None:
        res = np.abs(H @ x + f).max()
        scale = max(np.abs(f).max(), np.abs(H).max() * np.abs(x).max(), 1e-300)
        if res > 1e-10 * scale:
            raise SingularSystem(f"solver residual {res:.3e} exceeds tolerance")
    value[~fixed] = x
    return DiscreteDisplacement(T, value[lab], B)


# ---------------------------------------------------------------------------
# jump and violation sets
# ---------------------------------------------------------------------------


def jump_edges(u: DiscreteDisplacement, tol_jump: float) -> np.ndarray:
    """Ids of interior sub-edges across which ``u`` jumps by more than ``tol_jump``."""
    topo = u.tri.topo
    c = u.corner_values.ravel()
    cand = np.array(u.broken.interior, dtype=np.int64)
    if cand.size == 0:
        return cand
    d = topo.se_dofs[cand]
    gap = np.maximum(np.abs(c[d[:, 0]] - c[d[:, 1]]), np.abs(c[d[:, 2]] - c[d[:, 3]]))
    return cand[gap > tol_jump]


def jump_set(u: DiscreteDisplacement, tol_jump: float) -> SegmentSet:
    ids = jump_edges(u, tol_jump)
    return SegmentSet.from_array(u.tri.sub_edge_rows[ids], u.tri.base.tol_geom)


def _dirichlet_gaps(u: DiscreteDisplacement, g: BoundaryData):
    T = u.tri
    topo = T.topo
    sel = np.flatnonzero(topo.kind == SUB_DIRICHLET)
    vert = g.vertex_values(T)
    c = u.corner_values.ravel()
    ends = topo.sub_edges[sel]
    gap = np.maximum(
        np.abs(c[topo.se_dofs[sel, 0]] - vert[ends[:, 0]]),
        np.abs(c[topo.se_dofs[sel, 2]] - vert[ends[:, 1]]),
    )
    return sel, gap


def violated_edges(u: DiscreteDisplacement, g: BoundaryData, tol_jump: float, granularity="edge"):
    """Dirichlet edges (regular ids) or halves (sub-edge ids) where ``u != g``."""
    sel, gap = _dirichlet_gaps(u, g)
    bad = sel[gap > tol_jump]
    if granularity == "sub_edge":
        return bad
    return np.unique(u.tri.topo.parent[bad])


def boundary_violation_set(
    u: DiscreteDisplacement, g: BoundaryData, tol_jump: float, granularity: str = "edge"
) -> SegmentSet:
    """Whole Dirichlet edges on which the trace of ``u`` differs from ``g``.

    ``granularity="sub_edge"`` returns only the offending halves instead.
    """
    ids = violated_edges(u, g, tol_jump, granularity)
    if granularity == "sub_edge":
        rows = u.tri.sub_edge_rows[ids]
    else:
        rows = u.tri.base.edge_rows[ids]
    return SegmentSet.from_array(rows, u.tri.base.tol_geom)


# ---------------------------------------------------------------------------
# energies and truncation
# ---------------------------------------------------------------------------


def bulk_energy(u: DiscreteDisplacement) -> float:
    """Sum over sub-triangles of ``|K| |grad u_K|^2``."""
    c = u.corner_values
    # the form is positive semidefinite; clip round-off below zero
    return max(float(np.einsum("ki,kij,kj->", c, u.tri.stiffness, c)), 0.0)


def truncate(u: DiscreteDisplacement, M: float) -> DiscreteDisplacement:
    """Project every corner value onto ``[-M, M]``.

    The bulk energy cannot grow on triangles without obtuse angles; on
    obtuse ones it can, which is why the solver also offers an exact
    bounded solve (``solve_displacement(..., bound=M)``).
    """
    if M < 0:
        raise ValueError("M must be >= 0")
    c = u.corner_values
    if np.abs(c).max(initial=0.0) <= M:
        return u
    return DiscreteDisplacement(u.tri, np.clip(c, -M, M), u.broken)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def displacement_to_dict(u: DiscreteDisplacement) -> dict:
    return {
        "a": u.tri.a,
        "t_map": u.tri.t.tolist(),
        "corner_values": u.corner_values.tolist(),
        "broken": {"interior": list(u.broken.interior), "released": list(u.broken.released)},
    }


def displacement_from_dict(R: RegularTriangulation, d: dict) -> DiscreteDisplacement:
    from .mesh import subdivide

    T = subdivide(R, d["a"], np.asarray(d["t_map"], dtype=float))
    B = BrokenEdgeSet(tuple(d["broken"]["interior"]), tuple(d["broken"]["released"]))
    return DiscreteDisplacement(T, np.asarray(d["corner_values"], dtype=float), B)
