"""Regular triangulations, adaptive subdivision and the geometric constructions
built on them (edge-path covers, shells, jump transfer, nodal interpolation).

Conventions
-----------
* Triangles are stored counter-clockwise.  Local edge ``k`` of a triangle
  joins its local vertices ``k`` and ``k + 1 (mod 3)``.
* Regular edges are sorted vertex pairs ``(i, j)`` with ``i < j``; the
  adaptive vertex on edge ``e`` sits at ``t[e] * x_i + (1 - t[e]) * x_j`` and
  has index ``n_points + e`` in the adaptive point array.
* Base triangle ``k`` with vertices ``v0, v1, v2`` and edges ``e0, e1, e2``
  yields sub-triangles ``4k + l = (v_l, z_{e_l}, z_{e_{l-1}})`` for the three
  corners and ``4k + 3 = (z_e0, z_e1, z_e2)`` for the centre.
* Sub-edge ids: ``2e`` and ``2e + 1`` are the halves ``(i, z_e)`` and
  ``(z_e, j)`` of regular edge ``e``; ``2 n_edges + 3k + r`` is the adaptive
  edge ``(z_{e_r}, z_{e_{r+1}})`` of base triangle ``k``.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import shapely
from scipy.spatial import Delaunay

from .geometry import SegmentSet, default_tol
from .kernels import clip_segment_triangles, covered_lengths

__all__ = [
    "MeshError",
    "RegularityViolation",
    "DomainTooCoarse",
    "ParamOutOfRange",
    "EndpointNotOnEdge",
    "CrackThroughVertex",
    "PolygonalDomain",
    "MeshParams",
    "RegularTriangulation",
    "RegularityReport",
    "AdaptiveTriangulation",
    "build_regular",
    "check_regularity",
    "subdivide",
    "adaptive_constants",
    "edge_curve_cover",
    "shell",
    "transfer_jump",
    "interpolate_affine",
    "interpolation_error",
    "mesh_to_dict",
    "mesh_from_dict",
]

SUB_ADAPTIVE, SUB_INTERIOR, SUB_DIRICHLET, SUB_FREE = 0, 1, 2, 3


class MeshError(ValueError):
    pass


class RegularityViolation(MeshError):
    pass


class DomainTooCoarse(MeshError):
    pass


class ParamOutOfRange(MeshError):
    pass


class EndpointNotOnEdge(MeshError):
    pass


class CrackThroughVertex(MeshError):
    pass


# ---------------------------------------------------------------------------
# domain and parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PolygonalDomain:
    """Simple, counter-clockwise polygon with Dirichlet-marked edges.

    Polygon edge ``k`` joins ``vertices[k]`` and ``vertices[k + 1]``.
    """

    vertices: np.ndarray
    dirichlet_marks: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if v.shape[0] < 3:
            raise MeshError("polygon needs at least 3 vertices")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite polygon vertex")
        poly = shapely.Polygon(v)
        if not poly.is_valid or not shapely.LinearRing(v).is_simple:
            raise MeshError("polygon is not simple")
        signed = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if signed <= 0:
            raise MeshError("polygon must be positively oriented (counter-clockwise)")
        marks = tuple(sorted(int(k) for k in self.dirichlet_marks))
        for k in marks:
            if not 0 <= k < v.shape[0]:
                raise MeshError(f"Dirichlet mark {k} is not a polygon edge index")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "dirichlet_marks", marks)

    @classmethod
    def rectangle(cls, x0, y0, x1, y1, dirichlet=(0, 2)) -> "PolygonalDomain":
        return cls(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float), dirichlet)

    @classmethod
    def unit_square(cls, dirichlet=(0, 2)) -> "PolygonalDomain":
        return cls.rectangle(0.0, 0.0, 1.0, 1.0, dirichlet)

    @cached_property
    def polygon(self):
        return shapely.Polygon(self.vertices)

    @property
    def area(self) -> float:
        return float(self.polygon.area)

    @property
    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d * d).sum(-1)).max())

    @property
    def edge_lengths(self) -> np.ndarray:
        v = self.vertices
        return np.hypot(*(np.roll(v, -1, axis=0) - v).T)

    def to_dict(self) -> dict:
        return {"vertices": self.vertices.tolist(), "dirichlet": list(self.dirichlet_marks)}

    @classmethod
    def from_dict(cls, d) -> "PolygonalDomain":
        return cls(np.asarray(d["vertices"], dtype=float), tuple(d.get("dirichlet", ())))


@dataclass(frozen=True)
class MeshParams:
    eps: float
    c1: float = 0.5
    c2: float = 2.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ParamOutOfRange(f"eps must be > 0, got {self.eps}")
        if not 0 < self.c1 < self.c2:
            raise ParamOutOfRange(f"need 0 < c1 < c2, got c1={self.c1}, c2={self.c2}")


# ---------------------------------------------------------------------------
# regular triangulation
# ---------------------------------------------------------------------------


def _edge_topology(triangles: np.ndarray, n_points: int):
    m = triangles.shape[0]
    loc = np.stack(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=1
    ).reshape(-1, 2)
    key = np.sort(loc, axis=1)
    edges, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    tri_edges = inv.reshape(m, 3)
    edge_tris = -np.ones((edges.shape[0], 2), dtype=np.int64)
    counts = np.zeros(edges.shape[0], dtype=np.int64)
    for flat, e in enumerate(inv):
        if counts[e] >= 2:
            raise MeshError("non-manifold edge: more than two incident triangles")
        edge_tris[e, counts[e]] = flat // 3
        counts[e] += 1
    return edges.astype(np.int64), edge_tris, tri_edges.astype(np.int64)


@dataclass(frozen=True, eq=False)
class RegularTriangulation:
    """Conforming triangulation with edge adjacency and Dirichlet marks."""

    points: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_tris: np.ndarray
    tri_edges: np.ndarray
    dirichlet: np.ndarray
    eps: float
    c1: float = 0.5
    c2: float = 2.0
    domain: PolygonalDomain | None = None

    @classmethod
    def from_arrays(cls, points, triangles, eps, c1=0.5, c2=2.0, domain=None, dirichlet=None):
        """Build topology from raw arrays; triangles are re-oriented CCW."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3).copy()
        a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
        cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        flip = cross < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        edges, edge_tris, tri_edges = _edge_topology(tris, pts.shape[0])
        boundary = edge_tris[:, 1] < 0
        if dirichlet is None:
            dirichlet = np.zeros(edges.shape[0], dtype=bool)
            if domain is not None and domain.dirichlet_marks:
                dirichlet = _mark_dirichlet(pts, edges, boundary, domain)
        dirichlet = np.asarray(dirichlet, dtype=bool)
        if np.any(dirichlet & ~boundary):
            raise MeshError("Dirichlet marks on interior edges")
        for arr in (pts, tris, edges, edge_tris, tri_edges, dirichlet):
            arr.setflags(write=False)
        return cls(pts, tris, edges, edge_tris, tri_edges, dirichlet, float(eps), c1, c2, domain)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def boundary(self) -> np.ndarray:
        return self.edge_tris[:, 1] < 0

    @cached_property
    def dirichlet_edges(self) -> np.ndarray:
        return np.flatnonzero(self.dirichlet)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.points[self.edges[:, 1]] - self.points[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def areas(self) -> np.ndarray:
        return _tri_areas(self.points, self.triangles)

    @cached_property
    def diameter(self) -> float:
        if self.domain is not None:
            return self.domain.diameter
        ext = self.points.max(axis=0) - self.points.min(axis=0)
        return float(np.hypot(*ext))

    @cached_property
    def tol_geom(self) -> float:
        return default_tol(self.diameter)

    @cached_property
    def edge_rows(self) -> np.ndarray:
        return np.hstack([self.points[self.edges[:, 0]], self.points[self.edges[:, 1]]])

    @cached_property
    def topology(self) -> "_SubTopology":
        return _SubTopology.build(self)

    @cached_property
    def stiffness(self) -> np.ndarray:
        return p1_stiffness(self.points, self.triangles)

    @cached_property
    def mass(self) -> np.ndarray:
        return p1_mass(self.points, self.triangles)


def _mark_dirichlet(pts, edges, boundary, domain) -> np.ndarray:
    v = domain.vertices
    tol = 1e-9 * max(1.0, domain.diameter)
    out = np.zeros(edges.shape[0], dtype=bool)
    for k in domain.dirichlet_marks:
        a = v[k]
        b = v[(k + 1) % v.shape[0]]
        d = b - a
        L = math.hypot(*d)
        p = pts[edges[:, 0]]
        q = pts[edges[:, 1]]

        def _on(x):
            w = x - a
            cross = np.abs(w[:, 0] * d[1] - w[:, 1] * d[0]) / L
            s = (w @ d) / (L * L)
            return (cross <= tol) & (s >= -tol) & (s <= 1 + tol)

        out |= boundary & _on(p) & _on(q)
    return out


def _tri_areas(points, triangles) -> np.ndarray:
    a, b, c = points[triangles[:, 0]], points[triangles[:, 1]], points[triangles[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _tri_gradients(points, triangles):
    """Gradients of the three barycentric functions, shape (m, 3, 2)."""
    p = points[triangles]
    area = _tri_areas(points, triangles)
    g = np.empty(p.shape)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        e = p[:, k] - p[:, j]
        g[:, i, 0] = -e[:, 1]
        g[:, i, 1] = e[:, 0]
    return g / (2.0 * area)[:, None, None], area


def p1_stiffness(points, triangles) -> np.ndarray:
    """Local matrices ``K[k] = |T_k| grad(lam_i) . grad(lam_j)``, shape (m, 3, 3)."""
    g, area = _tri_gradients(points, triangles)
    return area[:, None, None] * np.einsum("kid,kjd->kij", g, g)


def p1_mass(points, triangles) -> np.ndarray:
    area = _tri_areas(points, triangles)
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return area[:, None, None] * base[None]


def nodal_gradients(points, triangles, values) -> np.ndarray:
    g, _ = _tri_gradients(points, triangles)
    return np.einsum("kid,ki->kd", g, np.asarray(values, dtype=float)[triangles])


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _is_multiple(x, eps) -> bool:
    r = x / eps
    return abs(r - round(r)) <= 1e-9 * max(1.0, abs(r))


def _structured(domain: PolygonalDomain, eps: float):
    v = domain.vertices
    d = np.roll(v, -1, axis=0) - v
    if not np.all((np.abs(d[:, 0]) <= 1e-12) | (np.abs(d[:, 1]) <= 1e-12)):
        return None
    x0, y0 = v.min(axis=0)
    x1, y1 = v.max(axis=0)
    if not all(_is_multiple(c - o, eps) for c, o in [(x1, x0), (y1, y0)]):
        return None
    if not all(_is_multiple(px - x0, eps) and _is_multiple(py - y0, eps) for px, py in v):
        return None
    nx = int(round((x1 - x0) / eps))
    ny = int(round((y1 - y0) / eps))
    xs = x0 + (x1 - x0) * np.arange(nx + 1) / nx
    ys = y0 + (y1 - y0) * np.arange(ny + 1) / ny
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    CX, CY = np.meshgrid(cx, cy, indexing="ij")
    inside = shapely.contains_xy(domain.polygon, CX, CY)
    node = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    pts = []
    tris = []

    def nid(i, j):
        if node[i, j] < 0:
            node[i, j] = len(pts)
            pts.append((xs[i], ys[j]))
        return node[i, j]

    for j in range(ny):
        for i in range(nx):
            if not inside[i, j]:
                continue
            a, b, c, dd = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, dd))
    return np.array(pts, dtype=float), np.array(tris, dtype=np.int64)


def _unstructured(domain: PolygonalDomain, eps: float, spacing: float = 1.15, iters: int = 60):
    """Boundary points plus a relaxed triangular lattice, Delaunay, inside filter.

    Interior points start on an equilateral lattice and are relaxed by a
    repulsive bar-spring iteration (bars shorter than 1.2x their RMS length
    push apart), with a Delaunay retriangulation at every step.
    """
    h = spacing * eps
    v = domain.vertices
    nv = v.shape[0]
    bpts = []
    for k in range(nv):
        a, b = v[k], v[(k + 1) % nv]
        n = max(1, int(math.ceil(math.hypot(*(b - a)) / h - 1e-9)))
        for s in range(n):
            bpts.append(a + (b - a) * s / n)
    bpts = np.array(bpts)
    nb = bpts.shape[0]
    x0, y0 = v.min(axis=0)
    x1, y1 = v.max(axis=0)
    dy = h * math.sqrt(3) / 2
    rows = []
    j = 0
    y = y0
    while y <= y1 + 1e-12:
        off = 0.5 * h if j % 2 else 0.0
        xs = np.arange(x0 - h + off, x1 + h, h)
        rows.append(np.column_stack([xs, np.full(xs.shape, y)]))
        y += dy
        j += 1
    lat = np.vstack(rows)
    poly = domain.polygon
    lat = lat[shapely.contains_xy(poly, lat[:, 0], lat[:, 1])]
    dist = shapely.distance(poly.exterior, shapely.points(lat))
    lat = lat[dist >= 0.6 * h]
    pts = np.vstack([bpts, lat])
    for _ in range(iters):
        tri = _filtered_delaunay(pts, poly, h)
        bars = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        bars = np.unique(np.sort(bars, axis=1), axis=0)
        vec = pts[bars[:, 0]] - pts[bars[:, 1]]
        length = np.hypot(vec[:, 0], vec[:, 1])
        rest = 1.2 * math.sqrt(np.mean(length**2))
        push = (np.maximum(rest - length, 0.0) / length)[:, None] * vec
        force = np.zeros_like(pts)
        np.add.at(force, bars[:, 0], push)
        np.add.at(force, bars[:, 1], -push)
        force[:nb] = 0.0
        moved = pts + 0.2 * force
        inside = shapely.contains_xy(poly, moved[:, 0], moved[:, 1])
        inside[:nb] = True
        moved[~inside] = pts[~inside]
        pts = moved
    tri = _filtered_delaunay(pts, poly, h)
    have = {tuple(sorted(e)) for t in tri for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))}
    for k in range(nb):
        if tuple(sorted((k, (k + 1) % nb))) not in have:
            raise RegularityViolation("Delaunay fallback failed to recover the boundary")
    used = np.unique(tri)
    remap = -np.ones(pts.shape[0], dtype=np.int64)
    remap[used] = np.arange(used.size)
    return pts[used], remap[tri]


def _filtered_delaunay(pts, poly, h):
    tri = Delaunay(pts).simplices
    cen = pts[tri].mean(axis=1)
    tri = tri[shapely.contains_xy(poly, cen[:, 0], cen[:, 1])]
    area = np.abs(_tri_areas(pts, tri))
    return tri[area > 1e-12 * h * h]


def build_regular(domain: PolygonalDomain, params: MeshParams) -> RegularTriangulation:
    """Regular triangulation of ``domain`` at size ``params.eps``.

    Rectilinear polygons whose corners sit on an ``eps`` grid get the
    structured right-triangle mesh; everything else goes through the
    lattice/Delaunay fallback.  The result is checked against (c1, c2).
    """
    eps = params.eps
    if eps > domain.edge_lengths.min() * (1 + 1e-12):
        raise DomainTooCoarse(
            f"eps={eps} exceeds the shortest polygon edge {domain.edge_lengths.min():.6g}"
        )
    built = _structured(domain, eps)
    if built is None:
        built = _unstructured(domain, eps)
    pts, tris = built
    R = RegularTriangulation.from_arrays(pts, tris, eps, params.c1, params.c2, domain)
    rep = check_regularity(R)
    if not rep.passed:
        raise RegularityViolation(
            f"mesh fails the ball-diameter check: min inscribed {rep.min_inscribed:.4g}"
            f" (need >= {params.c1 * eps:.4g}), max enclosing {rep.max_enclosing:.4g}"
            f" (need <= {params.c2 * eps:.4g})"
        )
    total = float(R.areas.sum())
    if abs(total - domain.area) > 1e-9 * domain.area:
        raise MeshError(f"mesh area {total} does not match polygon area {domain.area}")
    return R


@dataclass(frozen=True)
class RegularityReport:
    min_angle: float
    max_angle: float
    min_edge: float
    max_edge: float
    min_inscribed: float
    max_enclosing: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "min_angle": self.min_angle,
            "max_angle": self.max_angle,
            "min_edge": self.min_edge,
            "max_edge": self.max_edge,
            "min_inscribed": self.min_inscribed,
            "max_enclosing": self.max_enclosing,
            "pass": self.passed,
        }


def triangle_shape(points, triangles):
    """Angles (deg), edge lengths, inscribed and minimal enclosing diameters."""
    p = points[triangles]
    L = np.stack(
        [np.hypot(*(p[:, (i + 1) % 3] - p[:, (i + 2) % 3]).T) for i in range(3)], axis=1
    )  # L[:, i] is opposite vertex i
    area = np.abs(_tri_areas(points, triangles))
    ang = np.empty_like(L)
    for i in range(3):
        b, c = L[:, (i + 1) % 3], L[:, (i + 2) % 3]
        cosv = np.clip((b * b + c * c - L[:, i] ** 2) / (2 * b * c), -1.0, 1.0)
        ang[:, i] = np.degrees(np.arccos(cosv))
    inscribed = 4.0 * area / L.sum(axis=1)
    lmax = L.max(axis=1)
    circum = L.prod(axis=1) / (2.0 * np.maximum(area, 1e-300))
    enclosing = np.where(ang.max(axis=1) >= 90.0 - 1e-12, lmax, circum)
    return ang, L, inscribed, enclosing


def check_regularity(R: RegularTriangulation) -> RegularityReport:
    """Extremal angles and edge lengths plus the (c1, c2) ball-diameter test."""
    ang, L, ins, enc = triangle_shape(R.points, R.triangles)
    rel = 1e-12
    ok = bool(
        np.all(ins >= R.c1 * R.eps * (1 - rel)) and np.all(enc <= R.c2 * R.eps * (1 + rel))
    )
    return RegularityReport(
        float(ang.min()),
        float(ang.max()),
        float(L.min()),
        float(L.max()),
        float(ins.min()),
        float(enc.max()),
        ok,
    )


# ---------------------------------------------------------------------------
# adaptive subdivision
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _SubTopology:
    """t-independent connectivity of the adaptive family over one base mesh."""

    sub_triangles: np.ndarray  # (4m, 3) indices into the adaptive point array
    sub_edges: np.ndarray  # (n_sub_edges, 2)
    kind: np.ndarray  # SUB_* code per sub-edge
    parent: np.ndarray  # regular edge id for halves, -1 for adaptive edges
    se_tris: np.ndarray  # (n_sub_edges, 2), -1 when absent
    se_dofs: np.ndarray  # (n_sub_edges, 4): tri0@a, tri1@a, tri0@b, tri1@b
    sub_tri_edges: np.ndarray  # (4m, 3) sub-edge id of local edge k

    @classmethod
    def build(cls, R: RegularTriangulation) -> "_SubTopology":
        n, ne, m = R.n_points, R.n_edges, R.n_triangles
        T = R.triangles
        E = R.tri_edges
        z = n + E  # adaptive vertex of each local edge
        sub = np.empty((4 * m, 3), dtype=np.int64)
        for l in range(3):
            sub[l::4, 0] = T[:, l]
            sub[l::4, 1] = z[:, l]
            sub[l::4, 2] = z[:, (l - 1) % 3]
        sub[3::4] = z
        nse = 2 * ne + 3 * m
        se = np.empty((nse, 2), dtype=np.int64)
        se[0 : 2 * ne : 2, 0] = R.edges[:, 0]
        se[0 : 2 * ne : 2, 1] = n + np.arange(ne)
        se[1 : 2 * ne : 2, 0] = n + np.arange(ne)
        se[1 : 2 * ne : 2, 1] = R.edges[:, 1]
        for r in range(3):
            se[2 * ne + r :: 3, 0] = z[:, r]
            se[2 * ne + r :: 3, 1] = z[:, (r + 1) % 3]
        kind = np.full(nse, SUB_ADAPTIVE, dtype=np.int8)
        parent = -np.ones(nse, dtype=np.int64)
        parent[: 2 * ne] = np.repeat(np.arange(ne), 2)
        bnd = R.boundary
        half_kind = np.where(R.dirichlet, SUB_DIRICHLET, np.where(bnd, SUB_FREE, SUB_INTERIOR))
        kind[: 2 * ne] = np.repeat(half_kind, 2)

        lookup = {}
        for s in range(nse):
            a, b = se[s]
            lookup[(a, b) if a < b else (b, a)] = s
        se_tris = -np.ones((nse, 2), dtype=np.int64)
        se_dofs = -np.ones((nse, 4), dtype=np.int64)
        ste = np.empty((4 * m, 3), dtype=np.int64)
        for k in range(4 * m):
            for loc in range(3):
                a, b = sub[k, loc], sub[k, (loc + 1) % 3]
                s = lookup[(a, b) if a < b else (b, a)]
                ste[k, loc] = s
                slot = 0 if se_tris[s, 0] < 0 else 1
                if slot == 1 and se_tris[s, 1] >= 0:
                    raise MeshError("sub-edge with more than two sub-triangles")
                se_tris[s, slot] = k
                la = loc if se[s, 0] == a else (loc + 1) % 3
                lb = (loc + 1) % 3 if la == loc else loc
                se_dofs[s, slot] = 3 * k + la
                se_dofs[s, 2 + slot] = 3 * k + lb
        arrays = (sub, se, kind, parent, se_tris, se_dofs, ste)
        for arr in arrays:
            arr.setflags(write=False)
        return cls(*arrays)


def adaptive_constants(c1: float, c2: float, a: float) -> dict:
    """Shape bounds of any adaptive sub-triangle.

    Base-mesh angles satisfy ``sin(theta/2) >= c1 / (2 c2)``.  A sub-edge is
    at least ``a c1 eps sin(theta1)`` long and at most ``c2 eps``; a
    sub-triangle has area at least ``a^2 |T|`` with
    ``|T| >= 3 sqrt(3) (c1 eps)^2 / 4``, which bounds its angles via
    ``sin(alpha) = 2 area / (b c)``.
    """
    th1 = 2.0 * math.asin(c1 / (2.0 * c2))
    th2 = math.pi - 2.0 * th1
    s_min = min(math.sin(th1), math.sin(th2)) if th2 < math.pi / 2 else math.sin(th1)
    c1a = a * c1 * s_min
    c2a = c2
    sin_a = min(1.0, a * a * 3.0 * math.sqrt(3.0) * c1 * c1 / (2.0 * c2 * c2))
    th1a = math.asin(sin_a)
    return {
        "theta1": math.degrees(th1),
        "theta2": math.degrees(th2),
        "c1a": c1a,
        "c2a": c2a,
        "theta1a": math.degrees(th1a),
        "theta2a": math.degrees(math.pi - 2.0 * th1a),
    }


@dataclass(frozen=True, eq=False)
class AdaptiveTriangulation:
    """Base mesh subdivided by one adaptive parameter per regular edge."""

    base: RegularTriangulation
    a: float
    t: np.ndarray

    @property
    def topo(self) -> _SubTopology:
        return self.base.topology

    @property
    def n_sub(self) -> int:
        return 4 * self.base.n_triangles

    @property
    def n_sub_edges(self) -> int:
        return self.topo.sub_edges.shape[0]

    @property
    def sub_triangles(self) -> np.ndarray:
        return self.topo.sub_triangles

    @cached_property
    def points(self) -> np.ndarray:
        R = self.base
        x = R.points[R.edges[:, 0]]
        y = R.points[R.edges[:, 1]]
        z = self.t[:, None] * x + (1.0 - self.t[:, None]) * y
        return np.vstack([R.points, z])

    @cached_property
    def areas(self) -> np.ndarray:
        return _tri_areas(self.points, self.sub_triangles)

    @cached_property
    def stiffness(self) -> np.ndarray:
        return p1_stiffness(self.points, self.sub_triangles)

    @cached_property
    def sub_edge_rows(self) -> np.ndarray:
        se = self.topo.sub_edges
        return np.hstack([self.points[se[:, 0]], self.points[se[:, 1]]])

    @cached_property
    def sub_edge_lengths(self) -> np.ndarray:
        r = self.sub_edge_rows
        return np.hypot(r[:, 2] - r[:, 0], r[:, 3] - r[:, 1])

    @cached_property
    def interior_sub_edges(self) -> np.ndarray:
        k = self.topo.kind
        return np.flatnonzero((k == SUB_ADAPTIVE) | (k == SUB_INTERIOR))

    def vertex_values(self, nodal: np.ndarray) -> np.ndarray:
        """Extend nodal values on the base mesh to the adaptive vertices (affine along edges)."""
        R = self.base
        nodal = np.asarray(nodal, dtype=float)
        z = self.t * nodal[R.edges[:, 0]] + (1.0 - self.t) * nodal[R.edges[:, 1]]
        return np.concatenate([nodal, z])

    def corner_values(self, nodal: np.ndarray) -> np.ndarray:
        return self.vertex_values(nodal)[self.sub_triangles]

    def with_t(self, t) -> "AdaptiveTriangulation":
        return subdivide(self.base, self.a, t)


def subdivide(R: RegularTriangulation, a: float, t=None) -> AdaptiveTriangulation:
    """Adaptive triangulation of ``R``; ``t`` is a per-edge array or mapping.

    Edges missing from a mapping default to 0.5.
    """
    if not 0.0 < a < 0.5:
        raise ParamOutOfRange(f"a must lie in (0, 0.5), got {a}")
    tt = np.full(R.n_edges, 0.5)
    if t is None:
        pass
    elif isinstance(t, dict):
        for e, v in t.items():
            tt[int(e)] = float(v)
    else:
        tt = np.asarray(t, dtype=float).copy()
        if tt.shape != (R.n_edges,):
            raise ParamOutOfRange(f"t must have one value per edge ({R.n_edges})")
    slack = 1e-12
    bad = np.flatnonzero((tt < a - slack) | (tt > 1 - a + slack))
    if bad.size:
        raise ParamOutOfRange(
            f"t[{bad[0]}]={tt[bad[0]]} outside [a, 1-a] = [{a}, {1 - a}]"
        )
    tt.setflags(write=False)
    return AdaptiveTriangulation(R, float(a), tt)


# ---------------------------------------------------------------------------
# segment helpers
# ---------------------------------------------------------------------------


def _seg_point_dist(rows, p):
    a = rows[:, 0:2]
    e = rows[:, 2:4] - a
    w = p[None, :] - a
    l2 = (e * e).sum(1)
    s = np.clip((w * e).sum(1) / l2, 0.0, 1.0)
    d = w - s[:, None] * e
    return np.hypot(d[:, 0], d[:, 1]), s


def _touching_triangles(points, triangles, p, q, tol):
    lo, hi = clip_segment_triangles(p, q, points[triangles], tol)
    return np.flatnonzero(hi >= lo)


# ---------------------------------------------------------------------------
# edge-path cover (shortest path along sub-edges)
# ---------------------------------------------------------------------------


def edge_curve_cover(T: AdaptiveTriangulation, l) -> tuple[SegmentSet, float]:
    """Shortest polyhedral path from p to q along edges of sub-triangles meeting l.

    Returns the path as a segment set and its length divided by ``|l|``.
    """
    p, q = _endpoints(l)
    R = T.base
    tol = R.tol_geom
    pts = T.points
    rows = T.sub_edge_rows
    topo = T.topo
    for end in (p, q):
        if _seg_point_dist(rows, end)[0].min() > 10 * tol:
            raise EndpointNotOnEdge(f"point {tuple(end)} is not on an edge of the triangulation")
    tris = _touching_triangles(pts, T.sub_triangles, p, q, 10 * tol)
    sids = np.unique(topo.sub_tri_edges[tris].ravel())
    # graph over vertices of the selected sub-edges plus p and q
    adj: dict[int, list] = {}

    def add(u, v, w):
        adj.setdefault(u, []).append((v, w))
        adj.setdefault(v, []).append((u, w))

    P, Q = -1, -2
    coords = {P: p, Q: q}
    for s in sids:
        a, b = topo.sub_edges[s]
        coords[a] = pts[a]
        coords[b] = pts[b]
        L = float(T.sub_edge_lengths[s])
        split = []
        for tag, end in ((P, p), (Q, q)):
            d, frac = _seg_point_dist(rows[s : s + 1], end)
            if d[0] <= 10 * tol:
                split.append((float(frac[0]), tag))
        if not split:
            add(a, b, L)
            continue
        chain = [(0.0, a)] + sorted(split) + [(1.0, b)]
        for (f0, u), (f1, v) in zip(chain[:-1], chain[1:]):
            add(u, v, (f1 - f0) * L)
    dist = {P: 0.0}
    prev: dict = {}
    heap = [(0.0, 0, P)]
    counter = 1
    done = set()
    while heap:
        d, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == Q:
            break
        for v, w in adj.get(u, ()):
            nd = d + w
            if nd < dist.get(v, math.inf) - 1e-15:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, counter, v))
                counter += 1
    if Q not in dist:
        raise MeshError("no edge path between the segment endpoints")
    path = [Q]
    while path[-1] != P:
        path.append(prev[path[-1]])
    path.reverse()
    segs = []
    for u, v in zip(path[:-1], path[1:]):
        cu, cv = coords[u], coords[v]
        if math.hypot(*(cv - cu)) > tol:
            segs.append((*cu, *cv))
    curve = SegmentSet.from_array(np.array(segs).reshape(-1, 4), tol)
    length = float(math.hypot(*(q - p)))
    return curve, dist[Q] / length


def _endpoints(l):
    if hasattr(l, "p"):
        return np.array([l.p.x, l.p.y]), np.array([l.q.x, l.q.y])
    r = np.asarray(l, dtype=float).ravel()
    return r[0:2].copy(), r[2:4].copy()


# ---------------------------------------------------------------------------
# shell
# ---------------------------------------------------------------------------


def shell(R: RegularTriangulation, l) -> tuple[np.ndarray, float]:
    """Triangles meeting ``l`` and the length of the boundary of their union."""
    p, q = _endpoints(l)
    tris = _touching_triangles(R.points, R.triangles, p, q, 10 * R.tol_geom)
    count = np.zeros(R.n_edges, dtype=np.int64)
    np.add.at(count, R.tri_edges[tris].ravel(), 1)
    blen = float(R.edge_lengths[count == 1].sum())
    return tris, blen


# ---------------------------------------------------------------------------
# jump transfer
# ---------------------------------------------------------------------------


def _crossings(R: RegularTriangulation, p, q, tol):
    """Regular edges met by segment p->q: (lambda along pq, edge id, edge parameter s).

    ``s`` is the edge parameter in the adaptive convention, i.e. the crossing
    point equals ``s * x + (1 - s) * y`` for edge ``(x, y)``.
    """
    rows = R.edge_rows
    x = rows[:, 0:2]
    y = rows[:, 2:4]
    d = q - p
    e = x - y  # point = y + s e
    den = d[0] * e[:, 1] - d[1] * e[:, 0]
    w = y - p
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]) / den
        s = (w[:, 0] * d[1] - w[:, 1] * d[0]) / den
    L = math.hypot(*d)
    el = R.edge_lengths
    ok = (np.abs(den) > 1e-14 * L * el) & (lam >= -tol / L) & (lam <= 1 + tol / L)
    ok &= (s >= -tol / el) & (s <= 1 + tol / el)
    idx = np.flatnonzero(ok)
    return lam[idx], idx, s[idx]


def _vertex_hits(R, p, q, tol):
    a = p
    e = q - p
    w = R.points - a
    l2 = e @ e
    s = np.clip(w @ e / l2, 0.0, 1.0)
    dd = w - s[:, None] * e
    return np.flatnonzero(np.hypot(dd[:, 0], dd[:, 1]) <= tol)


def _snap_to_edges(R, p, q, tol):
    """Re-intersect the supporting line of p->q with the edges holding p and q."""
    out = []
    for end in (p, q):
        dist, _ = _seg_point_dist(R.edge_rows, end)
        e = int(np.argmin(dist))
        x, y = R.edge_rows[e, 0:2], R.edge_rows[e, 2:4]
        d = q - p
        ev = x - y
        den = d[0] * ev[1] - d[1] * ev[0]
        if abs(den) < 1e-14:
            out.append(end)
            continue
        w = y - p
        lam = (w[0] * ev[1] - w[1] * ev[0]) / den
        out.append(p + lam * d)
    return out[0], out[1]


def transfer_jump(R: RegularTriangulation, a: float, cracks, t_default: float = 0.5):
    """Approximate crack segments by chains of adaptive sub-edges.

    Every regular edge crossed by a crack at edge parameter ``s`` gets
    ``t = clamp(s, a, 1 - a)``.  The interpolating curve of a segment from p
    to q is ``[p, z_first]``, the chain of adaptive vertices, and
    ``[z_last, q]``; segments lying along mesh edges are kept as they are.

    Returns
    -------
    T : AdaptiveTriangulation
    interp : SegmentSet
    inflation : float
        ``H1(interp) / H1(cracks)``.
    """
    if not 0.0 < a < 0.5:
        raise ParamOutOfRange(f"a must lie in (0, 0.5), got {a}")
    tol = R.tol_geom
    rows = cracks.as_array() if isinstance(cracks, SegmentSet) else np.asarray(cracks, float).reshape(-1, 4)
    t = np.full(R.n_edges, float(t_default))
    assigned = np.zeros(R.n_edges, dtype=bool)
    chains = []
    total_len = 0.0
    for row in rows:
        p, q = row[0:2].copy(), row[2:4].copy()
        L = math.hypot(*(q - p))
        total_len += L
        if covered_lengths(row[None], R.edge_rows, tol)[0] >= L - 10 * tol:
            chains.append(("edge", [row]))
            continue
        for end in (p, q):
            if _seg_point_dist(R.edge_rows, end)[0].min() > 10 * tol:
                raise EndpointNotOnEdge(f"crack endpoint {tuple(end)} is not on a mesh edge")
        if _vertex_hits(R, p, q, 2 * tol).size:
            nrm = np.array([-(q - p)[1], (q - p)[0]]) / L
            p2, q2 = _snap_to_edges(R, p + 10 * tol * nrm, q + 10 * tol * nrm, tol)
            if _vertex_hits(R, p2, q2, 2 * tol).size:
                raise CrackThroughVertex(
                    f"segment {tuple(row)} passes through a mesh vertex"
                )
            p, q = p2, q2
        lam, eids, s = _crossings(R, p, q, 2 * tol)
        order = np.lexsort((eids, lam))
        lam, eids, s = lam[order], eids[order], np.clip(s[order], 0.0, 1.0)
        for e, se in zip(eids, s):
            if not assigned[e]:
                t[e] = min(max(se, a), 1.0 - a)
                assigned[e] = True
        chains.append(("cross", (p, q, eids)))
    T = subdivide(R, a, t)
    zp = T.points[R.n_points :]
    segs = []
    for kind, data in chains:
        if kind == "edge":
            segs.extend(data)
            continue
        p, q, eids = data
        pts = [p] + [zp[e] for e in eids] + [q]
        for u, v in zip(pts[:-1], pts[1:]):
            if math.hypot(*(v - u)) > tol:
                segs.append((*u, *v))
    interp = SegmentSet.from_array(np.array(segs, dtype=float).reshape(-1, 4), tol)
    ilen = float(sum(math.hypot(r[2] - r[0], r[3] - r[1]) for r in segs))
    inflation = ilen / total_len if total_len > 0 else 1.0
    return T, interp, inflation


# ---------------------------------------------------------------------------
# nodal interpolation
# ---------------------------------------------------------------------------


def _mesh_arrays(mesh):
    if isinstance(mesh, AdaptiveTriangulation):
        return mesh.points, mesh.sub_triangles
    return mesh.points, mesh.triangles


def interpolate_affine(mesh, f: Callable) -> np.ndarray:
    """Nodal values ``f(x, y)`` at the mesh vertices (continuous P1 interpolant)."""
    pts, _ = _mesh_arrays(mesh)
    vals = np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)
    return np.broadcast_to(vals, (pts.shape[0],)).copy()


_S15 = math.sqrt(15.0)
_A1, _A2 = (6 - _S15) / 21, (6 + _S15) / 21
_W1, _W2 = (155 - _S15) / 1200, (155 + _S15) / 1200
# degree-5 rule on the reference triangle, weights sum to 1
QUAD7_BARY = np.array(
    [[1 / 3, 1 / 3, 1 / 3]]
    + [[_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1]]
    + [[_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2]]
)
QUAD7_W = np.array([0.225] + [_W1] * 3 + [_W2] * 3)


def interpolation_error(mesh, values, f: Callable, grad_f: Callable) -> float:
    """W^{1,2} norm of ``f - I f`` using a 7-point degree-5 rule per triangle."""
    pts, tris = _mesh_arrays(mesh)
    values = np.asarray(values, dtype=float)
    P = pts[tris]
    area = np.abs(_tri_areas(pts, tris))
    qp = np.einsum("qi,kid->kqd", QUAD7_BARY, P)
    uh = np.einsum("qi,ki->kq", QUAD7_BARY, values[tris])
    gh = nodal_gradients(pts, tris, values)
    fx = np.asarray(f(qp[..., 0], qp[..., 1]), dtype=float)
    gx, gy = grad_f(qp[..., 0], qp[..., 1])
    err = (fx - uh) ** 2 + (gx - gh[:, None, 0]) ** 2 + (gy - gh[:, None, 1]) ** 2
    return float(math.sqrt(np.sum(area[:, None] * QUAD7_W[None, :] * err)))


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def mesh_to_dict(mesh) -> dict:
    """Deterministic JSON-ready description of a regular or adaptive mesh."""
    R = mesh.base if isinstance(mesh, AdaptiveTriangulation) else mesh
    d = {
        "eps": R.eps,
        "c1": R.c1,
        "c2": R.c2,
        "points": R.points.tolist(),
        "triangles": R.triangles.tolist(),
        "edges": [
            {
                "v": [int(i), int(j)],
                "tris": [int(a), int(b)],
                "boundary": bool(R.boundary[e]),
                "dirichlet": bool(R.dirichlet[e]),
            }
            for e, ((i, j), (a, b)) in enumerate(zip(R.edges, R.edge_tris))
        ],
    }
    if R.domain is not None:
        d["domain"] = R.domain.to_dict()
    if isinstance(mesh, AdaptiveTriangulation):
        d["a"] = mesh.a
        d["t_map"] = mesh.t.tolist()
    return d


def mesh_from_dict(d: dict):
    domain = PolygonalDomain.from_dict(d["domain"]) if "domain" in d else None
    dirichlet = np.array([e["dirichlet"] for e in d["edges"]], dtype=bool)
    R = RegularTriangulation.from_arrays(
        np.asarray(d["points"], dtype=float),
        np.asarray(d["triangles"], dtype=np.int64),
        d["eps"],
        d.get("c1", 0.5),
        d.get("c2", 2.0),
        domain,
        dirichlet=None,
    )
    edges = np.array([e["v"] for e in d["edges"]], dtype=np.int64)
    if not np.array_equal(edges, R.edges):
        raise MeshError("edge list does not match the triangles")
    R = RegularTriangulation.from_arrays(
        R.points, R.triangles, R.eps, R.c1, R.c2, domain, dirichlet=dirichlet
    )
    if "t_map" in d:
        return subdivide(R, d["a"], np.asarray(d["t_map"], dtype=float))
    return R
