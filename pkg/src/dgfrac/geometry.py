"""Planar segment primitives: union measure, residual measure, Hausdorff distance.

Crack sets are finite unions of straight segments.  Two segments only
contribute a positive-length intersection when they are collinear, so all
measures reduce to interval unions on shared supporting lines.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .kernels import covered_lengths

__all__ = [
    "Point2",
    "Segment",
    "SegmentSet",
    "default_tol",
    "measure",
    "residual_measure",
    "intersection_measure",
    "hausdorff_distance",
    "point_segment_distance",
    "segments_from",
]

#: relative coincidence tolerance, multiplied by a length scale
REL_TOL = 1e-9


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def as_tuple(self):
        return (self.x, self.y)


@dataclass(frozen=True)
class Segment:
    """Closed straight segment ``[p, q]`` with ``p != q``."""

    p: Point2
    q: Point2

    def __post_init__(self):
        if not isinstance(self.p, Point2):
            object.__setattr__(self, "p", Point2(*map(float, self.p)))
        if not isinstance(self.q, Point2):
            object.__setattr__(self, "q", Point2(*map(float, self.q)))
        if self.p == self.q:
            raise ValueError("degenerate segment: p == q")

    @classmethod
    def from_coords(cls, x1, y1, x2, y2) -> "Segment":
        return cls(Point2(float(x1), float(y1)), Point2(float(x2), float(y2)))

    @property
    def length(self) -> float:
        return math.hypot(self.q.x - self.p.x, self.q.y - self.p.y)

    def as_row(self):
        return (self.p.x, self.p.y, self.q.x, self.q.y)


def _bbox_diag(arr: np.ndarray) -> float:
    if arr.size == 0:
        return 0.0
    pts = arr.reshape(-1, 2)
    ext = pts.max(axis=0) - pts.min(axis=0)
    return float(np.hypot(*ext))


def default_tol(scale: float) -> float:
    """Coincidence tolerance for a domain of diameter ``scale``."""
    return REL_TOL * max(1.0, float(scale))


@dataclass(frozen=True)
class SegmentSet:
    """Immutable finite union of segments.

    Parameters
    ----------
    segments : tuple of Segment
    tol_geom : float, optional
        Collinearity tolerance in length units.  Defaults to
        ``1e-9 * max(1, bounding-box diagonal)``.
    """

    segments: tuple = ()
    tol_geom: float = field(default=-1.0)

    def __post_init__(self):
        segs = tuple(
            s if isinstance(s, Segment) else Segment.from_coords(*s) for s in self.segments
        )
        object.__setattr__(self, "segments", segs)
        if self.tol_geom is None or self.tol_geom < 0:
            object.__setattr__(self, "tol_geom", default_tol(_bbox_diag(self.as_array())))

    @classmethod
    def from_array(cls, arr, tol_geom: float | None = None) -> "SegmentSet":
        arr = np.asarray(arr, dtype=float).reshape(-1, 4)
        segs = tuple(Segment.from_coords(*row) for row in arr)
        return cls(segs, -1.0 if tol_geom is None else tol_geom)

    def as_array(self) -> np.ndarray:
        if not self.segments:
            return np.zeros((0, 4))
        return np.array([s.as_row() for s in self.segments], dtype=float)

    def union(self, other: "SegmentSet") -> "SegmentSet":
        return SegmentSet(self.segments + other.segments, max(self.tol_geom, other.tol_geom))

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)


def _as_rows(S) -> np.ndarray:
    if isinstance(S, SegmentSet):
        return S.as_array()
    return np.asarray(S, dtype=float).reshape(-1, 4)


def _tol(*sets) -> float:
    tols = [s.tol_geom for s in sets if isinstance(s, SegmentSet)]
    if tols:
        return max(tols)
    return default_tol(max(_bbox_diag(_as_rows(s)) for s in sets))


def _union_measure(rows: np.ndarray, prior: np.ndarray, tol: float) -> float:
    """H1 of ``union(rows) \\ union(prior)``, summed segment by segment."""
    if rows.shape[0] == 0:
        return 0.0
    lengths = np.hypot(rows[:, 2] - rows[:, 0], rows[:, 3] - rows[:, 1])
    total = 0.0
    for k in range(rows.shape[0]):
        cover = np.concatenate([prior, rows[:k]]) if k else prior
        if cover.shape[0]:
            c = covered_lengths(rows[k : k + 1], cover, tol)[0]
        else:
            c = 0.0
        total += max(lengths[k] - c, 0.0)
    return float(total)


def measure(S) -> float:
    """One-dimensional measure of the union of the segments of ``S``."""
    rows = _as_rows(S)
    return _union_measure(rows, np.zeros((0, 4)), _tol(S))


def residual_measure(S, C) -> float:
    """H1(S \\ C): length of ``S`` not covered by collinear pieces of ``C``."""
    return _union_measure(_as_rows(S), _as_rows(C), _tol(S, C))


def intersection_measure(S, C) -> float:
    """H1(S ∩ C), counting only collinear overlaps."""
    return max(measure(S) - residual_measure(S, C), 0.0)


# ---------------------------------------------------------------------------
# Hausdorff distance
# ---------------------------------------------------------------------------


def point_segment_distance(pts: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Distances from points (n, 2) to segments (m, 4); returns (n, m)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    a = rows[None, :, 0:2]
    e = rows[None, :, 2:4] - a
    w = pts[:, None, :] - a
    l2 = (e * e).sum(-1)
    tau = np.clip((w * e).sum(-1) / np.where(l2 > 0, l2, 1.0), 0.0, 1.0)
    d = w - tau[..., None] * e
    return np.hypot(d[..., 0], d[..., 1])


def _piece_coeffs(P, D, rows, s):
    """Quadratic coefficients (c2, c1, c0) of squared distance at parameter s.

    ``P + s D`` runs along one segment of the first set; ``rows`` are (m, 4)
    segments of the second set, ``s`` has shape (k, m).
    """
    q0 = rows[:, 0:2]
    e = rows[:, 2:4] - q0
    l2 = (e * e).sum(-1)
    w0 = P - q0
    tau0 = (w0 * e).sum(-1) / l2
    tau1 = (D * e).sum(-1) / l2
    tau = tau0 + s * tau1
    w1 = P - rows[:, 2:4]
    dd = float(D @ D)
    # endpoint pieces
    a0 = (dd, 2 * (w0 * D).sum(-1), (w0 * w0).sum(-1))
    a1 = (dd, 2 * (w1 * D).sum(-1), (w1 * w1).sum(-1))
    cr0 = w0[:, 0] * e[:, 1] - w0[:, 1] * e[:, 0]
    cr1 = D[0] * e[:, 1] - D[1] * e[:, 0]
    ln = (cr1 * cr1 / l2, 2 * cr0 * cr1 / l2, cr0 * cr0 / l2)
    lo = tau < 0
    hi = tau > 1
    out = []
    for k in range(3):
        c = np.where(lo, a0[k], np.where(hi, a1[k], ln[k]))
        out.append(c)
    return out


def _breaks(P, D, rows):
    q0 = rows[:, 0:2]
    e = rows[:, 2:4] - q0
    l2 = (e * e).sum(-1)
    tau0 = ((P - q0) * e).sum(-1) / l2
    tau1 = (D * e).sum(-1) / l2
    with np.errstate(divide="ignore", invalid="ignore"):
        b0 = np.where(tau1 != 0, -tau0 / tau1, 0.0)
        b1 = np.where(tau1 != 0, (1 - tau0) / tau1, 0.0)
    return np.clip(np.stack([b0, b1], axis=1), 0.0, 1.0)


def _directed_segment(P, D, rows) -> float:
    """sup over the segment ``P + s D`` of the distance to ``rows``."""
    m = rows.shape[0]
    cands = [np.array([0.0, 1.0])]
    if m > 1:
        br = _breaks(P, D, rows)
        ii, jj = np.triu_indices(m, k=1)
        knots = np.concatenate(
            [np.zeros((ii.size, 1)), np.ones((ii.size, 1)), br[ii], br[jj]], axis=1
        )
        knots.sort(axis=1)
        left = knots[:, :-1]
        right = knots[:, 1:]
        mid = 0.5 * (left + right)
        ci = _piece_coeffs(P, D, rows[ii], mid.T)
        cj = _piece_coeffs(P, D, rows[jj], mid.T)
        c2, c1, c0 = (ci[k] - cj[k] for k in range(3))
        lt, rt = left.T, right.T
        small = np.abs(c2) <= 1e-14 * (np.abs(c1) + np.abs(c0) + 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = c1 * c1 - 4 * c2 * c0
            sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
            r1 = (-c1 - sq) / (2 * c2)
            r2 = (-c1 + sq) / (2 * c2)
            rl = -c0 / c1
        r1 = np.where(small, rl, r1)
        r2 = np.where(small, rl, r2)
        for r in (r1, r2):
            ok = np.isfinite(r) & (r >= lt) & (r <= rt)
            cands.append(r[ok])
    s = np.unique(np.concatenate(cands))
    pts = P[None, :] + s[:, None] * D[None, :]
    return float(point_segment_distance(pts, rows).min(axis=1).max())


def _directed(A: np.ndarray, B: np.ndarray) -> float:
    best = 0.0
    for row in A:
        P = row[0:2]
        D = row[2:4] - P
        best = max(best, _directed_segment(P, D, B))
    return best


def hausdorff_distance(K1, K2, diam: float) -> float:
    """Hausdorff distance between two finite segment unions.

    Empty-set conventions: ``dist(x, ∅) = diam`` so ``d_H(∅, K) = diam`` for
    nonempty ``K`` and ``d_H(∅, ∅) = 0``.  The value is exact up to
    round-off: the supremum along each segment is attained at an endpoint or
    where two distance functions cross, and both are enumerated.
    """
    A = _as_rows(K1)
    B = _as_rows(K2)
    if A.shape[0] == 0 and B.shape[0] == 0:
        return 0.0
    if A.shape[0] == 0 or B.shape[0] == 0:
        return float(diam)
    return max(_directed(A, B), _directed(B, A))


def segments_from(pairs: Iterable[Sequence[float]]) -> SegmentSet:
    """Convenience constructor from ``(x1, y1, x2, y2)`` rows."""
    return SegmentSet.from_array(np.array(list(pairs), dtype=float))
