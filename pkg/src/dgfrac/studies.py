"""Empirical mesh studies: inflation of transferred cracks and covering constants.

The random corpus lives on the unit square with endpoints on the lines of a
coarse grid, so the same segments have endpoints on mesh edges for every
structured mesh whose spacing divides the coarse one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Segment
from .mesh import RegularTriangulation, edge_curve_cover, shell, subdivide, transfer_jump

__all__ = ["SegmentCorpus", "random_corpus", "inflation_study", "covering_constants"]


@dataclass(frozen=True)
class SegmentCorpus:
    rows: np.ndarray
    kind: np.ndarray  # "axis" or "general"

    def __len__(self):
        return self.rows.shape[0]


def _grid_point(rng, h, vertical):
    """Point on a random line of the ``h``-grid, away from grid vertices."""
    n = int(round(1.0 / h))
    k = rng.integers(0, n + 1)
    cell = rng.integers(0, n)
    s = (cell + rng.uniform(0.1, 0.9)) * h
    return (k * h, s) if vertical else (s, k * h)


def random_corpus(
    n: int = 200,
    seed: int = 0,
    h: float = 1 / 8,
    min_length: float = 0.4,
    axis_fraction: float = 0.5,
) -> SegmentCorpus:
    """Segments in the unit square with endpoints on lines of the ``h``-grid.

    Axis-aligned members run horizontally or vertically at an offset that is
    not a grid line; general members join two random grid-line points.
    """
    rng = np.random.default_rng(seed)
    n_axis = int(round(axis_fraction * n))
    rows, kind = [], []
    while len(rows) < n_axis:
        horizontal = bool(rng.integers(0, 2))
        c = (rng.integers(0, int(round(1 / h))) + rng.uniform(0.1, 0.9)) * h
        k0, k1 = sorted(rng.choice(int(round(1 / h)) + 1, size=2, replace=False))
        x0, x1 = k0 * h, k1 * h
        if x1 - x0 < min_length:
            continue
        rows.append((x0, c, x1, c) if horizontal else (c, x0, c, x1))
        kind.append("axis")
    while len(rows) < n:
        p = _grid_point(rng, h, bool(rng.integers(0, 2)))
        q = _grid_point(rng, h, bool(rng.integers(0, 2)))
        d = math.hypot(q[0] - p[0], q[1] - p[1])
        # skip segments running along a grid line
        if d < min_length or abs(q[0] - p[0]) < 1e-9 or abs(q[1] - p[1]) < 1e-9:
            continue
        rows.append((*p, *q))
        kind.append("general")
    return SegmentCorpus(np.array(rows, dtype=float), np.array(kind))


def inflation_study(R: RegularTriangulation, corpus: SegmentCorpus, a_values) -> list[dict]:
    """Per ``a``: mean and max of ``H1(interp) / H1(l)`` over single segments."""
    out = []
    axis = corpus.kind == "axis"
    for a in a_values:
        vals = np.array([transfer_jump(R, a, row[None])[2] for row in corpus.rows])
        out.append(
            {
                "a": float(a),
                "mean": float(vals.mean()),
                "max": float(vals.max()),
                "mean_axis": float(vals[axis].mean()) if axis.any() else math.nan,
                "max_axis": float(vals[axis].max()) if axis.any() else math.nan,
                "mean_general": float(vals[~axis].mean()) if (~axis).any() else math.nan,
            }
        )
    return out


def covering_constants(R: RegularTriangulation, corpus: SegmentCorpus, a: float = 0.25) -> dict:
    """Max ratios of the edge-curve cover and of the shell boundary to ``|l|``."""
    T = subdivide(R, a)
    cover, shells = [], []
    for row in corpus.rows:
        seg = Segment.from_coords(*row)
        cover.append(edge_curve_cover(T, seg)[1])
        shells.append(shell(R, seg)[1] / seg.length)
    cover, shells = np.array(cover), np.array(shells)
    return {
        "eps": R.eps,
        "cover_max": float(cover.max()),
        "cover_mean": float(cover.mean()),
        "shell_max": float(shells.max()),
        "shell_mean": float(shells.mean()),
    }
