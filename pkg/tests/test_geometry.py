import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgfrac.geometry import (
    Point2,
    Segment,
    SegmentSet,
    hausdorff_distance,
    intersection_measure,
    measure,
    point_segment_distance,
    residual_measure,
    segments_from,
)

coord = st.floats(-2, 2, allow_nan=False, allow_infinity=False)


def _nondegenerate(rows):
    rows = np.array(rows, dtype=float).reshape(-1, 4)
    short = np.hypot(rows[:, 2] - rows[:, 0], rows[:, 3] - rows[:, 1]) < 1e-3
    rows[short, 2] += 0.1
    return rows


def segment_rows(n_max=4):
    return st.lists(st.tuples(coord, coord, coord, coord), min_size=1, max_size=n_max).map(_nondegenerate)


@st.composite
def collinear_rows(draw):
    """Segments on a few shared lines, so overlaps actually occur."""
    lines = [((0.0, 0.0), (1.0, 0.0)), ((0.0, 0.5), (0.6, 0.8)), ((1.0, -1.0), (0.0, 1.0))]
    n = draw(st.integers(1, 8))
    rows = []
    for _ in range(n):
        (ox, oy), (dx, dy) = lines[draw(st.integers(0, 2))]
        s0 = draw(st.floats(-1, 1))
        s1 = draw(st.floats(-1, 1))
        if abs(s1 - s0) < 1e-3:
            s1 = s0 + 0.1
        rows.append([ox + s0 * dx, oy + s0 * dy, ox + s1 * dx, oy + s1 * dy])
    return np.array(rows)


def sample_points(rows, n=400):
    s = np.linspace(0, 1, n)
    return np.concatenate([r[None, 0:2] + s[:, None] * (r[2:4] - r[0:2])[None] for r in rows])


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        Point2(float("nan"), 0.0)


def test_segment_rejects_degenerate():
    with pytest.raises(ValueError):
        Segment.from_coords(1, 1, 1, 1)


def test_measure_examples():
    assert measure(segments_from([(0, 0, 1, 0), (0.5, 0, 1.5, 0)])) == pytest.approx(1.5, abs=1e-12)
    assert measure(segments_from([(0, 0, 1, 0), (0.5, -1, 0.5, 1)])) == pytest.approx(3.0, abs=1e-12)
    assert measure(SegmentSet()) == 0.0
    # reversed duplicate counts once
    assert measure(segments_from([(0, 0, 1, 1), (1, 1, 0, 0)])) == pytest.approx(math.sqrt(2), abs=1e-12)


def test_residual_examples():
    S = segments_from([(0, 0, 1, 0)])
    C = segments_from([(0.5, 0, 2, 0)])
    assert residual_measure(S, C) == pytest.approx(0.5, abs=1e-12)
    assert residual_measure(S, SegmentSet()) == pytest.approx(1.0)
    assert residual_measure(S, S) == 0.0
    # crossing but not collinear: no overlap
    assert residual_measure(S, segments_from([(0.5, -1, 0.5, 1)])) == pytest.approx(1.0)


def _interval_oracle(rows):
    """Union length of segments on one axis line by exact interval merging."""
    iv = sorted((min(r[0], r[2]), max(r[0], r[2])) for r in rows)
    total, cur_lo, cur_hi = 0.0, None, None
    for lo, hi in iv:
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    return total + (cur_hi - cur_lo)


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=10))
def test_measure_matches_interval_union(pairs):
    rows = np.array([(a, 0.0, b, 0.0) for a, b in pairs if abs(a - b) > 1e-6])
    if rows.size == 0:
        return
    assert measure(rows) == pytest.approx(_interval_oracle(rows), abs=1e-7)


@given(collinear_rows())
def test_measure_bounds(rows):
    lengths = np.hypot(rows[:, 2] - rows[:, 0], rows[:, 3] - rows[:, 1])
    m = measure(rows)
    assert lengths.max() - 1e-9 <= m <= lengths.sum() + 1e-9


@given(collinear_rows(), st.randoms(use_true_random=False))
def test_measure_permutation_invariant(rows, rnd):
    perm = list(range(len(rows)))
    rnd.shuffle(perm)
    assert measure(rows[perm]) == pytest.approx(measure(rows), abs=1e-9)


@given(collinear_rows(), st.floats(0.05, 0.95))
def test_measure_additive_under_split(rows, s):
    r = rows[0]
    mid = r[0:2] + s * (r[2:4] - r[0:2])
    split = np.vstack([[*r[0:2], *mid], [*mid, *r[2:4]], rows[1:]])
    assert measure(split) == pytest.approx(measure(rows), abs=1e-9)


@given(collinear_rows(), collinear_rows())
def test_residual_identities(S, C):
    assert residual_measure(S, S) == pytest.approx(0.0, abs=1e-9)
    r = residual_measure(S, C)
    assert -1e-12 <= r <= measure(S) + 1e-9
    # H1(S) = H1(S \ C) + H1(S ∩ C)
    assert intersection_measure(S, C) + r == pytest.approx(measure(S), abs=1e-9)
    # H1(S ∪ C) = H1(C) + H1(S \ C)
    assert measure(np.vstack([C, S])) == pytest.approx(measure(C) + r, abs=1e-9)


def test_hausdorff_examples():
    A = segments_from([(0, 0, 1, 0)])
    B = segments_from([(0, 1, 1, 1)])
    assert hausdorff_distance(A, B, 2.0) == pytest.approx(1.0)
    assert hausdorff_distance(A, A, 2.0) == 0.0
    assert hausdorff_distance(SegmentSet(), SegmentSet(), 2.0) == 0.0
    assert hausdorff_distance(SegmentSet(), A, math.sqrt(2)) == pytest.approx(math.sqrt(2))
    # sup attained at an interior point: equidistant from two far segments
    C = segments_from([(0, 0, 2, 0)])
    D = segments_from([(0, 0, 0, 1), (2, 0, 2, 1)])
    assert hausdorff_distance(C, D, 4.0) == pytest.approx(1.0)


@given(segment_rows(), segment_rows())
def test_hausdorff_against_sampling(A, B):
    """Exact value dominates a dense-sample estimate and exceeds it by at most the mesh width."""
    exact = hausdorff_distance(A, B, 10.0)
    pa, pb = sample_points(A), sample_points(B)
    dab = point_segment_distance(pa, B).min(axis=1).max()
    dba = point_segment_distance(pb, A).min(axis=1).max()
    est = max(dab, dba)
    step = max(np.hypot(r[2] - r[0], r[3] - r[1]) for r in np.vstack([A, B])) / 399
    assert est <= exact + 1e-9
    assert exact <= est + step + 1e-9


@given(segment_rows(), segment_rows(), segment_rows())
def test_hausdorff_metric_axioms(A, B, C):
    d = lambda X, Y: hausdorff_distance(X, Y, 10.0)
    assert d(A, B) == pytest.approx(d(B, A), abs=1e-12)
    assert d(A, C) <= d(A, B) + d(B, C) + 1e-9
