"""Quasi-static evolution: time stepping, crack accumulation, energy balance.

Time grid: ``N`` is the largest integer with ``delta * (N - 1) < 1``;
``t_i = i * delta`` for ``i < N`` and ``t_N = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .femspace import BoundaryData, BrokenEdgeSet, DiscreteDisplacement, bulk_energy
from .geometry import SegmentSet, hausdorff_distance, measure, residual_measure
from .mesh import (
    MeshParams,
    PolygonalDomain,
    RegularTriangulation,
    _tri_gradients,
    build_regular,
    subdivide,
)
from .minimizer import MinimizeOptions, MinimizeResult, NonConvergence, incremental_minimize

__all__ = [
    "BalanceViolation",
    "Schedule",
    "time_grid",
    "CrackSet",
    "StepRecord",
    "History",
    "evolve",
    "compute_o_delta",
    "check_energy_balance",
    "uniform_bound",
    "initiation_time",
    "convergence_study",
]


class BalanceViolation(AssertionError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


def time_grid(delta: float) -> np.ndarray:
    """Nodes ``t_0 = 0 < ... < t_N = 1``."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    r = 1.0 / delta
    n = int(round(r)) if abs(r - round(r)) <= 1e-9 * max(1.0, r) else int(math.ceil(r))
    t = np.arange(n + 1, dtype=float) * delta
    t[-1] = 1.0
    return t


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Boundary data ``g(t)`` realized by nodal interpolation on the mesh.

    Families
    --------
    ``affine``   ``rate * t * (A x + B y + C)``
    ``tearing``  ``rate * t * (n . (p - origin))``, ``n = (-sin angle, cos angle)``
    ``series``   per-vertex values at knot times, linear in between
    ``zero``     ``g = 0``
    """

    family: str
    delta: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in ("affine", "tearing", "series", "zero"):
            raise ValueError(f"unknown schedule family {self.family!r}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")

    @property
    def times(self) -> np.ndarray:
        return time_grid(self.delta)

    def _spatial(self, R: RegularTriangulation) -> np.ndarray:
        """Nodal values of the time-independent profile G with g = ramp(t) G."""
        x, y = R.points[:, 0], R.points[:, 1]
        p = self.params
        rate = float(p.get("rate", 1.0))
        if self.family == "affine":
            return rate * (p.get("A", 0.0) * x + p.get("B", 0.0) * y + p.get("C", 0.0))
        if self.family == "tearing":
            ang = math.radians(float(p.get("angle_deg", 0.0)))
            ox, oy = p.get("origin", (0.0, 0.0))
            return rate * (-math.sin(ang) * (x - ox) + math.cos(ang) * (y - oy))
        return np.zeros(R.n_points)

    def nodal(self, R: RegularTriangulation, t: float) -> np.ndarray:
        if self.family == "series":
            knots = np.asarray(self.params["times"], dtype=float)
            vals = np.asarray(self.params["values"], dtype=float)
            if vals.shape != (knots.size, R.n_points):
                raise ValueError("series values must be (n_knots, n_points)")
            return np.array([np.interp(t, knots, vals[:, v]) for v in range(R.n_points)])
        return t * self._spatial(R)

    def data(self, R: RegularTriangulation, t: float) -> BoundaryData:
        return BoundaryData(R, self.nodal(R, t))

    def rate_integrals(self, R: RegularTriangulation) -> np.ndarray:
        """``int_{t_r}^{t_{r+1}} ||g'(s)||_{H1} ds`` for each time interval.

        Exact for every built-in family: ``g`` is piecewise linear in time, so
        on each linear piece the integrand is constant.
        """
        times = self.times
        A = _h1_matrix(R)
        if self.family == "series":
            knots = np.asarray(self.params["times"], dtype=float)
            vals = np.asarray(self.params["values"], dtype=float)
            out = np.zeros(times.size - 1)
            for r in range(times.size - 1):
                a, b = times[r], times[r + 1]
                cuts = np.unique(np.concatenate([[a, b], knots[(knots > a) & (knots < b)]]))
                for s0, s1 in zip(cuts[:-1], cuts[1:]):
                    d = (self.nodal(R, s1) - self.nodal(R, s0)) / (s1 - s0)
                    out[r] += (s1 - s0) * math.sqrt(max(d @ A @ d, 0.0))
            return out
        G = self._spatial(R)
        c = math.sqrt(max(G @ A @ G, 0.0))
        return c * np.diff(times)

    def to_dict(self) -> dict:
        return {"family": self.family, "delta": self.delta, "params": _jsonable(self.params)}

    @classmethod
    def from_dict(cls, d) -> "Schedule":
        return cls(d["family"], float(d["delta"]), dict(d.get("params", {})))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _h1_matrix(R: RegularTriangulation):
    """Dense matrix of the full H1 norm (mass + stiffness) on nodal values."""
    n = R.n_points
    A = np.zeros((n, n))
    loc = R.mass + R.stiffness
    tri = R.triangles
    for i in range(3):
        for j in range(3):
            np.add.at(A, (tri[:, i], tri[:, j]), loc[:, i, j])
    return A


def compute_o_delta(schedule: Schedule, R: RegularTriangulation) -> float:
    """``max_r int_{t_r}^{t_{r+1}} ||g'|| * int_0^1 ||g'||`` (H1 norms)."""
    w = schedule.rate_integrals(R)
    if w.size == 0:
        return 0.0
    return float(w.max() * w.sum())


# ---------------------------------------------------------------------------
# crack set and history
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CrackSet:
    """Accumulated crack; grows only through :meth:`union`."""

    rows: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    tags: tuple = ()
    tol: float = 1e-9

    @property
    def gamma(self) -> SegmentSet:
        return SegmentSet.from_array(self.rows, self.tol)

    @property
    def measure(self) -> float:
        return measure(self.gamma) if self.rows.shape[0] else 0.0

    def union(self, rows, tag=None) -> "CrackSet":
        rows = np.asarray(rows, dtype=float).reshape(-1, 4)
        keep = []
        cur = self.rows
        for r in rows:
            if residual_measure(r[None], cur if not keep else np.vstack([cur, keep]),) > self.tol:
                keep.append(r)
        if not keep:
            return self
        new = np.vstack([self.rows, np.array(keep)])
        new.setflags(write=False)
        return CrackSet(new, self.tags + (tag,) * len(keep), self.tol)


@dataclass(eq=False)
class StepRecord:
    index: int
    t: float
    u: DiscreteDisplacement
    crack_step: np.ndarray
    bulk: float
    surface: float
    surface_new: float
    g_sup: float
    converged: bool = True
    result: MinimizeResult | None = None

    @property
    def total(self) -> float:
        return self.bulk + self.surface

    @property
    def u_sup(self) -> float:
        return self.u.sup


@dataclass(eq=False)
class History:
    R: RegularTriangulation
    a: float
    schedule: Schedule
    steps: list
    crack: CrackSet
    seed: int = 0
    o_delta: float = 0.0
    complete: bool = True

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.steps])

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.total for s in self.steps])

    def gamma_at(self, i: int) -> np.ndarray:
        """Rows of the accumulated crack after step ``i``."""
        return np.vstack([np.zeros((0, 4))] + [s.crack_step for s in self.steps[: i + 1]])

    def at_time(self, t: float) -> StepRecord:
        """Piecewise-constant interpolation in time."""
        ts = self.times
        i = int(np.searchsorted(ts, t + 1e-12, side="right") - 1)
        return self.steps[max(i, 0)]


def initiation_time(hist: History) -> float | None:
    for s in hist.steps:
        if s.surface > hist.R.tol_geom:
            return s.t
    return None


def evolve(
    R: RegularTriangulation,
    a: float,
    schedule: Schedule,
    opts: MinimizeOptions | None = None,
    strict: bool = False,
    progress: Callable | None = None,
) -> History:
    """Solve the incremental problems at every node of the time grid.

    Step ``i`` minimizes with data ``g(t_i)`` against the crack accumulated
    so far, starting (among other restarts) from the previous configuration.
    With ``strict`` a :class:`NonConvergence` carries the partial history.
    """
    opts = opts or MinimizeOptions()
    crack = CrackSet(tol=R.tol_geom)
    steps = []
    init = None
    hist = History(R, a, schedule, steps, crack, opts.rng_seed, compute_o_delta(schedule, R))
    for i, t in enumerate(schedule.times):
        g = schedule.data(R, t)
        o = replace(opts, rng_seed=opts.rng_seed + i)
        try:
            res = incremental_minimize(R, a, g, crack.gamma, o, init=init, strict=strict)
        except NonConvergence as exc:
            hist.complete = False
            exc.history = hist
            raise
        new_rows = res.crack.as_array()
        crack = crack.union(new_rows, tag=i)
        rec = StepRecord(
            i,
            float(t),
            res.u,
            new_rows,
            res.energy.bulk,
            crack.measure,
            res.energy.surface_new,
            g.sup,
            res.converged,
            res,
        )
        steps.append(rec)
        hist.crack = crack
        init = (res.broken, res.t)
        if progress is not None:
            progress(rec)
    return hist


# ---------------------------------------------------------------------------
# energy balance
# ---------------------------------------------------------------------------


def _work_terms(hist: History) -> np.ndarray:
    """``2 int grad u_r . grad (g_{r+1} - g_r)`` for every interval r."""
    R = hist.R
    G, _ = _tri_gradients(R.points, R.triangles)
    out = []
    sched = hist.schedule
    for r in range(len(hist.steps) - 1):
        dg = sched.nodal(R, hist.steps[r + 1].t) - sched.nodal(R, hist.steps[r].t)
        grad_dg = np.einsum("kid,ki->kd", G, dg[R.triangles])
        u = hist.steps[r].u
        gu = u.gradients
        area = u.tri.areas
        out.append(2.0 * float(np.sum(area * np.einsum("kd,kd->k", gu, np.repeat(grad_dg, 4, axis=0)))))
    return np.array(out)


def check_energy_balance(hist: History, tol: float = 1e-9, raise_on_violation: bool = False) -> dict:
    """Verify ``E_i <= E_j + sum_{r=j}^{i-1} W_r + o_delta + tol`` for all ``j <= i``.

    ``W_r = 2 int grad u_r . grad (g_{r+1} - g_r)`` is exact because the data
    increments are piecewise affine on the base mesh.
    """
    E = hist.energies
    W = _work_terms(hist)
    S = np.concatenate([[0.0], np.cumsum(W)])
    n = E.size
    jj, ii = np.triu_indices(n)
    resid = E[ii] - E[jj] - (S[ii] - S[jj]) - hist.o_delta
    bad = resid > tol
    report = {
        "max_residual": float(resid.max()) if resid.size else -math.inf,
        "pairs": int(resid.size),
        "violations": int(bad.sum()),
        "offending": [(int(j), int(i)) for j, i in zip(jj[bad], ii[bad])][:50],
        "o_delta": hist.o_delta,
    }
    if raise_on_violation and report["violations"]:
        raise BalanceViolation(f"{report['violations']} energy-balance violations", report)
    return report


def uniform_bound(hist: History) -> dict:
    """Sanity bound ``E_i + ||u_i||_inf <= C'`` built from the run's own data.

    ``C' = ||grad g_0||^2 + 2 max_r ||grad u_r|| int_0^1 ||g'|| + o_delta + max_i ||g_i||_inf``.
    """
    R = hist.R
    g0 = hist.schedule.nodal(R, hist.steps[0].t)
    K = R.stiffness
    e_g0 = float(np.einsum("ki,kij,kj->", g0[R.triangles], K, g0[R.triangles]))
    grad_max = max(math.sqrt(max(s.bulk, 0.0)) for s in hist.steps)
    rate = float(hist.schedule.rate_integrals(R).sum())
    gmax = max(s.g_sup for s in hist.steps)
    C = e_g0 + 2.0 * grad_max * rate + hist.o_delta + gmax
    lhs = max(s.total + s.u_sup for s in hist.steps)
    return {"C_prime": C, "max_lhs": lhs, "ok": bool(math.isfinite(C) and lhs <= C + 1e-9)}


# ---------------------------------------------------------------------------
# refinement study
# ---------------------------------------------------------------------------


def convergence_study(
    domain: PolygonalDomain,
    schedule_factory: Callable[[float], Schedule],
    levels,
    opts: MinimizeOptions | None = None,
    mesh_c: tuple = (0.5, 2.0),
    sample_times=(0.0, 0.25, 0.5, 0.75, 1.0),
) -> dict:
    """Run the evolution on each ``(eps, a, delta)`` level and tabulate trends.

    Crack distances are Hausdorff distances to the last (finest) level.
    No convergence is asserted; successive differences are reported.
    """
    hists = []
    for eps, a, delta in levels:
        R = build_regular(domain, MeshParams(eps, *mesh_c))
        hists.append(evolve(R, a, schedule_factory(delta), opts))
    finest = hists[-1]
    t_init = initiation_time(finest)
    times = sorted(set(float(t) for t in sample_times) | ({t_init} if t_init is not None else set()))
    diam = domain.diameter
    rows = []
    for (eps, a, delta), h in zip(levels, hists):
        for t in times:
            rec = h.at_time(t)
            ref = finest.at_time(t)
            gam = h.gamma_at(rec.index)
            gref = finest.gamma_at(ref.index)
            rows.append(
                {
                    "eps": eps,
                    "a": a,
                    "delta": delta,
                    "t": t,
                    "E": rec.total,
                    "bulk": rec.bulk,
                    "surface": rec.surface,
                    "hausdorff_to_finest": hausdorff_distance(gam, gref, diam),
                }
            )
    e1 = [h.steps[-1].total for h in hists]
    return {
        "rows": rows,
        "E1": e1,
        "E1_changes": [abs(b - a) for a, b in zip(e1[:-1], e1[1:])],
        "initiation": [initiation_time(h) for h in hists],
        "histories": hists,
    }
