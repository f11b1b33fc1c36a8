"""Incremental minimization over broken edges, adaptive vertices and displacements.

The energy of a configuration (broken set ``B``, adaptive map ``t``) is the
bulk energy of the constrained elastic solve plus the length of the actual
jump/violation set not already covered by the previous crack.  Solves are
restricted to ``|u| <= ||g||_inf`` so the returned displacement respects the
maximum-principle bound exactly.

Two searches are provided: a multi-start local search for any mesh, and an
exhaustive enumeration for tiny meshes that certifies the global minimum.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .femspace import (
    BoundaryData,
    BrokenEdgeSet,
    DiscreteDisplacement,
    EnergyBreakdown,
    bulk_energy,
    default_tol_jump,
    displacement_to_dict,
    jump_edges,
    solve_displacement,
    truncate,
    violated_edges,
)
from .geometry import SegmentSet, measure
from .kernels import covered_lengths, enumerate_bulk
from .mesh import SUB_DIRICHLET, AdaptiveTriangulation, RegularTriangulation, subdivide

__all__ = [
    "NonConvergence",
    "InstanceTooLarge",
    "MinimizeOptions",
    "MinimizeResult",
    "EnergyModel",
    "incremental_minimize",
    "brute_force_oracle",
    "verify_unilateral_minimality",
    "default_t_grid",
]


class NonConvergence(RuntimeError):
    """Local search hit ``max_iters``; ``result`` holds the best state found."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class InstanceTooLarge(ValueError):
    pass


def default_t_grid(a: float) -> tuple:
    vals = {a, 0.25, 0.5, 0.75, 1.0 - a}
    return tuple(sorted(v for v in vals if a - 1e-15 <= v <= 1.0 - a + 1e-15))


@dataclass(frozen=True)
class MinimizeOptions:
    restarts: int = 4
    t_grid: tuple | None = None
    edge_flip: bool = True
    vertex_move: bool = True
    collinear_run_break: bool = True
    truncation_pass: bool = True
    rng_seed: int = 0
    energy_tol: float = 1e-9
    max_iters: int = 200
    random_density: float = 0.1
    run_angle_deg: float = 15.0
    violation_granularity: str = "edge"
    bounded: bool = True
    exhaustive_limit: int = 24

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.energy_tol > 0:
            raise ValueError("energy_tol must be > 0")
        if self.violation_granularity not in ("edge", "sub_edge"):
            raise ValueError("violation_granularity must be 'edge' or 'sub_edge'")
        if self.t_grid is not None:
            if len(self.t_grid) == 0:
                raise ValueError("t_grid must be nonempty")
            object.__setattr__(self, "t_grid", tuple(sorted(float(v) for v in self.t_grid)))

    def grid(self, a: float) -> tuple:
        g = self.t_grid if self.t_grid is not None else default_t_grid(a)
        bad = [v for v in g if not a - 1e-12 <= v <= 1 - a + 1e-12]
        if bad:
            raise ValueError(f"t_grid values {bad} outside [a, 1-a] = [{a}, {1 - a}]")
        return g


@dataclass(frozen=True, eq=False)
class Candidate:
    total: float
    bulk: float
    surface_new: float
    broken: BrokenEdgeSet
    t: np.ndarray
    u: DiscreteDisplacement
    jumps: np.ndarray
    violated: np.ndarray

    @property
    def key(self):
        return self.broken.key() + (tuple(np.round(self.t, 15)),)


@dataclass(eq=False)
class MinimizeResult:
    u: DiscreteDisplacement
    energy: EnergyBreakdown
    crack: SegmentSet
    iterations: int
    restarts_used: int
    is_certified_global: bool = False
    converged: bool = True
    seed: int = 0
    elastic_energy: float = math.nan
    g_energy: float = math.nan
    descent: list = field(default_factory=list)

    @property
    def broken(self) -> BrokenEdgeSet:
        return self.u.broken

    @property
    def t(self) -> np.ndarray:
        return self.u.tri.t

    def to_dict(self) -> dict:
        return {
            "energy": self.energy.to_dict(),
            "broken_edges": {
                "interior": list(self.broken.interior),
                "released": list(self.broken.released),
            },
            "t_map": self.t.tolist(),
            "is_certified_global": self.is_certified_global,
            "converged": self.converged,
            "seed": self.seed,
            "iterations": self.iterations,
            "restarts_used": self.restarts_used,
            "crack_segments": self.crack.as_array().tolist(),
            "displacement": displacement_to_dict(self.u),
        }


# ---------------------------------------------------------------------------
# energy model
# ---------------------------------------------------------------------------


class EnergyModel:
    """Evaluates configurations for one incremental problem, with caching."""

    def __init__(self, R, a, g: BoundaryData, gamma_prev=None, opts: MinimizeOptions | None = None):
        self.R = R
        self.a = float(a)
        self.g = g
        self.opts = opts or MinimizeOptions()
        self.tol_jump = default_tol_jump(g)
        self.bound = g.sup if self.opts.bounded else None
        if gamma_prev is None:
            rows = np.zeros((0, 4))
        elif isinstance(gamma_prev, SegmentSet):
            rows = gamma_prev.as_array()
        elif hasattr(gamma_prev, "gamma"):
            rows = gamma_prev.gamma.as_array()
        else:
            rows = np.asarray(gamma_prev, dtype=float).reshape(-1, 4)
        self.gamma_rows = rows
        self.tol = R.tol_geom
        self.dir_cost = self._residual(R.edge_rows, R.edge_lengths)
        self._tri = {}
        self._cache = {}
        self.evaluations = 0

    def _residual(self, rows, lengths):
        if self.gamma_rows.shape[0] == 0:
            return lengths.copy()
        cov = covered_lengths(rows, self.gamma_rows, self.tol)
        res = np.maximum(lengths - cov, 0.0)
        res[res <= 10 * self.tol] = 0.0
        return res

    def tri(self, t):
        t = np.asarray(t, dtype=float)
        k = t.tobytes()
        hit = self._tri.get(k)
        if hit is None:
            T = subdivide(self.R, self.a, t)
            cost = self._residual(T.sub_edge_rows, T.sub_edge_lengths)
            hit = (T, cost)
            if len(self._tri) > 4096:
                self._tri.clear()
            self._tri[k] = hit
        return hit

    def surface(self, T, cost, jumps, violated):
        s = float(cost[jumps].sum())
        if self.opts.violation_granularity == "sub_edge":
            s += float(cost[violated].sum())
        else:
            s += float(self.dir_cost[violated].sum())
        return s

    def _solve(self, B, t):
        T, cost = self.tri(t)
        u = solve_displacement(T, B, self.g, bound=self.bound, check=False)
        if self.opts.truncation_pass and self.bound is None:
            u = truncate(u, self.g.sup)
        self.evaluations += 1
        jumps = jump_edges(u, self.tol_jump)
        viol = violated_edges(u, self.g, self.tol_jump, self.opts.violation_granularity)
        bulk = bulk_energy(u)
        surf = self.surface(T, cost, jumps, viol)
        return u, jumps, viol, bulk, surf

    def evaluate(self, B: BrokenEdgeSet, t) -> Candidate:
        """Solve, prune the broken set to the actual jumps, and re-solve until stable."""
        t = np.asarray(t, dtype=float)
        tk = t.tobytes()
        key = (B.interior, B.released, tk)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        seen = [key]
        cur = B
        for _ in range(8):
            u, jumps, viol, bulk, surf = self._solve(cur, t)
            if self.opts.violation_granularity == "sub_edge":
                rel = np.unique(u.tri.topo.parent[viol])
            else:
                rel = viol
            pruned = BrokenEdgeSet(tuple(jumps.tolist()), tuple(np.intersect1d(rel, cur.released).tolist()))
            if pruned == cur:
                break
            k2 = (pruned.interior, pruned.released, tk)
            hit = self._cache.get(k2)
            if hit is not None:
                for k in seen:
                    self._cache[k] = hit
                return hit
            seen.append(k2)
            cur = pruned
        u = DiscreteDisplacement(u.tri, u.corner_values, cur)
        cand = Candidate(bulk + surf, bulk, surf, cur, t, u, jumps, viol)
        if len(self._cache) > 200000:
            self._cache.clear()
        for k in seen:
            self._cache[k] = cand
        return cand

    def crack_rows(self, c: Candidate) -> np.ndarray:
        T = c.u.tri
        rows = [T.sub_edge_rows[c.jumps]]
        if self.opts.violation_granularity == "sub_edge":
            rows.append(T.sub_edge_rows[c.violated])
        else:
            rows.append(self.R.edge_rows[c.violated])
        return np.vstack(rows)

    def g_energy(self) -> float:
        K = self.R.stiffness
        v = self.g.nodal[self.R.triangles]
        return float(np.einsum("ki,kij,kj->", v, K, v))

    def result(self, c: Candidate, **kw) -> MinimizeResult:
        tot_rows = np.vstack([self.gamma_rows, self.crack_rows(c)])
        s_total = measure(SegmentSet.from_array(tot_rows, self.tol)) if tot_rows.size else 0.0
        energy = EnergyBreakdown(c.bulk, c.surface_new, s_total, c.bulk + c.surface_new)
        crack = SegmentSet.from_array(self.crack_rows(c), self.tol)
        return MinimizeResult(c.u, energy, crack, **kw)


def _accept(new: Candidate, cur: Candidate, tol: float) -> bool:
    """Local-search acceptance: strict descent, or equal energy with fewer broken edges.

    Equal-energy moves that only change the tie-break key (for instance the
    adaptive parameter of an edge the crack does not use) are rejected, so a
    search cannot wander along a plateau.
    """
    if new is cur:
        return False
    if new.total < cur.total - tol:
        return True
    return new.total <= cur.total and new.broken.size < cur.broken.size


def _best_of(cands, tol):
    """Lowest energy; among candidates within ``tol`` of it, the smallest key."""
    cands = [c for c in cands if c is not None]
    if not cands:
        return None
    emin = min(c.total for c in cands)
    near = [c for c in cands if c.total <= emin + tol]
    return min(near, key=lambda c: c.key)


# ---------------------------------------------------------------------------
# neighbourhoods
# ---------------------------------------------------------------------------


class _Moves:
    def __init__(self, model: EnergyModel, grid):
        self.model = model
        self.grid = np.asarray(grid, dtype=float)
        R = model.R
        self.R = R
        T0 = subdivide(R, model.a)
        topo = T0.topo
        self.topo = topo
        self.interior = T0.interior_sub_edges
        self.dirichlet = R.dirichlet_edges
        self.n_bin = self.interior.size + self.dirichlet.size
        self.small = self.n_bin <= model.opts.exhaustive_limit
        nv = T0.points.shape[0]
        # vertex -> interior sub-edges
        inc = [[] for _ in range(nv)]
        for s in self.interior:
            a, b = topo.sub_edges[s]
            inc[a].append(s)
            inc[b].append(s)
        self.v_inc = [np.array(x, dtype=np.int64) for x in inc]
        dinc = [[] for _ in range(R.n_points)]
        for e in self.dirichlet:
            i, j = R.edges[e]
            dinc[i].append(e)
            dinc[j].append(e)
        self.v_dir = [np.array(x, dtype=np.int64) for x in dinc]
        self._runs = {}
        self._dir_runs = self._dirichlet_runs()

    def _dirichlet_runs(self):
        R = self.R
        if R.domain is None or not self.dirichlet.size:
            return [tuple(self.dirichlet.tolist())] if self.dirichlet.size else []
        v = R.domain.vertices
        runs = []
        rows = R.edge_rows
        tol = R.tol_geom
        for k in R.domain.dirichlet_marks:
            a, b = v[k], v[(k + 1) % v.shape[0]]
            side = np.array([[*a, *b]])
            cov = covered_lengths(rows[self.dirichlet], side, 10 * tol)
            ids = self.dirichlet[cov >= R.edge_lengths[self.dirichlet] - 10 * tol]
            if ids.size:
                runs.append(tuple(ids.tolist()))
        return runs

    def crack_vertices(self, c: Candidate):
        se = self.topo.sub_edges
        vs = set(se[c.jumps].ravel().tolist())
        if c.violated.size:
            if self.model.opts.violation_granularity == "sub_edge":
                vs |= set(se[c.violated].ravel().tolist())
            else:
                vs |= set(self.R.edges[c.violated].ravel().tolist())
        for e in c.broken.released:
            vs |= set(self.R.edges[e].tolist())
        return sorted(vs)

    def flips(self, c: Candidate):
        B = c.broken
        out = []
        if self.small:
            cur_i, cur_r = set(B.interior), set(B.released)
            singles = [("i", int(s)) for s in self.interior] + [("r", int(e)) for e in self.dirichlet]

            def flip(items):
                bi, br = set(cur_i), set(cur_r)
                for kind, x in items:
                    tgt = bi if kind == "i" else br
                    tgt.symmetric_difference_update({x})
                return BrokenEdgeSet(tuple(bi), tuple(br))

            for s in singles:
                out.append(flip([s]))
            for p in itertools.combinations(singles, 2):
                out.append(flip(p))
            return out
        for s in B.interior:
            out.append(BrokenEdgeSet(tuple(x for x in B.interior if x != s), B.released))
        for e in B.released:
            out.append(BrokenEdgeSet(B.interior, tuple(x for x in B.released if x != e)))
        cand_i, cand_r = set(), set()
        n = self.R.n_points
        for v in self.crack_vertices(c):
            cand_i.update(self.v_inc[v].tolist())
            if v < n:
                cand_r.update(self.v_dir[v].tolist())
        cand_i -= set(B.interior)
        cand_r -= set(B.released)
        for s in sorted(cand_i):
            out.append(BrokenEdgeSet(B.interior + (s,), B.released))
        for e in sorted(cand_r):
            out.append(BrokenEdgeSet(B.interior, B.released + (e,)))
        return out

    def t_moves(self, c: Candidate):
        t = c.t
        R = self.R
        if self.small:
            edges = range(R.n_edges)
        else:
            es = set()
            n = R.n_points
            for v in self.crack_vertices(c):
                if v >= n:
                    es.add(v - n)
                else:
                    es.update(np.flatnonzero((R.edges[:, 0] == v) | (R.edges[:, 1] == v)).tolist())
            edges = sorted(es)
        out = []
        grid = self.grid
        for e in edges:
            if self.small:
                vals = [v for v in grid if v != t[e]]
            else:
                pos = np.searchsorted(grid, t[e])
                vals = []
                if pos > 0:
                    vals.append(grid[pos - 1])
                if pos < grid.size and grid[pos] != t[e]:
                    vals.append(grid[pos])
                elif pos + 1 < grid.size:
                    vals.append(grid[pos + 1])
            for v in vals:
                t2 = t.copy()
                t2[e] = v
                out.append(t2)
        return out

    def runs(self, t) -> list:
        """Maximal near-straight chains of interior sub-edges, one per seed, deduplicated."""
        k = np.asarray(t).tobytes()
        hit = self._runs.get(k)
        if hit is not None:
            return hit
        T, _ = self.model.tri(t)
        pts = T.points
        se = self.topo.sub_edges
        cosmax = math.cos(math.radians(self.model.opts.run_angle_deg))
        d = pts[se[:, 1]] - pts[se[:, 0]]
        d /= np.hypot(d[:, 0], d[:, 1])[:, None]
        seen = set()
        runs = []
        for s0 in self.interior:
            u0 = d[s0]
            chain = [int(s0)]
            for direction, start in ((1.0, se[s0, 1]), (-1.0, se[s0, 0])):
                v, prev = int(start), int(s0)
                while True:
                    best, bcos = -1, cosmax
                    for s in self.v_inc[v]:
                        if s == prev:
                            continue
                        a, b = se[s]
                        sgn = 1.0 if a == v else -1.0
                        cs = direction * sgn * float(d[s] @ u0)
                        if cs > bcos + 1e-12:
                            best, bcos = int(s), cs
                    if best < 0 or best in chain:
                        break
                    chain.append(best)
                    a, b = se[best]
                    v, prev = int(b if a == v else a), best
            key = tuple(sorted(chain))
            if key not in seen:
                seen.add(key)
                runs.append(key)
        self._runs[k] = runs
        return runs

    def run_moves(self, c: Candidate, e_cur: float):
        B = c.broken
        T, cost = self.model.tri(c.t)
        have = set(B.interior)
        out = []
        for run in self.runs(c.t):
            add = [s for s in run if s not in have]
            if not add:
                continue
            if float(cost[add].sum()) >= e_cur:
                continue
            out.append(BrokenEdgeSet(B.interior + tuple(add), B.released))
        have_r = set(B.released)
        for run in self._dir_runs:
            add = [e for e in run if e not in have_r]
            if not add or float(self.model.dir_cost[add].sum()) >= e_cur:
                continue
            out.append(BrokenEdgeSet(B.interior, B.released + tuple(add)))
        return out


# ---------------------------------------------------------------------------
# local search
# ---------------------------------------------------------------------------


def _local_search(model: EnergyModel, moves: _Moves, start: Candidate, opts: MinimizeOptions):
    tol = opts.energy_tol
    cur = start
    trace = [cur.total]
    for it in range(1, opts.max_iters + 1):
        props = []
        if opts.edge_flip:
            props += [model.evaluate(B, cur.t) for B in moves.flips(cur)]
        if opts.vertex_move:
            props += [model.evaluate(cur.broken, t) for t in moves.t_moves(cur)]
        best = _best_of(props, tol)
        if best is not None and not moves.small and opts.edge_flip and cur.broken.interior:
            # batch heal: drop every edge whose single heal improves
            good = {
                s
                for s, p in zip(cur.broken.interior, props[: len(cur.broken.interior)])
                if p.total < cur.total - tol
            }
            if len(good) > 1:
                B = BrokenEdgeSet(tuple(x for x in cur.broken.interior if x not in good), cur.broken.released)
                best = _best_of([best, model.evaluate(B, cur.t)], tol)
        if best is not None and _accept(best, cur, tol):
            cur = best
            trace.append(cur.total)
            continue
        if opts.collinear_run_break:
            props = [model.evaluate(B, cur.t) for B in moves.run_moves(cur, cur.total)]
            best = _best_of(props, tol)
            if best is not None and _accept(best, cur, tol):
                cur = best
                trace.append(cur.total)
                continue
        return cur, it, True, trace
    return cur, opts.max_iters, False, trace


def _covered_start(model: EnergyModel, moves: _Moves, t) -> BrokenEdgeSet:
    T, cost = model.tri(t)
    free_i = [int(s) for s in moves.interior if cost[s] == 0.0]
    free_r = [int(e) for e in moves.dirichlet if model.dir_cost[e] == 0.0]
    return BrokenEdgeSet(tuple(free_i), tuple(free_r))


def incremental_minimize(
    R: RegularTriangulation,
    a: float,
    g: BoundaryData,
    gamma_prev=None,
    opts: MinimizeOptions | None = None,
    init: tuple | None = None,
    strict: bool = False,
    model: EnergyModel | None = None,
) -> MinimizeResult:
    """Approximate minimizer of ``||grad u||^2 + H1(S^g(u) minus gamma_prev)``.

    Parameters
    ----------
    init : (BrokenEdgeSet, t) of the previous step, optional
        Re-solving that configuration with the new data gives the lifted
        competitor ``u_prev + (g - g_prev)`` or something better.
    strict : bool
        Raise :class:`NonConvergence` when a restart hits ``max_iters``.
    """
    opts = opts or MinimizeOptions()
    grid = opts.grid(a)
    model = model or EnergyModel(R, a, g, gamma_prev, opts)
    moves = _Moves(model, grid)
    rng = np.random.default_rng(opts.rng_seed)
    tol = opts.energy_tol
    t_mid = np.full(R.n_edges, 0.5)
    t_prev = np.asarray(init[1], dtype=float) if init is not None else t_mid

    elastic = model.evaluate(BrokenEdgeSet(), t_prev)
    g_energy = model.g_energy()
    starts = []
    if init is not None:
        starts.append(model.evaluate(init[0], t_prev))
    else:
        starts.append(elastic)
    starts.append(model.evaluate(_covered_start(model, moves, t_prev), t_prev))
    while len(starts) < opts.restarts:
        p = opts.random_density
        bi = moves.interior[rng.random(moves.interior.size) < p]
        br = moves.dirichlet[rng.random(moves.dirichlet.size) < p]
        if moves.small:
            t = rng.choice(np.asarray(grid), size=R.n_edges)
        else:
            t = t_prev.copy()
        starts.append(model.evaluate(BrokenEdgeSet(tuple(bi.tolist()), tuple(br.tolist())), t))
    starts = starts[: opts.restarts]

    best, iters, converged, descent = None, 0, True, []
    for s in [elastic] + starts:
        c, it, ok, trace = _local_search(model, moves, s, opts)
        iters += it
        converged &= ok
        descent.append(trace)
        best = _best_of([best, c], tol) if best is not None else c
    res = model.result(
        best,
        iterations=iters,
        restarts_used=len(starts),
        converged=converged,
        seed=opts.rng_seed,
        elastic_energy=elastic.total,
        g_energy=g_energy,
        descent=descent,
    )
    if strict and not converged:
        raise NonConvergence(f"local search hit max_iters={opts.max_iters}", res)
    return res


# ---------------------------------------------------------------------------
# exhaustive oracle
# ---------------------------------------------------------------------------


def brute_force_oracle(
    R: RegularTriangulation,
    a: float,
    t_grid,
    g: BoundaryData,
    gamma_prev=None,
    max_binaries: int = 20,
    max_tmaps: int = 5000,
    opts: MinimizeOptions | None = None,
) -> MinimizeResult:
    """Global minimum over every broken subset and every ``t_grid`` assignment.

    Each configuration's elastic energy comes from the enumeration kernel;
    the surface term is the residual length of all broken pieces, whose
    minimum over configurations equals the minimum of the true energy (the
    elastic optimum only improves when non-jumping edges are healed).  The
    winner is re-evaluated through the standard solver.
    """
    opts = opts or MinimizeOptions(t_grid=tuple(t_grid))
    t_grid = tuple(sorted(float(v) for v in t_grid))
    model = EnergyModel(R, a, g, gamma_prev, opts)
    T0 = subdivide(R, a)
    topo = T0.topo
    interior = T0.interior_sub_edges
    dirichlet = R.dirichlet_edges
    n_int = interior.size
    nb = n_int + dirichlet.size
    n_t = len(t_grid) ** R.n_edges
    if nb > max_binaries or n_t > max_tmaps:
        raise InstanceTooLarge(
            f"{nb} binary choices x {n_t} t-maps exceeds the cap ({max_binaries}, {max_tmaps})"
        )
    ie_dofs = np.ascontiguousarray(topo.se_dofs[interior])
    dh = np.flatnonzero(topo.kind == SUB_DIRICHLET)
    dh_dofs = np.ascontiguousarray(topo.se_dofs[dh][:, [0, 2]])
    pos = {int(e): k for k, e in enumerate(dirichlet)}
    dh_parent = np.array([pos[int(topo.parent[s])] for s in dh], dtype=np.int64)
    masks = np.arange(2**nb, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(nb)[None, :]) & 1).astype(float)
    pop = bits.sum(axis=1)
    bound = g.sup if opts.bounded else -1.0
    tol = opts.energy_tol
    records = []
    best_val = math.inf
    for tm in itertools.product(t_grid, repeat=R.n_edges):
        t = np.array(tm)
        T, cost = model.tri(t)
        costs = np.concatenate([cost[interior], model.dir_cost[dirichlet]])
        bulk = enumerate_bulk(
            masks,
            np.ascontiguousarray(T.stiffness),
            np.ascontiguousarray(g.corner_values(T)),
            ie_dofs,
            dh_dofs,
            dh_parent,
            n_int,
            float(bound),
        )
        total = bulk + bits @ costs
        total = np.where(np.isnan(total), np.inf, total)
        m = float(total.min())
        if m < best_val:
            best_val = m
        near = np.flatnonzero(total <= best_val + tol)
        for k in near:
            records.append((float(total[k]), int(pop[k]), int(masks[k]), t))
        records = [r for r in records if r[0] <= best_val + tol]
    records.sort(key=lambda r: (r[1], r[2], tuple(r[3])))
    cands = []
    for _, _, mk, t in records[:2000]:
        on = (mk >> np.arange(nb)) & 1
        B = BrokenEdgeSet(
            tuple(interior[on[:n_int] == 1].tolist()), tuple(dirichlet[on[n_int:] == 1].tolist())
        )
        cands.append(model.evaluate(B, t))
    best = _best_of(cands, tol)
    res = model.result(
        best,
        iterations=0,
        restarts_used=0,
        is_certified_global=True,
        seed=opts.rng_seed,
        g_energy=model.g_energy(),
    )
    res.oracle_value = best_val
    return res


# ---------------------------------------------------------------------------
# minimality spot check
# ---------------------------------------------------------------------------


def verify_unilateral_minimality(
    u: DiscreteDisplacement,
    g: BoundaryData,
    gamma_prev=None,
    trials: int = 100,
    rng_seed: int = 0,
    tol: float = 1e-8,
    t_grid=None,
    bounded_competitors: bool = False,
    granularity: str = "edge",
) -> dict:
    """Check ``||grad u||^2 <= ||grad v||^2 + H1(S^g(v) minus gamma_prev)`` on sampled v.

    Competitors: ``v = g``, ``v = u``, the elastic solve broken along every
    edge covered by ``gamma_prev``, and ``trials`` elastic solves over random
    broken sets and random adaptive maps.  By default competitors are solved
    without the ``|v| <= ||g||_inf`` bound, i.e. over the whole space.
    """
    R = u.tri.base
    a = u.tri.a
    opts = MinimizeOptions(bounded=bounded_competitors, truncation_pass=False,
                           violation_granularity=granularity)
    model = EnergyModel(R, a, g, gamma_prev, opts)
    lhs = bulk_energy(u)
    rng = np.random.default_rng(rng_seed)
    grid = np.asarray(t_grid if t_grid is not None else default_t_grid(a))
    T0 = subdivide(R, a)
    interior = T0.interior_sub_edges
    dirichlet = R.dirichlet_edges
    gaps = []

    # v = g: no jump, no violation
    gaps.append(("g", model.g_energy() - lhs))
    # v = u itself
    T, cost = model.tri(u.tri.t)
    ju = jump_edges(u, model.tol_jump)
    vu = violated_edges(u, g, model.tol_jump, granularity)
    gaps.append(("self", lhs + model.surface(T, cost, ju, vu) - lhs))
    # v broken along everything the previous crack already covers (free surface)
    free_i = tuple(int(s) for s in interior if cost[s] == 0.0)
    free_r = tuple(int(e) for e in dirichlet if model.dir_cost[e] == 0.0)
    if free_i or free_r:
        c = model.evaluate(BrokenEdgeSet(free_i, free_r), u.tri.t)
        gaps.append(("covered", c.total - lhs))
    for k in range(trials):
        dens = rng.uniform(0.02, 0.4)
        bi = interior[rng.random(interior.size) < dens]
        br = dirichlet[rng.random(dirichlet.size) < dens]
        if rng.random() < 0.5:
            t = u.tri.t.copy()
        else:
            t = rng.choice(grid, size=R.n_edges)
        c = model.evaluate(BrokenEdgeSet(tuple(bi.tolist()), tuple(br.tolist())), t)
        gaps.append((f"random{k}", c.total - lhs))
    worst = min(gp for _, gp in gaps)
    viol = [(name, gp) for name, gp in gaps if gp < -tol]
    return {
        "trials": len(gaps),
        "violations": len(viol),
        "worst_gap": float(worst),
        "offenders": viol[:10],
    }
