import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgfrac.femspace import (
    BoundaryData,
    BrokenEdgeSet,
    DiscreteDisplacement,
    boundary_violation_set,
    bulk_energy,
    displacement_from_dict,
    displacement_to_dict,
    jump_set,
    solve_displacement,
    truncate,
    violated_edges,
)
from dgfrac.geometry import measure
from dgfrac.mesh import SUB_ADAPTIVE, SUB_DIRICHLET, SUB_INTERIOR, MeshParams, PolygonalDomain, build_regular, subdivide

R4 = build_regular(PolygonalDomain.unit_square(), MeshParams(1 / 4))


def kkt_oracle(T, B, g, bound=None):
    """Minimize the bulk energy over all 3 n_sub corner values by a full KKT solve.

    Continuity and Dirichlet conditions are explicit equality constraints; an
    optional box is handled by scipy's SLSQP as an independent check.
    """
    topo = T.topo
    n = 3 * T.n_sub
    K = np.zeros((n, n))
    for k in range(T.n_sub):
        K[3 * k : 3 * k + 3, 3 * k : 3 * k + 3] = T.stiffness[k]
    rows, rhs = [], []
    broken = set(B.interior)
    released = set(B.released)
    vert = g.vertex_values(T)
    for s in range(topo.kind.size):
        d = topo.se_dofs[s]
        if topo.kind[s] in (SUB_ADAPTIVE, SUB_INTERIOR) and s not in broken:
            for i, j in ((d[0], d[1]), (d[2], d[3])):
                r = np.zeros(n)
                r[i], r[j] = 1, -1
                rows.append(r)
                rhs.append(0.0)
        if topo.kind[s] == SUB_DIRICHLET and topo.parent[s] not in released:
            for dof, v in ((d[0], topo.sub_edges[s, 0]), (d[2], topo.sub_edges[s, 1])):
                r = np.zeros(n)
                r[dof] = 1
                rows.append(r)
                rhs.append(vert[v])
    C = np.array(rows).reshape(-1, n)
    c = np.array(rhs)
    if bound is None:
        m = C.shape[0]
        A = np.block([[K, C.T], [C, np.zeros((m, m))]])
        sol = np.linalg.lstsq(A, np.concatenate([np.zeros(n), c]), rcond=None)[0]
        x = sol[:n]
    else:
        from scipy.linalg import null_space
        from scipy.optimize import minimize

        # eliminate the (possibly redundant) equalities: x = x0 + N z
        x0 = np.linalg.lstsq(C, c, rcond=None)[0]
        N = null_space(C)
        H = N.T @ K @ N
        f = N.T @ K @ x0
        res = minimize(
            lambda z: z @ H @ z + 2 * f @ z, np.zeros(N.shape[1]), jac=lambda z: 2 * (H @ z + f),
            method="SLSQP",
            constraints=[
                {"type": "ineq", "fun": lambda z: bound - (x0 + N @ z), "jac": lambda z: -N},
                {"type": "ineq", "fun": lambda z: bound + (x0 + N @ z), "jac": lambda z: N},
            ],
            options={"ftol": 1e-15, "maxiter": 2000},
        )
        assert res.success, res.message
        x = x0 + N @ res.x
    return float(x @ K @ x), x.reshape(-1, 3), C, c


def random_broken(T, rng, p_int=0.15, p_rel=0.3):
    kind = T.topo.kind
    interior = np.flatnonzero((kind == SUB_ADAPTIVE) | (kind == SUB_INTERIOR))
    bi = interior[rng.random(interior.size) < p_int]
    de = T.base.dirichlet_edges
    br = de[rng.random(de.size) < p_rel]
    return BrokenEdgeSet(tuple(bi), tuple(br))


def test_linear_data_elastic_energy():
    T = subdivide(R4, 0.25)
    g = BoundaryData.from_function(R4, lambda x, y: y)
    u = solve_displacement(T, BrokenEdgeSet(), g)
    assert bulk_energy(u) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(u.corner_values, g.corner_values(T), atol=1e-12)


def test_midline_cut_releases_energy():
    T = subdivide(R4, 0.25)
    g = BoundaryData.from_function(R4, lambda x, y: y)
    rows = T.sub_edge_rows
    on_mid = np.flatnonzero((np.abs(rows[:, 1] - 0.5) < 1e-12) & (np.abs(rows[:, 3] - 0.5) < 1e-12))
    u = solve_displacement(T, BrokenEdgeSet(tuple(on_mid)), g)
    assert bulk_energy(u) == pytest.approx(0.0, abs=1e-12)
    assert measure(jump_set(u, 1e-9)) == pytest.approx(1.0)
    assert u.corner_values.min() >= -1e-12 and u.corner_values.max() <= 1 + 1e-12


@pytest.mark.parametrize("seed", range(12))
def test_solve_matches_kkt_oracle(seed):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.25, 0.75, R4.n_edges)
    T = subdivide(R4, 0.25, t)
    g = BoundaryData(R4, rng.normal(size=R4.n_points))
    B = random_broken(T, rng)
    u = solve_displacement(T, B, g)
    e_ref, x, C, c = kkt_oracle(T, B, g)
    assert bulk_energy(u) == pytest.approx(e_ref, rel=1e-9, abs=1e-10)
    # admissible: constraints hold for the returned field
    assert np.abs(C @ u.corner_values.ravel() - c).max() < 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_bounded_solve_matches_constrained_oracle(seed):
    R = build_regular(PolygonalDomain.unit_square(), MeshParams(1 / 2))
    rng = np.random.default_rng(100 + seed)
    T = subdivide(R, 0.25, rng.uniform(0.25, 0.75, R.n_edges))
    g = BoundaryData(R, rng.uniform(-1, 1, R.n_points))
    B = random_broken(T, rng, 0.3, 0.5)
    M = g.sup
    u = solve_displacement(T, B, g, bound=M)
    assert u.sup <= M + 1e-12
    e_ref, _, _, _ = kkt_oracle(T, B, g, bound=M)
    # the exact active-set solution is never worse than the interior-point estimate
    assert bulk_energy(u) == pytest.approx(e_ref, abs=1e-8)


@given(st.integers(0, 10_000))
def test_broken_edges_never_raise_energy(seed):
    """Enlarging the broken set enlarges the admissible set."""
    rng = np.random.default_rng(seed)
    T = subdivide(R4, 0.25)
    g = BoundaryData(R4, rng.normal(size=R4.n_points))
    B1 = random_broken(T, rng, 0.1, 0.2)
    extra = random_broken(T, rng, 0.1, 0.2)
    B2 = BrokenEdgeSet(B1.interior + extra.interior, B1.released + extra.released)
    e1 = bulk_energy(solve_displacement(T, B1, g))
    e2 = bulk_energy(solve_displacement(T, B2, g))
    assert e2 <= e1 + 1e-10


@given(st.integers(0, 10_000))
def test_bounded_solve_respects_maximum_principle(seed):
    rng = np.random.default_rng(seed)
    T = subdivide(R4, 0.25, rng.uniform(0.25, 0.75, R4.n_edges))
    g = BoundaryData(R4, rng.normal(size=R4.n_points))
    B = random_broken(T, rng)
    ub = solve_displacement(T, B, g, bound=g.sup)
    uf = solve_displacement(T, B, g)
    assert ub.sup <= g.sup + 1e-12
    assert bulk_energy(uf) <= bulk_energy(ub) + 1e-10


def test_jump_and_violation_sets():
    T = subdivide(R4, 0.25)
    g = BoundaryData.from_function(R4, lambda x, y: 2 * y)
    released = tuple(R4.dirichlet_edges[:4])
    u = solve_displacement(T, BrokenEdgeSet((), released), g)
    # nothing is broken inside, so no jump set
    assert len(jump_set(u, 1e-9)) == 0
    v = boundary_violation_set(u, g, 1e-9)
    ids = violated_edges(u, g, 1e-9)
    assert set(ids) <= set(released)
    assert measure(v) == pytest.approx(R4.edge_lengths[ids].sum())
    # u = g satisfies the data everywhere
    ug = DiscreteDisplacement(T, g.corner_values(T))
    assert len(boundary_violation_set(ug, g, 1e-9)) == 0


def test_truncate():
    T = subdivide(R4, 0.25)
    g = BoundaryData.from_function(R4, lambda x, y: 3 * x - 1)
    u = DiscreteDisplacement(T, g.corner_values(T))
    v = truncate(u, 1.0)
    assert v.sup <= 1.0
    assert truncate(u, 10.0) is u
    with pytest.raises(ValueError):
        truncate(u, -1.0)


def test_truncation_does_not_raise_energy_on_right_triangles():
    rng = np.random.default_rng(7)
    T = subdivide(R4, 0.25)
    for _ in range(20):
        c = rng.normal(size=(T.n_sub, 3)) * 2
        u = DiscreteDisplacement(T, c)
        assert bulk_energy(truncate(u, 1.0)) <= bulk_energy(u) + 1e-12


def test_broken_set_normalizes_and_validates():
    T = subdivide(R4, 0.25)
    B = BrokenEdgeSet((5, 3, 5), ())
    assert B.interior == (3, 5)
    dir_sub = int(np.flatnonzero(T.topo.kind == SUB_DIRICHLET)[0])
    with pytest.raises(ValueError):
        BrokenEdgeSet((dir_sub,), ()).validate(T)


def test_displacement_roundtrip():
    rng = np.random.default_rng(1)
    T = subdivide(R4, 0.25, rng.uniform(0.25, 0.75, R4.n_edges))
    g = BoundaryData(R4, rng.normal(size=R4.n_points))
    B = random_broken(T, rng)
    u = solve_displacement(T, B, g)
    v = displacement_from_dict(R4, displacement_to_dict(u))
    np.testing.assert_array_equal(v.corner_values, u.corner_values)
    assert v.broken == u.broken
    assert bulk_energy(v) == bulk_energy(u)
