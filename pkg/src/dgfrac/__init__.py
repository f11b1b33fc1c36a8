"""Discontinuous piecewise-affine finite elements for quasi-static brittle fracture.

Anti-plane displacements are discontinuous P1 fields on adaptive
triangulations; cracks grow by incremental minimization of bulk energy plus
new crack length, with irreversibility enforced through the accumulated set.
"""
from ._jit import USING_NUMBA
from .evolution import (
    BalanceViolation,
    CrackSet,
    History,
    Schedule,
    check_energy_balance,
    compute_o_delta,
    convergence_study,
    evolve,
)
from .femspace import (
    BoundaryData,
    BrokenEdgeSet,
    DiscreteDisplacement,
    EnergyBreakdown,
    boundary_violation_set,
    bulk_energy,
    jump_set,
    solve_displacement,
    truncate,
)
from .geometry import Point2, Segment, SegmentSet, hausdorff_distance, measure, residual_measure
from .mesh import (
    AdaptiveTriangulation,
    MeshParams,
    PolygonalDomain,
    RegularTriangulation,
    build_regular,
    check_regularity,
    edge_curve_cover,
    interpolate_affine,
    shell,
    subdivide,
    transfer_jump,
)
from .minimizer import (
    MinimizeOptions,
    MinimizeResult,
    NonConvergence,
    brute_force_oracle,
    incremental_minimize,
    verify_unilateral_minimality,
)

__version__ = "0.1.0"
