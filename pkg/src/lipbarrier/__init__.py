"""Numerical toolkit for Lipschitz bounds of convex energies with
nonstandard growth: growth-hypothesis checks, two-level regularization,
exterior-ball geometry, explicit radial barriers, and a P1 energy
minimizer with verification sweeps."""

from .growth import (
    GrowthFunction,
    RegularizedGrowth,
    catalogue,
    check_A1,
    check_A2,
    check_A2_relaxed,
    growth_from_spec,
    inverse_dF,
    make_growth,
    make_regularized,
)
from .geometry import BoundaryData, ExteriorBallDomain, boundary_data_from_spec, domain_from_spec
from .barrier import (
    BarrierConstants,
    PrototypeBarrier,
    TrueBarrier,
    build_barrier_pair,
    choose_delta_ring,
    compute_constants,
    normal_derivative_bound,
    verify_prototype_pde,
    verify_supersolution_L,
)
from .meshing import Mesh, triangulate
from .solver import (
    DiscreteSolution,
    lambda_fixed_point,
    minimize_energy,
    mu_sweep,
    radial_oracle,
    verify_gradient_principle,
    verify_max_principle,
    verify_sandwich,
)

__version__ = "0.1.0"
