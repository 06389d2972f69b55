"""Dynamic transportation metrics on the periodic lattice torus.

The package computes the distance obtained by minimising a kinetic action
with logarithmic-mean edge mobilities over solutions of the lattice
continuity equation, together with its harmonic-mean and regularity-
constrained variants, the exact linear-programming Wasserstein distance on
the lattice, heat semigroups on both the lattice and the continuous torus,
the projection/lifting maps between them, and an experiment harness that
checks the quantitative inequalities tying all of these together.
"""

from ._accel import NUMBA_ENABLED
from .continuum import ContinuumDensity, ContinuumField, circle_geodesic, circle_w2, heat_continuous
from .exact import TransportPlan, tn_pushforward, w2n_exact
from .fields import (
    Density,
    MomentumField,
    TransportPath,
    action,
    continuity_residual,
    dirichlet_form,
    lift_density,
    lift_momentum,
    lipschitz_constant,
    project_density,
    project_momentum,
    regularity,
)
from .grid import Facet, GridShape, facet_neighbors, graph_metric, torus_metric
from .heat import (
    heat_apply,
    heat_apply_momentum,
    heat_kernel,
    kappa_constant,
    laplacian,
    laplacian_solve,
    poincare_constant,
)
from .means import MeanKind, mean, mean_gap_bound_holds, mean_partials
from .oracle import oracle_distance
from .regpaths import (
    GluingSchedule,
    build_regularized_path,
    choose_constants,
    smoothed_projection_path,
    step1_linear_path,
    step2_heat_path,
)
from .solver import MetricReport, SolverOptions, path_action, solve_distance

__all__ = [
    "NUMBA_ENABLED",
    "ContinuumDensity",
    "ContinuumField",
    "Density",
    "Facet",
    "GluingSchedule",
    "GridShape",
    "MeanKind",
    "MetricReport",
    "MomentumField",
    "SolverOptions",
    "TransportPath",
    "TransportPlan",
    "action",
    "build_regularized_path",
    "choose_constants",
    "circle_geodesic",
    "circle_w2",
    "continuity_residual",
    "dirichlet_form",
    "facet_neighbors",
    "graph_metric",
    "heat_apply",
    "heat_apply_momentum",
    "heat_continuous",
    "heat_kernel",
    "kappa_constant",
    "laplacian",
    "laplacian_solve",
    "lift_density",
    "lift_momentum",
    "lipschitz_constant",
    "mean",
    "mean_gap_bound_holds",
    "mean_partials",
    "oracle_distance",
    "path_action",
    "poincare_constant",
    "project_density",
    "project_momentum",
    "regularity",
    "smoothed_projection_path",
    "solve_distance",
    "step1_linear_path",
    "step2_heat_path",
    "tn_pushforward",
    "torus_metric",
    "w2n_exact",
]

__version__ = "0.1.0"
