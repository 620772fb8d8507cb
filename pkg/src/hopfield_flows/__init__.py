"""Hopfield network dynamics as natural gradient, mirror descent and
Wasserstein gradient flows on the open unit cube."""

from .activation import (
    Activation,
    CallableActivation,
    Logistic,
    SoftProjection,
    Tabulated,
    identity_activation,
    make_activation,
    metric_at,
)
from .diffusion import (
    DiffusionParams,
    WeightedCloud,
    em_step,
    fpk_grid_solve,
    free_energy,
    gibbs_density,
    gibbs_partition,
    sde_drift_diffusion,
)
from .dispatch import DispatchProblem, dual_hopfield_solve, generate_problem, monte_carlo
from .errors import ConfigError, DomainError, HopfieldFlowsError, NumericError
from .flows import (
    finite_prox_step,
    hnn_ode_integrate,
    mirror_descent,
    natural_gradient_descent,
    natural_gradient_step,
)
from .geometry import christoffel, fast_distance, geodesic_distance, geodesic_solve
from .mirror import BitEntropyPair, EuclideanPair, bregman, mirror_step
from .objectives import Himmelblau, Quadratic, himmelblau, himmelblau_minima, make_objective
from .wasserstein import ProxParams, cost_matrix, diffuse_run, jko_step

__version__ = "0.1.0"
