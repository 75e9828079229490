"""Random forest regression laboratory.

Tree builders (uniform, quantile, CART), forest aggregation, connection
functions with exact values for uniform trees, and a Monte Carlo harness
that checks finite-forest convergence, risk decomposition and
consistency diagnostics.
"""

from ._backend import BACKEND
from .connection import (
    ConnectionEstimate,
    connection_mc,
    coupling_inequality_check,
    grid_step_estimate,
    grid_step_bound,
    uniform_connection_1d,
    uniform_connection_origin_multid,
)
from .errors import ConfigError, InstanceTooLarge, InvariantFailure, PreconditionError
from .forest import (
    Forest,
    forest_predict,
    forest_weights,
    grow_forest,
    infinite_reference,
    sigma_tilde_sq,
    theta_variance,
)
from .model import RegressionModel, TrainingSet, evaluate_m, max_noise_square_bound, sample_dataset
from .trees import (
    BreimanConfig,
    QuantileConfig,
    Tree,
    UniformConfig,
    build_breiman_tree,
    build_quantile_tree,
    build_uniform_tree,
    cell_diameter,
    cell_of,
    empirical_quantile,
    tree_predict,
    tree_weights,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "InstanceTooLarge",
    "InvariantFailure",
    "PreconditionError",
    "RegressionModel",
    "TrainingSet",
    "evaluate_m",
    "sample_dataset",
    "max_noise_square_bound",
    "UniformConfig",
    "QuantileConfig",
    "BreimanConfig",
    "Tree",
    "build_uniform_tree",
    "build_quantile_tree",
    "build_breiman_tree",
    "empirical_quantile",
    "tree_predict",
    "tree_weights",
    "cell_of",
    "cell_diameter",
    "Forest",
    "grow_forest",
    "forest_predict",
    "forest_weights",
    "theta_variance",
    "sigma_tilde_sq",
    "infinite_reference",
    "ConnectionEstimate",
    "connection_mc",
    "uniform_connection_1d",
    "uniform_connection_origin_multid",
    "coupling_inequality_check",
    "grid_step_estimate",
    "grid_step_bound",
]
