"""Modular meta-learning with abstract graph networks."""

from .geometry import GridSpec, Triangulation, delaunay, grid_topology, nearest_node
from .graph import (
    GraphTopology,
    Material,
    ModuleLibrary,
    Structure,
    agn_backward,
    agn_forward,
    create_library,
    gen_topology,
    wheel_topology,
)
from .nn import MLPParams, MLPSpec, init_params, mlp_backward, mlp_forward
from .search import AnnealingSchedule, BounceGradConfig, adapt, bouncegrad, evaluate
from .taskbench import (
    NormalizationStats,
    SyntheticSpec,
    TaskDataset,
    fit_normalization,
    generate_synthetic_metaset,
    load_metaset,
    mse_to_distance,
    normalized_mse,
    save_metaset,
)

__version__ = "0.1.0"
