from .generate import ScenarioConfig, ScenarioError, ScenarioRecord, generate_scenario, MAP_FAMILIES
from .features import (
    SceneLayout,
    TrajectoryTensor,
    SceneCondition,
    HorizonError,
    build_training_sample,
    initial_neighbor_states,
    D_NEIGHBOR,
    D_LANE,
    D_STATIC,
    D_ROUTE,
)
from .normalize import (
    NormStats,
    AugmentConfig,
    compute_norm_stats,
    normalize,
    denormalize,
    denormalize_array,
    augment,
)
from .dataset import DatasetFormatError, iter_dataset, read_dataset, write_dataset

__all__ = [
    "ScenarioConfig", "ScenarioError", "ScenarioRecord", "generate_scenario", "MAP_FAMILIES",
    "SceneLayout", "TrajectoryTensor", "SceneCondition", "HorizonError",
    "build_training_sample", "initial_neighbor_states",
    "D_NEIGHBOR", "D_LANE", "D_STATIC", "D_ROUTE",
    "NormStats", "AugmentConfig", "compute_norm_stats", "normalize",
    "denormalize", "denormalize_array", "augment",
    "DatasetFormatError", "iter_dataset", "read_dataset", "write_dataset",
]
