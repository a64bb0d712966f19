"""Outlier-robust Wasserstein distances for discrete measures."""

from .duality import (
    AscentConfig,
    DualCertificate,
    c_transform,
    dual_ascent,
    dual_from_flow,
    dual_objective,
    trimmed_dual_value,
)
from .errors import (
    FileFormatError,
    InternalError,
    InvalidParameterError,
    NumericError,
    RobustOTError,
)
from .measures import (
    DiscreteMeasure,
    GroundMetric,
    cost_matrix,
    distance_matrix,
    empirical,
    huber_mix,
    load_measure,
    point_cloud_from_file,
    rng_from_seed,
    save_measure,
    tv_distance,
)
from .privacy import (
    PufferfishFramework,
    PufferfishPair,
    build_income_framework,
    coupling_witness,
    mechanism_calibrate,
    mechanism_release,
)
from .radius import consistency_schedule, default_grid, elbow_detect
from .solvers import (
    RobustPlan,
    load_plan,
    one_sided_robust_wp,
    robust_winf,
    robust_wp,
    robust_wp_mass_addition,
    save_plan,
    tv_robust_wp,
    uniform_partial_value,
    vertex_round,
    wasserstein,
)

__version__ = "0.1.0"

__all__ = [
    "AscentConfig",
    "DiscreteMeasure",
    "DualCertificate",
    "FileFormatError",
    "GroundMetric",
    "InternalError",
    "InvalidParameterError",
    "NumericError",
    "PufferfishFramework",
    "PufferfishPair",
    "RobustOTError",
    "RobustPlan",
    "build_income_framework",
    "c_transform",
    "consistency_schedule",
    "cost_matrix",
    "coupling_witness",
    "default_grid",
    "distance_matrix",
    "dual_ascent",
    "dual_from_flow",
    "dual_objective",
    "elbow_detect",
    "empirical",
    "huber_mix",
    "load_measure",
    "load_plan",
    "mechanism_calibrate",
    "mechanism_release",
    "one_sided_robust_wp",
    "point_cloud_from_file",
    "rng_from_seed",
    "robust_winf",
    "robust_wp",
    "robust_wp_mass_addition",
    "save_measure",
    "save_plan",
    "trimmed_dual_value",
    "tv_distance",
    "tv_robust_wp",
    "uniform_partial_value",
    "vertex_round",
    "wasserstein",
]
