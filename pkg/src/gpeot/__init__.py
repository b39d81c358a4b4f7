"""Joint 3D extended-object tracking and shape learning from point clouds.

Two trackers share one extended Kalman filter over a joint kinematic +
extent state: ``gpeot`` models the full radial extent on a sphere grid,
``gpeot_p`` models the contours of three body-fixed plane projections.
"""

from .config import RunConfig, default_gp_hyper, default_process
from .ekf import FilterConfig, TrackerState
from .gp import GpHyperparams, build_extent_model, make_circle_grid, make_sphere_grid
from .measurement import MeasurementFrame, ProjectionSetup
from .motion import ProcessNoiseConfig
from .sim import ScenarioConfig, ShapeSpec, TrajectorySpec, generate_truth
from .tracker import Tracker

__all__ = [
    "FilterConfig",
    "GpHyperparams",
    "MeasurementFrame",
    "ProcessNoiseConfig",
    "ProjectionSetup",
    "RunConfig",
    "ScenarioConfig",
    "ShapeSpec",
    "Tracker",
    "TrackerState",
    "TrajectorySpec",
    "build_extent_model",
    "default_gp_hyper",
    "default_process",
    "generate_truth",
    "make_circle_grid",
    "make_sphere_grid",
]

__version__ = "0.1.0"
