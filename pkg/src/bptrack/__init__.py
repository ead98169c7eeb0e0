"""Belief-propagation multi-target tracking with inter-BS target handover."""

from .fusion import (
    ARCH_CENTRALIZED,
    ARCH_DISTRIBUTED,
    ARCH_HANDOVER_MEAS,
    ARCH_HANDOVER_NO_MEAS,
    ARCHITECTURES,
    CommStats,
    RunResult,
    run_architecture,
    run_centralized,
    run_distributed,
    run_handover,
)
from .metrics import CurveSet, GospaParams, GospaResult, filter_by_fov, gospa, mc_aggregate
from .model import Measurement, MotionModel, Sensor
from .scenario import (
    GroundTruth,
    ScanSet,
    ScenarioConfig,
    ScenarioError,
    TrajectorySpec,
    generate_measurements,
    generate_truth,
    load_scenario,
)
from .tracker import (
    MarginalAssoc,
    ParticleBelief,
    PotentialTarget,
    TrackEstimate,
    Tracker,
    TrackerParams,
)

__all__ = [
    "ARCH_CENTRALIZED", "ARCH_DISTRIBUTED", "ARCH_HANDOVER_MEAS",
    "ARCH_HANDOVER_NO_MEAS", "ARCHITECTURES", "CommStats", "CurveSet",
    "GospaParams", "GospaResult", "GroundTruth", "MarginalAssoc",
    "Measurement", "MotionModel", "ParticleBelief", "PotentialTarget",
    "RunResult", "ScanSet", "ScenarioConfig", "ScenarioError", "Sensor",
    "TrackEstimate", "Tracker", "TrackerParams", "TrajectorySpec",
    "filter_by_fov", "generate_measurements", "generate_truth", "gospa",
    "load_scenario", "mc_aggregate", "run_architecture", "run_centralized",
    "run_distributed", "run_handover",
]

__version__ = "0.1.0"
