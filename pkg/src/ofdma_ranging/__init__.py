"""OFDMA initial ranging: subspace code detection, CFO/timing/power estimation and collision detection."""

from .channel import CollisionMode, ObservationSet, UserGroundTruth, draw_users, synthesize
from .errors import (
    ConfigError,
    DegenerateTimingSum,
    NearCollinearCodes,
    NoNoiseSubspace,
    RangingError,
    SingularGram,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .receiver import RangingReport, process_subchannel
from .scenario import CodeFamily, Codebook, ScenarioConfig, build_codebook, load_config

__all__ = [
    "CodeFamily",
    "Codebook",
    "CollisionMode",
    "ConfigError",
    "DegenerateTimingSum",
    "KERNEL_BACKEND",
    "NearCollinearCodes",
    "NoNoiseSubspace",
    "ObservationSet",
    "RangingError",
    "RangingReport",
    "ScenarioConfig",
    "SingularGram",
    "UserGroundTruth",
    "build_codebook",
    "draw_users",
    "load_config",
    "process_subchannel",
    "synthesize",
]
