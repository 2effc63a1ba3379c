"""Planar simulation and control of rigidly connected surface vessels."""

from .follower import (FollowerState, LocalMeasurement, follower_rate_local, follower_rate_oracle,
                       step_follower, step_follower_oracle, step_followers)
from .integrators import IntegrationError, gauss_legendre_step, rkf45_integrate, rkf45_step
from .nmpc import HorizonSolution, NmpcLeader, NmpcWeights, solve_horizon
from .structure import StructureConfig, StructureParams, total_wrench, validate_centrosymmetry
from .vessel import (DEFAULT_PARAMS, BodyVelocity, Pose, ThrusterCommand, VesselParams, Wrench,
                     allocate_wrench, vessel_acceleration, wrench_to_thrusters)

__all__ = [
    "BodyVelocity", "DEFAULT_PARAMS", "FollowerState", "HorizonSolution", "IntegrationError",
    "LocalMeasurement", "NmpcLeader", "NmpcWeights", "Pose", "StructureConfig", "StructureParams",
    "ThrusterCommand", "VesselParams", "Wrench", "allocate_wrench", "follower_rate_local",
    "follower_rate_oracle", "gauss_legendre_step", "rkf45_integrate", "rkf45_step", "solve_horizon",
    "step_follower", "step_follower_oracle", "step_followers", "total_wrench",
    "validate_centrosymmetry", "vessel_acceleration", "wrench_to_thrusters",
]

__version__ = "0.1.0"
