"""Calibration and evaluation toolkit for visual-inertial benchmark data.

Modules
-------
core         rotations, rigid motions, trajectories, angular rates
ingest       CSV streams and the INI calibration file
allan        Allan deviation and IMU noise parameters
timesync     MoCap to IMU clock offset
imucal       IMU scale / misalignment / bias intrinsics
handeye      marker-to-IMU and world-to-grid transforms
photometric  vignette, irradiance correction, exposure control
trajeval     ATE, RPE and divergence against ground truth
synth        synthetic sensor rig
cli          command-line entry point
"""

from .core import RigidMotion, Trajectory, compose, interpolate, inverse
from .errors import DataError, NumericalError, VicalibError
from .imu import ImuData, ImuSample
from .imucal import ImuIntrinsics

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "ImuData",
    "ImuIntrinsics",
    "ImuSample",
    "NumericalError",
    "RigidMotion",
    "Trajectory",
    "VicalibError",
    "compose",
    "interpolate",
    "inverse",
]
