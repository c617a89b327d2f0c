"""Rigid point-cloud registration by adversarial (WGAN-GP) training, with an ICP baseline."""

from .geometry import RigidTransform, angular_distance, exp_map
from .icp import IcpConfig, icp_register
from .pointcloud import PointCloud, load_bundled_cloud, load_point_cloud
from .registration import RegistrationResult, TrainConfig, register

__version__ = "0.1.0"

__all__ = [
    "IcpConfig",
    "PointCloud",
    "RegistrationResult",
    "RigidTransform",
    "TrainConfig",
    "angular_distance",
    "exp_map",
    "icp_register",
    "load_bundled_cloud",
    "load_point_cloud",
    "register",
]
