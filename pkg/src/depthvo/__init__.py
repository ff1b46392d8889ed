"""Depth-assisted monocular visual odometry toolkit.

A feature-based VO loop that uses learned-style depth predictions to filter
map points with inconsistent depth (a near-far rank test), recover metric
scale per keyframe, and fuse consistency-checked dense depth into a point
cloud. Ships with a deterministic analytic simulator, depth supervision
losses with analytic gradients, and trajectory/depth evaluation metrics.
"""

__version__ = "0.1.0"

from .depthmap import DepthMap, SparseDepthMap
from .geometry import CameraIntrinsics, PoseSE3, Sim3, Trajectory
from .metrics import ate_rmse, depth_metrics, filter_score
from .scale import recover_scale, rescale_depth, upper_median

__all__ = [
    "CameraIntrinsics",
    "DepthMap",
    "PoseSE3",
    "Sim3",
    "SparseDepthMap",
    "Trajectory",
    "ate_rmse",
    "depth_metrics",
    "filter_score",
    "recover_scale",
    "rescale_depth",
    "upper_median",
    "__version__",
]
