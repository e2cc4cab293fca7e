"""Self-supervised monocular depth estimation from geotagged image sequences.

Pipeline: sample frames from a video + GPS log, encode each frame's
(lat, lon) fix into the image alpha channel, train depth + pose networks
with a photometric view-synthesis objective over (t-1, t, t+1) triplets,
and evaluate against synthetic scenes with analytic ground truth.
"""

__version__ = "0.1.0"

from .geometry import (CameraIntrinsics, PixelCoord, Point3, Pose,
                       axis_angle_to_rotation, backproject, bilinear_sample,
                       inverse_warp, pose_compose, pose_inverse, project,
                       reproject_pixel, transform_point)
from .geotag import (GeoBounds, LocationFix, compute_bounds,
                     decode_location_alpha, encode_location_alpha,
                     match_frames_to_fixes, parse_location_log)
from .metrics import MetricsReport, depth_metrics
from .networks import (DepthNetConfig, PoseNetConfig, depth_net_forward,
                       disparity_to_depth, pose_net_forward)
from .objective import LossReport, LossWeights, compute_total_loss
from .training import TrainingState, training_step

__all__ = [
    "CameraIntrinsics", "PixelCoord", "Point3", "Pose",
    "axis_angle_to_rotation", "backproject", "bilinear_sample",
    "inverse_warp", "pose_compose", "pose_inverse", "project",
    "reproject_pixel", "transform_point",
    "GeoBounds", "LocationFix", "compute_bounds", "decode_location_alpha",
    "encode_location_alpha", "match_frames_to_fixes", "parse_location_log",
    "MetricsReport", "depth_metrics",
    "DepthNetConfig", "PoseNetConfig", "depth_net_forward",
    "disparity_to_depth", "pose_net_forward",
    "LossReport", "LossWeights", "compute_total_loss",
    "TrainingState", "training_step",
]
