"""Checkpoint loading and single-frame depth prediction."""

from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, load_frame
from .errors import ValidationError
from .networks import DepthNetConfig, depth_net_apply, disparity_to_depth, load_checkpoint


def load_trained(checkpoint_path, width: int, height: int):
    """Load a training checkpoint; returns (depth_params, meta, DepthNetConfig)."""
    path = Path(checkpoint_path)
    if not path.is_file():
        raise ValidationError(f"checkpoint not found: {path}")
    arrays, meta = load_checkpoint(path)
    depth_params = {k[len("depth."):]: v for k, v in arrays.items()
                    if k.startswith("depth.")}
    config = DepthNetConfig(enc_widths=tuple(meta["enc_widths"]), in_channels=4,
                            num_scales=int(meta["num_scales"]),
                            width=width, height=height)
    return depth_params, meta, config


def predict_depth(depth_params, config: DepthNetConfig, frame, d_min, d_max) -> np.ndarray:
    """Full-resolution depth map (H,W) for one (4,H,W) frame."""
    pyramid = depth_net_apply(depth_params, np.asarray(frame)[None], config)
    disp0 = pyramid[0][0, 0]
    return disparity_to_depth(disp0, d_min, d_max)


def predict_dataset_depths(checkpoint_path, dataset_dir, manifest: DatasetManifest,
                           indices, geotag_enabled=None):
    """Depth maps for the given dataset frame indices.

    ``geotag_enabled=None`` follows the flag recorded in the checkpoint, so
    inference matches the conditioning the model was trained with.
    """
    depth_params, meta, config = load_trained(checkpoint_path, manifest.width,
                                              manifest.height)
    if geotag_enabled is None:
        geotag_enabled = bool(meta["geotag_enabled"])
    out = []
    for idx in indices:
        frame = load_frame(dataset_dir, manifest, idx, geotag_enabled)
        out.append(predict_depth(depth_params, config, frame,
                                 meta["d_min"], meta["d_max"]))
    return out, meta
