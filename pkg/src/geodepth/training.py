"""Training loop: Adam over the joint depth+pose parameter set.

All randomness flows from one seed: parameter init, and the per-epoch
triplet shuffle (seeded by (seed, epoch)), so a run is reproducible and a
resumed run replays the exact trajectory of an uninterrupted one.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .dataset import build_triplets, load_frame, load_manifest
from .errors import TrainingDiverged, ValidationError
from .geometry import CameraIntrinsics
from .networks import (DepthNetConfig, PoseNetConfig, init_depth_params,
                       init_pose_params, load_checkpoint, save_checkpoint)
from .objective import LossWeights, compute_total_loss

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LOG_HEADER = ["step", "total", "photometric", "smoothness", "mask_fraction"]


@dataclass
class TrainingState:
    step: int
    params: dict                    # "depth.*" and "pose.*" prefixed arrays
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        for name, p in self.params.items():
            self.adam_m.setdefault(name, np.zeros_like(p))
            self.adam_v.setdefault(name, np.zeros_like(p))
            if self.adam_m[name].shape != p.shape or self.adam_v[name].shape != p.shape:
                raise ValidationError(f"optimizer state shape mismatch for {name}")


def init_training_state(depth_config: DepthNetConfig, pose_config: PoseNetConfig,
                        seed: int) -> TrainingState:
    params = {}
    for k, v in init_depth_params(depth_config, seed).items():
        params[f"depth.{k}"] = v
    for k, v in init_pose_params(pose_config, seed).items():
        params[f"pose.{k}"] = v
    return TrainingState(step=0, params=params, seed=seed)


def training_step(state: TrainingState, batch, K: CameraIntrinsics,
                  weights: LossWeights, depth_config: DepthNetConfig,
                  pose_config: PoseNetConfig, lr: float = 1e-4,
                  d_min: float = 0.1, d_max: float = 100.0):
    """One Adam update on a batch of triplets; returns (new_state, report).

    ``batch``: (prev, target, next) arrays of shape (N,4,H,W).
    Deterministic given (state, batch); aborts on a non-finite loss.
    """
    tensors = {k: ad.Tensor(v, requires_grad=True) for k, v in state.params.items()}
    depth_p = {k[len("depth."):]: t for k, t in tensors.items() if k.startswith("depth.")}
    pose_p = {k[len("pose."):]: t for k, t in tensors.items() if k.startswith("pose.")}

    loss, report, _ = compute_total_loss(batch, depth_p, pose_p, K, weights,
                                         depth_config, pose_config, d_min, d_max)
    if not np.isfinite(report.total):
        raise TrainingDiverged(f"non-finite loss at step {state.step}", report)
    loss.backward()

    t = state.step + 1
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, tensor in tensors.items():
        g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        m = ADAM_BETA1 * state.adam_m[name] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.adam_v[name] + (1.0 - ADAM_BETA2) * g * g
        new_params[name] = state.params[name] - lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        new_m[name] = m
        new_v[name] = v
    new_state = TrainingState(step=t, params=new_params, adam_m=new_m,
                              adam_v=new_v, seed=state.seed)
    return new_state, report


class FrameCache:
    """Decoded frames held in memory; datasets here are desk-scale."""

    def __init__(self, dataset_dir, manifest, geotag_enabled):
        self._frames = [load_frame(dataset_dir, manifest, i, geotag_enabled)
                        for i in range(len(manifest.frames))]

    def batch(self, manifest, triplet_ids):
        prev, tgt, nxt = [], [], []
        for ti in triplet_ids:
            trip = manifest.triplets[ti]
            prev.append(self._frames[trip.source_indices[0]])
            tgt.append(self._frames[trip.target_index])
            nxt.append(self._frames[trip.source_indices[1]])
        return np.stack(prev), np.stack(tgt), np.stack(nxt)


def _epoch_order(seed, epoch, n):
    return np.random.default_rng([seed, 3, epoch]).permutation(n)


def train(dataset_dir, out_dir, cfg: dict, resume_from=None):
    """Train on a preprocessed dataset; writes checkpoint.npz and
    loss_log.csv under ``out_dir``.  Returns the final TrainingState."""
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = load_manifest(dataset_dir)
    if not manifest.triplets:
        manifest.triplets = build_triplets(manifest, cfg["triplet_max_gap"])
    if not manifest.triplets:
        raise ValidationError("dataset has no training triplets")

    depth_config = DepthNetConfig(
        enc_widths=cfg["enc_widths"], in_channels=4,
        num_scales=cfg["num_scales"], width=manifest.width, height=manifest.height)
    pose_config = PoseNetConfig(conv_widths=cfg["pose_widths"], in_channels=8,
                                out_scale=cfg["pose_scale"])
    weights = LossWeights(ssim_alpha=cfg["ssim_alpha"],
                          smoothness_lambda=cfg["smoothness_lambda"],
                          scales=cfg["num_scales"])
    K = manifest.intrinsics
    seed = int(cfg["seed"])
    geotag_enabled = bool(cfg["geotag_enabled"])
    steps = int(cfg["steps"])
    lr = float(cfg["lr"])
    checkpoint_every = int(cfg["checkpoint_every"])

    if resume_from is not None:
        params, meta = load_checkpoint(resume_from)
        state = TrainingState(step=int(meta["step"]),
                              params={k: params[k] for k in params if not k.startswith("adam_")},
                              adam_m={k[len("adam_m."):]: params[k] for k in params
                                      if k.startswith("adam_m.")},
                              adam_v={k[len("adam_v."):]: params[k] for k in params
                                      if k.startswith("adam_v.")},
                              seed=int(meta["seed"]))
    else:
        state = init_training_state(depth_config, pose_config, seed)

    cache = FrameCache(dataset_dir, manifest, geotag_enabled)
    n_triplets = len(manifest.triplets)
    batch_size = min(int(cfg["batch_size"]), n_triplets)
    steps_per_epoch = max(1, n_triplets // batch_size)

    log_rows = []
    while state.step < steps:
        epoch, pos = divmod(state.step, steps_per_epoch)
        order = _epoch_order(seed, epoch, n_triplets)
        ids = order[pos * batch_size:(pos + 1) * batch_size]
        batch = cache.batch(manifest, ids)
        state, report = training_step(state, batch, K, weights, depth_config,
                                      pose_config, lr=lr,
                                      d_min=cfg["d_min"], d_max=cfg["d_max"])
        log_rows.append([state.step, report.total, report.photometric,
                         report.smoothness, report.mask_fraction])
        if checkpoint_every and state.step % checkpoint_every == 0 and state.step < steps:
            _save_state(out_dir / f"ckpt_{state.step:06d}.npz", state, cfg, geotag_enabled)

    _save_state(out_dir / "checkpoint.npz", state, cfg, geotag_enabled)
    log_path = out_dir / "loss_log.csv"
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_HEADER)
        for row in log_rows:
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    return state


def _save_state(path, state: TrainingState, cfg: dict, geotag_enabled: bool):
    arrays = dict(state.params)
    for k, v in state.adam_m.items():
        arrays[f"adam_m.{k}"] = v
    for k, v in state.adam_v.items():
        arrays[f"adam_v.{k}"] = v
    meta = {
        "step": state.step,
        "seed": state.seed,
        "geotag_enabled": bool(geotag_enabled),
        "enc_widths": list(cfg["enc_widths"]),
        "pose_widths": list(cfg["pose_widths"]),
        "num_scales": cfg["num_scales"],
        "pose_scale": cfg["pose_scale"],
        "d_min": cfg["d_min"],
        "d_max": cfg["d_max"],
    }
    save_checkpoint(path, arrays, meta)
