"""Toy-scale depth encoder-decoder with skips and a 6-DoF pose regressor.

Both networks consume 4-channel RGBA frames (the alpha plane carries the
location encoding).  The depth decoder emits a pyramid of sigmoid disparity
maps; the pose head is zero-initialized and scaled by a small factor so
training starts from the identity-motion hypothesis.

Parameters live in flat ``{name: float64 ndarray}`` dicts.  Forward
functions accept either plain arrays (inference) or autodiff Tensors
(training) as parameter values.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ValidationError
from .geometry import Pose


@dataclass(frozen=True)
class DepthNetConfig:
    enc_widths: tuple = (16, 32, 64, 128)
    in_channels: int = 4
    num_scales: int = 4
    width: int = 64
    height: int = 48

    def __post_init__(self):
        if len(self.enc_widths) < 2:
            raise ValidationError("need at least 2 encoder stages")
        if any(w <= 0 for w in self.enc_widths):
            raise ValidationError("encoder widths must be positive")
        if not (1 <= self.num_scales <= len(self.enc_widths)):
            raise ValidationError("num_scales must be in [1, number of encoder stages]")
        div = 2 ** len(self.enc_widths)
        if self.width % div or self.height % div:
            raise ValidationError(
                f"image size {self.width}x{self.height} must be divisible by {div}")


@dataclass(frozen=True)
class PoseNetConfig:
    conv_widths: tuple = (16, 32, 64)
    in_channels: int = 8
    out_scale: float = 0.01

    def __post_init__(self):
        if len(self.conv_widths) < 1 or any(w <= 0 for w in self.conv_widths):
            raise ValidationError("pose conv widths must be positive and non-empty")


def _conv_init(rng, co, ci, kh, kw):
    bound = 1.0 / np.sqrt(ci * kh * kw)
    return rng.uniform(-bound, bound, size=(co, ci, kh, kw))


def init_depth_params(config: DepthNetConfig, seed: int) -> dict:
    """Deterministic fan-in-scaled uniform init; biases start at zero."""
    rng = np.random.default_rng([int(seed), 11])
    params = {}
    ci = config.in_channels
    for i, w in enumerate(config.enc_widths):
        params[f"enc{i}.w"] = _conv_init(rng, w, ci, 3, 3)
        params[f"enc{i}.b"] = np.zeros(w)
        ci = w
    widths = list(config.enc_widths)
    ci = widths[-1]
    for i in reversed(range(len(widths))):
        co = widths[i - 1] if i >= 1 else widths[0]
        params[f"dec{i}.up.w"] = _conv_init(rng, co, ci, 3, 3)
        params[f"dec{i}.up.b"] = np.zeros(co)
        fuse_in = co + (widths[i - 1] if i >= 1 else 0)
        params[f"dec{i}.fuse.w"] = _conv_init(rng, co, fuse_in, 3, 3)
        params[f"dec{i}.fuse.b"] = np.zeros(co)
        if i < config.num_scales:
            params[f"disp{i}.w"] = _conv_init(rng, 1, co, 3, 3)
            # Bias the sigmoid toward far depth at init.  Starting near the
            # minimum-depth rail saturates the heads before the pose escapes
            # zero and freezes structure learning.
            params[f"disp{i}.b"] = np.full(1, -2.0)
        ci = co
    return params


def init_pose_params(config: PoseNetConfig, seed: int) -> dict:
    """Same init scheme; the final affine head is all zeros."""
    rng = np.random.default_rng([int(seed), 13])
    params = {}
    ci = config.in_channels
    for i, w in enumerate(config.conv_widths):
        params[f"conv{i}.w"] = _conv_init(rng, w, ci, 3, 3)
        params[f"conv{i}.b"] = np.zeros(w)
        ci = w
    params["head.w"] = np.zeros((ci, 6))
    params["head.b"] = np.zeros(6)
    return params


def depth_net_apply(params: dict, frames, config: DepthNetConfig) -> list:
    """Batched forward pass: frames (N,C,H,W) -> list of (N,1,H/2^s,W/2^s)
    sigmoid disparity maps, scale 0 first."""
    shape = ad.value(frames).shape
    if shape[1:] != (config.in_channels, config.height, config.width):
        raise ValidationError(
            f"depth net expects (N,{config.in_channels},{config.height},{config.width}), got {shape}")
    x = frames
    skips = []
    for i in range(len(config.enc_widths)):
        x = ad.elu(ad.conv2d(x, params[f"enc{i}.w"], params[f"enc{i}.b"], stride=2, pad=1))
        skips.append(x)
    disps = {}
    x = skips[-1]
    for i in reversed(range(len(config.enc_widths))):
        x = ad.upsample_nearest(x, 2)
        x = ad.elu(ad.conv2d(x, params[f"dec{i}.up.w"], params[f"dec{i}.up.b"], stride=1, pad=1))
        if i >= 1:
            x = ad.concat([x, skips[i - 1]], axis=1)
        x = ad.elu(ad.conv2d(x, params[f"dec{i}.fuse.w"], params[f"dec{i}.fuse.b"], stride=1, pad=1))
        if i < config.num_scales:
            disps[i] = ad.sigmoid(ad.conv2d(x, params[f"disp{i}.w"], params[f"disp{i}.b"], stride=1, pad=1))
    return [disps[s] for s in range(config.num_scales)]


def depth_net_forward(params: dict, frame, config: DepthNetConfig) -> list:
    """Single-frame contract: (C,H,W) -> list of (H/2^s, W/2^s) maps."""
    fv = ad.value(frame)
    pyramid = depth_net_apply(params, ad.reshape(frame, (1,) + fv.shape), config)
    out = []
    for d in pyramid:
        s = ad.value(d).shape
        out.append(ad.reshape(d, (s[2], s[3])))
    return out


def pose_net_apply(params: dict, frames_a, frames_b, config: PoseNetConfig):
    """Batched forward pass: two (N,C,H,W) stacks -> (axis_angle, translation),
    each (N,3)."""
    x = ad.concat([frames_a, frames_b], axis=1)
    if ad.value(x).shape[1] != config.in_channels:
        raise ValidationError(
            f"pose net expects {config.in_channels} stacked channels, got {ad.value(x).shape[1]}")
    for i in range(len(config.conv_widths)):
        x = ad.elu(ad.conv2d(x, params[f"conv{i}.w"], params[f"conv{i}.b"], stride=2, pad=1))
    feats = ad.tmean(x, axis=(2, 3))
    vec = ad.add(ad.matmul(feats, params["head.w"]), params["head.b"])
    vec = ad.mul(vec, config.out_scale)
    return vec[:, :3], vec[:, 3:]


def pose_net_forward(params: dict, frame_a, frame_b, config: PoseNetConfig) -> Pose:
    """Single-pair contract: returns a Pose (identity at zero-initialized head)."""
    av, bv = ad.value(frame_a), ad.value(frame_b)
    if av.shape != bv.shape:
        raise ValidationError(f"pose net frames disagree: {av.shape} vs {bv.shape}")
    aa, t = pose_net_apply(params,
                           ad.reshape(frame_a, (1,) + av.shape),
                           ad.reshape(frame_b, (1,) + bv.shape), config)
    return Pose(ad.reshape(aa, (3,)), ad.reshape(t, (3,)))


def disparity_to_depth(sigma, d_min: float, d_max: float):
    """Map sigmoid output in (0,1) to depth in [d_min, d_max].

    disp = 1/d_max + (1/d_min - 1/d_max) * sigma; depth = 1/disp.
    Monotone decreasing in sigma.
    """
    if not (0 < d_min < d_max):
        raise ValidationError(f"need 0 < d_min < d_max, got ({d_min}, {d_max})")
    disp = (1.0 / d_max) + (1.0 / d_min - 1.0 / d_max) * sigma
    return 1.0 / disp


def save_checkpoint(path, params: dict, meta: dict) -> None:
    """Self-describing npz: parameter arrays plus a JSON metadata blob."""
    meta_json = json.dumps(meta, sort_keys=True)
    np.savez(path, __meta__=np.str_(meta_json), **params)


def load_checkpoint(path):
    """Returns (params, meta). Arrays reload bit-exactly."""
    with np.load(path, allow_pickle=False) as f:
        meta = json.loads(str(f["__meta__"]))
        params = {k: f[k] for k in f.files if k != "__meta__"}
    return params, meta
