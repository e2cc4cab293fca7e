"""View-synthesis training objective.

The target frame is reconstructed from each neighbor via predicted depth
and pose; the photometric error (SSIM + L1 over RGB) is reduced by
per-pixel minimum over the sources and gated by the stationary-pixel
auto-mask (warped error must beat the unwarped error, strictly).  An
edge-aware smoothness regularizer on mean-normalized disparity is added
per scale with weight lambda / 2^s.

Masked and out-of-view pixels are excluded from the photometric mean
rather than zero-filled, so shrinking the valid area is never rewarded.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ValidationError
from .geometry import CameraIntrinsics, inverse_warp_batch, rotation_components
from .networks import (DepthNetConfig, PoseNetConfig, depth_net_apply,
                       disparity_to_depth, pose_net_apply)

_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2
# Placeholder error for invalid pixels; never selected into the loss because
# the validity mask zeroes such pixels out of the mean.
_BIG = 1e6

_COUNT_CACHE = {}


@dataclass(frozen=True)
class LossWeights:
    ssim_alpha: float = 0.85
    smoothness_lambda: float = 1e-3
    scales: int = 4

    def __post_init__(self):
        if not 0.0 <= self.ssim_alpha <= 1.0:
            raise ValidationError("ssim_alpha must lie in [0, 1]")
        if self.smoothness_lambda < 0:
            raise ValidationError("smoothness_lambda must be >= 0")


@dataclass
class LossReport:
    total: float
    photometric: float
    smoothness: float
    mask_fraction: float
    all_masked: bool = False


def _window_counts(h, w):
    """Number of in-image taps of the 3x3 window at each position."""
    key = (h, w)
    if key not in _COUNT_CACHE:
        _COUNT_CACHE[key] = ad.box_sum3(np.ones((h, w)))
    return _COUNT_CACHE[key]


def _box3(x):
    """Edge-renormalized 3x3 mean filter over (..., H, W); constants stay exact."""
    h, w = ad.value(x).shape[-2:]
    return ad.box_sum3(x) / _window_counts(h, w)


def _ensure_nchw(x):
    v = ad.value(x)
    if v.ndim == 3:
        return ad.reshape(x, (1,) + v.shape), True
    return x, False


class _TargetStats:
    """Box-filter statistics of a constant target, shared across scales."""

    def __init__(self, target_rgb):
        self.t = target_rgb
        self.mu = _box3(target_rgb)
        self.mu2 = self.mu * self.mu
        self.var = _box3(target_rgb * target_rgb) - self.mu2


def _ssim_against(pred, stats: _TargetStats):
    mu_a = _box3(pred)
    var_a = _box3(pred * pred) - mu_a * mu_a
    cov = _box3(pred * stats.t) - mu_a * stats.mu
    num = (2.0 * mu_a * stats.mu + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mu_a * mu_a + stats.mu2 + _SSIM_C1) * (var_a + stats.var + _SSIM_C2)
    return ad.tmean(num / den, axis=1)


def ssim_map(a, b):
    """Channel-averaged local SSIM with a 3x3 mean filter.

    Accepts (C,H,W) or (N,C,H,W); returns (H,W) or (N,H,W) in [-1, 1].
    """
    if ad.value(a).shape != ad.value(b).shape:
        raise ValidationError("ssim_map: shape mismatch")
    a, squeezed = _ensure_nchw(a)
    b, _ = _ensure_nchw(b)
    out = _ssim_against(a, _TargetStats(b))
    if squeezed:
        out = ad.reshape(out, ad.value(out).shape[1:])
    return out


def photometric_error(pred, target, weights: LossWeights, target_stats=None):
    """Per-pixel alpha/2*(1-SSIM) + (1-alpha)*L1 over the RGB channels.

    Accepts (C,H,W) or (N,C,H,W); alpha channels beyond the first three are
    ignored.  Returns (H,W) or (N,H,W).  ``target_stats`` optionally reuses
    precomputed target-side SSIM statistics.
    """
    if ad.value(pred).shape != ad.value(target).shape:
        raise ValidationError("photometric_error: shape mismatch")
    pred, squeezed = _ensure_nchw(pred)
    target, _ = _ensure_nchw(target)
    if ad.value(pred).shape[1] > 3:
        pred = pred[:, :3]
        target = target[:, :3]
        target_stats = None
    l1 = ad.tmean(ad.absolute(pred - target), axis=1)
    alpha = weights.ssim_alpha
    if alpha == 0.0:
        err = l1
    else:
        if target_stats is None:
            target_stats = _TargetStats(target)
        ssim = _ssim_against(pred, target_stats)
        err = (alpha / 2.0) * (1.0 - ssim) + (1.0 - alpha) * l1
    if squeezed and ad.value(err).ndim == 3:
        err = ad.reshape(err, ad.value(err).shape[1:])
    return err


def min_reprojection_with_automask(errors, identity_errors):
    """Pointwise minimum over per-source errors plus the stationary mask.

    errors: list of warped-error maps (Tensors or arrays, same shape);
    identity_errors: list of plain unwarped-error maps.  Returns
    (min_error, mask) where mask = 1.0 exactly where the best warped error
    strictly beats the best unwarped error.
    """
    if not errors:
        raise ValidationError("need at least one source error map")
    min_err = errors[0] if len(errors) == 1 else ad.amin(ad.stack(errors, axis=0), axis=0)
    min_identity = np.min(np.stack([ad.value(e) for e in identity_errors], axis=0), axis=0)
    mask = (ad.value(min_err) < min_identity).astype(np.float64)
    return min_err, mask


def edge_aware_smoothness(disp, image):
    """Mean |d disp*| weighted by exp(-|d image|); disp* is mean-normalized.

    disp (H,W) or (N,H,W); image (C,H,W) or (N,C,H,W) at the same spatial
    size.  Scale-invariant in disp by construction.
    """
    dv = ad.value(disp)
    if dv.ndim == 2:
        disp = ad.reshape(disp, (1,) + dv.shape)
    img, _ = _ensure_nchw(image)
    if ad.value(disp).shape[-2:] != ad.value(img).shape[-2:]:
        raise ValidationError("edge_aware_smoothness: disp and image sizes disagree")
    norm = ad.tmean(disp, axis=(1, 2), keepdims=True) + 1e-7
    d = disp / norm
    gx = ad.absolute(d[:, :, 1:] - d[:, :, :-1])
    gy = ad.absolute(d[:, 1:, :] - d[:, :-1, :])
    iv = ad.value(img)
    wx = np.exp(-np.mean(np.abs(iv[:, :, :, 1:] - iv[:, :, :, :-1]), axis=1))
    wy = np.exp(-np.mean(np.abs(iv[:, :, 1:, :] - iv[:, :, :-1, :]), axis=1))
    return ad.tmean(gx * wx) + ad.tmean(gy * wy)


def _avg_pool2(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def compute_total_loss(triplet, depth_params, pose_params, K: CameraIntrinsics,
                       weights: LossWeights, depth_config: DepthNetConfig,
                       pose_config: PoseNetConfig, d_min: float = 0.1,
                       d_max: float = 100.0):
    """Full multi-scale view-synthesis loss for a batch of triplets.

    triplet: (prev, target, next) arrays, each (N,4,H,W) in [0,1].
    Returns (loss Tensor/scalar, LossReport, intermediates dict).
    """
    prev, target, nxt = triplet
    prev = np.asarray(prev, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    if prev.ndim == 3:
        prev, target, nxt = prev[None], target[None], nxt[None]
    n = target.shape[0]

    pyramid = depth_net_apply(depth_params, target, depth_config)
    # Both source poses in one batched pass: rows 0..n-1 are T_{t->t-1},
    # rows n..2n-1 are T_{t->t+1}.
    target2 = np.concatenate([target, target], axis=0)
    sources = np.concatenate([prev, nxt], axis=0)
    aa2, t2 = pose_net_apply(pose_params, target2, sources, pose_config)
    poses = [(aa2[:n], t2[:n]), (aa2[n:], t2[n:])]
    rot2 = rotation_components(aa2)

    target_rgb = target[:, :3]
    target2_rgb = target2[:, :3]
    sources_rgb = sources[:, :3]
    target2_stats = _TargetStats(target2_rgb)

    identity_err2 = ad.value(photometric_error(sources_rgb, target2_rgb, weights,
                                               target2_stats))
    min_identity = np.minimum(identity_err2[:n], identity_err2[n:])

    image_pyramid = [target_rgb]
    for _ in range(weights.scales - 1):
        image_pyramid.append(_avg_pool2(image_pyramid[-1]))

    # One fused warp + photometric pass over every scale: rows are ordered
    # scale-major, each scale block holding [t-1 sources | t+1 sources].
    n_scales = min(weights.scales, len(pyramid))
    h, w = K.height, K.width
    depth_blocks = []
    disp_flats = []
    for s in range(n_scales):
        dshape = ad.value(pyramid[s]).shape
        disp_flat = ad.reshape(pyramid[s], (n, dshape[2], dshape[3]))
        disp_flats.append(disp_flat)
        depth = disparity_to_depth(ad.upsample_nearest(disp_flat, 2 ** s),
                                   d_min, d_max)
        depth_blocks.append(depth)
        depth_blocks.append(depth)
    depth_all = ad.concat(depth_blocks, axis=0)            # (S*2n, H, W)
    aa_all = ad.concat([aa2] * n_scales, axis=0)
    t_all = ad.concat([t2] * n_scales, axis=0)
    rot_all = [ad.concat([c] * n_scales, axis=0) for c in rot2]
    sources_all = np.tile(sources_rgb, (n_scales, 1, 1, 1))
    stats_all = _TargetStats.__new__(_TargetStats)
    stats_all.t = np.tile(target2_stats.t, (n_scales, 1, 1, 1))
    stats_all.mu = np.tile(target2_stats.mu, (n_scales, 1, 1, 1))
    stats_all.mu2 = np.tile(target2_stats.mu2, (n_scales, 1, 1, 1))
    stats_all.var = np.tile(target2_stats.var, (n_scales, 1, 1, 1))

    warped, valid = inverse_warp_batch(sources_all, depth_all, aa_all, t_all, K,
                                       rot_comps=rot_all)
    err_all = photometric_error(warped, stats_all.t, weights, stats_all)
    vmask = ad.value(valid)
    err_all = ad.where(vmask > 0, err_all, _BIG)
    min_err = ad.amin(ad.reshape(err_all, (n_scales, 2, n, h, w)), axis=1)

    vmask_s = vmask.reshape(n_scales, 2, n, h, w)
    valid_any = np.maximum(vmask_s[:, 0], vmask_s[:, 1])   # (S, n, H, W)
    automask = (ad.value(min_err) < min_identity).astype(np.float64)
    final_mask = automask * valid_any
    denoms = final_mask.reshape(n_scales, -1).sum(axis=1)
    weighted_mask = final_mask / np.maximum(denoms, 1.0).reshape(n_scales, 1, 1, 1)
    photometric = ad.tsum(min_err * weighted_mask) / float(n_scales)
    mask_fracs = final_mask.reshape(n_scales, -1).mean(axis=1)
    warped_scale0 = warped[:2 * n]

    smooth_terms = [edge_aware_smoothness(disp_flats[s], image_pyramid[s]) / (2.0 ** s)
                    for s in range(n_scales)]
    smoothness = _mean_terms(smooth_terms)
    loss = photometric + weights.smoothness_lambda * smoothness

    mask_fraction = float(np.mean(mask_fracs))
    report = LossReport(
        total=float(ad.value(loss)),
        photometric=float(ad.value(photometric)),
        smoothness=float(ad.value(smoothness)),
        mask_fraction=mask_fraction,
        all_masked=mask_fraction == 0.0,
    )
    intermediates = {
        "pyramid": pyramid,
        "poses": poses,
        "warped_scale0": warped_scale0,
    }
    return loss, report, intermediates


def _mean_terms(terms):
    acc = terms[0]
    for t in terms[1:]:
        acc = acc + t
    return acc / float(len(terms))
