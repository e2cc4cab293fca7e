"""Standard monocular depth metrics with median scaling.

Self-supervised monocular depth is recoverable only up to a global scale,
so predictions are rescaled by median(gt)/median(pred) before computing
AbsRel, RMSE, and the delta < 1.25 accuracy fraction.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class MetricsReport:
    abs_rel: float
    rmse: float
    delta1: float
    scale: float  # the median-scaling factor that was applied

    def to_dict(self) -> dict:
        return asdict(self)


def depth_metrics(pred, gt) -> MetricsReport:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValidationError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if not np.all(gt > 0):
        raise ValidationError("ground-truth depths must be positive")
    if not np.all(pred > 0):
        raise ValidationError("predicted depths must be positive")
    scale = float(np.median(gt) / np.median(pred))
    scaled = pred * scale
    abs_rel = float(np.mean(np.abs(scaled - gt) / gt))
    rmse = float(np.sqrt(np.mean((scaled - gt) ** 2)))
    ratio = np.maximum(scaled / gt, gt / scaled)
    delta1 = float(np.mean(ratio < 1.25))
    return MetricsReport(abs_rel=abs_rel, rmse=rmse, delta1=delta1, scale=scale)


def mean_metrics(reports) -> dict:
    """Plain-dict average of a list of MetricsReports."""
    if not reports:
        raise ValidationError("cannot average an empty metrics list")
    keys = ("abs_rel", "rmse", "delta1", "scale")
    return {k: float(np.mean([getattr(r, k) for r in reports])) for k in keys}
