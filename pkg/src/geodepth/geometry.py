"""Pinhole camera geometry: backprojection, rigid transforms, projection,
bilinear sampling, and inverse warping.

All functions are pure and written against the ops in ``autodiff``, so they
accept plain numpy arrays (or scalars) as well as ``Tensor`` inputs and are
differentiable in the latter case.  Pixel coordinates follow the
(u along width, v along height) convention; camera frames are +z forward.

Points behind the camera are flagged invalid rather than raised on: training
batches routinely contain them and the loss masks them out.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .errors import ValidationError

# Transformed points with z at or below this are treated as behind the camera.
Z_EPS = 1e-6


class PixelCoord(NamedTuple):
    """Continuous pixel coordinates; components may be scalars or grids."""
    u: object
    v: object


class Point3(NamedTuple):
    """Camera-frame 3D point; components may be scalars or grids."""
    x: object
    y: object
    z: object


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError(
                f"principal point ({self.cx}, {self.cy}) outside image "
                f"{self.width}x{self.height}")


@dataclass
class Pose:
    """Rigid transform as axis-angle rotation (radians * unit axis) + translation.

    Fields are float64 arrays of shape (3,); autodiff Tensors are accepted
    for the differentiable training path.
    """
    axis_angle: object
    translation: object

    def __post_init__(self):
        if not ad.is_tensor(self.axis_angle):
            self.axis_angle = np.asarray(self.axis_angle, dtype=np.float64)
            if self.axis_angle.shape != (3,):
                raise ValidationError(f"axis_angle must have shape (3,), got {self.axis_angle.shape}")
            if np.linalg.norm(self.axis_angle) >= np.pi:
                raise ValidationError("axis_angle outside the canonical range (norm >= pi)")
        if not ad.is_tensor(self.translation):
            self.translation = np.asarray(self.translation, dtype=np.float64)
            if self.translation.shape != (3,):
                raise ValidationError(f"translation must have shape (3,), got {self.translation.shape}")

    @classmethod
    def identity(cls):
        return cls(np.zeros(3), np.zeros(3))


# -- rotations ---------------------------------------------------------

def rotation_components(aa):
    """Rodrigues rotation entries from axis-angle vectors of shape (..., 3).

    Returns the nine matrix entries (r00, r01, ..., r22), each of shape
    (...).  Uses R = I + A(t)*skew(aa) + B(t)*(aa aa^T - t I) with
    t = |aa|^2, A = sin(th)/th, B = (1-cos(th))/th^2, switching to series
    for small t so the zero rotation is an exact, differentiable identity.
    """
    x = aa[..., 0]
    y = aa[..., 1]
    z = aa[..., 2]
    t = x * x + y * y + z * z
    tv = ad.value(t)
    small = tv < 1e-8
    t_safe = ad.where(small, np.ones_like(tv), t)
    th = ad.sqrt(t_safe)
    a_series = 1.0 - t / 6.0 + (t * t) / 120.0
    b_series = 0.5 - t / 24.0 + (t * t) / 720.0
    A = ad.where(small, a_series, ad.sin(th) / th)
    B = ad.where(small, b_series, (1.0 - ad.cos(th)) / t_safe)
    r00 = 1.0 + B * (x * x - t)
    r01 = A * (-z) + B * (x * y)
    r02 = A * y + B * (x * z)
    r10 = A * z + B * (x * y)
    r11 = 1.0 + B * (y * y - t)
    r12 = A * (-x) + B * (y * z)
    r20 = A * (-y) + B * (x * z)
    r21 = A * x + B * (y * z)
    r22 = 1.0 + B * (z * z - t)
    return r00, r01, r02, r10, r11, r12, r20, r21, r22


def axis_angle_to_rotation(aa):
    """3x3 rotation matrix (plain numpy) from an axis-angle 3-vector."""
    aa = np.asarray(aa, dtype=np.float64)
    if not np.all(np.isfinite(aa)):
        raise ValidationError("axis_angle must be finite")
    comps = rotation_components(aa)
    return np.array(comps, dtype=np.float64).reshape(3, 3)


def rotation_to_axis_angle(rot):
    """Axis-angle 3-vector from a 3x3 rotation matrix; |result| <= pi."""
    rot = np.asarray(rot, dtype=np.float64)
    tr = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(tr)
    vee = np.array([rot[2, 1] - rot[1, 2],
                    rot[0, 2] - rot[2, 0],
                    rot[1, 0] - rot[0, 1]])
    if theta < 1e-7:
        # vee = 2 sin(theta) * axis ~ 2 * aa
        return vee / 2.0
    if np.pi - theta < 1e-7:
        # Near pi the vee part vanishes; recover the axis from R + I.
        m = (rot + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(m)))
        axis = m[:, i] / np.sqrt(m[i, i])
        axis /= np.linalg.norm(axis)
        sign = np.sign(vee[i]) if abs(vee[i]) > 1e-12 else 1.0
        return theta * axis * sign
    return theta / (2.0 * np.sin(theta)) * vee


# -- point-level operations --------------------------------------------

def backproject(p: PixelCoord, depth, K: CameraIntrinsics) -> Point3:
    """Lift pixel(s) to camera-frame 3D point(s): depth * K^-1 * p."""
    dv = ad.value(depth)
    if not np.all(dv > 0):
        raise ValidationError("backproject requires positive depth")
    x = (ad.sub(p.u, K.cx) / K.fx) * depth
    y = (ad.sub(p.v, K.cy) / K.fy) * depth
    return Point3(x, y, depth)


def project(point: Point3, K: CameraIntrinsics):
    """Perspective projection. Returns (PixelCoord, valid).

    valid is False where z <= Z_EPS (behind or grazing the camera); the
    projected coordinates there are computed against a clamped z and must
    be masked by the caller.
    """
    zv = ad.value(point.z)
    valid = zv > Z_EPS
    z_safe = ad.where(valid, point.z, np.full_like(zv, Z_EPS))
    u = K.fx * (point.x / z_safe) + K.cx
    v = K.fy * (point.y / z_safe) + K.cy
    return PixelCoord(u, v), valid


def transform_point(T: Pose, point: Point3) -> Point3:
    """Apply the rigid transform: R @ X + t."""
    r00, r01, r02, r10, r11, r12, r20, r21, r22 = rotation_components(T.axis_angle)
    t = T.translation
    x, y, z = point
    return Point3(
        r00 * x + r01 * y + r02 * z + t[..., 0],
        r10 * x + r11 * y + r12 * z + t[..., 1],
        r20 * x + r21 * y + r22 * z + t[..., 2],
    )


def pose_inverse(T: Pose) -> Pose:
    """Inverse transform: (R, t) -> (R^T, -R^T t)."""
    rot = axis_angle_to_rotation(ad.value(T.axis_angle))
    t = ad.value(T.translation)
    return Pose(-ad.value(T.axis_angle), -(rot.T @ t))


def pose_compose(second: Pose, first: Pose) -> Pose:
    """Composition second∘first: apply ``first``, then ``second``."""
    r2 = axis_angle_to_rotation(ad.value(second.axis_angle))
    r1 = axis_angle_to_rotation(ad.value(first.axis_angle))
    rot = r2 @ r1
    t = r2 @ ad.value(first.translation) + ad.value(second.translation)
    return Pose(rotation_to_axis_angle(rot), t)


def reproject_pixel(p: PixelCoord, depth, K: CameraIntrinsics, T: Pose):
    """Chain backproject -> transform -> project. Returns (PixelCoord, valid).

    valid is False where the transformed z <= Z_EPS or the projection falls
    outside [0, width-1] x [0, height-1].
    """
    cam = backproject(p, depth, K)
    moved = transform_point(T, cam)
    q, in_front = project(moved, K)
    uv, vv = ad.value(q.u), ad.value(q.v)
    valid = (in_front
             & (uv >= 0.0) & (uv <= K.width - 1.0)
             & (vv >= 0.0) & (vv <= K.height - 1.0))
    return q, valid


# -- grid-level operations ---------------------------------------------

def pixel_grid(width, height):
    """Constant (u, v) coordinate grids of shape (height, width)."""
    v, u = np.meshgrid(np.arange(height, dtype=np.float64),
                       np.arange(width, dtype=np.float64), indexing="ij")
    return u, v


def sampling_valid_mask(u, v, width, height):
    """1.0 where (u, v) lies inside [0, width-1] x [0, height-1], else 0.0."""
    uv, vv = ad.value(u), ad.value(v)
    return ((uv >= 0.0) & (uv <= width - 1.0)
            & (vv >= 0.0) & (vv <= height - 1.0)).astype(np.float64)


def bilinear_sample(img, coords: PixelCoord):
    """Sample a (C,H,W) image at a (H',W') grid of pixel coordinates.

    Out-of-bounds coordinates are clamped to the border and masked 0.
    Returns (sampled (C,H',W'), mask (H',W')).
    """
    imgv = ad.value(img)
    c, h, w = imgv.shape
    u3 = ad.reshape(coords.u, (1,) + ad.value(coords.u).shape)
    v3 = ad.reshape(coords.v, (1,) + ad.value(coords.v).shape)
    img4 = ad.reshape(img, (1, c, h, w))
    out = ad.bilinear_sample(img4, u3, v3)
    sampled = ad.reshape(out, ad.value(out).shape[1:])
    mask = sampling_valid_mask(coords.u, coords.v, w, h)
    return sampled, mask


def reproject_grid(depth, axis_angle, translation, K: CameraIntrinsics,
                   rot_comps=None):
    """Batched reprojection of the full pixel grid through depth and pose.

    depth (N,H,W), axis_angle (N,3), translation (N,3) ->
    (u, v) each (N,H,W) plus a float validity mask (N,H,W).
    ``rot_comps`` optionally reuses rotation_components(axis_angle) computed
    once by the caller.
    """
    n = ad.value(depth).shape[0]
    u0, v0 = pixel_grid(K.width, K.height)
    if rot_comps is None:
        rot_comps = rotation_components(axis_angle)
    comps = [ad.reshape(c, (n, 1, 1)) for c in rot_comps]
    r00, r01, r02, r10, r11, r12, r20, r21, r22 = comps
    tx = ad.reshape(translation[..., 0], (n, 1, 1))
    ty = ad.reshape(translation[..., 1], (n, 1, 1))
    tz = ad.reshape(translation[..., 2], (n, 1, 1))

    x = ((u0 - K.cx) / K.fx) * depth
    y = ((v0 - K.cy) / K.fy) * depth
    z = depth
    x2 = r00 * x + r01 * y + r02 * z + tx
    y2 = r10 * x + r11 * y + r12 * z + ty
    z2 = r20 * x + r21 * y + r22 * z + tz

    z2v = ad.value(z2)
    in_front = z2v > Z_EPS
    z_safe = ad.where(in_front, z2, np.full_like(z2v, Z_EPS))
    u = K.fx * (x2 / z_safe) + K.cx
    v = K.fy * (y2 / z_safe) + K.cy
    valid = in_front.astype(np.float64) * sampling_valid_mask(u, v, K.width, K.height)
    return u, v, valid


def inverse_warp_batch(source, depth, axis_angle, translation, K: CameraIntrinsics,
                       rot_comps=None):
    """Reconstruct target frames by sampling source frames at reprojected
    pixels.

    source (N,C,H,W), depth (N,H,W), axis_angle/translation (N,3) ->
    (warped (N,C,H,W), mask (N,H,W)).  The mask is the conjunction of
    reprojection validity (in front of the camera) and sampling validity
    (inside the source bounds); here the two bounds checks coincide.
    """
    u, v, valid = reproject_grid(depth, axis_angle, translation, K, rot_comps)
    warped = ad.bilinear_sample(source, u, v)
    return warped, valid


def inverse_warp(source, target_depth, T: Pose, K: CameraIntrinsics):
    """Single-image inverse warp: source (C,H,W), target_depth (H,W).

    Returns (warped (C,H,W), mask (H,W)).
    """
    srcv = ad.value(source)
    c, h, w = srcv.shape
    if (h, w) != (K.height, K.width) or ad.value(target_depth).shape != (h, w):
        raise ValidationError("inverse_warp: source, depth, and intrinsics sizes disagree")
    depth_b = ad.reshape(target_depth, (1, h, w))
    aa_b = ad.reshape(T.axis_angle, (1, 3))
    t_b = ad.reshape(T.translation, (1, 3))
    src_b = ad.reshape(source, (1, c, h, w))
    warped, mask = inverse_warp_batch(src_b, depth_b, aa_b, t_b, K)
    return ad.reshape(warped, (c, h, w)), ad.value(mask)[0]
