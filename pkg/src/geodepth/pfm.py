"""Portable float map IO plus 8-bit depth visualizations.

Grayscale PFM ("Pf"), written little-endian with scale -1.0, rows
bottom-up per the format.  The PNG visualization maps inverse depth to
brightness: near is bright, far is dark.
"""

import numpy as np
from PIL import Image

from .errors import ValidationError


def write_pfm(path, data) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValidationError(f"write_pfm expects a 2-D map, got shape {data.shape}")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ValidationError(f"{path}: not a grayscale PFM file")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise ValidationError(f"{path}: malformed PFM dimensions line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        raw = fh.read(w * h * 4)
        if len(raw) != w * h * 4:
            raise ValidationError(f"{path}: truncated PFM payload")
    data = np.frombuffer(raw, dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(np.float64)


def write_depth_png(path, depth) -> None:
    """8-bit grayscale visualization of a depth map (near = bright)."""
    depth = np.asarray(depth, dtype=np.float64)
    inv = 1.0 / np.maximum(depth, 1e-9)
    lo, hi = inv.min(), inv.max()
    if hi - lo < 1e-12:
        vis = np.full_like(inv, 128.0)
    else:
        vis = (inv - lo) / (hi - lo) * 255.0
    Image.fromarray(np.floor(vis + 0.5).astype(np.uint8), "L").save(path)
