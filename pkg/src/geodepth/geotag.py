"""Location logs, frame/fix matching, and the alpha-channel encoding.

The (lat, lon) fix is normalized against dataset-wide bounds, quantized to
8 bits (round-half-up), and written as two constant half-planes: latitude
fills the left half of the alpha channel, longitude the right half.
Constant planes survive convolution and resizing, and the encoding is
bit-reproducible across implementations.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import GeotagIntegrityError, ValidationError

SCHEME_VERSION = "halfplane-v1"


@dataclass(frozen=True)
class LocationFix:
    timestamp: float
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class GeoBounds:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValidationError(f"degenerate bounds {self}")

    def contains(self, lat, lon):
        return (self.lat_min <= lat <= self.lat_max
                and self.lon_min <= lon <= self.lon_max)


def parse_location_log(path) -> list:
    """Read a `timestamp_s,lat_deg,lon_deg` CSV (header optional).

    Fixes are returned sorted by timestamp; duplicate timestamps are
    rejected.  Malformed rows raise with their 1-based line number.
    """
    fixes = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                ts, lat, lon = (float(c) for c in row)
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise ValidationError(f"{path}:{lineno}: non-numeric row {row!r}") from None
            try:
                fixes.append(LocationFix(ts, lat, lon))
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    fixes.sort(key=lambda f: f.timestamp)
    for a, b in zip(fixes, fixes[1:]):
        if a.timestamp == b.timestamp:
            raise ValidationError(f"{path}: duplicate timestamp {a.timestamp}")
    return fixes


def compute_bounds(fixes, margin_frac: float = 0.05) -> GeoBounds:
    """Min/max over fixes, expanded by margin_frac * range per side.

    A degenerate (zero-range) axis is expanded by a fixed 1e-4 degrees on
    each side instead.
    """
    if not fixes:
        raise ValidationError("cannot compute bounds of an empty fix list")
    if margin_frac < 0:
        raise ValidationError("margin_frac must be >= 0")

    def expand(lo, hi):
        rng = hi - lo
        if rng == 0.0:
            return lo - 1e-4, hi + 1e-4
        return lo - margin_frac * rng, hi + margin_frac * rng

    lat_min, lat_max = expand(min(f.lat for f in fixes), max(f.lat for f in fixes))
    lon_min, lon_max = expand(min(f.lon for f in fixes), max(f.lon for f in fixes))
    return GeoBounds(lat_min, lat_max, lon_min, lon_max)


def match_frames_to_fixes(frame_timestamps, fixes, tolerance: float = 0.5) -> list:
    """Assign each frame its nearest fix by absolute time difference.

    Returns (frame_index, fix_index) pairs; frames with no fix within
    ``tolerance`` seconds are omitted.  Ties break toward the earlier fix.
    """
    if not fixes:
        return []
    fix_ts = np.array([f.timestamp for f in fixes])
    if np.any(np.diff(fix_ts) < 0):
        raise ValidationError("fixes must be sorted by timestamp")
    assignments = []
    for i, t in enumerate(frame_timestamps):
        j = int(np.searchsorted(fix_ts, t))
        best, best_dt = None, None
        for cand in (j - 1, j):
            if 0 <= cand < len(fix_ts):
                dt = abs(t - fix_ts[cand])
                if best is None or dt < best_dt:  # earlier fix wins ties
                    best, best_dt = cand, dt
        if best is not None and best_dt <= tolerance:
            assignments.append((i, best))
    return assignments


def _quantize(norm) -> int:
    # round-half-up, stated explicitly for bit-reproducibility
    return int(np.floor(norm * 255.0 + 0.5))


def encode_location_alpha(lat, lon, bounds: GeoBounds, width: int, height: int) -> np.ndarray:
    """Quantized (lat, lon) as a (height, width) uint8 plane.

    Columns [0, width//2) hold the latitude code, the rest the longitude
    code.  Fixes outside ``bounds`` are an error: the caller must recompute
    bounds over its log first.
    """
    if not bounds.contains(lat, lon):
        raise ValidationError(f"fix ({lat}, {lon}) outside bounds {bounds}")
    q_lat = _quantize((lat - bounds.lat_min) / (bounds.lat_max - bounds.lat_min))
    q_lon = _quantize((lon - bounds.lon_min) / (bounds.lon_max - bounds.lon_min))
    plane = np.empty((height, width), dtype=np.uint8)
    half = width // 2
    plane[:, :half] = q_lat
    plane[:, half:] = q_lon
    return plane


def decode_location_alpha(plane: np.ndarray, bounds: GeoBounds):
    """Invert encode_location_alpha (verification path).

    Raises GeotagIntegrityError when either half is not constant.
    """
    plane = np.asarray(plane)
    half = plane.shape[1] // 2
    left, right = plane[:, :half], plane[:, half:]
    if left.min() != left.max():
        raise GeotagIntegrityError("left (latitude) half-plane is not constant")
    if right.min() != right.max():
        raise GeotagIntegrityError("right (longitude) half-plane is not constant")
    q_lat = float(left[0, 0])
    q_lon = float(right[0, -1])
    lat = bounds.lat_min + (q_lat / 255.0) * (bounds.lat_max - bounds.lat_min)
    lon = bounds.lon_min + (q_lon / 255.0) * (bounds.lon_max - bounds.lon_min)
    return lat, lon
