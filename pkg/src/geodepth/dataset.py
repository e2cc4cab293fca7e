"""Frame sampling, dataset assembly, and triplet loading.

A dataset directory holds ``frames/%06d.png`` (8-bit RGBA with the geotag
encoded in alpha), ``timestamps.csv`` (``index,timestamp_s``), and
``manifest.json``.  Raw inputs are a directory of RGB frames plus the same
CSV layout and a location log; video decoding is left to external tooling.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DatasetError, ValidationError
from .geometry import CameraIntrinsics
from .geotag import (SCHEME_VERSION, GeoBounds, LocationFix, compute_bounds,
                     encode_location_alpha, match_frames_to_fixes,
                     parse_location_log)

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class FrameRecord:
    index: int
    timestamp: float
    image_path: str
    lat: float
    lon: float
    source_index: int  # index in the raw input sequence, for ground-truth joins


@dataclass(frozen=True)
class TrainingTriplet:
    target_index: int
    source_indices: tuple  # (t-1, t+1)


@dataclass
class DatasetManifest:
    frames: list
    triplets: list
    intrinsics: CameraIntrinsics
    bounds: GeoBounds
    width: int
    height: int
    scheme: str = SCHEME_VERSION
    pipeline: dict = field(default_factory=dict)

    def validate(self):
        for i, rec in enumerate(self.frames):
            if rec.index != i:
                raise DatasetError(f"frame indices not contiguous at position {i}")
        for t in self.triplets:
            for idx in (t.target_index, *t.source_indices):
                if not 0 <= idx < len(self.frames):
                    raise DatasetError(f"triplet references missing frame {idx}")


def manifest_to_json(manifest: DatasetManifest) -> str:
    k = manifest.intrinsics
    doc = {
        "scheme": manifest.scheme,
        "image_size": {"width": manifest.width, "height": manifest.height},
        "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
                       "width": k.width, "height": k.height},
        "bounds": {"lat_min": manifest.bounds.lat_min, "lat_max": manifest.bounds.lat_max,
                   "lon_min": manifest.bounds.lon_min, "lon_max": manifest.bounds.lon_max},
        "frames": [{"index": f.index, "timestamp": f.timestamp, "image_path": f.image_path,
                    "lat": f.lat, "lon": f.lon, "source_index": f.source_index}
                   for f in manifest.frames],
        "triplets": [{"target": t.target_index, "sources": list(t.source_indices)}
                     for t in manifest.triplets],
        "pipeline": manifest.pipeline,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def manifest_from_json(text: str) -> DatasetManifest:
    doc = json.loads(text)
    ki = doc["intrinsics"]
    bi = doc["bounds"]
    manifest = DatasetManifest(
        frames=[FrameRecord(f["index"], f["timestamp"], f["image_path"],
                            f["lat"], f["lon"], f["source_index"])
                for f in doc["frames"]],
        triplets=[TrainingTriplet(t["target"], tuple(t["sources"]))
                  for t in doc["triplets"]],
        intrinsics=CameraIntrinsics(ki["fx"], ki["fy"], ki["cx"], ki["cy"],
                                    ki["width"], ki["height"]),
        bounds=GeoBounds(bi["lat_min"], bi["lat_max"], bi["lon_min"], bi["lon_max"]),
        width=doc["image_size"]["width"],
        height=doc["image_size"]["height"],
        scheme=doc["scheme"],
        pipeline=doc.get("pipeline", {}),
    )
    manifest.validate()
    return manifest


def save_manifest(manifest: DatasetManifest, dataset_dir) -> None:
    Path(dataset_dir, MANIFEST_NAME).write_text(manifest_to_json(manifest), encoding="utf-8")


def load_manifest(dataset_dir) -> DatasetManifest:
    path = Path(dataset_dir, MANIFEST_NAME)
    if not path.is_file():
        raise DatasetError(f"no manifest at {path}")
    return manifest_from_json(path.read_text(encoding="utf-8"))


def read_timestamps_csv(path) -> list:
    """``index,timestamp_s`` rows (header optional) -> list of timestamps."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append((int(row[0]), float(row[1])))
            except ValueError:
                if lineno == 1:
                    continue
                raise ValidationError(f"{path}:{lineno}: bad timestamp row {row!r}") from None
    rows.sort(key=lambda r: r[0])
    ts = [t for _, t in rows]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValidationError(f"{path}: timestamps must be strictly increasing")
    return ts


def write_timestamps_csv(path, timestamps) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "timestamp_s"])
        for i, t in enumerate(timestamps):
            writer.writerow([i, repr(float(t))])


def sample_frames(input_timestamps, target_interval: float) -> list:
    """Greedy temporal subsampling: keep a frame once ``target_interval``
    seconds have elapsed since the last kept one."""
    if target_interval <= 0:
        raise ValidationError("target_interval must be positive")
    selected = []
    last = None
    for i, t in enumerate(input_timestamps):
        if last is None or t >= last + target_interval:
            selected.append(i)
            last = t
    return selected


def _read_rgb(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except FileNotFoundError:
        raise DatasetError(f"missing frame image {path}") from None
    except OSError as exc:
        raise DatasetError(f"corrupt frame image {path}: {exc}") from None


def assemble_dataset(input_dir, out_dir, intrinsics: CameraIntrinsics, *,
                     sample_interval: float = 0.5, match_tolerance: float = 0.5,
                     bounds_margin: float = 0.05, bounds: GeoBounds = None) -> DatasetManifest:
    """Build a geotagged RGBA dataset from raw frames + logs.

    ``input_dir`` must hold ``frames/%06d.png`` (RGB), ``timestamps.csv``
    and ``locations.csv``.  Frames are subsampled, matched to fixes
    (unmatched ones dropped), alpha-encoded, re-indexed contiguously, and
    written under ``out_dir``.  Raises when nothing matches.

    Pass ``bounds`` to encode against an existing dataset's normalization
    (e.g. evaluation frames against training bounds) instead of computing
    fresh bounds from this log.
    """
    input_dir = Path(input_dir)
    out_dir = Path(out_dir)
    timestamps = read_timestamps_csv(input_dir / "timestamps.csv")
    fixes = parse_location_log(input_dir / "locations.csv")

    selected = sample_frames(timestamps, sample_interval)
    sel_ts = [timestamps[i] for i in selected]
    matches = match_frames_to_fixes(sel_ts, fixes, match_tolerance)
    if not matches:
        raise DatasetError("no frames matched a location fix within tolerance")
    if bounds is None:
        bounds = compute_bounds(fixes, bounds_margin)

    frames_out = out_dir / "frames"
    frames_out.mkdir(parents=True, exist_ok=True)
    records = []
    for new_index, (sel_pos, fix_idx) in enumerate(matches):
        src_index = selected[sel_pos]
        fix = fixes[fix_idx]
        rgb = _read_rgb(input_dir / "frames" / f"{src_index:06d}.png")
        if rgb.shape[:2] != (intrinsics.height, intrinsics.width):
            raise ValidationError(
                f"frame {src_index:06d}.png is {rgb.shape[1]}x{rgb.shape[0]}, "
                f"config says {intrinsics.width}x{intrinsics.height}")
        alpha = encode_location_alpha(fix.lat, fix.lon, bounds,
                                      intrinsics.width, intrinsics.height)
        rgba = np.dstack([rgb, alpha])
        rel_path = f"frames/{new_index:06d}.png"
        Image.fromarray(rgba, "RGBA").save(out_dir / rel_path)
        records.append(FrameRecord(new_index, timestamps[src_index], rel_path,
                                   fix.lat, fix.lon, src_index))

    write_timestamps_csv(out_dir / "timestamps.csv", [r.timestamp for r in records])
    manifest = DatasetManifest(
        frames=records, triplets=[], intrinsics=intrinsics, bounds=bounds,
        width=intrinsics.width, height=intrinsics.height,
        pipeline={"sample_interval": sample_interval,
                  "match_tolerance": match_tolerance,
                  "bounds_margin": bounds_margin})
    save_manifest(manifest, out_dir)
    return manifest


def build_triplets(manifest: DatasetManifest, max_gap: float = 0.75) -> list:
    """One (t-1, t, t+1) triplet per interior frame whose neighbors lie
    within ``max_gap`` seconds; stride 1.  Fewer than 3 frames -> []."""
    ts = [f.timestamp for f in manifest.frames]
    triplets = []
    for i in range(1, len(ts) - 1):
        if ts[i] - ts[i - 1] <= max_gap and ts[i + 1] - ts[i] <= max_gap:
            triplets.append(TrainingTriplet(i, (i - 1, i + 1)))
    return triplets


def load_frame(dataset_dir, manifest: DatasetManifest, index: int,
               geotag_enabled: bool = True) -> np.ndarray:
    """One frame as a (4,H,W) float64 tensor in [0,1].

    With geotags disabled the alpha channel is replaced by a constant 0.5
    plane, keeping the architecture and parameter count identical for the
    with/without-location experiment.
    """
    rec = manifest.frames[index]
    path = Path(dataset_dir, rec.image_path)
    try:
        with Image.open(path) as img:
            rgba = np.asarray(img.convert("RGBA"))
    except FileNotFoundError:
        raise DatasetError(f"frame {index}: missing file {path}") from None
    except OSError as exc:
        raise DatasetError(f"frame {index}: corrupt file {path}: {exc}") from None
    tensor = rgba.astype(np.float64).transpose(2, 0, 1) / 255.0
    if not geotag_enabled:
        tensor[3] = 0.5
    return tensor


def load_triplet(dataset_dir, manifest: DatasetManifest, triplet: TrainingTriplet,
                 geotag_enabled: bool = True):
    """Returns (prev, target, next), each (4,H,W) float64 in [0,1]."""
    prev_i, next_i = triplet.source_indices
    return (load_frame(dataset_dir, manifest, prev_i, geotag_enabled),
            load_frame(dataset_dir, manifest, triplet.target_index, geotag_enabled),
            load_frame(dataset_dir, manifest, next_i, geotag_enabled))
