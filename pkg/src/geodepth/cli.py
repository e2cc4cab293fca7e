"""Command-line entry point for the full pipeline.

Subcommands: synth, preprocess, train, infer, eval, ab.  All stages share
the flat ``key = value`` config format; every path argument is resolved
relative to ``--out`` unless absolute.  Exit codes: 0 success, 1 validation
error (bad flags, missing inputs, bad config), 2 runtime failure.
"""

import argparse
import json
import sys
import traceback
from pathlib import Path

from .ab_experiment import run_ab_experiment
from .config import intrinsics_from_config, load_config
from .dataset import build_triplets, load_manifest, save_manifest, assemble_dataset
from .errors import GeodepthError, ValidationError
from .inference import predict_dataset_depths
from .metrics import depth_metrics, mean_metrics
from .pfm import read_pfm, write_depth_png, write_pfm
from .synthetic import FAMILIES, write_synthetic_dataset
from .training import train


class _Parser(argparse.ArgumentParser):
    # spec'd exit code for bad flags is 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def _build_parser():
    parser = _Parser(prog="geodepth",
                     description="Self-supervised depth from geotagged image sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory; relative paths resolve against it")
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="config override (repeatable)")
        p.add_argument("--seed", type=int, default=None, help="master random seed")

    p = sub.add_parser("synth", help="render a synthetic geotagged sequence")
    common(p)
    p.add_argument("--frames", type=int, default=None, help="number of frames")
    p.add_argument("--family", choices=FAMILIES, default=None, help="scene family")

    p = sub.add_parser("preprocess", help="assemble a geotagged RGBA dataset")
    common(p)
    p.add_argument("--raw", required=True, help="raw input dir (frames/, timestamps.csv, locations.csv)")
    p.add_argument("--data", default="dataset", help="dataset dir to create")

    p = sub.add_parser("train", help="train depth and pose networks")
    common(p)
    p.add_argument("--data", required=True, help="preprocessed dataset dir")
    p.add_argument("--steps", type=int, default=None, help="training steps")
    p.add_argument("--geotag", choices=["on", "off"], default=None,
                   help="feed the alpha geotag (on) or the constant ablation plane (off)")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")

    p = sub.add_parser("infer", help="write depth maps for dataset frames")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="preprocessed dataset dir")
    p.add_argument("--frames", default="all", help='comma list of frame indices, or "all"')

    p = sub.add_parser("eval", help="score predicted depth against ground truth")
    common(p)
    p.add_argument("--pred", required=True, help="dir of predicted depth_%%06d.pfm")
    p.add_argument("--data", required=True, help="dataset dir (for the gt index join)")
    p.add_argument("--gt", required=True, help="dir of ground-truth depth_%%06d.pfm")

    p = sub.add_parser("ab", help="run the with/without-location experiment")
    common(p)
    return parser


def _resolve(out_dir: Path, value):
    p = Path(value)
    return p if p.is_absolute() else out_dir / p


def _load_cfg(args):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_path = _resolve(out_dir, args.config) if args.config else None
    cfg = load_config(config_path, args.overrides)
    if args.seed is not None:
        cfg["seed"] = int(args.seed)
    if getattr(args, "steps", None) is not None:
        cfg["steps"] = int(args.steps)
    if getattr(args, "frames", None) is not None and args.command == "synth":
        cfg["synth_frames"] = int(args.frames)
    if getattr(args, "family", None) is not None:
        cfg["synth_family"] = args.family
    if getattr(args, "geotag", None) is not None:
        cfg["geotag_enabled"] = args.geotag == "on"
    return out_dir, cfg


def _cmd_synth(args):
    out_dir, cfg = _load_cfg(args)
    write_synthetic_dataset(out_dir, seed=cfg["seed"], n_frames=cfg["synth_frames"],
                            family=cfg["synth_family"],
                            K=intrinsics_from_config(cfg), cfg=cfg)
    print(f"synth: wrote {cfg['synth_frames']} {cfg['synth_family']} frames to {out_dir}")
    return 0


def _cmd_preprocess(args):
    out_dir, cfg = _load_cfg(args)
    raw = _resolve(out_dir, args.raw)
    if not raw.is_dir():
        raise ValidationError(f"raw input directory not found: {raw}")
    data = _resolve(out_dir, args.data)
    manifest = assemble_dataset(raw, data, intrinsics_from_config(cfg),
                                sample_interval=cfg["sample_interval"],
                                match_tolerance=cfg["match_tolerance"],
                                bounds_margin=cfg["bounds_margin"])
    manifest.triplets = build_triplets(manifest, cfg["triplet_max_gap"])
    save_manifest(manifest, data)
    print(f"preprocess: {len(manifest.frames)} frames, "
          f"{len(manifest.triplets)} triplets -> {data}")
    return 0


def _cmd_train(args):
    out_dir, cfg = _load_cfg(args)
    data = _resolve(out_dir, args.data)
    if not data.is_dir():
        raise ValidationError(f"dataset directory not found: {data}")
    resume = _resolve(out_dir, args.resume) if args.resume else None
    if resume is not None and not resume.is_file():
        raise ValidationError(f"resume checkpoint not found: {resume}")
    state = train(data, out_dir, cfg, resume_from=resume)
    print(f"train: reached step {state.step}; checkpoint and loss log in {out_dir}")
    return 0


def _cmd_infer(args):
    out_dir, cfg = _load_cfg(args)
    ckpt = _resolve(out_dir, args.checkpoint)
    if not ckpt.is_file():
        raise ValidationError(f"checkpoint not found: {ckpt}")
    data = _resolve(out_dir, args.data)
    manifest = load_manifest(data)
    if args.frames == "all":
        indices = list(range(len(manifest.frames)))
    else:
        try:
            indices = [int(s) for s in args.frames.split(",") if s.strip()]
        except ValueError:
            raise ValidationError(f"--frames must be integers or 'all', got {args.frames!r}") from None
        bad = [i for i in indices if not 0 <= i < len(manifest.frames)]
        if bad:
            raise ValidationError(f"frame indices out of range: {bad}")
    preds, _ = predict_dataset_depths(ckpt, data, manifest, indices)
    for idx, depth in zip(indices, preds):
        write_pfm(out_dir / f"depth_{idx:06d}.pfm", depth)
        write_depth_png(out_dir / f"depth_{idx:06d}.png", depth)
    print(f"infer: wrote {len(indices)} depth maps to {out_dir}")
    return 0


def _cmd_eval(args):
    out_dir, _cfg = _load_cfg(args)
    pred_dir = _resolve(out_dir, args.pred)
    gt_dir = _resolve(out_dir, args.gt)
    data = _resolve(out_dir, args.data)
    manifest = load_manifest(data)
    per_frame = {}
    reports = []
    for idx in range(len(manifest.frames)):
        pred_path = pred_dir / f"depth_{idx:06d}.pfm"
        if not pred_path.is_file():
            continue
        src = manifest.frames[idx].source_index
        gt_path = gt_dir / f"depth_{src:06d}.pfm"
        if not gt_path.is_file():
            raise ValidationError(f"missing ground truth: {gt_path}")
        report = depth_metrics(read_pfm(pred_path), read_pfm(gt_path))
        per_frame[str(idx)] = report.to_dict()
        reports.append(report)
    if not reports:
        raise ValidationError(f"no predictions named depth_NNNNNN.pfm under {pred_dir}")
    doc = {"mean": mean_metrics(reports), "per_frame": per_frame,
           "n_frames": len(reports)}
    out_path = out_dir / "metrics.json"
    out_path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"eval: mean abs_rel {doc['mean']['abs_rel']:.4f} over "
          f"{len(reports)} frames -> {out_path}")
    return 0


def _cmd_ab(args):
    out_dir, cfg = _load_cfg(args)
    report = run_ab_experiment(cfg, out_dir)
    marker = "<=" if report["geotag_not_worse_abs_rel"] else ">"
    print(f"ab: geotag abs_rel {report['arms']['geotag']['mean']['abs_rel']:.4f} "
          f"{marker} nogeotag {report['arms']['nogeotag']['mean']['abs_rel']:.4f} "
          f"-> {out_dir / 'ab_report.json'}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "ab": _cmd_ab,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (GeodepthError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
