"""Adam step semantics, the training loop, logging, resume, determinism."""

import numpy as np
import pytest

from geodepth.config import DEFAULTS, intrinsics_from_config
from geodepth.dataset import assemble_dataset, build_triplets, save_manifest
from geodepth.errors import TrainingDiverged, ValidationError
from geodepth.geometry import CameraIntrinsics
from geodepth.networks import DepthNetConfig, PoseNetConfig, load_checkpoint
from geodepth.objective import LossWeights
from geodepth.synthetic import write_synthetic_dataset
from geodepth.training import (LOG_HEADER, init_training_state, train,
                               training_step)

K = CameraIntrinsics(20.0, 20.0, 8.0, 6.0, 16, 12)
DCFG = DepthNetConfig(enc_widths=(8, 16), num_scales=2, width=16, height=12)
PCFG = PoseNetConfig(conv_widths=(8, 16))
W2 = LossWeights(scales=2)


def tiny_cfg(**over):
    cfg = dict(DEFAULTS)
    cfg.update(width=16, height=12, fx=20.0, fy=20.0, cx=8.0, cy=6.0,
               enc_widths=(8, 16), pose_widths=(8, 16), num_scales=2,
               synth_frames=8, steps=5, batch_size=2, checkpoint_every=0,
               seed=3)
    cfg.update(over)
    return cfg


def tiny_batch(seed=0):
    from geodepth.synthetic import generate_synthetic_sequence
    frames, _ = generate_synthetic_sequence(seed, 3, "two_plane", K, step_dx=0.15)
    rgba = [np.concatenate([f, np.full((1, 12, 16), 0.5)]) for f in frames]
    return rgba[0][None], rgba[1][None], rgba[2][None]


def make_dataset(tmp_path, cfg, n_frames=10, family="plane"):
    raw = tmp_path / "raw"
    ds = tmp_path / "ds"
    k = intrinsics_from_config(cfg)
    write_synthetic_dataset(raw, seed=cfg["seed"], n_frames=n_frames,
                            family=family, K=k, cfg=cfg)
    manifest = assemble_dataset(raw, ds, k,
                                sample_interval=cfg["sample_interval"],
                                match_tolerance=cfg["match_tolerance"],
                                bounds_margin=cfg["bounds_margin"])
    manifest.triplets = build_triplets(manifest, cfg["triplet_max_gap"])
    save_manifest(manifest, ds)
    return ds


class TestTrainingStep:
    def test_deterministic(self):
        batch = tiny_batch()
        s1 = init_training_state(DCFG, PCFG, 5)
        s2 = init_training_state(DCFG, PCFG, 5)
        n1, r1 = training_step(s1, batch, K, W2, DCFG, PCFG)
        n2, r2 = training_step(s2, batch, K, W2, DCFG, PCFG)
        assert r1.total == r2.total
        for k in n1.params:
            assert np.array_equal(n1.params[k], n2.params[k])

    def test_zero_lr_leaves_params_unchanged(self):
        batch = tiny_batch()
        state = init_training_state(DCFG, PCFG, 5)
        new, _ = training_step(state, batch, K, W2, DCFG, PCFG, lr=0.0)
        for k in state.params:
            assert np.array_equal(new.params[k], state.params[k])
        assert new.step == 1

    def test_step_changes_params(self):
        batch = tiny_batch()
        state = init_training_state(DCFG, PCFG, 5)
        new, _ = training_step(state, batch, K, W2, DCFG, PCFG, lr=1e-3)
        assert any(not np.array_equal(new.params[k], state.params[k])
                   for k in state.params)

    def test_nonfinite_loss_aborts(self):
        batch = tuple(np.full((1, 4, 12, 16), np.nan) for _ in range(3))
        state = init_training_state(DCFG, PCFG, 5)
        with pytest.raises(TrainingDiverged):
            training_step(state, batch, K, W2, DCFG, PCFG)

    def test_loss_decreases_over_50_steps(self):
        """Monotone trend (not per-step) on a fixed small batch."""
        batch = tiny_batch(seed=4)
        state = init_training_state(DCFG, PCFG, 5)
        totals = []
        for _ in range(50):
            state, report = training_step(state, batch, K, W2, DCFG, PCFG, lr=1e-3)
            totals.append(report.total)
        assert np.mean(totals[-10:]) < np.mean(totals[:10])


class TestTrainLoop:
    def test_one_triplet_ten_rows(self, tmp_path):
        cfg = tiny_cfg(steps=10, synth_frames=3, batch_size=4)
        ds = make_dataset(tmp_path, cfg, n_frames=3)
        train(ds, tmp_path / "run", cfg)
        rows = (tmp_path / "run" / "loss_log.csv").read_text().splitlines()
        assert rows[0] == ",".join(LOG_HEADER)
        assert len(rows) == 11
        assert [int(r.split(",")[0]) for r in rows[1:]] == list(range(1, 11))

    def test_checkpoint_metadata(self, tmp_path):
        cfg = tiny_cfg(steps=3, geotag_enabled=False)
        ds = make_dataset(tmp_path, cfg)
        train(ds, tmp_path / "run", cfg)
        _, meta = load_checkpoint(tmp_path / "run" / "checkpoint.npz")
        assert meta["geotag_enabled"] is False
        assert meta["step"] == 3
        assert meta["seed"] == cfg["seed"]

    def test_periodic_checkpoints(self, tmp_path):
        cfg = tiny_cfg(steps=6, checkpoint_every=2)
        ds = make_dataset(tmp_path, cfg)
        train(ds, tmp_path / "run", cfg)
        assert (tmp_path / "run" / "ckpt_000002.npz").is_file()
        assert (tmp_path / "run" / "ckpt_000004.npz").is_file()
        assert (tmp_path / "run" / "checkpoint.npz").is_file()

    def test_resume_reproduces_trajectory(self, tmp_path):
        cfg = tiny_cfg(steps=8)
        ds = make_dataset(tmp_path, cfg)
        train(ds, tmp_path / "full", cfg)

        cfg_half = dict(cfg, steps=4)
        train(ds, tmp_path / "half", cfg_half)
        train(ds, tmp_path / "resumed", cfg,
              resume_from=tmp_path / "half" / "checkpoint.npz")

        full = (tmp_path / "full" / "loss_log.csv").read_text().splitlines()
        half = (tmp_path / "half" / "loss_log.csv").read_text().splitlines()
        resumed = (tmp_path / "resumed" / "loss_log.csv").read_text().splitlines()
        assert half[1:] == full[1:5]
        assert resumed[1:] == full[5:]

        p_full, _ = load_checkpoint(tmp_path / "full" / "checkpoint.npz")
        p_res, _ = load_checkpoint(tmp_path / "resumed" / "checkpoint.npz")
        for k in p_full:
            assert np.array_equal(p_full[k], p_res[k])

    def test_rerun_byte_identical_log(self, tmp_path):
        cfg = tiny_cfg(steps=5)
        ds = make_dataset(tmp_path, cfg)
        train(ds, tmp_path / "a", cfg)
        train(ds, tmp_path / "b", cfg)
        assert ((tmp_path / "a" / "loss_log.csv").read_bytes()
                == (tmp_path / "b" / "loss_log.csv").read_bytes())

    def test_geotag_flag_changes_only_alpha_conditioning(self, tmp_path):
        cfg = tiny_cfg(steps=2)
        ds = make_dataset(tmp_path, cfg)
        train(ds, tmp_path / "on", dict(cfg, geotag_enabled=True))
        train(ds, tmp_path / "off", dict(cfg, geotag_enabled=False))
        _, meta_on = load_checkpoint(tmp_path / "on" / "checkpoint.npz")
        _, meta_off = load_checkpoint(tmp_path / "off" / "checkpoint.npz")
        assert meta_on["geotag_enabled"] and not meta_off["geotag_enabled"]

    def test_empty_triplets_is_error(self, tmp_path):
        cfg = tiny_cfg(synth_frames=3)
        ds = make_dataset(tmp_path, cfg, n_frames=3)
        import json
        mpath = ds / "manifest.json"
        doc = json.loads(mpath.read_text())
        doc["triplets"] = []
        doc["frames"] = doc["frames"][:2]
        mpath.write_text(json.dumps(doc))
        with pytest.raises(ValidationError):
            train(ds, tmp_path / "run", cfg)
