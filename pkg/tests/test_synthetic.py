"""Synthetic scene generation and its cross-validation against the warper."""

import numpy as np
import pytest

from geodepth import autodiff as ad
from geodepth.config import DEFAULTS, intrinsics_from_config
from geodepth.errors import ValidationError
from geodepth.geometry import CameraIntrinsics, inverse_warp
from geodepth.synthetic import generate_synthetic_sequence, write_synthetic_dataset

K = intrinsics_from_config(DEFAULTS)


class TestGenerate:
    def test_plane_family_ground_truth(self):
        frames, scene = generate_synthetic_sequence(3, 5, "plane", K,
                                                    plane_depth=5.0, step_dx=0.1)
        assert len(frames) == 5
        for d in scene.depth_maps:
            assert np.all(d == 5.0)
        np.testing.assert_allclose(np.diff(scene.cam_positions[:, 0]), 0.1)
        assert np.all(scene.cam_positions[:, 1:] == 0.0)

    def test_frames_in_range(self):
        frames, _ = generate_synthetic_sequence(3, 4, "two_plane", K)
        for f in frames:
            assert f.shape == (3, 48, 64)
            assert f.min() >= 0.0 and f.max() <= 1.0

    def test_two_plane_depths(self):
        _, scene = generate_synthetic_sequence(5, 4, "two_plane", K,
                                               near_depth=4.0, far_depth=8.0)
        vals = np.unique(scene.depth_maps[0])
        assert set(vals) == {4.0, 8.0}

    def test_same_seed_bit_identical(self):
        f1, s1 = generate_synthetic_sequence(9, 4, "two_plane", K)
        f2, s2 = generate_synthetic_sequence(9, 4, "two_plane", K)
        for a, b in zip(f1, f2):
            assert np.array_equal(a, b)
        for a, b in zip(s1.depth_maps, s2.depth_maps):
            assert np.array_equal(a, b)

    def test_unknown_family(self):
        with pytest.raises(ValidationError):
            generate_synthetic_sequence(1, 4, "sphere", K)

    def test_too_few_frames(self):
        with pytest.raises(ValidationError):
            generate_synthetic_sequence(1, 2, "plane", K)

    def test_location_rule_applied(self):
        rule = lambda i: (30.0 + 0.01 * i, 31.0)
        _, scene = generate_synthetic_sequence(1, 4, "plane", K, location_rule=rule)
        assert scene.fixes[2] == (30.02, 31.0)


class TestRendererWarperCrossValidation:
    """The renderer is analytic (ray-plane intersection); warping a rendered
    source with ground-truth depth and pose must reproduce the target up to
    interpolation and disocclusion."""

    @pytest.mark.parametrize("family,seed", [("plane", 3), ("plane", 17),
                                             ("two_plane", 3), ("two_plane", 17)])
    def test_every_adjacent_pair(self, family, seed):
        step = 2.0 * 4.0 / K.fx if family == "two_plane" else 0.1
        frames, scene = generate_synthetic_sequence(seed, 5, family, K, step_dx=step)
        for t in range(1, 5):
            pose = scene.relative_pose(t, t - 1)
            warped, mask = inverse_warp(frames[t - 1], scene.depth_maps[t], pose, K)
            err = np.abs(ad.value(warped) - frames[t])
            assert err.mean() < 0.02, (family, seed, t, err.mean())

    def test_mask_matches_reference_oracle(self, rng):
        from oracles import inverse_warp_reference, rodrigues_matrix
        frames, scene = generate_synthetic_sequence(7, 3, "two_plane", K)
        pose = scene.relative_pose(1, 0)
        _, mask = inverse_warp(frames[0], scene.depth_maps[1], pose, K)
        _, ref_mask = inverse_warp_reference(frames[0], scene.depth_maps[1], K,
                                             rodrigues_matrix(pose.axis_angle),
                                             pose.translation)
        np.testing.assert_array_equal(mask, ref_mask)


class TestWriteSyntheticDataset:
    def test_layout(self, tmp_path):
        cfg = dict(DEFAULTS)
        scene = write_synthetic_dataset(tmp_path, 5, 6, "plane", K, cfg)
        for i in range(6):
            assert (tmp_path / "frames" / f"{i:06d}.png").is_file()
            assert (tmp_path / "gt" / f"depth_{i:06d}.pfm").is_file()
        assert (tmp_path / "timestamps.csv").is_file()
        assert (tmp_path / "locations.csv").is_file()
        assert (tmp_path / "gt" / "scene.json").is_file()
        assert len(scene.fixes) == 6

    def test_gt_pfm_round_trip(self, tmp_path):
        from geodepth.pfm import read_pfm
        cfg = dict(DEFAULTS)
        scene = write_synthetic_dataset(tmp_path, 5, 4, "two_plane", K, cfg)
        got = read_pfm(tmp_path / "gt" / "depth_000002.pfm")
        np.testing.assert_allclose(got, scene.depth_maps[2], rtol=1e-6)

    def test_deterministic_outputs(self, tmp_path):
        cfg = dict(DEFAULTS)
        write_synthetic_dataset(tmp_path / "a", 5, 4, "plane", K, cfg)
        write_synthetic_dataset(tmp_path / "b", 5, 4, "plane", K, cfg)
        for name in ("timestamps.csv", "locations.csv", "gt/scene.json",
                     "frames/000002.png", "gt/depth_000002.pfm"):
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes()), name
