"""Depth/pose network contracts: shapes, init, determinism, checkpoints."""

import numpy as np
import pytest

from geodepth import autodiff as ad
from geodepth.errors import ValidationError
from geodepth.geometry import CameraIntrinsics
from geodepth.networks import (DepthNetConfig, PoseNetConfig, depth_net_apply,
                               depth_net_forward, disparity_to_depth,
                               init_depth_params, init_pose_params,
                               load_checkpoint, pose_net_forward,
                               save_checkpoint)

DCFG = DepthNetConfig()        # 4x(64x48), widths (16,32,64,128), 4 scales
PCFG = PoseNetConfig()


def test_config_validation():
    with pytest.raises(ValidationError):
        DepthNetConfig(enc_widths=(16,))
    with pytest.raises(ValidationError):
        DepthNetConfig(enc_widths=(16, -2))
    with pytest.raises(ValidationError):
        DepthNetConfig(num_scales=5)
    with pytest.raises(ValidationError):
        DepthNetConfig(width=60, height=48)  # not divisible by 16


class TestInit:
    def test_same_seed_bit_identical(self):
        a = init_depth_params(DCFG, 42)
        b = init_depth_params(DCFG, 42)
        assert a.keys() == b.keys()
        for k in a:
            assert np.array_equal(a[k], b[k])

    def test_different_seeds_differ(self):
        a = init_depth_params(DCFG, 1)
        b = init_depth_params(DCFG, 2)
        assert any(not np.array_equal(a[k], b[k]) for k in a)

    def test_pose_head_zero(self):
        p = init_pose_params(PCFG, 7)
        assert np.all(p["head.w"] == 0.0)
        assert np.all(p["head.b"] == 0.0)

    def test_fan_in_scaling(self):
        p = init_depth_params(DCFG, 0)
        w = p["enc0.w"]  # fan-in 4*9=36 -> bound 1/6
        assert np.abs(w).max() <= 1.0 / 6.0


class TestDepthNetForward:
    def test_pyramid_shapes(self, rng):
        frame = rng.random((4, 48, 64))
        pyramid = depth_net_forward(init_depth_params(DCFG, 0), frame, DCFG)
        assert [d.shape for d in pyramid] == [(48, 64), (24, 32), (12, 16), (6, 8)]

    def test_sigmoid_open_interval(self, rng):
        frame = rng.random((4, 48, 64))
        for d in depth_net_forward(init_depth_params(DCFG, 0), frame, DCFG):
            assert d.min() > 0.0 and d.max() < 1.0

    def test_deterministic(self, rng):
        frame = rng.random((4, 48, 64))
        params = init_depth_params(DCFG, 0)
        a = depth_net_forward(params, frame, DCFG)
        b = depth_net_forward(params, frame, DCFG)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ValidationError):
            depth_net_forward(init_depth_params(DCFG, 0), rng.random((4, 32, 32)), DCFG)

    def test_batched_matches_single(self, rng):
        params = init_depth_params(DCFG, 0)
        frames = rng.random((3, 4, 48, 64))
        batched = depth_net_apply(params, frames, DCFG)
        for i in range(3):
            single = depth_net_forward(params, frames[i], DCFG)
            for s, d in enumerate(single):
                np.testing.assert_allclose(batched[s][i, 0], d, atol=1e-12)


class TestPoseNetForward:
    def test_zero_init_gives_identity_pose(self, rng):
        params = init_pose_params(PCFG, 3)
        T = pose_net_forward(params, rng.random((4, 48, 64)), rng.random((4, 48, 64)), PCFG)
        assert np.all(ad.value(T.axis_angle) == 0.0)
        assert np.all(ad.value(T.translation) == 0.0)

    def test_output_scale_bounds(self, rng):
        params = init_pose_params(PCFG, 3)
        params["head.w"] = rng.uniform(-1, 1, params["head.w"].shape)
        params["head.b"] = rng.uniform(-1, 1, params["head.b"].shape)
        T = pose_net_forward(params, rng.random((4, 48, 64)), rng.random((4, 48, 64)), PCFG)
        # GAP features of [0,1] ELU activations are bounded; 0.01 scale keeps
        # the pose small and finite
        assert np.all(np.isfinite(ad.value(T.axis_angle)))
        assert np.linalg.norm(ad.value(T.translation)) < 10.0

    def test_deterministic(self, rng):
        params = init_pose_params(PCFG, 3)
        a = rng.random((4, 48, 64))
        b = rng.random((4, 48, 64))
        t1 = pose_net_forward(params, a, b, PCFG)
        t2 = pose_net_forward(params, a, b, PCFG)
        assert np.array_equal(ad.value(t1.translation), ad.value(t2.translation))

    def test_frame_size_mismatch(self, rng):
        with pytest.raises(ValidationError):
            pose_net_forward(init_pose_params(PCFG, 0), rng.random((4, 48, 64)),
                             rng.random((4, 24, 32)), PCFG)


class TestDisparityToDepth:
    def test_limits(self):
        assert disparity_to_depth(1.0, 0.1, 100.0) == pytest.approx(0.1)
        assert disparity_to_depth(0.0, 0.1, 100.0) == pytest.approx(100.0)

    def test_midpoint_hand_value(self):
        # disp = 0.01 + 9.99 * 0.5 = 5.005 -> depth = 0.19980...
        assert disparity_to_depth(0.5, 0.1, 100.0) == pytest.approx(1.0 / 5.005)
        assert abs(disparity_to_depth(0.5, 0.1, 100.0) - 0.1998) < 1e-4

    def test_monotone_and_in_range(self, rng):
        sig = np.sort(rng.uniform(1e-4, 1 - 1e-4, 100))
        depth = disparity_to_depth(sig, 0.1, 100.0)
        assert np.all(np.diff(depth) < 0)
        assert depth.min() >= 0.1 and depth.max() <= 100.0

    def test_bad_range(self):
        with pytest.raises(ValidationError):
            disparity_to_depth(0.5, 1.0, 0.5)


class TestGradientFlow:
    def test_every_parameter_receives_gradient(self, rng):
        """No dead heads: on a textured moving batch with a non-degenerate
        pose head, every parameter array gets a nonzero gradient."""
        from geodepth.objective import LossWeights, compute_total_loss
        from geodepth.synthetic import generate_synthetic_sequence
        K = CameraIntrinsics(20.0, 20.0, 8.0, 6.0, 16, 12)
        dcfg = DepthNetConfig(enc_widths=(8, 16), num_scales=2, width=16, height=12)
        pcfg = PoseNetConfig(conv_widths=(8, 16))
        dp = init_depth_params(dcfg, 1)
        pp = init_pose_params(pcfg, 1)
        pp["head.w"] = rng.uniform(-0.5, 0.5, pp["head.w"].shape)
        frames, _ = generate_synthetic_sequence(5, 3, "two_plane", K, step_dx=0.15)
        rgba = [np.concatenate([f, np.full((1, 12, 16), 0.5)]) for f in frames]
        batch = (rgba[0][None], rgba[1][None], rgba[2][None])
        td = {k: ad.Tensor(v, True) for k, v in dp.items()}
        tp = {k: ad.Tensor(v, True) for k, v in pp.items()}
        loss, _, _ = compute_total_loss(batch, td, tp, K, LossWeights(scales=2),
                                        dcfg, pcfg)
        loss.backward()
        for name, t in {**td, **tp}.items():
            assert t.grad is not None and np.any(t.grad != 0.0), f"dead: {name}"


class TestCheckpoint:
    def test_round_trip_bit_exact_forward(self, tmp_path, rng):
        params = init_depth_params(DCFG, 9)
        meta = {"step": 12, "seed": 9, "geotag_enabled": True}
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, params, meta)
        loaded, got_meta = load_checkpoint(path)
        assert got_meta == meta
        frame = rng.random((4, 48, 64))
        a = depth_net_forward(params, frame, DCFG)
        b = depth_net_forward(loaded, frame, DCFG)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)
