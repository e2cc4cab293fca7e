import numpy as np
import pytest

from geodepth import autodiff as ad
from geodepth.geometry import CameraIntrinsics, Pose, inverse_warp


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Trigger numba compilation once so individual tests time pure compute."""
    K = CameraIntrinsics(10.0, 10.0, 4.0, 3.0, 8, 6)
    src = np.random.default_rng(0).random((3, 6, 8))
    depth = ad.Tensor(np.full((6, 8), 2.0), requires_grad=True)
    warped, _ = inverse_warp(src, depth, Pose(np.zeros(3), np.array([0.1, 0, 0])), K)
    ad.tsum(warped).backward()
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
