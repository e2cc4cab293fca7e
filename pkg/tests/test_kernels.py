"""Backend equivalence and gradient checks for the hot kernels."""

import numpy as np
import pytest

from geodepth.kernels import numpy_backend as npk

try:
    from geodepth.kernels import numba_backend as nbk
    BACKENDS = [npk, nbk]
except ImportError:  # pragma: no cover
    nbk = None
    BACKENDS = [npk]

CONV_CASES = [(1, 1), (2, 1), (1, 0)]


@pytest.mark.skipif(nbk is None, reason="numba unavailable")
@pytest.mark.parametrize("stride,pad", CONV_CASES)
def test_conv_backends_agree(rng, stride, pad):
    x = rng.standard_normal((3, 5, 12, 16))
    w = rng.standard_normal((7, 5, 3, 3))
    b = rng.standard_normal(7)
    y_np = npk.conv2d_forward(x, w, b, stride, pad)
    y_nb = nbk.conv2d_forward(x, w, b, stride, pad)
    np.testing.assert_allclose(y_np, y_nb, atol=1e-12)
    dy = rng.standard_normal(y_np.shape)
    np.testing.assert_allclose(
        npk.conv2d_input_grad(dy, w, stride, pad, 12, 16),
        nbk.conv2d_input_grad(dy, w, stride, pad, 12, 16), atol=1e-12)
    _, cols_np = npk.conv2d_forward(x, w, b, stride, pad, return_cols=True)
    _, cols_nb = nbk.conv2d_forward(x, w, b, stride, pad, return_cols=True)
    np.testing.assert_allclose(
        npk.conv2d_weight_grad(dy, cols_np, 5, 3, 3),
        nbk.conv2d_weight_grad(dy, cols_nb, 5, 3, 3), atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.NAME)
@pytest.mark.parametrize("stride,pad", CONV_CASES)
def test_conv_grads_match_finite_differences(rng, backend, stride, pad):
    x = rng.standard_normal((2, 3, 10, 12))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    y, cols = backend.conv2d_forward(x, w, b, stride, pad, return_cols=True)
    dy = rng.standard_normal(y.shape)
    dx = backend.conv2d_input_grad(dy, w, stride, pad, 10, 12)
    dw = backend.conv2d_weight_grad(dy, cols, 3, 3, 3)
    eps = 1e-6

    def loss(xx, ww):
        return float((backend.conv2d_forward(xx, ww, b, stride, pad) * dy).sum())

    for idx in [(0, 0, 0, 0), (1, 2, 5, 7), (0, 1, 9, 11)]:
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        fd = (loss(xp, w) - loss(xm, w)) / (2 * eps)
        assert abs(fd - dx[idx]) < 1e-6
    for idx in [(0, 0, 0, 0), (3, 2, 1, 2)]:
        wp, wm = w.copy(), w.copy()
        wp[idx] += eps
        wm[idx] -= eps
        fd = (loss(x, wp) - loss(x, wm)) / (2 * eps)
        assert abs(fd - dw[idx]) < 1e-6


@pytest.mark.skipif(nbk is None, reason="numba unavailable")
def test_bilinear_backends_agree(rng):
    img = rng.random((2, 3, 10, 14))
    u = rng.uniform(-2.0, 15.0, (2, 8, 9))
    v = rng.uniform(-2.0, 11.0, (2, 8, 9))
    np.testing.assert_allclose(npk.bilinear_forward(img, u, v),
                               nbk.bilinear_forward(img, u, v), atol=1e-13)
    dout = rng.standard_normal((2, 3, 8, 9))
    g_np = npk.bilinear_backward(dout, img, u, v, True)
    g_nb = nbk.bilinear_backward(dout, img, u, v, True)
    for a, b in zip(g_np, g_nb):
        np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.NAME)
def test_bilinear_grads_match_finite_differences(rng, backend):
    img = rng.random((1, 2, 9, 11))
    # keep probes off integer coordinates where the sampler is kinked
    u = rng.uniform(0.1, 9.4, (1, 6, 7))
    u += (np.abs(u - np.round(u)) < 0.05) * 0.2
    v = rng.uniform(0.1, 7.4, (1, 6, 7))
    v += (np.abs(v - np.round(v)) < 0.05) * 0.2
    dout = rng.standard_normal((1, 2, 6, 7))
    dimg, du, dv = backend.bilinear_backward(dout, img, u, v, True)
    eps = 1e-6

    def loss(uu, vv, im):
        return float((backend.bilinear_forward(im, uu, vv) * dout).sum())

    for idx in [(0, 0, 0), (0, 3, 4), (0, 5, 6)]:
        up, um = u.copy(), u.copy()
        up[idx] += eps
        um[idx] -= eps
        fd = (loss(up, v, img) - loss(um, v, img)) / (2 * eps)
        assert abs(fd - du[idx]) < 1e-6
        vp, vm = v.copy(), v.copy()
        vp[idx] += eps
        vm[idx] -= eps
        fd = (loss(u, vp, img) - loss(u, vm, img)) / (2 * eps)
        assert abs(fd - dv[idx]) < 1e-6
    for idx in [(0, 0, 2, 3), (0, 1, 8, 10)]:
        ip, im_ = img.copy(), img.copy()
        ip[idx] += eps
        im_[idx] -= eps
        fd = (loss(u, v, ip) - loss(u, v, im_)) / (2 * eps)
        assert abs(fd - dimg[idx]) < 1e-6


@pytest.mark.skipif(nbk is None, reason="numba unavailable")
def test_box_sum_backends_agree(rng):
    x = rng.standard_normal((2, 3, 7, 9))
    np.testing.assert_allclose(npk.box_sum3(x), nbk.box_sum3(x), atol=1e-13)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.NAME)
def test_box_sum_matches_direct_window_sum(rng, backend):
    x = rng.standard_normal((5, 6))
    got = backend.box_sum3(x)
    for y in range(5):
        for xx in range(6):
            want = x[max(0, y - 1):y + 2, max(0, xx - 1):xx + 2].sum()
            assert abs(got[y, xx] - want) < 1e-12


def test_backend_selection_reports_name():
    from geodepth.kernels import backend_name
    assert backend_name() in ("numpy", "numba")
