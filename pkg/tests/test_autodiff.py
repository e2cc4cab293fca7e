"""Reverse-mode engine checks: every op against central finite differences."""

import numpy as np
import pytest

from geodepth import autodiff as ad


def fd_grad(f, x, eps=1e-6):
    """Dense central-difference gradient of scalar f over array x."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
        it.iternext()
    return g


def check(f, x, atol=1e-6):
    t = ad.Tensor(x, requires_grad=True)
    out = f(t)
    assert ad.is_tensor(out)
    out.backward()
    num = fd_grad(lambda a: float(ad.value(f(ad.Tensor(a)))), x)
    np.testing.assert_allclose(t.grad, num, atol=atol)


def test_arithmetic_and_broadcasting(rng):
    x = rng.standard_normal((3, 4))
    c = rng.standard_normal((1, 4))
    check(lambda t: ad.tsum(t * c + t / (2.0 + ad.absolute(t)) - 0.5 * t), x)


def test_elementwise_functions(rng):
    x = rng.standard_normal((2, 5)) * 0.8
    check(lambda t: ad.tsum(ad.sin(t) + ad.cos(t) * ad.exp(0.3 * t)), x)
    check(lambda t: ad.tsum(ad.sigmoid(t) + ad.elu(t - 0.2)), x)
    xpos = np.abs(x) + 0.5
    check(lambda t: ad.tsum(ad.sqrt(t) + ad.log(t)), xpos)
    check(lambda t: ad.tsum(t ** 3), x)


def test_min_max_where(rng):
    x = rng.standard_normal((4, 4))
    other = rng.standard_normal((4, 4))
    cond = other > 0
    check(lambda t: ad.tsum(ad.maximum(t, other) + ad.minimum(t * 2.0, other)), x)
    check(lambda t: ad.tsum(ad.where(cond, t, other * 0.5)), x)


def test_reductions_and_reshape(rng):
    x = rng.standard_normal((2, 3, 4))
    check(lambda t: ad.tsum(ad.tmean(t, axis=(1, 2), keepdims=True) * 3.0), x)
    check(lambda t: ad.tsum(ad.reshape(t, (6, 4))[1:4, ::2]), x)
    check(lambda t: ad.tsum(ad.amin(t, axis=0) * 2.0), x)


def test_concat_stack_matmul(rng):
    x = rng.standard_normal((3, 2))
    w = rng.standard_normal((2, 5))
    check(lambda t: ad.tsum(ad.concat([t, t * 2.0], axis=1)), x)
    check(lambda t: ad.tsum(ad.stack([t, t * t], axis=0)), x)
    check(lambda t: ad.tsum(ad.matmul(t, w)), x)


def test_structured_ops(rng):
    x = rng.standard_normal((1, 2, 4, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    check(lambda t: ad.tsum(ad.conv2d(t, w, b, stride=1, pad=1) ** 2), x, atol=1e-5)
    check(lambda t: ad.tsum(ad.upsample_nearest(t, 2) * 0.3), x)
    check(lambda t: ad.tsum(ad.box_sum3(t) ** 2), x, atol=1e-5)


def test_bilinear_sample_op(rng):
    img = rng.random((1, 2, 6, 8))
    u = rng.uniform(0.2, 6.7, (1, 5, 5))
    v = rng.uniform(0.2, 4.7, (1, 5, 5))
    u += (np.abs(u - np.round(u)) < 0.05) * 0.2
    v += (np.abs(v - np.round(v)) < 0.05) * 0.2
    check(lambda t: ad.tsum(ad.bilinear_sample(t, u, v)), img, atol=1e-5)
    check(lambda t: ad.tsum(ad.bilinear_sample(img, t, v) ** 2), u, atol=1e-5)


def test_grad_accumulates_across_reuse(rng):
    x = rng.standard_normal((3,))
    t = ad.Tensor(x, requires_grad=True)
    out = ad.tsum(t * t + t)
    out.backward()
    np.testing.assert_allclose(t.grad, 2 * x + 1, atol=1e-12)


def test_plain_arrays_pass_through():
    a = np.arange(6.0).reshape(2, 3)
    assert not ad.is_tensor(ad.sin(a))
    assert not ad.is_tensor(ad.tsum(a))
    assert not ad.is_tensor(ad.conv2d(a.reshape(1, 1, 2, 3),
                                      np.ones((1, 1, 3, 3)), np.zeros(1)))


def test_no_grad_without_requires_grad(rng):
    t = ad.Tensor(rng.standard_normal((2, 2)))
    out = ad.tsum(t * 3.0)
    assert not out.requires_grad


def test_numpy_does_not_swallow_tensors(rng):
    arr = rng.standard_normal((2, 2))
    t = ad.Tensor(arr, requires_grad=True)
    out = ad.tsum(arr * t)  # ndarray.__mul__ must defer to Tensor.__rmul__
    assert ad.is_tensor(out)
    out.backward()
    np.testing.assert_allclose(t.grad, arr)
