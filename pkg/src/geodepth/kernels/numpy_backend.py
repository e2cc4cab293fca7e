"""Pure-numpy kernel implementations (fallback backend).

Convolutions are expressed as nine shifted BLAS matmuls, bilinear sampling
as flat gathers.  The scatter in ``bilinear_backward`` uses ``np.add.at``,
which is the slow spot of this backend; the numba backend replaces it with
a compiled loop.
"""

import numpy as np

NAME = "numpy"


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _im2col(xp, kh, kw, stride, ho, wo):
    """(N,Ci,Hp,Wp) padded input -> (Ci*kh*kw, N*Ho*Wo) patch matrix."""
    n, ci, _, _ = xp.shape
    cols = np.empty((ci, kh, kw, n, ho, wo))
    for ky in range(kh):
        for kx in range(kw):
            xs = xp[:, :, ky:ky + stride * ho:stride, kx:kx + stride * wo:stride]
            cols[:, ky, kx] = xs.transpose(1, 0, 2, 3)
    return cols.reshape(ci * kh * kw, n * ho * wo)


def conv2d_forward(x, w, b, stride, pad, return_cols=False):
    """x (N,Ci,H,W), w (Co,Ci,kh,kw), b (Co,) -> (N,Co,Ho,Wo).

    im2col + one GEMM so the heavy lifting stays in BLAS.  With
    ``return_cols`` the patch matrix is returned too, for reuse by
    conv2d_weight_grad in the backward pass.
    """
    n, ci, h, win = x.shape
    co, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (win + 2 * pad - kw) // stride + 1
    cols = _im2col(_pad(x, pad), kh, kw, stride, ho, wo)
    out = (w.reshape(co, ci * kh * kw) @ cols).reshape(co, n, ho, wo)
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    out += b.reshape(1, co, 1, 1)
    if return_cols:
        return out, cols
    return out


def conv2d_input_grad(dy, w, stride, pad, h, win):
    """Gradient of conv2d_forward w.r.t. x.

    For stride 1 this is itself a convolution with the flipped, transposed
    kernel (a much better GEMM shape); strided convs fall back to the
    GEMM + col2im scatter.
    """
    n, co, ho, wo = dy.shape
    _, ci, kh, kw = w.shape
    if stride == 1:
        w_t = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
        return conv2d_forward(dy, w_t, np.zeros(ci), 1, kh - 1 - pad)
    dyf = dy.transpose(1, 0, 2, 3).reshape(co, n * ho * wo)
    dcols = (w.reshape(co, ci * kh * kw).T @ dyf).reshape(ci, kh, kw, n, ho, wo)
    dxp = np.zeros((n, ci, h + 2 * pad, win + 2 * pad))
    for ky in range(kh):
        for kx in range(kw):
            dxp[:, :, ky:ky + stride * ho:stride, kx:kx + stride * wo:stride] += \
                dcols[:, ky, kx].transpose(1, 0, 2, 3)
    if pad == 0:
        return dxp
    return dxp[:, :, pad:pad + h, pad:pad + win]


def conv2d_weight_grad(dy, cols, ci, kh, kw):
    """Gradient of conv2d_forward w.r.t. w, from the cached patch matrix."""
    n, co, ho, wo = dy.shape
    dyf = dy.transpose(1, 0, 2, 3).reshape(co, n * ho * wo)
    return (dyf @ cols.T).reshape(co, ci, kh, kw)


def box_sum3(x):
    """3x3 neighborhood sum over the trailing two axes, zero past the edges."""
    x = np.asarray(x, dtype=np.float64)
    r = x.copy()
    r[..., 1:, :] += x[..., :-1, :]
    r[..., :-1, :] += x[..., 1:, :]
    s = r.copy()
    s[..., 1:] += r[..., :-1]
    s[..., :-1] += r[..., 1:]
    return s


def _corner_indices(u, v, h, w):
    uc = np.clip(u, 0.0, w - 1.0)
    vc = np.clip(v, 0.0, h - 1.0)
    x0 = np.floor(uc).astype(np.int64)
    y0 = np.floor(vc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = uc - x0
    fy = vc - y0
    return x0, y0, x1, y1, fx, fy


def bilinear_forward(img, u, v):
    """Border-clamped bilinear sampling.

    img (N,C,H,W); u, v (N,Ho,Wo) continuous pixel coords -> (N,C,Ho,Wo).
    """
    n, c, h, w = img.shape
    _, ho, wo = u.shape
    x0, y0, x1, y1, fx, fy = _corner_indices(u, v, h, w)
    imgf = img.reshape(n, c, h * w)
    p = ho * wo

    def gather(y, x):
        idx = (y * w + x).reshape(n, 1, p)
        return np.take_along_axis(imgf, idx, axis=2)

    fxf = fx.reshape(n, 1, p)
    fyf = fy.reshape(n, 1, p)
    out = (gather(y0, x0) * (1 - fxf) * (1 - fyf)
           + gather(y0, x1) * fxf * (1 - fyf)
           + gather(y1, x0) * (1 - fxf) * fyf
           + gather(y1, x1) * fxf * fyf)
    return out.reshape(n, c, ho, wo)


def bilinear_backward(dout, img, u, v, need_dimg):
    """Gradients of bilinear_forward w.r.t. (img, u, v).

    Coordinate gradients are zero where the coordinate was clamped.
    Returns (dimg or None, du, dv).
    """
    n, c, h, w = img.shape
    _, ho, wo = u.shape
    p = ho * wo
    x0, y0, x1, y1, fx, fy = _corner_indices(u, v, h, w)
    imgf = img.reshape(n, c, h * w)
    doutf = dout.reshape(n, c, p)

    def gather(y, x):
        idx = (y * w + x).reshape(n, 1, p)
        return np.take_along_axis(imgf, idx, axis=2)

    i00, i01 = gather(y0, x0), gather(y0, x1)
    i10, i11 = gather(y1, x0), gather(y1, x1)
    fxf = fx.reshape(n, 1, p)
    fyf = fy.reshape(n, 1, p)

    du = (doutf * ((i01 - i00) * (1 - fyf) + (i11 - i10) * fyf)).sum(1)
    dv = (doutf * ((i10 - i00) * (1 - fxf) + (i11 - i01) * fxf)).sum(1)
    in_u = ((u >= 0.0) & (u <= w - 1.0)).reshape(n, p)
    in_v = ((v >= 0.0) & (v <= h - 1.0)).reshape(n, p)
    du = (du * in_u).reshape(n, ho, wo)
    dv = (dv * in_v).reshape(n, ho, wo)

    dimg = None
    if need_dimg:
        dimgf = np.zeros((n, c, h * w))
        ni = np.arange(n).reshape(n, 1, 1)
        cc = np.arange(c).reshape(1, c, 1)
        for y, x, wgt in ((y0, x0, (1 - fxf) * (1 - fyf)),
                          (y0, x1, fxf * (1 - fyf)),
                          (y1, x0, (1 - fxf) * fyf),
                          (y1, x1, fxf * fyf)):
            idx = (y * w + x).reshape(n, 1, p)
            np.add.at(dimgf, (ni, cc, idx), doutf * wgt)
        dimg = dimgf.reshape(n, c, h, w)
    return dimg, du, dv
