"""Numba-compiled kernels (default backend).

Kernels are serial @njit on purpose: they are memory-bound gather/scatter
glue around BLAS GEMMs, and a second thread pool would fight OpenBLAS for
cores (measured 5-7x slowdowns when both run).  Serial loops also keep
results bitwise reproducible run-to-run.
"""

import numpy as np
from numba import njit

NAME = "numba"


def _pad(x, pad):
    if pad == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


@njit(cache=True, fastmath=True)
def _im2col(xp, kh, kw, stride, ho, wo, cols):
    # cols (Ci*kh*kw, N*Ho*Wo)
    n, ci, _, _ = xp.shape
    for cin in range(ci):
        for ky in range(kh):
            for kx in range(kw):
                r = (cin * kh + ky) * kw + kx
                for nn in range(n):
                    base = nn * ho * wo
                    for oy in range(ho):
                        row = xp[nn, cin, oy * stride + ky]
                        off = base + oy * wo
                        for ox in range(wo):
                            cols[r, off + ox] = row[kx + ox * stride]
    return cols


@njit(cache=True, fastmath=True)
def _col2im(dcols, kh, kw, stride, ho, wo, dxp):
    n, ci, _, _ = dxp.shape
    for cin in range(ci):
        for ky in range(kh):
            for kx in range(kw):
                r = (cin * kh + ky) * kw + kx
                for nn in range(n):
                    base = nn * ho * wo
                    for oy in range(ho):
                        drow = dxp[nn, cin, oy * stride + ky]
                        off = base + oy * wo
                        for ox in range(wo):
                            drow[kx + ox * stride] += dcols[r, off + ox]
    return dxp


@njit(cache=True, fastmath=True)
def _scatter_nchw(flat, out):
    # flat (Co, N*Ho*Wo) -> out (N,Co,Ho,Wo), adding the bias baked into flat
    n, co, ho, wo = out.shape
    for nn in range(n):
        for c in range(co):
            base = nn * ho * wo
            for oy in range(ho):
                off = base + oy * wo
                for ox in range(wo):
                    out[nn, c, oy, ox] = flat[c, off + ox]
    return out


@njit(cache=True, fastmath=True)
def _gather_nchw(x, flat):
    # x (N,Co,Ho,Wo) -> flat (Co, N*Ho*Wo)
    n, co, ho, wo = x.shape
    for c in range(co):
        for nn in range(n):
            base = nn * ho * wo
            for oy in range(ho):
                off = base + oy * wo
                for ox in range(wo):
                    flat[c, off + ox] = x[nn, c, oy, ox]
    return flat


def conv2d_forward(x, w, b, stride, pad, return_cols=False):
    """x (N,Ci,H,W), w (Co,Ci,kh,kw), b (Co,) -> (N,Co,Ho,Wo).

    numba fills the patch matrix, BLAS does the single GEMM.  With
    ``return_cols`` the patch matrix is returned too, for reuse by
    conv2d_weight_grad in the backward pass.
    """
    n, ci, h, win = x.shape
    co, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (win + 2 * pad - kw) // stride + 1
    cols = np.empty((ci * kh * kw, n * ho * wo))
    _im2col(_pad(x, pad), kh, kw, stride, ho, wo, cols)
    flat = w.reshape(co, ci * kh * kw) @ cols
    out = np.empty((n, co, ho, wo))
    _scatter_nchw(flat, out)
    out += b.reshape(1, co, 1, 1)
    if return_cols:
        return out, cols
    return out


def conv2d_input_grad(dy, w, stride, pad, h, win):
    """See numpy_backend: stride 1 becomes a flipped-kernel convolution."""
    n, co, ho, wo = dy.shape
    _, ci, kh, kw = w.shape
    if stride == 1:
        w_t = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
        return conv2d_forward(dy, w_t, np.zeros(ci), 1, kh - 1 - pad)
    dyf = np.empty((co, n * ho * wo))
    _gather_nchw(np.ascontiguousarray(dy), dyf)
    dcols = np.ascontiguousarray(w.reshape(co, ci * kh * kw).T) @ dyf
    dxp = np.zeros((n, ci, h + 2 * pad, win + 2 * pad))
    _col2im(dcols, kh, kw, stride, ho, wo, dxp)
    if pad == 0:
        return dxp
    return dxp[:, :, pad:pad + h, pad:pad + win]


def conv2d_weight_grad(dy, cols, ci, kh, kw):
    """Gradient of conv2d_forward w.r.t. w, from the cached patch matrix."""
    n, co, ho, wo = dy.shape
    dyf = np.empty((co, n * ho * wo))
    _gather_nchw(np.ascontiguousarray(dy), dyf)
    return (dyf @ cols.T).reshape(co, ci, kh, kw)


@njit(cache=True, fastmath=True)
def _box_sum3(x2, tmp, out2):
    m, h, w = x2.shape
    for i in range(m):
        for y in range(h):
            row = x2[i, y]
            trow = tmp[y]
            if w == 1:
                trow[0] = row[0]
            else:
                trow[0] = row[0] + row[1]
                for xx in range(1, w - 1):
                    trow[xx] = row[xx - 1] + row[xx] + row[xx + 1]
                trow[w - 1] = row[w - 2] + row[w - 1]
        for y in range(h):
            orow = out2[i, y]
            if h == 1:
                for xx in range(w):
                    orow[xx] = tmp[y][xx]
            elif y == 0:
                for xx in range(w):
                    orow[xx] = tmp[0][xx] + tmp[1][xx]
            elif y == h - 1:
                for xx in range(w):
                    orow[xx] = tmp[h - 2][xx] + tmp[h - 1][xx]
            else:
                for xx in range(w):
                    orow[xx] = tmp[y - 1][xx] + tmp[y][xx] + tmp[y + 1][xx]
    return out2


def box_sum3(x):
    """3x3 neighborhood sum over the trailing two axes, zero past the edges."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    h, w = x.shape[-2], x.shape[-1]
    x2 = x.reshape(-1, h, w)
    out = np.empty_like(x2)
    _box_sum3(x2, np.empty((h, w)), out)
    return out.reshape(x.shape)


@njit(cache=True, fastmath=True)
def _bilinear_forward(img, u, v, out):
    n, c, h, w = img.shape
    _, ho, wo = u.shape
    for nn in range(n):
        for oy in range(ho):
            for ox in range(wo):
                uc = min(max(u[nn, oy, ox], 0.0), w - 1.0)
                vc = min(max(v[nn, oy, ox], 0.0), h - 1.0)
                x0 = int(np.floor(uc))
                y0 = int(np.floor(vc))
                x1 = min(x0 + 1, w - 1)
                y1 = min(y0 + 1, h - 1)
                fx = uc - x0
                fy = vc - y0
                for cc in range(c):
                    out[nn, cc, oy, ox] = (
                        img[nn, cc, y0, x0] * (1.0 - fx) * (1.0 - fy)
                        + img[nn, cc, y0, x1] * fx * (1.0 - fy)
                        + img[nn, cc, y1, x0] * (1.0 - fx) * fy
                        + img[nn, cc, y1, x1] * fx * fy)
    return out


@njit(cache=True, fastmath=True)
def _bilinear_coord_grad(dout, img, u, v, du, dv):
    n, c, h, w = img.shape
    _, ho, wo = u.shape
    for nn in range(n):
        for oy in range(ho):
            for ox in range(wo):
                uu = u[nn, oy, ox]
                vv = v[nn, oy, ox]
                uc = min(max(uu, 0.0), w - 1.0)
                vc = min(max(vv, 0.0), h - 1.0)
                x0 = int(np.floor(uc))
                y0 = int(np.floor(vc))
                x1 = min(x0 + 1, w - 1)
                y1 = min(y0 + 1, h - 1)
                fx = uc - x0
                fy = vc - y0
                gu = 0.0
                gv = 0.0
                for cc in range(c):
                    g = dout[nn, cc, oy, ox]
                    i00 = img[nn, cc, y0, x0]
                    i01 = img[nn, cc, y0, x1]
                    i10 = img[nn, cc, y1, x0]
                    i11 = img[nn, cc, y1, x1]
                    gu += g * ((i01 - i00) * (1.0 - fy) + (i11 - i10) * fy)
                    gv += g * ((i10 - i00) * (1.0 - fx) + (i11 - i01) * fx)
                if uu < 0.0 or uu > w - 1.0:
                    gu = 0.0
                if vv < 0.0 or vv > h - 1.0:
                    gv = 0.0
                du[nn, oy, ox] = gu
                dv[nn, oy, ox] = gv


@njit(cache=True)
def _bilinear_image_grad(dout, u, v, dimg):
    n, c, h, w = dimg.shape
    _, ho, wo = u.shape
    for nn in range(n):
        for oy in range(ho):
            for ox in range(wo):
                uc = min(max(u[nn, oy, ox], 0.0), w - 1.0)
                vc = min(max(v[nn, oy, ox], 0.0), h - 1.0)
                x0 = int(np.floor(uc))
                y0 = int(np.floor(vc))
                x1 = min(x0 + 1, w - 1)
                y1 = min(y0 + 1, h - 1)
                fx = uc - x0
                fy = vc - y0
                for cc in range(c):
                    g = dout[nn, cc, oy, ox]
                    dimg[nn, cc, y0, x0] += g * (1.0 - fx) * (1.0 - fy)
                    dimg[nn, cc, y0, x1] += g * fx * (1.0 - fy)
                    dimg[nn, cc, y1, x0] += g * (1.0 - fx) * fy
                    dimg[nn, cc, y1, x1] += g * fx * fy


def bilinear_forward(img, u, v):
    """Border-clamped bilinear sampling; see numpy_backend for the contract."""
    n, c, _, _ = img.shape
    _, ho, wo = u.shape
    out = np.empty((n, c, ho, wo))
    return _bilinear_forward(np.ascontiguousarray(img), np.ascontiguousarray(u),
                             np.ascontiguousarray(v), out)


def bilinear_backward(dout, img, u, v, need_dimg):
    n, c, _, _ = img.shape
    _, ho, wo = u.shape
    dout = np.ascontiguousarray(dout)
    img = np.ascontiguousarray(img)
    u = np.ascontiguousarray(u)
    v = np.ascontiguousarray(v)
    du = np.empty((n, ho, wo))
    dv = np.empty((n, ho, wo))
    _bilinear_coord_grad(dout, img, u, v, du, dv)
    dimg = None
    if need_dimg:
        dimg = np.zeros_like(img)
        _bilinear_image_grad(dout, u, v, dimg)
    return dimg, du, dv
