"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A ``Tensor`` wraps an ndarray and records the operations applied to it;
``Tensor.backward()`` walks the tape once and fills ``.grad`` on every
reachable tensor with ``requires_grad=True``.  Graphs are single-use.

Every module-level op also accepts plain ndarrays/scalars and then simply
computes with numpy, so the geometry and loss code below is written once
and runs both inside and outside the tape.
"""

import numpy as np

from . import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_links")

    # Make numpy defer binary ops to our reflected operators instead of
    # coercing Tensor into an object array.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._links = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad=None):
        """Accumulate gradients of this tensor w.r.t. every reachable leaf."""
        if grad is None:
            grad = np.ones_like(self.data)
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._links:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in reversed(topo):
            if node.grad is None:
                continue
            g = node.grad
            for parent, vjp in node._links:
                contrib = vjp(g)
                parent.grad = contrib if parent.grad is None else parent.grad + contrib

    # operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        data = self.data[key]

        def vjp(g):
            z = np.zeros_like(self.data)
            z[key] += g  # basic (non-fancy) indexing only
            return z

        return _node(data, (self, vjp))

    def reshape(self, *shape):
        return reshape(self, *shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def is_tensor(x):
    return isinstance(x, Tensor)


def value(x):
    """Underlying ndarray (or float64 view) of a Tensor or array-like."""
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _node(data, *links):
    out = Tensor(data)
    live = tuple((p, f) for p, f in links if p.requires_grad)
    if live:
        out.requires_grad = True
        out._links = live
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic -------------------------------------------------------

def add(a, b):
    if not (is_tensor(a) or is_tensor(b)):
        return np.add(a, b)
    av, bv = value(a), value(b)
    links = []
    if is_tensor(a):
        links.append((a, lambda g: _unbroadcast(g, av.shape)))
    if is_tensor(b):
        links.append((b, lambda g: _unbroadcast(g, bv.shape)))
    return _node(av + bv, *links)


def sub(a, b):
    if not (is_tensor(a) or is_tensor(b)):
        return np.subtract(a, b)
    av, bv = value(a), value(b)
    links = []
    if is_tensor(a):
        links.append((a, lambda g: _unbroadcast(g, av.shape)))
    if is_tensor(b):
        links.append((b, lambda g: _unbroadcast(-g, bv.shape)))
    return _node(av - bv, *links)


def mul(a, b):
    if not (is_tensor(a) or is_tensor(b)):
        return np.multiply(a, b)
    av, bv = value(a), value(b)
    links = []
    if is_tensor(a):
        links.append((a, lambda g: _unbroadcast(g * bv, av.shape)))
    if is_tensor(b):
        links.append((b, lambda g: _unbroadcast(g * av, bv.shape)))
    return _node(av * bv, *links)


def div(a, b):
    if not (is_tensor(a) or is_tensor(b)):
        return np.divide(a, b)
    av, bv = value(a), value(b)
    links = []
    if is_tensor(a):
        links.append((a, lambda g: _unbroadcast(g / bv, av.shape)))
    if is_tensor(b):
        links.append((b, lambda g: _unbroadcast(-g * av / (bv * bv), bv.shape)))
    return _node(av / bv, *links)


def power(x, exponent):
    """x ** p for a constant scalar exponent."""
    if not is_tensor(x):
        return np.power(x, exponent)
    xv = x.data
    return _node(xv ** exponent,
                 (x, lambda g: g * exponent * xv ** (exponent - 1)))


# -- elementwise functions --------------------------------------------

def exp(x):
    if not is_tensor(x):
        return np.exp(x)
    out = np.exp(x.data)
    return _node(out, (x, lambda g: g * out))


def log(x):
    if not is_tensor(x):
        return np.log(x)
    return _node(np.log(x.data), (x, lambda g: g / x.data))


def sqrt(x):
    if not is_tensor(x):
        return np.sqrt(x)
    out = np.sqrt(x.data)
    return _node(out, (x, lambda g: g * 0.5 / out))


def sin(x):
    if not is_tensor(x):
        return np.sin(x)
    return _node(np.sin(x.data), (x, lambda g: g * np.cos(x.data)))


def cos(x):
    if not is_tensor(x):
        return np.cos(x)
    return _node(np.cos(x.data), (x, lambda g: -g * np.sin(x.data)))


def absolute(x):
    if not is_tensor(x):
        return np.abs(x)
    return _node(np.abs(x.data), (x, lambda g: g * np.sign(x.data)))


def sigmoid(x):
    if not is_tensor(x):
        return 1.0 / (1.0 + np.exp(-x))
    out = 1.0 / (1.0 + np.exp(-x.data))
    return _node(out, (x, lambda g: g * out * (1.0 - out)))


def elu(x):
    if not is_tensor(x):
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    xv = x.data
    out = np.where(xv > 0, xv, np.expm1(np.minimum(xv, 0.0)))
    return _node(out, (x, lambda g: g * np.where(xv > 0, 1.0, out + 1.0)))


def maximum(a, b):
    if not (is_tensor(a) or is_tensor(b)):
        return np.maximum(a, b)
    av, bv = value(a), value(b)
    pick_a = av >= bv  # ties go to the first argument
    links = []
    if is_tensor(a):
        links.append((a, lambda g: _unbroadcast(g * pick_a, av.shape)))
    if is_tensor(b):
        links.append((b, lambda g: _unbroadcast(g * ~pick_a, bv.shape)))
    return _node(np.where(pick_a, av, bv), *links)


def minimum(a, b):
    if not (is_tensor(a) or is_tensor(b)):
        return np.minimum(a, b)
    av, bv = value(a), value(b)
    pick_a = av <= bv
    links = []
    if is_tensor(a):
        links.append((a, lambda g: _unbroadcast(g * pick_a, av.shape)))
    if is_tensor(b):
        links.append((b, lambda g: _unbroadcast(g * ~pick_a, bv.shape)))
    return _node(np.where(pick_a, av, bv), *links)


def where(cond, a, b):
    """Select; ``cond`` is a plain boolean array (no gradient)."""
    cond = np.asarray(cond, dtype=bool)
    if not (is_tensor(a) or is_tensor(b)):
        return np.where(cond, a, b)
    av, bv = value(a), value(b)
    links = []
    if is_tensor(a):
        links.append((a, lambda g: _unbroadcast(g * cond, av.shape)))
    if is_tensor(b):
        links.append((b, lambda g: _unbroadcast(g * ~cond, bv.shape)))
    return _node(np.where(cond, av, bv), *links)


# -- reductions & shape -----------------------------------------------

def tsum(x, axis=None, keepdims=False):
    if not is_tensor(x):
        return np.sum(x, axis=axis, keepdims=keepdims)
    xv = x.data

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, xv.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, xv.shape).copy()

    return _node(np.sum(xv, axis=axis, keepdims=keepdims), (x, vjp))


def tmean(x, axis=None, keepdims=False):
    if not is_tensor(x):
        return np.mean(x, axis=axis, keepdims=keepdims)
    xv = x.data
    if axis is None:
        count = xv.size
    elif isinstance(axis, tuple):
        count = int(np.prod([xv.shape[i] for i in axis]))
    else:
        count = xv.shape[axis]
    return div(tsum(x, axis=axis, keepdims=keepdims), float(count))


def amin(x, axis):
    """Minimum along one axis; gradient goes to the first argmin."""
    if not is_tensor(x):
        return np.min(x, axis=axis)
    xv = x.data
    idx = np.argmin(xv, axis=axis)

    def vjp(g):
        z = np.zeros_like(xv)
        np.put_along_axis(z, np.expand_dims(idx, axis),
                          np.expand_dims(g, axis), axis)
        return z

    return _node(np.min(xv, axis=axis), (x, vjp))


def reshape(x, *shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    if not is_tensor(x):
        return np.reshape(x, shape)
    old = x.data.shape
    return _node(x.data.reshape(shape), (x, lambda g: g.reshape(old)))


def concat(parts, axis=0):
    if not any(is_tensor(p) for p in parts):
        return np.concatenate(parts, axis=axis)
    vals = [value(p) for p in parts]
    data = np.concatenate(vals, axis=axis)
    links = []
    start = 0
    for p, v in zip(parts, vals):
        n = v.shape[axis]
        if is_tensor(p):
            sl = [slice(None)] * data.ndim
            sl[axis] = slice(start, start + n)
            links.append((p, lambda g, sl=tuple(sl): g[sl]))
        start += n
    return _node(data, *links)


def stack(parts, axis=0):
    if not any(is_tensor(p) for p in parts):
        return np.stack(parts, axis=axis)
    vals = [value(p) for p in parts]
    data = np.stack(vals, axis=axis)
    links = []
    for i, p in enumerate(parts):
        if is_tensor(p):
            links.append((p, lambda g, i=i: np.take(g, i, axis=axis)))
    return _node(data, *links)


def matmul(a, b):
    """2-D matrix product (used by the pose head)."""
    if not (is_tensor(a) or is_tensor(b)):
        return np.matmul(a, b)
    av, bv = value(a), value(b)
    links = []
    if is_tensor(a):
        links.append((a, lambda g: g @ bv.T))
    if is_tensor(b):
        links.append((b, lambda g: av.T @ g))
    return _node(av @ bv, *links)


# -- structured ops backed by the kernel backends ----------------------

def conv2d(x, w, b, stride=1, pad=1):
    """2-D convolution (cross-correlation), NCHW."""
    xv, wv, bv = value(x), value(w), value(b)
    need_w = is_tensor(w) and w.requires_grad
    if not (is_tensor(x) or is_tensor(w) or is_tensor(b)):
        return kernels.conv2d_forward(xv, wv, bv, stride, pad)
    links = []
    if need_w:
        # keep the patch matrix from the forward pass for the weight grad
        y, cols = kernels.conv2d_forward(xv, wv, bv, stride, pad, return_cols=True)
        links.append((w, lambda g: kernels.conv2d_weight_grad(
            g, cols, wv.shape[1], wv.shape[2], wv.shape[3])))
    else:
        y = kernels.conv2d_forward(xv, wv, bv, stride, pad)
    if is_tensor(x):
        links.append((x, lambda g: kernels.conv2d_input_grad(
            g, wv, stride, pad, xv.shape[2], xv.shape[3])))
    if is_tensor(b):
        links.append((b, lambda g: g.sum(axis=(0, 2, 3))))
    return _node(y, *links)


def box_sum3(x):
    """Sum over the 3x3 neighborhood (zero beyond the edges) of the
    trailing two axes.  Symmetric kernel, so the op is self-adjoint."""
    if not is_tensor(x):
        return kernels.box_sum3(np.asarray(x, dtype=np.float64))
    return _node(kernels.box_sum3(x.data), (x, kernels.box_sum3))


def upsample_nearest(x, factor):
    """Nearest-neighbor upsampling of the trailing two axes."""
    if factor == 1:
        return x
    xv = value(x)
    data = np.repeat(np.repeat(xv, factor, axis=-2), factor, axis=-1)
    if not is_tensor(x):
        return data
    h, w = xv.shape[-2], xv.shape[-1]

    def vjp(g):
        gs = g.reshape(g.shape[:-2] + (h, factor, w, factor))
        return gs.sum(axis=(-3, -1))

    return _node(data, (x, vjp))


def bilinear_sample(img, u, v):
    """Border-clamped bilinear sampling, differentiable in img and coords.

    img (N,C,H,W); u, v (N,Ho,Wo) -> (N,C,Ho,Wo).  The in-bounds validity
    mask is the caller's concern (see geometry.sampling_valid_mask).
    """
    imgv, uv, vv = value(img), value(u), value(v)
    out = kernels.bilinear_forward(imgv, uv, vv)
    if not (is_tensor(img) or is_tensor(u) or is_tensor(v)):
        return out

    need_dimg = is_tensor(img) and img.requires_grad
    cache = {}

    def grads(g):
        key = id(g)
        if key not in cache:
            cache.clear()
            cache[key] = kernels.bilinear_backward(g, imgv, uv, vv, need_dimg)
        return cache[key]

    links = []
    if is_tensor(img):
        links.append((img, lambda g: grads(g)[0]))
    if is_tensor(u):
        links.append((u, lambda g: grads(g)[1]))
    if is_tensor(v):
        links.append((v, lambda g: grads(g)[2]))
    return _node(out, *links)
