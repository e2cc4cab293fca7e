"""Hot numeric kernels: numba fast path with a pure-numpy fallback.

The backend is chosen once at import time from the ``GEODEPTH_NUMBA``
environment variable:

* ``"0"`` (or ``off``/``false``/``numpy``)  -- force the pure-numpy fallback
* ``"1"`` (or ``on``/``true``/``numba``)    -- require numba, fail loudly
* anything else (default ``auto``)          -- use numba when importable

Both backends expose the same six functions over float64 NCHW arrays.
``benchmarks/bench_kernels.py`` times them against each other.
"""

import os

from . import numpy_backend

_flag = os.environ.get("GEODEPTH_NUMBA", "auto").strip().lower()

if _flag in ("0", "off", "false", "numpy"):
    _impl = numpy_backend
elif _flag in ("1", "on", "true", "numba"):
    from . import numba_backend as _impl
else:
    try:
        from . import numba_backend as _impl
    except ImportError:
        _impl = numpy_backend

conv2d_forward = _impl.conv2d_forward
conv2d_input_grad = _impl.conv2d_input_grad
conv2d_weight_grad = _impl.conv2d_weight_grad
bilinear_forward = _impl.bilinear_forward
bilinear_backward = _impl.bilinear_backward
box_sum3 = _impl.box_sum3


def backend_name() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return _impl.NAME
