"""Kernel backend selection.

The compiled extension is preferred when present; the NumPy fallback is
semantically identical (bit for bit, enforced by tests). Set
RANKPOOL_KERNELS=python or RANKPOOL_KERNELS=c to force a backend; forcing
"c" raises if the extension was not built.

Only the operations that dominate training time live here: patch
extraction for convolution (im2col/col2im) and the switch-based pooling
forward/backward. Average and stochastic pooling stay in plain NumPy in
rankpool.pooling; their arithmetic is already memory-bound broadcasting.
"""

import os

from . import _pykernels

_FORCED = os.environ.get("RANKPOOL_KERNELS", "").strip().lower()
if _FORCED not in ("", "c", "python"):
    raise ImportError(
        f"RANKPOOL_KERNELS={_FORCED!r} is not a backend; use 'c' or 'python'"
    )

_impl = None
if _FORCED in ("", "c"):
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _FORCED == "c":
            raise ImportError(
                "RANKPOOL_KERNELS=c but the compiled extension is missing; "
                "build it with `python setup.py build_ext --inplace`"
            )
        _impl = None
if _impl is None:
    _impl = _pykernels

BACKEND = _impl.BACKEND

im2col = _impl.im2col
col2im = _impl.col2im
pool_max_forward = _impl.pool_max_forward
pool_switch_backward = _impl.pool_switch_backward
pool_shared_argmax = _impl.pool_shared_argmax
pool_gather_shared = _impl.pool_gather_shared
pool_shared_backward = _impl.pool_shared_backward


def available_backends():
    """Names of importable kernel backends, compiled one first."""
    names = []
    try:
        from . import _ckernels  # noqa: F401

        names.append("c")
    except ImportError:
        pass
    names.append("python")
    return names


def get_backend(name):
    """Return the kernel module for an explicit backend name."""
    if name == "python":
        return _pykernels
    if name == "c":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
