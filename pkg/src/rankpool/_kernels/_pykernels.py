"""NumPy implementations of the hot kernels.

Import-time fallback when the compiled extension is unavailable. Semantics
(including argmax tie-breaking and floating-point accumulation order in
col2im) match the compiled kernels bit for bit; the equivalence tests hold
both backends to that.

Layout contracts:
  * activations are C-contiguous float64 (n, h, w, channels)
  * im2col rows iterate (frame, out_row, out_col), columns iterate
    (kernel_row, kernel_col, in_channel), all row-major
  * pooling windows are non-overlapping (stride == window) and indexed
    row-major within the window (flat index di * pw + dj)
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

BACKEND = "python"


def _window_view(x, ph, pw):
    n, h, w, d = x.shape
    oh, ow = h // ph, w // pw
    v = x.reshape(n, oh, ph, ow, pw, d).transpose(0, 1, 3, 2, 4, 5)
    return v.reshape(n, oh, ow, ph * pw, d)


def _unwindow(g6, ph, pw):
    n, oh, ow, _, d = g6.shape
    g = g6.reshape(n, oh, ow, ph, pw, d).transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(g.reshape(n, oh * ph, ow * pw, d))


def im2col(x, kh, kw):
    """Valid, stride-1 patch extraction: (n,h,w,c) -> (n*oh*ow, kh*kw*c)."""
    n, h, w, c = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    sn, sh, sw, sc = x.strides
    v = as_strided(x, (n, oh, ow, kh, kw, c), (sn, sh, sw, sh, sw, sc))
    return np.ascontiguousarray(v.reshape(n * oh * ow, kh * kw * c))


def col2im(cols, n, h, w, c, kh, kw):
    """Adjoint of im2col: scatter-add patch columns back onto the image grid."""
    oh, ow = h - kh + 1, w - kw + 1
    cols6 = cols.reshape(n, oh, ow, kh, kw, c)
    out = np.zeros((n, h, w, c))
    for u in range(kh):
        for v in range(kw):
            out[:, u : u + oh, v : v + ow, :] += cols6[:, :, :, u, v, :]
    return out


def pool_max_forward(x, ph, pw):
    """Per-channel window max; returns (out, switches), switches flat in-window."""
    v = _window_view(x, ph, pw)
    switches = np.argmax(v, axis=3).astype(np.int64)
    out = np.take_along_axis(v, switches[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return np.ascontiguousarray(out), switches


def pool_switch_backward(grad_out, switches, ph, pw):
    """Route per-channel output gradients to their recorded window slots."""
    n, oh, ow, d = grad_out.shape
    g6 = np.zeros((n, oh, ow, ph * pw, d))
    np.put_along_axis(g6, switches[:, :, :, None, :], grad_out[:, :, :, None, :], axis=3)
    return _unwindow(g6, ph, pw)


def pool_shared_argmax(maps, ph, pw):
    """Per-window argmax of per-pixel score maps (n,h,w) -> (n,oh,ow)."""
    n, h, w = maps.shape
    oh, ow = h // ph, w // pw
    v = maps.reshape(n, oh, ph, ow, pw).transpose(0, 1, 3, 2, 4).reshape(n, oh, ow, ph * pw)
    return np.argmax(v, axis=3).astype(np.int64)


def pool_gather_shared(x, switches, ph, pw):
    """Copy all channels from one shared spatial slot per window."""
    v = _window_view(x, ph, pw)
    n, oh, ow, _, d = v.shape
    idx = np.broadcast_to(switches[:, :, :, None, None], (n, oh, ow, 1, d))
    out = np.take_along_axis(v, idx, axis=3)[:, :, :, 0, :]
    return np.ascontiguousarray(out)


def pool_shared_backward(grad_out, switches, ph, pw):
    """Route every channel's gradient to the window's shared spatial slot."""
    n, oh, ow, d = grad_out.shape
    g6 = np.zeros((n, oh, ow, ph * pw, d))
    idx = np.broadcast_to(switches[:, :, :, None, None], (n, oh, ow, 1, d))
    np.put_along_axis(g6, idx, grad_out[:, :, :, None, :], axis=3)
    return _unwindow(g6, ph, pw)
