"""Pure-numpy kernels for valid convolution and max pooling.

This is the fallback used when the compiled extension is unavailable.
All arrays are float64, C-contiguous, laid out height x width x channels.
Shape checks happen in the calling layer; these functions assume valid
arguments.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, bias, stride_h, stride_w):
    """Valid cross-correlation.

    x: (H, W, Cin), w: (kh, kw, Cin, Cout), bias: (Cout,)
    returns (H', W', Cout) with H' = floor((H-kh)/stride_h) + 1.
    """
    kh, kw = w.shape[0], w.shape[1]
    # windows: (H', W', Cin, kh, kw)
    windows = sliding_window_view(x, (kh, kw), axis=(0, 1))[::stride_h, ::stride_w]
    out = np.einsum("ijcpq,pqco->ijo", windows, w, optimize=True)
    out += bias
    return np.ascontiguousarray(out)


def conv2d_backward(x, w, grad, stride_h, stride_w):
    """Gradients of conv2d_forward w.r.t. input, weights, and bias."""
    kh, kw = w.shape[0], w.shape[1]
    out_h, out_w = grad.shape[0], grad.shape[1]
    windows = sliding_window_view(x, (kh, kw), axis=(0, 1))[::stride_h, ::stride_w]
    gw = np.einsum("ijcpq,ijo->pqco", windows, grad, optimize=True)
    gb = grad.sum(axis=(0, 1))
    gx = np.zeros_like(x)
    # spread[i, j, p, q, c] contributes to gx[i*sh + p, j*sw + q, c]
    spread = np.einsum("ijo,pqco->ijpqc", grad, w, optimize=True)
    for p in range(kh):
        for q in range(kw):
            gx[p : p + out_h * stride_h : stride_h,
               q : q + out_w * stride_w : stride_w, :] += spread[:, :, p, q, :]
    return gx, np.ascontiguousarray(gw), np.ascontiguousarray(gb)


def maxpool_forward(x, pool_h, pool_w, stride_h, stride_w):
    """Per-window, per-channel maximum.

    Returns (out, arg) where arg holds the flat row-major input position
    ``row * W + col`` of the selected element (first occurrence on ties,
    scanning the window row by row).
    """
    h, w, c = x.shape
    windows = sliding_window_view(x, (pool_h, pool_w), axis=(0, 1))[::stride_h, ::stride_w]
    out_h, out_w = windows.shape[0], windows.shape[1]
    flat = windows.reshape(out_h, out_w, c, pool_h * pool_w)
    idx = flat.argmax(axis=3)  # first max in window row-major order
    out = np.take_along_axis(flat, idx[..., None], axis=3)[..., 0]
    rows = (np.arange(out_h) * stride_h)[:, None, None] + idx // pool_w
    cols = (np.arange(out_w) * stride_w)[None, :, None] + idx % pool_w
    arg = rows * w + cols
    return np.ascontiguousarray(out), np.ascontiguousarray(arg.astype(np.int64))


def maxpool_backward(grad, arg, height, width):
    """Route upstream gradient to the recorded argmax positions."""
    c = grad.shape[2]
    gx = np.zeros((height, width, c))
    chan = np.broadcast_to(np.arange(c), grad.shape)
    np.add.at(gx, (arg.ravel() // width, arg.ravel() % width, chan.ravel()), grad.ravel())
    return gx
