"""Hand-derived forward/backward passes for the encoder building blocks.

Each layer kind has a ``forward(params, x, **opts) -> (out, cache)`` and a
``backward(params, cache, dout) -> (dx, param_grads)`` pair.  Arrays are
float64; images are laid out ``(N, C, H, W)``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import NumericalUnderflow, ShapeMismatch

L2_MIN_NORM = 1e-12

LAYER_KINDS = ("affine", "relu", "conv2d", "maxpool2d", "l2norm")


# affine: x (N, in) @ W (in, out) + b (out,)

def affine_forward(params, x):
    W, b = params
    if x.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeMismatch(f"affine: input {x.shape} vs weight {W.shape}, bias {b.shape}")
    return x @ W + b, x


def affine_backward(params, cache, dout):
    W, _ = params
    x = cache
    return dout @ W.T, [x.T @ dout, dout.sum(axis=0)]


def relu_forward(params, x):
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(params, cache, dout):
    # subgradient at exactly 0 is 0
    return np.where(cache, dout, 0.0), []


def conv2d_forward(params, x, padding: int = 0):
    """Stride-1 cross-correlation via im2col."""
    K, b = params
    if x.ndim != 4 or K.ndim != 4 or x.shape[1] != K.shape[1] or b.shape != (K.shape[0],):
        raise ShapeMismatch(f"conv2d: input {x.shape} vs kernel {K.shape}, bias {b.shape}")
    n, cin, h, w = x.shape
    cout, _, kh, kw = K.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    ho, wo = xp.shape[2] - kh + 1, xp.shape[3] - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"conv2d: kernel {kh}x{kw} larger than padded input")
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # n, cin, ho, wo, kh, kw
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
    out = cols @ K.reshape(cout, -1).T + b
    out = out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (cols, x.shape, padding)


def conv2d_backward(params, cache, dout):
    K, _ = params
    cols, xshape, padding = cache
    n, cin, h, w = xshape
    cout, _, kh, kw = K.shape
    ho, wo = dout.shape[2], dout.shape[3]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, cout)
    dK = (d2.T @ cols).reshape(K.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ K.reshape(cout, -1)).reshape(n, ho, wo, cin, kh, kw)
    dxp = np.zeros((n, cin, h + 2 * padding, w + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
    return dx, [dK, db]


def maxpool2d_forward(params, x, size: int = 2):
    """Non-overlapping ``size x size`` max pooling; H and W must divide evenly.

    On ties inside a window the first maximum in row-major order receives
    the gradient.
    """
    if x.ndim != 4 or x.shape[2] % size or x.shape[3] % size:
        raise ShapeMismatch(f"maxpool2d: input {x.shape} not divisible by {size}")
    n, c, h, w = x.shape
    ho, wo = h // size, w // size
    win = x.reshape(n, c, ho, size, wo, size).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, size * size)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape, size)


def maxpool2d_backward(params, cache, dout):
    arg, xshape, size = cache
    n, c, h, w = xshape
    ho, wo = h // size, w // size
    dwin = np.zeros((n, c, ho, wo, size * size))
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dx = dwin.reshape(n, c, ho, wo, size, size).transpose(0, 1, 2, 4, 3, 5).reshape(xshape)
    return dx, []


def l2norm_forward(params, x):
    if x.ndim != 2:
        raise ShapeMismatch(f"l2norm expects (N, D) rows, got {x.shape}")
    norms = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
    if np.any(norms < L2_MIN_NORM):
        bad = int(np.argmin(norms[:, 0]))
        raise NumericalUnderflow(f"row {bad} has norm {float(norms[bad, 0]):.3g} < {L2_MIN_NORM}")
    y = x / norms
    return y, (y, norms)


def l2norm_backward(params, cache, dout):
    y, norms = cache
    # Jacobian of v/|v| is (I - y y^T)/|v|
    radial = np.sum(y * dout, axis=1, keepdims=True)
    return (dout - y * radial) / norms, []


_FORWARD = {
    "affine": affine_forward,
    "relu": relu_forward,
    "conv2d": conv2d_forward,
    "maxpool2d": maxpool2d_forward,
    "l2norm": l2norm_forward,
}
_BACKWARD = {
    "affine": affine_backward,
    "relu": relu_backward,
    "conv2d": conv2d_backward,
    "maxpool2d": maxpool2d_backward,
    "l2norm": l2norm_backward,
}


def forward(kind, params, x, **opts):
    try:
        fn = _FORWARD[kind]
    except KeyError:
        raise ValueError(f"unknown layer kind {kind!r}") from None
    return fn(params, x, **opts)


def backward(kind, params, cache, dout):
    return _BACKWARD[kind](params, cache, dout)


def layer_forward_backward(kind, params, x, upstream_grad, **opts):
    """One layer's output plus the gradients of ``<output, upstream_grad>``.

    Returns ``(output, input_grad, param_grads)``; ``param_grads`` is a list
    aligned with ``params`` (empty for parameter-free layers).
    """
    params = list(params or [])
    out, cache = forward(kind, params, x, **opts)
    if upstream_grad.shape != out.shape:
        raise ShapeMismatch(f"{kind}: upstream grad {upstream_grad.shape} vs output {out.shape}")
    dx, grads = backward(kind, params, cache, upstream_grad)
    return out, dx, grads
