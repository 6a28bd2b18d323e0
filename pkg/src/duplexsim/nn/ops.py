"""Dense float64 layer primitives with hand-rolled gradients.

Everything is stride-1 'same' convolution on NCHW tensors, implemented via
im2col + matmul.  Gradients are written out explicitly (no autodiff); the
test suite checks them against finite differences and a storing-backprop
reference.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """(B,C,H,W) -> (B,H,W,C*k*k) patch matrix for stride-1 convolution."""
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # B,C,Ho,Wo,k,k
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        x.shape[0], win.shape[2], win.shape[3], -1
    )


def conv2d(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 convolution: x (B,C,H,W), w (O,C,k,k) -> (B,O,H,W)."""
    k = w.shape[2]
    cols = _im2col(x, k, k // 2)
    out = cols @ w.reshape(w.shape[0], -1).T
    return out.transpose(0, 3, 1, 2)


def conv2d_input_grad(gout: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gradient of conv2d w.r.t. its input (transposed convolution)."""
    wt = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    return conv2d(gout, wt)


def conv2d_weight_grad(x: np.ndarray, gout: np.ndarray, k: int) -> np.ndarray:
    """Gradient of conv2d w.r.t. the kernel: correlate input with output grad."""
    cols = _im2col(x, k, k // 2)                       # B,H,W,C*k*k
    g = gout.transpose(0, 2, 3, 1).reshape(-1, gout.shape[1])
    dw = g.T @ cols.reshape(g.shape[0], -1)            # O, C*k*k
    return dw.reshape(gout.shape[1], x.shape[1], k, k)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def avg_pool(x: np.ndarray, factor: int) -> np.ndarray:
    """Average pooling that divides each spatial dim by ``factor``.

    Inputs are zero-padded up to divisibility so output shapes are always
    ceil(H/f) x ceil(W/f).  Used only on frozen paths, so no gradient.
    """
    if factor == 1:
        return x
    b, c, h, w = x.shape
    ph, pw = (-h) % factor, (-w) % factor
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)))
        h, w = h + ph, w + pw
    return x.reshape(b, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(2, 3))


def global_avg_pool_grad(g: np.ndarray, hw: tuple) -> np.ndarray:
    h, w = hw
    return np.broadcast_to(g[:, :, None, None], g.shape + (h, w)).copy() / (h * w)


def project_channels(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Fixed 1x1 channel map: x (B,C,H,W), p (C_out,C_in) -> (B,C_out,H,W)."""
    return np.einsum("oc,bchw->bohw", p, x)


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w.T + b


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy loss and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = -np.log(p[np.arange(n), labels] + 1e-300).mean()
    dlogits = p.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n
