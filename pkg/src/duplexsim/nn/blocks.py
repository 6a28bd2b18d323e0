"""Residual functions and the reversible two-stream block.

Block equations (evaluated in this order):

    y2 = x2 + F1(x1)
    y1 = x1 + F2(y2)

and the exact inverse

    x1 = y1 - F2(y2)
    x2 = y2 - F1(x1)

The backward pass recomputes (x1, x2) from (y1, y2) and produces the input
gradient ``s``, the intermediate gradient ``m`` and the two weight gradients,
so no forward activation ever needs to be stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from duplexsim.bfp import BfpConfig, dequantize_tensor, quantize_tensor
from duplexsim.nn import ops


class ShapeError(ValueError):
    pass


@dataclass
class ResidualFuncParams:
    """conv -> (folded bias) -> ReLU.  Branch instances carry no bias."""

    weight: np.ndarray            # (C_out, C_in, k, k)
    bias: np.ndarray | None = None  # folded normalization shift, backbone only

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]


@dataclass
class ReversibleBlockParams:
    f1: ResidualFuncParams
    f2: ResidualFuncParams


@dataclass
class GradientBundle:
    """Outputs of one block's backward pass."""

    s: np.ndarray    # gradient w.r.t. x1
    m: np.ndarray    # gradient w.r.t. x2 (intermediate sum)
    q1: np.ndarray   # gradient w.r.t. f1.weight
    q2: np.ndarray   # gradient w.r.t. f2.weight


class Quantizer:
    """Producer-boundary BFP quantization hook.

    With ``cfg=None`` this is the identity (exact float64 mode); otherwise
    each produced tensor is snapped to its BFP representation, grouping along
    the channel (contraction) axis.
    """

    def __init__(self, cfg: BfpConfig | None = None):
        self.cfg = cfg

    def __call__(self, x: np.ndarray, axis: int = 1) -> np.ndarray:
        if self.cfg is None:
            return x
        return dequantize_tensor(quantize_tensor(x, axis=axis, cfg=self.cfg))


EXACT = Quantizer(None)


def residual_func(x: np.ndarray, p: ResidualFuncParams, q: Quantizer = EXACT):
    """Apply F(x) = relu(conv(x) [+ bias]); returns (activation, pre-activation)."""
    pre = ops.conv2d(x, p.weight)
    if p.bias is not None:
        pre = pre + p.bias[None, :, None, None]
    pre = q(pre)
    return ops.relu(pre), pre


def forward_block(x1, x2, params: ReversibleBlockParams, q: Quantizer = EXACT):
    """y2 = x2 + F1(x1); y1 = x1 + F2(y2), in that order."""
    if x1.shape != x2.shape:
        raise ShapeError(f"stream shapes differ: {x1.shape} vs {x2.shape}")
    a1, _ = residual_func(x1, params.f1, q)
    y2 = q(x2 + a1)
    a2, _ = residual_func(y2, params.f2, q)
    y1 = q(x1 + a2)
    return y1, y2


def invert_block(y1, y2, params: ReversibleBlockParams, q: Quantizer = EXACT):
    """Exact inverse of forward_block (up to quantization in BFP mode)."""
    if y1.shape != y2.shape:
        raise ShapeError(f"stream shapes differ: {y1.shape} vs {y2.shape}")
    a2, _ = residual_func(y2, params.f2, q)
    x1 = q(y1 - a2)
    a1, _ = residual_func(x1, params.f1, q)
    x2 = q(y2 - a1)
    return x1, x2


def backward_block(g1, g2, y1, y2, params: ReversibleBlockParams, q: Quantizer = EXACT):
    """Recomputation backward pass for one block.

    Returns (bundle, x1, x2) where (x1, x2) are the recomputed block inputs
    and bundle.s / bundle.m are the gradients flowing to them.  ReLU masks
    come from the recomputed pre-activations.
    """
    if not (g1.shape == g2.shape == y1.shape == y2.shape):
        raise ShapeError("gradient/activation shapes inconsistent")
    k1 = params.f1.kernel
    k2 = params.f2.kernel

    # recompute inputs (Eq. 2 order) keeping the pre-activation masks
    a2, pre2 = residual_func(y2, params.f2, q)
    x1 = q(y1 - a2)
    a1, pre1 = residual_func(x1, params.f1, q)
    x2 = q(y2 - a1)

    mask2 = pre2 > 0.0
    mask1 = pre1 > 0.0

    g1m = g1 * mask2
    m = q(g2 + q(ops.conv2d_input_grad(g1m, params.f2.weight)))
    mm = m * mask1
    s = q(g1 + q(ops.conv2d_input_grad(mm, params.f1.weight)))
    q2 = q(ops.conv2d_weight_grad(y2, g1m, k2))
    q1 = q(ops.conv2d_weight_grad(x1, mm, k1))
    return GradientBundle(s=s, m=m, q1=q1, q2=q2), x1, x2
