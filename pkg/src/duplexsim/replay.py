"""Execute pseudo-instruction schedules with real tensors.

The interpreter binds each instruction to the owning model's weights and
runs it against a buffer store, reproducing exactly what the training engine
computes.  Used to validate that schedules implement the same dataflow as
the engine, and by the harness to derive per-instruction operand streams.
"""

from __future__ import annotations

import numpy as np

from duplexsim.nn import ops
from duplexsim.nn.model import DuDnnModel, DuDnnSpec
from duplexsim.scheduling import ConvDims, LayerDims, Schedule, ScheduleError


def model_layer_dims(spec: DuDnnSpec, batch: int) -> list:
    """Per-round convolution shapes for a model spec.

    The backbone stage executed in round l feeds round l+1's injection, so
    rounds 1..L-1 carry a G stage and the final round has none.
    """
    bw, bh = spec.branch_hw
    w, h = spec.in_hw
    cbr, cbb, cin, k = (spec.branch_channels, spec.backbone_channels,
                        spec.in_channels, spec.kernel)
    out = []
    for l in range(1, spec.num_blocks + 1):
        f = ConvDims(batch, cbr, cbr, bw, bh, k)
        g = None
        if l <= spec.num_blocks - 1:
            g = ConvDims(batch, cin if l == 1 else cbb, cbb, w, h, k)
        out.append(LayerDims(f1=f, f2=f, g=g))
    return out


def _pool_project(model: DuDnnModel, x, proj):
    pooled = ops.avg_pool(x, model.spec.pool_factor)
    return ops.project_channels(pooled, proj)


def _relu_conv(x, w):
    return np.maximum(ops.conv2d(x, w), 0.0)


def replay_forward(schedule: Schedule, model: DuDnnModel, x: np.ndarray) -> dict:
    """Run a forward schedule; returns the final buffer store."""
    spec = model.spec
    store: dict = {}
    for ins in schedule.instructions:
        op, l = ins.opcode, ins.layer
        if op == "LOAD":
            store[ins.output] = x
        elif op == "POOL":
            src = store[ins.inputs[0]]
            if ins.output.startswith("u."):
                store[ins.output] = _pool_project(model, src, model.inject_proj[l - 1])
            else:
                store[ins.output] = _pool_project(model, src, model.input_proj)
        elif op == "CONV_G":
            st = model.backbone[l - 1]
            pre = ops.conv2d(store[ins.inputs[0]], st.weight) + st.bias[None, :, None, None]
            store[ins.output] = np.maximum(pre, 0.0)
        elif op == "CONV_F1":
            blk = model.branch[l - 1]
            if spec.variant == "fi":
                s_in, bb = (store[n] for n in ins.inputs)
                u = _pool_project(model, bb, model.inject_proj[l - 1])
                s_in = s_in + u
                store[ins.output] = s_in + _relu_conv(s_in, blk.f1.weight)
            elif spec.variant == "dudnn":
                s1, s2, bb = (store[n] for n in ins.inputs)
                u = _pool_project(model, bb, model.inject_proj[l - 1])
                store[ins.output] = s2 + u + _relu_conv(s1, blk.f1.weight)
            else:
                s1, s2 = (store[n] for n in ins.inputs)
                store[ins.output] = s2 + _relu_conv(s1, blk.f1.weight)
        elif op == "CONV_F2":
            blk = model.branch[l - 1]
            if spec.variant == "fi":
                a = store[ins.inputs[0]]
                store[ins.output] = a + _relu_conv(a, blk.f2.weight)
            else:
                s2, s1 = (store[n] for n in ins.inputs)
                store[ins.output] = s1 + _relu_conv(s2, blk.f2.weight)
        elif op == "HEAD":
            t1, t2 = (store[n] for n in ins.inputs)
            store[ins.output] = model._head(t1, t2)[0]
        else:
            raise ScheduleError(f"unexpected opcode in forward replay: {op}")
    return store


def replay_backward(schedule: Schedule, model: DuDnnModel, preload: dict) -> dict:
    """Run a standalone backward schedule given retained tensors and the two
    loss-gradient streams; returns the buffer store (weight gradients under
    their q1.l / q2.l names)."""
    spec = model.spec
    if spec.variant == "fi":
        raise ScheduleError("fi backward replay is handled by the engine stash path")
    store: dict = {}
    for ins in schedule.instructions:
        op, l = ins.opcode, ins.layer
        if op == "LOAD":
            store[ins.output] = preload[ins.output]
        elif op == "RECOMPUTE_F2":
            blk = model.branch[l - 1]
            s2, s1 = (store[n] for n in ins.inputs)
            store[ins.output] = s1 - _relu_conv(s2, blk.f2.weight)
        elif op == "WGRAD_U2W":
            blk = model.branch[l - 1]
            g1, s2 = (store[n] for n in ins.inputs)
            mask2 = ops.conv2d(s2, blk.f2.weight) > 0.0
            store[ins.output] = ops.conv2d_weight_grad(s2, g1 * mask2, blk.f2.kernel)
        elif op == "INVGRAD_U2A":
            blk = model.branch[l - 1]
            g1, g2 = (store[n] for n in ins.inputs)
            mask2 = ops.conv2d(store[f"s2.{l}"], blk.f2.weight) > 0.0
            store[ins.output] = g2 + ops.conv2d_input_grad(g1 * mask2, blk.f2.weight)
        elif op == "RECOMPUTE_F1":
            blk = model.branch[l - 1]
            parts = [store[n] for n in ins.inputs]
            x1, s2 = parts[0], parts[1]
            rec = s2 - _relu_conv(x1, blk.f1.weight)
            if len(parts) == 3:
                rec = rec - parts[2]
            store[ins.output] = rec
        elif op == "WGRAD_U1W":
            blk = model.branch[l - 1]
            m, x1 = (store[n] for n in ins.inputs)
            mask1 = ops.conv2d(x1, blk.f1.weight) > 0.0
            store[ins.output] = ops.conv2d_weight_grad(x1, m * mask1, blk.f1.kernel)
        elif op == "INVGRAD_U1A":
            blk = model.branch[l - 1]
            m, g1 = (store[n] for n in ins.inputs)
            mask1 = ops.conv2d(store[f"s1.{l - 1}"], blk.f1.weight) > 0.0
            store[ins.output] = g1 + ops.conv2d_input_grad(m * mask1, blk.f1.weight)
        else:
            raise ScheduleError(f"unexpected opcode in backward replay: {op}")
    return store
