"""Storing-activation backprop oracle for the reversible branch.

Runs its own forward pass keeping every intermediate tensor, then walks the
stored graph backwards with textbook chain-rule steps.  No recomputation
anywhere, so it is an independent check of the recompute-based backward.
"""

import numpy as np

from duplexsim.nn import ops


def _f(x, w):
    pre = ops.conv2d(x, w)
    return np.maximum(pre, 0.0), pre


def storing_block_forward(x1, x2, w1, w2):
    a1, pre1 = _f(x1, w1)
    y2 = x2 + a1
    a2, pre2 = _f(y2, w2)
    y1 = x1 + a2
    return y1, y2, {"x1": x1, "x2": x2, "y2": y2, "pre1": pre1, "pre2": pre2}


def storing_block_backward(g1, g2, stash, w1, w2):
    """Returns (dx1, dx2, dw1, dw2) from stored activations."""
    k = w1.shape[2]
    dpre2 = g1 * (stash["pre2"] > 0.0)
    dw2 = ops.conv2d_weight_grad(stash["y2"], dpre2, k)
    dy2 = g2 + ops.conv2d_input_grad(dpre2, w2)
    dx1 = g1.copy()
    dpre1 = dy2 * (stash["pre1"] > 0.0)
    dw1 = ops.conv2d_weight_grad(stash["x1"], dpre1, k)
    dx1 += ops.conv2d_input_grad(dpre1, w1)
    dx2 = dy2
    return dx1, dx2, dw1, dw2


def storing_network_gradients(model, x, labels):
    """Full-network gradients for a reversible-variant model, storing all
    branch activations.  Mirrors the model's frozen plumbing, replaces its
    backward entirely."""
    spec = model.spec
    assert spec.variant in ("dudnn", "ca", "bo")
    need_backbone = spec.variant in ("dudnn", "ca")
    feats = model._backbone_features(x) if need_backbone else [x] * spec.num_blocks
    inject = model._injections(x, feats)
    z = model._branch_input(x, feats)

    stashes = []
    x1 = x2 = z
    for l, blk in enumerate(model.branch):
        x2_eff = x2 + inject[l] if inject[l] is not None else x2
        y1, y2, st = storing_block_forward(x1, x2_eff, blk.f1.weight, blk.f2.weight)
        stashes.append(st)
        x1, x2 = y1, y2

    feats_h = np.concatenate([ops.global_avg_pool(x1), ops.global_avg_pool(x2)], axis=1)
    logits = feats_h @ model.head_w.T + model.head_b
    loss, dlogits = ops.softmax_cross_entropy(logits, labels)

    grads = {"head.w": dlogits.T @ feats_h, "head.b": dlogits.sum(axis=0)}
    dfeats = dlogits @ model.head_w
    c = spec.branch_channels
    hw = x1.shape[2:]
    g1 = ops.global_avg_pool_grad(dfeats[:, :c], hw)
    g2 = ops.global_avg_pool_grad(dfeats[:, c:], hw)

    for l in range(spec.num_blocks - 1, -1, -1):
        blk = model.branch[l]
        g1, g2, dw1, dw2 = storing_block_backward(g1, g2, stashes[l], blk.f1.weight, blk.f2.weight)
        grads[f"branch.{l}.f1.weight"] = dw1
        grads[f"branch.{l}.f2.weight"] = dw2
    return loss, logits, grads
