"""Duplex network: frozen backbone chain plus trainable reversible branch.

Four wirings share one parameter layout so learnable counts stay equal:

* ``dudnn``  - reversible branch; block l additionally receives a pooled,
  1x1-projected copy of the backbone's previous-stage output (block 1
  receives the pooled raw input).  Only branch + head train.
* ``fi``     - same injections, but a plain irreversible residual chain that
  stores all intermediate activations for the backward pass.
* ``ca``     - reversible branch fed solely by the backbone's final output
  (single backbone-to-branch connection, no per-block injections).
* ``bo``     - reversible branch on the pooled raw input alone, no backbone.

The backbone is a plain conv chain (conv + folded-normalization bias + ReLU
per stage), optionally pretrained offline, and never receives gradients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from duplexsim.nn import ops
from duplexsim.nn.blocks import (
    EXACT,
    GradientBundle,
    Quantizer,
    ResidualFuncParams,
    ReversibleBlockParams,
    backward_block,
    forward_block,
    residual_func,
)

VARIANTS = ("dudnn", "fi", "ca", "bo")


@dataclass(frozen=True)
class DuDnnSpec:
    """Model shape shared by every variant."""

    num_blocks: int = 2
    variant: str = "dudnn"
    in_channels: int = 3
    in_hw: tuple = (16, 16)
    branch_channels: int = 8
    backbone_channels: int = 8
    num_classes: int = 2
    pool_factor: int = 2
    kernel: int = 3

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")

    @property
    def branch_hw(self) -> tuple:
        f = self.pool_factor
        return (-(-self.in_hw[0] // f), -(-self.in_hw[1] // f))


def build_variant(base: DuDnnSpec, variant: str) -> DuDnnSpec:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    return base if variant == base.variant else replace(base, variant=variant)


@dataclass
class RetainedState:
    """What survives the forward pass for the backward pass.

    ``transient`` holds the large recomputation seeds (eDRAM-class data);
    its cardinality is constant in depth for reversible variants and grows
    linearly for ``fi``.  ``injections`` are the small pooled guidance
    tensors kept in static (SRAM-class) storage.
    """

    transient: dict = field(default_factory=dict)
    injections: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)  # masks etc. for the fi stash

    def transient_count(self) -> int:
        return len(self.transient) + len(self.extras)


def _he_conv(rng, c_out, c_in, k, gain=1.0):
    std = gain * np.sqrt(2.0 / (c_in * k * k))
    return rng.normal(0.0, std, size=(c_out, c_in, k, k))


class DuDnnModel:
    """Parameters plus forward/backward execution for one variant."""

    def __init__(self, spec: DuDnnSpec, seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        L, k = spec.num_blocks, spec.kernel
        cin, cbb, cbr = spec.in_channels, spec.backbone_channels, spec.branch_channels

        # frozen backbone chain: stage 1 maps cin -> cbb, the rest cbb -> cbb
        self.backbone: list[ResidualFuncParams] = []
        for i in range(L - 1):
            src = cin if i == 0 else cbb
            self.backbone.append(
                ResidualFuncParams(
                    weight=_he_conv(rng, cbb, src, k),
                    bias=rng.normal(0.0, 0.05, size=cbb),
                )
            )

        # frozen 1x1 projections: branch input and per-block injections
        def proj(c_src):
            return rng.normal(0.0, 1.0 / np.sqrt(c_src), size=(cbr, c_src))

        input_src = cin if spec.variant != "ca" else (cbb if L > 1 else cin)
        self.input_proj = proj(input_src)
        self.inject_proj: list[np.ndarray | None] = []
        for l in range(L):
            if spec.variant in ("dudnn", "fi"):
                self.inject_proj.append(proj(cin if l == 0 else cbb))
            else:
                self.inject_proj.append(None)

        # trainable branch: L blocks of two convs each, plus the linear head
        self.branch = [
            ReversibleBlockParams(
                f1=ResidualFuncParams(weight=_he_conv(rng, cbr, cbr, k)),
                f2=ResidualFuncParams(weight=_he_conv(rng, cbr, cbr, k)),
            )
            for _ in range(L)
        ]
        self.head_w = rng.normal(0.0, 1.0 / np.sqrt(2 * cbr), size=(spec.num_classes, 2 * cbr))
        self.head_b = np.zeros(spec.num_classes)

    # -- parameter bookkeeping ------------------------------------------------

    def learnable_parameters(self) -> dict:
        params = {}
        for i, blk in enumerate(self.branch):
            params[f"branch.{i}.f1.weight"] = blk.f1.weight
            params[f"branch.{i}.f2.weight"] = blk.f2.weight
        params["head.w"] = self.head_w
        params["head.b"] = self.head_b
        return params

    def frozen_parameters(self) -> dict:
        params = {}
        for i, st in enumerate(self.backbone):
            params[f"backbone.{i}.weight"] = st.weight
            params[f"backbone.{i}.bias"] = st.bias
        params["input_proj"] = self.input_proj
        for i, p in enumerate(self.inject_proj):
            if p is not None:
                params[f"inject_proj.{i}"] = p
        return params

    def learnable_count(self) -> int:
        return sum(p.size for p in self.learnable_parameters().values())

    def learnable_counts_per_layer(self) -> list:
        counts = [b.f1.weight.size + b.f2.weight.size for b in self.branch]
        counts.append(self.head_w.size + self.head_b.size)
        return counts

    # -- shared plumbing --------------------------------------------------------

    def _backbone_features(self, x: np.ndarray) -> list:
        """[input, stage1 out, stage2 out, ...]; length num_blocks."""
        feats = [x]
        h = x
        for st in self.backbone:
            h, _ = residual_func(h, st)
            feats.append(h)
        return feats

    def _injections(self, x: np.ndarray, feats: list) -> list:
        f = self.spec.pool_factor
        out = []
        for l in range(self.spec.num_blocks):
            p = self.inject_proj[l]
            if p is None:
                out.append(None)
            else:
                out.append(ops.project_channels(ops.avg_pool(feats[l], f), p))
        return out

    def _branch_input(self, x: np.ndarray, feats: list) -> np.ndarray:
        f = self.spec.pool_factor
        src = feats[-1] if self.spec.variant == "ca" else x
        return ops.project_channels(ops.avg_pool(src, f), self.input_proj)

    def _head(self, t1: np.ndarray, t2: np.ndarray):
        feats = np.concatenate([ops.global_avg_pool(t1), ops.global_avg_pool(t2)], axis=1)
        return ops.linear(feats, self.head_w, self.head_b), feats

    def _head_backward(self, dlogits, feats, hw):
        dw = dlogits.T @ feats
        db = dlogits.sum(axis=0)
        dfeats = dlogits @ self.head_w
        c = self.spec.branch_channels
        d1 = ops.global_avg_pool_grad(dfeats[:, :c], hw)
        d2 = ops.global_avg_pool_grad(dfeats[:, c:], hw)
        return dw, db, d1, d2

    # -- forward ----------------------------------------------------------------

    def forward(self, x: np.ndarray, q: Quantizer = EXACT):
        if x.shape[1] != self.spec.in_channels or x.shape[2:] != self.spec.in_hw:
            raise ValueError(f"batch shape {x.shape} does not match spec")
        if self.spec.variant == "fi":
            return self._forward_fi(x, q)
        return self._forward_reversible(x, q)

    def _forward_reversible(self, x, q):
        need_backbone = self.spec.variant in ("dudnn", "ca")
        feats = self._backbone_features(x) if need_backbone else [x] * self.spec.num_blocks
        inject = self._injections(x, feats)
        z = q(self._branch_input(x, feats))
        x1 = x2 = z
        for l, blk in enumerate(self.branch):
            x2_eff = q(x2 + inject[l]) if inject[l] is not None else x2
            x1, x2 = forward_block(x1, x2_eff, blk, q)  # returns (y1, y2)
        y1, y2 = x1, x2
        logits, _ = self._head(y1, y2)
        return logits, RetainedState(
            transient={"y1": y1, "y2": y2}, injections=inject
        )

    def _forward_fi(self, x, q):
        feats = self._backbone_features(x)
        inject = self._injections(x, feats)
        s = q(self._branch_input(x, feats))
        transient = {"s0": s}
        extras = {}
        for l, blk in enumerate(self.branch):
            sin = s + inject[l] if inject[l] is not None else s
            h1, pre1 = residual_func(sin, blk.f1, q)
            a = q(sin + h1)
            h2, pre2 = residual_func(a, blk.f2, q)
            s = q(a + h2)
            transient[f"a{l + 1}"] = a
            transient[f"s{l + 1}"] = s
            extras[f"pre1_{l + 1}"] = pre1
            extras[f"pre2_{l + 1}"] = pre2
        logits, _ = self._head(transient[f"a{self.spec.num_blocks}"], s)
        return logits, RetainedState(transient=transient, injections=inject, extras=extras)

    # -- backward ---------------------------------------------------------------

    def backward(self, retained: RetainedState, dlogits: np.ndarray,
                 q: Quantizer = EXACT, reader=None):
        """Gradients for every learnable parameter; the backbone gets none.

        ``reader(tag, x)`` models memory readout (fault injection); ``tag``
        is ``"stored"`` for data retained across the forward/backward
        boundary and ``"fresh"`` for recomputed or in-flight values.
        """
        rd = reader if reader is not None else (lambda tag, x: x)
        if self.spec.variant == "fi":
            return self._backward_fi(retained, dlogits, q, rd)
        return self._backward_reversible(retained, dlogits, q, rd)

    def _backward_reversible(self, retained, dlogits, q, rd):
        y1 = rd("stored", retained.transient["y1"])
        y2 = rd("stored", retained.transient["y2"])
        _, feats = self._head(y1, y2)
        dw, db, g1, g2 = self._head_backward(dlogits, feats, y1.shape[2:])
        grads = {"head.w": dw, "head.b": db}
        for l in range(self.spec.num_blocks - 1, -1, -1):
            bundle, x1, x2_eff = backward_block(g1, g2, y1, y2, self.branch[l], q)
            grads[f"branch.{l}.f1.weight"] = bundle.q1
            grads[f"branch.{l}.f2.weight"] = bundle.q2
            u = retained.injections[l]
            x2 = x2_eff - u if u is not None else x2_eff
            y1, y2 = rd("fresh", x1), rd("fresh", x2)
            g1, g2 = rd("fresh", bundle.s), rd("fresh", bundle.m)
        return grads

    def _backward_fi(self, retained, dlogits, q, rd):
        L = self.spec.num_blocks
        aL = rd("stored", retained.transient[f"a{L}"])
        sL = rd("stored", retained.transient[f"s{L}"])
        _, feats = self._head(aL, sL)
        dw, db, da_head, ds = self._head_backward(dlogits, feats, sL.shape[2:])
        grads = {"head.w": dw, "head.b": db}
        for l in range(L, 0, -1):
            a = rd("stored", retained.transient[f"a{l}"])
            s_in = rd("stored", retained.transient[f"s{l - 1}"])
            if retained.injections[l - 1] is not None:
                s_in = s_in + retained.injections[l - 1]
            mask2 = rd("stored", retained.extras[f"pre2_{l}"]) > 0.0
            mask1 = rd("stored", retained.extras[f"pre1_{l}"]) > 0.0
            blk = self.branch[l - 1]

            dsm = ds * mask2
            da = q(ds + q(ops.conv2d_input_grad(dsm, blk.f2.weight)))
            if l == L:
                da = da + da_head
            grads[f"branch.{l - 1}.f2.weight"] = q(ops.conv2d_weight_grad(a, dsm, blk.f2.kernel))
            dam = da * mask1
            ds = q(da + q(ops.conv2d_input_grad(dam, blk.f1.weight)))
            grads[f"branch.{l - 1}.f1.weight"] = q(ops.conv2d_weight_grad(s_in, dam, blk.f1.kernel))
            ds = rd("fresh", ds)
        return grads


# ---------------------------------------------------------------------------
# checkpoint serialization: a small JSON header (name -> shape, offset) padded
# to 8 bytes, followed by contiguous little-endian float64 tensor data.
# ---------------------------------------------------------------------------

MAGIC = b"DSX1"


def save_checkpoint(path, tensors: dict):
    names = sorted(tensors)
    header = {}
    offset = 0
    for n in names:
        t = np.ascontiguousarray(tensors[n], dtype="<f8")
        header[n] = {"shape": list(t.shape), "offset": offset}
        offset += t.nbytes
    hdr = json.dumps(header, sort_keys=True).encode()
    pad = (-len(hdr)) % 8
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(len(hdr) + pad).tobytes())
        f.write(hdr + b" " * pad)
        for n in names:
            f.write(np.ascontiguousarray(tensors[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError("not a duplexsim checkpoint")
        hlen = int(np.frombuffer(f.read(4), dtype=np.uint32)[0])
        header = json.loads(f.read(hlen).decode())
        blob = f.read()
    out = {}
    for n, meta in header.items():
        shape = tuple(meta["shape"])
        size = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
        arr = np.frombuffer(blob, dtype="<f8", count=size // 8, offset=meta["offset"])
        out[n] = arr.reshape(shape).copy()
    return out
