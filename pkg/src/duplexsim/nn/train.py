"""Mini-batch SGD training of the branch + head, with optional BFP arithmetic
and eDRAM readout fault injection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from duplexsim import memory
from duplexsim.bfp import BfpConfig
from duplexsim.nn import ops
from duplexsim.nn.blocks import Quantizer, residual_func
from duplexsim.nn.model import DuDnnModel


class DivergenceError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class FaultConfig:
    """Engine-side readout fault settings.

    ``expired`` simulates unrefreshed data outliving its retention window:
    every read of data stored across the forward/backward boundary returns
    pure noise.  Otherwise each read survives with probability ``read_yield``.
    """

    read_yield: float = 1.0
    expired: bool = False
    seed: int = 0


@dataclass
class TrainConfig:
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 32
    epochs: int = 15
    seed: int = 0
    bfp: BfpConfig | None = None
    fault: FaultConfig | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class TrainResult:
    val_accuracy: list = field(default_factory=list)   # per epoch
    train_loss: list = field(default_factory=list)
    steps: int = 0

    @property
    def final_accuracy(self) -> float:
        return self.val_accuracy[-1] if self.val_accuracy else 0.0


def _make_reader(fault: FaultConfig | None):
    if fault is None or (fault.read_yield >= 1.0 and not fault.expired):
        return None
    rng = np.random.default_rng(fault.seed)

    def reader(tag, x):
        if fault.expired and tag == "stored":
            return memory.random_readout(x.shape, rng)
        return memory.noisy_read(x, fault.read_yield, rng)

    return reader


class SgdState:
    """SGD with momentum and decoupled-from-nothing classic weight decay:
    v <- mu * v - lr * (g + wd * w);  w <- w + v."""

    def __init__(self, params: dict, lr, momentum, weight_decay):
        self.lr, self.mu, self.wd = lr, momentum, weight_decay
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict):
        for k, w in params.items():
            v = self.velocity[k]
            v *= self.mu
            v -= self.lr * (grads[k] + self.wd * w)
            w += v


def evaluate(model: DuDnnModel, x, y, q: Quantizer, batch_size=256) -> float:
    hits = 0
    for i in range(0, len(x), batch_size):
        logits, _ = model.forward(x[i:i + batch_size], q)
        hits += int((logits.argmax(axis=1) == y[i:i + batch_size]).sum())
    return hits / len(x)


def train(model: DuDnnModel, cfg: TrainConfig, dataset: dict,
          step_callback=None) -> TrainResult:
    """Train branch + head; backbone and projections stay bit-identical.

    ``dataset`` needs x_train/y_train/x_val/y_val.  ``step_callback(step)``
    lets the harness attach modeled latency/energy accounting per step.
    """
    rng = np.random.default_rng(cfg.seed)
    q = Quantizer(cfg.bfp)
    reader = _make_reader(cfg.fault)
    params = model.learnable_parameters()
    if cfg.bfp is not None:
        for w in params.values():
            if w.ndim >= 2:  # weights quantized at load
                w[...] = q(w, axis=1 if w.ndim == 4 else -1)
    opt = SgdState(params, cfg.lr, cfg.momentum, cfg.weight_decay)

    x_train, y_train = dataset["x_train"], dataset["y_train"]
    result = TrainResult()
    n = len(x_train)
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        nb = 0
        for i in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            logits, retained = model.forward(x_train[idx], q)
            loss, dlogits = ops.softmax_cross_entropy(logits, y_train[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at step {result.steps}")
            grads = model.backward(retained, dlogits, q, reader)
            opt.step(params, grads)
            if cfg.bfp is not None:
                for w in params.values():
                    if w.ndim >= 2:  # weights requantized at update
                        w[...] = q(w, axis=1 if w.ndim == 4 else -1)
            epoch_loss += loss
            nb += 1
            result.steps += 1
            if step_callback is not None:
                step_callback(result.steps)
        result.train_loss.append(epoch_loss / max(nb, 1))
        result.val_accuracy.append(evaluate(model, dataset["x_val"], dataset["y_val"], q))
    return result


# ---------------------------------------------------------------------------
# offline backbone pretraining (frozen afterwards)
# ---------------------------------------------------------------------------

def pretrain_backbone(model: DuDnnModel, x, y, epochs=6, lr=0.05, batch_size=64,
                      seed=0) -> list:
    """Supervised pretraining of the plain backbone conv chain.

    Trains backbone weights/biases with a throwaway linear probe on the
    flattened final feature map, then leaves them in place to act as the
    frozen feature extractor.  Returns the per-epoch probe accuracy.
    """
    if not model.backbone:
        return []
    rng = np.random.default_rng(seed)
    cbb = model.backbone[-1].weight.shape[0]
    h0, w0 = model.spec.in_hw
    feat_dim = cbb * h0 * w0
    k_cls = int(y.max()) + 1
    probe_w = rng.normal(0.0, 1.0 / np.sqrt(feat_dim), size=(k_cls, feat_dim))
    probe_b = np.zeros(k_cls)
    vel = {}

    def sgd(name, w, g, mu=0.9, wd=5e-4):
        v = vel.setdefault(name, np.zeros_like(w))
        v *= mu
        v -= lr * (g + wd * w)
        w += v

    history = []
    n = len(x)
    for _ in range(epochs):
        order = rng.permutation(n)
        hits = total = 0
        for i in range(0, n - batch_size + 1, batch_size):
            idx = order[i:i + batch_size]
            xb, yb = x[idx], y[idx]
            acts = [xb]
            pres = []
            h = xb
            for st in model.backbone:
                h, pre = residual_func(h, st)
                acts.append(h)
                pres.append(pre)
            feats = h.reshape(len(xb), -1)
            logits = ops.linear(feats, probe_w, probe_b)
            _, dlogits = ops.softmax_cross_entropy(logits, yb)
            hits += int((logits.argmax(axis=1) == yb).sum())
            total += len(yb)

            dfeats = dlogits @ probe_w
            sgd("probe_w", probe_w, dlogits.T @ feats)
            sgd("probe_b", probe_b, dlogits.sum(axis=0))
            dh = dfeats.reshape(h.shape)
            for si in range(len(model.backbone) - 1, -1, -1):
                st = model.backbone[si]
                dpre = dh * (pres[si] > 0.0)
                sgd(f"w{si}", st.weight,
                    ops.conv2d_weight_grad(acts[si], dpre, st.kernel))
                sgd(f"b{si}", st.bias, dpre.sum(axis=(0, 2, 3)))
                if si:
                    dh = ops.conv2d_input_grad(dpre, st.weight)
        history.append(hits / max(total, 1))
    return history
