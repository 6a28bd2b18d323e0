import numpy as np
import pytest

from duplexsim.nn.model import (
    DuDnnModel,
    DuDnnSpec,
    build_variant,
    load_checkpoint,
    save_checkpoint,
)
from duplexsim.nn import ops
from reference_backprop import storing_network_gradients

SPEC = DuDnnSpec(
    num_blocks=3, in_channels=3, in_hw=(8, 8), branch_channels=4,
    backbone_channels=5, num_classes=3, pool_factor=2,
)


def batch(rng, spec=SPEC, b=4):
    x = rng.normal(size=(b, spec.in_channels) + spec.in_hw)
    y = rng.integers(0, spec.num_classes, size=b)
    return x, y


def test_build_variant_identity_and_errors():
    assert build_variant(SPEC, "dudnn") is SPEC
    assert build_variant(SPEC, "fi").variant == "fi"
    with pytest.raises(ValueError):
        build_variant(SPEC, "resnet")
    with pytest.raises(ValueError):
        DuDnnSpec(variant="nope")


def test_learnable_parameter_counts_equal_across_variants():
    counts = {}
    for v in ("dudnn", "fi", "ca", "bo"):
        m = DuDnnModel(build_variant(SPEC, v), seed=1)
        counts[v] = m.learnable_counts_per_layer()
    ref = counts["dudnn"]
    for v, c in counts.items():
        assert c == ref, f"{v} differs: {c} vs {ref}"


def test_ca_has_single_backbone_connection():
    m = DuDnnModel(build_variant(SPEC, "ca"), seed=0)
    assert all(p is None for p in m.inject_proj)
    # branch input projected from backbone channels, not raw input
    assert m.input_proj.shape[1] == SPEC.backbone_channels


def test_bo_never_touches_backbone():
    m = DuDnnModel(build_variant(SPEC, "bo"), seed=0)
    for st in m.backbone:
        st.weight[...] = np.nan  # would poison the output if evaluated
    rng = np.random.default_rng(0)
    x, _ = batch(rng)
    logits, retained = m.forward(x)
    assert np.all(np.isfinite(logits))
    assert all(u is None for u in retained.injections)


def test_retained_state_scaling_with_depth():
    dudnn_counts, fi_counts = [], []
    rng = np.random.default_rng(1)
    for L in (2, 4, 8):
        spec = DuDnnSpec(num_blocks=L, in_channels=3, in_hw=(8, 8),
                         branch_channels=4, backbone_channels=4, num_classes=2)
        x = rng.normal(size=(2, 3, 8, 8))
        _, r = DuDnnModel(spec, seed=0).forward(x)
        dudnn_counts.append(r.transient_count())
        _, r = DuDnnModel(build_variant(spec, "fi"), seed=0).forward(x)
        fi_counts.append(r.transient_count())
    assert dudnn_counts[0] == dudnn_counts[1] == dudnn_counts[2] == 2
    diffs = np.diff(fi_counts)
    assert (diffs > 0).all()
    # linear growth: constant increment per extra block
    assert fi_counts[2] - fi_counts[1] == 2 * (fi_counts[1] - fi_counts[0])


@pytest.mark.parametrize("L", [2, 4, 8])
@pytest.mark.parametrize("variant", ["dudnn", "ca", "bo"])
def test_recompute_gradients_match_storing_backprop(L, variant):
    spec = DuDnnSpec(num_blocks=L, variant=variant, in_channels=3, in_hw=(8, 8),
                     branch_channels=4, backbone_channels=5, num_classes=3)
    model = DuDnnModel(spec, seed=2)
    rng = np.random.default_rng(L)
    x, y = batch(rng, spec)
    logits, retained = model.forward(x)
    _, dlogits = ops.softmax_cross_entropy(logits, y)
    grads = model.backward(retained, dlogits)
    ref_loss, ref_logits, ref = storing_network_gradients(model, x, y)
    assert np.abs(logits - ref_logits).max() <= 1e-10
    assert set(grads) == set(ref)
    for k in ref:
        denom = max(np.abs(ref[k]).max(), 1e-30)
        assert np.abs(grads[k] - ref[k]).max() / denom <= 1e-10, k


def test_fi_gradients_match_finite_differences():
    spec = DuDnnSpec(num_blocks=2, variant="fi", in_channels=3, in_hw=(8, 8),
                     branch_channels=4, backbone_channels=4, num_classes=2)
    model = DuDnnModel(spec, seed=3)
    rng = np.random.default_rng(9)
    x, y = batch(rng, spec)

    logits, retained = model.forward(x)
    _, dlogits = ops.softmax_cross_entropy(logits, y)
    grads = model.backward(retained, dlogits)

    def loss_now():
        lg, _ = model.forward(x)
        return ops.softmax_cross_entropy(lg, y)[0]

    eps = 1e-5
    params = model.learnable_parameters()
    for name in ("branch.0.f1.weight", "branch.1.f2.weight", "head.w"):
        w = params[name]
        for _ in range(4):
            idx = tuple(rng.integers(0, s) for s in w.shape)
            keep = w[idx]
            w[idx] = keep + eps
            lp = loss_now()
            w[idx] = keep - eps
            lm = loss_now()
            w[idx] = keep
            fd = (lp - lm) / (2 * eps)
            if abs(fd) < 1e-8:
                continue
            assert abs(grads[name][idx] - fd) / abs(fd) <= 1e-4, name


def test_sampled_gradient_finite_differences_dudnn():
    model = DuDnnModel(SPEC, seed=4)
    rng = np.random.default_rng(10)
    x, y = batch(rng)
    logits, retained = model.forward(x)
    _, dlogits = ops.softmax_cross_entropy(logits, y)
    grads = model.backward(retained, dlogits)

    eps = 1e-5
    params = model.learnable_parameters()
    checked = 0
    for name, w in params.items():
        for _ in range(3):
            idx = tuple(rng.integers(0, s) for s in w.shape)
            keep = w[idx]
            w[idx] = keep + eps
            lp = ops.softmax_cross_entropy(model.forward(x)[0], y)[0]
            w[idx] = keep - eps
            lm = ops.softmax_cross_entropy(model.forward(x)[0], y)[0]
            w[idx] = keep
            fd = (lp - lm) / (2 * eps)
            if abs(fd) < 1e-8:
                continue
            assert abs(grads[name][idx] - fd) / abs(fd) <= 1e-4, name
            checked += 1
    assert checked >= 10


def test_checkpoint_roundtrip(tmp_path):
    model = DuDnnModel(SPEC, seed=5)
    tensors = {**model.learnable_parameters(), **model.frozen_parameters()}
    path = tmp_path / "model.bin"
    save_checkpoint(path, tensors)
    back = load_checkpoint(path)
    assert set(back) == set(tensors)
    for k in tensors:
        assert np.array_equal(back[k], tensors[k])


def test_bad_batch_shape_rejected():
    model = DuDnnModel(SPEC, seed=0)
    with pytest.raises(ValueError):
        model.forward(np.zeros((2, 3, 7, 8)))
