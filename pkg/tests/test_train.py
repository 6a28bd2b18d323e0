import numpy as np
import pytest

from duplexsim.nn.model import DuDnnModel, DuDnnSpec, build_variant
from duplexsim.nn.train import (
    DivergenceError,
    FaultConfig,
    SgdState,
    TrainConfig,
    evaluate,
    pretrain_backbone,
    train,
)

SPEC = DuDnnSpec(num_blocks=2, in_channels=2, in_hw=(8, 8), branch_channels=4,
                 backbone_channels=4, num_classes=2, pool_factor=2)


def linearly_separable(rng, n, spec=SPEC):
    """Two classes split by a strong mean shift along a fixed pattern."""
    shape = (spec.in_channels,) + spec.in_hw
    pattern = rng.normal(size=shape)
    pattern /= np.linalg.norm(pattern)
    y = rng.integers(0, 2, size=n)
    x = rng.normal(scale=0.5, size=(n,) + shape)
    x += np.where(y[:, None, None, None] == 1, 1.0, -1.0) * pattern * 2.0
    return x, y


def make_dataset(seed=0, n_train=256, n_val=128):
    rng = np.random.default_rng(seed)
    x_train, y_train = linearly_separable(rng, n_train)
    x_val, y_val = linearly_separable(rng, n_val)
    return {"x_train": x_train, "y_train": y_train, "x_val": x_val, "y_val": y_val}


def test_learns_linearly_separable_task():
    dataset = make_dataset()
    model = DuDnnModel(SPEC, seed=0)
    cfg = TrainConfig(lr=0.05, epochs=20, batch_size=32, seed=0)
    result = train(model, cfg, dataset)
    train_acc = evaluate(model, dataset["x_train"], dataset["y_train"],
                         q=__import__("duplexsim.nn.blocks", fromlist=["EXACT"]).EXACT)
    assert train_acc >= 0.99
    assert result.steps == 20 * (256 // 32)


def test_training_is_deterministic():
    weights = []
    for _ in range(2):
        dataset = make_dataset(3)
        model = DuDnnModel(SPEC, seed=7)
        train(model, TrainConfig(lr=0.03, epochs=3, seed=11), dataset)
        weights.append({k: v.copy() for k, v in model.learnable_parameters().items()})
    for k in weights[0]:
        assert np.array_equal(weights[0][k], weights[1][k])


def test_backbone_frozen_through_training():
    dataset = make_dataset(1)
    model = DuDnnModel(SPEC, seed=2)
    before = {k: v.copy() for k, v in model.frozen_parameters().items()}
    train(model, TrainConfig(lr=0.05, epochs=2, seed=0), dataset)
    after = model.frozen_parameters()
    for k in before:
        assert np.array_equal(before[k], after[k]), k


def test_sgd_step_matches_scripted_update():
    # independent recomputation of v' = mu v - lr (g + wd w); w' = w + v'
    rng = np.random.default_rng(0)
    w = rng.normal(size=(3, 4))
    g = rng.normal(size=(3, 4))
    params = {"w": w.copy()}
    opt = SgdState(params, lr=0.1, momentum=0.9, weight_decay=5e-4)
    opt.step(params, {"w": g})
    opt.step(params, {"w": g})

    wv, vv = w.copy(), np.zeros_like(w)
    for _ in range(2):
        vv = 0.9 * vv - 0.1 * (g + 5e-4 * wv)
        wv = wv + vv
    assert np.allclose(params["w"], wv, rtol=0, atol=0)


def test_divergence_reported():
    dataset = make_dataset(0)
    dataset["x_train"] = dataset["x_train"] * 1e150
    dataset["x_val"] = dataset["x_val"] * 1e150
    model = DuDnnModel(SPEC, seed=0)
    with pytest.raises(DivergenceError):
        train(model, TrainConfig(lr=1e3, epochs=2, seed=0), dataset)


def test_perfect_yield_fault_config_is_identity():
    dataset = make_dataset(5)
    out = []
    for fault in (None, FaultConfig(read_yield=1.0)):
        model = DuDnnModel(SPEC, seed=4)
        train(model, TrainConfig(lr=0.03, epochs=2, seed=0, fault=fault), dataset)
        out.append({k: v.copy() for k, v in model.learnable_parameters().items()})
    for k in out[0]:
        assert np.array_equal(out[0][k], out[1][k])


def test_mild_fault_injection_barely_moves_accuracy():
    dataset = make_dataset(6)
    finals = {}
    for name, fault in (("clean", None), ("faulty", FaultConfig(read_yield=0.999, seed=3))):
        model = DuDnnModel(SPEC, seed=1)
        cfg = TrainConfig(lr=0.05, epochs=12, seed=0, fault=fault)
        finals[name] = train(model, cfg, dataset).final_accuracy
    assert finals["faulty"] >= finals["clean"] - 0.02


def test_expired_reads_destroy_fi_training():
    dataset = make_dataset(7)
    spec = build_variant(SPEC, "fi")
    model = DuDnnModel(spec, seed=1)
    cfg = TrainConfig(lr=0.05, epochs=6, seed=0,
                      fault=FaultConfig(read_yield=0.999, expired=True, seed=3))
    result = train(model, cfg, dataset)
    # two balanced classes: near-chance accuracy, far below a healthy run
    assert result.final_accuracy <= 0.75


def test_backbone_pretraining_improves_probe():
    rng = np.random.default_rng(8)
    x, y = linearly_separable(rng, 256)
    model = DuDnnModel(SPEC, seed=3)
    history = pretrain_backbone(model, x, y, epochs=8, lr=0.02, seed=0)
    assert history[-1] >= 0.9
