"""Tests for configs, model construction, the training loop and run artifacts."""

import json
import math

import numpy as np
import pandas as pd
import pytest

from src.annealing import GateValue
from src.config import apply_overrides, load_config, parse_config
from src.constants import METRICS_COLUMNS, Mode, RunStatus
from src.data_processing import Dataset, synth_blobs
from src.layers import Dense, Flatten, ForwardContext, Model
from src.models import ConfigurationError, ContractError, DataFormatError
from src.tensor import Tensor
from src.training import (
    build_model,
    collect_runs,
    evaluate,
    load_datasets,
    load_snapshot,
    save_snapshot,
    snapshot_gate,
    sweep,
    train,
)


def _blobs_raw(**extra):
    raw = {
        "name": "blobs",
        "seed": 0,
        "batch_size": 64,
        "max_epochs": 20,
        "dataset": {"name": "blobs", "blobs": {"n": 1000, "d": 2, "k": 2}},
        "model": {"layers": [{"type": "flatten"}, {"type": "dense", "units": 2}]},
        "optimizer": {"lr": 0.01},
        "early_stopping": {"patience": None},
    }
    raw.update(extra)
    return raw


def _mlp_raw(depth):
    return {
        "dataset": {"name": "mnist"},
        "model": {
            "layers": [{"type": "flatten"}],
            "block": [{"type": "dense", "units": 512}, {"type": "grelu"}],
            "depth": depth,
            "head": [{"type": "dense", "units": 10}],
        },
    }


# ---------------------------------------------------------------------------
# Config


def test_mlp_parameter_count_from_shapes():
    model = build_model(parse_config(_mlp_raw(3)))
    expected = 784 * 512 + 512 + 512 * 512 + 512 + 512 * 512 + 512 + 512 * 10 + 10
    assert model.parameter_count == expected == 932_362
    assert model.parameter_count == sum(p.size for p in model.parameters().values())
    assert model.output_shape == (10,)


def test_depth_counts_hidden_blocks():
    config = parse_config(_mlp_raw(4))
    kinds = [spec.kind.value for spec in config.model.compiled()]
    assert kinds == ["flatten"] + ["dense", "grelu"] * 4 + ["dense"]


@pytest.mark.parametrize(
    "raw,message",
    [
        (_blobs_raw(colour="red"), "unknown key.*colour"),
        (
            _blobs_raw(
                model={"layers": [{"type": "flatten"}, {"type": "dense", "units": 2, "kernel": 3}]}
            ),
            r"model\.layers\[1\]\.kernel",
        ),
        (_blobs_raw(model={"layers": [{"type": "densest"}]}), r"model\.layers\[0\]\.type"),
        (_blobs_raw(schedule={"tau": -1}), "schedule.tau"),
        (_blobs_raw(model={"layers": []}), "no layers"),
        (_blobs_raw(batch_size=0), "batch_size"),
        (_blobs_raw(optimizer={"lr": "fast"}), "optimizer.lr"),
        (_blobs_raw(dataset={"name": "imagenet"}), "dataset.name"),
    ],
)
def test_config_errors_name_the_key(raw, message):
    with pytest.raises(ConfigurationError, match=message):
        parse_config(raw)


def test_overrides_copy_and_set_dotted_keys():
    raw = _blobs_raw()
    changed = apply_overrides(raw, {"schedule.tau": 0, "model.depth": 2, "seed": 7})
    assert changed["schedule"] == {"tau": 0} and changed["seed"] == 7
    assert "schedule" not in raw and raw["seed"] == 0
    with pytest.raises(ConfigurationError, match="not an object"):
        apply_overrides(raw, {"seed.value": 1})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError, match="not valid JSON"):
        load_config(str(bad))
    good = tmp_path / "good.json"
    good.write_text(json.dumps(_blobs_raw()))
    assert load_config(str(good), {"max_epochs": 3}).max_epochs == 3


def test_blobs_split_sizes():
    train_set, val_set = load_datasets(parse_config(_blobs_raw()))
    assert (len(train_set), len(val_set)) == (900, 100)
    assert train_set.sample_shape == (2, 1, 1)


# ---------------------------------------------------------------------------
# Evaluation and snapshots


def _zero_model(classes=10):
    model = Model([Flatten(), Dense(classes)], (1, 2, 2), classes).build(np.random.default_rng(0))
    for parameter in model.parameters().values():
        parameter.value = np.zeros(parameter.shape)
    return model


def _balanced(n=40, classes=10):
    rng = np.random.default_rng(1)
    return Dataset(rng.random((n, 1, 2, 2)), np.arange(n) % classes, classes, "val")


def test_constant_predictor_scores_chance():
    result = evaluate(_zero_model(), _balanced(), batch_size=16)
    assert result["accuracy"] == pytest.approx(0.1)
    assert result["loss"] == pytest.approx(math.log(10), abs=1e-12)


def test_evaluate_is_repeatable():
    model = Model([Flatten(), Dense(10)], (1, 2, 2), 10).build(np.random.default_rng(3))
    dataset = _balanced()
    assert evaluate(model, dataset, 7) == evaluate(model, dataset, 7)


def test_evaluate_rejects_class_mismatch():
    with pytest.raises(ContractError, match="5 classes"):
        evaluate(_zero_model(), _balanced(classes=5))


def test_snapshot_round_trip(tmp_path):
    state = {
        "0.dense.weight": np.arange(6.0).reshape(2, 3) / 7,
        "0.dense.bias": np.array([1e-300, -2.5]),
    }
    path = save_snapshot(state, tmp_path / "s.snapshot")
    loaded = load_snapshot(path)
    assert list(loaded) == list(state)
    for name, value in state.items():
        assert np.array_equal(loaded[name], value)
    assert snapshot_gate(path) is None
    assert snapshot_gate(save_snapshot(state, tmp_path / "g.snapshot", 0.25)) == 0.25


def test_snapshot_rejects_damaged_files(tmp_path):
    path = save_snapshot({"w": np.ones((3, 3))}, tmp_path / "s.snapshot")
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(DataFormatError, match="truncated"):
        load_snapshot(path)
    path.write_bytes(raw + b"\x00" * 8)
    with pytest.raises(DataFormatError, match="trailing"):
        load_snapshot(path)
    path.write_bytes(raw[:8] + b"#" * (len(raw) - 8))
    with pytest.raises(DataFormatError, match="header"):
        load_snapshot(path)


# ---------------------------------------------------------------------------
# Training


def test_logistic_regression_separates_blobs(tmp_path):
    history = train(parse_config(_blobs_raw()), tmp_path)
    assert history.status == RunStatus.COMPLETED
    assert history.final_val_acc >= 0.99, f"val_acc {history.final_val_acc:.3f}"
    assert len(history.records) == 20


def test_gate_column_follows_the_schedule(tmp_path):
    raw = _blobs_raw(
        max_epochs=8,
        schedule={"tau": 5},
        model={
            "layers": [
                {"type": "flatten"},
                {"type": "dense", "units": 8},
                {"type": "grelu"},
                {"type": "dense", "units": 2},
            ]
        },
    )
    history = train(parse_config(raw), tmp_path)
    frame = pd.read_csv(tmp_path / "metrics.csv")
    assert list(frame.columns) == METRICS_COLUMNS
    assert frame["g"].tolist() == pytest.approx([0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.0, 1.0])
    assert history.g_full_epoch == 5 and history.final_g == 1.0


def test_training_is_deterministic(tmp_path):
    raw = _blobs_raw(
        max_epochs=4,
        schedule={"tau": 2},
        model={
            "layers": [
                {"type": "flatten"},
                {"type": "dense", "units": 16},
                {"type": "grelu"},
                {"type": "gradual_dropout", "p": 0.3},
                {"type": "dense", "units": 2},
            ]
        },
    )
    train(parse_config(raw), tmp_path / "a")
    train(parse_config(raw), tmp_path / "b")
    for name in ("metrics.csv", "best.snapshot"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_run_metadata_is_written(tmp_path):
    history = train(parse_config(_blobs_raw(max_epochs=3)), tmp_path)
    meta = json.loads((tmp_path / "run.json").read_text())
    assert meta["status"] == "completed"
    assert meta["epochs"] == 3
    assert meta["depth_convention"] == "hidden_blocks"
    assert meta["parameter_count"] == history.parameter_count == 6
    assert meta["config"]["name"] == "blobs"
    snapshot = load_snapshot(tmp_path / "best.snapshot")
    assert set(snapshot) == set(history.model.state_dict())


def test_best_snapshot_is_restored(tmp_path):
    history = train(parse_config(_blobs_raw(max_epochs=5)), tmp_path)
    best = load_snapshot(tmp_path / "best.snapshot")
    for name, value in history.model.state_dict().items():
        assert np.array_equal(best[name], value)
    assert history.records[history.best_epoch]["val_acc"] == history.best_val_acc


def test_best_model_scores_at_its_recorded_gate(tmp_path):
    """A run that stops mid-annealing re-evaluates exactly as its best epoch did."""
    raw = _blobs_raw(
        max_epochs=3,
        schedule={"tau": 100},
        model={
            "layers": [{"type": "flatten"}],
            "block": [{"type": "dense", "units": 8}, {"type": "grelu"}],
            "depth": 1,
            "head": [{"type": "dense", "units": 2}],
        },
    )
    config = parse_config(raw)
    history = train(config, tmp_path)
    best = history.records[history.best_epoch]
    assert history.best_g == best["g"] < 1.0

    _, val_set = load_datasets(config)
    result = evaluate(history.model, val_set, config.batch_size)
    assert result["accuracy"] == best["val_acc"]
    assert result["loss"] == pytest.approx(best["val_loss"], rel=1e-12)

    meta = json.loads((tmp_path / "run.json").read_text())
    assert meta["best_g"] == best["g"]
    assert snapshot_gate(tmp_path / "best.snapshot") == best["g"]


def test_gradual_batchnorm_is_batch_independent_after_annealing(tmp_path):
    raw = _blobs_raw(
        max_epochs=3,
        schedule={"tau": 1},
        model={
            "layers": [
                {"type": "flatten"},
                {"type": "dense", "units": 8},
                {"type": "gradual_batchnorm"},
                {"type": "relu"},
                {"type": "dense", "units": 2},
            ]
        },
    )
    model = train(parse_config(raw), tmp_path).model
    data = synth_blobs(256, 2, 2, seed=9)
    assert evaluate(model, data, 1) == pytest.approx(evaluate(model, data, 256), abs=1e-12)

    # Per-sample logits do not depend on the rest of the batch.
    settings = [(Mode.EVAL, model.gate), (Mode.EVAL, GateValue(1.0)), (Mode.TRAIN, GateValue(1.0))]
    for mode, gate in settings:
        batch = model.forward(Tensor(data.images), ForwardContext(mode, gate)).data
        for i in range(len(data)):
            single = model.forward(Tensor(data.images[i : i + 1]), ForwardContext(mode, gate))
            np.testing.assert_allclose(single.data[0], batch[i], rtol=0, atol=1e-12)


def test_diverged_run_still_writes_artifacts(tmp_path):
    config = parse_config(_blobs_raw(max_epochs=3))
    train_set = Dataset(np.full((32, 2, 1, 1), np.nan), np.arange(32) % 2, 2)
    val_set = synth_blobs(10, 2, 2, seed=0)
    history = train(config, tmp_path, datasets=(train_set, val_set))
    assert history.status == RunStatus.DIVERGED
    assert history.records == []
    meta = json.loads((tmp_path / "run.json").read_text())
    assert meta["status"] == "diverged" and meta["best_val_acc"] is None
    assert (tmp_path / "metrics.csv").exists() and (tmp_path / "best.snapshot").exists()


def test_train_rejects_mismatched_data(tmp_path):
    config = parse_config(_blobs_raw(max_epochs=1))
    data = synth_blobs(20, 3, 2, seed=0)
    with pytest.raises(ConfigurationError, match="shape"):
        train(config, tmp_path, datasets=(data, data))


# ---------------------------------------------------------------------------
# Sweeps and reports


def test_sweep_writes_one_row_per_run(tmp_path):
    raw = _blobs_raw(max_epochs=2)
    summary = sweep(raw, {"optimizer.lr": [0.01, 0.05]}, seeds=2, output_dir=tmp_path)
    assert len(summary) == 4
    assert summary["run"].tolist() == [
        "lr=0.01_seed=0",
        "lr=0.01_seed=1",
        "lr=0.05_seed=0",
        "lr=0.05_seed=1",
    ]
    assert (tmp_path / "summary.csv").exists()
    assert (tmp_path / "lr=0.05_seed=1" / "metrics.csv").exists()

    combined, metadata = collect_runs(tmp_path)
    assert combined["run"].nunique() == 4 and len(combined) == 8
    assert "g_full_epoch" in combined.columns
    assert len(metadata) == 4


def test_sweep_validates_every_grid_point_first(tmp_path):
    with pytest.raises(ConfigurationError, match="schedule.tau"):
        sweep(_blobs_raw(max_epochs=1), {"schedule.tau": [1, -1]}, output_dir=tmp_path)
    assert not any(tmp_path.iterdir())


def test_collect_runs_requires_metrics(tmp_path):
    with pytest.raises(FileNotFoundError):
        collect_runs(tmp_path)


def test_tau_zero_matches_the_static_late_network():
    def model_with(activation):
        raw = _mlp_raw(2)
        raw["model"]["block"] = [{"type": "dense", "units": 16}, {"type": activation}]
        raw["schedule"] = {"tau": 0}
        return build_model(parse_config(raw))

    images = np.random.default_rng(0).random((4, 1, 28, 28))
    gradual, static = model_with("grelu"), model_with("relu")
    ctx = ForwardContext(Mode.TRAIN, GateValue(1.0))
    expected = static.forward(images, ForwardContext(Mode.TRAIN)).data
    np.testing.assert_array_equal(gradual.forward(images, ctx).data, expected)
