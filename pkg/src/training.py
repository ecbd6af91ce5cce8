"""
Model construction, the training loop and run artifacts.

A run goes config -> model -> data -> epochs; every epoch holds the gate
fixed (or advances it per batch in step mode), trains with Adam on a fresh
tape per batch, evaluates in eval mode and feeds early stopping. Artifacts
(metrics CSV, best snapshot, run metadata) are written even for diverged
runs.
"""

import itertools
import json
import logging
import math
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .annealing import GateValue, LinearSchedule
from .config import ExperimentConfig, LayerSpec, apply_overrides, parse_config
from .constants import (
    CIFAR10_CLASSES,
    CIFAR10_SHAPE,
    CIFAR10_TRAIN_FILES,
    DATA_DIR_ENV,
    DEFAULT_BATCH_SIZE,
    DIVERGENCE_MARGIN,
    METRICS_COLUMNS,
    METRICS_FILE,
    RUN_META_FILE,
    SNAPSHOT_FILE,
    SUMMARY_FILE,
    EarlyStopDecision,
    LayerKind,
    Mode,
    PoolKind,
    RunStatus,
)
from .data_processing import (
    BatchPlan,
    Dataset,
    augment_hflip,
    batch_count,
    batches,
    find_mnist,
    load_cifar10_bin,
    load_idx,
    split_validation,
    synth_blobs,
)
from .layers import (
    Activation,
    BatchNorm,
    Conv,
    Dense,
    Dropout,
    Flatten,
    ForwardContext,
    GradNet,
    GradualNiN,
    GradualReLU,
    Layer,
    Model,
    Pool,
    describe_gates,
    gradual_batchnorm,
    gradual_conv,
    gradual_dropout,
    gradual_pool,
    mixed_pool_const,
)
from .models import (
    ConfigurationError,
    ContractError,
    DataFormatError,
    DivergenceError,
    EpochRecord,
    EvalResult,
)
from .optim import AdamState, EarlyStopState, adam_step, early_stopping_update
from .tensor import Tape, Tensor, softmax_cross_entropy

logger = logging.getLogger(__name__)

Shape = Tuple[int, ...]
PathLike = Union[str, Path]

DEPTH_CONVENTION = "hidden_blocks"


# ---------------------------------------------------------------------------
# Model construction


def make_layer(spec: LayerSpec, config: ExperimentConfig) -> Layer:
    """Instantiate one layer from its spec; batch-norm defaults come from ``config``."""
    kind = spec.kind
    momentum = config.batchnorm.momentum if spec.momentum is None else spec.momentum
    eps = config.batchnorm.eps if spec.eps is None else spec.eps
    if kind == LayerKind.DENSE:
        return Dense(spec.units)
    if kind == LayerKind.FLATTEN:
        return Flatten()
    if kind in (LayerKind.IDENTITY, LayerKind.ABS, LayerKind.RELU):
        return Activation(kind)
    if kind in (LayerKind.LEAKY_RELU, LayerKind.VERY_LEAKY_RELU):
        return Activation(kind, spec.slope)
    if kind in (LayerKind.GRELU, LayerKind.INVERSE_GRELU):
        return GradualReLU(inverse=kind == LayerKind.INVERSE_GRELU)
    if kind == LayerKind.DROPOUT:
        return Dropout(spec.p)
    if kind == LayerKind.GRADUAL_DROPOUT:
        return gradual_dropout(spec.p)
    if kind in (LayerKind.MEAN_POOL, LayerKind.MAX_POOL):
        pool = PoolKind.MEAN if kind == LayerKind.MEAN_POOL else PoolKind.MAX
        return Pool(pool, spec.window, spec.stride)
    if kind == LayerKind.GRADUAL_POOL:
        return gradual_pool(spec.window, spec.stride)
    if kind == LayerKind.MIXED_POOL_CONST:
        fixed = 0.5 if spec.fixed_g is None else spec.fixed_g
        return mixed_pool_const(spec.window, spec.stride, fixed)
    if kind == LayerKind.BATCHNORM:
        return BatchNorm(momentum, eps)
    if kind == LayerKind.GRADUAL_BATCHNORM:
        return gradual_batchnorm(momentum, eps)
    if kind == LayerKind.CONV:
        return Conv(spec.filters, spec.kernel, spec.stride or 1, spec.padding, spec.bias)
    if kind == LayerKind.GRADUAL_CONV:
        return gradual_conv(spec.kernel, spec.filters)
    if kind == LayerKind.GRADUAL_NIN:
        return GradualNiN(spec.filters, spec.kernel, spec.stride or 1, spec.padding)
    if kind == LayerKind.GRADNET:
        return GradNet(
            make_layer(spec.early, config), make_layer(spec.late, config), fixed_g=spec.fixed_g
        )
    raise ConfigurationError(f"no constructor for layer type {kind.value}")


def resolve_shapes(config: ExperimentConfig) -> Tuple[Optional[Shape], int]:
    """Per-sample input shape and class count, from the model spec or the dataset kind."""
    dataset = config.dataset
    defaults: Dict[str, Tuple[Optional[Shape], int]] = {
        "mnist": ((1, 28, 28), 10),
        "cifar10": (CIFAR10_SHAPE, CIFAR10_CLASSES),
        "blobs": ((dataset.blobs.d, 1, 1), dataset.blobs.k),
        "idx": (None, 10),
    }
    shape, classes = defaults[dataset.name]
    return config.model.input_shape or shape, config.model.num_classes or classes


def build_model(
    config: ExperimentConfig,
    input_shape: Optional[Sequence[int]] = None,
    num_classes: Optional[int] = None,
) -> Model:
    """
    Instantiate and initialize the model a config describes.

    Parameters
    ----------
    config : ExperimentConfig
        Parsed experiment; ``config.seed`` seeds the initialization
    input_shape : sequence of int, optional
        Overrides the shape resolved from the config
    num_classes : int, optional
        Overrides the class count resolved from the config

    Returns
    -------
    Model
        Built model with orthogonal weights and zero biases

    Raises
    ------
    BuildError
        If shapes cannot be propagated; the message names the layer index
    ConfigurationError
        If no input shape is known
    """
    shape, classes = resolve_shapes(config)
    shape = tuple(input_shape) if input_shape is not None else shape
    classes = num_classes or classes
    if shape is None:
        raise ConfigurationError(
            "model.input_shape is required when the dataset shape is not known in advance"
        )
    layers = [make_layer(spec, config) for spec in config.model.compiled()]
    model = Model(layers, shape, classes)
    model.build(np.random.default_rng(config.seed), config.init_gain)
    logger.info(
        "built %s: %d layers, %d parameters, depth %d (%s), gated layers %d",
        config.name,
        len(layers),
        model.parameter_count,
        config.model.depth,
        DEPTH_CONVENTION,
        len(describe_gates(model)),
    )
    return model


# ---------------------------------------------------------------------------
# Data


def _limit(dataset: Dataset, limit: Optional[int]) -> Dataset:
    if limit is None or limit >= len(dataset):
        return dataset
    return dataset.select(slice(0, limit))


def _pair(files: Sequence[str], config: ExperimentConfig) -> Tuple[Path, Path]:
    images, labels = files
    return config.dataset.resolve(images), config.dataset.resolve(labels)


def load_datasets(config: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    """
    Load the train and validation splits a config names.

    ``train_limit`` truncates the training pool before the validation split
    is cut from its tail; ``val_limit`` truncates the validation split.

    Raises
    ------
    FileNotFoundError
        If the dataset files cannot be found
    """
    spec = config.dataset
    _, classes = resolve_shapes(config)
    val: Optional[Dataset] = None
    if spec.name == "blobs":
        blobs = spec.blobs
        seed = config.seed if blobs.seed is None else blobs.seed
        pool = synth_blobs(blobs.n, blobs.d, blobs.k, seed)
    elif spec.name in ("mnist", "idx"):
        if spec.train_files:
            train_pair = _pair(spec.train_files, config)
        else:
            found = find_mnist(spec.resolved_root)
            if "train" not in found:
                raise FileNotFoundError(
                    f"no MNIST training files under {spec.resolved_root}; "
                    f"set dataset.root or {DATA_DIR_ENV}"
                )
            train_pair = found["train"]
        pool = load_idx(*train_pair, num_classes=classes, split="train")
        if spec.val_files:
            val = load_idx(*_pair(spec.val_files, config), num_classes=classes, split="val")
    else:
        names = spec.train_files or tuple(CIFAR10_TRAIN_FILES)
        paths = [spec.resolve(name) for name in names]
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise FileNotFoundError(f"missing CIFAR-10 files: {', '.join(missing)}")
        pool = load_cifar10_bin(paths, "train")
        if spec.val_files:
            val = load_cifar10_bin([spec.resolve(name) for name in spec.val_files], "val")

    pool = _limit(pool, spec.train_limit)
    if val is None:
        train_set, val = split_validation(pool, spec.val_fraction)
    else:
        train_set = pool
    val = _limit(val, spec.val_limit)
    logger.info("dataset %s: %d train, %d val samples", spec.name, len(train_set), len(val))
    return train_set, val


# ---------------------------------------------------------------------------
# Evaluation


def evaluate(
    model: Model,
    dataset: Dataset,
    batch_size: int = DEFAULT_BATCH_SIZE,
    gate: Optional[GateValue] = None,
) -> EvalResult:
    """
    Eval-mode loss and accuracy of ``model`` on ``dataset``.

    ``gate`` defaults to the gate recorded on the model, so a restored
    snapshot scores as it did during training.
    Nothing in the model is mutated, so repeated calls agree exactly.

    Raises
    ------
    ContractError
        If the model's output width differs from the dataset's class count,
        or the dataset is empty
    """
    if model.output_shape != (dataset.num_classes,):
        raise ContractError(
            f"model yields {list(model.output_shape or ())} scores but dataset "
            f"has {dataset.num_classes} classes"
        )
    if len(dataset) == 0:
        raise ContractError("cannot evaluate on an empty dataset")
    plan = BatchPlan(batch_size, shuffle=False)
    total_loss = 0.0
    correct = 0
    for images, labels in batches(dataset, plan, 0):
        ctx = ForwardContext(Mode.EVAL, model.gate if gate is None else gate)
        logits = model.forward(Tensor(images), ctx)
        total_loss += softmax_cross_entropy(logits, labels).item() * labels.shape[0]
        correct += int(np.sum(np.argmax(logits.data, axis=1) == labels))
    return {"loss": total_loss / len(dataset), "accuracy": correct / len(dataset)}


# ---------------------------------------------------------------------------
# Snapshots


def save_snapshot(
    state: Mapping[str, np.ndarray], path: PathLike, gate: Optional[float] = None
) -> Path:
    """
    Write named arrays as ``<u64 header length><JSON header><float64 LE data>``.

    The header lists ``{"name", "shape"}`` per tensor in storage order, plus
    the ``gate`` the weights run at when one is given.
    """
    path = Path(path)
    entries = [{"name": name, "shape": list(np.shape(value))} for name, value in state.items()]
    document: Dict[str, Any] = {"tensors": entries}
    if gate is not None:
        document["gate"] = float(gate)
    header = json.dumps(document).encode("utf-8")
    with path.open("wb") as handle:
        handle.write(struct.pack("<Q", len(header)))
        handle.write(header)
        for value in state.values():
            handle.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return path


def _read_snapshot(path: PathLike) -> Tuple[bytes, Dict[str, Any], int]:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise DataFormatError(f"{path}: too short for a snapshot header ({len(raw)} bytes)")
    (header_len,) = struct.unpack("<Q", raw[:8])
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
        if not isinstance(header["tensors"], list):
            raise TypeError("tensors is not a list")
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: unreadable snapshot header") from exc
    return raw, header, 8 + header_len


def load_snapshot(path: PathLike) -> Dict[str, np.ndarray]:
    """
    Read a snapshot written by :func:`save_snapshot`.

    Raises
    ------
    DataFormatError
        If the header is malformed or the data is truncated
    """
    raw, header, offset = _read_snapshot(path)
    state = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise DataFormatError(f"{path}: truncated at tensor {entry['name']}")
        values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        state[entry["name"]] = values.astype(np.float64).reshape(shape)
        offset = end
    if offset != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - offset} trailing bytes after last tensor")
    return state


def snapshot_gate(path: PathLike) -> Optional[float]:
    """Gate recorded in a snapshot header, ``None`` for snapshots saved without one."""
    _, header, _ = _read_snapshot(path)
    gate = header.get("gate")
    return None if gate is None else float(gate)


# ---------------------------------------------------------------------------
# Training


@dataclass
class RunHistory:
    """
    Outcome of one training run.

    Attributes
    ----------
    records : list of EpochRecord
        One row per completed epoch
    status : RunStatus
        How the run ended
    best_epoch : int
        Epoch of the best validation accuracy, -1 if none
    best_val_acc : float
        Best validation accuracy, NaN if none
    final_g : float
        Gate of the last epoch that ran
    best_g : float
        Gate the restored model runs at: that of the best epoch, or of the
        last evaluation when no epoch improved
    tau : float
        Annealing horizon of the run
    parameter_count : int
        Trainable parameters of the model
    output_dir : Path, optional
        Directory holding the run's artifacts
    model : Model, optional
        The trained model, restored to its best snapshot
    """

    records: List[EpochRecord] = field(default_factory=list)
    status: RunStatus = RunStatus.COMPLETED
    best_epoch: int = -1
    best_val_acc: float = math.nan
    final_g: float = 0.0
    best_g: float = 1.0
    tau: float = 0.0
    parameter_count: int = 0
    output_dir: Optional[Path] = None
    model: Optional[Model] = field(default=None, repr=False, compare=False)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=METRICS_COLUMNS)

    @property
    def g_full_epoch(self) -> Optional[int]:
        """First recorded epoch whose gate is 1, if any."""
        for record in self.records:
            if record["g"] >= 1.0:
                return record["epoch"]
        return None

    @property
    def final_val_acc(self) -> float:
        return self.records[-1]["val_acc"] if self.records else math.nan


def _has_batchnorm(layer: Layer) -> bool:
    if isinstance(layer, BatchNorm):
        return True
    if isinstance(layer, GradNet):
        return _has_batchnorm(layer.early) or _has_batchnorm(layer.late)
    return False


def _run_metadata(config: ExperimentConfig, history: RunHistory) -> Dict[str, Any]:
    return {
        "name": config.name,
        "seed": config.seed,
        "status": history.status.value,
        "epochs": len(history.records),
        "best_epoch": history.best_epoch,
        "best_val_acc": None if math.isnan(history.best_val_acc) else history.best_val_acc,
        "final_g": history.final_g,
        "best_g": history.best_g,
        "tau": history.tau,
        "g_full_epoch": history.g_full_epoch,
        "parameter_count": history.parameter_count,
        "depth": config.model.depth,
        "depth_convention": DEPTH_CONVENTION,
        "config": config.raw,
    }


def write_artifacts(
    config: ExperimentConfig,
    history: RunHistory,
    state: Mapping[str, np.ndarray],
    output_dir: Path,
) -> None:
    """Write metrics CSV, snapshot and run metadata into ``output_dir``."""
    output_dir.mkdir(parents=True, exist_ok=True)
    history.to_frame().to_csv(output_dir / METRICS_FILE, index=False)
    save_snapshot(state, output_dir / SNAPSHOT_FILE, history.best_g)
    meta = _run_metadata(config, history)
    (output_dir / RUN_META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    logger.info("artifacts written to %s", output_dir)


def train(
    config: ExperimentConfig,
    output_dir: Optional[PathLike] = None,
    datasets: Optional[Tuple[Dataset, Dataset]] = None,
) -> RunHistory:
    """
    Run one experiment end to end.

    Parameters
    ----------
    config : ExperimentConfig
        Parsed experiment
    output_dir : path, optional
        Where to write artifacts; defaults to ``config.output_dir``
    datasets : tuple of Dataset, optional
        Preloaded ``(train, val)`` splits; loaded from the config otherwise

    Returns
    -------
    RunHistory
        Per-epoch records, final status and the trained model

    Raises
    ------
    ConfigurationError
        If the model cannot be built or does not fit the data
    """
    out = Path(output_dir or config.output_dir)
    shape, _ = resolve_shapes(config)
    model = build_model(config) if shape is not None else None
    train_set, val_set = datasets or load_datasets(config)
    if model is None:
        model = build_model(config, train_set.sample_shape, train_set.num_classes)
    if model.input_shape != train_set.sample_shape:
        raise ConfigurationError(
            f"model expects samples of shape {list(model.input_shape)}, "
            f"dataset provides {list(train_set.sample_shape)}"
        )
    if model.output_shape != (train_set.num_classes,):
        raise ConfigurationError(
            f"model yields {list(model.output_shape or ())} scores for "
            f"{train_set.num_classes} classes"
        )
    params = model.parameters()
    if not params:
        raise ConfigurationError("model has no trainable parameters")

    schedule = LinearSchedule(config.schedule.tau, mode=config.schedule.mode)
    opt = config.optimizer
    adam = AdamState(opt.lr, opt.beta1, opt.beta2, opt.eps)
    stopper = EarlyStopState(config.early_stopping.patience, config.early_stopping.min_delta)
    # A lone trailing sample cannot supply train-mode batch statistics.
    lone_tail = len(train_set) % config.batch_size == 1
    plan = BatchPlan(
        config.batch_size,
        config.seed,
        drop_last=lone_tail and any(_has_batchnorm(layer) for layer in model.layers),
    )
    steps = batch_count(train_set, plan)
    history = RunHistory(
        tau=config.schedule.tau, parameter_count=model.parameter_count, output_dir=out
    )
    flip_p = config.dataset.flip_p

    logger.info(
        "training %s for up to %d epochs, tau=%g, %d steps per epoch",
        config.name,
        config.max_epochs,
        config.schedule.tau,
        steps,
    )
    model.gate = schedule.current
    for epoch in range(config.max_epochs):
        g = schedule.current
        history.final_g = g.g
        started = time.perf_counter()
        loss_sum, correct, seen = 0.0, 0, 0
        step_gate = g
        try:
            for index, (images, labels) in enumerate(batches(train_set, plan, epoch)):
                if flip_p > 0:
                    flip_rng = np.random.default_rng([config.seed, epoch, index])
                    images = augment_hflip(images, flip_p, flip_rng)
                step_gate = schedule.gate_for_step(index, steps)
                tape = Tape()
                ctx = ForwardContext(Mode.TRAIN, step_gate, tape, config.seed, epoch, index)
                logits = model.forward(Tensor(images), ctx)
                loss = softmax_cross_entropy(logits, labels)
                value = loss.item()
                if not math.isfinite(value):
                    raise DivergenceError(
                        f"non-finite training loss at epoch {epoch}, batch {index}"
                    )
                tape.backward(loss)
                adam_step(params, ctx.gradients(params), adam)
                loss_sum += value * labels.shape[0]
                correct += int(np.sum(np.argmax(logits.data, axis=1) == labels))
                seen += labels.shape[0]
                logger.debug("epoch %d batch %d loss %.6f", epoch, index, value)
        except DivergenceError as exc:
            logger.warning("run %s diverged: %s", config.name, exc)
            history.status = RunStatus.DIVERGED
            break

        model.gate = step_gate
        val = evaluate(model, val_set, config.batch_size)
        elapsed = time.perf_counter() - started
        record: EpochRecord = {
            "epoch": epoch,
            "g": g.g,
            "train_loss": loss_sum / max(seen, 1),
            "train_acc": correct / max(seen, 1),
            "val_loss": val["loss"],
            "val_acc": val["accuracy"],
            "wall_seconds": elapsed if config.record_wall_time else 0.0,
        }
        history.records.append(record)
        logger.info(
            "epoch %d g=%.4f train_loss=%.4f train_acc=%.4f val_loss=%.4f val_acc=%.4f (%.1fs)",
            epoch,
            g.g,
            record["train_loss"],
            record["train_acc"],
            record["val_loss"],
            record["val_acc"],
            elapsed,
        )

        decision = early_stopping_update(
            stopper, val["accuracy"], model.state_dict(), step_gate.g
        )
        if decision == EarlyStopDecision.STOP:
            history.status = RunStatus.EARLY_STOPPED
            logger.info("early stopping at epoch %d, best epoch %d", epoch, stopper.best_epoch)
            if g.g < 1.0:
                logger.warning(
                    "early stopping fired at g=%.4f, before annealing completed", g.g
                )
            break
        schedule.advance_epoch()

    chance = 1.0 / train_set.num_classes + DIVERGENCE_MARGIN
    if (
        history.status == RunStatus.COMPLETED
        and history.records
        and history.records[-1]["train_acc"] <= chance
    ):
        logger.warning(
            "run %s ended at chance-level train accuracy %.4f; marked diverged",
            config.name,
            history.records[-1]["train_acc"],
        )
        history.status = RunStatus.DIVERGED

    history.best_epoch = stopper.best_epoch
    history.best_val_acc = stopper.best if stopper.best_epoch >= 0 else math.nan
    if stopper.snapshot is not None:
        model.load_state_dict(stopper.snapshot)
        model.gate = GateValue(stopper.best_g)
    history.best_g = model.gate.g
    history.model = model
    write_artifacts(config, history, model.state_dict(), out)
    logger.info(
        "run %s %s after %d epochs, best val_acc %.4f at epoch %d, final g %.4f",
        config.name,
        history.status.value,
        len(history.records),
        history.best_val_acc,
        history.best_epoch,
        history.final_g,
    )
    return history


# ---------------------------------------------------------------------------
# Sweeps and reports


def run_label(values: Mapping[str, Any], seed: int) -> str:
    """Directory name of one sweep run, e.g. ``depth=64_seed=3``."""
    parts = [f"{key.split('.')[-1]}={value}" for key, value in values.items()]
    return "_".join(parts + [f"seed={seed}"])


def _sweep_run(raw: Dict[str, Any], label: str) -> Dict[str, Any]:
    config = parse_config(raw)
    history = train(config)
    return {
        "run": label,
        "status": history.status.value,
        "epochs": len(history.records),
        "best_epoch": history.best_epoch,
        "best_val_acc": history.best_val_acc,
        "final_val_acc": history.final_val_acc,
        "final_g": history.final_g,
    }


def sweep(
    raw: Dict[str, Any],
    vary: Mapping[str, Sequence[Any]],
    seeds: int = 1,
    output_dir: Optional[PathLike] = None,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Train every combination of ``vary`` values for ``seeds`` consecutive seeds.

    Parameters
    ----------
    raw : dict
        Base config document
    vary : mapping of str to sequence
        Dotted key to the values it takes; the grid is their Cartesian product
    seeds : int
        Number of seeds, counted up from the base config's seed
    output_dir : path, optional
        Parent of the per-run directories; defaults to the config's output_dir
    workers : int
        Size of the process pool; 1 runs sequentially

    Returns
    -------
    pandas.DataFrame
        One summary row per run, also written as ``summary.csv``

    Raises
    ------
    ConfigurationError
        If any grid point yields an invalid config; raised before training
    """
    if seeds < 1 or workers < 1:
        raise ConfigurationError(f"seeds and workers must be >= 1, got {seeds}, {workers}")
    base = parse_config(raw)
    out = Path(output_dir or base.output_dir)
    keys = list(vary)
    jobs = []
    for combo in itertools.product(*(vary[k] for k in keys)):
        values = dict(zip(keys, combo))
        for offset in range(seeds):
            seed = base.seed + offset
            label = run_label(values, seed)
            overrides = {**values, "seed": seed, "name": label, "output_dir": str(out / label)}
            run_raw = apply_overrides(raw, overrides)
            parse_config(run_raw)
            jobs.append((values, seed, label, run_raw))
    logger.info("sweep of %d runs into %s with %d worker(s)", len(jobs), out, workers)

    if workers == 1:
        results = [_sweep_run(run_raw, label) for _, _, label, run_raw in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_run, run_raw, label) for _, _, label, run_raw in jobs]
            results = [future.result() for future in futures]

    rows = []
    for (values, seed, _, _), result in zip(jobs, results):
        row = {"run": result.pop("run"), **values, "seed": seed, **result}
        rows.append(row)
    summary = pd.DataFrame(rows)
    out.mkdir(parents=True, exist_ok=True)
    summary.to_csv(out / SUMMARY_FILE, index=False)
    logger.info("sweep summary written to %s", out / SUMMARY_FILE)
    return summary


def collect_runs(runs_dir: PathLike) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Gather every run's metrics under ``runs_dir``.

    Returns
    -------
    tuple of pandas.DataFrame
        Combined metrics with ``run`` and ``g_full_epoch`` columns, and one
        metadata row per run

    Raises
    ------
    FileNotFoundError
        If no metrics file exists below ``runs_dir``
    """
    root = Path(runs_dir)
    frames = []
    metadata = []
    for metrics_path in sorted(root.rglob(METRICS_FILE)):
        run_dir = metrics_path.parent
        name = run_dir.relative_to(root).as_posix() if run_dir != root else run_dir.name
        frame = pd.read_csv(metrics_path)
        meta_path = run_dir / RUN_META_FILE
        meta: Dict[str, Any] = {}
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
        full = meta.get("g_full_epoch")
        if full is None and not frame.empty:
            reached = frame.loc[frame["g"] >= 1.0, "epoch"]
            full = int(reached.iloc[0]) if not reached.empty else None
        frame.insert(0, "run", name)
        frame["g_full_epoch"] = full
        frames.append(frame)
        metadata.append({"run": name, **{k: v for k, v in meta.items() if k != "config"}})
    if not frames:
        raise FileNotFoundError(f"no {METRICS_FILE} found under {root}")
    return pd.concat(frames, ignore_index=True), pd.DataFrame(metadata)
