"""
Experiment configuration.

An experiment is a single JSON document. Parsing is strict: unknown keys
and unknown layer tags are rejected with the key path in the message, and
every value is type-checked before any training starts.
"""

import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .constants import (
    DATA_DIR_ENV,
    DEFAULT_ADAM_EPS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BETA1,
    DEFAULT_BETA2,
    DEFAULT_BN_EPS,
    DEFAULT_BN_MOMENTUM,
    DEFAULT_DROPOUT_P,
    DEFAULT_FLIP_P,
    DEFAULT_INIT_GAIN,
    DEFAULT_LR,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_MIN_DELTA,
    DEFAULT_PATIENCE,
    DEFAULT_POOL_WINDOW,
    DEFAULT_SEED,
    DEFAULT_TAU,
    DEFAULT_VAL_FRACTION,
    LayerKind,
    Padding,
    ScheduleMode,
)
from .models import ConfigurationError

logger = logging.getLogger(__name__)

DATASET_NAMES = ("mnist", "cifar10", "idx", "blobs")

# Keys each layer type accepts besides ``type``; required keys are marked.
LAYER_KEYS: Dict[LayerKind, Dict[str, bool]] = {
    LayerKind.DENSE: {"units": True},
    LayerKind.FLATTEN: {},
    LayerKind.IDENTITY: {},
    LayerKind.ABS: {},
    LayerKind.RELU: {},
    LayerKind.LEAKY_RELU: {"slope": False},
    LayerKind.VERY_LEAKY_RELU: {"slope": False},
    LayerKind.GRELU: {},
    LayerKind.INVERSE_GRELU: {},
    LayerKind.DROPOUT: {"p": False},
    LayerKind.GRADUAL_DROPOUT: {"p": False},
    LayerKind.MEAN_POOL: {"window": False, "stride": False},
    LayerKind.MAX_POOL: {"window": False, "stride": False},
    LayerKind.GRADUAL_POOL: {"window": False, "stride": False},
    LayerKind.MIXED_POOL_CONST: {"window": False, "stride": False, "fixed_g": False},
    LayerKind.BATCHNORM: {"momentum": False, "eps": False},
    LayerKind.GRADUAL_BATCHNORM: {"momentum": False, "eps": False},
    LayerKind.CONV: {
        "filters": True,
        "kernel": False,
        "stride": False,
        "padding": False,
        "bias": False,
    },
    LayerKind.GRADUAL_CONV: {"kernel": False, "filters": False},
    LayerKind.GRADUAL_NIN: {"filters": True, "kernel": False, "stride": False, "padding": False},
    LayerKind.GRADNET: {"early": True, "late": True, "fixed_g": False},
}


@dataclass(frozen=True)
class LayerSpec:
    """One entry of a model's layer list.

    Attributes
    ----------
    kind : LayerKind
        Layer type tag
    units, filters, kernel, window, stride : int, optional
        Size fields, meaning depends on ``kind``
    p, slope, fixed_g, momentum, eps : float, optional
        Real-valued options, meaning depends on ``kind``
    padding : Padding
        Convolution padding
    bias : bool
        Whether a convolution carries a bias
    early, late : LayerSpec, optional
        Branches of a generic ``gradnet`` combinator
    """

    kind: LayerKind
    units: Optional[int] = None
    filters: Optional[int] = None
    kernel: int = 3
    window: int = DEFAULT_POOL_WINDOW
    stride: Optional[int] = None
    p: float = DEFAULT_DROPOUT_P
    slope: Optional[float] = None
    fixed_g: Optional[float] = None
    momentum: Optional[float] = None
    eps: Optional[float] = None
    padding: Padding = Padding.SAME
    bias: bool = True
    early: Optional["LayerSpec"] = None
    late: Optional["LayerSpec"] = None


@dataclass(frozen=True)
class BlobsSpec:
    n: int = 1000
    d: int = 2
    k: int = 2
    seed: Optional[int] = None


@dataclass(frozen=True)
class DatasetSpec:
    """
    Where the data comes from and how it is split.

    ``train_files``/``val_files`` are an images/labels pair for ``mnist`` and
    ``idx``, or a list of record files for ``cifar10``. Relative paths are
    resolved against ``root``.
    """

    name: str = "mnist"
    root: Optional[str] = None
    train_files: Tuple[str, ...] = ()
    val_files: Tuple[str, ...] = ()
    train_limit: Optional[int] = None
    val_limit: Optional[int] = None
    val_fraction: float = DEFAULT_VAL_FRACTION
    flip_p: float = DEFAULT_FLIP_P
    blobs: BlobsSpec = field(default_factory=BlobsSpec)

    @property
    def resolved_root(self) -> Path:
        return Path(self.root or os.environ.get(DATA_DIR_ENV) or ".")

    def resolve(self, name: str) -> Path:
        path = Path(name)
        return path if path.is_absolute() else self.resolved_root / path


@dataclass(frozen=True)
class ModelSpec:
    """
    Layer layout: ``layers`` then ``block`` repeated ``depth`` times then ``head``.

    ``depth`` counts hidden blocks; ``input_shape`` and ``num_classes`` are
    taken from the dataset when omitted.
    """

    layers: Tuple[LayerSpec, ...] = ()
    block: Tuple[LayerSpec, ...] = ()
    depth: int = 0
    head: Tuple[LayerSpec, ...] = ()
    input_shape: Optional[Tuple[int, ...]] = None
    num_classes: Optional[int] = None

    def compiled(self) -> List[LayerSpec]:
        return list(self.layers) + list(self.block) * self.depth + list(self.head)


@dataclass(frozen=True)
class ScheduleSpec:
    tau: float = DEFAULT_TAU
    mode: ScheduleMode = ScheduleMode.EPOCH


@dataclass(frozen=True)
class OptimizerSpec:
    lr: float = DEFAULT_LR
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    eps: float = DEFAULT_ADAM_EPS


@dataclass(frozen=True)
class EarlyStopSpec:
    patience: Optional[int] = DEFAULT_PATIENCE
    min_delta: float = DEFAULT_MIN_DELTA


@dataclass(frozen=True)
class BatchNormSpec:
    momentum: float = DEFAULT_BN_MOMENTUM
    eps: float = DEFAULT_BN_EPS


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Full training recipe.

    Attributes
    ----------
    name : str
        Run label used for output directories and reports
    seed : int
        Seed for initialization, shuffling, augmentation and dropout
    batch_size, max_epochs : int
        Training loop sizes
    output_dir : str
        Directory receiving metrics, snapshot and run metadata
    record_wall_time : bool
        Write measured epoch durations instead of 0.0
    init_gain : float
        Gain of the orthogonal initialization
    raw : dict
        The JSON document the config was parsed from
    """

    name: str = "run"
    seed: int = DEFAULT_SEED
    batch_size: int = DEFAULT_BATCH_SIZE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    output_dir: str = "runs"
    record_wall_time: bool = False
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    early_stopping: EarlyStopSpec = field(default_factory=EarlyStopSpec)
    batchnorm: BatchNormSpec = field(default_factory=BatchNormSpec)
    init_gain: float = DEFAULT_INIT_GAIN
    raw: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)


class _Reader:
    """Typed, path-aware access to one JSON object."""

    def __init__(self, raw: Any, path: str, allowed: Mapping[str, bool]) -> None:
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{path or 'config'} must be a JSON object")
        unknown = sorted(set(raw) - set(allowed))
        if unknown:
            where = f"{path}." if path else ""
            raise ConfigurationError(f"unknown key(s): {', '.join(where + k for k in unknown)}")
        missing = [k for k, required in allowed.items() if required and k not in raw]
        if missing:
            where = f"{path}." if path else ""
            raise ConfigurationError(f"missing key(s): {', '.join(where + k for k in missing)}")
        self.raw = raw
        self.path = path

    def key(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name

    def has(self, name: str) -> bool:
        return name in self.raw and self.raw[name] is not None

    def integer(self, name: str, default: Any, minimum: Optional[int] = None) -> Any:
        value = self.raw.get(name, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{self.key(name)} must be an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise ConfigurationError(f"{self.key(name)} must be >= {minimum}, got {value}")
        return value

    def real(self, name: str, default: Any) -> Any:
        value = self.raw.get(name, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{self.key(name)} must be a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigurationError(f"{self.key(name)} must be finite, got {value}")
        return float(value)

    def flag(self, name: str, default: bool) -> bool:
        value = self.raw.get(name, default)
        if not isinstance(value, bool):
            raise ConfigurationError(f"{self.key(name)} must be true or false, got {value!r}")
        return value

    def text(self, name: str, default: Any, choices: Optional[Tuple[str, ...]] = None) -> Any:
        value = self.raw.get(name, default)
        if value is None:
            return None
        if not isinstance(value, str):
            raise ConfigurationError(f"{self.key(name)} must be a string, got {value!r}")
        if choices is not None and value not in choices:
            raise ConfigurationError(
                f"{self.key(name)} must be one of {', '.join(choices)}, got {value!r}"
            )
        return value

    def items(self, name: str) -> List[Any]:
        value = self.raw.get(name, [])
        if value is None:
            return []
        if not isinstance(value, list):
            raise ConfigurationError(f"{self.key(name)} must be a list, got {value!r}")
        return value

    def obj(self, name: str) -> Dict[str, Any]:
        value = self.raw.get(name, {})
        return {} if value is None else value


def parse_layer(raw: Any, path: str) -> LayerSpec:
    """Parse one layer entry; unknown tags and keys are rejected."""
    if not isinstance(raw, dict) or "type" not in raw:
        raise ConfigurationError(f"{path} must be an object with a 'type' key")
    tag = raw["type"]
    try:
        kind = LayerKind(tag)
    except ValueError:
        known = ", ".join(k.value for k in LayerKind)
        raise ConfigurationError(f"{path}.type: unknown layer type {tag!r} (known: {known})")
    allowed = {"type": True, **LAYER_KEYS[kind]}
    r = _Reader(raw, path, allowed)

    padding = Padding.SAME
    if r.has("padding"):
        padding = Padding(r.text("padding", "same", tuple(p.value for p in Padding)))
    p = r.real("p", DEFAULT_DROPOUT_P)
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"{r.key('p')} must lie in [0, 1), got {p}")
    fixed_g = r.real("fixed_g", 0.5 if kind == LayerKind.MIXED_POOL_CONST else None)
    if fixed_g is not None and not 0.0 <= fixed_g <= 1.0:
        raise ConfigurationError(f"{r.key('fixed_g')} must lie in [0, 1], got {fixed_g}")
    return LayerSpec(
        kind=kind,
        units=r.integer("units", None, 1),
        filters=r.integer("filters", None, 1),
        kernel=r.integer("kernel", 3, 1),
        window=r.integer("window", DEFAULT_POOL_WINDOW, 1),
        stride=r.integer("stride", None, 1),
        p=p,
        slope=r.real("slope", None),
        fixed_g=fixed_g,
        momentum=r.real("momentum", None),
        eps=r.real("eps", None),
        padding=padding,
        bias=r.flag("bias", True),
        early=parse_layer(raw["early"], f"{path}.early") if "early" in raw else None,
        late=parse_layer(raw["late"], f"{path}.late") if "late" in raw else None,
    )


def _parse_layers(r: _Reader, name: str) -> Tuple[LayerSpec, ...]:
    return tuple(parse_layer(item, f"{r.key(name)}[{i}]") for i, item in enumerate(r.items(name)))


def _parse_files(r: _Reader, name: str) -> Tuple[str, ...]:
    files = r.items(name)
    if not all(isinstance(f, str) for f in files):
        raise ConfigurationError(f"{r.key(name)} must be a list of paths")
    return tuple(files)


def parse_dataset(raw: Any) -> DatasetSpec:
    r = _Reader(
        raw,
        "dataset",
        {k: False for k in (
            "name", "root", "train_files", "val_files", "train_limit", "val_limit",
            "val_fraction", "flip_p", "blobs",
        )},
    )
    name = r.text("name", "mnist", DATASET_NAMES)
    val_fraction = r.real("val_fraction", DEFAULT_VAL_FRACTION)
    if not 0.0 < val_fraction < 1.0:
        raise ConfigurationError(f"dataset.val_fraction must lie in (0, 1), got {val_fraction}")
    flip_p = r.real("flip_p", DEFAULT_FLIP_P)
    if not 0.0 <= flip_p <= 1.0:
        raise ConfigurationError(f"dataset.flip_p must lie in [0, 1], got {flip_p}")
    b = _Reader(r.obj("blobs"), "dataset.blobs", {k: False for k in ("n", "d", "k", "seed")})
    blobs = BlobsSpec(
        n=b.integer("n", 1000, 2),
        d=b.integer("d", 2, 1),
        k=b.integer("k", 2, 2),
        seed=b.integer("seed", None),
    )
    spec = DatasetSpec(
        name=name,
        root=r.text("root", None),
        train_files=_parse_files(r, "train_files"),
        val_files=_parse_files(r, "val_files"),
        train_limit=r.integer("train_limit", None, 2),
        val_limit=r.integer("val_limit", None, 1),
        val_fraction=val_fraction,
        flip_p=flip_p,
        blobs=blobs,
    )
    if name == "idx" and len(spec.train_files) != 2:
        raise ConfigurationError("dataset.train_files must name an images and a labels file")
    if name in ("mnist", "idx") and spec.val_files and len(spec.val_files) != 2:
        raise ConfigurationError("dataset.val_files must name an images and a labels file")
    return spec


def parse_model(raw: Any) -> ModelSpec:
    r = _Reader(
        raw,
        "model",
        {k: False for k in ("layers", "block", "depth", "head", "input_shape", "num_classes")},
    )
    input_shape = None
    if r.has("input_shape"):
        dims = r.items("input_shape")
        positive = all(isinstance(d, int) and not isinstance(d, bool) and d > 0 for d in dims)
        if not dims or not positive:
            raise ConfigurationError(f"model.input_shape must list positive integers, got {dims}")
        input_shape = tuple(dims)
    spec = ModelSpec(
        layers=_parse_layers(r, "layers"),
        block=_parse_layers(r, "block"),
        depth=r.integer("depth", 0, 0),
        head=_parse_layers(r, "head"),
        input_shape=input_shape,
        num_classes=r.integer("num_classes", None, 2),
    )
    if spec.depth and not spec.block:
        raise ConfigurationError("model.depth is set but model.block is empty")
    if not spec.compiled():
        raise ConfigurationError("model has no layers")
    return spec


def parse_config(raw: Any) -> ExperimentConfig:
    """
    Build an :class:`ExperimentConfig` from a decoded JSON document.

    Raises
    ------
    ConfigurationError
        On unknown keys, wrong types or out-of-range values
    """
    r = _Reader(
        raw,
        "",
        {k: False for k in (
            "name", "seed", "batch_size", "max_epochs", "output_dir", "record_wall_time",
            "dataset", "model", "schedule", "optimizer", "early_stopping", "batchnorm", "init",
        )},
    )
    s = _Reader(r.obj("schedule"), "schedule", {"tau": False, "mode": False})
    tau = s.real("tau", DEFAULT_TAU)
    if tau < 0:
        raise ConfigurationError(f"schedule.tau must be >= 0, got {tau}")
    mode = ScheduleMode(s.text("mode", "epoch", tuple(m.value for m in ScheduleMode)))

    o = _Reader(
        r.obj("optimizer"), "optimizer", {k: False for k in ("lr", "beta1", "beta2", "eps")}
    )
    optimizer = OptimizerSpec(
        lr=o.real("lr", DEFAULT_LR),
        beta1=o.real("beta1", DEFAULT_BETA1),
        beta2=o.real("beta2", DEFAULT_BETA2),
        eps=o.real("eps", DEFAULT_ADAM_EPS),
    )
    if optimizer.lr <= 0 or optimizer.eps <= 0:
        raise ConfigurationError("optimizer.lr and optimizer.eps must be positive")
    if not (0 <= optimizer.beta1 < 1 and 0 <= optimizer.beta2 < 1):
        raise ConfigurationError("optimizer betas must lie in [0, 1)")

    e = _Reader(r.obj("early_stopping"), "early_stopping", {"patience": False, "min_delta": False})
    early = EarlyStopSpec(
        patience=e.integer("patience", DEFAULT_PATIENCE, 1),
        min_delta=e.real("min_delta", DEFAULT_MIN_DELTA),
    )
    if early.min_delta < 0:
        raise ConfigurationError("early_stopping.min_delta must be >= 0")

    b = _Reader(r.obj("batchnorm"), "batchnorm", {"momentum": False, "eps": False})
    batchnorm = BatchNormSpec(
        momentum=b.real("momentum", DEFAULT_BN_MOMENTUM), eps=b.real("eps", DEFAULT_BN_EPS)
    )
    if not 0 < batchnorm.momentum < 1 or batchnorm.eps <= 0:
        raise ConfigurationError("batchnorm.momentum must lie in (0, 1) and eps be positive")

    i = _Reader(r.obj("init"), "init", {"gain": False})
    gain = i.real("gain", DEFAULT_INIT_GAIN)
    if gain <= 0:
        raise ConfigurationError(f"init.gain must be positive, got {gain}")

    if "model" not in raw:
        raise ConfigurationError("missing key(s): model")
    return ExperimentConfig(
        name=r.text("name", "run"),
        seed=r.integer("seed", DEFAULT_SEED, 0),
        batch_size=r.integer("batch_size", DEFAULT_BATCH_SIZE, 1),
        max_epochs=r.integer("max_epochs", DEFAULT_MAX_EPOCHS, 1),
        output_dir=r.text("output_dir", "runs"),
        record_wall_time=r.flag("record_wall_time", False),
        dataset=parse_dataset(r.obj("dataset")),
        model=parse_model(raw["model"]),
        schedule=ScheduleSpec(tau=tau, mode=mode),
        optimizer=optimizer,
        early_stopping=early,
        batchnorm=batchnorm,
        init_gain=gain,
        raw=copy.deepcopy(raw),
    )


def parse_value(text: str) -> Any:
    """Decode an override value as JSON, falling back to the plain string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Return a copy of ``raw`` with dotted-path overrides applied.

    ``{"model.depth": 64}`` sets ``raw["model"]["depth"]``; intermediate
    objects are created as needed.
    """
    result = copy.deepcopy(raw)
    for dotted, value in overrides.items():
        keys = dotted.split(".")
        target = result
        for key in keys[:-1]:
            child = target.get(key)
            if child is None:
                child = target[key] = {}
            if not isinstance(child, dict):
                raise ConfigurationError(f"cannot override {dotted}: {key} is not an object")
            target = child
        target[keys[-1]] = value
    return result


def read_document(path: str) -> Dict[str, Any]:
    """Decode a JSON config file without validating it."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path} must hold a JSON object")
    return raw


def load_config(path: str, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """
    Read, override and parse a JSON config file.

    Raises
    ------
    ConfigurationError
        If the file is missing, is not valid JSON or fails validation
    """
    raw = read_document(path)
    if overrides:
        raw = apply_overrides(raw, overrides)
    config = parse_config(raw)
    logger.debug("loaded config %s from %s", config.name, path)
    return config
