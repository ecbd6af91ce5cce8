"""Constants and default hyperparameters for the GradNet annealing framework."""

from typing import Dict, List
from enum import Enum, auto


class Mode(Enum):
    """Forward-pass mode of a network."""

    TRAIN = auto()
    EVAL = auto()


class ElementwiseKind(Enum):
    """Binary elementwise operations understood by the tensor core."""

    ADD = auto()
    SUB = auto()
    MUL = auto()
    SCALE = auto()  # multiply by a scalar
    SHIFT = auto()  # add a scalar


class ActivationKind(Enum):
    """Pointwise activations understood by the tensor core."""

    RELU = auto()
    LEAKY_RELU = auto()
    ABS = auto()
    IDENTITY = auto()


class PoolKind(Enum):
    """Window reductions for 2-D pooling."""

    MEAN = auto()
    MAX = auto()


class Padding(Enum):
    """Convolution padding modes."""

    VALID = "valid"
    SAME = "same"


class ScheduleMode(Enum):
    """Granularity at which the gate value is recomputed."""

    EPOCH = "epoch"
    STEP = "step"


class LayerKind(Enum):
    """Type tags accepted in the ``type`` field of a layer spec."""

    DENSE = "dense"
    FLATTEN = "flatten"
    IDENTITY = "identity"
    ABS = "abs"
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    VERY_LEAKY_RELU = "very_leaky_relu"
    GRELU = "grelu"
    INVERSE_GRELU = "inverse_grelu"
    DROPOUT = "dropout"
    GRADUAL_DROPOUT = "gradual_dropout"
    MEAN_POOL = "mean_pool"
    MAX_POOL = "max_pool"
    GRADUAL_POOL = "gradual_pool"
    MIXED_POOL_CONST = "mixed_pool_const"
    BATCHNORM = "batchnorm"
    GRADUAL_BATCHNORM = "gradual_batchnorm"
    CONV = "conv"
    GRADUAL_CONV = "gradual_conv"
    GRADUAL_NIN = "gradual_nin"
    GRADNET = "gradnet"


class RunStatus(Enum):
    """Final status of a training run."""

    COMPLETED = "completed"
    EARLY_STOPPED = "early_stopped"
    DIVERGED = "diverged"


class EarlyStopDecision(Enum):
    """Outcome of feeding one validation metric to early stopping."""

    CONTINUE = auto()
    STOP = auto()
    NEW_BEST = auto()


# GradNet layers whose output depends on the gate value
GRADUAL_KINDS: List[LayerKind] = [
    LayerKind.GRELU,
    LayerKind.INVERSE_GRELU,
    LayerKind.GRADUAL_DROPOUT,
    LayerKind.GRADUAL_POOL,
    LayerKind.GRADUAL_BATCHNORM,
    LayerKind.GRADUAL_CONV,
    LayerKind.GRADUAL_NIN,
    LayerKind.GRADNET,
]

# Static negative-side slopes for the leaky baselines
LEAKY_SLOPES: Dict[LayerKind, float] = {
    LayerKind.LEAKY_RELU: 0.01,
    LayerKind.VERY_LEAKY_RELU: 1.0 / 3.0,
}

# Optimizer defaults
DEFAULT_LR = 1e-3
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_ADAM_EPS = 1e-8

# Batch normalization defaults
DEFAULT_BN_MOMENTUM = 0.9
DEFAULT_BN_EPS = 1e-5

# Early stopping defaults (monitors validation accuracy)
DEFAULT_PATIENCE = 10
DEFAULT_MIN_DELTA = 1e-4

# Training protocol defaults
DEFAULT_BATCH_SIZE = 256
DEFAULT_MAX_EPOCHS = 15
DEFAULT_TAU = 5.0  # epochs
DEFAULT_SEED = 0
DEFAULT_VAL_FRACTION = 0.1
DEFAULT_FLIP_P = 0.0
DEFAULT_INIT_GAIN = 1.0
DEFAULT_DROPOUT_P = 0.5
DEFAULT_POOL_WINDOW = 2

# Divergence horizon margin above chance accuracy
DIVERGENCE_MARGIN = 0.02

# Numerical verification defaults
DEFAULT_FD_EPS = 1e-5
DEFAULT_GRADCHECK_TOL = 1e-4
GRADCHECK_GATES: List[float] = [0.0, 0.5, 1.0]

# File layout
DATA_DIR_ENV = "GRADNET_DATA_DIR"
METRICS_FILE = "metrics.csv"
SNAPSHOT_FILE = "best.snapshot"
RUN_META_FILE = "run.json"
SUMMARY_FILE = "summary.csv"
METRICS_COLUMNS: List[str] = [
    "epoch",
    "g",
    "train_loss",
    "train_acc",
    "val_loss",
    "val_acc",
    "wall_seconds",
]

# Standard dataset file names
MNIST_FILES: Dict[str, str] = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
CIFAR10_TRAIN_FILES: List[str] = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR10_TEST_FILE = "test_batch.bin"

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR10_RECORD_BYTES = 3073
CIFAR10_SHAPE = (3, 32, 32)
CIFAR10_CLASSES = 10
