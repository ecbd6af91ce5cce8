"""Type definitions and exceptions for the GradNet annealing framework."""

from typing import Dict, List, TypedDict


class EpochRecord(TypedDict):
    """One row of a run's metrics history.

    Attributes
    ----------
    epoch : int
        Zero-based epoch index
    g : float
        Gate value held during the epoch
    train_loss : float
        Mean training loss over the epoch's batches
    train_acc : float
        Training accuracy measured on the train-mode forward passes
    val_loss : float
        Validation loss in eval mode
    val_acc : float
        Validation accuracy in eval mode
    wall_seconds : float
        Epoch duration, or 0.0 when wall time recording is off
    """

    epoch: int
    g: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    wall_seconds: float


class EvalResult(TypedDict):
    """Loss and accuracy of a model on a dataset."""

    loss: float
    accuracy: float


class GradcheckEntry(TypedDict):
    """Worst relative gradient error for one (layer, gate) pair."""

    layer: str
    g: float
    max_rel_error: float
    passed: bool


class DatasetSummary(TypedDict):
    """Shape and pixel statistics printed by ``inspect``."""

    split: str
    num_samples: int
    shape: List[int]
    num_classes: int
    pixel_min: float
    pixel_max: float
    pixel_mean: float
    label_counts: Dict[int, int]


class GradNetError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(GradNetError, ValueError):
    """Operand shapes do not conform."""


class ConfigurationError(GradNetError, ValueError):
    """A hyperparameter or config document is invalid."""


class BuildError(ConfigurationError):
    """A model cannot be assembled from its layer specs."""


class ContractError(GradNetError, ValueError):
    """A documented precondition of an operation does not hold."""


class TapeStateError(GradNetError, RuntimeError):
    """A tape was used in a state that forbids the request."""


class DataFormatError(GradNetError, ValueError):
    """A dataset file does not follow its binary format."""


class DivergenceError(GradNetError, ArithmeticError):
    """Training produced non-finite values."""
