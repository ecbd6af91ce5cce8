"""Training protocol: orthogonal initialization, Adam and early stopping."""

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Mapping, Optional

import numpy as np

from .constants import (
    DEFAULT_ADAM_EPS,
    DEFAULT_BETA1,
    DEFAULT_BETA2,
    DEFAULT_LR,
    DEFAULT_MIN_DELTA,
    DEFAULT_PATIENCE,
    EarlyStopDecision,
)
from .models import ConfigurationError, ContractError, DivergenceError

if TYPE_CHECKING:
    from .layers import Parameter

logger = logging.getLogger(__name__)


def orthogonal_init(
    rows: int, cols: int, gain: float, rng: np.random.Generator
) -> np.ndarray:
    """
    Sample a (semi-)orthogonal ``rows`` × ``cols`` matrix scaled by ``gain``.

    A Gaussian matrix is QR-factorized and the columns of Q are sign-corrected
    so that R has a positive diagonal, which makes the draw uniform over the
    orthogonal group. Tall results satisfy ``W.T @ W = gain**2 I`` and wide
    ones ``W @ W.T = gain**2 I``.

    Parameters
    ----------
    rows, cols : int
        Matrix shape; convolution kernels pass ``F`` and ``C * kh * kw``
    gain : float
        Multiplier applied after orthogonalization
    rng : numpy.random.Generator
        Source of the Gaussian sample

    Returns
    -------
    numpy.ndarray
        The initialized matrix
    """
    if rows < 1 or cols < 1:
        raise ConfigurationError(f"orthogonal init needs positive dims, got {rows}x{cols}")
    wide = rows < cols
    sample = rng.standard_normal((cols, rows) if wide else (rows, cols))
    q, r = np.linalg.qr(sample)
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    if wide:
        q = q.T
    return gain * q


@dataclass
class AdamState:
    """
    Moments and hyperparameters of the Adam optimizer.

    Attributes
    ----------
    lr : float
        Step size
    beta1, beta2 : float
        Decay rates of the first and second moment estimates
    eps : float
        Denominator floor
    step : int
        Number of updates applied so far
    m, v : dict of str to numpy.ndarray
        First and second moments per parameter name
    """

    lr: float = DEFAULT_LR
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    eps: float = DEFAULT_ADAM_EPS
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.eps <= 0:
            raise ConfigurationError(f"Adam lr and eps must be positive, got {self.lr}, {self.eps}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigurationError(
                f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}"
            )


def _layer_of(name: str) -> str:
    parts = name.split(".")
    if len(parts) >= 2 and parts[0].isdigit():
        return f"layer {parts[0]} ({parts[1]})"
    return "unknown layer"


def adam_step(
    params: Mapping[str, "Parameter"],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> Mapping[str, "Parameter"]:
    """
    Apply one bias-corrected Adam update to every parameter.

    Parameters
    ----------
    params : mapping of str to Parameter
        Parameters updated in place (their ``value`` is replaced)
    grads : mapping of str to numpy.ndarray
        Gradient for every parameter name
    state : AdamState
        Optimizer state, advanced by one step

    Returns
    -------
    mapping of str to Parameter
        ``params``, for chaining

    Raises
    ------
    ContractError
        If a parameter has no gradient or a gradient has the wrong shape
    DivergenceError
        If any gradient holds NaN or infinity; nothing is updated
    """
    for name, parameter in params.items():
        grad = grads.get(name)
        if grad is None:
            raise ContractError(f"no gradient supplied for {name}")
        if grad.shape != parameter.shape:
            raise ContractError(
                f"gradient for {name} has shape {list(grad.shape)}, "
                f"parameter has {list(parameter.shape)}"
            )
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite gradient in {name} ({_layer_of(name)})")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for name, parameter in params.items():
        grad = grads[name]
        m = state.m.get(name, np.zeros(parameter.shape))
        v = state.v.get(name, np.zeros(parameter.shape))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        m_hat = m / correction1
        v_hat = v / correction2
        parameter.grad = grad
        parameter.value = parameter.value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


@dataclass
class EarlyStopState:
    """
    Patience counter over a validation metric where larger is better.

    Attributes
    ----------
    patience : int or None
        Non-improving epochs tolerated; ``None`` never stops
    min_delta : float
        Smallest gain that counts as an improvement
    best : float
        Best metric seen so far
    best_epoch : int
        Epoch of ``best``, -1 before the first update
    since_improvement : int
        Consecutive non-improving epochs
    snapshot : dict, optional
        Model state captured at ``best_epoch``
    best_g : float, optional
        Gate the model was evaluated at in ``best_epoch``
    """

    patience: Optional[int] = DEFAULT_PATIENCE
    min_delta: float = DEFAULT_MIN_DELTA
    best: float = -math.inf
    best_epoch: int = -1
    since_improvement: int = 0
    epochs_seen: int = 0
    snapshot: Optional[Dict[str, np.ndarray]] = None
    best_g: Optional[float] = None

    def __post_init__(self) -> None:
        if self.patience is not None and self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1 or null, got {self.patience}")
        if self.min_delta < 0:
            raise ConfigurationError(f"min_delta must be >= 0, got {self.min_delta}")


def early_stopping_update(
    state: EarlyStopState,
    val_metric: float,
    snapshot: Optional[Dict[str, np.ndarray]] = None,
    gate: Optional[float] = None,
) -> EarlyStopDecision:
    """
    Feed one epoch's validation metric to early stopping.

    Returns ``NEW_BEST`` when the metric beats the best by at least
    ``min_delta`` (the snapshot and its gate are kept), ``STOP`` once ``patience``
    consecutive epochs failed to improve, ``CONTINUE`` otherwise. A NaN
    metric counts as non-improvement.
    """
    epoch = state.epochs_seen
    state.epochs_seen += 1
    if math.isnan(val_metric):
        logger.warning("validation metric is NaN at epoch %d; counted as no improvement", epoch)
    elif val_metric >= state.best + state.min_delta:
        state.best = val_metric
        state.best_epoch = epoch
        state.since_improvement = 0
        state.snapshot = snapshot
        state.best_g = gate
        return EarlyStopDecision.NEW_BEST
    state.since_improvement += 1
    if state.patience is not None and state.since_improvement >= state.patience:
        return EarlyStopDecision.STOP
    return EarlyStopDecision.CONTINUE
