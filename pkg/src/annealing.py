"""Gate schedule shared by every GradNet layer."""

import logging
import math
from dataclasses import dataclass

from .constants import ScheduleMode
from .models import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GateValue:
    """Interpolation weight ``g`` held fixed while it is in use.

    Attributes
    ----------
    g : float
        Weight of the late component, in [0, 1]
    """

    g: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.g <= 1.0:
            raise ConfigurationError(f"gate value must lie in [0, 1], got {self.g}")

    def __float__(self) -> float:
        return self.g


def gate(t: float, tau: float) -> GateValue:
    """
    Linear annealing gate ``min(t / tau, 1)``.

    Parameters
    ----------
    t : float
        Epoch counter (fractional in step mode), non-negative
    tau : float
        Epoch at which annealing completes; ``0`` means ``g = 1`` throughout

    Returns
    -------
    GateValue
        The gate for epoch ``t``

    Raises
    ------
    ConfigurationError
        If ``tau`` is negative or not finite, or ``t`` is negative
    """
    if not math.isfinite(tau) or tau < 0:
        raise ConfigurationError(f"tau must be a finite non-negative number, got {tau}")
    if t < 0:
        raise ConfigurationError(f"epoch counter must be non-negative, got {t}")
    if tau == 0:
        return GateValue(1.0)
    return GateValue(min(t / tau, 1.0))


@dataclass
class LinearSchedule:
    """
    Epoch-driven gate schedule.

    ``t`` starts at 0 so the first epoch trains the pure early component.
    In ``STEP`` mode the gate also advances fractionally within an epoch.

    Attributes
    ----------
    tau : float
        Annealing horizon in epochs
    t : int
        Number of completed epochs
    mode : ScheduleMode
        ``EPOCH`` holds g constant for a whole epoch, ``STEP`` per batch
    """

    tau: float
    t: int = 0
    mode: ScheduleMode = ScheduleMode.EPOCH

    def __post_init__(self) -> None:
        # Validates tau eagerly.
        gate(0, self.tau)

    @property
    def current(self) -> GateValue:
        """Gate for the epoch that is about to run (or running)."""
        return gate(self.t, self.tau)

    def gate_for_step(self, step: int, steps_per_epoch: int) -> GateValue:
        """Gate for batch ``step`` of the current epoch."""
        if self.mode == ScheduleMode.EPOCH or steps_per_epoch <= 0:
            return self.current
        return gate(self.t + step / steps_per_epoch, self.tau)

    def advance_epoch(self) -> GateValue:
        """Count one more completed epoch and return the new gate."""
        self.t += 1
        value = self.current
        logger.debug("schedule advanced to t=%d, g=%.6f", self.t, value.g)
        return value

    @property
    def full_epoch(self) -> int:
        """First epoch index at which g equals 1."""
        return math.ceil(self.tau)


def advance_epoch(schedule: LinearSchedule) -> GateValue:
    """Advance ``schedule`` by one epoch and return the new gate."""
    return schedule.advance_epoch()
