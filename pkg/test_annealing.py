"""Tests for the gate schedule."""

import math

import pytest

from src.annealing import GateValue, LinearSchedule, advance_epoch, gate
from src.constants import ScheduleMode
from src.models import ConfigurationError


@pytest.mark.parametrize(
    "t,tau,expected",
    [(0, 100, 0.0), (100, 100, 1.0), (250, 100, 1.0), (50, 100, 0.5), (30, 100, 0.3)],
)
def test_gate_formula(t, tau, expected):
    assert gate(t, tau).g == pytest.approx(expected, abs=1e-15)


def test_tau_zero_means_late_component_from_the_start():
    assert gate(0, 0).g == 1.0
    assert gate(7, 0).g == 1.0


@pytest.mark.parametrize("tau", [-1.0, math.inf, math.nan])
def test_invalid_tau_is_rejected(tau):
    with pytest.raises(ConfigurationError):
        gate(0, tau)


def test_five_advances_reach_one():
    schedule = LinearSchedule(tau=5)
    assert schedule.current.g == 0.0
    values = [advance_epoch(schedule).g for _ in range(5)]
    assert values == pytest.approx([0.2, 0.4, 0.6, 0.8, 1.0], abs=1e-15)


def test_gate_clamps_after_tau():
    schedule = LinearSchedule(tau=5)
    for _ in range(10):
        schedule.advance_epoch()
    assert schedule.current.g == 1.0


@pytest.mark.parametrize("tau", [0.5, 1, 3, 7.5, 20])
def test_gate_is_monotone_and_reaches_one_at_ceil_tau(tau):
    values = [gate(t, tau).g for t in range(40)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert all(0.0 <= v <= 1.0 for v in values)
    assert values[math.ceil(tau)] == 1.0
    assert LinearSchedule(tau).full_epoch == math.ceil(tau)


def test_step_mode_advances_within_an_epoch():
    schedule = LinearSchedule(tau=2, mode=ScheduleMode.STEP)
    assert schedule.gate_for_step(0, 4).g == 0.0
    assert schedule.gate_for_step(2, 4).g == pytest.approx(0.25)
    schedule.advance_epoch()
    assert schedule.gate_for_step(2, 4).g == pytest.approx(0.75)


def test_epoch_mode_holds_gate_for_every_step():
    schedule = LinearSchedule(tau=2)
    schedule.advance_epoch()
    assert {schedule.gate_for_step(step, 10).g for step in range(10)} == {0.5}


def test_gate_value_bounds():
    with pytest.raises(ConfigurationError):
        GateValue(1.5)
    assert GateValue(0.0).g == 0.0 and GateValue(1.0).g == 1.0
    assert float(GateValue(0.25)) == 0.25
