"""NOT, XOR and MUX gates built from pumped nanocavities.

Pump powers stored on a gate are off-chip laser powers; the cavity receives
``power * il``. Simultaneous pumps add in power before the detuning model.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping

from .device import (
    DetuningCalibration,
    InvalidParameterError,
    Nanocavity,
    detuning,
    pump_for_detuning,
    through_transmission,
)

IL_DEFAULT = 10 ** (-1.0 / 10)  # 1 dB
OPERATING_POINT_TOL = 0.05
LINEARITY_TOL = 0.10


class MiscalibratedGateError(ValueError):
    """Pump power does not produce the detuning the gate was designed for."""


def db_to_linear(db: float) -> float:
    return 10 ** (-db / 10)


def _check_bit(*bits: int) -> None:
    for b in bits:
        if b not in (0, 1):
            raise InvalidParameterError(f"logical input must be 0 or 1, got {b!r}")


def linearity_error(cav: Nanocavity, calib: DetuningCalibration, power: float) -> float:
    """Relative gap between one-pump shift and half the two-pump shift."""
    two = detuning(cav, calib, 2 * power)
    if two == 0:
        return 0.0
    return abs(detuning(cav, calib, power) - two / 2) / (two / 2)


@dataclass(frozen=True)
class NotGate:
    """Single cavity whose rest resonance sits ``design_detuning`` nm red of the signal."""

    cavity: Nanocavity
    pump_power_high: float
    signal_wavelength: float
    il: float = IL_DEFAULT

    def __post_init__(self) -> None:
        if self.pump_power_high < 0:
            raise InvalidParameterError("pump power must be non-negative")
        if not 0 < self.il <= 1:
            raise InvalidParameterError("insertion loss factor must lie in (0, 1]")

    @property
    def design_detuning(self) -> float:
        return self.cavity.lambda_s_rest - self.signal_wavelength

    @classmethod
    def design(cls, q_s: float, delta: float, signal_wavelength: float, calib: DetuningCalibration,
               m: float = 2.0, floor: float = 0.1, il: float = IL_DEFAULT) -> "NotGate":
        """Place the resonance ``delta`` red of the signal and size the pump to close the gap."""
        if delta <= 0:
            raise InvalidParameterError("NOT detuning must be positive")
        cav = Nanocavity(signal_wavelength + delta, q_s, m=m, floor=floor)
        received = pump_for_detuning(cav, calib, delta)
        if math.isinf(received):
            raise MiscalibratedGateError(f"detuning {delta} nm exceeds the cavity ceiling")
        return cls(cav, received / il, signal_wavelength, il)


def not_transmission(g: NotGate, calib: DetuningCalibration, input_bit: int) -> float:
    _check_bit(input_bit)
    d = detuning(g.cavity, calib, input_bit * g.pump_power_high * g.il)
    return through_transmission(g.cavity, g.signal_wavelength, d)


@dataclass(frozen=True)
class XorGate:
    """Two cascaded cavities of equal Q; X1 rests on the signal, X2 sits ``delta_lambda_xor`` above it.

    One active pump moves both resonances half-way so they straddle the signal;
    two pumps land X2 on the signal.
    """

    cavity1: Nanocavity
    cavity2: Nanocavity
    delta_lambda_xor: float
    pump_power_high: float
    signal_wavelength: float
    il: float = IL_DEFAULT

    def __post_init__(self) -> None:
        if self.cavity1.q_s != self.cavity2.q_s:
            raise InvalidParameterError("XOR cavities must have equal Q_S")
        if self.delta_lambda_xor <= 0:
            raise InvalidParameterError("delta_lambda_xor must be positive")
        if not math.isclose(self.cavity2.lambda_s_rest - self.cavity1.lambda_s_rest,
                            self.delta_lambda_xor, abs_tol=1e-9):
            raise InvalidParameterError("cavity2 must rest delta_lambda_xor above cavity1")
        if not math.isclose(self.cavity1.lambda_s_rest, self.signal_wavelength, abs_tol=1e-9):
            raise InvalidParameterError("cavity1 must rest on the signal wavelength")
        if self.pump_power_high < 0:
            raise InvalidParameterError("pump power must be non-negative")

    @classmethod
    def design(cls, q_s: float, delta_lambda_xor: float, signal_wavelength: float,
               calib: DetuningCalibration, m: float = 2.0, floor: float = 0.1,
               il: float = IL_DEFAULT) -> "XorGate":
        """Size each pump so that both pumps together shift by ``delta_lambda_xor``."""
        c1 = Nanocavity(signal_wavelength, q_s, m=m, floor=floor)
        c2 = Nanocavity(signal_wavelength + delta_lambda_xor, q_s, m=m, floor=floor)
        received_total = pump_for_detuning(c1, calib, delta_lambda_xor)
        if math.isinf(received_total):
            raise MiscalibratedGateError(f"delta_lambda_xor {delta_lambda_xor} nm exceeds the cavity ceiling")
        g = cls(c1, c2, delta_lambda_xor, received_total / 2 / il, signal_wavelength, il)
        g.check_operating_point(calib)
        return g

    def check_operating_point(self, calib: DetuningCalibration) -> None:
        """Raise unless two pumps shift by ``delta_lambda_xor`` within 5%; warn on poor linearity."""
        got = detuning(self.cavity1, calib, 2 * self.pump_power_high * self.il)
        if abs(got - self.delta_lambda_xor) > OPERATING_POINT_TOL * self.delta_lambda_xor:
            raise MiscalibratedGateError(
                f"two-pump detuning {got:.4f} nm differs from design {self.delta_lambda_xor:.4f} nm by more than 5%")
        if linearity_error(self.cavity1, calib, self.pump_power_high * self.il) > LINEARITY_TOL:
            warnings.warn("one-pump shift deviates from half the two-pump shift by more than 10%", stacklevel=2)


def xor_transmission(g: XorGate, calib: DetuningCalibration, in1: int, in2: int) -> float:
    _check_bit(in1, in2)
    # both cavities share the pumps, so they receive the same shift
    d = detuning(g.cavity1, calib, (in1 + in2) * g.pump_power_high * g.il)
    return (through_transmission(g.cavity1, g.signal_wavelength, d)
            * through_transmission(g.cavity2, g.signal_wavelength, d))


@dataclass(frozen=True)
class MuxGate:
    """Cavity that blocks one wavelength set at rest and the other set when pumped by ``shift`` nm."""

    cavity: Nanocavity
    shift: float
    pump_power_high: float
    il: float = IL_DEFAULT

    def __post_init__(self) -> None:
        if self.shift <= 0:
            raise InvalidParameterError("MUX shift must be positive")
        if self.pump_power_high < 0:
            raise InvalidParameterError("pump power must be non-negative")

    @classmethod
    def design(cls, cavity: Nanocavity, shift: float, calib: DetuningCalibration,
               il: float = IL_DEFAULT) -> "MuxGate":
        received = pump_for_detuning(cavity, calib, shift)
        if math.isinf(received):
            raise MiscalibratedGateError(f"shift {shift} nm exceeds the cavity ceiling")
        g = cls(cavity, shift, received / il, il)
        g.check_operating_point(calib)
        return g

    def check_operating_point(self, calib: DetuningCalibration) -> None:
        got = detuning(self.cavity, calib, self.pump_power_high * self.il)
        if abs(got - self.shift) > OPERATING_POINT_TOL * self.shift:
            raise MiscalibratedGateError(
                f"pump detunes by {got:.4f} nm, design shift is {self.shift:.4f} nm")


def mux_transmission(g: MuxGate, calib: DetuningCalibration, sel: int, lam: float) -> float:
    _check_bit(sel)
    d = detuning(g.cavity, calib, sel * g.pump_power_high * g.il)
    return through_transmission(g.cavity, lam, d)


def gate_extinction_ratio(t_high: float, t_low: float) -> float:
    """ER in dB; ``inf`` when the low level is exactly zero."""
    if t_low == 0:
        return math.inf
    if not (0 < t_high <= 1 and 0 < t_low <= 1) or t_high < t_low:
        raise InvalidParameterError("need 0 < t_low <= t_high <= 1")
    return 10 * math.log10(t_high / t_low)


def truth_table(levels: Mapping[tuple[int, ...], float],
                expected: Mapping[tuple[int, ...], int]) -> tuple[float, dict[tuple[int, ...], int], bool]:
    """Threshold transmissions at the midpoint between the weakest '1' and strongest '0'.

    Returns ``(threshold, logic, matches)`` where ``matches`` tells whether the
    thresholded logic equals ``expected``.
    """
    ones = [levels[k] for k, v in expected.items() if v == 1]
    zeros = [levels[k] for k, v in expected.items() if v == 0]
    threshold = (min(ones) + max(zeros)) / 2 if ones and zeros else 0.5
    logic = {k: int(t > threshold) for k, t in levels.items()}
    return threshold, logic, logic == dict(expected)


NOT_TABLE = {(0,): 1, (1,): 0}
XOR_TABLE = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 0}


def not_levels(g: NotGate, calib: DetuningCalibration) -> dict[tuple[int, ...], float]:
    return {(b,): not_transmission(g, calib, b) for b in (0, 1)}


def xor_levels(g: XorGate, calib: DetuningCalibration) -> dict[tuple[int, ...], float]:
    return {(a, b): xor_transmission(g, calib, a, b) for a in (0, 1) for b in (0, 1)}
