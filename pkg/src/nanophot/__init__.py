"""All-optical stochastic computing with photonic-crystal nanocavity gates."""

from .device import (
    DetuningCalibration,
    Nanocavity,
    default_calibration,
    detuning,
    fit_calibration,
    lorentzian,
    max_detuning,
    pump_for_detuning,
    through_transmission,
)
from .stochastic import BitStream, Lfsr

__version__ = "0.1.0"

__all__ = [
    "BitStream",
    "DetuningCalibration",
    "Lfsr",
    "Nanocavity",
    "default_calibration",
    "detuning",
    "fit_calibration",
    "lorentzian",
    "max_detuning",
    "pump_for_detuning",
    "through_transmission",
]
