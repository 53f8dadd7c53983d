"""Single photonic-crystal nanocavity: notch transmission and pump-induced detuning.

The cavity has two resonances separated by ``fsr``: one near the signal
(``lambda_s_rest``) and one near the pump (``lambda_p_rest``). Pumping blue-shifts
the signal resonance. The shift follows a saturating closed form whose ceiling and
saturation power both scale as ``1/Q_P``:

    d(P) = S * lambda_p / Q_P * (1 - exp(-P * Q_P / (C * Q_P,ref)))

``S`` (``sat_scale``) and ``C`` (``power_scale``) come from :func:`fit_calibration`.
All powers are off-chip average powers in microwatts, wavelengths in nanometres.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.optimize import curve_fit

SCHEMA_VERSION = 1

# Reference pump resonance of the characterised device (nm).
REFERENCE_PUMP_WAVELENGTH = 1568.8
REFERENCE_Q_P = 700.0
# Off-chip average pump -> on-chip peak conversion of the pulsed measurement
# (250 uW average ~ 100 mW peak). Metadata only; never applied in the model.
OFFCHIP_AVG_TO_ONCHIP_PEAK = 100e3 / 250.0


class InvalidParameterError(ValueError):
    """Raised for physically meaningless model inputs."""


class InsufficientDataError(ValueError):
    """Raised when a calibration fit has too few points."""


@dataclass(frozen=True)
class Nanocavity:
    """One resonator, described by its signal-side resonance at rest.

    Parameters
    ----------
    lambda_s_rest : float
        Signal-side resonance with no pump applied [nm].
    q_s : float
        Quality factor of the signal resonance.
    m : float
        Figure of merit ``Q_S / Q_P``.
    fsr : float
        ``lambda_p_rest - lambda_s_rest`` [nm].
    floor : float
        On-resonance through transmission (extinction floor), in (0, 1).
    """

    lambda_s_rest: float
    q_s: float
    m: float = 2.0
    fsr: float = 24.0
    floor: float = 0.1

    def __post_init__(self) -> None:
        if self.lambda_s_rest <= 0:
            raise InvalidParameterError(f"lambda_s_rest must be positive, got {self.lambda_s_rest}")
        if self.q_s <= 0:
            raise InvalidParameterError(f"q_s must be positive, got {self.q_s}")
        if self.m <= 0:
            raise InvalidParameterError(f"m must be positive, got {self.m}")
        if not 0.0 < self.floor < 1.0:
            raise InvalidParameterError(f"floor must lie in (0, 1), got {self.floor}")
        if self.lambda_p_rest <= 0:
            raise InvalidParameterError("pump resonance must be positive")

    @property
    def q_p(self) -> float:
        return self.q_s / self.m

    @property
    def lambda_p_rest(self) -> float:
        return self.lambda_s_rest + self.fsr

    @property
    def linewidth(self) -> float:
        """Signal resonance FWHM [nm]."""
        return self.lambda_s_rest / self.q_s

    @property
    def resonances_separated(self) -> bool:
        """True when pump and signal resonances are more than 10 linewidths apart."""
        return abs(self.fsr) > 10.0 * self.linewidth


@dataclass(frozen=True)
class DetuningCalibration:
    """Fitted optical tuning efficiency of a reference device.

    ``coeffs`` holds the zero-intercept polynomial (c1, c2, c3) mapping pump
    power to detuning for the measured device; ``sat_scale`` and
    ``power_scale`` parametrise the closed form used for every other cavity.
    """

    q_p_ref: float
    coeffs: tuple[float, ...]
    sat_scale: float
    power_scale: float
    residual_rms: float = 0.0
    lambda_p_ref: float = REFERENCE_PUMP_WAVELENGTH
    power_range: tuple[float, float] = (0.0, 0.0)
    monotone: bool = True
    degenerate: bool = False
    closed_form_max_dev: float = 0.0

    def __post_init__(self) -> None:
        if self.q_p_ref <= 0:
            raise InvalidParameterError("q_p_ref must be positive")
        if not self.degenerate and (self.sat_scale <= 0 or self.power_scale <= 0):
            raise InvalidParameterError("sat_scale and power_scale must be positive")

    def polynomial(self, power: float | np.ndarray) -> float | np.ndarray:
        """Evaluate the fitted polynomial (reference device only)."""
        p = np.asarray(power, dtype=float)
        out = sum(c * p ** (k + 1) for k, c in enumerate(self.coeffs))
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coeffs"] = list(self.coeffs)
        d["power_range"] = list(self.power_range)
        d["schema_version"] = SCHEMA_VERSION
        return d

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "DetuningCalibration":
        d = {k: v for k, v in d.items() if k != "schema_version"}
        d["coeffs"] = tuple(d["coeffs"])
        if "power_range" in d:
            d["power_range"] = tuple(d["power_range"])
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "DetuningCalibration":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def lorentzian(lam, lambda_res, q):
    """Normalised Lorentzian line, 1 at ``lambda_res`` with FWHM ``lambda_res / q``."""
    if np.any(np.asarray(q) <= 0) or np.any(np.asarray(lambda_res) <= 0):
        raise InvalidParameterError("q and lambda_res must be positive")
    x = 2.0 * q * (np.asarray(lam, dtype=float) - lambda_res) / lambda_res
    out = 1.0 / (1.0 + x * x)
    return float(out) if np.ndim(out) == 0 else out


def through_transmission(cav: Nanocavity, lam, detuning=0.0):
    """Through-port transmission at ``lam`` with the resonance blue-shifted by ``detuning``."""
    if np.any(np.asarray(detuning) < 0):
        raise InvalidParameterError("detuning must be non-negative")
    res = cav.lambda_s_rest - np.asarray(detuning, dtype=float)
    return 1.0 - (1.0 - cav.floor) * lorentzian(lam, res, cav.q_s)


def extinction_vs_floor(cav: Nanocavity, detuning: float) -> float:
    """ER in dB between the at-rest transmission ``detuning`` away from resonance and the floor."""
    t = through_transmission(cav, cav.lambda_s_rest - detuning, 0.0)
    return 10.0 * math.log10(t / cav.floor)


def max_detuning(cav: Nanocavity, calib: DetuningCalibration) -> float:
    """Saturation ceiling of the blue shift for this cavity [nm]."""
    return calib.sat_scale * cav.lambda_p_rest / cav.q_p


def saturation_power(cav: Nanocavity, calib: DetuningCalibration) -> float:
    """Power constant of the exponential approach to the ceiling [uW]."""
    return calib.power_scale * calib.q_p_ref / cav.q_p


def detuning(cav: Nanocavity, calib: DetuningCalibration, pump_power):
    """Blue shift [nm] produced by ``pump_power`` [uW] of received pump."""
    p = np.asarray(pump_power, dtype=float)
    if np.any(p < 0):
        raise InvalidParameterError("pump power must be non-negative")
    if calib.degenerate:
        out = np.zeros_like(p)
    else:
        out = max_detuning(cav, calib) * -np.expm1(-p / saturation_power(cav, calib))
    return float(out) if np.ndim(out) == 0 else out


def pump_for_detuning(cav: Nanocavity, calib: DetuningCalibration, target: float) -> float:
    """Received pump power giving exactly ``target`` nm of shift; ``inf`` if unreachable."""
    if target < 0:
        raise InvalidParameterError("target detuning must be non-negative")
    if target == 0:
        return 0.0
    ceiling = 0.0 if calib.degenerate else max_detuning(cav, calib)
    if target >= ceiling:
        return math.inf
    return -saturation_power(cav, calib) * math.log1p(-target / ceiling)


def read_calibration_csv(path: str | Path) -> list[tuple[float, float]]:
    """Read ``power_uw,detuning_nm`` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = {"power_uw", "detuning_nm"} - set(reader.fieldnames)
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [(float(r["power_uw"]), float(r["detuning_nm"])) for r in reader]


def fit_calibration(
    points: Iterable[tuple[float, float]],
    q_p_ref: float = REFERENCE_Q_P,
    lambda_p_ref: float = REFERENCE_PUMP_WAVELENGTH,
    degree: int = 3,
    sat_scale: float | None = None,
) -> DetuningCalibration:
    """Fit the measured OTE curve of the reference device.

    A zero-intercept least-squares polynomial of ``degree`` is fitted to the
    points. The closed-form saturation pair is fitted to the same points; if
    ``sat_scale`` is given (ceiling known from a separate measurement) only the
    power constant is fitted.

    Raises
    ------
    InsufficientDataError
        Fewer than four points.
    """
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    if len(pts) < 4:
        raise InsufficientDataError(f"insufficient data: {len(pts)} points, need at least 4")
    power, shift = pts[:, 0], pts[:, 1]
    if np.any(power < 0) or np.any(shift < 0):
        raise InvalidParameterError("powers and detunings must be non-negative")
    if len(np.unique(power)) != len(power):
        raise InvalidParameterError("pump powers must be distinct")
    if not 1 <= degree <= 3:
        raise InvalidParameterError("polynomial degree must be 1..3")

    # column scaling keeps the Vandermonde system well conditioned
    scale = power.max() if power.max() > 0 else 1.0
    design = np.column_stack([(power / scale) ** (k + 1) for k in range(degree)])
    sol, *_ = np.linalg.lstsq(design, shift, rcond=None)
    coeffs = tuple(float(c / scale ** (k + 1)) for k, c in enumerate(sol))
    residual = float(np.sqrt(np.mean((design @ sol - shift) ** 2)))
    prange = (float(power.min()), float(power.max()))

    if not np.any(shift > 0):
        return DetuningCalibration(
            q_p_ref=q_p_ref, coeffs=tuple(0.0 for _ in coeffs), sat_scale=0.0,
            power_scale=1.0, residual_rms=0.0, lambda_p_ref=lambda_p_ref,
            power_range=prange, monotone=True, degenerate=True,
        )

    grid = np.linspace(prange[0], prange[1], 512)
    poly = sum(c * grid ** (k + 1) for k, c in enumerate(coeffs))
    monotone = bool(np.all(np.diff(poly) >= -1e-12))
    if not monotone:
        warnings.warn("fitted OTE polynomial is not monotone on the fitted range", stacklevel=2)

    if sat_scale is None:
        def model(p, ceiling, pc):
            return ceiling * -np.expm1(-p / pc)
        p0 = [shift.max() * 1.1, max(prange[1] / 3.0, 1e-6)]
        (ceiling, pc), _ = curve_fit(model, power, shift, p0=p0, bounds=([1e-12, 1e-9], [np.inf, np.inf]))
        sat = ceiling * q_p_ref / lambda_p_ref
    else:
        ceiling = sat_scale * lambda_p_ref / q_p_ref

        def model(p, pc):
            return ceiling * -np.expm1(-p / pc)
        (pc,), _ = curve_fit(model, power, shift, p0=[max(prange[1] / 3.0, 1e-6)], bounds=([1e-9], [np.inf]))
        sat = sat_scale

    closed = ceiling * -np.expm1(-grid / pc)
    max_dev = float(np.max(np.abs(closed - poly)))
    if max_dev > 0.1 * float(np.max(np.abs(poly))):
        warnings.warn("closed-form saturation model deviates from the polynomial by more than 10%", stacklevel=2)
    return DetuningCalibration(
        q_p_ref=q_p_ref, coeffs=coeffs, sat_scale=float(sat), power_scale=float(pc),
        residual_rms=residual, lambda_p_ref=lambda_p_ref, power_range=prange,
        monotone=monotone, degenerate=False, closed_form_max_dev=max_dev,
    )


def reference_points() -> list[tuple[float, float]]:
    """Bundled detuning-versus-pump points of the characterised reference device."""
    with resources.as_file(resources.files("nanophot") / "data" / "reference_detuning.csv") as p:
        return read_calibration_csv(p)


_DEFAULT: list[DetuningCalibration] = []


def default_calibration() -> DetuningCalibration:
    """Calibration fitted once from :func:`reference_points`."""
    if not _DEFAULT:
        _DEFAULT.append(fit_calibration(reference_points(), REFERENCE_Q_P, REFERENCE_PUMP_WAVELENGTH))
    return _DEFAULT[0]
