"""Exhaustive design-space exploration: NOT/XOR laser power, MUX stages, full design flow, energy.

MUX stage sweeps are vectorised over the (Q, WLS) grid. The closed-form shift
and notch are re-expressed on arrays here; ``tests/test_explorer.py`` checks the
vectorised route against the scalar :func:`architecture.chain_transmission` path.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .architecture import (
    KAPPA_DEFAULT,
    ArchitectureDesign,
    ber,
    build_plan,
    row_snrs_from_tables,
    snr_required,
    stage_ber,
)
from .device import (
    DetuningCalibration,
    InvalidParameterError,
    Nanocavity,
    pump_for_detuning,
    detuning,
    through_transmission,
)
from .gates import IL_DEFAULT

SCHEMA_VERSION = 1
VALID_INPUT_SHARE = 0.10
LASING_EFFICIENCY = 0.2
BIT_SLOT_NS = 1.0

STATUS_OK, STATUS_ORDER, STATUS_UNREACHABLE = 0, 1, 2


@dataclass(frozen=True)
class SweepGrid:
    """Rectangular grid over Q and a wavelength quantity (detuning or WLS)."""

    q_range: tuple[float, float, int] = (100.0, 10000.0, 100)
    x_range: tuple[float, float, int] = (0.01, 1.0, 100)
    target_ber: float = 0.1

    def __post_init__(self) -> None:
        for lo, hi, n in (self.q_range, self.x_range):
            if n < 1 or (n >= 2 and not lo < hi) or (n == 1 and lo > hi):
                raise InvalidParameterError(f"bad grid range ({lo}, {hi}, {n})")
        if not 0 < self.target_ber <= 0.5:
            raise InvalidParameterError("target BER must lie in (0, 0.5]")

    @property
    def q(self) -> np.ndarray:
        lo, hi, n = self.q_range
        return np.linspace(lo, hi, int(n))

    @property
    def x(self) -> np.ndarray:
        lo, hi, n = self.x_range
        return np.linspace(lo, hi, int(n))


# --- NOT gate --------------------------------------------------------------

@dataclass(frozen=True)
class NotPowerRow:
    delta: float
    olp_p: float
    olp_input: float
    valid: bool

    @property
    def total(self) -> float:
        return self.olp_p + self.olp_input

    @property
    def input_share(self) -> float:
        return self.olp_input / self.total


def not_power(delta: float, calib: DetuningCalibration, kappa: float = KAPPA_DEFAULT,
              target_ber: float = 0.1, q_s: float = 2000.0, m: float = 2.0, floor: float = 0.1,
              signal_wavelength: float = 1542.0, il: float = IL_DEFAULT) -> NotPowerRow:
    """Pump and input laser powers of a NOT gate whose rest resonance is ``delta`` red of the signal."""
    cav = Nanocavity(signal_wavelength + delta, q_s, m=m, floor=floor)
    olp_p = pump_for_detuning(cav, calib, delta) / il
    margin = through_transmission(cav, signal_wavelength, 0.0) - floor
    olp_in = snr_required(target_ber) / (kappa * margin) if margin > 0 else math.inf
    return NotPowerRow(delta, olp_p, olp_in, bool(olp_in <= VALID_INPUT_SHARE * olp_p))


def explore_not(deltas: Sequence[float], calib: DetuningCalibration, **kw) -> list[NotPowerRow]:
    return [not_power(float(d), calib, **kw) for d in deltas]


def valid_onset(rows: Sequence[NotPowerRow]) -> float | None:
    """Smallest detuning in a sorted sweep from which every row is valid."""
    onset = None
    for r in reversed(rows):
        if not r.valid:
            break
        onset = r.delta
    return onset


# --- XOR gate --------------------------------------------------------------

@dataclass
class XorSweep:
    q: np.ndarray
    dl: np.ndarray
    olp_p: np.ndarray
    olp_input: np.ndarray
    valid: np.ndarray
    target_ber: float

    @property
    def total(self) -> np.ndarray:
        return 2 * self.olp_p + self.olp_input

    def best(self, valid_only: bool = True) -> tuple[int, int] | None:
        """Index of the minimum-total cell; ties go to higher Q then smaller detuning."""
        total = np.where(np.isfinite(self.total), self.total, np.inf)
        if valid_only:
            total = np.where(self.valid, total, np.inf)
        if not np.isfinite(total).any():
            return None
        qi, di = np.meshgrid(np.arange(len(self.q)), np.arange(len(self.dl)), indexing="ij")
        order = np.lexsort((di.ravel(), -qi.ravel(), total.ravel()))
        k = order[0]
        return int(qi.ravel()[k]), int(di.ravel()[k])

    def write_csv(self, path: str | Path) -> None:
        _write_sweep_csv(path, self.q, self.dl, self.total, self.olp_p, self.olp_input,
                         np.full(self.total.shape, self.target_ber), self.valid)


def xor_cell(q_s: float, dl: float, calib: DetuningCalibration, kappa: float = KAPPA_DEFAULT,
             target_ber: float = 0.1, m: float = 2.0, floor: float = 0.1,
             signal_wavelength: float = 1542.0, il: float = IL_DEFAULT,
             fsr: float = 24.0) -> tuple[float, float]:
    """(OLP_P per pump input, OLP_Input) of an XOR gate; ``inf`` where unreachable or closed."""
    c1 = Nanocavity(signal_wavelength, q_s, m=m, fsr=fsr, floor=floor)
    c2 = Nanocavity(signal_wavelength + dl, q_s, m=m, fsr=fsr, floor=floor)
    received = pump_for_detuning(c1, calib, dl)
    if math.isinf(received):
        return math.inf, math.inf

    def level(active: int) -> float:
        d = detuning(c1, calib, active * received / 2)
        return through_transmission(c1, signal_wavelength, d) * through_transmission(c2, signal_wavelength, d)

    margin = level(1) - max(level(0), level(2))
    olp_in = snr_required(target_ber) / (kappa * margin) if margin > 0 else math.inf
    return received / 2 / il, olp_in


def explore_xor(grid: SweepGrid, calib: DetuningCalibration, kappa: float = KAPPA_DEFAULT, **kw) -> XorSweep:
    q, dl = grid.q, grid.x
    olp_p = np.empty((len(q), len(dl)))
    olp_in = np.empty_like(olp_p)
    for a, qq in enumerate(q):
        for b, d in enumerate(dl):
            olp_p[a, b], olp_in[a, b] = xor_cell(float(qq), float(d), calib, kappa, grid.target_ber, **kw)
    valid = np.isfinite(olp_in) & np.isfinite(olp_p) & (olp_in <= VALID_INPUT_SHARE * olp_p)
    return XorSweep(q, dl, olp_p, olp_in, valid, grid.target_ber)


# --- MUX stages ------------------------------------------------------------

def _shift(calib: DetuningCalibration, lam_p, q_p, power):
    """Closed-form blue shift on arrays."""
    return calib.sat_scale * lam_p / q_p * -np.expm1(-power * q_p / (calib.power_scale * calib.q_p_ref))


def _notch(lam, res, q, floor):
    x = 2 * q * (lam - res) / res
    return 1 - (1 - floor) / (1 + x * x)


@dataclass
class MuxSweep:
    stage: int
    q: np.ndarray
    wls: np.ndarray
    ber: np.ndarray
    olp_p: np.ndarray
    status: np.ndarray

    @property
    def usable(self) -> np.ndarray:
        return (self.status == STATUS_OK) & np.isfinite(self.ber)

    def _pick(self, key: np.ndarray, mask: np.ndarray | None = None) -> tuple[int, int] | None:
        ok = self.usable if mask is None else self.usable & mask
        key = np.where(ok, key, np.inf)
        if not np.isfinite(key).any():
            return None
        qi, wi = np.meshgrid(np.arange(len(self.q)), np.arange(len(self.wls)), indexing="ij")
        k = np.lexsort((wi.ravel(), -qi.ravel(), key.ravel()))[0]
        return int(qi.ravel()[k]), int(wi.ravel()[k])

    def min_ber(self, q_index: int | None = None) -> tuple[int, int] | None:
        """Lowest-BER cell, optionally restricted to one Q row."""
        mask = None
        if q_index is not None:
            mask = np.zeros(self.ber.shape, dtype=bool)
            mask[q_index] = True
        return self._pick(self.ber, mask)

    def min_power(self, ber_target: float, mask: np.ndarray | None = None) -> tuple[int, int] | None:
        return self._pick(np.where(self.ber <= ber_target, self.olp_p, np.inf), mask)

    def write_csv(self, path: str | Path, olp_input: float) -> None:
        olp_in = np.full(self.ber.shape, olp_input)
        _write_sweep_csv(path, self.q, self.wls, self.olp_p + olp_in, self.olp_p, olp_in, self.ber,
                         self.usable)


def explore_mux_stage(design: ArchitectureDesign, n: int, q_values, wls_values,
                      calib: DetuningCalibration) -> MuxSweep:
    """BER at the output of stage ``n`` for each (Q_S[MUX,n], WLS_n) cell.

    Stages ``1..n-1`` of ``design`` (pumps included) are held fixed; the stage-n
    pump is sized to shift MUX[1, n] by the cell's WLS. Cells breaking the WLS or
    Q ordering get ``STATUS_ORDER``; shifts beyond the ceiling ``STATUS_UNREACHABLE``.
    """
    if not 1 <= n <= design.n_stages:
        raise InvalidParameterError(f"stage {n} outside 1..{design.n_stages}")
    q = np.atleast_1d(np.asarray(q_values, dtype=float))
    w = np.atleast_1d(np.asarray(wls_values, dtype=float))
    rows = 2 ** n
    m, fsr, fl, il, er = design.m, design.fsr, design.floor, design.il, design.er_mod
    prev_wls = design.wls[:n - 1]

    k = np.arange(rows)
    base = np.full(rows, design.lambda_s1)
    for s in range(1, n):
        base = base - ((k >> (s - 1)) & 1) * prev_wls[s - 1]
    lam = base[None, :] - ((k >> (n - 1)) & 1)[None, :] * w[:, None]  # (W, rows)

    # XOR stage, (W, rows, 4)
    qx = design.q_s_xor
    p1, p0 = design.olp_pump_xor * il, design.olp_pump_xor * il * er
    powers = np.array([2 * p0, p0 + p1, p0 + p1, 2 * p1])
    dx = _shift(calib, lam[..., None] + fsr, qx / m, powers)
    xor = (_notch(lam[..., None], lam[..., None] - dx, qx, fl)
           * _notch(lam[..., None], lam[..., None] + design.delta_lambda_xor - dx, qx, fl))

    # earlier stages, (W, rows, 2); second-half MUX resonances move with WLS_n
    mux = []
    for s in range(1, n):
        first = (k >> s) << s
        res = (lam[:, first] + lam[:, first + 2 ** (s - 1) - 1]) / 2  # (W, rows)
        qs = design.q_s_mux[s - 1]
        pw = np.array([design.olp_pump_mux[s - 1] * il * er, design.olp_pump_mux[s - 1] * il])
        sh = _shift(calib, res[..., None] + fsr, qs / m, pw)
        mux.append(_notch(lam[..., None], res[..., None] - sh, qs, fl))

    # stage n: single MUX[1, n], (Q, W, rows, 2)
    res_n = (design.lambda_s1 + base[2 ** (n - 1) - 1]) / 2
    q_p = q / m
    ceiling = calib.sat_scale * (res_n + fsr) / q_p  # (Q,)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = w[None, :] / ceiling[:, None]
        received = np.where(frac < 1, -calib.power_scale * calib.q_p_ref / q_p[:, None] * np.log1p(-np.minimum(frac, 0.999999999)), np.inf)
    olp_p = received / il
    pw = np.stack([np.where(np.isfinite(received), received * er, 0.0),
                   np.where(np.isfinite(received), received, 0.0)], axis=-1)  # (Q, W, 2)
    sh = _shift(calib, res_n + fsr, q_p[:, None, None], pw)
    mux_n = _notch(lam[None, :, :, None], res_n - sh[:, :, None, :], q[:, None, None, None], fl)

    snrs = row_snrs_from_tables(xor[None], [mx[None] for mx in mux] + [mux_n], design.olp_input, design.kappa)
    worst = np.max(ber(snrs), axis=-1)

    status = np.full(worst.shape, STATUS_OK, dtype=np.int8)
    if n > 1:
        order_bad = (w[None, :] <= design.wls[n - 2]) | (q[:, None] >= design.q_s_mux[n - 2])
        status[order_bad] = STATUS_ORDER
    status[~np.isfinite(received)] = STATUS_UNREACHABLE
    worst = np.where(status == STATUS_UNREACHABLE, np.nan, worst)
    return MuxSweep(n, q, w, worst, olp_p, status)


# --- design flow -----------------------------------------------------------

def laser_inventory(design: ArchitectureDesign) -> list[tuple[str, int, float]]:
    """(kind, count, off-chip power uW) for every laser of the architecture."""
    rows = design.rows
    inv = [("input", rows, design.olp_input), ("xor_pump", 2 * rows, design.olp_pump_xor)]
    inv += [(f"mux_pump_{n}", rows // 2 ** n, p) for n, p in enumerate(design.olp_pump_mux, start=1)]
    return inv


def total_laser_power(design: ArchitectureDesign) -> float:
    return float(sum(count * p for _, count, p in laser_inventory(design)))


def energy_per_pixel(design: ArchitectureDesign, bsl: int) -> tuple[float, float]:
    """(energy nJ, time ns) per pixel at one bit per 1 ns slot and 20% wall-plug efficiency."""
    if bsl < 0:
        raise InvalidParameterError("bsl must be non-negative")
    time_ns = bsl * BIT_SLOT_NS
    energy_nj = total_laser_power(design) * 1e-6 * time_ns / LASING_EFFICIENCY
    return energy_nj, time_ns


DEFAULT_WLS_RANGES = ((0.01, 1.2, 100), (0.01, 4.0, 100), (0.01, 15.0, 100))
DEFAULT_Q_RANGE = (100.0, 10000.0, 100)
DEVICE_FIELDS = {"il", "er_mod", "m", "fsr", "floor", "responsivity"}


@dataclass
class DesignPoint:
    design: ArchitectureDesign
    stage_ber: tuple[float, ...]
    target_ber: float
    bsl: int
    total_power_uw: float = 0.0
    energy_per_pixel_nj: float = 0.0
    time_per_pixel_ns: float = 0.0
    valid: bool = False
    target_met: bool = False
    degenerate_target: bool = False
    failing_stage: int | None = None
    xor_choice: dict = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def ber(self) -> float:
        return self.stage_ber[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["design"] = self.design.to_dict()
        d["stage_ber"] = list(self.stage_ber)
        d["schema_version"] = SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DesignPoint":
        d = {k: v for k, v in d.items() if k != "schema_version"}
        d["design"] = ArchitectureDesign.from_dict(d["design"])
        d["stage_ber"] = tuple(d["stage_ber"])
        return cls(**d)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "DesignPoint":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def evaluate_design(design: ArchitectureDesign, calib: DetuningCalibration, target_ber: float,
                    bsl: int, **extra) -> DesignPoint:
    """Wrap a fully specified design into a DesignPoint with BER, energy and flags."""
    bers = tuple(stage_ber(design, calib, n) for n in range(1, design.n_stages + 1))
    energy, time = energy_per_pixel(design, bsl)
    pt = DesignPoint(design, bers, target_ber, bsl, total_laser_power(design), energy, time,
                     valid=design.power_rule_ok, target_met=bool(bers[-1] <= target_ber),
                     degenerate_target=target_ber >= 0.5, **extra)
    if pt.degenerate_target:
        pt.diagnostics.append("target BER of 0.5 carries no information")
    if not pt.valid:
        pt.diagnostics.append("input laser exceeds 10% of a pump on the signal path")
    return pt


@dataclass
class FlowResult:
    point: DesignPoint
    xor_sweep: XorSweep
    mux_sweeps: list[MuxSweep]


def stage_targets(ber_1: float, target: float, n_stages: int) -> list[float]:
    """Log-linear inter-stage BER targets from the stage-1 result to the final target."""
    if n_stages == 1:
        return [target]
    lo, hi = math.log(max(ber_1, 1e-300)), math.log(target)
    return [math.exp(lo + (hi - lo) * (n - 1) / (n_stages - 1)) for n in range(1, n_stages + 1)]


def run_design_flow(olp_input: float, target_ber: float, calib: DetuningCalibration,
                    n_stages: int = 3, lambda_s1: float = 1542.0, bsl: int = 512,
                    kappa: float = KAPPA_DEFAULT, xor_grid: SweepGrid | None = None,
                    q_range: tuple[float, float, int] = DEFAULT_Q_RANGE,
                    wls_ranges: Sequence[tuple[float, float, int]] = DEFAULT_WLS_RANGES,
                    xor_ber: float = 0.1, tie_first_stage: bool = True,
                    device: dict | None = None) -> FlowResult:
    """Calibrated model -> XOR sweep -> stage-by-stage MUX sweeps -> energy.

    Stage 1 takes its minimum-BER cell; with ``tie_first_stage`` it is restricted
    to the Q row nearest the chosen XOR Q, so XOR and first-stage MUX cavities
    share one design. ``device`` overrides the shared physical fields
    (``il``, ``er_mod``, ``m``, ``fsr``, ``floor``, ``responsivity``) of every
    design the flow builds. Later stages take the minimum-pump cell
    meeting a log-linear BER target; if none does, the minimum-BER cell is kept
    and the stage is reported as failing.
    """
    if len(wls_ranges) < n_stages:
        raise InvalidParameterError(f"need {n_stages} WLS ranges")
    diagnostics: list[str] = []
    xor_grid = xor_grid or SweepGrid(q_range=(100.0, 10000.0, 100), x_range=(0.01, 1.0, 100), target_ber=xor_ber)
    device = dict(device or {})
    unknown = set(device) - DEVICE_FIELDS
    if unknown:
        raise InvalidParameterError(f"flow cannot override {sorted(unknown)}")
    kappa = kappa * device.get("responsivity", 1.0)
    device.pop("responsivity", None)
    xs = explore_xor(xor_grid, calib, kappa, **{k: v for k, v in device.items() if k in ("m", "floor", "il", "fsr")},
                     signal_wavelength=lambda_s1)
    pick = xs.best(valid_only=True)
    if pick is None:
        diagnostics.append("no valid XOR cell; using the lowest-power cell")
        pick = xs.best(valid_only=False)
    if pick is None:
        raise InvalidParameterError("XOR sweep has no reachable cell")
    qi, di = pick
    q_xor, dl_xor = float(xs.q[qi]), float(xs.dl[di])
    xor_choice = dict(q_s=q_xor, delta_lambda=dl_xor, olp_p_uw=float(xs.olp_p[qi, di]),
                      olp_input_uw=float(xs.olp_input[qi, di]), total_uw=float(xs.total[qi, di]),
                      valid=bool(xs.valid[qi, di]))

    noise = 1.0 / kappa
    q_grid = SweepGrid(q_range=q_range).q
    wls: list[float] = []
    qs: list[float] = []
    pumps: list[float] = []
    sweeps: list[MuxSweep] = []
    failing: int | None = None
    targets: list[float] = []
    for n in range(1, n_stages + 1):
        # placeholders for stage n are overwritten by the sweep
        prev_w = wls + [(wls[-1] if wls else 0.0) + 1.0]
        prev_q = qs + [(qs[-1] if qs else 2 * q_range[1]) / 2]
        partial = ArchitectureDesign(
            n_stages=n, lambda_s1=lambda_s1, wls=tuple(prev_w), q_s_xor=q_xor, q_s_mux=tuple(prev_q),
            delta_lambda_xor=dl_xor, olp_input=olp_input, olp_pump_xor=xor_choice["olp_p_uw"],
            olp_pump_mux=tuple(pumps + [0.0]), noise=noise, **device)
        lo, hi, steps = wls_ranges[n - 1]
        sw = explore_mux_stage(partial, n, q_grid, np.linspace(lo, hi, int(steps)), calib)
        sweeps.append(sw)
        if n == 1:
            cell = sw.min_ber(int(np.argmin(np.abs(sw.q - q_xor))) if tie_first_stage else None)
        else:
            # leave a lower Q for the stages still to come
            room = None
            if n < n_stages:
                room = np.broadcast_to((sw.q > q_grid.min())[:, None], sw.ber.shape)
            cell = sw.min_power(targets[n - 1], room)
            if cell is None:
                cell = sw.min_ber()
                if failing is None:
                    failing = n
                diagnostics.append(f"stage {n}: no cell reaches BER {targets[n - 1]:.3g}")
        if cell is None:
            # report the stages completed so far; stage n is the failure
            diagnostics.append(f"stage {n}: no usable cell")
            if n == 1:
                point = DesignPoint(partial, (), target_ber, bsl, failing_stage=1, xor_choice=xor_choice,
                                    diagnostics=diagnostics, degenerate_target=target_ber >= 0.5)
            else:
                done = ArchitectureDesign(
                    n_stages=n - 1, lambda_s1=lambda_s1, wls=tuple(wls), q_s_xor=q_xor, q_s_mux=tuple(qs),
                    delta_lambda_xor=dl_xor, olp_input=olp_input, olp_pump_xor=xor_choice["olp_p_uw"],
                    olp_pump_mux=tuple(pumps), noise=noise, **device)
                point = evaluate_design(done, calib, target_ber, bsl, xor_choice=xor_choice,
                                        diagnostics=diagnostics)
                point.target_met = False
                point.failing_stage = n
            return FlowResult(point, xs, sweeps)
        a, b = cell
        qs.append(float(sw.q[a]))
        wls.append(float(sw.wls[b]))
        pumps.append(float(sw.olp_p[a, b]))
        if n == 1:
            targets = stage_targets(float(sw.ber[a, b]), target_ber, n_stages)

    design = ArchitectureDesign(
        n_stages=n_stages, lambda_s1=lambda_s1, wls=tuple(wls), q_s_xor=q_xor, q_s_mux=tuple(qs),
        delta_lambda_xor=dl_xor, olp_input=olp_input, olp_pump_xor=xor_choice["olp_p_uw"],
        olp_pump_mux=tuple(pumps), noise=noise, **device)
    point = evaluate_design(design, calib, target_ber, bsl, xor_choice=xor_choice, diagnostics=diagnostics)
    if not point.target_met and failing is None:
        failing = n_stages
    point.failing_stage = failing
    return FlowResult(point, xs, sweeps)


def _write_sweep_csv(path, q, x, total, olp_p, olp_in, ber_grid, valid) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "x_nm", "total_uw", "olp_p_uw", "olp_in_uw", "ber", "valid"])
        for a, qq in enumerate(q):
            for b, xx in enumerate(x):
                w.writerow([f"{qq:.6g}", f"{xx:.6g}", f"{total[a, b]:.6g}", f"{olp_p[a, b]:.6g}",
                            f"{olp_in[a, b]:.6g}", f"{ber_grid[a, b]:.6g}", int(bool(valid[a, b]))])
