"""Size-N edge-detection architecture: wavelength plan, chained transmission, SNR and BER.

Rows ``i = 1..2**N`` each carry one XOR gate (cavities X1, X2) and are merged by a
binary tree of MUX cavities. Stage ``n`` has ``2**(N-n)`` MUXes; row ``i`` passes
through MUX ``j_n = ceil(i / 2**n)``. Indices are 1-based, matching the usual
presentation of the tree.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import erfc, erfcinv

from .device import (
    DetuningCalibration,
    InvalidParameterError,
    Nanocavity,
    detuning,
    pump_for_detuning,
    through_transmission,
)
from .gates import IL_DEFAULT

SCHEMA_VERSION = 1
ER_MOD_DEFAULT = 0.01  # 20 dB modulator extinction
XOR_STATES = ((0, 0), (0, 1), (1, 0), (1, 1))


# --- BER -------------------------------------------------------------------

def ber(snr):
    """On-off keying bit error rate ``erfc(snr / 2√2) / 2``.

    Negative SNR is folded onto the positive branch so ``ber(-s) == 1 - ber(s)``
    holds bit-for-bit for ``s >= 0``.
    """
    s = np.asarray(snr, dtype=float)
    pos = 0.5 * erfc(np.abs(s) / (2 * math.sqrt(2)))
    out = np.where(s < 0, 1.0 - pos, pos)
    return float(out) if out.ndim == 0 else out


def snr_required(target_ber: float) -> float:
    """Inverse of :func:`ber` for ``0 < target_ber <= 0.5``."""
    if not 0 < target_ber <= 0.5:
        raise InvalidParameterError("target BER must lie in (0, 0.5]")
    return float(2 * math.sqrt(2) * erfcinv(2 * target_ber))


def calibrate_kappa(delta: float = 0.35, olp_input: float = 0.7, target_ber: float = 0.1,
                    q_s: float = 2000.0, floor: float = 0.1, signal_wavelength: float = 1542.0) -> float:
    """Lumped responsivity-over-noise constant [1/uW] from one NOT-gate operating point.

    At the anchor the NOT gate passes '1' with its at-rest transmission
    ``delta`` off resonance and '0' at the floor; ``olp_input`` is the input power
    that reaches ``target_ber`` with that margin.
    """
    cav = Nanocavity(signal_wavelength + delta, q_s, floor=floor)
    margin = through_transmission(cav, signal_wavelength, 0.0) - floor
    return snr_required(target_ber) / (olp_input * margin)


KAPPA_DEFAULT = calibrate_kappa()


def snr_from_transmissions(olp_input: float, kappa: float, t_signal: float,
                           t_crosstalk: Sequence[float] = ()) -> float:
    """``OLP_in * kappa * (T_i - sum T_k)``."""
    return olp_input * kappa * (t_signal - float(np.sum(t_crosstalk)))


# --- design ----------------------------------------------------------------

@dataclass(frozen=True)
class ArchitectureDesign:
    """Parameters of one architecture instance.

    Powers are off-chip in uW. ``responsivity / noise`` is used only as the
    lumped constant ``kappa`` [1/uW]; with the default ``responsivity = 1`` the
    ``noise`` field is the reciprocal of the calibrated constant.
    """

    n_stages: int = 3
    lambda_s1: float = 1542.0
    wls: tuple[float, ...] = (0.215, 1.19, 4.35)
    q_s_xor: float = 10000.0
    q_s_mux: tuple[float, ...] = (10000.0, 1900.0, 500.0)
    delta_lambda_xor: float = 0.14
    olp_input: float = 3.0
    olp_pump_xor: float = 0.0
    olp_pump_mux: tuple[float, ...] = (0.0, 0.0, 0.0)
    il: float = IL_DEFAULT
    er_mod: float = ER_MOD_DEFAULT
    responsivity: float = 1.0
    noise: float = 1.0 / KAPPA_DEFAULT
    m: float = 2.0
    fsr: float = 24.0
    floor: float = 0.1

    def __post_init__(self) -> None:
        for name in ("wls", "q_s_mux", "olp_pump_mux"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        n = self.n_stages
        if n < 1:
            raise InvalidParameterError("need at least one MUX stage")
        if not (len(self.wls) == len(self.q_s_mux) == len(self.olp_pump_mux) == n):
            raise InvalidParameterError(f"wls, q_s_mux and olp_pump_mux must each have {n} entries")
        if any(w <= 0 for w in self.wls) or any(b <= a for a, b in zip(self.wls, self.wls[1:])):
            raise InvalidParameterError(f"WLS must be positive and strictly increasing, got {self.wls}")
        if any(q <= 0 for q in self.q_s_mux) or any(b >= a for a, b in zip(self.q_s_mux, self.q_s_mux[1:])):
            raise InvalidParameterError(f"MUX Q must be positive and strictly decreasing, got {self.q_s_mux}")
        if self.q_s_xor <= 0:
            raise InvalidParameterError("q_s_xor must be positive")
        if self.delta_lambda_xor <= 0:
            raise InvalidParameterError("delta_lambda_xor must be positive")
        if self.olp_input < 0 or self.olp_pump_xor < 0 or any(p < 0 for p in self.olp_pump_mux):
            raise InvalidParameterError("laser powers must be non-negative")
        if not 0 < self.il <= 1:
            raise InvalidParameterError("il must lie in (0, 1]")
        if not 0 <= self.er_mod < 1:
            raise InvalidParameterError("er_mod must lie in [0, 1)")
        if self.responsivity <= 0 or self.noise <= 0:
            raise InvalidParameterError("responsivity and noise must be positive")

    @property
    def rows(self) -> int:
        return 2 ** self.n_stages

    @property
    def kappa(self) -> float:
        return self.responsivity / self.noise

    @property
    def power_rule_ok(self) -> bool:
        """Input laser at most 10% of every pump on the signal path."""
        pumps = (self.olp_pump_xor, *self.olp_pump_mux)
        return all(self.olp_input <= 0.1 * p for p in pumps)

    def truncated(self, n: int) -> "ArchitectureDesign":
        """The first ``n`` MUX stages as a standalone design."""
        if not 1 <= n <= self.n_stages:
            raise InvalidParameterError(f"stage {n} outside 1..{self.n_stages}")
        return replace(self, n_stages=n, wls=self.wls[:n], q_s_mux=self.q_s_mux[:n],
                       olp_pump_mux=self.olp_pump_mux[:n])

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("wls", "q_s_mux", "olp_pump_mux"):
            d[k] = list(d[k])
        d["schema_version"] = SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureDesign":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known - {"schema_version"}
        if unknown:
            raise InvalidParameterError(f"unknown design fields: {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "ArchitectureDesign":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class SignalPlan:
    """Wavelengths per row and MUX rest resonances; ``mux_res[n-1][j-1]`` is MUX[j, n]."""

    lambda_s: tuple[float, ...]
    xor_res_1: tuple[float, ...] = ()
    xor_res_2: tuple[float, ...] = ()
    mux_res: tuple[tuple[float, ...], ...] = field(default=())

    def write_csv(self, rows_path: str | Path, mux_path: str | Path) -> None:
        with open(rows_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "lambda_s_nm", "xor_res_1_nm", "xor_res_2_nm"])
            for i, row in enumerate(zip(self.lambda_s, self.xor_res_1, self.xor_res_2), start=1):
                w.writerow([i, *(f"{x:.6f}" for x in row)])
        with open(mux_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stage", "pos", "mux_res_nm"])
            for n, stage in enumerate(self.mux_res, start=1):
                for j, lam in enumerate(stage, start=1):
                    w.writerow([n, j, f"{lam:.6f}"])


def bit(x: int, k: int) -> int:
    return (x >> k) & 1


def assign_signal_wavelengths(design: ArchitectureDesign) -> SignalPlan:
    lam = tuple(
        design.lambda_s1 - sum(bit(i - 1, n - 1) * design.wls[n - 1] for n in range(1, design.n_stages + 1))
        for i in range(1, design.rows + 1)
    )
    return SignalPlan(lambda_s=lam)


def assign_xor_resonances(design: ArchitectureDesign, plan: SignalPlan) -> SignalPlan:
    x1 = plan.lambda_s
    x2 = tuple(l + design.delta_lambda_xor for l in x1)
    return replace(plan, xor_res_1=x1, xor_res_2=x2)


def assign_mux_resonances(design: ArchitectureDesign, plan: SignalPlan) -> SignalPlan:
    lam = plan.lambda_s
    stages = []
    for n in range(1, design.n_stages + 1):
        size = 2 ** n
        stage = tuple(
            (lam[size * (j - 1)] + lam[size * (j - 1) + 2 ** (n - 1) - 1]) / 2
            for j in range(1, design.rows // size + 1)
        )
        stages.append(stage)
    return replace(plan, mux_res=tuple(stages))


def build_plan(design: ArchitectureDesign) -> SignalPlan:
    plan = assign_signal_wavelengths(design)
    return assign_mux_resonances(design, assign_xor_resonances(design, plan))


def mux_position(i: int, n: int) -> int:
    """``j_n = ceil(i / 2**n)``."""
    return -(-i // 2 ** n)


def routing_selects(i: int, n_stages: int) -> tuple[int, ...]:
    """Select bits that route row ``i`` to the output.

    A MUX at rest blocks its first set; pumping it (select 1) blue-shifts the
    notch onto the second set, letting the first set through.
    """
    return tuple(1 - bit(i - 1, n - 1) for n in range(1, n_stages + 1))


def pump_power_received(design: ArchitectureDesign, kind: str, stochastic_bit: int, stage: int = 1) -> float:
    """Pump power reaching a cavity [uW]; a '0' still leaks ``er_mod`` through the modulator."""
    if kind == "xor":
        olp = design.olp_pump_xor
    elif kind == "mux":
        if not 1 <= stage <= design.n_stages:
            raise InvalidParameterError(f"stage {stage} outside 1..{design.n_stages}")
        olp = design.olp_pump_mux[stage - 1]
    else:
        raise InvalidParameterError(f"unknown gate kind {kind!r}")
    if stochastic_bit not in (0, 1):
        raise InvalidParameterError("stochastic bit must be 0 or 1")
    return olp * design.il * (1.0 if stochastic_bit else design.er_mod)


def xor_cavities(design: ArchitectureDesign, plan: SignalPlan, i: int) -> tuple[Nanocavity, Nanocavity]:
    kw = dict(m=design.m, fsr=design.fsr, floor=design.floor)
    return (Nanocavity(plan.xor_res_1[i - 1], design.q_s_xor, **kw),
            Nanocavity(plan.xor_res_2[i - 1], design.q_s_xor, **kw))


def mux_cavity(design: ArchitectureDesign, plan: SignalPlan, j: int, n: int) -> Nanocavity:
    return Nanocavity(plan.mux_res[n - 1][j - 1], design.q_s_mux[n - 1],
                      m=design.m, fsr=design.fsr, floor=design.floor)


def chain_transmission(design: ArchitectureDesign, plan: SignalPlan, calib: DetuningCalibration,
                       i: int, z1: int, z2: int, selects: Sequence[int]) -> float:
    """Transmission of row ``i``'s signal through its XOR and all MUX stages."""
    if not 1 <= i <= design.rows:
        raise InvalidParameterError(f"row {i} outside 1..{design.rows}")
    if len(selects) != design.n_stages:
        raise InvalidParameterError(f"need {design.n_stages} select bits")
    lam = plan.lambda_s[i - 1]
    x1, x2 = xor_cavities(design, plan, i)
    p = pump_power_received(design, "xor", z1) + pump_power_received(design, "xor", z2)
    d = detuning(x1, calib, p)
    t = through_transmission(x1, lam, d) * through_transmission(x2, lam, d)
    for n, s in enumerate(selects, start=1):
        cav = mux_cavity(design, plan, mux_position(i, n), n)
        d = detuning(cav, calib, pump_power_received(design, "mux", s, n))
        t *= through_transmission(cav, lam, d)
    return float(t)


@dataclass(frozen=True)
class TransmissionTables:
    """``xor[k, s]``: row k through its XOR in state ``XOR_STATES[s]``;
    ``mux[n-1][k, sel]``: row k through its stage-n MUX."""

    xor: np.ndarray
    mux: tuple[np.ndarray, ...]


def transmission_tables(design: ArchitectureDesign, plan: SignalPlan,
                        calib: DetuningCalibration) -> TransmissionTables:
    rows = design.rows
    xor = np.empty((rows, 4))
    for k in range(1, rows + 1):
        x1, x2 = xor_cavities(design, plan, k)
        lam = plan.lambda_s[k - 1]
        for s, (a, b) in enumerate(XOR_STATES):
            p = pump_power_received(design, "xor", a) + pump_power_received(design, "xor", b)
            d = detuning(x1, calib, p)
            xor[k - 1, s] = through_transmission(x1, lam, d) * through_transmission(x2, lam, d)
    mux = []
    for n in range(1, design.n_stages + 1):
        tab = np.empty((rows, 2))
        for k in range(1, rows + 1):
            cav = mux_cavity(design, plan, mux_position(k, n), n)
            for s in (0, 1):
                d = detuning(cav, calib, pump_power_received(design, "mux", s, n))
                tab[k - 1, s] = through_transmission(cav, plan.lambda_s[k - 1], d)
        mux.append(tab)
    return TransmissionTables(xor, tuple(mux))


def row_snrs_from_tables(xor: np.ndarray, mux: Sequence[np.ndarray], olp_input, kappa: float) -> np.ndarray:
    """SNR of every row with every other row driven '1' as crosstalk.

    Arrays may carry leading batch axes; the row axis is second to last for
    ``xor`` (shape ``(..., rows, 4)``) and ``mux[n]`` (shape ``(..., rows, 2)``).
    Returns shape ``(..., rows)``.
    """
    rows = xor.shape[-2]
    n_stages = len(mux)
    one_min = np.minimum(xor[..., 1], xor[..., 2])
    one_max = np.maximum(xor[..., 1], xor[..., 2])
    out = []
    for i in range(1, rows + 1):
        route = np.ones(xor.shape[:-1])
        for n, s in enumerate(routing_selects(i, n_stages)):
            route = route * mux[n][..., s]
        signal = one_min[..., i - 1] * route[..., i - 1]
        others = (one_max * route).sum(axis=-1) - one_max[..., i - 1] * route[..., i - 1]
        out.append(olp_input * kappa * (signal - others))
    return np.stack(out, axis=-1)


def row_snrs(design: ArchitectureDesign, plan: SignalPlan, calib: DetuningCalibration) -> np.ndarray:
    tabs = transmission_tables(design, plan, calib)
    return row_snrs_from_tables(tabs.xor, tabs.mux, design.olp_input, design.kappa)


def snr(design: ArchitectureDesign, plan: SignalPlan, calib: DetuningCalibration, i: int) -> float:
    """Worst-case SNR of row ``i`` at the architecture output.

    Selects route row ``i``, which sends '1'; every other row sends '1' too and
    counts as crosstalk.
    """
    if not 1 <= i <= design.rows:
        raise InvalidParameterError(f"row {i} outside 1..{design.rows}")
    sel = routing_selects(i, design.n_stages)

    def t(k, state):
        return chain_transmission(design, plan, calib, k, *state, sel)

    signal = min(t(i, (0, 1)), t(i, (1, 0)))
    cross = [max(t(k, (0, 1)), t(k, (1, 0))) for k in range(1, design.rows + 1) if k != i]
    return snr_from_transmissions(design.olp_input, design.kappa, signal, cross)


def stage_ber(design: ArchitectureDesign, calib: DetuningCalibration, n: int | None = None) -> float:
    """BER after MUX stage ``n`` (worst row of the first ``n`` stages)."""
    d = design if n is None else design.truncated(n)
    return float(np.max(ber(row_snrs(d, build_plan(d), calib))))


def size_pumps(design: ArchitectureDesign, calib: DetuningCalibration) -> ArchitectureDesign:
    """Set XOR and MUX pump lasers so the pumped detunings equal the design spacings.

    Each XOR input laser delivers half the power for ``delta_lambda_xor``; stage
    ``n`` MUX pumps shift MUX[1, n] by ``WLS_n``. Unreachable shifts give ``inf``.
    """
    plan = build_plan(design)
    x1, _ = xor_cavities(design, plan, 1)
    xor = pump_for_detuning(x1, calib, design.delta_lambda_xor) / 2 / design.il
    mux = tuple(pump_for_detuning(mux_cavity(design, plan, 1, n), calib, design.wls[n - 1]) / design.il
                for n in range(1, design.n_stages + 1))
    return replace(design, olp_pump_xor=xor, olp_pump_mux=mux)


# Q and spacing presets of the two reference designs; pumps are sized by size_pumps.
DESIGN_A = dict(q_s_xor=10000.0, q_s_mux=(10000.0, 1900.0, 500.0), wls=(0.215, 1.19, 4.35),
                delta_lambda_xor=0.14, olp_input=3.0, target_ber=0.5, bsl=1024)
# No XOR split is tabulated for this design; 0.14 nm at Q=10000 is rescaled to the
# same fraction of a linewidth at Q=7700.
DESIGN_B = dict(q_s_xor=7700.0, q_s_mux=(7700.0, 1600.0, 200.0), wls=(0.275, 1.41, 11.3),
                delta_lambda_xor=0.14 * 10000 / 7700, olp_input=4.0, target_ber=0.1, bsl=512)
PRESETS = {"A": DESIGN_A, "B": DESIGN_B}


def preset_design(name: str, calib: DetuningCalibration) -> ArchitectureDesign:
    try:
        p = PRESETS[name.upper()]
    except KeyError:
        raise InvalidParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    base = ArchitectureDesign(**{k: v for k, v in p.items() if k not in ("target_ber", "bsl")})
    return size_pumps(base, calib)
