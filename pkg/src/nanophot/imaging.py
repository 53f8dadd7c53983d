"""Stochastic Sobel edge detection with bit-error injection and accuracy metrics.

Every interior pixel runs the 8-XOR / 7-MUX tree over ``bsl`` clock steps of one
8-bit LFSR. The register is a maximal sequence of period 255, so each pixel's
trace is a rotation of one master sequence; the image path exploits that to
count output ones per pixel without stepping the register, while
:func:`simulate_pixel` steps it explicitly through the stream algebra.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binom

from . import pgm
from .stochastic import BitStream, Lfsr, mux_streams, select_bit_stream, sng_generate, xor_streams

SCHEMA_VERSION = 1
MAX_I = 255
PERIOD = 255

Offset = tuple[int, int]
Pair = tuple[Offset, Offset]


class ImageSizeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ImageSizeError("image must be 2-D")
        if px.shape[0] < 3 or px.shape[1] < 3:
            raise ImageSizeError(f"image must be at least 3x3, got {px.shape[0]}x{px.shape[1]}")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValueError("pixel values must lie in 0..255")
            px = px.astype(np.uint8)
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


def pgm_read(path: str | Path) -> GrayImage:
    return GrayImage(pgm.read_pgm_array(path))


def pgm_write(path: str | Path, img: GrayImage, binary: bool = True) -> None:
    pgm.write_pgm_array(path, img.pixels, binary)


@dataclass(frozen=True)
class SobelWiring:
    """Eight (a, b) pixel-offset pairs feeding XOR rows 1..8; ``(dr, dc)`` is relative to the centre.

    Rows 5 and 6 carry the weight-2 taps and rows 7 and 8 repeat them.
    """

    pairs: tuple[Pair, ...] = (
        ((-1, 1), (-1, -1)),
        ((1, 1), (1, -1)),
        ((1, -1), (-1, -1)),
        ((1, 1), (-1, 1)),
        ((0, 1), (0, -1)),
        ((1, 0), (-1, 0)),
        ((0, 1), (0, -1)),
        ((1, 0), (-1, 0)),
    )

    def __post_init__(self) -> None:
        if len(self.pairs) != 8:
            raise ValueError("wiring needs exactly 8 pairs")
        for a, b in self.pairs:
            for dr, dc in (a, b):
                if abs(dr) > 1 or abs(dc) > 1:
                    raise ValueError(f"offset {(dr, dc)} outside the 3x3 window")
        if self.pairs[6] != self.pairs[4] or self.pairs[7] != self.pairs[5]:
            raise ValueError("rows 7 and 8 must duplicate rows 5 and 6")


DEFAULT_WIRING = SobelWiring()


def _pair_planes(px: np.ndarray, wiring: SobelWiring) -> tuple[np.ndarray, np.ndarray]:
    """Interior-pixel operands, each of shape ``(8, M-2, K-2)``."""
    m, k = px.shape

    def plane(dr, dc):
        return px[1 + dr:m - 1 + dr, 1 + dc:k - 1 + dc]

    a = np.stack([plane(*p[0]) for p in wiring.pairs])
    b = np.stack([plane(*p[1]) for p in wiring.pairs])
    return a, b


def sobel_reference(img: GrayImage, wiring: SobelWiring = DEFAULT_WIRING) -> np.ndarray:
    """Error-free circuit output in [0, 1]: the mean absolute difference of the wired pairs."""
    a, b = _pair_planes(img.pixels.astype(np.int64), wiring)
    out = np.zeros(img.pixels.shape)
    out[1:-1, 1:-1] = np.abs(a - b).sum(axis=0) / (8 * MAX_I)
    return out


# --- deterministic per-pixel randomness --------------------------------------

_M64 = (1 << 64) - 1


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def pixel_key(seed: int, i, j) -> np.ndarray:
    """64-bit key of pixel ``(i, j)``; independent of evaluation order."""
    s = _splitmix64(np.uint64(seed & _M64))
    k = _splitmix64(s ^ np.asarray(i, dtype=np.uint64))
    return _splitmix64(k ^ np.asarray(j, dtype=np.uint64))


def lfsr_seed(key) -> np.ndarray:
    """Non-zero 8-bit register state derived from a pixel key."""
    return (np.asarray(key, dtype=np.uint64) % np.uint64(PERIOD)).astype(np.int64) + 1


def _uniform(key, stream: int) -> np.ndarray:
    z = _splitmix64(np.asarray(key, dtype=np.uint64) ^ np.uint64(0xD1B54A32D192ED03 * (stream + 1) & _M64))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def inject_errors(ones, bsl: int, ber: float, key) -> np.ndarray:
    """Detected ones after flipping every bit independently with probability ``ber``.

    The flips among the ``ones`` and among the ``bsl - ones`` zeros are binomial;
    their counts are drawn by inverse CDF from hashed uniforms so results depend
    only on the key.
    """
    ones = np.asarray(ones, dtype=np.int64)
    if ber <= 0:
        return ones.copy()
    lost = binom.ppf(_uniform(key, 0), ones, ber).astype(np.int64)
    gained = binom.ppf(_uniform(key, 1), bsl - ones, ber).astype(np.int64)
    return ones - lost + gained


# --- master sequence ------------------------------------------------------

def _master() -> tuple[np.ndarray, np.ndarray]:
    seq = Lfsr(1).sequence(PERIOD)
    phase = np.empty(PERIOD + 1, dtype=np.int64)
    phase[seq] = np.arange(PERIOD)
    return seq, phase


MASTER, PHASE = _master()


def routed_row(values, n_stages: int = 3):
    """0-based row surviving the MUX tree for each register value.

    Stage n selects on register bit n-1; a set bit passes the first input of
    each MUX, so the surviving row is the complement of the low bits.
    """
    mask = 2 ** n_stages - 1
    return mask - (np.asarray(values) & mask)


def _count_ones(a: np.ndarray, b: np.ndarray, phase: np.ndarray, bsl: int) -> np.ndarray:
    """Ones in each pixel's output over ``bsl`` steps. ``a``, ``b``: (8, P); ``phase``: (P,)."""
    row = routed_row(MASTER)
    ra, rb = a[row].T, b[row].T  # (P, 255), operands of the routed row at every phase
    bits = ((MASTER < ra) ^ (MASTER < rb)).astype(np.int64)
    full, rem = divmod(bsl, PERIOD)
    csum = np.zeros((bits.shape[0], 2 * PERIOD + 1), dtype=np.int64)
    np.cumsum(np.concatenate([bits, bits], axis=1), axis=1, out=csum[:, 1:])
    idx = np.arange(bits.shape[0])
    return full * csum[:, PERIOD] + csum[idx, phase + rem] - csum[idx, phase]


def _window_pairs(window: np.ndarray, wiring: SobelWiring) -> tuple[list[int], list[int]]:
    a = [int(window[1 + p[0][0], 1 + p[0][1]]) for p in wiring.pairs]
    b = [int(window[1 + p[1][0], 1 + p[1][1]]) for p in wiring.pairs]
    return a, b


def window_reference(window, wiring: SobelWiring = DEFAULT_WIRING) -> float:
    a, b = _window_pairs(np.asarray(window), wiring)
    return sum(abs(x - y) for x, y in zip(a, b)) / (8 * MAX_I)


@dataclass(frozen=True)
class PixelResult:
    y: float
    y_bsl: float
    y_trans: float

    @property
    def ed_bsl(self) -> float:
        return abs(self.y_bsl - self.y)

    @property
    def ed_trans(self) -> float:
        return abs(self.y_trans - self.y_bsl)

    @property
    def ed_total(self) -> float:
        return self.ed_bsl + self.ed_trans


def simulate_pixel(window, ber: float, bsl: int, seed: int = 0, i: int = 1, j: int = 1,
                   wiring: SobelWiring = DEFAULT_WIRING) -> PixelResult:
    """Bit-level run of the XOR/MUX tree for one 3x3 window.

    ``y_bsl`` is the error-free stream value, ``y_trans`` the value after
    bit flips at the detector.
    """
    if bsl < 1:
        raise ValueError("bsl must be >= 1")
    win = np.asarray(window)
    if win.shape != (3, 3):
        raise ValueError("window must be 3x3")
    key = pixel_key(seed, i, j)
    reg = Lfsr(int(lfsr_seed(key)))
    a, b = _window_pairs(win, wiring)
    level: list[BitStream] = [xor_streams(sng_generate(x, bsl, reg), sng_generate(y, bsl, reg))
                              for x, y in zip(a, b)]
    for n in range(3):
        sel = select_bit_stream(reg, n, bsl)
        # select 1 passes the first input of each pair
        level = [mux_streams(level[2 * q + 1], level[2 * q], sel) for q in range(len(level) // 2)]
    ones = level[0].ones
    ones_err = int(inject_errors(ones, bsl, ber, key))
    return PixelResult(window_reference(win, wiring), ones / bsl, ones_err / bsl)


@dataclass
class AccuracyReport:
    rows: int
    cols: int
    bsl: int
    ber: float
    seed: int
    mse_total: float
    psnr_total: float
    ed_bsl: np.ndarray = field(repr=False)
    ed_trans: np.ndarray = field(repr=False)
    energy_per_pixel_nj: float | None = None
    time_per_pixel_ns: float | None = None
    ber_model: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def ed_total(self) -> np.ndarray:
        return self.ed_bsl + self.ed_trans

    def to_dict(self) -> dict:
        psnr = self.psnr_total if math.isfinite(self.psnr_total) else "inf"
        return {
            "schema_version": SCHEMA_VERSION,
            "rows": self.rows, "cols": self.cols, "bsl": self.bsl, "ber": self.ber,
            "ber_model": self.ber_model, "seed": self.seed,
            "mse_total": self.mse_total, "psnr_total_db": psnr,
            "mean_ed_bsl": float(self.ed_bsl.mean()), "mean_ed_trans": float(self.ed_trans.mean()),
            "max_ed_total": float(self.ed_total.max()),
            "energy_per_pixel_nj": self.energy_per_pixel_nj, "time_per_pixel_ns": self.time_per_pixel_ns,
            "notes": list(self.notes),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def psnr(mse: float) -> float:
    return math.inf if mse == 0 else 10 * math.log10(MAX_I ** 2 / mse)


def default_workers() -> int:
    env = os.environ.get("NANOPHOT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def process_image(img: GrayImage, ber: float, bsl: int, seed: int = 0,
                  wiring: SobelWiring = DEFAULT_WIRING, workers: int | None = None,
                  chunk_rows: int = 16) -> tuple[GrayImage, AccuracyReport]:
    """Run every interior pixel, inject errors and score against the error-free circuit.

    MSE divides by all ``M * K`` pixels although the 1-pixel border is never
    computed (border output and error are 0).
    """
    if bsl < 1:
        raise ValueError("bsl must be >= 1")
    if not 0 <= ber <= 1:
        raise ValueError("ber must lie in [0, 1]")
    m, k = img.rows, img.cols
    y = sobel_reference(img, wiring)
    a, b = _pair_planes(img.pixels.astype(np.int64), wiring)
    ii, jj = np.meshgrid(np.arange(1, m - 1), np.arange(1, k - 1), indexing="ij")
    keys = pixel_key(seed, ii, jj)
    phase = PHASE[lfsr_seed(keys)]

    def run(r0: int) -> tuple[int, np.ndarray, np.ndarray]:
        sl = slice(r0, min(r0 + chunk_rows, m - 2))
        aa = a[:, sl].reshape(8, -1)
        bb = b[:, sl].reshape(8, -1)
        ones = _count_ones(aa, bb, phase[sl].ravel(), bsl)
        err = inject_errors(ones, bsl, ber, keys[sl].ravel())
        shape = phase[sl].shape
        return r0, ones.reshape(shape), err.reshape(shape)

    starts = range(0, m - 2, chunk_rows)
    n_workers = workers or default_workers()
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(r) for r in starts]
    ones = np.zeros((m - 2, k - 2), dtype=np.int64)
    err = np.zeros_like(ones)
    for r0, o, e in parts:
        ones[r0:r0 + o.shape[0]] = o
        err[r0:r0 + e.shape[0]] = e

    y_bsl = np.zeros((m, k))
    y_trans = np.zeros((m, k))
    y_bsl[1:-1, 1:-1] = ones / bsl
    y_trans[1:-1, 1:-1] = err / bsl
    ed_bsl = np.abs(y_bsl - y)
    ed_trans = np.abs(y_trans - y_bsl)
    mse = float((((ed_bsl + ed_trans) * MAX_I) ** 2).sum() / (m * k))
    out = GrayImage(np.clip(np.floor(y_trans * MAX_I + 0.5), 0, MAX_I).astype(np.uint8))
    report = AccuracyReport(m, k, bsl, float(ber), int(seed), mse, psnr(mse), ed_bsl, ed_trans)
    return out, report


def ed_heatmap(ed: np.ndarray) -> GrayImage:
    """Linear 0..255 rendering of an error-distance map."""
    top = float(ed.max())
    scaled = np.zeros(ed.shape) if top == 0 else ed / top * MAX_I
    return GrayImage(np.floor(scaled + 0.5).astype(np.uint8))


def reference_image(img: GrayImage, wiring: SobelWiring = DEFAULT_WIRING) -> GrayImage:
    return GrayImage(np.floor(sobel_reference(img, wiring) * MAX_I + 0.5).astype(np.uint8))
