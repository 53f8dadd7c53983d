"""Stochastic bit streams, LFSR-based number generators and the XOR/MUX stream algebra."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from operator import xor

import numpy as np

DEFAULT_WIDTH = 8
DEFAULT_TAPS = (8, 6, 5, 4)


class InvalidStateError(ValueError):
    pass


class LengthMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Lfsr:
    """Fibonacci LFSR value. ``next`` returns a new register instead of mutating.

    Taps are polynomial exponents (``(8, 6, 5, 4)`` is x^8+x^6+x^5+x^4+1, maximal
    for width 8). The register shifts right, so tap ``t`` reads bit ``width - t``.
    """

    state: int = 1
    width: int = DEFAULT_WIDTH
    taps: tuple[int, ...] = DEFAULT_TAPS

    def __post_init__(self) -> None:
        if not 0 < self.state < (1 << self.width):
            raise InvalidStateError(f"LFSR state must be in [1, {(1 << self.width) - 1}], got {self.state}")
        if any(not 1 <= t <= self.width for t in self.taps):
            raise ValueError(f"taps {self.taps} out of range for width {self.width}")

    def next(self) -> tuple[int, "Lfsr"]:
        value = self.state
        feedback = 1 & reduce(xor, (value >> (self.width - t) for t in self.taps))
        nxt = (feedback << (self.width - 1)) | (value >> 1)
        return value, Lfsr(nxt, self.width, self.taps)

    def sequence(self, n: int) -> np.ndarray:
        """The next ``n`` register values, starting with the current state."""
        out = np.empty(n, dtype=np.int64)
        reg = self
        for k in range(n):
            out[k], reg = reg.next()
        return out

    def advance(self, n: int) -> "Lfsr":
        reg = self
        for _ in range(n):
            _, reg = reg.next()
        return reg


def lfsr_next(l: Lfsr) -> tuple[int, Lfsr]:
    return l.next()


@dataclass(frozen=True, eq=False)
class BitStream:
    """Fixed-length 0/1 sequence whose fraction of ones is the encoded probability."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.bits, dtype=np.uint8).ravel()
        if b.size == 0:
            raise ValueError("bit stream must be non-empty")
        if np.any(b > 1):
            raise ValueError("bit stream values must be 0 or 1")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @classmethod
    def from_string(cls, s: str) -> "BitStream":
        return cls(np.array([int(c) for c in s if c in "01"], dtype=np.uint8))

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BitStream) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    @property
    def ones(self) -> int:
        return int(self.bits.sum())

    @property
    def probability(self) -> float:
        return self.ones / len(self)

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


def sng_generate(a_v: int, bsl: int, l: Lfsr) -> BitStream:
    """Comparator SNG: bit is 1 when the LFSR value is below ``a_v``."""
    if bsl < 1:
        raise ValueError("bsl must be >= 1")
    return BitStream((l.sequence(bsl) < a_v).astype(np.uint8))


def _check_lengths(*streams: BitStream) -> None:
    if len({len(s) for s in streams}) != 1:
        raise LengthMismatchError(f"stream lengths differ: {[len(s) for s in streams]}")


def xor_streams(a: BitStream, b: BitStream) -> BitStream:
    _check_lengths(a, b)
    return BitStream(a.bits ^ b.bits)


def mux_streams(a: BitStream, b: BitStream, sel: BitStream) -> BitStream:
    """Scaled adder: ``b`` where ``sel`` is 1, ``a`` elsewhere."""
    _check_lengths(a, b, sel)
    return BitStream(np.where(sel.bits == 1, b.bits, a.bits))


def select_bit_stream(l: Lfsr, bit_position: int, bsl: int) -> BitStream:
    """Stream formed by one register bit over ``bsl`` steps (MUX select line)."""
    if not 0 <= bit_position < l.width:
        raise ValueError(f"bit position {bit_position} outside register of width {l.width}")
    return BitStream(((l.sequence(bsl) >> bit_position) & 1).astype(np.uint8))


def lfsr_period(l: Lfsr) -> int:
    start = l.state
    reg = l.advance(1)
    n = 1
    while reg.state != start:
        reg = reg.advance(1)
        n += 1
    return n
