"""Fixed-point numbers embedded in a power-of-two ring.

Values are held as ``numpy.uint64`` arrays. Ring addition and multiplication
wrap silently (numpy unsigned overflow), which is exactly arithmetic mod 2^64.
Smaller rings (``Ring(8)`` etc.) exist so protocols can be checked
exhaustively; they mask after every operation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FixedPointOverflow

FRAC_BITS = 16
INT_BITS = 16


@dataclass(frozen=True)
class Ring:
    """The ring Z_{2^bits}, 1 <= bits <= 64."""

    bits: int = 64

    def __post_init__(self):
        if not 1 <= self.bits <= 64:
            raise ValueError(f"ring size 2^{self.bits} unsupported")

    @property
    def mask(self) -> np.uint64:
        return np.uint64((1 << self.bits) - 1)

    def reduce(self, x):
        x = np.asarray(x, dtype=np.uint64)
        if self.bits == 64:
            return x
        return x & self.mask

    def signed(self, x) -> np.ndarray:
        """Two's-complement interpretation as Python-int-safe int64 (bits <= 64)."""
        x = self.reduce(x)
        if self.bits == 64:
            return x.view(np.int64) if isinstance(x, np.ndarray) else np.uint64(x).view(np.int64)
        s = x.astype(np.int64)
        return np.where(s >= (1 << (self.bits - 1)), s - (1 << self.bits), s)

    def from_signed(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        return self.reduce(x.view(np.uint64))

    def msb(self, x) -> np.ndarray:
        return (self.reduce(x) >> np.uint64(self.bits - 1)) & np.uint64(1)

    def random(self, rng: np.random.Generator, shape) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        return self.reduce(rng.bit_generator.random_raw(n).reshape(shape))


RING64 = Ring(64)
_MOD = 1 << 64


def encode(v, frac_bits: int = FRAC_BITS, int_bits: int = INT_BITS, ring: Ring = RING64):
    """Round-to-nearest (ties away from zero) encoding of reals into the ring.

    Raises FixedPointOverflow when any |v| >= 2^(int_bits - 1).
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise FixedPointOverflow("cannot encode non-finite value")
    if v.size and np.max(np.abs(v)) >= 2.0 ** (int_bits - 1):
        raise FixedPointOverflow(
            f"|value| {np.max(np.abs(v))} outside Q{int_bits}.{frac_bits} range"
        )
    scaled = np.sign(v) * np.floor(np.abs(v) * 2.0**frac_bits + 0.5)
    return ring.from_signed(scaled.astype(np.int64))


def decode(raw, frac_bits: int = FRAC_BITS, ring: Ring = RING64):
    """Signed interpretation of ``raw`` divided by 2^frac_bits."""
    out = ring.signed(np.asarray(raw, dtype=np.uint64)).astype(np.float64) / 2.0**frac_bits
    return out if out.ndim else float(out)


def trunc(raw, bits: int, ring: Ring = RING64):
    """Arithmetic (sign-preserving) right shift of the two's-complement value."""
    if bits == 0:
        return ring.reduce(raw)
    if not 1 <= bits <= ring.bits - 2:
        raise ValueError(f"shift {bits} out of range for a {ring.bits}-bit ring")
    return ring.from_signed(ring.signed(raw) >> np.int64(bits))


def in_range(raw, int_bits: int = INT_BITS, frac_bits: int = FRAC_BITS, ring: Ring = RING64) -> bool:
    """True when every decoded magnitude is below 2^(int_bits-1)."""
    s = ring.signed(raw)
    return bool(np.all(np.abs(s.astype(np.float64)) < 2.0 ** (int_bits - 1 + frac_bits)))


def check_range(raw, what: str = "value", **kw) -> None:
    if not in_range(raw, **kw):
        raise FixedPointOverflow(f"{what} left the fixed-point range")


@dataclass(frozen=True)
class FixedPoint:
    """A single fixed-point scalar; mostly a convenience around the array functions."""

    raw: int
    frac_bits: int = FRAC_BITS

    @classmethod
    def from_float(cls, v: float, frac_bits: int = FRAC_BITS) -> "FixedPoint":
        return cls(int(encode(v, frac_bits)), frac_bits)

    def __float__(self) -> float:
        return float(decode(np.array(self.raw, dtype=np.uint64), self.frac_bits))

    def __add__(self, other: "FixedPoint") -> "FixedPoint":
        return FixedPoint((self.raw + other.raw) % _MOD, self.frac_bits)

    def __sub__(self, other: "FixedPoint") -> "FixedPoint":
        return FixedPoint((self.raw - other.raw) % _MOD, self.frac_bits)

    def __neg__(self) -> "FixedPoint":
        return FixedPoint(-self.raw % _MOD, self.frac_bits)

    def __mul__(self, other: "FixedPoint") -> "FixedPoint":
        prod = np.array([self.raw * other.raw % _MOD], dtype=np.uint64)
        return FixedPoint(int(trunc(prod, self.frac_bits)[0]), self.frac_bits)
