"""Q-format fixed-point numeric core.

A Qn.m value stores real x as the signed integer raw = round(x * 2^m),
clipped to [-2^B, 2^B - 1] with B = total_bits - 1 (sign bit excluded
from B). Two rounding conventions are used consistently everywhere:

* float -> raw conversion rounds half away from zero (C ``round`` semantics);
* integer right shifts round by adding 2^(shift-1) before the arithmetic
  shift (the usual requantization idiom on MCUs), which rounds halves
  toward +infinity.

Accumulators are conceptually 32-bit signed and never saturate mid-sum;
clipping happens once, when a value is written back into a narrow format.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import FormatChainError, FormatError, NonFiniteInputError

_QFMT_RE = re.compile(r"^Q(\d+)\.(\d+)@(\d+)$")


@dataclass(frozen=True)
class QFormat:
    """Fixed-point format with ``int_bits`` + ``frac_bits`` + 1 sign bit."""

    int_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.int_bits < 0 or self.frac_bits < 0:
            raise FormatError(f"format error: negative bit count in {self!r}")

    @property
    def total_bits(self) -> int:
        return self.int_bits + self.frac_bits + 1

    @property
    def scale(self) -> int:
        """2^m, the raw units per real unit."""
        return 1 << self.frac_bits

    @property
    def raw_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def real_min(self) -> float:
        return self.raw_min / self.scale

    @property
    def real_max(self) -> float:
        return self.raw_max / self.scale

    @property
    def resolution(self) -> float:
        return 1.0 / self.scale

    @property
    def storage_bytes(self) -> int:
        """Bytes per element when the format is stored (rounded up)."""
        return (self.total_bits + 7) // 8

    def __str__(self) -> str:
        return f"Q{self.int_bits}.{self.frac_bits}@{self.total_bits}"

    @classmethod
    def parse(cls, text: str) -> "QFormat":
        """Parse the textual "Qn.m@bits" notation, e.g. "Q2.5@8"."""
        m = _QFMT_RE.match(text.strip())
        if not m:
            raise FormatError(f"format error: cannot parse Q-format {text!r}")
        n, frac, total = (int(g) for g in m.groups())
        if n + frac + 1 != total:
            raise FormatError(
                f"format error: {text!r} inconsistent (n + m + 1 != total bits)"
            )
        return cls(n, frac)


Q2_5 = QFormat(2, 5)
Q0_7 = QFormat(0, 7)
Q2_13 = QFormat(2, 13)


@dataclass(frozen=True)
class QValue:
    """A single raw integer tagged with its format."""

    raw: int
    fmt: QFormat

    @property
    def value(self) -> float:
        return self.raw / self.fmt.scale


@dataclass(frozen=True)
class ShiftSpec:
    """Per-layer bias left shift and output right shift."""

    bias_left_shift: int
    out_right_shift: int

    def __post_init__(self):
        if self.bias_left_shift < 0 or self.out_right_shift < 0:
            raise FormatChainError(
                f"incompatible format chain: negative shift in {self!r}"
            )


def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero."""
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def quantize(v: float, fmt: QFormat) -> QValue:
    """Convert a real value to its Qn.m representation (round, then clip)."""
    if not math.isfinite(v):
        raise NonFiniteInputError(f"non-finite input: {v!r}")
    raw = round_half_away(v * fmt.scale)
    raw = min(max(raw, fmt.raw_min), fmt.raw_max)
    return QValue(raw, fmt)


def dequantize(q: QValue) -> float:
    return q.raw / q.fmt.scale


def quantize_array(v: np.ndarray, fmt: QFormat) -> np.ndarray:
    """Vectorized quantize; returns int32 raw values."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NonFiniteInputError("non-finite input: array contains NaN/Inf")
    # trunc(x + copysign(0.5, x)) rounds half away from zero
    raw = np.trunc(v * fmt.scale + np.copysign(0.5, v))
    return np.clip(raw, fmt.raw_min, fmt.raw_max).astype(np.int32)


def dequantize_array(raw: np.ndarray, fmt: QFormat) -> np.ndarray:
    return np.asarray(raw, dtype=np.float64) / fmt.scale


def product_format(a: QFormat, w: QFormat) -> QFormat:
    """Format of the exact product of a Qa-value and a Qw-value.

    One of the two sign bits is absorbed, so the product of an 8-bit and
    an 8-bit value is a 15-bit Q(a.n+w.n).(a.m+w.m).
    """
    return QFormat(a.int_bits + w.int_bits, a.frac_bits + w.frac_bits)


def derive_shifts(
    input_fmt: QFormat, weight_fmt: QFormat, bias_fmt: QFormat, output_fmt: QFormat
) -> ShiftSpec:
    """Compute bias/output shifts that align a MAC chain on its formats.

    The accumulator carries input.m + weight.m fractional bits; the bias
    must be left-shifted up to it and the result right-shifted down to
    the declared output format. Either shift coming out negative means
    the requested formats cannot be chained.
    """
    acc_frac = input_fmt.frac_bits + weight_fmt.frac_bits
    bias_left = acc_frac - bias_fmt.frac_bits
    out_right = acc_frac - output_fmt.frac_bits
    if bias_left < 0 or out_right < 0:
        raise FormatChainError(
            "incompatible format chain: accumulator has "
            f"{acc_frac} fractional bits, bias needs {bias_fmt.frac_bits}, "
            f"output needs {output_fmt.frac_bits}"
        )
    return ShiftSpec(bias_left, out_right)


def sat_add(a: int, b: int, fmt: QFormat) -> int:
    """Add two raw values and clip the sum to fmt's raw range."""
    s = a + b
    return min(max(s, fmt.raw_min), fmt.raw_max)


def rshift_round(x, shift: int):
    """Rounding arithmetic right shift: (x + 2^(shift-1)) >> shift.

    Works on Python ints and on (arrays of) numpy signed integers.
    shift must be >= 0; shift == 0 returns x unchanged.
    """
    if shift < 0:
        raise ValueError(f"negative shift {shift}")
    if shift == 0:
        return x
    if isinstance(x, np.ndarray):
        return np.right_shift(x + (1 << (shift - 1)), shift)
    return (int(x) + (1 << (shift - 1))) >> shift


def clip_raw(x, fmt: QFormat):
    """Clip raw value(s) to fmt's representable raw range."""
    if isinstance(x, np.ndarray):
        return np.clip(x, fmt.raw_min, fmt.raw_max)
    return min(max(int(x), fmt.raw_min), fmt.raw_max)
