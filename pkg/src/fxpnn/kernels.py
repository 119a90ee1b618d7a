"""Quantized layer kernels.

All kernels operate on :class:`QTensor` (integer data + attached QFormat),
accumulate in widened integers, and requantize with the rounding right
shift from :mod:`fxpnn.qformat`. They are deterministic and bit-exact:
the same inputs and specs produce the same raw outputs on any platform.

Feature maps are laid out sample-major, channel-minor: a (L, C) tensor
flattens to x[0,ch0], x[0,ch1], ..., x[1,ch0], ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTensorError, FormatChainError, FormatError, ShapeError
from .qformat import (
    QFormat,
    ShiftSpec,
    clip_raw,
    dequantize_array,
    quantize_array,
    rshift_round,
)


@dataclass
class QTensor:
    """Integer tensor with shape (L, C) for feature maps or (dim,) for vectors."""

    data: np.ndarray
    fmt: QFormat

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int32)
        if self.data.ndim not in (1, 2):
            raise ShapeError(f"shape error: QTensor must be 1-D or 2-D, got {self.data.shape}")
        if self.data.size and (
            self.data.min() < self.fmt.raw_min or self.data.max() > self.fmt.raw_max
        ):
            raise FormatError(f"format error: raw values outside {self.fmt} range")

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1] if self.data.ndim == 2 else 1

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def dequantize(self) -> np.ndarray:
        return dequantize_array(self.data, self.fmt)

    @classmethod
    def from_real(cls, values: np.ndarray, fmt: QFormat) -> "QTensor":
        return cls(quantize_array(values, fmt), fmt)


def _same_padding(length: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """(out_len, pad_left, pad_right) for zero-padded 'same' convolution."""
    out_len = -(-length // stride)
    total = max(0, (out_len - 1) * stride + kernel - length)
    left = total // 2
    return out_len, left, total - left


@dataclass
class ConvSpec:
    """1-D convolution layer: weights laid out [out_ch][tap][in_ch]."""

    kernel_size: int
    in_channels: int
    out_channels: int
    weights: np.ndarray  # (N, K, C) raw ints
    bias: np.ndarray  # (N,) raw ints
    weight_fmt: QFormat
    bias_fmt: QFormat
    in_fmt: QFormat
    out_fmt: QFormat
    shifts: ShiftSpec
    stride: int = 1
    padding: str = "same"  # same | valid
    activation: str = "relu"  # relu | linear

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.int32)
        self.bias = np.asarray(self.bias, dtype=np.int32)
        expect = (self.out_channels, self.kernel_size, self.in_channels)
        if self.weights.shape != expect:
            raise ShapeError(f"shape error: conv weights {self.weights.shape} != {expect}")
        if self.bias.shape != (self.out_channels,):
            raise ShapeError(f"shape error: conv bias {self.bias.shape}")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {self.padding!r}")
        if self.activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def param_count(self) -> int:
        return self.kernel_size * self.in_channels * self.out_channels + self.out_channels

    @property
    def fast_eligible(self) -> bool:
        """CMSIS fast-conv rule: in channels % 4 == 0 and out channels % 2 == 0."""
        return self.in_channels % 4 == 0 and self.out_channels % 2 == 0

    def out_length(self, in_length: int) -> int:
        if self.padding == "same":
            return _same_padding(in_length, self.kernel_size, self.stride)[0]
        return (in_length - self.kernel_size) // self.stride + 1


def conv1d(x: QTensor, spec: ConvSpec) -> QTensor:
    """Quantized 1-D convolution with bias shift, output shift and activation."""
    if x.data.ndim != 2 or x.channels != spec.in_channels:
        raise ShapeError(
            f"shape error: conv expects ({'*'}, {spec.in_channels}), got {x.data.shape}"
        )
    if x.fmt != spec.in_fmt:
        raise FormatError(f"format error: conv input {x.fmt} != {spec.in_fmt}")
    length = x.length
    if spec.padding == "same":
        out_len, pad_l, pad_r = _same_padding(length, spec.kernel_size, spec.stride)
    else:
        out_len, pad_l, pad_r = spec.out_length(length), 0, 0
    if out_len <= 0:
        raise ShapeError(f"shape error: conv input length {length} too short")

    xpad = np.zeros((length + pad_l + pad_r, spec.in_channels), dtype=np.int64)
    xpad[pad_l : pad_l + length] = x.data
    gather = np.arange(out_len)[:, None] * spec.stride + np.arange(spec.kernel_size)[None, :]
    cols = xpad[gather]  # (out_len, K, C)
    acc = np.tensordot(cols, spec.weights.astype(np.int64), axes=([1, 2], [1, 2]))
    acc += spec.bias.astype(np.int64) << spec.shifts.bias_left_shift
    out = rshift_round(acc, spec.shifts.out_right_shift)
    if spec.activation == "relu":
        out = np.maximum(out, 0)
    return QTensor(clip_raw(out, spec.out_fmt), spec.out_fmt)


def avg_pool(x: QTensor, size: int = 2, stride: int = 2) -> QTensor:
    """Average pooling; an odd trailing sample is truncated."""
    if x.data.ndim != 2:
        raise ShapeError("shape error: avg_pool expects a (L, C) tensor")
    n_out = (x.length - size) // stride + 1 if x.length >= size else 0
    if n_out <= 0:
        raise EmptyTensorError("empty tensor: pooling input shorter than window")
    starts = np.arange(n_out) * stride
    windows = x.data.astype(np.int64)[starts[:, None] + np.arange(size)[None, :]]
    sums = windows.sum(axis=1)
    out = (sums + size // 2) // size  # rounding division, halves toward +inf
    return QTensor(clip_raw(out, x.fmt), x.fmt)


def global_avg_pool(x: QTensor) -> QTensor:
    """Mean over the length axis per channel, rounded once at the end."""
    if x.data.ndim != 2:
        raise ShapeError("shape error: global_avg_pool expects a (L, C) tensor")
    if x.length == 0:
        raise EmptyTensorError("empty tensor: cannot pool over zero samples")
    sums = x.data.astype(np.int64).sum(axis=0)
    out = (sums + x.length // 2) // x.length
    return QTensor(clip_raw(out, x.fmt), x.fmt)


@dataclass
class ActivationLUT:
    """Lookup table for tanh/sigmoid over one input format.

    8-bit inputs index the table directly. 16-bit inputs index 256 nodes
    with the top 8 bits and linearly interpolate on the low bits.
    """

    function: str  # tanh | sigmoid
    input_fmt: QFormat
    output_fmt: QFormat
    table: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.function not in ("tanh", "sigmoid"):
            raise ValueError(f"unknown LUT function {self.function!r}")
        if self.table is None:
            self.table = self._build()
        self.table = np.asarray(self.table, dtype=np.int32)

    @property
    def node_shift(self) -> int:
        """Raw-domain stride between table nodes, as a shift count."""
        return max(0, self.input_fmt.total_bits - 8)

    def _build(self) -> np.ndarray:
        f = math.tanh if self.function == "tanh" else lambda t: 1.0 / (1.0 + math.exp(-t))
        raws = self.input_fmt.raw_min + (np.arange(256) << self.node_shift)
        reals = raws / self.input_fmt.scale
        return quantize_array(np.array([f(t) for t in reals]), self.output_fmt)


def lut_apply(x: QTensor, lut: ActivationLUT) -> QTensor:
    """Elementwise table lookup (with interpolation for 16-bit inputs)."""
    if x.fmt != lut.input_fmt:
        raise FormatError(f"format error: LUT input {x.fmt} != {lut.input_fmt}")
    offset = x.data.astype(np.int64) - lut.input_fmt.raw_min
    shift = lut.node_shift
    if shift == 0:
        out = lut.table[offset]
    else:
        idx = offset >> shift
        frac = offset & ((1 << shift) - 1)
        lo = lut.table[idx].astype(np.int64)
        hi = lut.table[np.minimum(idx + 1, 255)].astype(np.int64)
        out = lo + rshift_round((hi - lo) * frac, shift)
    return QTensor(clip_raw(out, lut.output_fmt), lut.output_fmt)


@dataclass
class GRUSpec:
    """Single-bias GRU cell with reset applied before the recurrent matmul.

    Gate order is (update z, reset r, candidate h~). Gate pre-activations
    and gate values live in ``gate_fmt`` (16-bit in the reference model);
    the hidden state is stored in ``state_fmt``.
    """

    input_dim: int
    hidden_dim: int
    kernel: np.ndarray  # (3, H, M) raw ints
    recurrent: np.ndarray  # (3, H, H) raw ints
    bias: np.ndarray  # (3, H) raw ints
    kernel_fmt: QFormat
    recurrent_fmt: QFormat
    bias_fmt: QFormat
    in_fmt: QFormat
    gate_fmt: QFormat
    state_fmt: QFormat
    sigmoid_lut: ActivationLUT = None
    tanh_lut: ActivationLUT = None

    def __post_init__(self):
        m, h = self.input_dim, self.hidden_dim
        self.kernel = np.asarray(self.kernel, dtype=np.int32)
        self.recurrent = np.asarray(self.recurrent, dtype=np.int32)
        self.bias = np.asarray(self.bias, dtype=np.int32)
        if self.kernel.shape != (3, h, m):
            raise ShapeError(f"shape error: GRU kernel {self.kernel.shape} != {(3, h, m)}")
        if self.recurrent.shape != (3, h, h):
            raise ShapeError(f"shape error: GRU recurrent {self.recurrent.shape}")
        if self.bias.shape != (3, h):
            raise ShapeError(f"shape error: GRU bias {self.bias.shape}")
        if self.sigmoid_lut is None:
            self.sigmoid_lut = ActivationLUT("sigmoid", self.gate_fmt, self.gate_fmt)
        if self.tanh_lut is None:
            self.tanh_lut = ActivationLUT("tanh", self.gate_fmt, self.gate_fmt)
        for s in self._alignment():
            if s < 0:
                raise FormatChainError(
                    "incompatible format chain: GRU format set yields negative shift"
                )

    @property
    def param_count(self) -> int:
        m, h = self.input_dim, self.hidden_dim
        return 3 * (m * h + h * h + h)

    def _alignment(self) -> tuple[int, int, int, int, int]:
        """(kernel_left, recurrent_left, bias_left, gate_right, cand_right).

        The gate accumulator carries max(in.m + kernel.m, state.m + rec.m)
        fractional bits; both matmul products are left-shifted up to it.
        cand_right rescales the (1-z)*h~ product down to the state format.
        """
        fk = self.in_fmt.frac_bits + self.kernel_fmt.frac_bits
        fr = self.state_fmt.frac_bits + self.recurrent_fmt.frac_bits
        facc = max(fk, fr)
        return (
            facc - fk,
            facc - fr,
            facc - self.bias_fmt.frac_bits,
            facc - self.gate_fmt.frac_bits,
            2 * self.gate_fmt.frac_bits - self.state_fmt.frac_bits,
        )


def gru_step(state: QTensor, x: QTensor, spec: GRUSpec) -> QTensor:
    """One quantized GRU step: h' = z*h + (1-z)*h~."""
    if x.data.shape != (spec.input_dim,):
        raise ShapeError(f"shape error: GRU input {x.data.shape} != ({spec.input_dim},)")
    if state.data.shape != (spec.hidden_dim,):
        raise ShapeError(f"shape error: GRU state {state.data.shape} != ({spec.hidden_dim},)")
    if x.fmt != spec.in_fmt:
        raise FormatError(f"format error: GRU input {x.fmt} != {spec.in_fmt}")
    if state.fmt != spec.state_fmt:
        raise FormatError(f"format error: GRU state {state.fmt} != {spec.state_fmt}")

    k_left, r_left, b_left, g_right, c_right = spec._alignment()
    xi = x.data.astype(np.int64)
    h = state.data.astype(np.int64)
    kern = spec.kernel.astype(np.int64)
    rec = spec.recurrent.astype(np.int64)
    bias = spec.bias.astype(np.int64)

    def preact(gate: int, hvec: np.ndarray) -> np.ndarray:
        acc = (kern[gate] @ xi) << k_left
        acc += (rec[gate] @ hvec) << r_left
        acc += bias[gate] << b_left
        return clip_raw(rshift_round(acc, g_right), spec.gate_fmt)

    z = lut_apply(QTensor(preact(0, h), spec.gate_fmt), spec.sigmoid_lut).data.astype(np.int64)
    r = lut_apply(QTensor(preact(1, h), spec.gate_fmt), spec.sigmoid_lut).data.astype(np.int64)

    gate_m = spec.gate_fmt.frac_bits
    rh = clip_raw(rshift_round(r * h, gate_m), spec.state_fmt)
    cand = lut_apply(QTensor(preact(2, rh), spec.gate_fmt), spec.tanh_lut).data.astype(np.int64)

    one = 1 << gate_m
    keep = rshift_round(z * h, gate_m)
    update = rshift_round((one - z) * cand, c_right)
    return QTensor(clip_raw(keep + update, spec.state_fmt), spec.state_fmt)


@dataclass
class DenseSpec:
    """Fully connected layer y = W x + b with requantization."""

    in_dim: int
    out_dim: int
    weights: np.ndarray  # (N, M) raw ints
    bias: np.ndarray  # (N,) raw ints
    weight_fmt: QFormat
    bias_fmt: QFormat
    in_fmt: QFormat
    out_fmt: QFormat
    shifts: ShiftSpec

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.int32)
        self.bias = np.asarray(self.bias, dtype=np.int32)
        if self.weights.shape != (self.out_dim, self.in_dim):
            raise ShapeError(f"shape error: dense weights {self.weights.shape}")
        if self.bias.shape != (self.out_dim,):
            raise ShapeError(f"shape error: dense bias {self.bias.shape}")

    @property
    def param_count(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim


def dense(x: QTensor, spec: DenseSpec) -> QTensor:
    if x.data.shape != (spec.in_dim,):
        raise ShapeError(f"shape error: dense input {x.data.shape} != ({spec.in_dim},)")
    if x.fmt != spec.in_fmt:
        raise FormatError(f"format error: dense input {x.fmt} != {spec.in_fmt}")
    acc = spec.weights.astype(np.int64) @ x.data.astype(np.int64)
    acc += spec.bias.astype(np.int64) << spec.shifts.bias_left_shift
    out = rshift_round(acc, spec.shifts.out_right_shift)
    return QTensor(clip_raw(out, spec.out_fmt), spec.out_fmt)


# 2^(j/256) in Q16, plus the closing 2.0 endpoint for interpolation
_POW2_FRAC_Q16 = np.array(
    [round((2.0 ** (j / 256.0)) * 65536) for j in range(257)], dtype=np.int64
)


def softmax_pow2(logits: QTensor) -> np.ndarray:
    """Base-2 softmax on raw values: p_i = 2^(l_i - max l) / sum_j 2^(l_j - max l).

    The powers are built with integer shifts (Q16 mantissa plus an exponent
    shift); only the final normalization divides in floating point.
    """
    if logits.data.ndim != 1 or logits.data.size < 1:
        raise ShapeError("shape error: softmax expects a nonempty vector")
    m = logits.fmt.frac_bits
    d = logits.data.astype(np.int64) - int(logits.data.max())
    q = d >> m  # floor division by 2^m, <= 0
    rem = d - (q << m)  # fractional raw part in [0, 2^m)
    if m <= 8:
        mant = _POW2_FRAC_Q16[rem << (8 - m)]
    else:
        idx = rem >> (m - 8)
        frac = rem & ((1 << (m - 8)) - 1)
        lo = _POW2_FRAC_Q16[idx]
        mant = lo + rshift_round((_POW2_FRAC_Q16[idx + 1] - lo) * frac, m - 8)
    t = np.right_shift(mant, np.minimum(-q, 62))
    return t / t.sum()
