"""Floating-point reference implementation of the conv-GRU classifier.

Mirrors the fixed-point engine layer for layer (same GRU variant, same
padding, same pooling) in float64, and can emulate quantized inference by
snapping weights to their fixed-point grids and inserting fake-quantize
points after each conv+pool pair and at the GRU output. GRU internals stay
in full precision in that mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import SchemeError, ShapeError
from .qformat import QFormat, dequantize_array, quantize_array

CLASS_NAMES = ("Normal", "AF", "Other", "Noise")


@dataclass
class FloatConv:
    name: str
    kernel_size: int
    in_channels: int
    out_channels: int
    weights: np.ndarray  # (N, K, C)
    bias: np.ndarray  # (N,)
    stride: int = 1
    padding: str = "same"
    activation: str = "relu"

    @property
    def param_count(self) -> int:
        return self.kernel_size * self.in_channels * self.out_channels + self.out_channels


@dataclass
class FloatPool:
    name: str
    size: int = 2
    stride: int = 2
    param_count: int = 0


@dataclass
class FloatGap:
    name: str
    param_count: int = 0


@dataclass
class FloatGRU:
    name: str
    input_dim: int
    hidden_dim: int
    kernel: np.ndarray  # (3, H, M), gate order (z, r, candidate)
    recurrent: np.ndarray  # (3, H, H)
    bias: np.ndarray  # (3, H)

    @property
    def param_count(self) -> int:
        m, h = self.input_dim, self.hidden_dim
        return 3 * (m * h + h * h + h)


@dataclass
class FloatDense:
    name: str
    in_dim: int
    out_dim: int
    weights: np.ndarray  # (N, M)
    bias: np.ndarray  # (N,)

    @property
    def param_count(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim


@dataclass
class FloatSoftmax:
    name: str
    param_count: int = 0


@dataclass
class FloatModel:
    layers: list
    window_len: int = 256
    class_names: tuple = CLASS_NAMES
    # insertion-point name -> QFormat; None means pure float inference
    fake_quant: dict = None

    def param_count(self) -> int:
        return sum(l.param_count for l in self.layers)

    def weight_tensors(self) -> dict:
        """All weight/bias arrays keyed by "<layer>.<blob>"."""
        out = {}
        for layer in self.layers:
            if isinstance(layer, FloatConv) or isinstance(layer, FloatDense):
                out[f"{layer.name}.weights"] = layer.weights
                out[f"{layer.name}.bias"] = layer.bias
            elif isinstance(layer, FloatGRU):
                out[f"{layer.name}.kernel"] = layer.kernel
                out[f"{layer.name}.recurrent"] = layer.recurrent
                out[f"{layer.name}.bias"] = layer.bias
        return out


@dataclass
class FloatResult:
    probs: np.ndarray
    taps: dict = field(default_factory=dict)
    conv_evals: int = 0
    gru_steps: int = 0


def fake_quantize(x: np.ndarray, fmt: QFormat) -> np.ndarray:
    """Snap values onto fmt's grid (quantize then dequantize)."""
    return dequantize_array(quantize_array(x, fmt), fmt)


def _conv1d_f(x: np.ndarray, layer: FloatConv) -> np.ndarray:
    length = x.shape[0]
    if layer.padding == "same":
        out_len = -(-length // layer.stride)
        total = max(0, (out_len - 1) * layer.stride + layer.kernel_size - length)
        pad_l = total // 2
        pad_r = total - pad_l
    else:
        out_len = (length - layer.kernel_size) // layer.stride + 1
        pad_l = pad_r = 0
    xpad = np.zeros((length + pad_l + pad_r, layer.in_channels))
    xpad[pad_l : pad_l + length] = x
    gather = np.arange(out_len)[:, None] * layer.stride + np.arange(layer.kernel_size)[None, :]
    out = np.tensordot(xpad[gather], layer.weights, axes=([1, 2], [1, 2])) + layer.bias
    if layer.activation == "relu":
        out = np.maximum(out, 0.0)
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def _gru_step_f(h: np.ndarray, x: np.ndarray, layer: FloatGRU) -> np.ndarray:
    z = _sigmoid(layer.kernel[0] @ x + layer.recurrent[0] @ h + layer.bias[0])
    r = _sigmoid(layer.kernel[1] @ x + layer.recurrent[1] @ h + layer.bias[1])
    cand = np.tanh(layer.kernel[2] @ x + layer.recurrent[2] @ (r * h) + layer.bias[2])
    return z * h + (1.0 - z) * cand


def softmax(logits: np.ndarray, base: str = "e") -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted) if base == "e" else np.exp2(shifted)
    return e / e.sum()


def forward_float_detailed(
    model: FloatModel, windows: np.ndarray, softmax_base: str = "e"
) -> FloatResult:
    """Run the float model over (N_w, window_len) windows.

    Convolutional layers run per window; the GRU consumes the per-window
    feature vectors in order. With ``model.fake_quant`` set, activations
    are snapped to their grids at the recorded insertion points.
    """
    windows = np.atleast_2d(np.asarray(windows, dtype=np.float64))
    if windows.shape[1] != model.window_len:
        raise ShapeError(
            f"shape error: window length {windows.shape[1]} != {model.window_len}"
        )
    fq = model.fake_quant or {}
    result = FloatResult(probs=None)

    if "input" in fq:
        windows = fake_quantize(windows, fq["input"])
    result.taps["input"] = windows

    conv_part = []
    for layer in model.layers:
        if not isinstance(layer, (FloatConv, FloatPool, FloatGap)):
            break
        conv_part.append(layer)

    gru = next(l for l in model.layers if isinstance(l, FloatGRU))
    per_window_taps = {}
    features = []
    for w in windows:
        x = w[:, None]
        for layer in conv_part:
            if isinstance(layer, FloatConv):
                x = _conv1d_f(x, layer)
            elif isinstance(layer, FloatPool):
                n_out = (x.shape[0] - layer.size) // layer.stride + 1
                starts = np.arange(n_out) * layer.stride
                x = x[starts[:, None] + np.arange(layer.size)[None, :]].mean(axis=1)
                if layer.name in fq:
                    x = fake_quantize(x, fq[layer.name])
                per_window_taps.setdefault(layer.name, []).append(x)
            else:
                x = x.mean(axis=0)
                per_window_taps.setdefault(layer.name, []).append(x)
        features.append(x)
    result.conv_evals = len(windows)
    for name, values in per_window_taps.items():
        result.taps[name] = np.stack(values)

    h = np.zeros(gru.hidden_dim)
    for x in features:
        h = _gru_step_f(h, x, gru)
        result.gru_steps += 1
    if gru.name in fq:
        h = fake_quantize(h, fq[gru.name])
    result.taps[gru.name] = h

    head = next(l for l in model.layers if isinstance(l, FloatDense))
    logits = head.weights @ h + head.bias
    result.taps["logits"] = logits
    result.probs = softmax(logits, base=softmax_base)
    return result


def forward_float(model: FloatModel, windows: np.ndarray, softmax_base: str = "e") -> np.ndarray:
    return forward_float_detailed(model, windows, softmax_base).probs


def simulate_quantization(model: FloatModel, scheme) -> FloatModel:
    """Return a copy of the model with weights snapped to the scheme's grids
    and fake-quantize points armed after each conv+pool pair and at the GRU
    output. ``scheme`` must expose ``weight_formats`` and
    ``activation_formats`` mappings (see fxpnn.quantizer.QuantScheme).
    """
    wf = scheme.weight_formats
    missing = [k for k in model.weight_tensors() if k not in wf]
    if missing:
        raise SchemeError(f"incomplete scheme: missing {', '.join(sorted(missing))}")

    layers = []
    for layer in model.layers:
        if isinstance(layer, (FloatConv, FloatDense)):
            layers.append(
                replace(
                    layer,
                    weights=fake_quantize(layer.weights, wf[f"{layer.name}.weights"]),
                    bias=fake_quantize(layer.bias, wf[f"{layer.name}.bias"]),
                )
            )
        elif isinstance(layer, FloatGRU):
            layers.append(
                replace(
                    layer,
                    kernel=fake_quantize(layer.kernel, wf[f"{layer.name}.kernel"]),
                    recurrent=fake_quantize(layer.recurrent, wf[f"{layer.name}.recurrent"]),
                    bias=fake_quantize(layer.bias, wf[f"{layer.name}.bias"]),
                )
            )
        else:
            layers.append(replace(layer))
    return FloatModel(
        layers=layers,
        window_len=model.window_len,
        class_names=model.class_names,
        fake_quant=dict(scheme.activation_formats),
    )


def build_canonical_float(
    rng: np.random.Generator = None,
    weight_scale: float = 0.35,
    fan_in_scaled: bool = False,
) -> FloatModel:
    """Float twin of the canonical fixed-point architecture.

    With ``rng`` given, weights are drawn N(0, weight_scale^2); otherwise
    all weights are zero. ``fan_in_scaled`` divides each tensor's scale by
    sqrt(fan-in) so activations stay bounded through the deep conv stack
    (the regime a trained network lives in).
    """

    def draw(*shape, fan_in=1):
        if rng is None:
            return np.zeros(shape)
        scale = weight_scale / math.sqrt(fan_in) if fan_in_scaled else weight_scale
        return rng.normal(0.0, scale, size=shape)

    layers = []
    channels = [1, 8, 16, 32, 64, 64, 128, 128]
    for i in range(7):
        c, n = channels[i], channels[i + 1]
        layers.append(
            FloatConv(f"conv{i + 1}", 5, c, n,
                      draw(n, 5, c, fan_in=5 * c), draw(n, fan_in=5 * c))
        )
        layers.append(FloatPool(f"pool{i + 1}"))
    layers.append(FloatGap("gap"))
    layers.append(
        FloatGRU("gru", 128, 64,
                 draw(3, 64, 128, fan_in=192), draw(3, 64, 64, fan_in=192),
                 draw(3, 64, fan_in=192))
    )
    layers.append(FloatDense("dense", 64, 4, draw(4, 64, fan_in=64), draw(4, fan_in=64)))
    layers.append(FloatSoftmax("softmax"))
    return FloatModel(layers=layers)
