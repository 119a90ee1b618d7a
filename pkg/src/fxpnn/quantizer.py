"""Post-training quantization: 3-sigma format selection, weight
quantization, activation calibration, and shift derivation.

Integer bits for a tensor are chosen as the smallest n >= 0 with
2^n >= |mean| + 3*std, so the format covers the mu +/- 3*sigma range;
the remaining bits go to the fractional part. Activation formats come
from running the float model over a calibration set and applying the
same rule to the observed activations at each insertion point (after
each conv+pool pair, plus the input and the logits). Without
calibration data, each activation point falls back to the format
selected from the producing layer's weights, and the input falls back
to Q2.5@8 (a z-scored signal's 3-sigma range).

GRU gate/state formats are policy-pinned (default Q2.13@16): the engine
carries its hidden state in a fixed format across steps, so the GRU
output insertion point always uses the state format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import floatref
from .errors import EmptyTensorError, FormatChainError, FormatError
from .graph import (
    ConvLayer,
    DenseLayer,
    GapLayer,
    GraphMeta,
    GruLayer,
    ModelGraph,
    PoolLayer,
    SoftmaxLayer,
)
from .kernels import ConvSpec, DenseSpec, GRUSpec
from .qformat import QFormat, derive_shifts, quantize_array


@dataclass(frozen=True)
class TensorStats:
    mean: float
    std: float
    min: float
    max: float


@dataclass
class QuantPolicy:
    weight_bits: int = 8
    activation_bits: int = 8
    gru_gate_fmt: QFormat = field(default_factory=lambda: QFormat(2, 13))
    gru_state_fmt: QFormat = field(default_factory=lambda: QFormat(2, 13))
    gru_bias_fmt: QFormat = field(default_factory=lambda: QFormat(2, 13))
    logit_bits: int = 16
    fallback_input_fmt: QFormat = field(default_factory=lambda: QFormat(2, 5))
    fallback_logit_fmt: QFormat = field(default_factory=lambda: QFormat(4, 11))
    uniform_weight_fmt: QFormat = None  # force one format for every weight tensor


@dataclass
class QuantScheme:
    """Chosen formats plus the statistics they were derived from."""

    weight_formats: dict = field(default_factory=dict)
    activation_formats: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    saturation: dict = field(default_factory=dict)  # fraction of clipped values


def _tensor_stats(values: np.ndarray) -> TensorStats:
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    return TensorStats(
        mean=float(flat.mean()),
        std=float(flat.std()),
        min=float(flat.min()),
        max=float(flat.max()),
    )


def select_format(weights: np.ndarray, total_bits: int = 8) -> QFormat:
    """Smallest-integer-bits format whose range covers |mu| + 3*sigma."""
    flat = np.asarray(weights, dtype=np.float64).reshape(-1)
    if flat.size == 0:
        raise EmptyTensorError("empty tensor: cannot select a format")
    bound = abs(float(flat.mean())) + 3.0 * float(flat.std())
    n = 0 if bound <= 1.0 else math.ceil(math.log2(bound))
    if n > total_bits - 1:
        raise FormatError(
            f"format error: |mu|+3*sigma = {bound:.4g} needs {n} integer bits, "
            f"only {total_bits - 1} available"
        )
    return QFormat(n, total_bits - 1 - n)


def _saturation_fraction(values: np.ndarray, fmt: QFormat) -> float:
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    return float(np.mean((flat < fmt.real_min) | (flat > fmt.real_max)))


def calibrate_activations(
    model: floatref.FloatModel,
    sample_windows,
    policy: QuantPolicy = None,
    scheme: QuantScheme = None,
) -> dict:
    """Pick activation formats by observing the float model on real data.

    ``sample_windows`` is one (N_w, window_len) array or a list of them.
    Returns {insertion point name: QFormat}; stats land in ``scheme`` when
    one is passed in.
    """
    policy = policy or QuantPolicy()
    if isinstance(sample_windows, np.ndarray):
        sample_windows = [sample_windows]
    sample_windows = [np.atleast_2d(w) for w in sample_windows]
    if not sample_windows or sum(w.shape[0] for w in sample_windows) == 0:
        raise EmptyTensorError("empty calibration set")

    collected = {}
    for batch in sample_windows:
        res = floatref.forward_float_detailed(model, batch)
        for point, values in res.taps.items():
            collected.setdefault(point, []).append(np.asarray(values).reshape(-1))

    formats = {}
    for point, chunks in collected.items():
        if _is_gap_point(model, point):
            continue  # diagnostic tap, not a quantization insertion point
        values = np.concatenate(chunks)
        stats = _tensor_stats(values)
        if point == "logits":
            fmt = select_format(values, policy.logit_bits)
        elif _is_gru_point(model, point):
            fmt = policy.gru_state_fmt  # state format is pinned by policy
        else:
            fmt = select_format(values, policy.activation_bits)
        formats[point] = fmt
        if scheme is not None:
            scheme.stats[f"act:{point}"] = stats
            scheme.saturation[f"act:{point}"] = _saturation_fraction(values, fmt)
    return formats


def _is_gru_point(model: floatref.FloatModel, point: str) -> bool:
    return any(isinstance(l, floatref.FloatGRU) and l.name == point for l in model.layers)


def _is_gap_point(model: floatref.FloatModel, point: str) -> bool:
    return any(isinstance(l, floatref.FloatGap) and l.name == point for l in model.layers)


def _fallback_activations(model: floatref.FloatModel, policy: QuantPolicy) -> dict:
    """Weight-range fallback when no calibration data is available."""
    formats = {"input": policy.fallback_input_fmt, "logits": policy.fallback_logit_fmt}
    prev_conv = None
    for layer in model.layers:
        if isinstance(layer, floatref.FloatConv):
            prev_conv = layer
        elif isinstance(layer, floatref.FloatPool) and prev_conv is not None:
            formats[layer.name] = select_format(prev_conv.weights, policy.activation_bits)
        elif isinstance(layer, floatref.FloatGRU):
            formats[layer.name] = policy.gru_state_fmt
    return formats


def make_scheme(
    model: floatref.FloatModel,
    policy: QuantPolicy = None,
    calibration=None,
) -> QuantScheme:
    """Assemble the full quantization scheme (weights + activations)."""
    policy = policy or QuantPolicy()
    scheme = QuantScheme()

    for name, values in model.weight_tensors().items():
        layer_name, blob = name.rsplit(".", 1)
        is_gru = _is_gru_point(model, layer_name)
        if is_gru and blob == "bias":
            fmt = policy.gru_bias_fmt
        elif policy.uniform_weight_fmt is not None:
            fmt = policy.uniform_weight_fmt
        else:
            fmt = select_format(values, policy.weight_bits)
        scheme.weight_formats[name] = fmt
        scheme.stats[name] = _tensor_stats(values)
        scheme.saturation[name] = _saturation_fraction(values, fmt)

    if calibration is not None:
        scheme.activation_formats = calibrate_activations(
            model, calibration, policy, scheme
        )
    else:
        scheme.activation_formats = _fallback_activations(model, policy)
    return scheme


def quantize_model(
    model: floatref.FloatModel,
    policy: QuantPolicy = None,
    scheme: QuantScheme = None,
    calibration=None,
    sample_rate_hz: int = 107,
) -> ModelGraph:
    """Turn a float model into a fixed-point ModelGraph.

    Weight formats come from the 3-sigma rule (or the policy's uniform
    override), activation formats from ``scheme``/``calibration`` or the
    documented fallback; per-layer shifts are derived from the format
    chain. Raises FormatChainError naming the layer if a derived shift
    is negative.
    """
    policy = policy or QuantPolicy()
    if scheme is None:
        scheme = make_scheme(model, policy, calibration)
    wf = scheme.weight_formats
    af = scheme.activation_formats

    layers = []
    in_fmt = af["input"]
    cur_fmt = in_fmt
    for i, layer in enumerate(model.layers):
        if isinstance(layer, floatref.FloatConv):
            # the activation point after a conv is its paired pool, when present
            point = layer.name
            if i + 1 < len(model.layers) and isinstance(
                model.layers[i + 1], floatref.FloatPool
            ):
                point = model.layers[i + 1].name
            out_fmt = af.get(point, cur_fmt)
            w_fmt = wf[f"{layer.name}.weights"]
            b_fmt = wf[f"{layer.name}.bias"]
            try:
                shifts = derive_shifts(cur_fmt, w_fmt, b_fmt, out_fmt)
            except FormatChainError as e:
                raise FormatChainError(
                    f"incompatible format chain: layer {layer.name}: {e}"
                ) from None
            layers.append(
                ConvLayer(
                    layer.name,
                    ConvSpec(
                        kernel_size=layer.kernel_size,
                        in_channels=layer.in_channels,
                        out_channels=layer.out_channels,
                        weights=quantize_array(layer.weights, w_fmt),
                        bias=quantize_array(layer.bias, b_fmt),
                        weight_fmt=w_fmt,
                        bias_fmt=b_fmt,
                        in_fmt=cur_fmt,
                        out_fmt=out_fmt,
                        shifts=shifts,
                        stride=layer.stride,
                        padding=layer.padding,
                        activation=layer.activation,
                    ),
                )
            )
            cur_fmt = out_fmt
        elif isinstance(layer, floatref.FloatPool):
            layers.append(PoolLayer(layer.name, layer.size, layer.stride))
        elif isinstance(layer, floatref.FloatGap):
            layers.append(GapLayer(layer.name))
        elif isinstance(layer, floatref.FloatGRU):
            state_fmt = af.get(layer.name, policy.gru_state_fmt)
            layers.append(
                GruLayer(
                    layer.name,
                    GRUSpec(
                        input_dim=layer.input_dim,
                        hidden_dim=layer.hidden_dim,
                        kernel=quantize_array(layer.kernel, wf[f"{layer.name}.kernel"]),
                        recurrent=quantize_array(
                            layer.recurrent, wf[f"{layer.name}.recurrent"]
                        ),
                        bias=quantize_array(layer.bias, wf[f"{layer.name}.bias"]),
                        kernel_fmt=wf[f"{layer.name}.kernel"],
                        recurrent_fmt=wf[f"{layer.name}.recurrent"],
                        bias_fmt=wf[f"{layer.name}.bias"],
                        in_fmt=cur_fmt,
                        gate_fmt=policy.gru_gate_fmt,
                        state_fmt=state_fmt,
                    ),
                )
            )
            cur_fmt = state_fmt
        elif isinstance(layer, floatref.FloatDense):
            w_fmt = wf[f"{layer.name}.weights"]
            b_fmt = wf[f"{layer.name}.bias"]
            out_fmt = af.get("logits", policy.fallback_logit_fmt)
            try:
                shifts = derive_shifts(cur_fmt, w_fmt, b_fmt, out_fmt)
            except FormatChainError as e:
                raise FormatChainError(
                    f"incompatible format chain: layer {layer.name}: {e}"
                ) from None
            layers.append(
                DenseLayer(
                    layer.name,
                    DenseSpec(
                        in_dim=layer.in_dim,
                        out_dim=layer.out_dim,
                        weights=quantize_array(layer.weights, w_fmt),
                        bias=quantize_array(layer.bias, b_fmt),
                        weight_fmt=w_fmt,
                        bias_fmt=b_fmt,
                        in_fmt=cur_fmt,
                        out_fmt=out_fmt,
                        shifts=shifts,
                    ),
                )
            )
            cur_fmt = out_fmt
        elif isinstance(layer, floatref.FloatSoftmax):
            layers.append(SoftmaxLayer(layer.name))

    meta = GraphMeta(
        window_len=model.window_len,
        sample_rate_hz=sample_rate_hz,
        class_names=tuple(model.class_names),
        input_fmt=in_fmt,
    )
    return ModelGraph(layers=layers, meta=meta)


def format_report(scheme: QuantScheme) -> str:
    """Human-readable per-tensor table: stats, chosen format, clipped fraction."""
    rows = [f"{'tensor':<24} {'mean':>10} {'std':>10} {'min':>10} {'max':>10} "
            f"{'format':>10} {'clipped':>9}"]
    names = list(scheme.weight_formats) + [
        f"act:{p}" for p in scheme.activation_formats
    ]
    for name in names:
        fmt = (
            scheme.weight_formats.get(name)
            or scheme.activation_formats.get(name.removeprefix("act:"))
        )
        st = scheme.stats.get(name)
        sat = scheme.saturation.get(name)
        if st is None:
            rows.append(f"{name:<24} {'-':>10} {'-':>10} {'-':>10} {'-':>10} "
                        f"{str(fmt):>10} {'-':>9}")
        else:
            rows.append(
                f"{name:<24} {st.mean:>10.4f} {st.std:>10.4f} {st.min:>10.4f} "
                f"{st.max:>10.4f} {str(fmt):>10} {sat:>9.4%}"
            )
    return "\n".join(rows)
