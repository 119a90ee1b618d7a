"""Operation counting, throughput/power arithmetic, and classification
metrics.

Per-window operation counts follow the MCU cost model:

* conv1d: 2*K*C*N*L + L*N, with L the convolution output length
  (pre-pooling); the second addend is the bias contribution.
* average pooling (2/2): L*C/2, with L the pooling input length.
* dense: 2*M*N + N.
* GRU: the three input and three recurrent matrix products,
  2*3*(M+H)*H, biases excluded.
* activations and softmax: free (lookup tables / bitwise ops).
"""

from __future__ import annotations

import statistics
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ProfilerError, ShapeError
from .graph import (
    ConvLayer,
    DenseLayer,
    GapLayer,
    GruLayer,
    ModelGraph,
    MemoryPlan,
    PoolLayer,
    forward_quantized_detailed,
    plan_memory,
)

CLASS_NAMES = ("Normal", "AF", "Other", "Noise")


@dataclass
class LayerOps:
    name: str
    kind: str
    params: int
    ops: int


@dataclass
class ProfileReport:
    layers: list  # LayerOps
    memory: MemoryPlan

    @property
    def total_ops_per_window(self) -> int:
        return sum(l.ops for l in self.layers)

    @property
    def conv_block_ops(self) -> int:
        return sum(l.ops for l in self.layers if l.kind in ("conv", "pool", "gap"))

    @property
    def total_params(self) -> int:
        return sum(l.params for l in self.layers)

    @property
    def flash_bytes(self) -> int:
        return self.memory.flash_bytes

    @property
    def ram_bytes(self) -> int:
        return self.memory.ram_total


def count_ops(graph: ModelGraph) -> ProfileReport:
    """Per-layer and total operation counts for one window, plus the memory plan."""
    layers = []
    length = graph.meta.window_len
    channels = 1
    for layer in graph.layers:
        if isinstance(layer, ConvLayer):
            s = layer.spec
            out_len = s.out_length(length)
            ops = 2 * s.kernel_size * s.in_channels * s.out_channels * out_len
            ops += out_len * s.out_channels
            layers.append(LayerOps(layer.name, "conv", s.param_count, ops))
            length, channels = out_len, s.out_channels
        elif isinstance(layer, PoolLayer):
            layers.append(LayerOps(layer.name, "pool", 0, length * channels // 2))
            length = (length - layer.size) // layer.stride + 1
        elif isinstance(layer, GapLayer):
            layers.append(LayerOps(layer.name, "gap", 0, 0))
            length, channels = 1, channels
        elif isinstance(layer, GruLayer):
            s = layer.spec
            ops = 2 * 3 * (s.input_dim + s.hidden_dim) * s.hidden_dim
            layers.append(LayerOps(layer.name, "gru", s.param_count, ops))
        elif isinstance(layer, DenseLayer):
            s = layer.spec
            ops = 2 * s.in_dim * s.out_dim + s.out_dim
            layers.append(LayerOps(layer.name, "dense", s.param_count, ops))
        else:
            layers.append(LayerOps(layer.name, "softmax", 0, 0))
    return ProfileReport(layers=layers, memory=plan_memory(graph))


def throughput(ops_per_window: float, exec_time_s: float) -> float:
    """Operations per second for one window processed in exec_time_s."""
    if exec_time_s <= 0:
        raise ProfilerError(f"execution time must be positive, got {exec_time_s}")
    return ops_per_window / exec_time_s


def ops_per_cycle(ops_per_window: float, exec_time_s: float, clock_hz: float) -> float:
    if clock_hz <= 0:
        raise ProfilerError(f"clock must be positive, got {clock_hz}")
    return throughput(ops_per_window, exec_time_s) / clock_hz


@dataclass
class PowerFigures:
    current_a: float
    power_w: float
    efficiency_ops_per_s_per_w: float


def power_report(
    v_drop_v: float, r_shunt_ohm: float, v_supply_v: float, throughput_ops_s: float
) -> PowerFigures:
    """Shunt-resistor power arithmetic: I = Vdrop/R, P = Vsupply*I,
    efficiency = throughput/P."""
    if r_shunt_ohm <= 0:
        raise ProfilerError(f"shunt resistance must be positive, got {r_shunt_ohm}")
    current = v_drop_v / r_shunt_ohm
    power = v_supply_v * current
    if power == 0:
        raise ProfilerError("zero power: cannot compute efficiency")
    return PowerFigures(current, power, throughput_ops_s / power)


@dataclass
class PerClass:
    sensitivity: float
    specificity: float
    f1: float


@dataclass
class ClassMetrics:
    per_class: dict  # label -> PerClass
    overall_sensitivity: float
    overall_specificity: float
    overall_f1: float
    accuracy: float


def classification_metrics(predictions, truths, classes=CLASS_NAMES) -> ClassMetrics:
    """One-vs-rest sensitivity/specificity/F1 per class, unweighted overall
    means, and plain accuracy.

    A class absent from the truths has undefined sensitivity (and F1);
    those come back NaN, are excluded from the overall means, and trigger
    a warning.
    """
    predictions = list(predictions)
    truths = list(truths)
    if len(predictions) != len(truths):
        raise ShapeError(
            f"shape error: {len(predictions)} predictions vs {len(truths)} truths"
        )
    if not truths:
        raise ShapeError("shape error: empty label sequences")

    per_class = {}
    for cls in classes:
        tp = sum(p == cls and t == cls for p, t in zip(predictions, truths))
        fn = sum(p != cls and t == cls for p, t in zip(predictions, truths))
        fp = sum(p == cls and t != cls for p, t in zip(predictions, truths))
        tn = len(truths) - tp - fn - fp
        if tp + fn == 0:
            warnings.warn(
                f"class {cls!r} absent from truths: sensitivity/F1 undefined",
                stacklevel=2,
            )
            sens = float("nan")
            f1 = float("nan")
        else:
            sens = tp / (tp + fn)
            precision = tp / (tp + fp) if tp + fp else 0.0
            f1 = (
                2 * precision * sens / (precision + sens)
                if precision + sens
                else 0.0
            )
        spec = tn / (tn + fp) if tn + fp else float("nan")
        per_class[cls] = PerClass(sens, spec, f1)

    def nanmean(vals):
        vals = [v for v in vals if not np.isnan(v)]
        return sum(vals) / len(vals) if vals else float("nan")

    return ClassMetrics(
        per_class=per_class,
        overall_sensitivity=nanmean([m.sensitivity for m in per_class.values()]),
        overall_specificity=nanmean([m.specificity for m in per_class.values()]),
        overall_f1=nanmean([m.f1 for m in per_class.values()]),
        accuracy=sum(p == t for p, t in zip(predictions, truths)) / len(truths),
    )


@dataclass
class BenchStats:
    repetitions: int
    n_windows: int
    per_window_mean_s: float
    per_window_median_s: float
    phase_mean_s: dict = field(default_factory=dict)


def benchmark_host(graph: ModelGraph, windows, repetitions: int = 5) -> BenchStats:
    """Host-side timing of the quantized forward pass.

    Not comparable to MCU timings; reports the per-window average (total
    time over the batch divided by N_w) and the conv/GRU/dense phase split.
    """
    if repetitions < 1:
        raise ProfilerError(f"repetitions must be >= 1, got {repetitions}")
    totals = []
    phases = {}
    n_w = windows.data.shape[0]
    for _ in range(repetitions):
        t0 = time.perf_counter()
        res = forward_quantized_detailed(graph, windows)
        totals.append(time.perf_counter() - t0)
        for k, v in res.phase_seconds.items():
            phases.setdefault(k, []).append(v)
    return BenchStats(
        repetitions=repetitions,
        n_windows=n_w,
        per_window_mean_s=statistics.mean(totals) / n_w,
        per_window_median_s=statistics.median(totals) / n_w,
        phase_mean_s={k: statistics.mean(v) for k, v in phases.items()},
    )
