"""Model graph: architecture definition, validation, serialization, memory
planning and the end-to-end quantized forward pass.

Two binary container formats are defined here, both little-endian with a
CRC32 over the blob payload:

* "FXQ1": quantized graphs, with per-layer type tags, shapes, Q-formats,
  shifts, and integer weight blobs in kernel-ready layout (conv [N][K][C]).
* "FXF1": the float variant (f32 blobs, no formats/shifts) used to hand
  models from a trainer into the quantizer.
"""

from __future__ import annotations

import struct
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import floatref
from .errors import (
    BadMagicError,
    ChecksumError,
    FormatChainError,
    ShapeError,
    TruncatedBlobError,
    VersionMismatchError,
)
from .kernels import (
    ConvSpec,
    DenseSpec,
    GRUSpec,
    QTensor,
    avg_pool,
    conv1d,
    dense,
    global_avg_pool,
    gru_step,
    softmax_pow2,
)
from .qformat import QFormat, ShiftSpec, derive_shifts

CLASS_NAMES = floatref.CLASS_NAMES

FXQ_MAGIC = b"FXQ1"
FXF_MAGIC = b"FXF1"
FORMAT_VERSION = 1

_TAG_CONV, _TAG_POOL, _TAG_GAP, _TAG_GRU, _TAG_DENSE, _TAG_SOFTMAX = range(1, 7)


@dataclass
class ConvLayer:
    name: str
    spec: ConvSpec


@dataclass
class PoolLayer:
    name: str
    size: int = 2
    stride: int = 2


@dataclass
class GapLayer:
    name: str


@dataclass
class GruLayer:
    name: str
    spec: GRUSpec


@dataclass
class DenseLayer:
    name: str
    spec: DenseSpec


@dataclass
class SoftmaxLayer:
    name: str


@dataclass
class GraphMeta:
    window_len: int = 256
    sample_rate_hz: int = 107
    class_names: tuple = CLASS_NAMES
    input_fmt: QFormat = field(default_factory=lambda: QFormat(2, 5))


@dataclass
class ModelGraph:
    layers: list
    meta: GraphMeta = field(default_factory=GraphMeta)

    def param_count(self) -> int:
        return sum(n for _, n in self.parameter_counts())

    def parameter_counts(self) -> list:
        """(layer name, parameter count) pairs, in graph order."""
        out = []
        for layer in self.layers:
            if isinstance(layer, (ConvLayer, GruLayer, DenseLayer)):
                out.append((layer.name, layer.spec.param_count))
            else:
                out.append((layer.name, 0))
        return out


@dataclass
class Diagnostic:
    severity: str  # error | info
    layer: str
    message: str


@dataclass
class MemoryPlan:
    flash_bytes: int
    ram_buffers: list  # (name, bytes)

    @property
    def ram_total(self) -> int:
        return sum(b for _, b in self.ram_buffers)

    @property
    def activation_bytes(self) -> int:
        return max(b for n, b in self.ram_buffers if n.startswith("activations"))

    @property
    def gru_bytes(self) -> int:
        return sum(b for n, b in self.ram_buffers if n.startswith("gru"))


def build_canonical_model(rng: np.random.Generator = None) -> ModelGraph:
    """The 7-conv / GRU(128->64) / dense(64->4) reference network.

    Kernel size 5, channels 8..128 (multiples of 8), average pooling 2/2
    after every convolution, global average pooling, base-2 softmax head.
    Weights and activations are Q2.5@8; GRU gates and state are Q2.13@16.
    Weight content is zero unless an ``rng`` is given (then raw values are
    drawn uniformly over the representable range).
    """
    q2_5 = QFormat(2, 5)
    q2_13 = QFormat(2, 13)
    logit_fmt = QFormat(4, 11)

    def draw(fmt, *shape):
        if rng is None:
            return np.zeros(shape, dtype=np.int32)
        return rng.integers(fmt.raw_min, fmt.raw_max + 1, size=shape, dtype=np.int32)

    layers = []
    channels = [1, 8, 16, 32, 64, 64, 128, 128]
    for i in range(7):
        c, n = channels[i], channels[i + 1]
        spec = ConvSpec(
            kernel_size=5,
            in_channels=c,
            out_channels=n,
            weights=draw(q2_5, n, 5, c),
            bias=draw(q2_5, n),
            weight_fmt=q2_5,
            bias_fmt=q2_5,
            in_fmt=q2_5,
            out_fmt=q2_5,
            shifts=derive_shifts(q2_5, q2_5, q2_5, q2_5),
        )
        layers.append(ConvLayer(f"conv{i + 1}", spec))
        layers.append(PoolLayer(f"pool{i + 1}"))
    layers.append(GapLayer("gap"))
    layers.append(
        GruLayer(
            "gru",
            GRUSpec(
                input_dim=128,
                hidden_dim=64,
                kernel=draw(q2_5, 3, 64, 128),
                recurrent=draw(q2_5, 3, 64, 64),
                bias=draw(q2_13, 3, 64),
                kernel_fmt=q2_5,
                recurrent_fmt=q2_5,
                bias_fmt=q2_13,
                in_fmt=q2_5,
                gate_fmt=q2_13,
                state_fmt=q2_13,
            ),
        )
    )
    layers.append(
        DenseLayer(
            "dense",
            DenseSpec(
                in_dim=64,
                out_dim=4,
                weights=draw(q2_5, 4, 64),
                bias=draw(q2_5, 4),
                weight_fmt=q2_5,
                bias_fmt=q2_5,
                in_fmt=q2_13,
                out_fmt=logit_fmt,
                shifts=derive_shifts(q2_13, q2_5, q2_5, logit_fmt),
            ),
        )
    )
    layers.append(SoftmaxLayer("softmax"))
    return ModelGraph(layers=layers, meta=GraphMeta())


def validate(graph: ModelGraph) -> list:
    """Structural diagnostics: shape chain, format chain, shift consistency,
    fast-conv eligibility and per-layer parameter counts. Never raises;
    severity "error" entries mean the graph cannot run.
    """
    diags = []
    shape = (graph.meta.window_len, 1)
    fmt = graph.meta.input_fmt

    def err(layer, msg):
        diags.append(Diagnostic("error", layer, msg))

    def info(layer, msg):
        diags.append(Diagnostic("info", layer, msg))

    for layer in graph.layers:
        if isinstance(layer, ConvLayer):
            s = layer.spec
            if len(shape) != 2 or shape[1] != s.in_channels:
                err(layer.name, f"shape chain break: input {shape}, expects (*, {s.in_channels})")
            if fmt != s.in_fmt:
                err(layer.name, f"format chain break: input {fmt}, layer expects {s.in_fmt}")
            try:
                want = derive_shifts(s.in_fmt, s.weight_fmt, s.bias_fmt, s.out_fmt)
                if want != s.shifts:
                    err(layer.name, f"shift mismatch: stored {s.shifts}, derived {want}")
            except FormatChainError as e:
                err(layer.name, str(e))
            info(
                layer.name,
                "fast-conv eligible" if s.fast_eligible else "not fast-conv eligible "
                "(needs in channels % 4 == 0 and out channels % 2 == 0)",
            )
            shape = (s.out_length(shape[0]), s.out_channels)
            fmt = s.out_fmt
        elif isinstance(layer, PoolLayer):
            if len(shape) != 2:
                err(layer.name, f"shape chain break: pooling over {shape}")
            else:
                if shape[0] % layer.size:
                    info(layer.name, f"odd input length {shape[0]}: trailing sample dropped")
                shape = ((shape[0] - layer.size) // layer.stride + 1, shape[1])
        elif isinstance(layer, GapLayer):
            if len(shape) != 2:
                err(layer.name, f"shape chain break: global pooling over {shape}")
            else:
                shape = (shape[1],)
        elif isinstance(layer, GruLayer):
            s = layer.spec
            if shape != (s.input_dim,):
                err(layer.name, f"shape chain break: input {shape}, expects ({s.input_dim},)")
            if fmt != s.in_fmt:
                err(layer.name, f"format chain break: input {fmt}, layer expects {s.in_fmt}")
            shape = (s.hidden_dim,)
            fmt = s.state_fmt
        elif isinstance(layer, DenseLayer):
            s = layer.spec
            if shape != (s.in_dim,):
                err(layer.name, f"shape chain break: input {shape}, expects ({s.in_dim},)")
            if fmt != s.in_fmt:
                err(layer.name, f"format chain break: input {fmt}, layer expects {s.in_fmt}")
            try:
                want = derive_shifts(s.in_fmt, s.weight_fmt, s.bias_fmt, s.out_fmt)
                if want != s.shifts:
                    err(layer.name, f"shift mismatch: stored {s.shifts}, derived {want}")
            except FormatChainError as e:
                err(layer.name, str(e))
            shape = (s.out_dim,)
            fmt = s.out_fmt
        elif isinstance(layer, SoftmaxLayer):
            pass

    for name, count in graph.parameter_counts():
        info(name, f"parameters: {count}")
    info("total", f"parameters: {graph.param_count()}")
    return diags


def validation_errors(graph: ModelGraph) -> list:
    return [d for d in validate(graph) if d.severity == "error"]


def activation_shapes(graph: ModelGraph) -> list:
    """(layer name, output shape) along the conv part plus vector stages."""
    shape = (graph.meta.window_len, 1)
    out = [("input", shape)]
    for layer in graph.layers:
        if isinstance(layer, ConvLayer):
            shape = (layer.spec.out_length(shape[0]), layer.spec.out_channels)
        elif isinstance(layer, PoolLayer):
            shape = ((shape[0] - layer.size) // layer.stride + 1, shape[1])
        elif isinstance(layer, GapLayer):
            shape = (shape[1],)
        elif isinstance(layer, GruLayer):
            shape = (layer.spec.hidden_dim,)
        elif isinstance(layer, DenseLayer):
            shape = (layer.spec.out_dim,)
        else:
            continue
        out.append((layer.name, shape))
    return out


def plan_memory(graph: ModelGraph) -> MemoryPlan:
    """Flash (weights + biases + LUTs) and a CMSIS-style RAM plan: two
    ping-pong activation arrays sized to the largest layer output, an
    im2col scratch for the widest convolution, and the GRU working set.
    """
    flash = 0
    for layer in graph.layers:
        if isinstance(layer, ConvLayer):
            s = layer.spec
            flash += s.weights.size * s.weight_fmt.storage_bytes
            flash += s.bias.size * s.bias_fmt.storage_bytes
        elif isinstance(layer, DenseLayer):
            s = layer.spec
            flash += s.weights.size * s.weight_fmt.storage_bytes
            flash += s.bias.size * s.bias_fmt.storage_bytes
        elif isinstance(layer, GruLayer):
            s = layer.spec
            flash += s.kernel.size * s.kernel_fmt.storage_bytes
            flash += s.recurrent.size * s.recurrent_fmt.storage_bytes
            flash += s.bias.size * s.bias_fmt.storage_bytes
            # one sigmoid and one tanh table per gate format
            flash += 2 * 256 * s.gate_fmt.storage_bytes

    act_bytes = 0
    fmt = graph.meta.input_fmt
    shape = (graph.meta.window_len, 1)
    for layer in graph.layers:
        if isinstance(layer, ConvLayer):
            shape = (layer.spec.out_length(shape[0]), layer.spec.out_channels)
            fmt = layer.spec.out_fmt
        elif isinstance(layer, PoolLayer):
            shape = ((shape[0] - layer.size) // layer.stride + 1, shape[1])
        elif isinstance(layer, GapLayer):
            shape = (shape[1],)
        else:
            break
        act_bytes = max(act_bytes, int(np.prod(shape)) * fmt.storage_bytes)

    buffers = []
    if act_bytes:
        buffers.append(("activations_a", act_bytes))
        buffers.append(("activations_b", act_bytes))
    scratch = max(
        (2 * l.spec.kernel_size * l.spec.in_channels * 2 for l in graph.layers
         if isinstance(l, ConvLayer)),
        default=0,
    )
    if scratch:
        buffers.append(("conv_im2col", scratch))
    for layer in graph.layers:
        if isinstance(layer, GruLayer):
            s = layer.spec
            buffers.append(("gru_gates", 3 * s.hidden_dim * s.gate_fmt.storage_bytes))
            buffers.append(("gru_state", s.hidden_dim * s.state_fmt.storage_bytes))
            buffers.append(("gru_scratch", 2 * s.hidden_dim * s.state_fmt.storage_bytes))
    return MemoryPlan(flash_bytes=flash, ram_buffers=buffers)


@dataclass
class QuantForwardResult:
    probs: np.ndarray
    taps: dict = field(default_factory=dict)
    conv_evals: int = 0
    gru_steps: int = 0
    phase_seconds: dict = field(default_factory=dict)


def quantize_windows(graph: ModelGraph, windows: np.ndarray) -> QTensor:
    """Quantize real-valued (N_w, window_len) windows to the graph input format."""
    return QTensor.from_real(np.atleast_2d(windows), graph.meta.input_fmt)


def forward_quantized_detailed(graph: ModelGraph, windows: QTensor) -> QuantForwardResult:
    if windows.data.ndim != 2 or windows.data.shape[1] != graph.meta.window_len:
        raise ShapeError(
            f"shape error: windows {windows.data.shape}, expected (*, {graph.meta.window_len})"
        )
    if windows.fmt != graph.meta.input_fmt:
        raise ShapeError(
            f"shape error: windows quantized as {windows.fmt}, graph expects {graph.meta.input_fmt}"
        )
    result = QuantForwardResult(probs=None)

    conv_part = []
    i = 0
    for layer in graph.layers:
        if not isinstance(layer, (ConvLayer, PoolLayer, GapLayer)):
            break
        conv_part.append(layer)
        i += 1
    rest = graph.layers[i:]

    per_window = {}
    features = []
    t0 = time.perf_counter()
    for row in windows.data:
        x = QTensor(row[:, None], windows.fmt)
        for layer in conv_part:
            if isinstance(layer, ConvLayer):
                x = conv1d(x, layer.spec)
            elif isinstance(layer, PoolLayer):
                x = avg_pool(x, layer.size, layer.stride)
                per_window.setdefault(layer.name, []).append(x.data)
            else:
                x = global_avg_pool(x)
                per_window.setdefault(layer.name, []).append(x.data)
        features.append(x)
    result.conv_evals = len(features)
    for name, vals in per_window.items():
        result.taps[name] = np.stack(vals)
    t1 = time.perf_counter()

    h = features[-1]
    for layer in rest:
        if isinstance(layer, GruLayer):
            s = layer.spec
            h = QTensor(np.zeros(s.hidden_dim, dtype=np.int32), s.state_fmt)
            for x in features:
                h = gru_step(h, x, s)
                result.gru_steps += 1
            result.taps[layer.name] = h.data.copy()
    t2 = time.perf_counter()
    probs = None
    for layer in rest:
        if isinstance(layer, DenseLayer):
            h = dense(h, layer.spec)
            result.taps[layer.name] = h.data.copy()
        elif isinstance(layer, SoftmaxLayer):
            probs = softmax_pow2(h)
    t3 = time.perf_counter()
    result.probs = softmax_pow2(h) if probs is None else probs
    result.phase_seconds = {"conv": t1 - t0, "gru": t2 - t1, "dense": t3 - t2}
    return result


def forward_quantized(graph: ModelGraph, windows: QTensor) -> np.ndarray:
    """Run the full quantized network over a window batch; returns the
    4-class probability vector from the base-2 softmax head."""
    return forward_quantized_detailed(graph, windows).probs


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


class _Writer:
    def __init__(self):
        self.head = bytearray()
        self.payload = bytearray()

    def pack(self, fmt, *vals):
        self.head += struct.pack("<" + fmt, *vals)

    def string(self, s: str):
        raw = s.encode("utf-8")
        if len(raw) > 255:
            raise ValueError(f"name too long: {s!r}")
        self.pack("B", len(raw))
        self.head += raw

    def fmt(self, f: QFormat):
        self.pack("BB", f.int_bits, f.frac_bits)

    def blob(self, arr: np.ndarray, dtype: str):
        data = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        self.pack("II", len(self.payload), len(data))
        self.payload += data

    def int_blob(self, arr: np.ndarray, f: QFormat):
        self.blob(arr, {1: "<i1", 2: "<i2", 4: "<i4"}[f.storage_bytes])

    def finish(self) -> bytes:
        return (
            bytes(self.head)
            + struct.pack("<I", len(self.payload))
            + bytes(self.payload)
            + struct.pack("<I", zlib.crc32(bytes(self.payload)) & 0xFFFFFFFF)
        )


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedBlobError(
                f"truncated blob: need {n} bytes at offset {self.pos}, have {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        vals = struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))
        return vals if len(vals) > 1 else vals[0]

    def string(self) -> str:
        return self.take(self.unpack("B")).decode("utf-8")

    def fmt(self) -> QFormat:
        n, m = self.unpack("BB")
        return QFormat(n, m)


def _blob_array(payload: bytes, off: int, length: int, dtype: str, shape) -> np.ndarray:
    if off + length > len(payload):
        raise TruncatedBlobError(
            f"truncated blob: extent {off}+{length} exceeds payload {len(payload)}"
        )
    arr = np.frombuffer(payload[off : off + length], dtype=dtype)
    return arr.reshape(shape).astype(np.int32 if dtype.startswith("<i") else np.float64)


def serialize(graph: ModelGraph) -> bytes:
    """Encode a quantized graph into the FXQ1 container (bit-exact round trip)."""
    w = _Writer()
    w.head += FXQ_MAGIC
    w.pack("HH", FORMAT_VERSION, len(graph.layers))
    w.pack("HH", graph.meta.window_len, graph.meta.sample_rate_hz)
    w.pack("B", len(graph.meta.class_names))
    for c in graph.meta.class_names:
        w.string(c)
    w.fmt(graph.meta.input_fmt)

    for layer in graph.layers:
        if isinstance(layer, ConvLayer):
            s = layer.spec
            w.pack("B", _TAG_CONV)
            w.string(layer.name)
            w.pack("HHHB", s.kernel_size, s.in_channels, s.out_channels, s.stride)
            w.pack("BB", ("same", "valid").index(s.padding), ("relu", "linear").index(s.activation))
            for f in (s.weight_fmt, s.bias_fmt, s.in_fmt, s.out_fmt):
                w.fmt(f)
            w.pack("BB", s.shifts.bias_left_shift, s.shifts.out_right_shift)
            w.int_blob(s.weights, s.weight_fmt)
            w.int_blob(s.bias, s.bias_fmt)
        elif isinstance(layer, PoolLayer):
            w.pack("B", _TAG_POOL)
            w.string(layer.name)
            w.pack("BB", layer.size, layer.stride)
        elif isinstance(layer, GapLayer):
            w.pack("B", _TAG_GAP)
            w.string(layer.name)
        elif isinstance(layer, GruLayer):
            s = layer.spec
            w.pack("B", _TAG_GRU)
            w.string(layer.name)
            w.pack("HH", s.input_dim, s.hidden_dim)
            for f in (s.kernel_fmt, s.recurrent_fmt, s.bias_fmt, s.in_fmt, s.gate_fmt, s.state_fmt):
                w.fmt(f)
            w.int_blob(s.kernel, s.kernel_fmt)
            w.int_blob(s.recurrent, s.recurrent_fmt)
            w.int_blob(s.bias, s.bias_fmt)
        elif isinstance(layer, DenseLayer):
            s = layer.spec
            w.pack("B", _TAG_DENSE)
            w.string(layer.name)
            w.pack("HH", s.in_dim, s.out_dim)
            for f in (s.weight_fmt, s.bias_fmt, s.in_fmt, s.out_fmt):
                w.fmt(f)
            w.pack("BB", s.shifts.bias_left_shift, s.shifts.out_right_shift)
            w.int_blob(s.weights, s.weight_fmt)
            w.int_blob(s.bias, s.bias_fmt)
        elif isinstance(layer, SoftmaxLayer):
            w.pack("B", _TAG_SOFTMAX)
            w.string(layer.name)
        else:
            raise ValueError(f"unknown layer {layer!r}")
    return w.finish()


def _check_payload(r: _Reader) -> bytes:
    payload_len = r.unpack("I")
    payload = r.take(payload_len)
    crc = r.unpack("I")
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumError("checksum failure: payload CRC32 mismatch")
    return payload


def deserialize(data: bytes) -> ModelGraph:
    r = _Reader(data)
    if r.take(4) != FXQ_MAGIC:
        raise BadMagicError("bad magic: not an FXQ1 model file")
    version, n_layers = r.unpack("HH")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"version mismatch: file v{version}, supported v{FORMAT_VERSION}")
    window_len, sample_rate = r.unpack("HH")
    classes = tuple(r.string() for _ in range(r.unpack("B")))
    input_fmt = r.fmt()

    pending = []  # (builder, blob refs) resolved after the payload is read
    layers = []
    for _ in range(n_layers):
        tag = r.unpack("B")
        name = r.string()
        if tag == _TAG_CONV:
            k, c, n, stride = r.unpack("HHHB")
            padding, activation = r.unpack("BB")
            wf, bf, inf, outf = (r.fmt() for _ in range(4))
            b_left, o_right = r.unpack("BB")
            refs = [r.unpack("II"), r.unpack("II")]
            idx = len(layers)
            layers.append(None)

            def make_conv(payload, idx=idx, name=name, k=k, c=c, n=n, stride=stride,
                          padding=padding, activation=activation, wf=wf, bf=bf,
                          inf=inf, outf=outf, b_left=b_left, o_right=o_right, refs=refs):
                weights = _blob_array(payload, *refs[0], f"<i{wf.storage_bytes}", (n, k, c))
                bias = _blob_array(payload, *refs[1], f"<i{bf.storage_bytes}", (n,))
                layers[idx] = ConvLayer(name, ConvSpec(
                    kernel_size=k, in_channels=c, out_channels=n,
                    weights=weights, bias=bias, weight_fmt=wf, bias_fmt=bf,
                    in_fmt=inf, out_fmt=outf, shifts=ShiftSpec(b_left, o_right),
                    stride=stride, padding=("same", "valid")[padding],
                    activation=("relu", "linear")[activation]))

            pending.append(make_conv)
        elif tag == _TAG_POOL:
            size, stride = r.unpack("BB")
            layers.append(PoolLayer(name, size, stride))
        elif tag == _TAG_GAP:
            layers.append(GapLayer(name))
        elif tag == _TAG_GRU:
            m, h = r.unpack("HH")
            kf, rf, bf, inf, gf, sf = (r.fmt() for _ in range(6))
            refs = [r.unpack("II"), r.unpack("II"), r.unpack("II")]
            idx = len(layers)
            layers.append(None)

            def make_gru(payload, idx=idx, name=name, m=m, h=h, kf=kf, rf=rf,
                         bf=bf, inf=inf, gf=gf, sf=sf, refs=refs):
                kernel = _blob_array(payload, *refs[0], f"<i{kf.storage_bytes}", (3, h, m))
                recurrent = _blob_array(payload, *refs[1], f"<i{rf.storage_bytes}", (3, h, h))
                bias = _blob_array(payload, *refs[2], f"<i{bf.storage_bytes}", (3, h))
                layers[idx] = GruLayer(name, GRUSpec(
                    input_dim=m, hidden_dim=h, kernel=kernel, recurrent=recurrent,
                    bias=bias, kernel_fmt=kf, recurrent_fmt=rf, bias_fmt=bf,
                    in_fmt=inf, gate_fmt=gf, state_fmt=sf))

            pending.append(make_gru)
        elif tag == _TAG_DENSE:
            m, n = r.unpack("HH")
            wf, bf, inf, outf = (r.fmt() for _ in range(4))
            b_left, o_right = r.unpack("BB")
            refs = [r.unpack("II"), r.unpack("II")]
            idx = len(layers)
            layers.append(None)

            def make_dense(payload, idx=idx, name=name, m=m, n=n, wf=wf, bf=bf,
                           inf=inf, outf=outf, b_left=b_left, o_right=o_right, refs=refs):
                weights = _blob_array(payload, *refs[0], f"<i{wf.storage_bytes}", (n, m))
                bias = _blob_array(payload, *refs[1], f"<i{bf.storage_bytes}", (n,))
                layers[idx] = DenseLayer(name, DenseSpec(
                    in_dim=m, out_dim=n, weights=weights, bias=bias,
                    weight_fmt=wf, bias_fmt=bf, in_fmt=inf, out_fmt=outf,
                    shifts=ShiftSpec(b_left, o_right)))

            pending.append(make_dense)
        elif tag == _TAG_SOFTMAX:
            layers.append(SoftmaxLayer(name))
        else:
            raise BadMagicError(f"bad magic: unknown layer tag {tag}")

    payload = _check_payload(r)
    for fill in pending:
        fill(payload)
    meta = GraphMeta(window_len, sample_rate, classes, input_fmt)
    return ModelGraph(layers=layers, meta=meta)


def serialize_float(model: floatref.FloatModel) -> bytes:
    """Encode a float model into the FXF1 container (f32 blobs)."""
    w = _Writer()
    w.head += FXF_MAGIC
    w.pack("HH", FORMAT_VERSION, len(model.layers))
    w.pack("H", model.window_len)
    w.pack("B", len(model.class_names))
    for c in model.class_names:
        w.string(c)

    for layer in model.layers:
        if isinstance(layer, floatref.FloatConv):
            w.pack("B", _TAG_CONV)
            w.string(layer.name)
            w.pack("HHHB", layer.kernel_size, layer.in_channels, layer.out_channels, layer.stride)
            w.pack("BB", ("same", "valid").index(layer.padding),
                   ("relu", "linear").index(layer.activation))
            w.blob(layer.weights, "<f4")
            w.blob(layer.bias, "<f4")
        elif isinstance(layer, floatref.FloatPool):
            w.pack("B", _TAG_POOL)
            w.string(layer.name)
            w.pack("BB", layer.size, layer.stride)
        elif isinstance(layer, floatref.FloatGap):
            w.pack("B", _TAG_GAP)
            w.string(layer.name)
        elif isinstance(layer, floatref.FloatGRU):
            w.pack("B", _TAG_GRU)
            w.string(layer.name)
            w.pack("HH", layer.input_dim, layer.hidden_dim)
            w.blob(layer.kernel, "<f4")
            w.blob(layer.recurrent, "<f4")
            w.blob(layer.bias, "<f4")
        elif isinstance(layer, floatref.FloatDense):
            w.pack("B", _TAG_DENSE)
            w.string(layer.name)
            w.pack("HH", layer.in_dim, layer.out_dim)
            w.blob(layer.weights, "<f4")
            w.blob(layer.bias, "<f4")
        elif isinstance(layer, floatref.FloatSoftmax):
            w.pack("B", _TAG_SOFTMAX)
            w.string(layer.name)
        else:
            raise ValueError(f"unknown layer {layer!r}")
    return w.finish()


def deserialize_float(data: bytes) -> floatref.FloatModel:
    r = _Reader(data)
    if r.take(4) != FXF_MAGIC:
        raise BadMagicError("bad magic: not an FXF1 model file")
    version, n_layers = r.unpack("HH")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"version mismatch: file v{version}, supported v{FORMAT_VERSION}")
    window_len = r.unpack("H")
    classes = tuple(r.string() for _ in range(r.unpack("B")))

    pending = []
    layers = []
    for _ in range(n_layers):
        tag = r.unpack("B")
        name = r.string()
        if tag == _TAG_CONV:
            k, c, n, stride = r.unpack("HHHB")
            padding, activation = r.unpack("BB")
            refs = [r.unpack("II"), r.unpack("II")]
            idx = len(layers)
            layers.append(None)

            def make_conv(payload, idx=idx, name=name, k=k, c=c, n=n, stride=stride,
                          padding=padding, activation=activation, refs=refs):
                layers[idx] = floatref.FloatConv(
                    name, k, c, n,
                    _blob_array(payload, *refs[0], "<f4", (n, k, c)),
                    _blob_array(payload, *refs[1], "<f4", (n,)),
                    stride=stride, padding=("same", "valid")[padding],
                    activation=("relu", "linear")[activation])

            pending.append(make_conv)
        elif tag == _TAG_POOL:
            size, stride = r.unpack("BB")
            layers.append(floatref.FloatPool(name, size, stride))
        elif tag == _TAG_GAP:
            layers.append(floatref.FloatGap(name))
        elif tag == _TAG_GRU:
            m, h = r.unpack("HH")
            refs = [r.unpack("II"), r.unpack("II"), r.unpack("II")]
            idx = len(layers)
            layers.append(None)

            def make_gru(payload, idx=idx, name=name, m=m, h=h, refs=refs):
                layers[idx] = floatref.FloatGRU(
                    name, m, h,
                    _blob_array(payload, *refs[0], "<f4", (3, h, m)),
                    _blob_array(payload, *refs[1], "<f4", (3, h, h)),
                    _blob_array(payload, *refs[2], "<f4", (3, h)))

            pending.append(make_gru)
        elif tag == _TAG_DENSE:
            m, n = r.unpack("HH")
            refs = [r.unpack("II"), r.unpack("II")]
            idx = len(layers)
            layers.append(None)

            def make_dense(payload, idx=idx, name=name, m=m, n=n, refs=refs):
                layers[idx] = floatref.FloatDense(
                    name, m, n,
                    _blob_array(payload, *refs[0], "<f4", (n, m)),
                    _blob_array(payload, *refs[1], "<f4", (n,)))

            pending.append(make_dense)
        elif tag == _TAG_SOFTMAX:
            layers.append(floatref.FloatSoftmax(name))
        else:
            raise BadMagicError(f"bad magic: unknown layer tag {tag}")

    payload = _check_payload(r)
    for fill in pending:
        fill(payload)
    return floatref.FloatModel(layers=layers, window_len=window_len, class_names=classes)


def save(graph_or_model, path) -> None:
    data = serialize(graph_or_model) if isinstance(graph_or_model, ModelGraph) \
        else serialize_float(graph_or_model)
    with open(path, "wb") as fh:
        fh.write(data)


def load(path):
    """Load either container by magic; returns ModelGraph or FloatModel."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == FXQ_MAGIC:
        return deserialize(data)
    if data[:4] == FXF_MAGIC:
        return deserialize_float(data)
    raise BadMagicError("bad magic: neither FXQ1 nor FXF1")
