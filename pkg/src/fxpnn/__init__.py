"""Fixed-point inference engine and quantization toolchain for a 1-D
convolutional-recurrent ECG arrhythmia classifier."""

from .qformat import QFormat, QValue, ShiftSpec, dequantize, derive_shifts, product_format, quantize
from .kernels import QTensor
from .graph import ModelGraph, build_canonical_model, forward_quantized, plan_memory, validate
from .floatref import FloatModel, build_canonical_float, forward_float, simulate_quantization
from .quantizer import QuantPolicy, QuantScheme, quantize_model, select_format
from .ecg import SignalRecord, WindowBatch, bandpass, make_windows, normalize, preprocess, resample
from .profiler import classification_metrics, count_ops, power_report, throughput

__version__ = "0.1.0"

__all__ = [
    "QFormat", "QValue", "ShiftSpec", "QTensor",
    "quantize", "dequantize", "product_format", "derive_shifts",
    "ModelGraph", "build_canonical_model", "forward_quantized", "plan_memory", "validate",
    "FloatModel", "build_canonical_float", "forward_float", "simulate_quantization",
    "QuantPolicy", "QuantScheme", "quantize_model", "select_format",
    "SignalRecord", "WindowBatch", "bandpass", "resample", "normalize",
    "make_windows", "preprocess",
    "classification_metrics", "count_ops", "throughput", "power_report",
    "__version__",
]
