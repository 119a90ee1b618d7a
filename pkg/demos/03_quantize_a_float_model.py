#!/usr/bin/env python3
"""Post-training quantization, start to finish.

Takes a float model, picks per-tensor formats with the 3-sigma rule,
calibrates activation formats on sample data, derives every layer's
shifts, and cross-checks the resulting fixed-point engine against the
fake-quantized float reference.
"""

import numpy as np

from fxpnn.floatref import build_canonical_float, forward_float, simulate_quantization
from fxpnn.graph import forward_quantized, quantize_windows, validation_errors
from fxpnn.quantizer import format_report, make_scheme, quantize_model

rng = np.random.default_rng(3)
model = build_canonical_float(rng, weight_scale=1.0, fan_in_scaled=True)
calibration = rng.normal(size=(8, 256))

scheme = make_scheme(model, calibration=calibration)
print(format_report(scheme))

g = quantize_model(model, scheme=scheme)
errors = validation_errors(g)
print(f"\nvalidation errors: {len(errors)}")

# the float model with weights snapped to their grids and fake-quantize
# nodes after each conv+pool pair predicts what the integer engine does
fq_model = simulate_quantization(model, scheme)

agree = 0
trials = 50
for i in range(trials):
    w = np.random.default_rng(100 + i).normal(size=(2, 256))
    p_float = forward_float(fq_model, w)
    p_fixed = forward_quantized(g, quantize_windows(g, w))
    agree += int(np.argmax(p_float) == np.argmax(p_fixed))
print(f"argmax agreement between float sim and integer engine: {agree}/{trials}")
