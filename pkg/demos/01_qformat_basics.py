#!/usr/bin/env python3
"""Tour of the Q-format fixed-point core.

A Qn.m number keeps n integer bits, m fractional bits and one sign bit;
the stored integer ("raw") is the real value scaled by 2^m, rounded, and
clipped to the representable range.
"""

import numpy as np

from fxpnn.qformat import (
    QFormat,
    dequantize,
    derive_shifts,
    product_format,
    quantize,
    quantize_array,
)

q2_5 = QFormat.parse("Q2.5@8")
print(f"{q2_5}: raw range [{q2_5.raw_min}, {q2_5.raw_max}], "
      f"real range [{q2_5.real_min}, {q2_5.real_max}], step {q2_5.resolution}")

# Quantization rounds to the nearest grid point and saturates at the rails
for v in (0.5, 0.03, 1.0 / 3.0, 5.0, -4.2):
    q = quantize(v, q2_5)
    print(f"  {v:>9.5f} -> raw {q.raw:>5} -> {dequantize(q):.5f}")

# The whole-array path is what the quantizer uses on weight tensors
vals = np.random.default_rng(0).normal(0, 1, 8)
print("\nvector quantize:", quantize_array(vals, q2_5))

# Multiplying a Qa.b by a Qx.y value lands in Q(a+x).(b+y): the layer
# accumulator. Biases are left-shifted up to it and the result is
# right-shifted down to the next layer's input format.
acc = product_format(q2_5, q2_5)
print(f"\n{q2_5} x {q2_5} -> {acc} accumulator")
shifts = derive_shifts(q2_5, q2_5, q2_5, q2_5)
print(f"bias left shift {shifts.bias_left_shift}, "
      f"output right shift {shifts.out_right_shift}")

# Worked example: 0.75 * 0.5 + 0.25 in pure integer arithmetic
x, w, b = quantize(0.75, q2_5), quantize(0.5, q2_5), quantize(0.25, q2_5)
acc_raw = x.raw * w.raw + (b.raw << shifts.bias_left_shift)
out_raw = (acc_raw + (1 << shifts.out_right_shift - 1)) >> shifts.out_right_shift
print(f"0.75*0.5 + 0.25 = {out_raw / q2_5.scale} (exact: {0.75 * 0.5 + 0.25})")
