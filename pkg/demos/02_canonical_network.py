#!/usr/bin/env python3
"""Build the reference network and inspect its structure.

Seven K=5 convolutions (channels 8..128, each followed by 2/2 average
pooling), global average pooling, a 64-unit GRU and a 4-class dense head
with base-2 softmax: 194,596 parameters that fit comfortably in a small
MCU's flash.
"""

import numpy as np

from fxpnn.graph import (
    activation_shapes,
    build_canonical_model,
    forward_quantized,
    plan_memory,
    quantize_windows,
    validate,
)

g = build_canonical_model(rng=np.random.default_rng(7))

print(f"{'layer':<10} {'params':>8}   output shape")
shapes = dict(activation_shapes(g))
for name, count in g.parameter_counts():
    print(f"{name:<10} {count:>8,}   {shapes.get(name, '-')}")
print(f"{'total':<10} {g.param_count():>8,}")

print("\nvalidation:")
for d in validate(g):
    if d.severity == "error" or "fast-conv" in d.message:
        print(f"  [{d.severity}] {d.layer}: {d.message}")

plan = plan_memory(g)
print(f"\nflash: {plan.flash_bytes:,} B ({plan.flash_bytes / 1000:.1f} KB)")
for name, size in plan.ram_buffers:
    print(f"  RAM {name:<16} {size:>6,} B")
print(f"  RAM total          {plan.ram_total:>6,} B")

# run a 4-window batch end to end (4 GRU steps, one probability vector)
windows = np.random.default_rng(1).normal(size=(4, 256))
probs = forward_quantized(g, quantize_windows(g, windows))
for cls, p in zip(g.meta.class_names, probs):
    print(f"  P({cls:<7}) = {p:.4f}")
