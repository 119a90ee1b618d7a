#!/usr/bin/env python3
"""Cost model: operation counts, throughput and power arithmetic.

Reproduces the published accounting for the reference network: per-layer
operation counts per window, the 33.98 MOps/s throughput implied by a
94.8 ms window time, 0.531 Ops/cycle at 64 MHz, and the shunt-resistor
power figures (4.13 mA, 20.65 mW, 1.64 GOps/s/W).
"""

import numpy as np

from fxpnn.graph import build_canonical_model, quantize_windows
from fxpnn.profiler import (
    benchmark_host,
    count_ops,
    ops_per_cycle,
    power_report,
    throughput,
)

g = build_canonical_model(rng=np.random.default_rng(0))
rep = count_ops(g)

print(f"{'layer':<10} {'kind':<8} {'ops/window':>12}")
for l in rep.layers:
    print(f"{l.name:<10} {l.kind:<8} {l.ops:>12,}")
print(f"{'conv block':<19} {rep.conv_block_ops:>12,}")
print(f"{'total':<19} {rep.total_ops_per_window:>12,}  "
      f"({rep.total_ops_per_window / 1e6:.3f} MOps)")

# MCU-measured numbers: 94.8 ms per window on a 64 MHz Cortex-M4
exec_s = 0.0948
tput = throughput(rep.total_ops_per_window, exec_s)
print(f"\nthroughput at {exec_s * 1e3:.1f} ms/window: {tput / 1e6:.2f} MOps/s")
print(f"ops per cycle at 64 MHz: {ops_per_cycle(rep.total_ops_per_window, exec_s, 64e6):.3f}")

fig = power_report(v_drop_v=0.13625, r_shunt_ohm=33.0, v_supply_v=5.0,
                   throughput_ops_s=tput)
print(f"current {fig.current_a * 1e3:.2f} mA, power {fig.power_w * 1e3:.2f} mW, "
      f"efficiency {fig.efficiency_ops_per_s_per_w / 1e9:.2f} GOps/s/W")

# host-side timing is not MCU-comparable, but the conv/GRU split is
windows = quantize_windows(g, np.random.default_rng(1).normal(size=(4, 256)))
stats = benchmark_host(g, windows, repetitions=5)
print(f"\nhost: {stats.per_window_median_s * 1e3:.2f} ms/window (median of "
      f"{stats.repetitions} runs), phases: "
      + ", ".join(f"{k}={v * 1e3:.2f} ms" for k, v in stats.phase_mean_s.items()))
