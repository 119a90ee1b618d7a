"""Independent brute-force references for the quantized kernels.

Everything here is deliberately written as scalar Python loops over plain
ints (arbitrary precision), sharing no code path with the numpy kernels it
checks. The documented arithmetic contract (widened accumulation, bias
left shift, rounding output right shift, single clip on write) is
re-derived from scratch.
"""

import math


def rshift_round_int(x: int, s: int) -> int:
    if s == 0:
        return x
    return (x + (1 << (s - 1))) >> s


def clamp(v: int, fmt) -> int:
    return min(max(v, fmt.raw_min), fmt.raw_max)


def naive_conv1d(x_rows, spec):
    """x_rows: list of [C] raw ints per sample. Returns list of [N] rows."""
    length = len(x_rows)
    k, c_in, n_out = spec.kernel_size, spec.in_channels, spec.out_channels
    if spec.padding == "same":
        out_len = math.ceil(length / spec.stride)
        total = max(0, (out_len - 1) * spec.stride + k - length)
        pad_l = total // 2
    else:
        out_len = (length - k) // spec.stride + 1
        pad_l = 0
    out = []
    for t in range(out_len):
        row = []
        for n in range(n_out):
            acc = 0
            for kk in range(k):
                src = t * spec.stride + kk - pad_l
                if 0 <= src < length:
                    for c in range(c_in):
                        acc += int(spec.weights[n, kk, c]) * int(x_rows[src][c])
            acc += int(spec.bias[n]) << spec.shifts.bias_left_shift
            v = rshift_round_int(acc, spec.shifts.out_right_shift)
            if spec.activation == "relu":
                v = max(v, 0)
            row.append(clamp(v, spec.out_fmt))
        out.append(row)
    return out


def naive_avg_pool(x_rows, size, stride, fmt):
    n_out = (len(x_rows) - size) // stride + 1
    out = []
    for t in range(n_out):
        row = []
        for c in range(len(x_rows[0])):
            s = sum(int(x_rows[t * stride + j][c]) for j in range(size))
            row.append(clamp((s + size // 2) // size, fmt))
        out.append(row)
    return out


def naive_global_avg_pool(x_rows, fmt):
    length = len(x_rows)
    out = []
    for c in range(len(x_rows[0])):
        s = sum(int(row[c]) for row in x_rows)
        out.append(clamp((s + length // 2) // length, fmt))
    return out


def naive_dense(x_vec, spec):
    out = []
    for n in range(spec.out_dim):
        acc = sum(int(spec.weights[n, m]) * int(x_vec[m]) for m in range(spec.in_dim))
        acc += int(spec.bias[n]) << spec.shifts.bias_left_shift
        out.append(clamp(rshift_round_int(acc, spec.shifts.out_right_shift), spec.out_fmt))
    return out


def naive_lut_lookup(lut, raw: int) -> int:
    off = int(raw) - lut.input_fmt.raw_min
    shift = max(0, lut.input_fmt.total_bits - 8)
    if shift == 0:
        return int(lut.table[off])
    idx = off >> shift
    frac = off & ((1 << shift) - 1)
    lo = int(lut.table[idx])
    hi = int(lut.table[min(idx + 1, 255)])
    return clamp(lo + rshift_round_int((hi - lo) * frac, shift), lut.output_fmt)


def naive_gru_step(h_vec, x_vec, spec):
    """Scalar re-derivation of the quantized GRU step."""
    fk = spec.in_fmt.frac_bits + spec.kernel_fmt.frac_bits
    fr = spec.state_fmt.frac_bits + spec.recurrent_fmt.frac_bits
    facc = max(fk, fr)
    k_left = facc - fk
    r_left = facc - fr
    b_left = facc - spec.bias_fmt.frac_bits
    g_right = facc - spec.gate_fmt.frac_bits
    gate_m = spec.gate_fmt.frac_bits
    c_right = 2 * gate_m - spec.state_fmt.frac_bits

    def preact(gate, hh):
        out = []
        for i in range(spec.hidden_dim):
            acc = sum(
                int(spec.kernel[gate, i, j]) * int(x_vec[j]) for j in range(spec.input_dim)
            ) << k_left
            acc += sum(
                int(spec.recurrent[gate, i, j]) * int(hh[j]) for j in range(spec.hidden_dim)
            ) << r_left
            acc += int(spec.bias[gate, i]) << b_left
            out.append(clamp(rshift_round_int(acc, g_right), spec.gate_fmt))
        return out

    z = [naive_lut_lookup(spec.sigmoid_lut, p) for p in preact(0, h_vec)]
    r = [naive_lut_lookup(spec.sigmoid_lut, p) for p in preact(1, h_vec)]
    rh = [
        clamp(rshift_round_int(r[i] * int(h_vec[i]), gate_m), spec.state_fmt)
        for i in range(spec.hidden_dim)
    ]
    cand = [naive_lut_lookup(spec.tanh_lut, p) for p in preact(2, rh)]

    one = 1 << gate_m
    out = []
    for i in range(spec.hidden_dim):
        keep = rshift_round_int(z[i] * int(h_vec[i]), gate_m)
        update = rshift_round_int((one - z[i]) * cand[i], c_right)
        out.append(clamp(keep + update, spec.state_fmt))
    return out


def real_gru_step(h, x, kernel, recurrent, bias):
    """Float GRU with the same equations, for tolerance comparisons."""

    def sigmoid(v):
        return 1.0 / (1.0 + math.exp(-v))

    hd = len(h)
    z = [
        sigmoid(
            sum(kernel[0][i][j] * x[j] for j in range(len(x)))
            + sum(recurrent[0][i][j] * h[j] for j in range(hd))
            + bias[0][i]
        )
        for i in range(hd)
    ]
    r = [
        sigmoid(
            sum(kernel[1][i][j] * x[j] for j in range(len(x)))
            + sum(recurrent[1][i][j] * h[j] for j in range(hd))
            + bias[1][i]
        )
        for i in range(hd)
    ]
    rh = [r[j] * h[j] for j in range(hd)]
    cand = [
        math.tanh(
            sum(kernel[2][i][j] * x[j] for j in range(len(x)))
            + sum(recurrent[2][i][j] * rh[j] for j in range(hd))
            + bias[2][i]
        )
        for i in range(hd)
    ]
    return [z[i] * h[i] + (1 - z[i]) * cand[i] for i in range(hd)]
