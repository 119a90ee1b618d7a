"""Command-line interface: preprocess | quantize | infer | evaluate | profile.

Exit codes: 0 success, 2 I/O failure, 3 file/format failure, 4 model
validation failure, 5 precondition failure. Machine output is JSON with a
versioned "schema" field; human tables carry no stability guarantee.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import ecg, graph, profiler, quantizer
from .errors import (
    CalibrationError,
    DatasetError,
    EmptyTensorError,
    FormatChainError,
    FormatError,
    FxpnnError,
    ManifestError,
    MissingFileError,
    PipelineError,
    ProfilerError,
    SerializationError,
    ShapeError,
    UnknownLabelError,
)

EXIT_IO = 2
EXIT_FORMAT = 3
EXIT_VALIDATION = 4
EXIT_PRECONDITION = 5

_UNIT_SCALE = {
    "": 1.0, "s": 1.0, "ms": 1e-3, "us": 1e-6,
    "hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9,
    "v": 1.0, "mv": 1e-3,
    "ohm": 1.0,
}


def parse_quantity(text: str) -> float:
    """Parse "94.8ms", "64MHz", "136.25mV", "33" into base SI units."""
    m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*([a-zA-Zµ]*)\s*", text)
    if not m:
        raise FormatError(f"format error: cannot parse quantity {text!r}")
    unit = m.group(2).replace("µ", "u").lower()
    if unit not in _UNIT_SCALE:
        raise FormatError(f"format error: unknown unit {m.group(2)!r} in {text!r}")
    return float(m.group(1)) * _UNIT_SCALE[unit]


def _echo_config(args: argparse.Namespace) -> None:
    cfg = {k: str(v) for k, v in sorted(vars(args).items()) if k != "func"}
    print(f"config: {json.dumps(cfg, sort_keys=True)}", file=sys.stderr)


def _load_graph(path) -> graph.ModelGraph:
    model = graph.load(path)
    if not isinstance(model, graph.ModelGraph):
        raise FormatError(f"format error: {path} is a float model, expected .fxq")
    return model


def _infer_windows(g: graph.ModelGraph, windows: np.ndarray) -> np.ndarray:
    return graph.forward_quantized(g, graph.quantize_windows(g, windows))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = ecg.load_manifest(args.manifest)
    base = Path(args.manifest).parent

    summary = {
        "schema": "fxpnn-preprocess/1",
        "seed": args.seed,
        "deterministic_offset": args.deterministic_offset,
        "records": 0,
        "skipped": [],
        "windows_per_record": {},
    }
    for entry in entries:
        record = ecg.load_record(entry, base)
        seed = None if args.deterministic_offset else (args.seed or 0)
        try:
            batch = ecg.preprocess(record, seed=seed, zero_phase=args.zero_phase)
        except PipelineError as e:
            print(f"warning: skipping {record.id}: {e}", file=sys.stderr)
            summary["skipped"].append(record.id)
            continue
        np.save(out_dir / f"{record.id}.windows.npy", batch.windows.astype(np.float32))
        summary["records"] += 1
        summary["windows_per_record"][record.id] = batch.n_windows

    hist = {}
    for n in summary["windows_per_record"].values():
        hist[str(n)] = hist.get(str(n), 0) + 1
    summary["n_w_histogram"] = dict(sorted(hist.items(), key=lambda kv: int(kv[0])))
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"preprocessed {summary['records']} records "
          f"({len(summary['skipped'])} skipped) -> {out_dir}")
    return 0


def _load_calibration(path) -> list:
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.windows.npy"))
        if not files:
            raise MissingFileError(f"missing file: no *.windows.npy under {p}")
        return [np.load(f) for f in files]
    if not p.exists():
        raise MissingFileError(f"missing file: {p}")
    return [np.load(p)]


def cmd_quantize(args) -> int:
    model = graph.load(args.float_model)
    if isinstance(model, graph.ModelGraph):
        raise FormatError(f"format error: {args.float_model} is already quantized")

    policy = quantizer.QuantPolicy()
    if args.uniform:
        policy.uniform_weight_fmt = _parse_fmt(args.uniform)
    calibration = None
    if args.calibration:
        calibration = _load_calibration(args.calibration)
    else:
        print("warning: no calibration set; activation formats fall back to "
              "weight-derived defaults", file=sys.stderr)

    scheme = quantizer.make_scheme(model, policy, calibration)
    g = quantizer.quantize_model(model, policy, scheme=scheme)
    errors = graph.validation_errors(g)
    if errors:
        for d in errors:
            print(f"error: {d.layer}: {d.message}", file=sys.stderr)
        return EXIT_VALIDATION
    graph.save(g, args.out_model)

    if args.json:
        report = {
            "schema": "fxpnn-quantize/1",
            "total_params": g.param_count(),
            "weight_formats": {k: str(v) for k, v in scheme.weight_formats.items()},
            "activation_formats": {
                k: str(v) for k, v in scheme.activation_formats.items()
            },
            "saturation": scheme.saturation,
            "out_model": str(args.out_model),
        }
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(quantizer.format_report(scheme))
        print(f"wrote {args.out_model} ({g.param_count()} parameters)")
    return 0


def _parse_fmt(text: str):
    from .qformat import QFormat

    text = text.strip()
    if "@" not in text:  # allow shorthand "Q2.5" for 8-bit formats
        m = re.fullmatch(r"Q(\d+)\.(\d+)", text)
        if m:
            return QFormat(int(m.group(1)), int(m.group(2)))
    return QFormat.parse(text)


def _iter_inputs(g: graph.ModelGraph, inputs, seed) -> list:
    """Yield (record id, window batch) from .npy window files or manifests."""
    out = []
    for item in inputs:
        p = Path(item)
        if p.suffix == ".npy":
            out.append((p.stem.removesuffix(".windows"), np.load(p)))
        elif p.suffix in (".jsonl", ".json", ".manifest"):
            base = p.parent
            for entry in ecg.load_manifest(p):
                record = ecg.load_record(entry, base)
                batch = ecg.preprocess(record, seed=seed)
                out.append((record.id, batch.windows))
        else:
            raise FormatError(f"format error: cannot infer input type of {p}")
    return out


def cmd_infer(args) -> int:
    g = _load_graph(args.model)
    classes = list(g.meta.class_names)
    for rec_id, windows in _iter_inputs(g, args.inputs, args.seed):
        probs = _infer_windows(g, windows)
        label = classes[int(np.argmax(probs))]
        if args.json:
            print(json.dumps({
                "schema": "fxpnn-infer/1",
                "id": rec_id,
                "label": label,
                "probabilities": {c: float(p) for c, p in zip(classes, probs)},
            }, sort_keys=True))
        else:
            probs_str = " ".join(f"{c}={p:.4f}" for c, p in zip(classes, probs))
            print(f"{rec_id}\t{label}\t{probs_str}")
    return 0


def cmd_evaluate(args) -> int:
    g = _load_graph(args.model)
    classes = list(g.meta.class_names)
    entries = ecg.load_manifest(args.manifest)
    base = Path(args.manifest).parent

    predictions, truths = [], []
    for entry in entries:
        record = ecg.load_record(entry, base)
        if record.label is None:
            raise UnknownLabelError(f"unknown label: record {record.id} is unlabeled")
        try:
            batch = ecg.preprocess(record, seed=args.seed)
        except PipelineError as e:
            print(f"warning: skipping {record.id}: {e}", file=sys.stderr)
            continue
        probs = graph.forward_quantized(g, graph.quantize_windows(g, batch.windows))
        predictions.append(classes[int(np.argmax(probs))])
        truths.append(record.label)

    m = profiler.classification_metrics(predictions, truths, classes=tuple(classes))
    if args.json:
        def number(v):
            return None if v != v else v  # undefined metrics become null

        print(json.dumps({
            "schema": "fxpnn-metrics/1",
            "n": len(truths),
            "per_class": {
                c: {"sensitivity": number(pc.sensitivity),
                    "specificity": number(pc.specificity),
                    "f1": number(pc.f1)} for c, pc in m.per_class.items()
            },
            "overall": {"sensitivity": number(m.overall_sensitivity),
                        "specificity": number(m.overall_specificity),
                        "f1": number(m.overall_f1)},
            "accuracy": m.accuracy,
        }, indent=2, sort_keys=True))
    else:
        print(f"{'Class':<20} {'Sensitivity':>12} {'Specificity':>12} {'F1':>8}")
        for c, pc in m.per_class.items():
            print(f"{c:<20} {pc.sensitivity:>12.3f} {pc.specificity:>12.3f} {pc.f1:>8.3f}")
        print(f"{'Overall':<20} {m.overall_sensitivity:>12.3f} "
              f"{m.overall_specificity:>12.3f} {m.overall_f1:>8.3f}")
        print(f"{'Accuracy':<20} {m.accuracy:>12.3f}")
    return 0


def cmd_profile(args) -> int:
    g = _load_graph(args.model)
    report = profiler.count_ops(g)

    measured = {}
    if args.exec_time:
        exec_s = parse_quantity(args.exec_time)
        tput = profiler.throughput(report.total_ops_per_window, exec_s)
        measured["exec_time_s"] = exec_s
        measured["throughput_mops_s"] = tput / 1e6
        if args.clock:
            measured["ops_per_cycle"] = profiler.ops_per_cycle(
                report.total_ops_per_window, exec_s, parse_quantity(args.clock)
            )
        if args.vdrop and args.shunt and args.supply:
            figures = profiler.power_report(
                parse_quantity(args.vdrop), parse_quantity(args.shunt),
                parse_quantity(args.supply), tput,
            )
            measured["current_ma"] = figures.current_a * 1e3
            measured["power_mw"] = figures.power_w * 1e3
            measured["efficiency_gops_s_w"] = figures.efficiency_ops_per_s_per_w / 1e9

    if args.json:
        print(json.dumps({
            "schema": "fxpnn-profile/1",
            "layers": [{"name": l.name, "kind": l.kind, "params": l.params,
                        "ops": l.ops} for l in report.layers],
            "total_params": report.total_params,
            "total_ops_per_window": report.total_ops_per_window,
            "conv_block_ops": report.conv_block_ops,
            "flash_bytes": report.flash_bytes,
            "ram_buffers": [{"name": n, "bytes": b}
                            for n, b in report.memory.ram_buffers],
            "ram_bytes": report.ram_bytes,
            "measured": measured,
        }, indent=2, sort_keys=True))
        return 0

    print(f"{'Layer':<12} {'Kind':<9} {'Params':>10} {'Ops/window':>12}")
    for l in report.layers:
        print(f"{l.name:<12} {l.kind:<9} {l.params:>10,} {l.ops:>12,}")
    print(f"{'total':<12} {'':<9} {report.total_params:>10,} "
          f"{report.total_ops_per_window:>12,}")
    print(f"\nFlash: {report.flash_bytes:,} B ({report.flash_bytes / 1000:.1f} KB)")
    print("RAM buffers:")
    for name, b in report.memory.ram_buffers:
        print(f"  {name:<16} {b:>8,} B")
    print(f"  {'total':<16} {report.ram_bytes:>8,} B")
    if measured:
        print("\nMeasured:")
        for k, v in measured.items():
            print(f"  {k:<22} {v:.4g}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fxpnn",
        description="Fixed-point conv-GRU ECG classifier toolchain",
    )
    parser.add_argument(
        "--seed", type=int, default=int(os.environ.get("FXPNN_SEED", "0")),
        help="RNG seed (env FXPNN_SEED)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter/resample/normalize/window records")
    p.add_argument("manifest")
    p.add_argument("out_dir")
    p.add_argument("--deterministic-offset", action="store_true",
                   help="midpoint window offsets instead of seeded random ones")
    p.add_argument("--zero-phase", action="store_true",
                   help="forward-backward filtering instead of causal")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("quantize", help="turn an FXF1 float model into an .fxq")
    p.add_argument("float_model")
    p.add_argument("out_model")
    p.add_argument("--calibration", help=".npy window file or preprocess output dir")
    p.add_argument("--uniform", help='force one weight format, e.g. "Q2.5@8"')
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("infer", help="classify window files or manifest records")
    p.add_argument("model")
    p.add_argument("inputs", nargs="+",
                   help="*.windows.npy files and/or JSON-lines manifests")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="per-class metrics over a labeled manifest")
    p.add_argument("model")
    p.add_argument("manifest")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("profile", help="operation counts, memory plan, throughput")
    p.add_argument("model")
    p.add_argument("--exec-time", help='measured per-window time, e.g. "94.8ms"')
    p.add_argument("--clock", help='core clock for Ops/cycle, e.g. "64MHz"')
    p.add_argument("--vdrop", help='shunt voltage drop, e.g. "136.25mV"')
    p.add_argument("--shunt", help="shunt resistance in ohms")
    p.add_argument("--supply", help="supply voltage in volts")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _echo_config(args)
    try:
        return args.func(args)
    except (MissingFileError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (SerializationError, ManifestError, UnknownLabelError, FormatError,
            DatasetError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except FormatChainError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (PipelineError, EmptyTensorError, CalibrationError, ProfilerError,
            ShapeError, FxpnnError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
