import json

import numpy as np
import pytest

from fxpnn import cli
from fxpnn.floatref import build_canonical_float
from fxpnn.graph import build_canonical_model, save

from test_ecg import write_dataset


def run_cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestParseQuantity:
    def test_units(self):
        assert cli.parse_quantity("94.8ms") == pytest.approx(0.0948)
        assert cli.parse_quantity("64MHz") == 64e6
        assert cli.parse_quantity("136.25mV") == pytest.approx(0.13625)
        assert cli.parse_quantity("33") == 33.0
        assert cli.parse_quantity("5V") == 5.0

    def test_rejects_unknown_unit(self):
        with pytest.raises(Exception, match="format error"):
            cli.parse_quantity("12 parsecs")


class TestPreprocess:
    def test_writes_windows_and_summary(self, tmp_path, capsys):
        manifest = write_dataset(tmp_path, n=4, seconds=9.0)
        out_dir = tmp_path / "out"
        code, out, err = run_cli(capsys, "preprocess", manifest, out_dir)
        assert code == 0
        assert sorted(p.name for p in out_dir.glob("*.npy")) == [
            f"A{i:05d}.windows.npy" for i in range(4)
        ]
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["records"] == 4
        assert summary["windows_per_record"]["A00000"] == 6  # 9 s -> 963 -> 6 windows
        assert "config:" in err

    def test_deterministic_outputs(self, tmp_path, capsys):
        manifest = write_dataset(tmp_path, n=2, seconds=4.0)
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli(capsys, "--seed", 9, "preprocess", manifest, a)[0] == 0
        assert run_cli(capsys, "--seed", 9, "preprocess", manifest, b)[0] == 0
        for name in ("A00000.windows.npy", "A00001.windows.npy", "summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_deterministic_offset_ignores_seed(self, tmp_path, capsys):
        manifest = write_dataset(tmp_path, n=2, seconds=4.5)
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli(capsys, "--seed", 1, "preprocess", manifest, a, "--deterministic-offset")
        run_cli(capsys, "--seed", 2, "preprocess", manifest, b, "--deterministic-offset")
        assert (a / "A00000.windows.npy").read_bytes() == (
            b / "A00000.windows.npy"
        ).read_bytes()

    def test_short_record_skipped_with_warning(self, tmp_path, capsys):
        manifest = write_dataset(tmp_path, n=2, seconds=1.0)  # 107 samples < 256
        out_dir = tmp_path / "out"
        code, out, err = run_cli(capsys, "preprocess", manifest, out_dir)
        assert code == 0
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["records"] == 0
        assert len(summary["skipped"]) == 2
        assert "skipping" in err

    def test_missing_manifest_exit_code(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "preprocess", tmp_path / "nope.jsonl", tmp_path)
        assert code == cli.EXIT_IO


@pytest.fixture()
def float_model_path(tmp_path):
    model = build_canonical_float(np.random.default_rng(0), fan_in_scaled=True)
    path = tmp_path / "model.fxf"
    save(model, path)
    return path


@pytest.fixture()
def quantized_model_path(tmp_path, float_model_path, capsys):
    out = tmp_path / "model.fxq"
    code, _, _ = run_cli(capsys, "quantize", float_model_path, out)
    assert code == 0
    return out


class TestQuantize:
    def test_fallback_without_calibration(self, tmp_path, float_model_path, capsys):
        out = tmp_path / "m.fxq"
        code, stdout, err = run_cli(capsys, "quantize", float_model_path, out)
        assert code == 0
        assert out.exists()
        assert "no calibration set" in err
        assert "conv1.weights" in stdout

    def test_with_calibration_and_json(self, tmp_path, float_model_path, capsys):
        calib = tmp_path / "calib.npy"
        np.save(calib, np.random.default_rng(1).normal(size=(6, 256)).astype(np.float32))
        out = tmp_path / "m.fxq"
        code, stdout, _ = run_cli(
            capsys, "quantize", float_model_path, out, "--calibration", calib, "--json"
        )
        assert code == 0
        report = json.loads(stdout)
        assert report["schema"] == "fxpnn-quantize/1"
        assert report["total_params"] == 194596
        assert "act:input" in report["saturation"] or report["activation_formats"]

    def test_uniform_override(self, tmp_path, float_model_path, capsys):
        out = tmp_path / "m.fxq"
        code, stdout, _ = run_cli(
            capsys, "quantize", float_model_path, out, "--uniform", "Q2.5", "--json"
        )
        assert code == 0
        report = json.loads(stdout)
        assert report["weight_formats"]["conv3.weights"] == "Q2.5@8"

    def test_incompatible_chain_exit_code(self, tmp_path, float_model_path, capsys):
        # huge-integer weight format leaves no fractional bits to shift into
        out = tmp_path / "m.fxq"
        code, _, err = run_cli(
            capsys, "quantize", float_model_path, out, "--uniform", "Q7.0@8"
        )
        assert code == cli.EXIT_VALIDATION
        assert "incompatible format chain" in err

    def test_rejects_fxq_input(self, tmp_path, capsys):
        path = tmp_path / "already.fxq"
        save(build_canonical_model(), path)
        code, _, err = run_cli(capsys, "quantize", path, tmp_path / "out.fxq")
        assert code == cli.EXIT_FORMAT


class TestInfer:
    def test_zero_weight_model_uniform(self, tmp_path, capsys):
        model_path = tmp_path / "zero.fxq"
        save(build_canonical_model(), model_path)
        windows = tmp_path / "w.windows.npy"
        np.save(windows, np.random.default_rng(2).normal(size=(3, 256)).astype(np.float32))
        code, stdout, _ = run_cli(capsys, "infer", model_path, windows, "--json")
        assert code == 0
        rec = json.loads(stdout)
        assert rec["id"] == "w"
        assert all(p == 0.25 for p in rec["probabilities"].values())

    def test_manifest_batch_one_line_per_record(self, tmp_path, quantized_model_path, capsys):
        manifest = write_dataset(tmp_path, n=3, seconds=9.0)
        code, stdout, _ = run_cli(capsys, "infer", quantized_model_path, manifest)
        assert code == 0
        lines = [l for l in stdout.splitlines() if l.strip()]
        assert len(lines) == 3
        assert all("\t" in l for l in lines)

    def test_bad_model_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.fxq"
        bad.write_bytes(b"XXXX not a model")
        code, _, err = run_cli(capsys, "infer", bad, tmp_path / "w.npy")
        assert code == cli.EXIT_FORMAT
        assert "bad magic" in err

    def test_wrong_window_length_precondition(self, tmp_path, capsys):
        model_path = tmp_path / "m.fxq"
        save(build_canonical_model(), model_path)
        windows = tmp_path / "short.windows.npy"
        np.save(windows, np.zeros((2, 100), dtype=np.float32))
        code, _, err = run_cli(capsys, "infer", model_path, windows)
        assert code == cli.EXIT_PRECONDITION
        assert "shape error" in err


METRICS_SCHEMA = {
    "type": "object",
    "required": ["schema", "n", "per_class", "overall", "accuracy"],
    "properties": {
        "schema": {"const": "fxpnn-metrics/1"},
        "n": {"type": "integer", "minimum": 1},
        "per_class": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["sensitivity", "specificity", "f1"],
                "properties": {
                    "sensitivity": {"type": ["number", "null"]},
                    "specificity": {"type": ["number", "null"]},
                    "f1": {"type": ["number", "null"]},
                },
            },
        },
        "overall": {
            "type": "object",
            "required": ["sensitivity", "specificity", "f1"],
        },
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
    },
}

PROFILE_SCHEMA = {
    "type": "object",
    "required": ["schema", "layers", "total_params", "total_ops_per_window",
                 "flash_bytes", "ram_buffers", "measured"],
    "properties": {
        "schema": {"const": "fxpnn-profile/1"},
        "layers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "kind", "params", "ops"],
            },
        },
        "total_params": {"type": "integer"},
        "total_ops_per_window": {"type": "integer"},
        "flash_bytes": {"type": "integer"},
        "ram_buffers": {
            "type": "array",
            "items": {"type": "object", "required": ["name", "bytes"]},
        },
        "measured": {"type": "object"},
    },
}


class TestEvaluate:
    def test_metrics_json(self, tmp_path, quantized_model_path, capsys):
        import jsonschema

        manifest = write_dataset(tmp_path, n=8, seconds=9.0)
        code, stdout, _ = run_cli(
            capsys, "evaluate", quantized_model_path, manifest, "--json"
        )
        assert code == 0
        report = json.loads(stdout)
        jsonschema.validate(report, METRICS_SCHEMA)
        assert report["n"] == 8
        assert set(report["per_class"]) == {"Normal", "AF", "Other", "Noise"}
        assert 0.0 <= report["accuracy"] <= 1.0

    def test_human_table(self, tmp_path, quantized_model_path, capsys):
        manifest = write_dataset(tmp_path, n=4, seconds=9.0)
        code, stdout, _ = run_cli(capsys, "evaluate", quantized_model_path, manifest)
        assert code == 0
        assert "Sensitivity" in stdout
        assert "Overall" in stdout


class TestProfile:
    def test_reference_numbers_json(self, tmp_path, capsys):
        path = tmp_path / "m.fxq"
        save(build_canonical_model(), path)
        code, stdout, _ = run_cli(
            capsys, "profile", path, "--json",
            "--exec-time", "94.8ms", "--clock", "64MHz",
            "--vdrop", "136.25mV", "--shunt", "33", "--supply", "5",
        )
        assert code == 0
        import jsonschema

        report = json.loads(stdout)
        jsonschema.validate(report, PROFILE_SCHEMA)
        layer_ops = {l["name"]: l["ops"] for l in report["layers"]}
        assert layer_ops["gru"] == 73728
        assert layer_ops["dense"] == 516
        assert report["total_params"] == 194596
        assert abs(report["measured"]["throughput_mops_s"] - 34.0) < 0.1
        assert abs(report["measured"]["ops_per_cycle"] - 0.531) < 0.002
        assert abs(report["measured"]["power_mw"] - 20.65) < 0.02
        assert abs(report["measured"]["efficiency_gops_s_w"] - 1.64) < 0.02
        assert report["flash_bytes"] < 200_000

    def test_human_table(self, tmp_path, capsys):
        path = tmp_path / "m.fxq"
        save(build_canonical_model(), path)
        code, stdout, _ = run_cli(capsys, "profile", path)
        assert code == 0
        assert "conv1" in stdout
        assert "Flash" in stdout

    def test_missing_model(self, tmp_path, capsys):
        code, _, _ = run_cli(capsys, "profile", tmp_path / "nope.fxq")
        assert code == cli.EXIT_IO


class TestEntryPoint:
    def test_console_script_runs(self, tmp_path):
        import subprocess
        import sys

        path = tmp_path / "m.fxq"
        save(build_canonical_model(), path)
        proc = subprocess.run(
            [sys.executable, "-m", "fxpnn.cli", "profile", str(path), "--json"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["total_params"] == 194596
