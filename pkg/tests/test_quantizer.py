import numpy as np
import pytest

from fxpnn.errors import EmptyTensorError, FormatChainError
from fxpnn.floatref import build_canonical_float
from fxpnn.graph import (
    deserialize,
    forward_quantized,
    quantize_windows,
    serialize,
    validation_errors,
)
from fxpnn.qformat import QFormat
from fxpnn.quantizer import (
    QuantPolicy,
    calibrate_activations,
    format_report,
    make_scheme,
    quantize_model,
    select_format,
)

Q2_5 = QFormat(2, 5)
Q0_7 = QFormat(0, 7)


class TestSelectFormat:
    def test_unit_gaussian_gives_q2_5(self):
        # mu=0, sigma=1 exactly: covering 3.0 needs 2 integer bits
        assert select_format(np.array([-1.0, 1.0]), 8) == Q2_5

    def test_narrow_distribution(self):
        # mu=0, sigma=0.1: 2^0 = 1 covers 0.3
        assert select_format(np.array([-0.1, 0.1]), 8) == Q0_7

    def test_all_zero_weights(self):
        assert select_format(np.zeros(100), 8) == Q0_7

    def test_power_of_two_boundary(self):
        # bound exactly 2.0 fits in n=1; just above needs n=2
        assert select_format(np.array([-2 / 3, 2 / 3]), 8).int_bits == 1
        assert select_format(np.array([-0.7, 0.7]), 8).int_bits == 2

    def test_sixteen_bit(self):
        assert select_format(np.array([-1.0, 1.0]), 16) == QFormat(2, 13)

    def test_empty(self):
        with pytest.raises(EmptyTensorError, match="empty tensor"):
            select_format(np.array([]), 8)

    def test_gaussian_saturation_fraction(self):
        # the 3-sigma rule clips at most the ~0.27% tails
        rng = np.random.default_rng(0)
        vals = rng.normal(0.0, 1.0, size=1_000_000)
        fmt = select_format(vals, 8)
        clipped = np.mean((vals < fmt.real_min) | (vals > fmt.real_max))
        assert clipped <= 0.003 + 5e-4

    def test_monotone_tightening(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            vals = rng.normal(rng.uniform(-2, 2), rng.uniform(0.01, 3), size=500)
            n_full = select_format(vals, 8).int_bits
            n_half = select_format(0.5 * vals, 8).int_bits
            assert n_half <= n_full

    def test_deterministic(self):
        vals = np.random.default_rng(2).normal(size=10_000)
        assert select_format(vals, 8) == select_format(vals.copy(), 8)


class TestCalibration:
    def test_bounded_activations_give_q0_7(self):
        model = build_canonical_float()  # zero weights: activations all zero
        fmts = calibrate_activations(model, np.random.default_rng(3).normal(size=(2, 256)))
        assert fmts["pool1"] == Q0_7
        assert fmts["pool7"] == Q0_7

    def test_unit_variance_input_gets_q2_5(self):
        model = build_canonical_float(np.random.default_rng(4), fan_in_scaled=True)
        w = np.random.default_rng(5).normal(0.0, 1.0, size=(8, 256))
        fmts = calibrate_activations(model, w)
        assert fmts["input"] == Q2_5

    def test_empty_calibration_set(self):
        with pytest.raises(EmptyTensorError, match="empty calibration set"):
            calibrate_activations(build_canonical_float(), np.zeros((0, 256)))

    def test_gru_point_pinned_to_state_format(self):
        model = build_canonical_float(np.random.default_rng(6), fan_in_scaled=True)
        fmts = calibrate_activations(model, np.random.default_rng(7).normal(size=(2, 256)))
        assert fmts["gru"] == QFormat(2, 13)


class TestQuantizeModel:
    def test_gaussian_half_scale_weights(self):
        model = build_canonical_float(np.random.default_rng(0), weight_scale=0.5)
        scheme = make_scheme(model)
        for name, fmt in scheme.weight_formats.items():
            if fmt.total_bits == 8:
                assert fmt in (Q0_7, QFormat(1, 6)), (name, str(fmt))
        g = quantize_model(model, scheme=scheme)
        assert validation_errors(g) == []

    def test_unit_scale_weights_give_q2_5(self):
        # unit-variance weights select the published Q2.5 format
        model = build_canonical_float(np.random.default_rng(8), weight_scale=1.0)
        scheme = make_scheme(model)
        assert scheme.weight_formats["conv4.weights"] == Q2_5
        assert scheme.weight_formats["gru.kernel"] == Q2_5

    def test_zero_weight_model(self):
        model = build_canonical_float()
        scheme = make_scheme(model)
        for name, fmt in scheme.weight_formats.items():
            if fmt.total_bits == 8:
                assert fmt == Q0_7, name
        g = quantize_model(model, scheme=scheme)
        assert validation_errors(g) == []

    def test_uniform_override(self):
        model = build_canonical_float(np.random.default_rng(9), weight_scale=0.2)
        policy = QuantPolicy(uniform_weight_fmt=Q2_5)
        scheme = make_scheme(model, policy)
        eight_bit = [f for f in scheme.weight_formats.values() if f.total_bits == 8]
        assert all(f == Q2_5 for f in eight_bit)

    def test_incompatible_chain_names_layer(self):
        model = build_canonical_float(np.random.default_rng(10), weight_scale=0.2)
        scheme = make_scheme(model)
        # force an activation grid finer than the accumulator resolution
        scheme.weight_formats["conv1.weights"] = QFormat(7, 0)
        scheme.activation_formats["input"] = QFormat(7, 0)
        scheme.activation_formats["pool1"] = Q0_7
        with pytest.raises(FormatChainError, match="incompatible format chain: layer conv1"):
            quantize_model(model, scheme=scheme)

    def test_calibrated_quantization_round_trips(self):
        rng = np.random.default_rng(11)
        model = build_canonical_float(rng, weight_scale=1.0, fan_in_scaled=True)
        calib = rng.normal(size=(4, 256))
        g = quantize_model(model, calibration=calib)
        assert validation_errors(g) == []
        assert g.param_count() == 194596
        probs = forward_quantized(g, quantize_windows(g, calib[:2]))
        assert abs(probs.sum() - 1.0) <= 2.0 ** -6
        # the serialized model deserializes and re-validates cleanly
        back = deserialize(serialize(g))
        assert validation_errors(back) == []
        again = forward_quantized(back, quantize_windows(back, calib[:2]))
        assert np.array_equal(probs, again)

    def test_scheme_determinism(self):
        rng = np.random.default_rng(12)
        model = build_canonical_float(rng, weight_scale=1.0, fan_in_scaled=True)
        calib = rng.normal(size=(2, 256))
        a = make_scheme(model, calibration=calib)
        b = make_scheme(model, calibration=calib)
        assert a.weight_formats == b.weight_formats
        assert a.activation_formats == b.activation_formats
        assert a.stats == b.stats


class TestReport:
    def test_report_lists_everything(self):
        model = build_canonical_float(np.random.default_rng(13), fan_in_scaled=True)
        scheme = make_scheme(model, calibration=np.random.default_rng(14).normal(size=(2, 256)))
        text = format_report(scheme)
        assert "conv1.weights" in text
        assert "act:input" in text
        assert "gru.kernel" in text
