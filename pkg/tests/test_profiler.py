import numpy as np
import pytest

from fxpnn.errors import ProfilerError, ShapeError
from fxpnn.graph import (
    ConvLayer,
    DenseLayer,
    GapLayer,
    GruLayer,
    PoolLayer,
    build_canonical_model,
    quantize_windows,
)
from fxpnn.profiler import (
    benchmark_host,
    classification_metrics,
    count_ops,
    ops_per_cycle,
    power_report,
    throughput,
)


def instrumented_op_count(graph, window):
    """Execute the conv part on a real window with per-MAC counting.

    Every multiply-accumulate bumps the counter by 2 and every bias add
    by 1, at the site where the arithmetic happens; pooling counts one op
    per emitted output. The GRU counts 2 per multiply-accumulate in its
    six matmuls (biases and elementwise blending excluded).
    """
    counts = {}
    x = window[:, None]
    feature = None
    for layer in graph.layers:
        ops = 0
        if isinstance(layer, ConvLayer):
            s = layer.spec
            pad = (s.kernel_size - 1) // 2
            xpad = np.zeros((x.shape[0] + s.kernel_size - 1, s.in_channels))
            xpad[pad : pad + x.shape[0]] = x
            out = np.zeros((x.shape[0], s.out_channels))
            for t in range(out.shape[0]):
                for n in range(s.out_channels):
                    acc = 0.0
                    for k in range(s.kernel_size):
                        for c in range(s.in_channels):
                            acc += xpad[t + k, c] * s.weights[n, k, c]
                            ops += 2
                    out[t, n] = acc + s.bias[n]
                    ops += 1
            x = np.maximum(out, 0)
        elif isinstance(layer, PoolLayer):
            out = np.zeros((x.shape[0] // 2, x.shape[1]))
            for t in range(out.shape[0]):
                for c in range(x.shape[1]):
                    out[t, c] = (x[2 * t, c] + x[2 * t + 1, c]) / 2
                    ops += 1
            x = out
        elif isinstance(layer, GapLayer):
            feature = x.mean(axis=0)
        elif isinstance(layer, GruLayer):
            s = layer.spec
            h = np.zeros(s.hidden_dim)
            for gate in range(3):
                for i in range(s.hidden_dim):
                    for j in range(s.input_dim):
                        ops += 2  # kernel MAC
                    for j in range(s.hidden_dim):
                        ops += 2  # recurrent MAC
            _ = h
        elif isinstance(layer, DenseLayer):
            s = layer.spec
            for n in range(s.out_dim):
                for m in range(s.in_dim):
                    ops += 2
                ops += 1  # bias
        counts[layer.name] = ops
    return counts


class TestCountOps:
    def test_conv1_formula(self):
        rep = count_ops(build_canonical_model())
        by_name = {l.name: l.ops for l in rep.layers}
        assert by_name["conv1"] == 22528  # 2*5*1*8*256 + 256*8

    def test_gru_matches_reference_count(self):
        rep = count_ops(build_canonical_model())
        assert {l.name: l.ops for l in rep.layers}["gru"] == 73728

    def test_dense_matches_reference_count(self):
        rep = count_ops(build_canonical_model())
        assert {l.name: l.ops for l in rep.layers}["dense"] == 516

    def test_totals(self):
        rep = count_ops(build_canonical_model())
        assert rep.conv_block_ops == 3_149_568
        assert rep.total_ops_per_window == 3_223_812
        assert rep.total_params == 194_596

    def test_activations_and_softmax_free(self):
        rep = count_ops(build_canonical_model())
        assert {l.name: l.ops for l in rep.layers}["softmax"] == 0
        assert {l.name: l.ops for l in rep.layers}["gap"] == 0

    def test_matches_instrumented_execution(self):
        # a per-MAC counting interpreter reproduces every layer count
        g = build_canonical_model()
        window = np.random.default_rng(0).normal(size=256)
        counted = instrumented_op_count(g, window)
        rep = count_ops(g)
        for l in rep.layers:
            assert counted.get(l.name, 0) == l.ops, l.name


class TestThroughput:
    def test_reference_figures(self):
        t = throughput(3.221e6, 0.0948)
        assert abs(t - 33.98e6) / 33.98e6 <= 0.001

    def test_identity_time(self):
        assert throughput(1234.0, 1.0) == 1234.0

    def test_ops_per_cycle(self):
        opc = ops_per_cycle(3.221e6, 0.0948, 64e6)
        assert abs(opc - 0.531) <= 0.002

    def test_nonpositive_time(self):
        with pytest.raises(ProfilerError):
            throughput(1e6, 0.0)


class TestPowerReport:
    def test_reference_figures(self):
        fig = power_report(0.13625, 33.0, 5.0, 33.98e6)
        assert abs(fig.current_a - 4.13e-3) <= 0.005e-3
        assert abs(fig.power_w - 20.65e-3) <= 0.01e-3
        assert abs(fig.efficiency_ops_per_s_per_w - 1.64e9) / 1.64e9 <= 0.01

    def test_tflite_comparison_point(self):
        fig = power_report(1.0, 1.0, 24.14e-3, 3.0e6)
        assert abs(fig.efficiency_ops_per_s_per_w - 0.124e9) / 0.124e9 <= 0.01

    def test_zero_power(self):
        with pytest.raises(ProfilerError, match="zero power"):
            power_report(0.0, 33.0, 5.0, 1e6)

    def test_nonpositive_shunt(self):
        with pytest.raises(ProfilerError):
            power_report(0.1, 0.0, 5.0, 1e6)

    def test_scale_consistency(self):
        a = power_report(0.1, 33.0, 5.0, 1e6)
        b = power_report(0.2, 33.0, 5.0, 1e6)
        assert np.isclose(b.current_a, 2 * a.current_a)
        assert np.isclose(b.power_w, 2 * a.power_w)
        assert np.isclose(b.efficiency_ops_per_s_per_w, a.efficiency_ops_per_s_per_w / 2)


CLASSES = ("Normal", "AF", "Other", "Noise")


class TestClassificationMetrics:
    def test_perfect_predictions(self):
        truths = list(CLASSES) * 5
        m = classification_metrics(truths, truths)
        for pc in m.per_class.values():
            assert pc.sensitivity == 1.0
            assert pc.specificity == 1.0
            assert pc.f1 == 1.0
        assert m.accuracy == 1.0

    def test_all_one_class_on_balanced_set(self):
        truths = list(CLASSES) * 6
        preds = ["Normal"] * len(truths)
        m = classification_metrics(preds, truths)
        assert m.per_class["Normal"].sensitivity == 1.0
        assert m.per_class["Normal"].specificity == 0.0
        assert m.accuracy == 0.25

    def test_hand_built_confusion_matrix(self):
        # truths: 4 Normal, 2 AF; predictions mix them up deterministically
        truths = ["Normal", "Normal", "Normal", "Normal", "AF", "AF"]
        preds = ["Normal", "Normal", "AF", "Normal", "AF", "Normal"]
        m = classification_metrics(preds, truths, classes=("Normal", "AF"))
        # Normal: TP=3 FN=1 FP=1 TN=1
        assert m.per_class["Normal"].sensitivity == 3 / 4
        assert m.per_class["Normal"].specificity == 1 / 2
        p, r = 3 / 4, 3 / 4
        assert np.isclose(m.per_class["Normal"].f1, 2 * p * r / (p + r))
        # AF: TP=1 FN=1 FP=1 TN=3
        assert m.per_class["AF"].sensitivity == 1 / 2
        assert m.per_class["AF"].specificity == 3 / 4
        assert m.accuracy == 4 / 6

    def test_absent_class_warns_and_is_excluded(self):
        truths = ["Normal", "AF", "Normal", "AF"]
        preds = ["Normal", "AF", "AF", "Normal"]
        with pytest.warns(UserWarning, match="absent from truths"):
            m = classification_metrics(preds, truths)
        assert np.isnan(m.per_class["Noise"].sensitivity)
        vals = [m.per_class[c].sensitivity for c in ("Normal", "AF")]
        assert np.isclose(m.overall_sensitivity, np.mean(vals))

    def test_length_mismatch(self):
        with pytest.raises(ShapeError, match="shape error"):
            classification_metrics(["Normal"], ["Normal", "AF"])

    def test_published_overall_f1_aggregation(self):
        # per-class F1 columns aggregate to the published overall rows
        test_f1 = [0.920, 0.776, 0.777, 0.727]
        train_f1 = [0.936, 0.841, 0.832, 0.707]
        assert round(sum(test_f1) / 4, 3) == 0.800
        assert round(sum(train_f1) / 4, 3) == 0.829


class TestBenchmarkHost:
    def test_single_repetition(self):
        g = build_canonical_model(rng=np.random.default_rng(1))
        w = quantize_windows(g, np.random.default_rng(2).normal(size=(2, 256)))
        stats = benchmark_host(g, w, repetitions=1)
        assert stats.repetitions == 1
        assert stats.n_windows == 2
        assert stats.per_window_mean_s > 0
        assert stats.per_window_mean_s == stats.per_window_median_s

    def test_conv_dominates_gru(self):
        # the conv block carries ~40x the GRU's arithmetic
        g = build_canonical_model(rng=np.random.default_rng(3))
        w = quantize_windows(g, np.random.default_rng(4).normal(size=(4, 256)))
        stats = benchmark_host(g, w, repetitions=3)
        assert stats.phase_mean_s["conv"] > stats.phase_mean_s["gru"]

    def test_invalid_repetitions(self):
        g = build_canonical_model()
        w = quantize_windows(g, np.zeros((1, 256)))
        with pytest.raises(ProfilerError):
            benchmark_host(g, w, repetitions=0)
