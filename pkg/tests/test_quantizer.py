import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgenet.errors import ConfigError, EmptyTensor
from edgenet.lstm_net import init_params, scores, zeros_params
from edgenet.pruning import apply_masks, compute_masks
from edgenet.quantizer import (QuantParams, calibrate, dequantize,
                               dequantized_net, make_quant_params, quantize,
                               quantize_model, quantized_forward,
                               quantized_scores)


class TestCalibrate:
    def test_spanning_zero(self):
        assert calibrate(np.array([-0.5, 0.25, 0.75])) == (-0.5, 0.75)

    def test_all_positive_widens_to_zero(self):
        assert calibrate(np.array([0.2, 0.9])) == (0.0, 0.9)

    def test_all_negative_widens_to_zero(self):
        assert calibrate(np.array([-0.2, -0.9])) == (-0.9, 0.0)

    def test_constant_zero_tensor(self):
        assert calibrate(np.zeros(3)) == (0.0, 0.0)

    def test_empty(self):
        with pytest.raises(EmptyTensor):
            calibrate(np.array([]))


class TestQuantParams:
    def test_symmetric_unit_range(self):
        qp = make_quant_params(-1.0, 1.0)
        assert qp.scale == pytest.approx(2.0 / 255.0)
        assert qp.zero_point == 0  # round-half-even of -0.5

    def test_unit_interval(self):
        qp = make_quant_params(0.0, 1.0)
        assert qp.scale == pytest.approx(1.0 / 255.0)
        assert qp.zero_point == -128

    def test_degenerate_range(self):
        qp = make_quant_params(0.5, 0.5)
        assert qp.scale == 1.0 and qp.zero_point == 0

    def test_zero_point_clamped(self):
        qp = make_quant_params(0.0, 1e-30)
        assert -128 <= qp.zero_point <= 127

    def test_invalid_range(self):
        with pytest.raises(ConfigError):
            make_quant_params(1.0, -1.0)


class TestQuantizeDequantize:
    def test_zero_maps_to_zero_point(self):
        qp = make_quant_params(-1.0, 1.0)
        qt = quantize(np.array([0.0]), qp)
        assert qt.values[0] == qp.zero_point
        assert dequantize(qt)[0] == 0.0

    def test_range_top_clamps(self):
        qp = make_quant_params(-1.0, 1.0)
        # 1.0 / (2/255) = 127.5 rounds half-even to 128, then clamps to 127
        assert quantize(np.array([1.0]), qp).values[0] == 127

    def test_exact_integer_zero_point_hits_q_min(self):
        qp = make_quant_params(0.0, 1.0)  # Z = -128 exactly
        assert quantize(np.array([0.0]), qp).values[0] == -128

    def test_dequantize_hand_value(self):
        qp = make_quant_params(-1.0, 1.0)
        qt = quantize(np.array([1.0]), qp)
        assert dequantize(qt)[0] == pytest.approx(254.0 / 255.0)

    def test_round_trip_grid_half_scale_bound(self):
        # integer-exact zero point: error bounded by S/2
        qp = make_quant_params(0.0, 1.0)
        r = np.linspace(0.0, 1.0, 10_000)
        back = dequantize(quantize(r, qp))
        assert np.max(np.abs(back - r)) <= qp.scale / 2 + 1e-15

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-100, 100), st.floats(1e-6, 100))
    def test_round_trip_bound_general(self, lo, width):
        f_min, f_max = min(lo, 0.0), max(lo + width, 0.0)
        qp = make_quant_params(f_min, f_max)
        r = np.linspace(f_min, f_max, 257)
        back = dequantize(quantize(r, qp))
        assert np.max(np.abs(back - r)) <= qp.scale + 1e-12

    def test_monotonicity(self):
        qp = make_quant_params(-3.0, 2.0)
        r = np.sort(np.random.default_rng(0).uniform(-4, 3, size=1000))
        q = quantize(r, qp).values
        assert np.all(np.diff(q.astype(int)) >= 0)

    def test_idempotent_at_8_bit(self):
        qp = make_quant_params(-1.0, 1.0)
        r = np.random.default_rng(1).uniform(-1, 1, size=500)
        q1 = quantize(r, qp)
        q2 = quantize(dequantize(q1), qp)
        np.testing.assert_array_equal(q1.values, q2.values)


class TestQuantizeModel:
    def test_all_zero_model_round_trips_exactly(self):
        net = zeros_params((3, 4), dropout_rate=0.0)
        qm = quantize_model(net)
        for qt in qm.weights.values():
            assert np.all(qt.values == qt.params.zero_point)
        back = dequantized_net(qm)
        for arr in back.tensors().values():
            np.testing.assert_array_equal(arr, np.zeros_like(arr))
        assert quantized_forward(qm, np.zeros((1, 3))) == pytest.approx(0.5)

    def test_biases_stay_float(self):
        net = init_params((3, 4), seed=0)
        net.layers[0].b_f[:] = 0.123456789
        qm = quantize_model(net)
        assert qm.biases["layer0.b_f"].dtype == np.float32
        assert qm.biases["layer0.b_f"][0] == np.float32(0.123456789)

    def test_pruned_zeros_survive_round_trip(self):
        net = init_params((4, 8, 8), seed=5)
        tree = net.tensors()
        weights = {n: tree[n] for n in net.weight_names()}
        mask = compute_masks(weights, 0.8)
        net = net.with_tensors(apply_masks(tree, mask))
        qm = quantize_model(net, mask=mask)
        back = dequantized_net(qm)
        for name, m in mask.masks.items():
            vals = back.tensors()[name]
            assert np.all(vals[~m.astype(bool)] == 0.0)

    def test_fixed_range_uses_unit_window(self):
        net = init_params((3, 4), seed=1)
        qm = quantize_model(net, fixed_range=True)
        for qt in qm.weights.values():
            assert (qt.params.f_min, qt.params.f_max) == (-1.0, 1.0)

    def test_quantized_close_to_float_on_random_nets(self):
        rng = np.random.default_rng(123)
        worst = 0.0
        for i in range(1000):
            net = init_params((4, 5), seed=i, dropout_rate=0.0)
            x = rng.random((1, 4))
            p_float = scores(net, x[None, 0:1, :].reshape(1, 1, 4))[0]
            p_quant = quantized_forward(quantize_model(net), x)
            worst = max(worst, abs(p_quant - p_float))
        assert worst <= 0.05

    def test_quantized_scores_batch(self):
        net = init_params((3, 4), seed=2, dropout_rate=0.0)
        x = np.random.default_rng(0).random((6, 3))
        qm = quantize_model(net)
        p = quantized_scores(qm, x)
        assert p.shape == (6,)

    def test_quant_params_validation(self):
        with pytest.raises(ConfigError):
            QuantParams(scale=0.0, zero_point=0)
