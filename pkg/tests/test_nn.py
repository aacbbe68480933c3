import numpy as np
import pytest

from fedbackdoor import nn
from fedbackdoor.errors import DimensionError, InputError, SpecError

from oracles import fd_gradient, gradient_errors, is_smooth_at, naive_forward

TINY_SPECS = [
    nn.NetworkSpec((1, 6, 6), (nn.Flatten(), nn.Dense(36, 8), nn.ReLU(), nn.Dense(8, 5)), 5),
    nn.NetworkSpec((1, 8, 8), (nn.Conv2D(1, 3, 3, 3), nn.ReLU(), nn.MaxPool(2),
                               nn.Flatten(), nn.Dense(27, 4)), 4),
    nn.NetworkSpec((2, 7, 7), (nn.Conv2D(2, 4, 3, 3, stride=2), nn.ReLU(),
                               nn.Flatten(), nn.Dense(36, 6)), 6),
]


def random_batch(spec, rng, batch=3):
    c, h, w = spec.input_shape
    x = rng.random((batch, c, h, w))
    y = rng.integers(0, spec.num_classes, batch)
    return x, y


class TestInit:
    def test_deterministic(self):
        spec = nn.build_spec("mlp")
        a = nn.init_network(spec, 99).params
        b = nn.init_network(spec, 99).params
        assert a.dtype == np.float32
        assert np.array_equal(a, b)

    def test_seeds_differ(self):
        spec = nn.build_spec("mlp")
        a = nn.init_network(spec, 0).params
        b = nn.init_network(spec, 1).params
        assert (a != b).any()

    def test_dense_param_count(self):
        spec = nn.NetworkSpec((1, 2, 2), (nn.Flatten(), nn.Dense(4, 3)), 3)
        assert nn.param_count(spec) == 15  # 12 weights + 3 biases

    def test_biases_zero_weights_bounded(self):
        spec = nn.NetworkSpec((1, 2, 2), (nn.Flatten(), nn.Dense(4, 3)), 3)
        params = nn.init_network(spec, 5).params
        w, b = params[:12], params[12:]
        bound = np.sqrt(6.0 / 7.0)
        assert np.all(b == 0)
        assert np.all(np.abs(w) < bound)

    def test_incompatible_spec_raises(self):
        bad = nn.NetworkSpec((1, 8, 8), (nn.Flatten(), nn.Dense(10, 4)), 4)
        with pytest.raises(SpecError):
            nn.init_network(bad, 0)
        mismatched_out = nn.NetworkSpec((1, 2, 2), (nn.Flatten(), nn.Dense(4, 3)), 7)
        with pytest.raises(SpecError):
            nn.init_network(mismatched_out, 0)


class TestForward:
    def test_zero_params_uniform_softmax(self, rng):
        spec = nn.build_spec("mlp")
        net = nn.Network(spec, np.zeros(nn.param_count(spec), np.float32), 0)
        x = rng.random((4, 1, 28, 28), dtype=np.float32)
        logits = nn.forward(net, x)
        assert np.all(logits == logits[:, :1])  # identical per class
        probs = nn.softmax(logits)
        assert np.allclose(probs, 0.1, atol=1e-6)

    def test_batch_row_independence(self, rng):
        spec = nn.build_spec("cnn")
        net = nn.init_network(spec, 3)
        batch = rng.random((8, 1, 28, 28), dtype=np.float32)
        full = nn.forward(net, batch)
        single = nn.forward(net, batch[4:5])
        assert np.array_equal(full[4], single[0])

    @pytest.mark.parametrize("spec_idx", range(len(TINY_SPECS)))
    def test_matches_naive_reference(self, spec_idx, rng):
        spec = TINY_SPECS[spec_idx]
        net = nn.init_network(spec, spec_idx)
        x, _ = random_batch(spec, rng)
        fast = nn.forward(net, x.astype(np.float32))
        slow = naive_forward(spec, net.params, x.astype(np.float32))
        assert np.abs(fast - slow).max() < 1e-5

    def test_deterministic(self, rng):
        spec = nn.build_spec("cnn")
        net = nn.init_network(spec, 0)
        x = rng.random((2, 1, 28, 28), dtype=np.float32)
        assert np.array_equal(nn.forward(net, x), nn.forward(net, x))

    def test_shape_mismatch(self, rng):
        net = nn.init_network(nn.build_spec("mlp"), 0)
        with pytest.raises(DimensionError):
            nn.forward(net, rng.random((2, 1, 14, 14), dtype=np.float32))

    def test_softmax_rows_sum_to_one(self, rng):
        spec = nn.build_spec("mlp")
        net = nn.init_network(spec, 8)
        x = rng.random((16, 1, 28, 28), dtype=np.float32)
        probs = nn.softmax(nn.forward(net, x))
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-6


class TestLossAndGrad:
    def test_zero_net_loss_is_log_num_classes(self):
        spec = nn.build_spec("mlp")
        net = nn.Network(spec, np.zeros(nn.param_count(spec), np.float32), 0)
        x = np.random.default_rng(0).random((5, 1, 28, 28), dtype=np.float32)
        loss, grad = nn.loss_and_grad(net, x, np.array([0, 1, 2, 3, 4]))
        assert abs(loss - np.log(10)) < 1e-6
        assert grad.shape == net.params.shape

    def test_duplicated_rows_same_loss(self, rng):
        spec = nn.build_spec("mlp")
        net = nn.init_network(spec, 2)
        x = rng.random((1, 1, 28, 28), dtype=np.float32)
        y = np.array([3])
        single, _ = nn.loss_and_grad(net, x, y)
        dup, _ = nn.loss_and_grad(net, np.repeat(x, 4, axis=0), np.repeat(y, 4))
        assert abs(single - dup) < 1e-6

    def test_label_out_of_range(self, rng):
        net = nn.init_network(nn.build_spec("mlp"), 0)
        x = rng.random((2, 1, 28, 28), dtype=np.float32)
        with pytest.raises(InputError):
            nn.loss_and_grad(net, x, np.array([0, 10]))
        with pytest.raises(InputError):
            nn.loss_and_grad(net, x, np.array([0, -1]))

    @pytest.mark.parametrize("spec_idx", range(len(TINY_SPECS)))
    def test_gradient_matches_finite_differences(self, spec_idx):
        spec = TINY_SPECS[spec_idx]
        assert nn.param_count(spec) <= 500
        rng = np.random.default_rng(100 + spec_idx)
        # Redraw any configuration whose loss is not differentiable across the
        # probe interval: central differences do not estimate the derivative
        # within h of a ReLU kink or a pooling argmax switch.
        for attempt in range(200):
            params = nn.init_network(spec, 1000 * spec_idx + attempt).params.astype(np.float64)
            x, y = random_batch(spec, rng)
            if is_smooth_at(spec, params, x):
                break
        else:
            pytest.fail("no smooth configuration found")
        _, analytic = nn.loss_and_grad(nn.Network(spec, params, 0), x, y)
        reference = fd_gradient(spec, params, x, y)
        rel_max, abs_max = gradient_errors(analytic, reference)
        assert rel_max < 1e-4
        assert abs_max < 1e-6


class TestSgdStep:
    def test_lr_zero_identity(self, rng):
        params = rng.random(10, dtype=np.float32)
        grad = rng.random(10, dtype=np.float32)
        assert np.array_equal(nn.sgd_step(params, grad, 0.0), params)

    def test_arithmetic(self):
        out = nn.sgd_step(np.array([1.0, 2.0], np.float32),
                          np.array([1.0, 1.0], np.float32), 0.5)
        assert np.allclose(out, [0.5, 1.5])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            nn.sgd_step(np.zeros(3, np.float32), np.zeros(4, np.float32), 0.1)

    def test_two_steps_differ_from_summed_grads(self, rng):
        # On a nonlinear net, grad(params_1) != grad(params_0) in general.
        spec = TINY_SPECS[0]
        net = nn.init_network(spec, 7)
        x, y = random_batch(spec, rng)
        x = x.astype(np.float32)
        _, g0 = nn.loss_and_grad(net, x, y)
        p1 = nn.sgd_step(net.params, g0, 0.5)
        _, g1 = nn.loss_and_grad(nn.Network(spec, p1, 0), x, y)
        p2_sequential = nn.sgd_step(p1, g1, 0.5)
        p2_summed = nn.sgd_step(net.params, g0 + g0, 0.5)
        assert not np.allclose(p2_sequential, p2_summed, atol=1e-6)


class TestParamRoundTrip:
    def test_assign_then_flatten_is_identity(self, rng):
        spec = nn.build_spec("mlp")
        v = rng.standard_normal(nn.param_count(spec)).astype(np.float32)
        net = nn.Network(spec, v.copy(), 0)
        logits = nn.forward(net, rng.random((1, 1, 28, 28), dtype=np.float32))
        assert logits.shape == (1, 10)
        assert np.array_equal(net.params, v)
