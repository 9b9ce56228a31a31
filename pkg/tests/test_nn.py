import math

import pytest

import oracles
from conftest import assert_lists_close
from normlab.data import gen_blobs
from normlab.nn import (
    Activation,
    Adam,
    AvgPool2x2,
    Conv2d,
    Dense,
    Flatten,
    Network,
    Normalizer,
    RnnCell,
    accuracy,
    build_dense_net,
    cross_entropy,
    network_evaluate,
    network_train_epoch,
    softmax,
    softmax_backward,
)
from normlab.tensor import Rng, Tensor, matmul, randn, zeros

STEP = 1e-5
TOLERANCE = 1e-4


class TestActivations:
    def test_relu_values(self):
        y, _ = Activation("relu").forward(Tensor([3], [-1, 0, 2]))
        assert y.data == [0.0, 0.0, 2.0]

    def test_tanh_and_sigmoid_values(self):
        x = Tensor([2], [0.0, 1.0])
        t, _ = Activation("tanh").forward(x)
        s, _ = Activation("sigmoid").forward(x)
        assert_lists_close(t.data, [0.0, math.tanh(1.0)])
        assert_lists_close(s.data, [0.5, 1.0 / (1.0 + math.exp(-1.0))])

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError):
            Activation("gelu")

    @pytest.mark.parametrize("name", ["relu", "tanh", "sigmoid"])
    def test_backward_matches_finite_differences(self, name):
        rng = Rng(1)
        x = randn([3, 4], rng)
        dy = randn([3, 4], rng)
        layer = Activation(name)
        _, cache = layer.forward(x)
        dx, _ = layer.backward(cache, dy)

        def loss_at(vals):
            y, _ = layer.forward(Tensor((3, 4), vals))
            return sum(u * v for u, v in zip(y.data, dy.data))

        numeric = [oracles.central_difference(loss_at, x.data, i, STEP) for i in range(12)]
        assert oracles.max_rel_error(dx.data, numeric) < TOLERANCE


class TestSoftmax:
    def test_rows_sum_to_one(self):
        y = softmax(randn([4, 5], Rng(3)))
        for i in range(4):
            assert abs(sum(y.data[i * 5:(i + 1) * 5]) - 1.0) < 1e-12

    def test_backward_matches_finite_differences(self):
        rng = Rng(5)
        x = randn([2, 4], rng)
        dy = randn([2, 4], rng)
        y = softmax(x)
        dx = softmax_backward(y, dy)

        def loss_at(vals):
            out = softmax(Tensor((2, 4), vals))
            return sum(u * v for u, v in zip(out.data, dy.data))

        numeric = [oracles.central_difference(loss_at, x.data, i, STEP) for i in range(8)]
        assert oracles.max_rel_error(dx.data, numeric) < TOLERANCE


class TestCrossEntropy:
    def test_uniform_logits_give_log_c(self):
        for c in (2, 5, 10):
            logits = zeros([3, c])
            loss, _ = cross_entropy(logits, [0] * 3)
            assert abs(loss - math.log(c)) < 1e-12

    def test_confident_correct_logits(self):
        logits = Tensor([2, 3], [30, 0, 0, 0, 30, 0])
        loss, _ = cross_entropy(logits, [0, 1])
        assert loss < 1e-9
        assert accuracy(logits, [0, 1]) == 1.0

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            cross_entropy(zeros([1, 3]), [3])

    def test_gradient_matches_finite_differences(self):
        rng = Rng(6)
        logits = randn([4, 3], rng)
        labels = [0, 2, 1, 2]
        _, dlogits = cross_entropy(logits, labels)

        def loss_at(vals):
            value, _ = cross_entropy(Tensor((4, 3), vals), labels)
            return value

        numeric = [oracles.central_difference(loss_at, logits.data, i, STEP) for i in range(12)]
        assert oracles.max_rel_error(dlogits.data, numeric) < 1e-5


class TestConv2d:
    def test_valid_3x3_kernel_on_3x3_input_is_frobenius_product(self):
        conv = Conv2d(1, 1, 3, Rng(0))
        conv.w = Tensor([1, 1, 3, 3], [1, 2, 3, 4, 5, 6, 7, 8, 9])
        conv.b = zeros([1])
        x = Tensor([1, 1, 3, 3], [9, 8, 7, 6, 5, 4, 3, 2, 1])
        y, _ = conv.forward(x)
        expected = sum(a * b for a, b in zip(conv.w.data, x.data))
        assert y.shape == (1, 1, 1, 1)
        assert abs(y.data[0] - expected) < 1e-12

    def test_output_shape(self):
        conv = Conv2d(2, 3, 3, Rng(1))
        y, _ = conv.forward(randn([4, 2, 6, 5], Rng(2)))
        assert y.shape == (4, 3, 4, 3)

    def test_gradients_match_finite_differences(self):
        rng = Rng(7)
        conv = Conv2d(2, 2, 2, rng)
        x = randn([2, 2, 4, 4], rng)
        y, cache = conv.forward(x)
        dy = randn(list(y.shape), rng)
        dx, grads = conv.backward(cache, dy)

        def loss_x(vals):
            out, _ = conv.forward(Tensor(x.shape, vals))
            return sum(u * v for u, v in zip(out.data, dy.data))

        numeric = [oracles.central_difference(loss_x, x.data, i, STEP) for i in range(x.size)]
        assert oracles.max_rel_error(dx.data, numeric) < TOLERANCE

        w0 = conv.w

        def loss_w(vals):
            conv.w = Tensor(w0.shape, vals)
            out, _ = conv.forward(x)
            conv.w = w0
            return sum(u * v for u, v in zip(out.data, dy.data))

        numeric_w = [oracles.central_difference(loss_w, w0.data, i, STEP) for i in range(w0.size)]
        assert oracles.max_rel_error(grads["w"].data, numeric_w) < TOLERANCE


class TestPoolAndFlatten:
    def test_avgpool_values(self):
        x = Tensor([1, 1, 2, 2], [1, 2, 3, 4])
        y, _ = AvgPool2x2().forward(x)
        assert y.data == [2.5]

    def test_avgpool_needs_even_dims(self):
        with pytest.raises(ValueError):
            AvgPool2x2().forward(randn([1, 1, 3, 4], Rng(0)))

    def test_avgpool_backward_distributes_evenly(self):
        x = randn([1, 1, 4, 4], Rng(1))
        pool = AvgPool2x2()
        _, cache = pool.forward(x)
        dy = Tensor([1, 1, 2, 2], [4, 8, 12, 16])
        dx, _ = pool.backward(cache, dy)
        assert dx.data[:2] == [1.0, 1.0]
        assert sum(dx.data) == sum(dy.data)

    def test_flatten_round_trip(self):
        x = randn([2, 3, 2, 2], Rng(2))
        flat = Flatten()
        y, cache = flat.forward(x)
        assert y.shape == (2, 12)
        back, _ = flat.backward(cache, y)
        assert back.shape == x.shape and back.data == x.data


class TestRnnCell:
    def test_zero_recurrence_reduces_to_dense_tanh_of_last_step(self):
        rng = Rng(9)
        cell = RnnCell(3, 4, rng)
        cell.w_hh = zeros([4, 4])
        x = randn([2, 5, 3], rng)
        y, _ = cell.forward(x)
        last = Tensor([2, 3], [x.data[(s * 5 + 4) * 3 + j] for s in range(2) for j in range(3)])
        pre = matmul(last, cell.w_xh)
        expected = [math.tanh(v) for v in pre.data]
        assert_lists_close(y.data, expected)

    def test_gradients_match_finite_differences(self):
        rng = Rng(10)
        cell = RnnCell(2, 3, rng)
        x = randn([2, 4, 2], rng)
        y, cache = cell.forward(x)
        dy = randn([2, 3], rng)
        dx, grads = cell.backward(cache, dy)

        def loss_x(vals):
            out, _ = cell.forward(Tensor(x.shape, vals))
            return sum(u * v for u, v in zip(out.data, dy.data))

        numeric = [oracles.central_difference(loss_x, x.data, i, STEP) for i in range(x.size)]
        assert oracles.max_rel_error(dx.data, numeric) < TOLERANCE

        for name in ("w_xh", "w_hh", "b"):
            p0 = getattr(cell, name)

            def loss_p(vals):
                setattr(cell, name, Tensor(p0.shape, vals))
                out, _ = cell.forward(x)
                setattr(cell, name, p0)
                return sum(u * v for u, v in zip(out.data, dy.data))

            numeric_p = [
                oracles.central_difference(loss_p, p0.data, i, STEP) for i in range(p0.size)
            ]
            assert oracles.max_rel_error(grads[name].data, numeric_p) < TOLERANCE


class TestAdam:
    def test_zero_gradient_is_a_fixed_point(self):
        params = {"w": randn([3, 2], Rng(1))}
        grads = {"w": zeros([3, 2])}
        opt = Adam()
        out = params
        for _ in range(5):
            out = opt.step(out, grads)
        assert out["w"].data == params["w"].data

    def test_first_step_magnitude_is_learning_rate(self):
        for scale in (1e-3, 1.0, 1e3):
            params = {"w": zeros([4])}
            grads = {"w": Tensor([4], [scale] * 4)}
            opt = Adam(learning_rate=0.01)
            out = opt.step(params, grads)
            for v in out["w"].data:
                assert abs(abs(v) - 0.01) < 1e-5

    def test_two_steps_match_hand_unrolled_recurrence(self):
        lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
        g1, g2 = 0.3, -0.7
        w = 1.0
        m = v = 0.0
        for t, g in enumerate((g1, g2), start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        opt = Adam(learning_rate=lr, beta1=b1, beta2=b2, epsilon=eps)
        params = {"w": Tensor([1], [1.0])}
        params = opt.step(params, {"w": Tensor([1], [g1])})
        params = opt.step(params, {"w": Tensor([1], [g2])})
        assert abs(params["w"].data[0] - w) < 1e-15


class TestNetworkConstruction:
    def test_normalizer_must_follow_nonlinearity(self):
        rng = Rng(0)
        with pytest.raises(ValueError):
            Network([Dense(3, 4, rng), Normalizer("bln", 4)])

    def test_normalizer_after_activation_accepted(self):
        rng = Rng(0)
        Network([Dense(3, 4, rng), Activation("relu"), Normalizer("bn", 4)])

    def test_normalizer_after_rnn_cell_accepted(self):
        rng = Rng(0)
        Network([RnnCell(3, 4, rng), Normalizer("ln", 4)])

    def test_normalizer_first_rejected(self):
        with pytest.raises(ValueError):
            Network([Normalizer("bln", 4)])


@pytest.mark.parametrize("scheme", ["bn", "ln", "bln"])
class TestWholeNetworkGradients:
    def test_loss_gradients_match_finite_differences(self, scheme):
        rng = Rng(31)
        net = build_dense_net(6, 5, 3, scheme, rng)
        x = randn([4, 6], rng)
        labels = [rng.randint(3) for _ in range(4)]
        _, _, caches, dlogits = net.loss(x, labels, train=True, update_stats=False)
        grads = net.backward(caches, dlogits)
        for key, p in net.params().items():
            numeric = []
            for i in range(p.size):
                plus = list(p.data)
                plus[i] += STEP
                net.set_param(key, Tensor(p.shape, plus))
                up, _, _, _ = net.loss(x, labels, train=True, update_stats=False)
                minus = list(p.data)
                minus[i] -= STEP
                net.set_param(key, Tensor(p.shape, minus))
                down, _, _, _ = net.loss(x, labels, train=True, update_stats=False)
                numeric.append((up - down) / (2 * STEP))
                net.set_param(key, p)
            assert oracles.max_rel_error(grads[key].data, numeric) < TOLERANCE, key


class TestTrainingLoop:
    def test_epoch_is_deterministic(self):
        ds = gen_blobs(10, 2, 4, 5.0, seed=3)

        def run():
            net = build_dense_net(4, 6, 2, "bln", Rng(77))
            opt = Adam()
            return network_train_epoch(net, ds, 4, opt, Rng(5))

        assert run() == run()

    def test_evaluate_is_pure(self):
        ds = gen_blobs(10, 2, 4, 5.0, seed=3)
        net = build_dense_net(4, 6, 2, "bln", Rng(77))
        network_train_epoch(net, ds, 4, Adam(), Rng(5))
        first = network_evaluate(net, ds)
        second = network_evaluate(net, ds)
        assert first == second

    def test_fresh_blended_network_loss_is_near_log_c(self):
        # the sqrt(d) scaling shrinks fresh logits toward zero, so the first
        # loss sits near the uniform-distribution value
        ds = gen_blobs(20, 2, 4, 5.0, seed=9)
        net = build_dense_net(4, 32, 2, "bln", Rng(78))
        loss, _, _, _ = net.loss(ds.inputs, ds.labels, train=True, update_stats=False)
        assert abs(loss - math.log(2)) < 0.1

    def test_update_stats_flag_freezes_running_statistics(self):
        ds = gen_blobs(10, 2, 4, 5.0, seed=3)
        net = build_dense_net(4, 6, 2, "bln", Rng(1))
        norm = net.normalizers()[0]
        before = norm.running.count
        net.loss(ds.inputs, ds.labels, train=True, update_stats=False)
        assert norm.running.count == before
        net.loss(ds.inputs, ds.labels, train=True)
        assert norm.running.count == before + 1
