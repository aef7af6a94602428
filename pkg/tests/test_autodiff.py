"""Tensor operations: spec examples, gradient checks, adjoint identity,
frozen leaves, and the optimizer."""

import numpy as np
import pytest

from aegan import autodiff as ad
from aegan import kernels
from aegan.autodiff import Tensor
from aegan.errors import ShapeError, ValidationError
from aegan.gradcheck import check_gradients, run_suite
from aegan.optim import Adam, Sgd
from aegan.rng import Rng


class TestDense:
    def test_identity_case(self):
        out = ad.dense(Tensor([[1.0, 2.0]]), Tensor([[1.0, 0.0], [0.0, 1.0]]),
                       Tensor([0.0, 0.0]))
        assert np.array_equal(out.data, [[1.0, 2.0]])

    def test_hand_arithmetic(self):
        out = ad.dense(Tensor([[1.0, 1.0]]), Tensor([[2.0, 3.0], [4.0, 5.0]]),
                       Tensor([1.0, 1.0]))
        assert np.array_equal(out.data, [[7.0, 9.0]])

    def test_weight_gradient_matches_finite_differences(self, rng):
        worst = check_gradients(ad.dense, [rng.uniform((3, 3)), rng.uniform((3, 4)),
                                           rng.uniform(4)])
        assert worst <= 1.0

    def test_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(1, 3\).*\(2, 2\)"):
            ad.dense(Tensor(np.zeros((1, 3))), Tensor(np.zeros((2, 2))), Tensor(np.zeros(2)))


class TestConv:
    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            ad.conv2d(Tensor(np.zeros((1, 8, 8, 3), np.float32)),
                      Tensor(np.zeros((5, 5, 4, 2), np.float32)))
        with pytest.raises(ShapeError):
            ad.conv2d_transposed(Tensor(np.zeros((1, 8, 8, 3), np.float32)),
                                 Tensor(np.zeros((5, 5, 2, 4), np.float32)))

    def test_transposed_doubles_extent(self):
        x = Tensor(np.zeros((1, 4, 4, 6), np.float32))
        k = Tensor(np.zeros((5, 5, 3, 6), np.float32))
        out = ad.conv2d_transposed(x, k)
        assert out.data.shape == (1, 8, 8, 3)
        assert not out.data.any()

    def test_adjoint_identity_20_random_cases(self):
        # <conv2d(a), b> == <a, conv2d_transposed(b)> with a shared kernel
        rng = Rng(2024)
        for case in range(20):
            r = rng.derive(case)
            b_, c, f = (int(v) + 1 for v in r.integers(3, 3))
            h = 2 * (int(r.integers(1, 3)[0]) + 1)
            a = r.uniform((b_, h, h, c)).astype(np.float64)
            k = r.uniform((5, 5, c, f)).astype(np.float64)
            bb = r.uniform((b_, h // 2, h // 2, f)).astype(np.float64)
            lhs = float(np.sum(kernels.conv2d_forward(a, k, 2) * bb))
            # transposed-conv kernel layout (kh,kw,F,C) shares the same array
            kt = np.ascontiguousarray(np.transpose(k, (0, 1, 3, 2)))
            tb = ad.conv2d_transposed(Tensor(bb, dtype=np.float64),
                                      Tensor(kt, dtype=np.float64)).data
            rhs = float(np.sum(a * tb))
            assert abs(lhs - rhs) <= 1e-5 * max(1.0, abs(lhs), abs(rhs))


class TestActivations:
    def test_relu_values(self):
        assert np.array_equal(ad.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_sigmoid_value_and_gradient(self):
        x = Tensor(np.zeros(()), requires_grad=True)
        y = ad.sigmoid(x)
        assert y.data == pytest.approx(0.5)
        y.backward()
        assert x.grad == pytest.approx(0.25)

    def test_lrelu_definition(self):
        assert ad.lrelu(Tensor([-10.0]), 0.2).data[0] == pytest.approx(-2.0)

    def test_output_ranges(self, rng):
        x = Tensor(100.0 * rng.uniform((64,)))
        s, t = ad.sigmoid(x).data, ad.tanh(x).data
        assert (s >= 0).all() and (s <= 1).all()
        assert (t >= -1).all() and (t <= 1).all()
        assert np.isfinite(s).all() and np.isfinite(t).all()


class TestBatchnorm:
    def test_train_mode_normalizes(self, rng):
        x = Tensor(1.5 + 2.0 * rng.uniform((16, 4, 4, 3)))
        out, mu, var = ad.batchnorm_train(x, Tensor(np.ones(3)), Tensor(np.zeros(3)))
        assert np.abs(out.data.mean(axis=(0, 1, 2))).max() < 1e-5
        assert np.abs(out.data.var(axis=(0, 1, 2)) - 1.0).max() < 1e-3

    def test_identity_on_standardized_input(self, rng):
        x = rng.uniform((256, 2)).astype(np.float64)
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        out, _, _ = ad.batchnorm_train(Tensor(x, dtype=np.float64),
                                       Tensor(np.ones(2), dtype=np.float64),
                                       Tensor(np.zeros(2), dtype=np.float64))
        np.testing.assert_allclose(out.data, x, atol=1e-4)

    def test_input_gradient_vs_finite_differences(self, rng):
        worst = check_gradients(
            lambda x, g, b: ad.batchnorm_train(x, g, b)[0],
            [rng.uniform((6, 3, 3, 2)), 1.0 + 0.1 * rng.uniform(2), 0.1 * rng.uniform(2)],
            rtol=1e-3)
        assert worst <= 1.0


class TestBce:
    def test_half_everywhere_is_ln2(self):
        t = Tensor(np.full((4, 4), 0.5, np.float32))
        p = Tensor(np.full((4, 4), 0.5, np.float32))
        assert ad.bce_loss(t, p).item() == pytest.approx(np.log(2), rel=1e-6)

    def test_perfect_prediction_near_zero(self):
        t = Tensor(np.ones((8,), np.float32))
        p = Tensor(np.full((8,), 1.0 - 1e-7, np.float32))
        assert ad.bce_loss(t, p).item() < 1e-5

    def test_minimized_at_target(self, rng):
        # random-probe oracle: loss(t, t) <= loss(t, q) for 100 random q
        t = rng.uniform((3, 5), 0.0, 1.0)
        base = ad.bce_loss(Tensor(t), Tensor(t)).item()
        for i in range(100):
            q = rng.uniform((3, 5), 0.0, 1.0)
            assert base <= ad.bce_loss(Tensor(t), Tensor(q)).item() + 1e-7

    def test_target_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            ad.bce_loss(Tensor([1.5]), Tensor([0.5]))

    def test_saturated_prediction_gets_zero_gradient(self):
        p = Tensor(np.array([1.0, 0.5], np.float32), requires_grad=True)
        loss = ad.bce_loss(Tensor(np.array([0.0, 0.5], np.float32)), p)
        assert np.isfinite(loss.item())
        loss.backward()
        assert p.grad[0] == 0.0 and p.grad[1] != 0.0


class TestGraph:
    def test_full_gradient_suite(self):
        results = run_suite(seed=0)
        failures = [r.name for r in results if not r.passed]
        assert not failures, f"finite-difference failures: {failures}"

    def test_frozen_leaves_stay_bit_identical(self, rng):
        w = Tensor(rng.uniform((4, 3)), requires_grad=False)
        x = Tensor(rng.uniform((2, 4)), requires_grad=True)
        before = w.data.tobytes()
        loss = ad.mean_all(ad.dense(x, w, Tensor(np.zeros(3, np.float32))))
        loss.backward()
        assert w.data.tobytes() == before
        assert w.grad is None
        assert x.grad is not None

    def test_forward_deterministic(self, rng):
        x = Tensor(rng.uniform((4, 6, 6, 3)))
        k = Tensor(rng.uniform((5, 5, 3, 4)))
        a = ad.conv2d(x, k).data
        b = ad.conv2d(x, k).data
        assert np.array_equal(a, b)

    def test_shared_node_accumulates_both_paths(self):
        x = Tensor(np.array(3.0, np.float32), requires_grad=True)
        y = ad.add(ad.mul(x, x), x)  # d/dx (x^2 + x) = 2x + 1
        y.backward()
        assert x.grad == pytest.approx(7.0)

    def test_detach_blocks_gradient(self):
        x = Tensor(np.array(2.0, np.float32), requires_grad=True)
        y = ad.mul(x.detach(), Tensor(np.array(5.0, np.float32)))
        assert not y.requires_grad


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        p = Tensor(np.array([1.0, -2.0], np.float32), requires_grad=True)
        opt = Adam([p])
        before = p.data.copy()
        p.grad = np.zeros_like(p.data)
        opt.step()
        assert np.array_equal(p.data, before)

    def test_first_step_is_minus_lr(self):
        p = Tensor(np.array(0.0, np.float32), requires_grad=True)
        opt = Adam([p], lr=2e-4)
        p.grad = np.array(1.0, np.float32)
        opt.step()
        assert p.data == pytest.approx(-2e-4, rel=1e-4)  # bias-corrected m/sqrt(v) = 1

    def test_descends_quadratic_monotonically(self):
        w = Tensor(np.array(1.0, np.float32), requires_grad=True)
        opt = Adam([w], lr=0.05)
        values = []
        for _ in range(10):
            values.append(float(w.data) ** 2)
            w.grad = np.array(2.0 * float(w.data), np.float32)
            opt.step()
            opt.zero_grad()
        values.append(float(w.data) ** 2)
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_frozen_parameter_untouched(self):
        p = Tensor(np.array(1.0, np.float32), requires_grad=True)
        opt = Adam([p])
        p.requires_grad = False
        p.grad = np.array(1.0, np.float32)
        before = p.data.copy()
        opt.step()
        assert np.array_equal(p.data, before)

    def test_gradient_shape_mismatch(self):
        p = Tensor(np.zeros(3, np.float32), requires_grad=True)
        opt = Adam([p])
        p.grad = np.zeros((3, 1), np.float32)
        with pytest.raises(ShapeError):
            opt.step()

    def test_step_counter_increments(self):
        p = Tensor(np.array(0.0, np.float32), requires_grad=True)
        opt = Adam([p])
        for expect in (1, 2, 3):
            p.grad = np.array(1.0, np.float32)
            opt.step()
            assert opt.t == expect

    def test_sgd_plain_step(self):
        p = Tensor(np.array(1.0, np.float32), requires_grad=True)
        opt = Sgd([p], lr=0.1)
        p.grad = np.array(2.0, np.float32)
        opt.step()
        assert p.data == pytest.approx(0.8)
