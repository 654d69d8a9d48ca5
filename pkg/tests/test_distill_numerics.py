import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orchard_yield.distill.gradcheck import gradcheck, numeric_gradient
from orchard_yield.distill.losses import (
    HeadOutput,
    ShapeMismatchError,
    TargetSet,
    distillation_loss,
    distillation_loss_grad,
    yolo_hard_loss,
    yolo_hard_loss_grad,
)
from orchard_yield.distill.softmax import (
    binary_kl_with_logits,
    entropy,
    kl_divergence,
    sigmoid,
    temperature_softmax,
)
from orchard_yield.distill.train import DistillConfig

logits = arrays(np.float64, st.integers(1, 8), elements=st.floats(-50, 50))


class TestTemperatureSoftmax:
    def test_symmetric(self):
        for t in (0.1, 1.0, 20.0):
            assert temperature_softmax([0.0, 0.0], t) == pytest.approx([0.5, 0.5])

    def test_reduces_to_standard_softmax(self):
        e = math.e
        assert temperature_softmax([2.0, 0.0], 2.0) == pytest.approx([e / (e + 1), 1 / (e + 1)], abs=1e-15)

    def test_high_temperature_uniform(self):
        z = [5.0, 1.0, -3.0]
        e = [math.exp(v / 1000.0) for v in z]
        direct = [v / sum(e) for v in e]
        p = temperature_softmax(z, 1000.0)
        assert p == pytest.approx(direct, abs=1e-15)
        # Deviation from uniform is about (z_i - mean) / (3 T) = 4 / 3000.
        assert p == pytest.approx([1 / 3] * 3, abs=1.5e-3)
        assert temperature_softmax(z, 1e5) == pytest.approx([1 / 3] * 3, abs=1e-4)

    @pytest.mark.parametrize("t", [0.0, -1.0])
    def test_rejects_non_positive_temperature(self, t):
        with pytest.raises(ValueError):
            temperature_softmax([1.0, 2.0], t)

    def test_no_overflow(self):
        p = temperature_softmax([1e308, 0.0], 1.0)
        assert np.all(np.isfinite(p)) and p[0] == 1.0

    @given(logits, st.floats(0.05, 100), st.floats(-1e3, 1e3))
    def test_normalized_and_shift_invariant(self, z, t, c):
        p = temperature_softmax(z, t)
        assert np.all(p >= 0)
        assert abs(p.sum() - 1.0) <= 1e-12
        assert temperature_softmax(z + c, t) == pytest.approx(p, abs=1e-9)

    def test_entropy_non_decreasing_in_temperature(self):
        rng = np.random.default_rng(0)
        grid = np.geomspace(0.05, 200, 60)
        for _ in range(200):
            z = rng.normal(scale=5, size=int(rng.integers(2, 7)))
            h = [float(entropy(temperature_softmax(z, t))) for t in grid]
            assert all(b >= a - 1e-12 for a, b in zip(h, h[1:]))


class TestKl:
    def test_two_class_closed_form(self):
        p = math.e / (1 + math.e)
        q_t, q_s = [p, 1 - p], [1 - p, p]
        direct = sum(a * math.log(a / b) for a, b in zip(q_t, q_s))
        assert direct == pytest.approx(math.tanh(0.5), abs=1e-15)
        assert float(kl_divergence([1.0, 0.0], [0.0, 1.0], 1.0)) == pytest.approx(direct, abs=1e-14)

    def test_zero_for_identical(self):
        z = np.array([[3.0, -1.0, 0.2]])
        assert kl_divergence(z, z, 20.0)[0] == 0.0

    @given(logits, st.floats(0.1, 50))
    def test_non_negative(self, z, t):
        rng = np.random.default_rng(len(z))
        other = z + rng.normal(size=z.shape)
        assert kl_divergence(z, other, t) >= 0.0

    def test_binary_kl(self):
        assert binary_kl_with_logits(np.array([0.7]), np.array([0.7]))[0] == 0.0
        pt, ps = sigmoid(np.array([1.0]))[0], sigmoid(np.array([-1.0]))[0]
        expected = pt * math.log(pt / ps) + (1 - pt) * math.log((1 - pt) / (1 - ps))
        assert binary_kl_with_logits(np.array([1.0]), np.array([-1.0]))[0] == pytest.approx(expected, abs=1e-14)


def head(rng, n=6, k=3):
    return HeadOutput(rng.normal(size=n), rng.normal(size=(n, k)), rng.normal(size=(n, 4)))


def targets(rng, n=6, k=3, n_pos=3):
    obj = np.zeros(n)
    obj[:n_pos] = 1
    cls = np.zeros((n, k))
    cls[np.arange(n_pos), rng.integers(0, k, n_pos)] = 1
    return TargetSet(obj, cls, rng.normal(size=(n, 4)))


def flatten(h: HeadOutput):
    return np.concatenate([h.objectness, h.class_logits.ravel(), h.boxes.ravel()])


def unflatten(theta, n, k):
    return HeadOutput(theta[:n], theta[n:n + n * k].reshape(n, k), theta[n + n * k:].reshape(n, 4))


class TestHardLoss:
    def test_box_term_zero_when_exact(self):
        rng = np.random.default_rng(1)
        t = targets(rng)
        pred = HeadOutput(rng.normal(size=6), rng.normal(size=(6, 3)), t.boxes.copy())
        assert yolo_hard_loss(pred, t).box == 0.0

    def test_no_positive_cells(self):
        rng = np.random.default_rng(2)
        t = targets(rng, n_pos=0)
        loss = yolo_hard_loss(head(rng), t)
        assert loss.classification == loss.box == 0.0
        assert loss.total == loss.objectness

    def test_single_cell_objectness(self):
        pred = HeadOutput([0.0], [[0.0, 0.0]], [[0, 0, 0, 0]])
        t = TargetSet([1.0], [[1.0, 0.0]], [[0, 0, 0, 0]])
        assert yolo_hard_loss(pred, t).objectness == pytest.approx(math.log(2), abs=1e-15)

    def test_components_non_negative_and_sum(self):
        rng = np.random.default_rng(3)
        loss = yolo_hard_loss(head(rng), targets(rng))
        assert min(loss.objectness, loss.classification, loss.box) >= 0
        assert loss.total == pytest.approx(loss.objectness + loss.classification + loss.box)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ShapeMismatchError):
            yolo_hard_loss(head(rng, n=5), targets(rng, n=6))

    def test_gradient(self):
        rng = np.random.default_rng(5)
        t = targets(rng)
        for _ in range(20):
            theta = flatten(head(rng))

            def f(p):
                h = unflatten(p, 6, 3)
                g = yolo_hard_loss_grad(h, t)
                return yolo_hard_loss(h, t).total, flatten(HeadOutput(g.objectness, g.class_logits, g.boxes))

            assert gradcheck(f, theta, 1e-6) < 1e-4


class TestDistillationLoss:
    cfg = DistillConfig()

    def test_identical_heads_soft_zero(self):
        rng = np.random.default_rng(6)
        h = head(rng)
        out = distillation_loss(h, h, targets(rng), self.cfg)
        assert out.soft == 0.0

    def test_lambda_soft_zero(self):
        rng = np.random.default_rng(7)
        cfg = DistillConfig(lambda_hard=0.7, lambda_soft=0.0)
        s, t, tg = head(rng), head(rng), targets(rng)
        assert distillation_loss(s, t, tg, cfg).total == 0.7 * yolo_hard_loss(s, tg).total

    def test_two_class_single_cell(self):
        cfg = DistillConfig(temperature=1.0)
        s = HeadOutput([0.0], [[0.0, 1.0]], [[0, 0, 0, 0]])
        t = HeadOutput([0.0], [[1.0, 0.0]], [[0, 0, 0, 0]])
        out = distillation_loss(s, t, TargetSet([0.0], [[0, 0]], [[0, 0, 0, 0]]), cfg)
        assert out.soft_class == pytest.approx(math.tanh(0.5), abs=1e-14)
        assert out.soft_objectness == 0.0
        assert out.soft == pytest.approx(math.tanh(0.5), abs=1e-14)

    def test_temperature_squared_scaling(self):
        rng = np.random.default_rng(8)
        s, t, tg = head(rng), head(rng), targets(rng)
        out = distillation_loss(s, t, tg, DistillConfig(temperature=20.0))
        assert out.soft == pytest.approx(400.0 * (out.soft_class + out.soft_objectness))
        assert out.total == pytest.approx(0.5 * out.hard.total + 0.5 * out.soft)

    def test_gradient(self):
        rng = np.random.default_rng(9)
        for temp in (1.0, 4.0, 20.0):
            cfg = DistillConfig(temperature=temp, lambda_hard=0.3, lambda_soft=0.7)
            teacher, tg = head(rng), targets(rng)
            for _ in range(10):
                theta = flatten(head(rng))

                def f(p):
                    h = unflatten(p, 6, 3)
                    g = distillation_loss_grad(h, teacher, tg, cfg)
                    return distillation_loss(h, teacher, tg, cfg).total, flatten(
                        HeadOutput(g.objectness, g.class_logits, g.boxes))

                assert gradcheck(f, theta, 1e-6) < 1e-4


class TestGradcheck:
    def test_quadratic(self):
        err = gradcheck(lambda p: (float(np.sum(p ** 2)), 2 * p), [1.0, 2.0], 1e-5)
        assert err < 1e-6

    def test_softmax_kl_pipeline(self):
        rng = np.random.default_rng(10)
        t = 20.0
        z_t = rng.normal(scale=5, size=4)

        def f(z_s):
            loss = t * t * float(kl_divergence(z_t, z_s, t))
            return loss, t * (temperature_softmax(z_s, t) - temperature_softmax(z_t, t))

        for _ in range(20):
            assert gradcheck(f, rng.normal(scale=5, size=4), 1e-5) < 1e-4

    def test_constant_loss(self):
        assert gradcheck(lambda p: (3.0, np.zeros_like(p)), [0.5, -1.0]) == 0.0

    def test_detects_wrong_gradient(self):
        assert gradcheck(lambda p: (float(np.sum(p ** 2)), p), [1.0, 2.0]) > 0.3

    def test_numeric_gradient_rejects_bad_epsilon(self):
        with pytest.raises(ValueError):
            numeric_gradient(lambda p: 0.0, [1.0], 0.0)
