import math

import numpy as np
import pytest

from actgen import numerics as nm
from actgen.numerics import (NumericsError, Parameter, ShapeError, Tensor, adam_step,
                             backward, check_gradients)
from fdutil import assert_grad_matches


def rand_tensor(rng, shape, requires_grad=True):
    return Tensor(rng.normal(size=shape), requires_grad=requires_grad)


class TestForwardBasics:
    def test_softmax_uniform_row(self):
        s = nm.softmax(Tensor(np.zeros((1, 4))))
        np.testing.assert_allclose(s.data, [[0.25, 0.25, 0.25, 0.25]])

    def test_softmax_rows_sum_to_one_and_positive(self):
        rng = np.random.default_rng(0)
        s = nm.softmax(Tensor(rng.normal(size=(7, 9)) * 10))
        np.testing.assert_allclose(s.data.sum(axis=1), 1.0, atol=1e-9)
        assert (s.data > 0).all()

    def test_layer_norm_constant_row_is_zero_before_gain_bias(self):
        x = Tensor(np.full((2, 5), 3.3))
        out = nm.layer_norm(x, Tensor(np.ones(5), requires_grad=True),
                            Tensor(np.zeros(5), requires_grad=True))
        np.testing.assert_allclose(out.data, 0.0)

    def test_matmul_identity(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 4))
        out = nm.matmul(Tensor(np.eye(4)), Tensor(x))
        np.testing.assert_array_equal(out.data, x)

    def test_masked_fill_blocks_entries(self):
        x = Tensor(np.ones((2, 2)))
        mask = np.array([[True, False], [False, False]])
        out = nm.masked_fill(x, mask, -5.0)
        np.testing.assert_array_equal(out.data, [[-5.0, 1.0], [1.0, 1.0]])

    def test_forward_deterministic_under_seed(self):
        def run():
            rng = np.random.default_rng(42)
            x = Tensor(rng.normal(size=(3, 3)))
            return nm.softmax(nm.matmul(x, Tensor(rng.normal(size=(3, 3))))).data

        np.testing.assert_array_equal(run(), run())


class TestShapeErrors:
    def test_matmul_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            nm.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_add_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            nm.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))

    def test_embedding_id_out_of_range(self):
        with pytest.raises(NumericsError):
            nm.embedding_lookup(Tensor(np.zeros((3, 2))), np.array([3]))

    def test_cross_entropy_target_out_of_range(self):
        with pytest.raises(NumericsError):
            nm.cross_entropy_from_logits(Tensor(np.zeros((1, 3))), np.array([5]))

    def test_backward_rejects_non_scalar(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(NumericsError):
            backward(nm.scale(x, 2.0))


class TestBackwardAnalytic:
    def test_square_gradient(self):
        x = Tensor(np.array(3.0).reshape(1, 1), requires_grad=True)
        backward(nm.tsum(nm.mul(x, x)))
        np.testing.assert_allclose(x.grad, [[6.0]])

    def test_softmax_cross_entropy_gradient_is_p_minus_onehot(self):
        rng = np.random.default_rng(2)
        logits = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        targets = np.array([0, 3, 5, 2])
        backward(nm.tsum(nm.cross_entropy_from_logits(logits, targets)))
        m = logits.data.max(axis=1, keepdims=True)
        e = np.exp(logits.data - m)
        p = e / e.sum(axis=1, keepdims=True)
        onehot = np.zeros_like(p)
        onehot[np.arange(4), targets] = 1.0
        np.testing.assert_allclose(logits.grad, p - onehot, atol=1e-12)

    def test_grad_present_iff_requires_grad(self):
        a = Tensor(np.ones(3), requires_grad=True)
        b = Tensor(np.ones(3))
        assert a.grad is not None and b.grad is None
        out = nm.add(a, b)
        assert out.requires_grad and out.grad is not None

    def test_gradients_accumulate_across_backward_calls(self):
        x = Tensor(np.array([[2.0]]), requires_grad=True)
        backward(nm.tsum(nm.mul(x, x)))
        backward(nm.tsum(nm.mul(x, x)))
        np.testing.assert_allclose(x.grad, [[8.0]])


OPS = [
    ("add", lambda rng: _binary(rng, nm.add)),
    ("add_broadcast", lambda rng: _add_broadcast(rng)),
    ("mul", lambda rng: _binary(rng, nm.mul)),
    ("matmul", lambda rng: _matmul(rng)),
    ("scale", lambda rng: _unary(rng, lambda t: nm.scale(t, -1.7))),
    ("concat", lambda rng: _concat(rng)),
    ("rows", lambda rng: _unary(rng, lambda t: nm.rows(t, 1, 3), shape=(4, 3))),
    ("cols", lambda rng: _unary(rng, lambda t: nm.cols(t, 0, 2), shape=(3, 4))),
    ("transpose", lambda rng: _unary(rng, nm.transpose)),
    ("embedding", lambda rng: _embedding(rng)),
    ("softmax", lambda rng: _unary(rng, nm.softmax)),
    ("sigmoid", lambda rng: _unary(rng, nm.sigmoid)),
    ("tanh", lambda rng: _unary(rng, nm.tanh)),
    ("relu", lambda rng: _unary(rng, nm.relu)),
    ("layer_norm", lambda rng: _layer_norm(rng)),
    ("masked_fill", lambda rng: _masked_fill(rng)),
    ("mean", lambda rng: _unary(rng, nm.tmean, reduce=False)),
    ("cross_entropy", lambda rng: _cross_entropy(rng)),
    ("bce", lambda rng: _bce(rng)),
]


def _unary(rng, op, shape=None, reduce=True):
    shape = shape or tuple(rng.integers(1, 6, size=2))
    x = rand_tensor(rng, shape)
    if reduce:
        return (lambda: nm.tsum(op(x))), [x]
    return (lambda: op(x)), [x]


def _binary(rng, op):
    shape = tuple(rng.integers(1, 6, size=2))
    a, b = rand_tensor(rng, shape), rand_tensor(rng, shape)
    return (lambda: nm.tsum(op(a, b))), [a, b]


def _add_broadcast(rng):
    a = rand_tensor(rng, (4, 3))
    b = rand_tensor(rng, (3,))
    return (lambda: nm.tsum(nm.add(a, b))), [a, b]


def _matmul(rng):
    n, k, m = rng.integers(1, 6, size=3)
    a, b = rand_tensor(rng, (n, k)), rand_tensor(rng, (k, m))
    return (lambda: nm.tsum(nm.matmul(a, b))), [a, b]


def _concat(rng):
    a, b = rand_tensor(rng, (2, 3)), rand_tensor(rng, (4, 3))
    return (lambda: nm.tsum(nm.concat([a, b], axis=0))), [a, b]


def _embedding(rng):
    table = rand_tensor(rng, (6, 4))
    ids = rng.integers(0, 6, size=5)
    return (lambda: nm.tsum(nm.embedding_lookup(table, ids))), [table]


def _layer_norm(rng):
    x = rand_tensor(rng, (3, 5))
    g = rand_tensor(rng, (5,))
    b = rand_tensor(rng, (5,))
    return (lambda: nm.tsum(nm.layer_norm(x, g, b))), [x, g, b]


def _masked_fill(rng):
    x = rand_tensor(rng, (4, 4))
    mask = rng.random((4, 4)) < 0.3
    return (lambda: nm.tsum(nm.masked_fill(x, mask, 0.5))), [x]


def _cross_entropy(rng):
    logits = rand_tensor(rng, (4, 5))
    targets = rng.integers(0, 5, size=4)
    return (lambda: nm.tmean(nm.cross_entropy_from_logits(logits, targets))), [logits]


def _bce(rng):
    # keep probabilities interior so the clamp never bites
    x = Tensor(rng.uniform(-2, 2, size=(1, 6)), requires_grad=True)
    t = rng.integers(0, 2, size=(1, 6)).astype(float)
    return (lambda: nm.binary_cross_entropy(nm.sigmoid(x), t)), [x]


@pytest.mark.parametrize("name,builder", OPS, ids=[n for n, _ in OPS])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_op_gradients_match_central_differences(name, builder, seed):
    rng = np.random.default_rng(seed * 1000 + 7)
    closure, tensors = builder(rng)
    assert_grad_matches(closure, tensors, rtol=1e-5, atol=1e-7)


class TestAdam:
    def _param(self, value):
        return Parameter("x", Tensor(np.asarray(value, dtype=float), requires_grad=True))

    def test_one_step_descends_on_quadratic(self):
        p = self._param([1.0])
        backward(nm.tsum(nm.mul(p.tensor, p.tensor)))
        adam_step([p], lr=1e-3)
        assert p.tensor.data[0] < 1.0
        assert p.tensor.grad is not None and (p.tensor.grad == 0).all()

    def test_zero_gradient_leaves_parameter_unchanged(self):
        p = self._param([0.7, -0.2])
        adam_step([p], lr=1e-3)
        np.testing.assert_array_equal(p.tensor.data, [0.7, -0.2])

    def test_500_steps_reach_quadratic_optimum(self):
        p = self._param([0.3, -0.4])
        for _ in range(500):
            backward(nm.tsum(nm.mul(p.tensor, p.tensor)))
            adam_step([p], lr=2e-3)
        assert np.abs(p.tensor.data).max() < 1e-2

    def test_missing_grad_rejected(self):
        p = self._param([1.0])
        p.tensor.grad = None
        with pytest.raises(NumericsError):
            adam_step([p])


class TestCheckGradients:
    def test_linear_layer_passes_tight_tolerance(self):
        rng = np.random.default_rng(3)
        w = Parameter("w", Tensor(rng.normal(size=(4, 3)), requires_grad=True))
        b = Parameter("b", Tensor(rng.normal(size=(3,)), requires_grad=True))
        x = Tensor(rng.normal(size=(5, 4)))

        def closure():
            return nm.tmean(nm.tanh(nm.add(nm.matmul(x, w.tensor), b.tensor)))

        report = check_gradients(closure, [w, b], h=1e-5, tol=1e-6,
                                 max_coords_per_param=12)
        assert report.passed, str(report)

    def test_corrupted_gradient_fails(self):
        rng = np.random.default_rng(4)
        w = Parameter("w", Tensor(rng.normal(size=(3, 3)), requires_grad=True))
        x = Tensor(rng.normal(size=(2, 3)))

        def closure():
            out = nm.tmean(nm.matmul(x, w.tensor))
            # corrupt: detach from the true graph, attach a wrong backward
            bad = nm.Tensor(out.data)
            bad.requires_grad = True
            bad.grad = np.zeros_like(bad.data)
            bad._parents = (w.tensor,)
            bad._backward = lambda g: (np.full_like(w.tensor.data, 0.123),)
            return bad

        report = check_gradients(closure, [w], h=1e-5, tol=1e-3)
        assert not report.passed

    def test_report_prints_per_parameter_lines(self):
        rng = np.random.default_rng(5)
        w = Parameter("layer.w", Tensor(rng.normal(size=(2, 2)), requires_grad=True))

        def closure():
            return nm.tsum(nm.mul(w.tensor, w.tensor))

        report = check_gradients(closure, [w], h=1e-5, tol=1e-4)
        text = str(report)
        assert "layer.w" in text and ("PASS" in text or "FAIL" in text)


class TestBce:
    def test_half_probs_give_n_log2(self):
        probs = nm.sigmoid(Tensor(np.zeros((1, 44)), requires_grad=True))
        t = np.zeros((1, 44))
        t[0, :7] = 1.0
        loss = nm.binary_cross_entropy(probs, t)
        np.testing.assert_allclose(loss.item(), 44 * math.log(2), rtol=1e-12)

    def test_saturated_probs_stay_finite(self):
        probs = nm.sigmoid(Tensor(np.array([[80.0, -80.0]]), requires_grad=True))
        loss = nm.binary_cross_entropy(probs, np.array([[1.0, 0.0]]))
        assert np.isfinite(loss.item())


class TestNoGrad:
    def test_no_tape_inside_no_grad(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with nm.no_grad():
            out = nm.scale(x, 3.0)
        assert not out.requires_grad and out._backward is None
