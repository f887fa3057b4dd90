import logging
import math

import numpy as np
import pytest

from anchorparse import tensor as T
from anchorparse.errors import ContractError, ShapeError
from anchorparse.tensor import Tensor, no_grad, numerical_gradient, relative_error


def leaf(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


class TestForward:
    def test_matmul_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(T.matmul(a, b).data, b.data)

    def test_matmul_inner_product(self):
        out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_matmul_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError) as info:
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        assert "(2, 3)" in str(info.value)

    def test_softmax_symmetric(self):
        out = T.softmax(Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3)

    def test_softmax_is_stable_for_large_logits(self):
        out = T.softmax(Tensor([1000.0, 0.0]))
        assert not np.isnan(out.data).any()
        np.testing.assert_allclose(out.data, [1.0, 0.0], atol=1e-300)

    def test_log_softmax_matches_log_of_softmax(self):
        x = Tensor(np.array([[0.3, -1.2, 2.0]]))
        np.testing.assert_allclose(T.log_softmax(x).data, np.log(T.softmax(x).data))

    def test_cross_entropy_uniform(self):
        logits = Tensor(np.zeros((3, 4)))
        loss = T.cross_entropy_from_logits(logits, np.array([1, 2, 3]), np.array([True, False, True]))
        assert loss.item() == pytest.approx(math.log(4))

    def test_cross_entropy_confident(self):
        logits = np.zeros((2, 4))
        logits[np.arange(2), [1, 3]] = 20.0
        loss = T.cross_entropy_from_logits(Tensor(logits), np.array([1, 3]))
        assert loss.item() < 1e-7

    def test_cross_entropy_all_ignored_is_zero_and_logged(self, caplog):
        logits = Tensor(np.random.default_rng(0).normal(size=(3, 5)), requires_grad=True)
        with caplog.at_level(logging.WARNING, logger="anchorparse.tensor"):
            loss = T.cross_entropy_from_logits(logits, np.array([0, 1, 2]), np.ones(3, dtype=bool))
        assert loss.item() == 0.0
        assert "ignored" in caplog.text

    def test_masked_fill_rejects_bad_mask(self):
        with pytest.raises(ShapeError):
            T.masked_fill(Tensor(np.zeros((2, 3))), np.zeros((4,), dtype=bool), 0.0)

    def test_embedding_id_out_of_range(self):
        with pytest.raises(ContractError):
            T.embedding_lookup(Tensor(np.zeros((4, 2))), np.array([[0, 4]]))

    def test_default_dtype_switch(self):
        T.set_default_dtype("float32")
        assert Tensor([1.0]).dtype == np.float32
        T.set_default_dtype("float64")
        with pytest.raises(ContractError):
            T.set_default_dtype("int32")

    def test_scoped_default_dtype(self):
        with T.default_dtype("float32"):
            assert Tensor([1.0]).dtype == np.float32
        assert T.get_default_dtype() is np.float64
        with pytest.raises(RuntimeError):
            with T.default_dtype():
                T.set_default_dtype("float32")
                raise RuntimeError("boom")
        assert Tensor([1.0]).dtype == np.float64


class TestBackward:
    def test_square_sum(self):
        x = leaf([1.0, 2.0])
        T.tensor_sum(x * x).backward()
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_fan_out_accumulates(self):
        x = leaf(3.0)
        (x + x).backward()
        assert x.grad == pytest.approx(2.0)

    def test_non_scalar_backward_is_a_contract_error(self):
        x = leaf([1.0, 2.0])
        with pytest.raises(ContractError):
            (x * x).backward()

    def test_no_grad_records_nothing(self):
        x = leaf([1.0, 2.0])
        with no_grad():
            y = x * x
        assert y.creator is None
        assert not y.requires_grad

    def test_broadcast_gradient_is_reduced(self):
        x = leaf(np.ones((3, 4)))
        b = leaf(np.ones(4))
        T.tensor_sum(x + b).backward()
        np.testing.assert_allclose(b.grad, [3.0] * 4)


def _check(fn, *inputs, tol=1e-6):
    for x in inputs:
        x.grad = None
    fn().backward()
    for x in inputs:
        numeric = numerical_gradient(fn, x)
        assert relative_error(x.grad, numeric) < tol, f"gradient mismatch for shape {x.shape}"


class TestGradientChecks:
    rng = np.random.default_rng(7)

    def test_matmul_softmax_chain(self):
        a = leaf(self.rng.normal(size=(3, 4)))
        b = leaf(self.rng.normal(size=(4, 2)))
        _check(lambda: T.tensor_sum(T.softmax(T.matmul(a, b), axis=-1) * Tensor([[1.0, 3.0]])), a, b)

    def test_layer_norm(self):
        x = leaf(self.rng.normal(size=(2, 5)))
        gamma = leaf(self.rng.normal(size=5))
        beta = leaf(self.rng.normal(size=5))
        weights = Tensor(self.rng.normal(size=(2, 5)))
        _check(lambda: T.tensor_sum(T.layer_norm(x, gamma, beta) * weights), x, gamma, beta)

    def test_gelu_and_relu(self):
        x = leaf(self.rng.normal(size=(6,)) + 0.05)
        _check(lambda: T.tensor_sum(T.gelu(x) * T.gelu(x)), x)
        _check(lambda: T.tensor_sum(T.relu(x) * x), x)

    def test_cross_entropy_with_ignored_positions(self):
        logits = leaf(self.rng.normal(size=(2, 3, 5)))
        targets = np.array([[1, 2, 0], [4, 4, 3]])
        ignore = np.array([[False, True, False], [False, False, True]])
        _check(lambda: T.cross_entropy_from_logits(logits, targets, ignore), logits)

    def test_reshape_transpose_getitem_concat_stack(self):
        x = leaf(self.rng.normal(size=(2, 3)))
        y = leaf(self.rng.normal(size=(2, 3)))

        def fn():
            z = T.concat([T.transpose(x, (1, 0)), T.transpose(y, (1, 0))], axis=1)
            s = T.stack([T.reshape(z, (12,)), T.reshape(z * z, (12,))], axis=0)
            return T.tensor_sum(T.getitem(s, (slice(None), slice(1, 9))) * T.scale(s[:, :8], 0.5))

        _check(fn, x, y)

    def test_embedding_and_masked_fill(self):
        weight = leaf(self.rng.normal(size=(5, 3)))
        ids = np.array([[0, 2, 2], [4, 1, 0]])
        mask = np.array([[[False, True, False]]])

        def fn():
            e = T.embedding_lookup(weight, ids)
            return T.tensor_sum(T.softmax(T.masked_fill(e, mask, -1e9), axis=-1) * e)

        _check(fn, weight)

    def test_mean_and_sub(self):
        x = leaf(self.rng.normal(size=(3, 4)))
        _check(lambda: T.tensor_sum((x - T.mean(x, axis=-1, keepdims=True)) * x), x)


def test_relative_error_zero_for_zero_vectors():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
