import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from app.errors import DimensionError, InputError, LabelIndexError, NumericError, UsageError
from app.services import numerics as nx
from app.services.numerics import Graph, Rng, Tensor, gradcheck, precision


def t64(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True, dtype=np.float64)


@pytest.mark.parametrize("op", [nx.add, nx.sub, nx.mul])
def test_binary_ops_broadcast_gradients(rng, op):
    a = t64(rng, 3, 4)
    b = t64(rng, 4)
    assert gradcheck(lambda: nx.sum_(op(a, b) * op(a, b)), [a, b]) < 1e-4


def test_div_gradient(rng):
    a = t64(rng, 2, 3)
    b = Tensor(rng.uniform(1.0, 2.0, (2, 1)), requires_grad=True, dtype=np.float64)
    assert gradcheck(lambda: nx.sum_(nx.div(a, b)), [a, b]) < 1e-4


def test_relu_reshape_transpose_mean_gradients(rng):
    x = t64(rng, 2, 3, 4)
    w = t64(rng, 4, 3)

    def loss():
        y = nx.relu(nx.matmul(x, w))
        y = nx.transpose(nx.reshape(y, (3, 2, 3)), (2, 0, 1))
        return nx.mean(y * y)
    assert gradcheck(loss, [x, w]) < 1e-4


def test_batched_matmul_gradient(rng):
    a = t64(rng, 2, 3, 4, 5)
    b = t64(rng, 2, 3, 5, 2)
    assert gradcheck(lambda: nx.sum_(nx.matmul(a, b)), [a, b]) < 1e-4


def test_matmul_dimension_error(rng):
    with pytest.raises(DimensionError):
        nx.matmul(t64(rng, 2, 3), t64(rng, 4, 2))


def test_embedding_scatter_adds_repeated_ids(rng):
    table = t64(rng, 5, 3)
    ids = np.array([[1, 1, 4], [0, 1, 2]])
    loss = nx.sum_(nx.embedding(table, ids))
    nx.backward(loss)
    assert_array_equal(table.grad[:, 0], [1, 3, 1, 0, 1])
    assert gradcheck(lambda: nx.sum_(nx.embedding(table, ids) * nx.embedding(table, ids)), [table]) < 1e-4


def test_embedding_rejects_out_of_range_ids(rng):
    with pytest.raises(LabelIndexError):
        nx.embedding(t64(rng, 5, 3), np.array([5]))


def test_masked_softmax_rows_and_gradient(rng):
    x = t64(rng, 2, 4)
    mask = np.array([[True, True, False, True], [True, False, False, False]])
    y = nx.softmax(x, axis=-1, where=mask)
    assert_allclose(y.data.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(y.data[~mask] == 0.0)
    assert y.data[1, 0] == 1.0
    target = rng.standard_normal((2, 4))
    assert gradcheck(lambda: nx.sum_(nx.softmax(x, -1, where=mask) * target), [x]) < 1e-4


def test_softmax_fully_masked_row_is_input_error(rng):
    with pytest.raises(InputError):
        nx.softmax(t64(rng, 1, 3), where=np.zeros((1, 3), bool))


def test_layer_norm_gradient(rng):
    x = t64(rng, 3, 5)
    gamma = t64(rng, 5)
    beta = t64(rng, 5)
    target = rng.standard_normal((3, 5))
    assert gradcheck(lambda: nx.sum_(nx.layer_norm(x, gamma, beta) * target), [x, gamma, beta]) < 1e-4


def test_layer_norm_output_is_standardized(rng):
    x = t64(rng, 4, 6)
    ones = Tensor(np.ones(6), dtype=np.float64)
    zeros = Tensor(np.zeros(6), dtype=np.float64)
    y = nx.layer_norm(x, ones, zeros).data
    assert_allclose(y.mean(axis=-1), 0.0, atol=1e-12)
    assert_allclose(y.var(axis=-1), 1.0, rtol=1e-3)


def test_cross_entropy_value_and_gradient(rng):
    logits = t64(rng, 4, 3)
    targets = np.array([0, 2, 1, 2])
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    expected = -np.mean(shifted[np.arange(4), targets] - np.log(np.exp(shifted).sum(axis=1)))
    assert_allclose(nx.cross_entropy(logits, targets).item(), expected, rtol=1e-12)
    assert gradcheck(lambda: nx.cross_entropy(logits, targets), [logits]) < 1e-4


def test_cross_entropy_uniform_logits_is_log_classes():
    logits = Tensor(np.zeros((2, 4)), dtype=np.float64)
    assert_allclose(nx.cross_entropy(logits, [0, 3]).item(), np.log(4))


def test_cross_entropy_rejects_bad_target(rng):
    with pytest.raises(LabelIndexError):
        nx.cross_entropy(t64(rng, 2, 3), [0, 3])


def test_masked_mean_ignores_masked_positions(rng):
    x = t64(rng, 2, 3, 4)
    valid = np.array([[True, True, False], [True, False, False]])
    pooled = nx.masked_mean(x, valid)
    assert_allclose(pooled.data[0], x.data[0, :2].mean(axis=0))
    assert_allclose(pooled.data[1], x.data[1, 0])
    assert gradcheck(lambda: nx.sum_(nx.masked_mean(x, valid) * nx.masked_mean(x, valid)), [x]) < 1e-4


def test_dropout_eval_is_identity_and_train_scales(rng):
    x = Tensor(np.ones((200, 50)), requires_grad=True, dtype=np.float64)
    assert nx.dropout(x, 0.5, training=False) is x
    y = nx.dropout(x, 0.5, training=True, rng=Rng(1))
    kept = y.data != 0
    assert np.all(y.data[kept] == 2.0)
    assert 0.45 < kept.mean() < 0.55
    nx.backward(nx.sum_(y))
    assert_array_equal(x.grad, y.data)


def test_gradients_accumulate_across_backward_calls(rng):
    x = t64(rng, 3)
    nx.backward(nx.sum_(x * 2.0))
    nx.backward(nx.sum_(x * 3.0))
    assert_allclose(x.grad, 5.0)


def test_shared_subexpression_gradient_is_summed(rng):
    x = t64(rng, 3)
    y = x * x
    nx.backward(nx.sum_(y + y))
    assert_allclose(x.grad, 4 * x.data)


def test_backward_requires_scalar_graph(rng):
    x = t64(rng, 3)
    with pytest.raises(UsageError):
        nx.backward(x * 2.0)
    with pytest.raises(UsageError):
        nx.backward(Tensor(1.0))


def test_item_needs_one_element(rng):
    assert Tensor([[2.5]]).item() == 2.5
    with pytest.raises(UsageError):
        t64(rng, 3).item()


def test_graph_orders_inputs_before_outputs(rng):
    x = t64(rng, 2)
    loss = nx.sum_(nx.relu(x * 2.0))
    graph = Graph(loss)
    assert graph.ops() == ["mul", "relu", "sum"]
    assert graph.nodes[0] is x


def test_no_grad_records_nothing(rng):
    x = t64(rng, 2)
    with nx.no_grad():
        y = x * 2.0
    assert not y.requires_grad and y.is_leaf


def test_non_finite_result_raises_numeric_error():
    x = Tensor(np.array([1.0, 0.0]), dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"), pytest.raises(NumericError):
        nx.div(x, Tensor(np.array([0.0, 0.0]), dtype=np.float64))


def test_unbroadcast_sums_leading_and_singleton_axes():
    grad = np.ones((2, 3, 4))
    assert_array_equal(nx.unbroadcast(grad, (3, 1)), np.full((3, 1), 8.0))
    assert_array_equal(nx.unbroadcast(grad, (4,)), np.full(4, 6.0))


def test_precision_switches_default_dtype():
    assert Tensor([1.0]).dtype == np.float32
    with precision(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32


def test_gradcheck_detects_wrong_gradient(rng):
    x = t64(rng, 3)

    def broken():
        y = nx.mul(x, x)
        if y._node is not None:
            y._node.backward_fn = lambda g: (g, None)
        return nx.sum_(y)
    assert gradcheck(broken, [x]) > 1e-2
    with pytest.raises(NumericError):
        gradcheck(broken, [x], raise_on_failure=True)


def test_gradcheck_requires_float64():
    with pytest.raises(UsageError):
        gradcheck(lambda: None, [Tensor([1.0], requires_grad=True)])


def test_rng_split_is_deterministic_and_label_dependent():
    a = Rng(7).split("dropout").random(5)
    b = Rng(7).split("dropout").random(5)
    c = Rng(7).split("shuffle").random(5)
    assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(Rng(7).random(5), Rng(8).random(5))
