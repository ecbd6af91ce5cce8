"""Tests for the tensor core and its tape-based gradients."""

import math

import numpy as np
import pytest

from src.constants import ActivationKind, ElementwiseKind, Padding, PoolKind
from src.gradcheck import check_function, probe_input
from src.models import ContractError, DimensionError, TapeStateError
from src.tensor import (
    Tape,
    Tensor,
    add,
    add_bias,
    backward,
    batch_norm,
    conv2d,
    elementwise,
    finite_diff_grad,
    matmul,
    mul,
    pool2d,
    relative_error,
    scale,
    softmax_cross_entropy,
    sum_all,
    unary_activation,
)


def test_matmul_identity_and_arithmetic():
    """Identity and a direct row-by-column product."""
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(Tensor(np.eye(2)), m).data, m.data)
    assert matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\[2, 3\].*\[2, 3\]"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_backward_matches_finite_differences():
    rng = np.random.default_rng(0)
    error = check_function(
        lambda t: matmul(t[0], t[1]), [rng.uniform(-1, 1, (3, 4)), rng.uniform(-1, 1, (4, 2))]
    )
    assert error < 1e-6, f"relative error {error:.3e}"


def test_matmul_is_associative():
    rng = np.random.default_rng(1)
    a, b, c = (Tensor(rng.uniform(-1, 1, s)) for s in [(3, 4), (4, 5), (5, 2)])
    left = matmul(matmul(a, b), c).data
    right = matmul(a, matmul(b, c)).data
    assert np.max(np.abs(left - right)) < 1e-10


def test_elementwise_examples():
    assert add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).data.tolist() == [4.0, 6.0]
    assert scale(Tensor([1.0, -2.0]), 0.5).data.tolist() == [0.5, -1.0]
    assert (Tensor([1.0, 2.0]) - 1.0).data.tolist() == [0.0, 1.0]


def test_elementwise_shape_mismatch():
    with pytest.raises(DimensionError):
        elementwise(ElementwiseKind.ADD, Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))


def test_scale_rejects_tensor_operand():
    with pytest.raises(ContractError):
        elementwise(ElementwiseKind.SCALE, Tensor([1.0]), Tensor([2.0]))


def test_mul_backward_matches_finite_differences():
    rng = np.random.default_rng(2)
    error = check_function(
        lambda t: mul(t[0], t[1]), [rng.uniform(-1, 1, (2, 3)), rng.uniform(-1, 1, (2, 3))]
    )
    assert error < 1e-6, f"relative error {error:.3e}"


@pytest.mark.parametrize(
    "kind,slope,expected",
    [
        (ActivationKind.RELU, None, [0.0, 3.0]),
        (ActivationKind.LEAKY_RELU, 0.75, [-1.5, 3.0]),
        (ActivationKind.ABS, None, [2.0, 3.0]),
        (ActivationKind.IDENTITY, None, [-2.0, 3.0]),
    ],
)
def test_unary_activation_values(kind, slope, expected):
    assert unary_activation(kind, Tensor([-2.0, 3.0]), slope).data.tolist() == expected


def test_relu_subgradient_at_zero_uses_positive_branch():
    tape = Tape()
    x = tape.watch([0.0, -1.0])
    tape.backward(sum_all(unary_activation(ActivationKind.RELU, x)))
    assert tape.grad(x).tolist() == [1.0, 0.0]


def test_conv2d_identity_kernel_same_padding():
    x = Tensor(np.arange(18.0).reshape(1, 2, 3, 3))
    kernel = np.zeros((2, 2, 1, 1))
    kernel[0, 0, 0, 0] = kernel[1, 1, 0, 0] = 1.0
    assert np.array_equal(conv2d(x, Tensor(kernel), 1, Padding.SAME).data, x.data)


def test_conv2d_direct_arithmetic():
    x = Tensor(np.arange(1.0, 10.0).reshape(1, 1, 3, 3))
    out = conv2d(x, Tensor(np.ones((1, 1, 2, 2))), 1, Padding.VALID)
    assert out.data[0, 0].tolist() == [[12.0, 16.0], [24.0, 28.0]]


def test_conv2d_kernel_larger_than_input():
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))), 1, Padding.VALID)


@pytest.mark.parametrize(
    "stride,padding", [(1, Padding.SAME), (2, Padding.VALID), (2, Padding.SAME)]
)
def test_conv2d_backward_matches_finite_differences(stride, padding):
    rng = np.random.default_rng(3)
    error = check_function(
        lambda t: conv2d(t[0], t[1], stride, padding),
        [rng.uniform(-1, 1, (2, 2, 5, 5)), rng.uniform(-1, 1, (3, 2, 3, 3))],
    )
    assert error < 1e-5, f"relative error {error:.3e}"


def test_same_padding_keeps_spatial_size_for_even_kernel():
    out = conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 2, 2))), 1, Padding.SAME)
    assert out.shape == (1, 1, 4, 4)
    # the extra padded pixel sits on the high side
    assert out.data[0, 0, 0, 0] == 4.0
    assert out.data[0, 0, 3, 3] == 1.0


def test_pool2d_window_values():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
    assert pool2d(x, 2, 2, PoolKind.MEAN).item() == 2.5
    assert pool2d(x, 2, 2, PoolKind.MAX).item() == 4.0


def test_pool2d_constant_input_mean_equals_max():
    x = Tensor(np.full((2, 3, 4, 4), 0.7))
    assert np.array_equal(pool2d(x, 2, 2, PoolKind.MEAN).data, pool2d(x, 2, 2, PoolKind.MAX).data)


def test_pool2d_mean_never_exceeds_max():
    x = Tensor(np.random.default_rng(4).uniform(-1, 1, (3, 2, 6, 6)))
    for window, stride in [(2, 2), (3, 1), (2, 1)]:
        mean = pool2d(x, window, stride, PoolKind.MEAN).data
        peak = pool2d(x, window, stride, PoolKind.MAX).data
        assert np.all(mean <= peak)


def test_pool2d_window_too_large():
    with pytest.raises(DimensionError):
        pool2d(Tensor(np.ones((1, 1, 2, 2))), 3, 1, PoolKind.MAX)


def test_max_pool_gradient_goes_to_first_tie():
    tape = Tape()
    x = tape.watch(np.ones((1, 1, 2, 2)))
    tape.backward(sum_all(pool2d(x, 2, 2, PoolKind.MAX)))
    assert tape.grad(x)[0, 0].tolist() == [[1.0, 0.0], [0.0, 0.0]]


def test_max_pool_backward_away_from_ties():
    x = probe_input((2, 2, 4, 4), np.random.default_rng(5))
    error = check_function(lambda t: pool2d(t[0], 2, 2, PoolKind.MAX), [x])
    assert error < 1e-6, f"relative error {error:.3e}"


def test_softmax_cross_entropy_uniform_logits_is_log_k():
    loss = softmax_cross_entropy(Tensor(np.zeros((4, 10))), [0, 3, 5, 9]).item()
    assert loss == pytest.approx(math.log(10), abs=1e-12)


def test_softmax_cross_entropy_saturated():
    loss = softmax_cross_entropy(Tensor([[10.0, -10.0]]), [0]).item()
    assert loss == pytest.approx(2.06e-9, rel=1e-2)
    assert loss >= 0.0


def test_softmax_cross_entropy_gradient_is_softmax_minus_onehot():
    logits = np.array([[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]])
    labels = np.array([1, 2])
    tape = Tape()
    x = tape.watch(logits)
    tape.backward(softmax_cross_entropy(x, labels))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    probs[np.arange(2), labels] -= 1.0
    assert np.allclose(tape.grad(x), probs / 2, atol=1e-12)
    error = check_function(lambda t: softmax_cross_entropy(t[0], labels), [logits])
    assert error < 1e-6


def test_softmax_cross_entropy_rejects_out_of_range_label():
    with pytest.raises(IndexError):
        softmax_cross_entropy(Tensor(np.zeros((1, 3))), [3])


def test_backward_square_sum():
    tape = Tape()
    x = tape.watch([1.0, 2.0])
    backward(tape, sum_all(mul(x, x)))
    assert tape.grad(x).tolist() == [2.0, 4.0]


def test_backward_constant_function_has_zero_gradient():
    tape = Tape()
    x = tape.watch([1.0, 2.0])
    y = tape.watch([3.0])
    tape.backward(sum_all(y))
    assert tape.grad(x).tolist() == [0.0, 0.0]


def test_backward_sums_fan_out_contributions():
    tape = Tape()
    x = tape.watch([1.5, -0.5])
    y = scale(x, 3.0)
    loss = sum_all(add(mul(y, x), y))
    tape.backward(loss)
    # d/dx (3x^2 + 3x) = 6x + 3
    assert np.allclose(tape.grad(x), [12.0, 0.0])


def test_backward_twice_is_a_state_error():
    tape = Tape()
    x = tape.watch([1.0])
    loss = sum_all(x)
    tape.backward(loss)
    with pytest.raises(TapeStateError):
        tape.backward(loss)


def test_backward_rejects_non_scalar_loss():
    tape = Tape()
    x = tape.watch([1.0, 2.0])
    with pytest.raises(ContractError):
        tape.backward(scale(x, 2.0))


def test_operands_from_different_tapes_are_rejected():
    a = Tape().watch([1.0])
    b = Tape().watch([2.0])
    with pytest.raises(TapeStateError):
        add(a, b)


def test_three_layer_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    arrays = [
        rng.uniform(-1, 1, (4, 5)),
        rng.uniform(-1, 1, (5, 6)),
        rng.uniform(-1, 1, 6),
        rng.uniform(-1, 1, (6, 4)),
        rng.uniform(-1, 1, 4),
        rng.uniform(-1, 1, (4, 3)),
        rng.uniform(-1, 1, 3),
    ]
    labels = np.array([0, 2, 1, 2])

    def mlp(t):
        h = unary_activation(ActivationKind.LEAKY_RELU, add_bias(matmul(t[0], t[1]), t[2]), 0.1)
        h = unary_activation(ActivationKind.LEAKY_RELU, add_bias(matmul(h, t[3]), t[4]), 0.1)
        return softmax_cross_entropy(add_bias(matmul(h, t[5]), t[6]), labels)

    error = check_function(mlp, arrays)
    assert error < 1e-4, f"relative error {error:.3e}"


def test_finite_diff_of_sum_is_all_ones():
    grad = finite_diff_grad(lambda t: sum_all(t), np.array([[0.3, -2.0], [5.0, 1.0]]))
    assert np.allclose(grad.data, 1.0, atol=1e-8)


def test_finite_diff_of_square():
    grad = finite_diff_grad(lambda t: t.item() ** 2, np.array(3.0), 1e-5)
    assert grad.item() == pytest.approx(6.0, abs=1e-8)


def test_batch_norm_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    error = check_function(
        lambda t: batch_norm(t[0], t[1], t[2], 1e-5)[0],
        [rng.uniform(-1, 1, (5, 2, 3, 3)), rng.uniform(0.5, 1.5, 2), rng.uniform(-1, 1, 2)],
    )
    assert error < 1e-4, f"relative error {error:.3e}"


def test_batch_norm_needs_two_samples_for_batch_statistics():
    with pytest.raises(ContractError):
        batch_norm(Tensor(np.ones((1, 3))), Tensor(np.ones(3)), Tensor(np.zeros(3)), 1e-5)


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([1e-6])) == pytest.approx(1e-3)
    assert relative_error(np.array([2.0]), np.array([1.0])) == pytest.approx(0.5)


def test_tensor_is_immutable():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0
