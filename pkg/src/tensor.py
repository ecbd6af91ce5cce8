"""
Dense tensors with a define-by-run tape for reverse-mode gradients.

Every operation here takes and returns :class:`Tensor` values backed by
64-bit numpy arrays. When an operand was produced on a :class:`Tape` the
result is recorded on the same tape together with a vector-Jacobian
product, so :meth:`Tape.backward` can accumulate gradients in reverse
topological order. Tensors without a tape are constants.
"""

import logging
import math
from dataclasses import dataclass
from numbers import Real
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .constants import ActivationKind, ElementwiseKind, Padding, PoolKind
from .models import ConfigurationError, ContractError, DimensionError, TapeStateError

logger = logging.getLogger(__name__)

Array = np.ndarray
Scalar = Union[float, int]
VectorJacobian = Callable[[Array], Tuple[Optional[Array], ...]]


@dataclass(frozen=True)
class Node:
    """One recorded operation.

    Attributes
    ----------
    op_kind : str
        Name of the operation that produced the node
    inputs : tuple of int or None
        Node ids of the operands; ``None`` marks a constant operand
    vjp : callable or None
        Maps the output gradient to one gradient per operand; ``None`` for leaves
    shape : tuple of int
        Shape of the node's value
    name : str
        Optional label, set for watched parameters
    """

    op_kind: str
    inputs: Tuple[Optional[int], ...]
    vjp: Optional[VectorJacobian]
    shape: Tuple[int, ...]
    name: str = ""


class Tensor:
    """Immutable n-dimensional array of 64-bit reals.

    Parameters
    ----------
    data : array_like
        Values, copied and converted to float64
    tape : Tape, optional
        Tape the value was recorded on
    node_id : int, optional
        Index of the value's node on ``tape``
    """

    __slots__ = ("data", "tape", "node_id")

    def __init__(
        self,
        data: Union[Array, Sequence, Scalar],
        tape: Optional["Tape"] = None,
        node_id: Optional[int] = None,
    ) -> None:
        array = np.array(data, dtype=np.float64)
        array.flags.writeable = False
        self.data: Array = array
        self.tape = tape
        self.node_id = node_id

    @classmethod
    def _wrap(
        cls, array: Array, tape: Optional["Tape"] = None, node_id: Optional[int] = None
    ) -> "Tensor":
        # Internal constructor: takes ownership of ``array`` without copying.
        tensor = cls.__new__(cls)
        array = np.asarray(array, dtype=np.float64)
        array.flags.writeable = False
        tensor.data = array
        tensor.tape = tape
        tensor.node_id = node_id
        return tensor

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> Array:
        """Return the read-only backing array."""
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tracked = f", node={self.node_id}" if self.node_id is not None else ""
        return f"Tensor(shape={list(self.shape)}{tracked})"

    def __add__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        return elementwise(ElementwiseKind.ADD, self, other)

    def __sub__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        return elementwise(ElementwiseKind.SUB, self, other)

    def __mul__(self, other: Union["Tensor", Scalar]) -> "Tensor":
        return elementwise(ElementwiseKind.MUL, self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


class Tape:
    """Append-only record of a forward pass.

    A tape is rebuilt for every forward pass and supports exactly one call
    to :meth:`backward`.
    """

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self.gradients: Dict[int, Array] = {}
        self._consumed = False

    def __len__(self) -> int:
        return len(self.nodes)

    def watch(self, value: Union[Array, Tensor, Sequence, Scalar], name: str = "") -> Tensor:
        """Register ``value`` as a leaf whose gradient should be tracked."""
        data = value.data if isinstance(value, Tensor) else value
        tensor = Tensor(data)
        tensor.tape = self
        tensor.node_id = self._append(Node("leaf", (), None, tensor.shape, name))
        return tensor

    def record(
        self,
        op_kind: str,
        inputs: Sequence[Tensor],
        value: Array,
        vjp: VectorJacobian,
    ) -> Tensor:
        """Append a computed value and return it as a tracked tensor."""
        if self._consumed:
            raise TapeStateError("cannot record on a tape after backward")
        input_ids = tuple(t.node_id if t.tape is self else None for t in inputs)
        node_id = self._append(Node(op_kind, input_ids, vjp, tuple(value.shape)))
        return Tensor._wrap(value, self, node_id)

    def _append(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def backward(self, loss: Tensor) -> Dict[int, Array]:
        """
        Accumulate d(loss)/d(node) for every node the loss depends on.

        Parameters
        ----------
        loss : Tensor
            Single-element tensor recorded on this tape

        Returns
        -------
        dict of int to numpy.ndarray
            Gradient per node id, each shaped like its node's value

        Raises
        ------
        ContractError
            If the loss is not a scalar or does not belong to this tape
        TapeStateError
            If backward already ran on this tape
        """
        if self._consumed:
            raise TapeStateError("backward already ran on this tape; build a new one")
        if loss.tape is not self or loss.node_id is None:
            raise ContractError("loss was not recorded on this tape")
        if loss.size != 1:
            raise ContractError(f"loss must be a scalar, got shape {list(loss.shape)}")
        self._consumed = True

        grads: Dict[int, Array] = {loss.node_id: np.ones(loss.shape)}
        for node_id in range(loss.node_id, -1, -1):
            upstream = grads.get(node_id)
            node = self.nodes[node_id]
            if upstream is None or node.vjp is None:
                continue
            for input_id, grad in zip(node.inputs, node.vjp(upstream)):
                if input_id is None or grad is None:
                    continue
                if input_id in grads:
                    grads[input_id] = grads[input_id] + grad
                else:
                    grads[input_id] = grad
        self.gradients = grads
        return grads

    def grad(self, tensor: Tensor) -> Array:
        """Gradient of the last backward w.r.t. ``tensor``; zeros if unreached."""
        if tensor.tape is not self or tensor.node_id is None:
            raise ContractError("tensor was not recorded on this tape")
        grad = self.gradients.get(tensor.node_id)
        return np.zeros(tensor.shape) if grad is None else grad


def backward(tape: Tape, loss: Tensor) -> Dict[int, Array]:
    """Run reverse accumulation of ``loss`` on ``tape``."""
    return tape.backward(loss)


def _common_tape(tensors: Sequence[Tensor]) -> Optional[Tape]:
    tape = None
    for tensor in tensors:
        if tensor.tape is None:
            continue
        if tape is not None and tensor.tape is not tape:
            raise TapeStateError("operands were recorded on different tapes")
        tape = tensor.tape
    return tape


def _emit(op_kind: str, inputs: Sequence[Tensor], value: Array, vjp: VectorJacobian) -> Tensor:
    tape = _common_tape(inputs)
    if tape is None:
        return Tensor._wrap(value)
    return tape.record(op_kind, inputs, value, vjp)


def _as_tensor(value: Union[Tensor, Array, Sequence, Scalar]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of an m×k and a k×n tensor.

    Raises
    ------
    DimensionError
        If either operand is not 2-D or the inner dimensions differ
    """
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul cannot combine shapes {list(a.shape)} and {list(b.shape)}"
        )
    a_data, b_data = a.data, b.data

    def vjp(grad: Array) -> Tuple[Array, Array]:
        return grad @ b_data.T, a_data.T @ grad

    return _emit("matmul", (a, b), a_data @ b_data, vjp)


def elementwise(
    kind: ElementwiseKind, a: Tensor, b: Union[Tensor, Scalar]
) -> Tensor:
    """
    Apply a binary elementwise operation.

    ``b`` is either a tensor of exactly ``a``'s shape or a real scalar;
    ``SCALE`` and ``SHIFT`` accept only scalars.

    Raises
    ------
    DimensionError
        If ``b`` is a tensor with a different shape
    ContractError
        If ``SCALE``/``SHIFT`` is given a tensor operand
    """
    if isinstance(b, Real):
        return _scalar_elementwise(kind, a, float(b))
    if kind in (ElementwiseKind.SCALE, ElementwiseKind.SHIFT):
        raise ContractError(f"{kind.name.lower()} takes a scalar operand")
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(
            f"elementwise {kind.name.lower()} needs equal shapes, "
            f"got {list(a.shape)} and {list(b.shape)}"
        )
    a_data, b_data = a.data, b.data
    if kind == ElementwiseKind.ADD:
        return _emit("add", (a, b), a_data + b_data, lambda g: (g, g))
    if kind == ElementwiseKind.SUB:
        return _emit("sub", (a, b), a_data - b_data, lambda g: (g, -g))
    return _emit("mul", (a, b), a_data * b_data, lambda g: (g * b_data, g * a_data))


def _scalar_elementwise(kind: ElementwiseKind, a: Tensor, value: float) -> Tensor:
    if kind in (ElementwiseKind.ADD, ElementwiseKind.SHIFT):
        return _emit("shift", (a,), a.data + value, lambda g: (g,))
    if kind == ElementwiseKind.SUB:
        return _emit("shift", (a,), a.data - value, lambda g: (g,))
    return _emit("scale", (a,), a.data * value, lambda g: (g * value,))


def add(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    return elementwise(ElementwiseKind.ADD, a, b)


def mul(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    return elementwise(ElementwiseKind.MUL, a, b)


def scale(a: Tensor, factor: Scalar) -> Tensor:
    return elementwise(ElementwiseKind.SCALE, a, factor)


def unary_activation(
    kind: ActivationKind, x: Tensor, slope: Optional[float] = None
) -> Tensor:
    """
    Apply a pointwise activation.

    The subgradient at 0 is taken from the ``x >= 0`` branch.

    Parameters
    ----------
    kind : ActivationKind
        Activation to apply
    x : Tensor
        Input of any shape
    slope : float, optional
        Negative-side slope, required for ``LEAKY_RELU``

    Raises
    ------
    ConfigurationError
        If ``LEAKY_RELU`` is requested without a finite slope
    """
    if kind == ActivationKind.IDENTITY:
        return x
    data = x.data
    positive = data >= 0
    if kind == ActivationKind.RELU:
        local = positive.astype(np.float64)
        return _emit("relu", (x,), data * local, lambda g: (g * local,))
    if kind == ActivationKind.ABS:
        local = np.where(positive, 1.0, -1.0)
        return _emit("abs", (x,), np.abs(data), lambda g: (g * local,))
    if slope is None or not math.isfinite(slope):
        raise ConfigurationError(f"leaky_relu needs a finite slope, got {slope}")
    local = np.where(positive, 1.0, slope)
    return _emit("leaky_relu", (x,), data * local, lambda g: (g * local,))


def relu(x: Tensor) -> Tensor:
    return unary_activation(ActivationKind.RELU, x)


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    return unary_activation(ActivationKind.LEAKY_RELU, x, slope)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Reshape without copying the values."""
    original = x.shape
    try:
        value = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {list(original)} to {list(shape)}") from exc
    return _emit("reshape", (x,), value, lambda g: (g.reshape(original),))


def flatten(x: Tensor) -> Tensor:
    """Collapse every axis after the batch axis."""
    return reshape(x, (x.shape[0], -1))


def sum_all(x: Tensor) -> Tensor:
    """Sum of every element, as a 0-d tensor."""
    shape = x.shape
    return _emit("sum", (x,), np.asarray(x.data.sum()), lambda g: (np.full(shape, float(g)),))


def _channel_view(x: Tensor, vector: Tensor, what: str) -> Tuple[int, ...]:
    if x.data.ndim < 2 or vector.shape != (x.shape[1],):
        raise DimensionError(
            f"{what} of shape {list(vector.shape)} does not match "
            f"input {list(x.shape)} along axis 1"
        )
    return (1, x.shape[1]) + (1,) * (x.data.ndim - 2)


def _other_axes(ndim: int) -> Tuple[int, ...]:
    return (0,) + tuple(range(2, ndim))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-feature (axis 1) vector to ``x``."""
    view = _channel_view(x, bias, "bias")
    axes = _other_axes(x.data.ndim)

    def vjp(grad: Array) -> Tuple[Array, Array]:
        return grad, grad.sum(axis=axes)

    return _emit("add_bias", (x, bias), x.data + bias.data.reshape(view), vjp)


def _same_padding(size: int, kernel: int, stride: int) -> Tuple[int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def conv_output_hw(
    height: int,
    width: int,
    kernel_h: int,
    kernel_w: int,
    stride: int = 1,
    padding: Padding = Padding.VALID,
) -> Tuple[int, int]:
    """Spatial output size of :func:`conv2d`; raises DimensionError if it is empty."""
    if padding == Padding.SAME:
        height_pad = sum(_same_padding(height, kernel_h, stride))
        width_pad = sum(_same_padding(width, kernel_w, stride))
    else:
        height_pad = width_pad = 0
    padded_h, padded_w = height + height_pad, width + width_pad
    if kernel_h > padded_h or kernel_w > padded_w:
        raise DimensionError(
            f"kernel {kernel_h}x{kernel_w} exceeds padded input {padded_h}x{padded_w}"
        )
    return (padded_h - kernel_h) // stride + 1, (padded_w - kernel_w) // stride + 1


def conv2d(
    x: Tensor,
    kernel: Tensor,
    stride: int = 1,
    padding: Padding = Padding.VALID,
) -> Tensor:
    """
    2-D cross-correlation of an N×C×H×W input with an F×C×kh×kw kernel.

    ``SAME`` padding adds zeros symmetrically, with the extra pixel on the
    high side when the total is odd.

    Raises
    ------
    DimensionError
        On channel mismatch or a kernel larger than the padded input
    ConfigurationError
        If ``stride`` is below 1
    """
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    if x.data.ndim != 4 or kernel.data.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise DimensionError(
            f"conv2d cannot combine input {list(x.shape)} with kernel {list(kernel.shape)}"
        )
    n, c, h, w = x.shape
    f, _, kh, kw = kernel.shape
    if padding == Padding.SAME:
        pad_h, pad_w = _same_padding(h, kh, stride), _same_padding(w, kw, stride)
    else:
        pad_h, pad_w = (0, 0), (0, 0)
    padded_h, padded_w = h + sum(pad_h), w + sum(pad_w)
    if kh > padded_h or kw > padded_w:
        raise DimensionError(
            f"kernel {kh}x{kw} exceeds padded input {padded_h}x{padded_w}"
        )
    out_h = (padded_h - kh) // stride + 1
    out_w = (padded_w - kw) // stride + 1

    padded = np.pad(x.data, ((0, 0), (0, 0), pad_h, pad_w))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * out_h * out_w, c * kh * kw)
    kernel_matrix = kernel.data.reshape(f, -1)
    out = (cols @ kernel_matrix.T).reshape(n, out_h, out_w, f).transpose(0, 3, 1, 2)

    def vjp(grad: Array) -> Tuple[Array, Array]:
        grad_matrix = grad.transpose(0, 2, 3, 1).reshape(-1, f)
        grad_kernel = (grad_matrix.T @ cols).reshape(kernel.shape)
        grad_cols = (grad_matrix @ kernel_matrix).reshape(n, out_h, out_w, c, kh, kw)
        grad_padded = np.zeros(padded.shape)
        for i in range(kh):
            rows = slice(i, i + stride * (out_h - 1) + 1, stride)
            for j in range(kw):
                columns = slice(j, j + stride * (out_w - 1) + 1, stride)
                grad_padded[:, :, rows, columns] += grad_cols[..., i, j].transpose(0, 3, 1, 2)
        grad_x = grad_padded[:, :, pad_h[0] : pad_h[0] + h, pad_w[0] : pad_w[0] + w]
        return grad_x, grad_kernel

    return _emit("conv2d", (x, kernel), np.ascontiguousarray(out), vjp)


def pool2d(x: Tensor, window: int, stride: int, kind: PoolKind) -> Tensor:
    """
    Mean or max reduction over square windows of an N×C×H×W tensor.

    Max routes the gradient to the first maximal element in row-major order;
    mean spreads it uniformly.

    Raises
    ------
    DimensionError
        If the window exceeds either spatial extent
    """
    if x.data.ndim != 4:
        raise DimensionError(f"pool2d expects N x C x H x W, got {list(x.shape)}")
    if stride < 1 or window < 1:
        raise ConfigurationError(f"window and stride must be >= 1, got {window}, {stride}")
    n, c, h, w = x.shape
    if window > h or window > w:
        raise DimensionError(f"pool window {window} exceeds spatial extent {h}x{w}")
    out_h = (h - window) // stride + 1
    out_w = (w - window) // stride + 1
    windows = sliding_window_view(x.data, (window, window), axis=(2, 3))[
        :, :, ::stride, ::stride
    ]
    flat = windows.reshape(n, c, out_h, out_w, window * window)

    if kind == PoolKind.MEAN:
        out = flat.mean(axis=-1)
        weights = np.full(flat.shape, 1.0 / (window * window))
    else:
        winner = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, winner[..., None], axis=-1)[..., 0]
        weights = (np.arange(window * window) == winner[..., None]).astype(np.float64)

    def vjp(grad: Array) -> Tuple[Array]:
        grad_x = np.zeros((n, c, h, w))
        for i in range(window):
            rows = slice(i, i + stride * (out_h - 1) + 1, stride)
            for j in range(window):
                columns = slice(j, j + stride * (out_w - 1) + 1, stride)
                grad_x[:, :, rows, columns] += grad * weights[..., i * window + j]
        return (grad_x,)

    return _emit(f"{kind.name.lower()}_pool", (x,), out, vjp)


def softmax_cross_entropy(logits: Tensor, labels: Union[Array, Sequence[int]]) -> Tensor:
    """
    Mean negative log-likelihood of ``labels`` under ``softmax(logits)``.

    Raises
    ------
    DimensionError
        If logits are not N×K or the label count differs from N
    IndexError
        If a label lies outside ``[0, K)``
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(
            f"logits {list(logits.shape)} do not match labels {list(labels.shape)}"
        )
    n, k = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = np.mean(log_norm - shifted[rows, labels])

    def vjp(grad: Array) -> Tuple[Array]:
        probs = np.exp(shifted - log_norm[:, None])
        probs[rows, labels] -= 1.0
        return (probs * (float(grad) / n),)

    return _emit("softmax_cross_entropy", (logits,), np.asarray(loss), vjp)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    eps: float,
    stats: Optional[Tuple[Array, Array]] = None,
) -> Tuple[Tensor, Array, Array]:
    """
    Normalize ``x`` per feature (axis 1) and apply the affine ``gamma``/``beta``.

    Parameters
    ----------
    x : Tensor
        N×d or N×C×H×W input
    gamma, beta : Tensor
        Per-feature scale and shift
    eps : float
        Variance floor, must be positive
    stats : tuple of numpy.ndarray, optional
        Fixed (mean, variance); when omitted the biased batch statistics are used

    Returns
    -------
    tuple
        Normalized tensor, and the mean and variance that were applied

    Raises
    ------
    ContractError
        If batch statistics are requested for a batch of one
    """
    if eps <= 0:
        raise ConfigurationError(f"batch norm eps must be positive, got {eps}")
    view = _channel_view(x, gamma, "gamma")
    _channel_view(x, beta, "beta")
    axes = _other_axes(x.data.ndim)
    data = x.data
    if stats is None:
        if x.shape[0] < 2:
            raise ContractError("batch statistics need a batch of at least 2")
        mean = data.mean(axis=axes)
        var = data.var(axis=axes)
        batch_stats = True
    else:
        mean, var = stats
        batch_stats = False
    inv_std = 1.0 / np.sqrt(var + eps)
    normalized = (data - mean.reshape(view)) * inv_std.reshape(view)
    gamma_b = gamma.data.reshape(view)
    out = normalized * gamma_b + beta.data.reshape(view)
    count = data.size // data.shape[1]

    def vjp(grad: Array) -> Tuple[Array, Array, Array]:
        grad_gamma = (grad * normalized).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_norm = grad * gamma_b
        if not batch_stats:
            return grad_norm * inv_std.reshape(view), grad_gamma, grad_beta
        sum_grad = grad_norm.sum(axis=axes, keepdims=True)
        sum_dot = (grad_norm * normalized).sum(axis=axes, keepdims=True)
        grad_x = (inv_std.reshape(view) / count) * (
            count * grad_norm - sum_grad - normalized * sum_dot
        )
        return grad_x, grad_gamma, grad_beta

    result = _emit("batch_norm", (x, gamma, beta), out, vjp)
    return result, mean, var


def finite_diff_grad(
    f: Callable[[Tensor], Union[Tensor, float]], x: Union[Tensor, Array], eps: float = 1e-5
) -> Tensor:
    """
    Central-difference estimate of the gradient of a scalar function.

    Parameters
    ----------
    f : callable
        Maps a tensor shaped like ``x`` to a scalar (float or single-element tensor)
    x : Tensor or numpy.ndarray
        Point of evaluation
    eps : float
        Perturbation size, must be positive

    Returns
    -------
    Tensor
        ``(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`` for every element ``i``
    """
    if eps <= 0:
        raise ContractError(f"finite difference step must be positive, got {eps}")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    grad = np.zeros(base.shape)

    def evaluate(point: Array) -> float:
        value = f(Tensor._wrap(point.copy()))
        return value.item() if isinstance(value, Tensor) else float(value)

    flat = base.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        upper = evaluate(base)
        flat[i] = original - eps
        lower = evaluate(base)
        flat[i] = original
        grad_flat[i] = (upper - lower) / (2.0 * eps)
    return Tensor._wrap(grad)


def relative_error(analytic: Array, numeric: Array, floor: float = 1e-3) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.shape != numeric.shape:
        raise DimensionError(
            f"cannot compare gradients of shapes {list(analytic.shape)} "
            f"and {list(numeric.shape)}"
        )
    if analytic.size == 0:
        return 0.0
    scale_ = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale_))
