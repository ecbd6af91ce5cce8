"""
Layer zoo and the GradNet combinator.

Every gradual layer computes ``(1 - g) * early(x) + g * late(x)`` for the
gate ``g`` carried by the :class:`ForwardContext`. The functional forms
(``grelu_forward``, ``gradual_pool_forward``, ...) hold the math; the
:class:`Layer` classes own parameters, shapes and random streams and are
what :class:`Model` strings together.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .annealing import GateValue
from .constants import (
    DEFAULT_BN_EPS,
    DEFAULT_BN_MOMENTUM,
    LEAKY_SLOPES,
    ActivationKind,
    LayerKind,
    Mode,
    Padding,
    PoolKind,
)
from .models import BuildError, ConfigurationError, ContractError, DimensionError
from .optim import orthogonal_init
from .tensor import (
    Tape,
    Tensor,
    add,
    add_bias,
    batch_norm,
    conv2d,
    conv_output_hw,
    flatten,
    leaky_relu,
    matmul,
    mul,
    pool2d,
    relu,
    scale,
    unary_activation,
)

logger = logging.getLogger(__name__)

Shape = Tuple[int, ...]
GateLike = Union[GateValue, float]


def _g(value: GateLike) -> float:
    return value.g if isinstance(value, GateValue) else GateValue(float(value)).g


class Parameter:
    """Named mutable array; trainable weights and running statistics alike."""

    def __init__(self, name: str, value: np.ndarray) -> None:
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> Shape:
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={list(self.shape)})"


@dataclass
class ForwardContext:
    """
    Everything a forward pass needs besides the input.

    Attributes
    ----------
    mode : Mode
        Train or eval behaviour for dropout and batch norm
    gate : GateValue
        Interpolation weight shared by all gradual layers
    tape : Tape, optional
        Tape to record on; ``None`` runs without gradient tracking
    seed, epoch, batch : int
        Keys of the counter-based random streams used by stochastic layers
    """

    mode: Mode = Mode.EVAL
    gate: GateValue = field(default_factory=lambda: GateValue(1.0))
    tape: Optional[Tape] = None
    seed: int = 0
    epoch: int = 0
    batch: int = 0
    bindings: Dict[int, Tuple[Parameter, Tensor]] = field(default_factory=dict)

    def param(self, parameter: Parameter) -> Tensor:
        """Tensor view of ``parameter``, watched on the tape when there is one."""
        bound = self.bindings.get(id(parameter))
        if bound is not None:
            return bound[1]
        if self.tape is None:
            tensor = Tensor(parameter.value)
        else:
            tensor = self.tape.watch(parameter.value, parameter.name)
        self.bindings[id(parameter)] = (parameter, tensor)
        return tensor

    def rng(self, stream: Sequence[int]) -> np.random.Generator:
        """Philox generator keyed by (seed, stream, epoch, batch)."""
        key = np.random.SeedSequence([self.seed, *stream, self.epoch, self.batch])
        return np.random.Generator(np.random.Philox(key))

    def gradients(self, parameters: Dict[str, Parameter]) -> Dict[str, np.ndarray]:
        """Gradient per parameter name after ``tape.backward``; zeros if unused."""
        grads = {}
        for name, parameter in parameters.items():
            bound = self.bindings.get(id(parameter))
            if bound is None or self.tape is None:
                grads[name] = np.zeros(parameter.shape)
            else:
                grads[name] = self.tape.grad(bound[1])
        return grads


@dataclass(frozen=True)
class DropoutSpec:
    """Drop probability ``p`` in [0, 1)."""

    p: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p < 1.0:
            raise ConfigurationError(f"dropout p must lie in [0, 1), got {self.p}")


@dataclass
class BatchNormState:
    """
    Affine parameters and running statistics of one batch-norm layer.

    Attributes
    ----------
    gamma, beta : Parameter
        Per-feature scale and shift
    running_mean, running_var : Parameter
        Exponential moving averages of train-time batch statistics
    momentum : float
        Weight of the old running value in each update
    eps : float
        Variance floor
    """

    gamma: Parameter
    beta: Parameter
    running_mean: Parameter
    running_var: Parameter
    momentum: float = DEFAULT_BN_MOMENTUM
    eps: float = DEFAULT_BN_EPS

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ConfigurationError(f"batch norm eps must be positive, got {self.eps}")
        if not 0.0 < self.momentum < 1.0:
            raise ConfigurationError(
                f"batch norm momentum must lie in (0, 1), got {self.momentum}"
            )

    @classmethod
    def create(
        cls,
        features: int,
        momentum: float = DEFAULT_BN_MOMENTUM,
        eps: float = DEFAULT_BN_EPS,
    ) -> "BatchNormState":
        return cls(
            gamma=Parameter("gamma", np.ones(features)),
            beta=Parameter("beta", np.zeros(features)),
            running_mean=Parameter("running_mean", np.zeros(features)),
            running_var=Parameter("running_var", np.ones(features)),
            momentum=momentum,
            eps=eps,
        )


# ---------------------------------------------------------------------------
# Functional forms


def interpolate(early_out: Tensor, late_out: Tensor, g: GateLike) -> Tensor:
    """
    Weighted mean ``(1 - g) * early_out + g * late_out``.

    The endpoints return the corresponding branch unchanged.

    Raises
    ------
    BuildError
        If the branch outputs differ in shape
    """
    if early_out.shape != late_out.shape:
        raise BuildError(
            f"GradNet branches disagree: early {list(early_out.shape)}, "
            f"late {list(late_out.shape)}"
        )
    weight = _g(g)
    if weight == 0.0:
        return early_out
    if weight == 1.0:
        return late_out
    return add(scale(early_out, 1.0 - weight), scale(late_out, weight))


def dense_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x W + b`` of an N×d batch."""
    return add_bias(matmul(x, weight), bias)


def grelu_forward(x: Tensor, g: GateLike) -> Tensor:
    """Identity-to-ReLU GradNet, folded into a leaky ReLU of slope ``1 - g``."""
    return leaky_relu(x, 1.0 - _g(g))


def inverse_grelu_forward(x: Tensor, g: GateLike) -> Tensor:
    """Absolute-value-to-ReLU GradNet, a leaky ReLU of slope ``g - 1``."""
    return leaky_relu(x, _g(g) - 1.0)


def dropout_forward(
    x: Tensor, spec: DropoutSpec, mode: Mode, rng: Optional[np.random.Generator]
) -> Tensor:
    """Inverted dropout: keep with probability ``1 - p`` and rescale by ``1/(1 - p)``."""
    if mode == Mode.EVAL or spec.p == 0.0:
        return x
    if rng is None:
        raise ContractError("train-mode dropout needs a random generator")
    keep = rng.random(x.shape) >= spec.p
    return mul(x, Tensor._wrap(keep / (1.0 - spec.p)))


def gradual_dropout_forward(
    x: Tensor,
    spec: DropoutSpec,
    g: GateLike,
    mode: Mode,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Identity-to-dropout GradNet; eval mode is the identity for every ``g``."""
    weight = _g(g)
    if mode == Mode.EVAL or weight == 0.0:
        return x
    return interpolate(x, dropout_forward(x, spec, mode, rng), weight)


def gradual_pool_forward(
    x: Tensor, window: int, stride: int, g: GateLike
) -> Tensor:
    """Mean-to-max pooling GradNet over the same windows."""
    weight = _g(g)
    if weight == 0.0:
        return pool2d(x, window, stride, PoolKind.MEAN)
    if weight == 1.0:
        return pool2d(x, window, stride, PoolKind.MAX)
    mean = pool2d(x, window, stride, PoolKind.MEAN)
    return interpolate(mean, pool2d(x, window, stride, PoolKind.MAX), weight)


def batchnorm_forward(
    x: Tensor,
    state: BatchNormState,
    mode: Mode,
    gamma: Optional[Tensor] = None,
    beta: Optional[Tensor] = None,
) -> Tensor:
    """
    Batch normalization with running statistics.

    Train mode normalizes with the biased batch statistics and folds them
    into the running averages; eval mode normalizes with the running
    averages and leaves the state untouched.

    Raises
    ------
    ContractError
        In train mode with a batch of one
    """
    gamma = Tensor(state.gamma.value) if gamma is None else gamma
    beta = Tensor(state.beta.value) if beta is None else beta
    if mode == Mode.EVAL:
        stats = (state.running_mean.value, state.running_var.value)
        out, _, _ = batch_norm(x, gamma, beta, state.eps, stats)
        return out
    out, mean, var = batch_norm(x, gamma, beta, state.eps)
    keep = state.momentum
    state.running_mean.value = keep * state.running_mean.value + (1.0 - keep) * mean
    state.running_var.value = keep * state.running_var.value + (1.0 - keep) * var
    return out


def gradual_bn_forward(
    x: Tensor,
    state: BatchNormState,
    g: GateLike,
    mode: Mode,
    gamma: Optional[Tensor] = None,
    beta: Optional[Tensor] = None,
) -> Tensor:
    """Batch-norm-to-identity GradNet; at ``g = 1`` no statistics are touched."""
    weight = _g(g)
    if weight == 1.0:
        return x
    return interpolate(batchnorm_forward(x, state, mode, gamma, beta), x, weight)


def gradual_conv_forward(x: Tensor, kernel: Tensor, g: GateLike) -> Tensor:
    """Identity-to-convolution GradNet (same padding, stride 1, C -> C)."""
    if kernel.data.ndim != 4 or kernel.shape[0] != kernel.shape[1]:
        raise BuildError(
            f"gradual conv needs a C x C x kh x kw kernel, got {list(kernel.shape)}"
        )
    weight = _g(g)
    if weight == 0.0:
        return x
    return interpolate(x, conv2d(x, kernel, 1, Padding.SAME), weight)


def nin_branch(conv_out: Tensor, pointwise: Tensor) -> Tensor:
    """NiN micro-network on top of a convolution: relu then 1×1 convolution."""
    return conv2d(relu(conv_out), pointwise, 1, Padding.VALID)


def gradual_nin_forward(
    x: Tensor,
    kernel: Tensor,
    pointwise: Tensor,
    g: GateLike,
    stride: int = 1,
    padding: Padding = Padding.SAME,
) -> Tensor:
    """Convolution-to-NiN GradNet; both branches share the convolution ``kernel``."""
    if pointwise.shape[2:] != (1, 1) or pointwise.shape[0] != pointwise.shape[1]:
        raise BuildError(f"NiN needs an F x F x 1 x 1 kernel, got {list(pointwise.shape)}")
    if pointwise.shape[1] != kernel.shape[0]:
        raise BuildError(
            f"NiN 1x1 kernel expects {pointwise.shape[1]} channels, "
            f"convolution yields {kernel.shape[0]}"
        )
    conv_out = conv2d(x, kernel, stride, padding)
    weight = _g(g)
    if weight == 0.0:
        return conv_out
    return interpolate(conv_out, nin_branch(conv_out, pointwise), weight)


# ---------------------------------------------------------------------------
# Layers


class Layer(ABC):
    """
    Base class for network layers.

    Shapes passed to :meth:`build` exclude the batch axis. ``stream`` keys
    the layer's random generator and is assigned by :class:`Model`.
    """

    kind: LayerKind

    def __init__(self) -> None:
        self.stream: Tuple[int, ...] = (0,)
        self.input_shape: Optional[Shape] = None
        self.output_shape: Optional[Shape] = None
        self.gate = GateValue(1.0)

    def build(self, input_shape: Shape, rng: np.random.Generator, gain: float) -> Shape:
        """Create parameters for ``input_shape`` and return the output shape."""
        self.input_shape = tuple(input_shape)
        self.output_shape = self._build(self.input_shape, rng, gain)
        return self.output_shape

    def _build(self, input_shape: Shape, rng: np.random.Generator, gain: float) -> Shape:
        return input_shape

    def assign_stream(self, stream: Tuple[int, ...]) -> None:
        self.stream = stream

    def parameters(self) -> Dict[str, Parameter]:
        """Trainable parameters keyed by local name."""
        return {}

    def buffers(self) -> Dict[str, Parameter]:
        """Non-trainable state (running statistics) keyed by local name."""
        return {}

    @abstractmethod
    def forward(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        """Apply the layer to a batch."""

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.kind.value})"


class Flatten(Layer):
    kind = LayerKind.FLATTEN

    def _build(self, input_shape, rng, gain):
        return (int(np.prod(input_shape)),)

    def forward(self, x, ctx):
        return flatten(x)


class Dense(Layer):
    """Fully connected layer with orthogonal weights and zero bias."""

    kind = LayerKind.DENSE

    def __init__(self, units: int) -> None:
        super().__init__()
        if units < 1:
            raise ConfigurationError(f"dense units must be >= 1, got {units}")
        self.units = units
        self.weight: Optional[Parameter] = None
        self.bias: Optional[Parameter] = None

    def _build(self, input_shape, rng, gain):
        if len(input_shape) != 1:
            raise BuildError(
                f"dense expects a flat input, got {list(input_shape)}; add a flatten layer"
            )
        self.weight = Parameter("weight", orthogonal_init(input_shape[0], self.units, gain, rng))
        self.bias = Parameter("bias", np.zeros(self.units))
        return (self.units,)

    def parameters(self):
        if self.weight is None or self.bias is None:
            return {}
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, ctx):
        return dense_forward(x, ctx.param(self.weight), ctx.param(self.bias))


class Activation(Layer):
    """Static pointwise nonlinearity."""

    def __init__(self, kind: LayerKind, slope: Optional[float] = None) -> None:
        super().__init__()
        self.kind = kind
        if kind in LEAKY_SLOPES:
            self.activation = ActivationKind.LEAKY_RELU
            self.slope: Optional[float] = LEAKY_SLOPES[kind] if slope is None else slope
        else:
            self.activation = {
                LayerKind.RELU: ActivationKind.RELU,
                LayerKind.ABS: ActivationKind.ABS,
                LayerKind.IDENTITY: ActivationKind.IDENTITY,
            }[kind]
            self.slope = None

    def forward(self, x, ctx):
        return unary_activation(self.activation, x, self.slope)


class GradualReLU(Layer):
    """GReLU, or inverse GReLU when ``inverse`` is set; zero-overhead slope form."""

    def __init__(self, inverse: bool = False) -> None:
        super().__init__()
        self.inverse = inverse
        self.kind = LayerKind.INVERSE_GRELU if inverse else LayerKind.GRELU

    def forward(self, x, ctx):
        if self.inverse:
            return inverse_grelu_forward(x, ctx.gate)
        return grelu_forward(x, ctx.gate)


class Dropout(Layer):
    kind = LayerKind.DROPOUT

    def __init__(self, p: float) -> None:
        super().__init__()
        self.spec = DropoutSpec(p)

    def forward(self, x, ctx):
        rng = ctx.rng(self.stream) if ctx.mode == Mode.TRAIN else None
        return dropout_forward(x, self.spec, ctx.mode, rng)


class Pool(Layer):
    """Mean or max pooling over square windows."""

    def __init__(self, pool: PoolKind, window: int, stride: Optional[int] = None) -> None:
        super().__init__()
        self.kind = LayerKind.MEAN_POOL if pool == PoolKind.MEAN else LayerKind.MAX_POOL
        self.pool = pool
        self.window = window
        self.stride = window if stride is None else stride
        if self.window < 1 or self.stride < 1:
            raise ConfigurationError(
                f"pool window and stride must be >= 1, got {window}, {stride}"
            )

    def _build(self, input_shape, rng, gain):
        return _pool_shape(input_shape, self.window, self.stride)

    def forward(self, x, ctx):
        return pool2d(x, self.window, self.stride, self.pool)


def _pool_shape(input_shape: Shape, window: int, stride: int) -> Shape:
    if len(input_shape) != 3:
        raise BuildError(f"pooling expects C x H x W input, got {list(input_shape)}")
    channels, height, width = input_shape
    if window > height or window > width:
        raise BuildError(f"pool window {window} exceeds spatial extent {height}x{width}")
    return (channels, (height - window) // stride + 1, (width - window) // stride + 1)


class BatchNorm(Layer):
    """Batch normalization over axis 1 of dense or convolutional activations."""

    kind = LayerKind.BATCHNORM

    def __init__(self, momentum: float = DEFAULT_BN_MOMENTUM, eps: float = DEFAULT_BN_EPS):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.state: Optional[BatchNormState] = None

    def _build(self, input_shape, rng, gain):
        if len(input_shape) not in (1, 3):
            raise BuildError(f"batch norm expects d or C x H x W input, got {list(input_shape)}")
        self.state = BatchNormState.create(input_shape[0], self.momentum, self.eps)
        return input_shape

    def parameters(self):
        if self.state is None:
            return {}
        return {"gamma": self.state.gamma, "beta": self.state.beta}

    def buffers(self):
        if self.state is None:
            return {}
        return {"running_mean": self.state.running_mean, "running_var": self.state.running_var}

    def forward(self, x, ctx):
        state = self.state
        return batchnorm_forward(
            x, state, ctx.mode, ctx.param(state.gamma), ctx.param(state.beta)
        )


class Conv(Layer):
    """2-D convolution with an orthogonally initialized kernel and zero bias."""

    kind = LayerKind.CONV

    def __init__(
        self,
        filters: Optional[int],
        kernel: int = 3,
        stride: int = 1,
        padding: Padding = Padding.SAME,
        bias: bool = True,
    ) -> None:
        super().__init__()
        if kernel < 1 or stride < 1 or (filters is not None and filters < 1):
            raise ConfigurationError(
                f"conv needs filters, kernel and stride >= 1, got {filters}, {kernel}, {stride}"
            )
        self.filters = filters
        self.kernel_size = kernel
        self.stride = stride
        self.padding = padding
        self.use_bias = bias
        self.kernel: Optional[Parameter] = None
        self.bias: Optional[Parameter] = None

    def _build(self, input_shape, rng, gain):
        if len(input_shape) != 3:
            raise BuildError(f"conv expects C x H x W input, got {list(input_shape)}")
        channels, height, width = input_shape
        filters = channels if self.filters is None else self.filters
        size = self.kernel_size
        try:
            out_h, out_w = conv_output_hw(height, width, size, size, self.stride, self.padding)
        except DimensionError as exc:
            raise BuildError(str(exc)) from exc
        flat = orthogonal_init(filters, channels * size * size, gain, rng)
        self.kernel = Parameter("kernel", flat.reshape(filters, channels, size, size))
        self.bias = Parameter("bias", np.zeros(filters)) if self.use_bias else None
        return (filters, out_h, out_w)

    def parameters(self):
        params = {}
        if self.kernel is not None:
            params["kernel"] = self.kernel
        if self.bias is not None:
            params["bias"] = self.bias
        return params

    def forward(self, x, ctx):
        out = conv2d(x, ctx.param(self.kernel), self.stride, self.padding)
        if self.bias is None:
            return out
        return add_bias(out, ctx.param(self.bias))


class GradNet(Layer):
    """
    Generic combinator ``(1 - g) * early(x) + g * late(x)``.

    ``fixed_g`` pins the weight, which turns the combinator into a constant
    mixture (e.g. constant mixed pooling). At an exact endpoint the inactive
    branch is not evaluated.
    """

    def __init__(
        self,
        early: Layer,
        late: Layer,
        kind: LayerKind = LayerKind.GRADNET,
        fixed_g: Optional[float] = None,
    ) -> None:
        super().__init__()
        self.kind = kind
        self.early = early
        self.late = late
        self.fixed_g = None if fixed_g is None else GateValue(fixed_g)

    def _build(self, input_shape, rng, gain):
        early_shape = self.early.build(input_shape, rng, gain)
        late_shape = self.late.build(input_shape, rng, gain)
        if early_shape != late_shape:
            raise BuildError(
                f"{self.kind.value} branches disagree: early {self.early.kind.value} "
                f"-> {list(early_shape)}, late {self.late.kind.value} -> {list(late_shape)}"
            )
        return early_shape

    def assign_stream(self, stream):
        super().assign_stream(stream)
        self.early.assign_stream(stream + (0,))
        self.late.assign_stream(stream + (1,))

    def parameters(self):
        params = {f"early.{k}": v for k, v in self.early.parameters().items()}
        params.update({f"late.{k}": v for k, v in self.late.parameters().items()})
        return params

    def buffers(self):
        buffers = {f"early.{k}": v for k, v in self.early.buffers().items()}
        buffers.update({f"late.{k}": v for k, v in self.late.buffers().items()})
        return buffers

    def weight(self, ctx: ForwardContext) -> float:
        return (ctx.gate if self.fixed_g is None else self.fixed_g).g

    def forward(self, x, ctx):
        g = self.weight(ctx)
        if g == 0.0:
            return self.early.forward(x, ctx)
        if g == 1.0:
            return self.late.forward(x, ctx)
        return interpolate(self.early.forward(x, ctx), self.late.forward(x, ctx), g)


class GradualNiN(Layer):
    """Convolution-to-NiN GradNet sharing the leading convolution."""

    kind = LayerKind.GRADUAL_NIN

    def __init__(
        self,
        filters: int,
        kernel: int = 3,
        stride: int = 1,
        padding: Padding = Padding.SAME,
    ) -> None:
        super().__init__()
        self.conv = Conv(filters, kernel, stride, padding, bias=False)
        self.pointwise = Conv(filters, 1, 1, Padding.VALID, bias=False)

    def _build(self, input_shape, rng, gain):
        conv_shape = self.conv.build(input_shape, rng, gain)
        return self.pointwise.build(conv_shape, rng, gain)

    def parameters(self):
        if self.conv.kernel is None or self.pointwise.kernel is None:
            return {}
        return {"kernel": self.conv.kernel, "pointwise": self.pointwise.kernel}

    def forward(self, x, ctx):
        return gradual_nin_forward(
            x,
            ctx.param(self.conv.kernel),
            ctx.param(self.pointwise.kernel),
            ctx.gate,
            self.conv.stride,
            self.conv.padding,
        )


class GradualDropout(GradNet):
    """Identity-to-dropout GradNet whose eval form is exactly the identity."""

    def __init__(self, p: float) -> None:
        super().__init__(
            Activation(LayerKind.IDENTITY), Dropout(p), LayerKind.GRADUAL_DROPOUT
        )

    def forward(self, x, ctx):
        dropout = self.late
        rng = ctx.rng(dropout.stream) if ctx.mode == Mode.TRAIN else None
        return gradual_dropout_forward(x, dropout.spec, ctx.gate, ctx.mode, rng)


def gradual_dropout(p: float) -> GradNet:
    return GradualDropout(p)


def gradual_pool(window: int, stride: Optional[int] = None) -> GradNet:
    return GradNet(
        Pool(PoolKind.MEAN, window, stride),
        Pool(PoolKind.MAX, window, stride),
        LayerKind.GRADUAL_POOL,
    )


def mixed_pool_const(window: int, stride: Optional[int] = None, fixed_g: float = 0.5) -> GradNet:
    return GradNet(
        Pool(PoolKind.MEAN, window, stride),
        Pool(PoolKind.MAX, window, stride),
        LayerKind.MIXED_POOL_CONST,
        fixed_g=fixed_g,
    )


def gradual_batchnorm(
    momentum: float = DEFAULT_BN_MOMENTUM, eps: float = DEFAULT_BN_EPS
) -> GradNet:
    return GradNet(
        BatchNorm(momentum, eps), Activation(LayerKind.IDENTITY), LayerKind.GRADUAL_BATCHNORM
    )


def gradual_conv(kernel: int = 3, filters: Optional[int] = None) -> GradNet:
    """Identity-to-conv GradNet; ``filters`` must equal the input channels if given."""
    return GradNet(
        Activation(LayerKind.IDENTITY),
        Conv(filters, kernel, 1, Padding.SAME, bias=False),
        LayerKind.GRADUAL_CONV,
    )


# ---------------------------------------------------------------------------
# Model


class Model:
    """
    Ordered stack of layers sharing one gate.

    Parameters
    ----------
    layers : list of Layer
        Layers in application order
    input_shape : tuple of int
        Per-sample input shape (C, H, W) or (d,)
    num_classes : int, optional
        Expected width of the final layer's output

    Attributes
    ----------
    gate : GateValue
        Gate the current weights are meant to run at; set when a trained
        snapshot is restored
    """

    def __init__(
        self,
        layers: List[Layer],
        input_shape: Sequence[int],
        num_classes: Optional[int] = None,
    ) -> None:
        if not layers:
            raise BuildError("a model needs at least one layer")
        self.layers = layers
        self.input_shape: Shape = tuple(input_shape)
        self.num_classes = num_classes
        self.output_shape: Optional[Shape] = None

    def build(self, rng: np.random.Generator, gain: float = 1.0) -> "Model":
        """
        Propagate shapes through every layer and initialize parameters.

        Raises
        ------
        BuildError
            Naming the index of the first layer that cannot accept its input
        """
        shape = self.input_shape
        for index, layer in enumerate(self.layers):
            layer.assign_stream((index,))
            try:
                shape = layer.build(shape, rng, gain)
            except (BuildError, DimensionError, ConfigurationError) as exc:
                raise BuildError(f"layer {index} ({layer.kind.value}): {exc}") from exc
        if self.num_classes is not None and shape != (self.num_classes,):
            raise BuildError(
                f"final layer {len(self.layers) - 1} yields {list(shape)}, "
                f"expected [{self.num_classes}] class scores"
            )
        self.output_shape = shape
        logger.debug("built %d layers, output %s", len(self.layers), list(shape))
        return self

    def parameters(self) -> Dict[str, Parameter]:
        """Trainable parameters keyed ``<index>.<kind>.<name>``."""
        params = {}
        for index, layer in enumerate(self.layers):
            for name, parameter in layer.parameters().items():
                params[f"{index}.{layer.kind.value}.{name}"] = parameter
        return params

    def buffers(self) -> Dict[str, Parameter]:
        buffers = {}
        for index, layer in enumerate(self.layers):
            for name, buffer in layer.buffers().items():
                buffers[f"{index}.{layer.kind.value}.{name}"] = buffer
        return buffers

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def forward(self, x: Union[Tensor, np.ndarray], ctx: ForwardContext) -> Tensor:
        out = x if isinstance(x, Tensor) else Tensor(x)
        for layer in self.layers:
            out = layer.forward(out, ctx)
        return out

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter and buffer, keyed by qualified name."""
        state = {name: p.value.copy() for name, p in self.parameters().items()}
        state.update({name: b.value.copy() for name, b in self.buffers().items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Restore values saved by :meth:`state_dict`.

        Raises
        ------
        ContractError
            If names or shapes differ from this model's
        """
        targets = {**self.parameters(), **self.buffers()}
        if set(targets) != set(state):
            missing = sorted(set(targets) ^ set(state))
            raise ContractError(f"state does not match model; differing keys: {missing}")
        for name, target in targets.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != target.shape:
                raise ContractError(
                    f"{name}: saved shape {list(value.shape)} != model shape {list(target.shape)}"
                )
            target.value = value.copy()


def describe_gates(model: Model) -> List[str]:
    """Names of the layers whose output depends on the schedule's gate."""
    names = []
    for index, layer in enumerate(model.layers):
        pinned = isinstance(layer, GradNet) and layer.fixed_g is not None
        if isinstance(layer, (GradNet, GradualReLU, GradualNiN)) and not pinned:
            names.append(f"{index}.{layer.kind.value}")
    return names

