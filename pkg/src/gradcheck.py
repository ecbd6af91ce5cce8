"""Finite-difference verification of every layer kind and tensor operation."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .annealing import GateValue
from .constants import (
    DEFAULT_FD_EPS,
    DEFAULT_GRADCHECK_TOL,
    GRADCHECK_GATES,
    LayerKind,
    Mode,
    Padding,
    PoolKind,
)
from .layers import (
    Activation,
    BatchNorm,
    Conv,
    Dense,
    Dropout,
    Flatten,
    ForwardContext,
    GradNet,
    GradualNiN,
    GradualReLU,
    Layer,
    Pool,
    gradual_batchnorm,
    gradual_conv,
    gradual_dropout,
    gradual_pool,
    mixed_pool_const,
)
from .models import GradcheckEntry
from .tensor import (
    Tape,
    Tensor,
    batch_norm,
    conv2d,
    finite_diff_grad,
    matmul,
    mul,
    pool2d,
    relative_error,
    softmax_cross_entropy,
    sum_all,
)

logger = logging.getLogger(__name__)

Shape = Tuple[int, ...]
GradHook = Callable[[List[np.ndarray]], List[np.ndarray]]

KINK_MARGIN = 1e-3


def probe_input(shape: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """
    Random values with magnitudes in (0.5, 1], all distinct.

    Magnitudes are a spaced permutation, so max pooling never sees ties and
    relu/abs never see a value near their kink.
    """
    size = int(np.prod(shape))
    magnitudes = 0.5 + 0.5 * (rng.permutation(size) + 1) / size
    signs = rng.choice([-1.0, 1.0], size)
    return (signs * magnitudes).reshape(tuple(shape))


def check_function(
    fn: Callable[[List[Tensor]], Tensor],
    arrays: Sequence[np.ndarray],
    seed: int = 0,
    grad_hook: Optional[GradHook] = None,
    eps: float = DEFAULT_FD_EPS,
) -> float:
    """
    Worst relative error between backward and central differences.

    The output of ``fn`` is reduced to a scalar with a fixed random
    projection whose entries have magnitude in [0.5, 1].

    Parameters
    ----------
    fn : callable
        Differentiable function of the tensors in ``arrays``
    arrays : sequence of numpy.ndarray
        Point of evaluation, one array per argument
    seed : int
        Seed of the projection
    grad_hook : callable, optional
        Applied to the analytic gradients before comparison
    eps : float
        Finite-difference step

    Returns
    -------
    float
        Largest relative error over all arguments
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    probe = fn([Tensor(a) for a in arrays])
    projection = probe_input(probe.shape, np.random.default_rng([seed, 1]))

    def scalar(tensors: List[Tensor]) -> Tensor:
        return sum_all(mul(fn(tensors), Tensor._wrap(projection)))

    tape = Tape()
    watched = [tape.watch(a, f"arg{i}") for i, a in enumerate(arrays)]
    loss = scalar(watched)
    if loss.tape is tape:
        tape.backward(loss)
        analytic = [tape.grad(w) for w in watched]
    else:
        analytic = [np.zeros(a.shape) for a in arrays]
    if grad_hook is not None:
        analytic = grad_hook(analytic)

    worst = 0.0
    for i, array in enumerate(arrays):
        constants = [Tensor(a) for a in arrays]

        def at(t: Tensor, i: int = i, constants: List[Tensor] = constants) -> float:
            return scalar(constants[:i] + [t] + constants[i + 1 :]).item()

        numeric = finite_diff_grad(at, array, eps)
        worst = max(worst, relative_error(analytic[i], numeric.data))
    return worst


def _kink_free(layer: Layer, x: np.ndarray) -> bool:
    if not isinstance(layer, GradualNiN):
        return True
    conv = layer.conv
    out = conv2d(Tensor(x), Tensor(conv.kernel.value), conv.stride, conv.padding)
    return bool(np.min(np.abs(out.data)) >= KINK_MARGIN)


def check_layer(
    layer: Layer,
    input_shape: Sequence[int],
    g: float,
    tol: float = DEFAULT_GRADCHECK_TOL,
    batch: int = 3,
    seed: int = 0,
    grad_hook: Optional[GradHook] = None,
    name: Optional[str] = None,
) -> GradcheckEntry:
    """
    Gradient-check ``layer`` in train mode at gate ``g``.

    The layer is built for ``input_shape``; gradients with respect to the
    input and every trainable parameter are compared. Stochastic layers
    replay the same mask on every evaluation.
    """
    layer.build(tuple(input_shape), np.random.default_rng(seed), 1.0)
    params = list(layer.parameters().values())
    rng = np.random.default_rng(seed)
    x = probe_input((batch, *input_shape), rng)
    for _ in range(100):
        if _kink_free(layer, x):
            break
        x = probe_input((batch, *input_shape), rng)
    gate_value = GateValue(g)

    def forward(tensors: List[Tensor]) -> Tensor:
        ctx = ForwardContext(Mode.TRAIN, gate_value, None, seed)
        for parameter, tensor in zip(params, tensors[1:]):
            ctx.bindings[id(parameter)] = (parameter, tensor)
        return layer.forward(tensors[0], ctx)

    error = check_function(forward, [x] + [p.value for p in params], seed, grad_hook)
    label = name or layer.kind.value
    entry: GradcheckEntry = {
        "layer": label,
        "g": float(g),
        "max_rel_error": error,
        "passed": bool(error < tol),
    }
    if not entry["passed"]:
        logger.warning("gradcheck %s at g=%.2f: relative error %.3e", label, g, error)
    return entry


# Layer factories and input shapes (without the batch axis) of the suite.
LAYER_CASES: List[Tuple[str, Callable[[], Layer], Shape]] = [
    ("dense", lambda: Dense(3), (4,)),
    ("flatten", Flatten, (2, 2, 2)),
    ("identity", lambda: Activation(LayerKind.IDENTITY), (5,)),
    ("abs", lambda: Activation(LayerKind.ABS), (5,)),
    ("relu", lambda: Activation(LayerKind.RELU), (5,)),
    ("leaky_relu", lambda: Activation(LayerKind.LEAKY_RELU), (5,)),
    ("very_leaky_relu", lambda: Activation(LayerKind.VERY_LEAKY_RELU), (5,)),
    ("grelu", GradualReLU, (5,)),
    ("inverse_grelu", lambda: GradualReLU(inverse=True), (5,)),
    ("dropout", lambda: Dropout(0.5), (5,)),
    ("gradual_dropout", lambda: gradual_dropout(0.5), (5,)),
    ("mean_pool", lambda: Pool(PoolKind.MEAN, 2), (2, 4, 4)),
    ("max_pool", lambda: Pool(PoolKind.MAX, 2), (2, 4, 4)),
    ("gradual_pool", lambda: gradual_pool(2), (2, 4, 4)),
    ("mixed_pool_const", lambda: mixed_pool_const(2), (2, 4, 4)),
    ("batchnorm", BatchNorm, (3,)),
    ("gradual_batchnorm", gradual_batchnorm, (2, 3, 3)),
    ("conv", lambda: Conv(3, 3, 1, Padding.SAME), (2, 4, 4)),
    ("conv_valid_stride2", lambda: Conv(2, 2, 2, Padding.VALID), (2, 5, 5)),
    ("gradual_conv", lambda: gradual_conv(3), (2, 4, 4)),
    ("gradual_nin", lambda: GradualNiN(3), (2, 4, 4)),
    ("gradnet", lambda: GradNet(Dense(3), Dense(3)), (4,)),
]


OpCase = Tuple[str, Callable[[List[Tensor]], Tensor], List[np.ndarray]]


def _op_cases(rng: np.random.Generator) -> List[OpCase]:
    labels = np.array([0, 2, 1])
    return [
        ("op:matmul", lambda t: matmul(t[0], t[1]),
         [probe_input((3, 4), rng), probe_input((4, 2), rng)]),
        ("op:mul", lambda t: mul(t[0], t[1]), [probe_input((2, 3), rng), probe_input((2, 3), rng)]),
        ("op:conv2d", lambda t: conv2d(t[0], t[1], 1, Padding.SAME),
         [probe_input((2, 2, 3, 3), rng), probe_input((3, 2, 2, 2), rng)]),
        ("op:max_pool", lambda t: pool2d(t[0], 2, 1, PoolKind.MAX),
         [probe_input((1, 2, 3, 3), rng)]),
        ("op:batch_norm", lambda t: batch_norm(t[0], t[1], t[2], 1e-5)[0],
         [probe_input((4, 3), rng), probe_input((3,), rng), probe_input((3,), rng)]),
        ("op:softmax_cross_entropy", lambda t: softmax_cross_entropy(t[0], labels),
         [probe_input((3, 4), rng)]),
    ]


@dataclass
class GradcheckReport:
    """Outcome of :func:`gradcheck_suite`."""

    tolerance: float
    entries: List[GradcheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(entry["passed"] for entry in self.entries)

    @property
    def failures(self) -> List[GradcheckEntry]:
        return [entry for entry in self.entries if not entry["passed"]]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.entries, columns=["layer", "g", "max_rel_error", "passed"])


def gradcheck_suite(
    tolerance: float = DEFAULT_GRADCHECK_TOL,
    gates: Sequence[float] = tuple(GRADCHECK_GATES),
    seed: int = 0,
    grad_hook: Optional[GradHook] = None,
) -> GradcheckReport:
    """
    Check every layer kind at every gate, and the core tensor operations.

    Operation entries do not depend on a gate and carry ``g = nan``.
    Failures are report entries, never exceptions.
    """
    report = GradcheckReport(tolerance)
    for name, factory, shape in LAYER_CASES:
        for g in gates:
            entry = check_layer(
                factory(), shape, g, tolerance, seed=seed, grad_hook=grad_hook, name=name
            )
            report.entries.append(entry)
    rng = np.random.default_rng([seed, 2])
    for name, fn, arrays in _op_cases(rng):
        error = check_function(fn, arrays, seed, grad_hook)
        report.entries.append(
            {
                "layer": name,
                "g": math.nan,
                "max_rel_error": error,
                "passed": bool(error < tolerance),
            }
        )
    logger.info(
        "gradcheck: %d checks, %d failed, worst %.3e",
        len(report.entries),
        len(report.failures),
        max(entry["max_rel_error"] for entry in report.entries),
    )
    return report
