"""Losses, the stage-list network container, and full-batch gradient descent.

Training follows one regime everywhere: the loss is summed over the whole
training set and one gradient step is taken per epoch.  Runs that end below
100% training accuracy can be restarted from fresh weights up to a cap;
every restart redraws parameters from the run's own random stream, so a
given seed always produces the same sequence of attempts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from symnet.layers import (
    Conv1DLayer,
    ConvGradients,
    DenseGradients,
    DenseLayer,
    GlobalMaxPool,
    LayerGradients,
    Reshape,
    Sigmoid,
    Softmax,
    Transpose,
)
from symnet.ndcore import SeededRng, ShapeError

PROB_FLOOR = 1e-12


def squared_error(predictions, targets) -> tuple[float, np.ndarray]:
    """loss = sum((p - t)^2) over every output; gradient 2 (p - t)."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"squared_error: predictions {p.shape} vs targets {t.shape}")
    diff = p - t
    return float(np.sum(diff * diff)), 2.0 * diff


def cross_entropy(probabilities, targets) -> tuple[float, np.ndarray]:
    """loss = -sum(t * log p) with p floored at 1e-12.

    The returned gradient is taken with respect to the logits feeding the
    softmax that produced ``probabilities`` (the two derivatives cancel to
    p - t), so backpropagation must start below the softmax stage.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"cross_entropy: probabilities {p.shape} vs targets {t.shape}")
    loss = -float(np.sum(t * np.log(np.maximum(p, PROB_FLOOR))))
    return loss, p - t


LOSSES = {"squared_error": squared_error, "cross_entropy": cross_entropy}


@dataclass(eq=False)
class StageTrace:
    """One stage's input and output from a forward pass, kept for backward."""

    stage: object
    x: np.ndarray
    y: np.ndarray
    argmax: np.ndarray | None = None  # max pool only


def _data_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    """Accepts a dataset split (anything with .inputs/.targets) or a plain
    (inputs, targets) pair and returns the two stacked arrays."""
    if hasattr(data, "inputs") and hasattr(data, "targets"):
        inputs, targets = data.inputs, data.targets
    else:
        inputs, targets = data
    return np.asarray(inputs, dtype=np.float64), np.asarray(targets, dtype=np.float64)


class Network:
    """A straight pipeline of stages applied in order.

    Parameters live on the Dense/Conv1D stages; Sigmoid, Softmax, pooling
    and the reshape/transpose plumbing carry none.  ``backward_pass``
    returns one gradient record per parametric stage, in forward order,
    with gradients already summed over the batch.
    """

    def __init__(self, stages, architecture: str | None = None):
        self.stages = list(stages)
        self.architecture = architecture
        if not self.stages:
            raise ValueError("network needs at least one stage")

    @property
    def parametric_stages(self) -> list[DenseLayer | Conv1DLayer]:
        return [s for s in self.stages if isinstance(s, (DenseLayer, Conv1DLayer))]

    def parameter_count(self) -> int:
        total = 0
        for stage in self.parametric_stages:
            if isinstance(stage, DenseLayer):
                total += stage.weights.size + stage.bias.size
            else:
                total += stage.filters.size + stage.bias.size
        return total

    def reinitialize(self, rng: SeededRng, half_width: float = 0.5) -> None:
        """Redraws every parametric stage, in forward order, from ``rng``."""
        for stage in self.parametric_stages:
            stage.reinitialize(rng, half_width)

    def forward_pass(self, x) -> list[StageTrace]:
        traces: list[StageTrace] = []
        value = np.asarray(x, dtype=np.float64)
        for stage in self.stages:
            if isinstance(stage, GlobalMaxPool):
                pooled, argmax = stage.forward(value)
                traces.append(StageTrace(stage, value, pooled, argmax))
                value = pooled
            else:
                out = stage.forward(value)
                traces.append(StageTrace(stage, value, out))
                value = out
        return traces

    def predict(self, x) -> np.ndarray:
        return self.forward_pass(x)[-1].y

    def backward_pass(self, traces: list[StageTrace], upstream, skip_softmax: bool = False) -> list[LayerGradients]:
        """Walks the traces in reverse, chaining input gradients.

        With ``skip_softmax`` the caller asserts ``upstream`` is already the
        gradient at the softmax's input (the fused cross-entropy case), so a
        trailing Softmax stage is passed over untouched.
        """
        if len(traces) != len(self.stages):
            raise ValueError(f"expected {len(self.stages)} traces, got {len(traces)}")
        grad = np.asarray(upstream, dtype=np.float64)
        collected: list[LayerGradients] = []
        for position, trace in enumerate(reversed(traces)):
            stage = trace.stage
            if isinstance(stage, Softmax):
                if not (skip_softmax and position == 0):
                    raise ValueError("softmax backward is only defined fused with cross_entropy at the output")
                continue
            if isinstance(stage, Sigmoid):
                grad = stage.backward(trace.y, grad)
            elif isinstance(stage, (Reshape, Transpose)):
                grad = stage.backward(grad)
            elif isinstance(stage, GlobalMaxPool):
                grad = stage.backward(trace.argmax, grad, trace.x.shape[-1])
            elif isinstance(stage, (DenseLayer, Conv1DLayer)):
                grads = stage.backward(trace.x, grad)
                collected.append(grads)
                grad = grads.d_input
            else:
                raise TypeError(f"no backward rule for stage {type(stage).__name__}")
        collected.reverse()
        return collected


def gd_step(network: Network, gradients: list[LayerGradients], learning_rate: float) -> Network:
    """Applies one plain gradient-descent update to every parametric stage."""
    stages = network.parametric_stages
    if len(gradients) != len(stages):
        raise ValueError(f"got {len(gradients)} gradient records for {len(stages)} parametric stages")
    for stage, grad in zip(stages, gradients):
        if isinstance(grad, DenseGradients):
            if grad.d_weights.shape != stage.weights.shape or grad.d_bias.shape != stage.bias.shape:
                raise ShapeError(f"gradient shapes {grad.d_weights.shape}/{grad.d_bias.shape} do not match layer")
            stage.weights = stage.weights - learning_rate * grad.d_weights
            stage.bias = stage.bias - learning_rate * grad.d_bias
        elif isinstance(grad, ConvGradients):
            if grad.d_filters.shape != stage.filters.shape or grad.d_bias.shape != stage.bias.shape:
                raise ShapeError(f"gradient shapes {grad.d_filters.shape}/{grad.d_bias.shape} do not match layer")
            stage.filters = stage.filters - learning_rate * grad.d_filters
            stage.bias = stage.bias - learning_rate * grad.d_bias
        else:
            raise TypeError(f"unknown gradient record {type(grad).__name__}")
    return network


def discretise(outputs, cutoff: float = 0.5) -> np.ndarray:
    """Thresholds activations to 0/1 bits; values at the cutoff count as 1."""
    arr = np.asarray(outputs, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return (arr >= cutoff).astype(np.float64)


def evaluate(network: Network, data, cutoff: float = 0.5) -> float:
    """Exact-match accuracy: an instance counts only if every discretised
    output equals the target bit.  Non-finite outputs never count.

    ``data`` is a dataset split or an (inputs, targets) pair.
    """
    inputs, t = _data_arrays(data)
    preds = network.predict(inputs)
    if preds.shape != t.shape:
        raise ShapeError(f"evaluate: predictions {preds.shape} vs targets {t.shape}")
    if t.shape[0] == 0:
        raise ValueError("evaluate: empty instance set")
    bits = discretise(preds, cutoff)
    instance_axes = tuple(range(1, t.ndim))
    hit = np.all(bits == t, axis=instance_axes) & np.all(np.isfinite(preds), axis=instance_axes)
    return float(np.count_nonzero(hit)) / float(t.shape[0])


@dataclass
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 1.0
    loss: str = "squared_error"
    max_restarts: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {sorted(LOSSES)}")


@dataclass(eq=False)
class TrainResult:
    losses: list[float] = field(default_factory=list)  # per-epoch, last attempt only
    restarts: int = 0
    reached_criterion: bool = False  # 100% training accuracy
    final_loss: float = math.nan


def train(network: Network, data, config: TrainConfig, rng: SeededRng | None = None) -> TrainResult:
    """Full-batch gradient descent with restart-on-failure.

    Each attempt runs ``config.epochs`` epochs; one update per epoch on the
    loss summed over all instances.  An attempt that ends with training
    accuracy below 100% (or whose loss stops being finite) is retried from
    freshly drawn weights, at most ``config.max_restarts`` times.  ``rng``
    is only needed when restarts are allowed; ``data`` is a dataset split
    or an (inputs, targets) pair.  The network is trained in place.
    """
    inputs, targets = _data_arrays(data)
    if inputs.shape[0] == 0:
        raise ValueError("train: empty instance set")
    if config.max_restarts > 0 and rng is None:
        raise ValueError("restarts need an rng to redraw weights")
    loss_fn = LOSSES[config.loss]
    fused = config.loss == "cross_entropy"

    for attempt in range(config.max_restarts + 1):
        if attempt > 0:
            network.reinitialize(rng)
        losses: list[float] = []
        diverged = False
        for _ in range(config.epochs):
            traces = network.forward_pass(inputs)
            loss, d_out = loss_fn(traces[-1].y, targets)
            losses.append(loss)
            if not math.isfinite(loss):
                diverged = True
                break
            gradients = network.backward_pass(traces, d_out, skip_softmax=fused)
            gd_step(network, gradients, config.learning_rate)
        if diverged:
            final_loss = losses[-1]
            reached = False
        else:
            final_loss = loss_fn(network.predict(inputs), targets)[0]
            reached = evaluate(network, (inputs, targets)) == 1.0
        if reached or attempt == config.max_restarts:
            return TrainResult(losses=losses, restarts=attempt, reached_criterion=reached, final_loss=final_loss)
    raise AssertionError("unreachable")


@dataclass
class RunReport:
    """One training run as reported by the experiment harness."""

    experiment: str
    architecture: str
    run_index: int
    seed: int
    restarts: int
    train_accuracy: float
    test_accuracy: float
    final_loss: float
    failed: bool = False  # never reached 100% training accuracy
