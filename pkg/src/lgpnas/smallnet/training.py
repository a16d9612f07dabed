"""Network training, evaluation, semantics extraction and gradient checking.

Everything is deterministic given (architecture, data, seed): one rng stream
drives weight init, epoch shuffling and dropout masks in a fixed order, and
its state travels with the network, so continuing a partially trained network
is bit-identical to an uninterrupted run.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeError, TrainingError
from ..phenotype import Architecture, LayerKind, infer_shapes
from . import layers as L
from .data import DatasetSplit


@dataclass
class TrainConfig:
    partial_epochs: int = 2
    full_epochs: int = 10
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0

    def validate(self) -> None:
        if not (0 < self.partial_epochs < self.full_epochs):
            raise ConfigError(
                f"need 0 < partial_epochs < full_epochs, got "
                f"{self.partial_epochs}/{self.full_epochs}"
            )
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class TrainedNet:
    """An architecture with its parameters, epoch counter and rng state."""

    architecture: Architecture
    layers: list = field(default_factory=list)
    epochs_completed: int = 0
    rng: np.random.Generator | None = None

    @property
    def num_classes(self) -> int:
        return self.architecture.num_classes

    def parameter_count(self) -> int:
        return sum(p.size for layer in self.layers for p in layer.params().values())


def build_net(arch: Architecture, seed: int) -> TrainedNet:
    """Instantiate layers for an architecture and initialize their weights."""
    rng = np.random.default_rng(seed)
    shapes = infer_shapes(arch)
    in_shapes = [arch.input_shape] + shapes[:-1]
    built = []
    for spec, in_shape in zip(arch.layers, in_shapes):
        layer = L.build_layer(spec, in_shape, arch.num_classes)
        layer.init_params(rng)
        built.append(layer)
    return TrainedNet(arch, built, epochs_completed=0, rng=rng)


def _forward(net: TrainedNet, x: np.ndarray, training: bool, stochastic: bool = True) -> np.ndarray:
    out = x
    for layer in net.layers:
        use_rng = net.rng if (training and stochastic) else None
        if isinstance(layer, L.Dropout):
            out = layer.forward(out, training and stochastic, use_rng)
        else:
            out = layer.forward(out, training)
    return out


def _backward(net: TrainedNet, dlogits: np.ndarray) -> None:
    grad = dlogits
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if i == 0 and isinstance(layer, L.Conv):
            layer.backward(grad, need_dx=False)
            return
        grad = layer.backward(grad)


def _sgd_step(net: TrainedNet, lr: float) -> None:
    for layer in net.layers:
        params, grads = layer.params(), layer.grads()
        for key in params:
            params[key] -= lr * grads[key]


def _check_input(net: TrainedNet, images: np.ndarray) -> None:
    if images.ndim != 4 or tuple(images.shape[1:]) != tuple(net.architecture.input_shape):
        raise ShapeError(
            f"input shape {images.shape[1:]} does not match architecture input "
            f"{net.architecture.input_shape}"
        )


def train(
    arch: Architecture,
    data: DatasetSplit,
    cfg: TrainConfig,
    upto_epochs: int,
    net: TrainedNet | None = None,
    seed: int | None = None,
) -> TrainedNet:
    """Mini-batch SGD with cross-entropy loss, up to ``upto_epochs`` epochs.

    Pass a previously returned net to continue training from its checkpoint;
    the input net is not modified.  ``seed`` overrides ``cfg.seed`` for the
    weight-init/shuffle/dropout stream.
    """
    cfg.validate()
    if upto_epochs > cfg.full_epochs:
        raise ConfigError(f"upto_epochs {upto_epochs} exceeds full_epochs {cfg.full_epochs}")
    if len(data.labels) == 0:
        raise TrainingError("empty training split")
    present = np.unique(data.labels)
    if len(present) < arch.num_classes:
        raise TrainingError(
            f"training split covers {len(present)} of {arch.num_classes} classes"
        )
    if net is None:
        net = build_net(arch, cfg.seed if seed is None else seed)
    else:
        if net.epochs_completed > upto_epochs:
            raise ConfigError(
                f"net already trained {net.epochs_completed} epochs > {upto_epochs}"
            )
        net = copy.deepcopy(net)
    _check_input(net, data.images)

    x, y = data.images, data.labels
    n = len(y)
    for epoch in range(net.epochs_completed, upto_epochs):
        perm = net.rng.permutation(n)
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            logits = _forward(net, x[idx], training=True)
            loss, dlogits = L.cross_entropy(logits, y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bi}")
            _backward(net, dlogits)
            _sgd_step(net, cfg.learning_rate)
        net.epochs_completed = epoch + 1
    return net


def evaluate(
    net: TrainedNet, split: DatasetSplit, chunk: int = 256
) -> tuple[float, np.ndarray]:
    """Accuracy and the row-stochastic class-probability matrix on a split.

    Inference mode: dropout off, batch norm on running averages.  Argmax ties
    resolve to the lowest class index.
    """
    _check_input(net, split.images)
    probs = np.empty((len(split.labels), net.num_classes))
    for start in range(0, len(split.labels), chunk):
        logits = _forward(net, split.images[start : start + chunk], training=False)
        probs[start : start + chunk] = L.softmax(logits)
    preds = probs.argmax(axis=1)
    accuracy = float((preds == split.labels).mean())
    return accuracy, probs


def extract_semantics(net: TrainedNet, split: DatasetSplit) -> np.ndarray:
    """Flattened class probabilities over the split, in dataset index order.

    Row-major: entry ``i * num_classes + j`` is the probability of class j for
    sample i; every consecutive class block sums to 1.
    """
    _, probs = evaluate(net, split)
    return probs.reshape(-1)


def gradient_check(
    arch: Architecture,
    data_batch: DatasetSplit,
    epsilon: float = 1e-5,
    max_checks_per_tensor: int = 5,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks a random subset of parameter coordinates (at most
    ``max_checks_per_tensor`` per tensor).  Dropout is disabled so the loss is
    deterministic; batch norm runs in training mode (batch statistics).
    Requires a small network (<= 5000 parameters).
    """
    net = build_net(arch, seed)
    if net.parameter_count() > 5000:
        raise ValueError(f"gradient check limited to 5000 parameters, net has {net.parameter_count()}")
    x, y = data_batch.images, data_batch.labels
    picker = np.random.default_rng(seed + 1)

    def loss_only() -> float:
        logits = _forward(net, x, training=True, stochastic=False)
        loss, _ = L.cross_entropy(logits, y)
        return loss

    logits = _forward(net, x, training=True, stochastic=False)
    _, dlogits = L.cross_entropy(logits, y)
    _backward(net, dlogits)
    analytic = {
        (li, key): layer.grads()[key].copy()
        for li, layer in enumerate(net.layers)
        for key in layer.params()
    }

    max_err = 0.0
    for li, layer in enumerate(net.layers):
        for key, tensor in layer.params().items():
            flat = tensor.reshape(-1)
            k = min(max_checks_per_tensor, flat.size)
            if k == 0:
                continue
            for j in picker.choice(flat.size, size=k, replace=False):
                orig = flat[j]
                flat[j] = orig + epsilon
                lp = loss_only()
                flat[j] = orig - epsilon
                lm = loss_only()
                flat[j] = orig
                numeric = (lp - lm) / (2 * epsilon)
                ana = analytic[(li, key)].reshape(-1)[j]
                # floor the denominator: structurally-zero gradients (e.g. a
                # conv bias cancelled by batch norm) otherwise divide central
                # difference round-off (~1e-11) by itself
                denom = max(abs(ana), abs(numeric), 1e-4)
                max_err = max(max_err, abs(ana - numeric) / denom)
    return max_err
