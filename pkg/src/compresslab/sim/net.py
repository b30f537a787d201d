"""Tiny dense network with analytic gradients (no ML framework).

Two fully connected layers with a ReLU in between and a softmax head,
trained by full-batch gradient descent on cross-entropy.  Gradients are
hand-derived; a finite-difference check lives in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch
from .dataset import SynthDataset

DEFAULT_SHAPE = (16, 32, 4)
DEFAULT_EPOCHS = 200
DEFAULT_LR = 0.1


@dataclass
class DenseLayer:
    name: str
    weights: np.ndarray   # (fan_in, fan_out)
    bias: np.ndarray      # (fan_out,)


@dataclass
class DenseNet:
    layers: list[DenseLayer]
    bits_per_weight: int = 32

    def copy(self) -> "DenseNet":
        return DenseNet(
            layers=[DenseLayer(l.name, l.weights.copy(), l.bias.copy())
                    for l in self.layers],
            bits_per_weight=self.bits_per_weight,
        )

    def layer(self, name: str) -> DenseLayer:
        for l in self.layers:
            if l.name == name:
                return l
        from ..errors import UnknownPath
        raise UnknownPath(f"no layer named {name!r}", detail=name)

    # -- forward ---------------------------------------------------------

    def pre_activations(self, x: np.ndarray) -> list[np.ndarray]:
        """Pre-activation values (z) of every layer."""
        zs = []
        a = x
        for i, layer in enumerate(self.layers):
            if a.shape[1] != layer.weights.shape[0]:
                raise DimensionMismatch(
                    f"layer {layer.name!r} expects {layer.weights.shape[0]} inputs, "
                    f"got {a.shape[1]}")
            z = a @ layer.weights + layer.bias
            zs.append(z)
            if i < len(self.layers) - 1:
                a = np.maximum(z, 0.0)
        return zs

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.pre_activations(x)[-1]

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    # -- bookkeeping -------------------------------------------------------

    def weight_tensors(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{l.name}.weight", l.weights) for l in self.layers]

    def sparsity(self) -> float:
        total = sum(w.size for _, w in self.weight_tensors())
        zeros = sum(int(np.count_nonzero(w == 0.0)) for _, w in self.weight_tensors())
        return zeros / total if total else 0.0

    def nonzero_count(self) -> int:
        return sum(int(np.count_nonzero(w)) for _, w in self.weight_tensors())


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def init_net(seed: int, shape: tuple[int, ...] = DEFAULT_SHAPE) -> DenseNet:
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(shape, shape[1:])):
        layers.append(DenseLayer(
            name=f"fc{i + 1}",
            weights=rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)),
            bias=np.zeros(fan_out),
        ))
    return DenseNet(layers=layers)


def loss_and_gradients(net: DenseNet, x: np.ndarray, y: np.ndarray,
                       ) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean cross-entropy and its gradients w.r.t. every weight and bias."""
    n = x.shape[0]
    activations = [x]
    zs = []
    a = x
    for i, layer in enumerate(net.layers):
        z = a @ layer.weights + layer.bias
        zs.append(z)
        if i < len(net.layers) - 1:
            a = np.maximum(z, 0.0)
            activations.append(a)

    probs = softmax(zs[-1])
    eps = 1e-12
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))

    onehot = np.zeros_like(probs)
    onehot[np.arange(n), y] = 1.0
    dz = (probs - onehot) / n
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)  # type: ignore
    for i in range(len(net.layers) - 1, -1, -1):
        grads[i] = (activations[i].T @ dz, dz.sum(axis=0))
        if i > 0:
            da = dz @ net.layers[i].weights.T
            dz = da * (zs[i - 1] > 0)
    return loss, grads


def train_mlp(dataset: SynthDataset, epochs: int = DEFAULT_EPOCHS,
              lr: float = DEFAULT_LR, seed: int = 0) -> DenseNet:
    """Full-batch gradient descent from a seeded initialization."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    net = init_net(seed)
    for _ in range(epochs):
        _, grads = loss_and_gradients(net, dataset.x_train, dataset.y_train)
        for layer, (dw, db) in zip(net.layers, grads):
            layer.weights -= lr * dw
            layer.bias -= lr * db
    return net


def finetune(net: DenseNet, dataset: SynthDataset, steps: int, lr: float) -> DenseNet:
    """Gradient steps with pruned (zero) weight positions frozen at zero."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    out = net.copy()
    masks = [layer.weights != 0.0 for layer in out.layers]
    for _ in range(steps):
        _, grads = loss_and_gradients(out, dataset.x_train, dataset.y_train)
        for layer, mask, (dw, db) in zip(out.layers, masks, grads):
            layer.weights -= lr * dw
            layer.weights *= mask
            layer.bias -= lr * db
    return out


def accuracy(net: DenseNet, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(net.predict(x) == y))


def evaluate_model(net: DenseNet, dataset: SynthDataset) -> dict[str, float]:
    """Top-level metrics: accuracy, sparsity, size, and a latency proxy.

    Size counts nonzero weights at the stored precision; the latency proxy
    is the number of nonzero multiplies in one forward pass.
    """
    return {
        "latency_proxy": float(net.nonzero_count()),
        "size_bytes": net.nonzero_count() * net.bits_per_weight / 8.0,
        "sparsity": net.sparsity(),
        "accuracy": accuracy(net, dataset.x_test, dataset.y_test),
    }
