"""Compression operators for the simulator.

All operators are pure: they return a new network and never mutate the
input.  Biases are never pruned; quantization stores dequantized weights so
the rest of the pipeline keeps working on floats.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch, UnknownPath
from .net import DenseNet


def _ranked_weight_cells(net: DenseNet, layer_indices: list[int]) -> np.ndarray:
    """(|w|, layer, flat index) rows sorted ascending with deterministic ties."""
    mags, layers, flats = [], [], []
    for li in layer_indices:
        w = net.layers[li].weights.ravel()
        mags.append(np.abs(w))
        layers.append(np.full(w.size, li))
        flats.append(np.arange(w.size))
    mag = np.concatenate(mags)
    layer = np.concatenate(layers)
    flat = np.concatenate(flats)
    order = np.lexsort((flat, layer, mag))
    return np.stack([layer[order], flat[order]], axis=1)


def prune_global_magnitude(net: DenseNet, sparsity: float) -> DenseNet:
    """Zero the floor(s * N) smallest-magnitude weights across all layers."""
    if not 0.0 <= sparsity < 1.0:
        raise ValueError("sparsity must be in [0, 1)")
    out = net.copy()
    total = sum(layer.weights.size for layer in out.layers)
    k = int(np.floor(sparsity * total))
    if k == 0:
        return out
    cells = _ranked_weight_cells(out, list(range(len(out.layers))))[:k]
    for li, flat in cells:
        out.layers[int(li)].weights.ravel()[int(flat)] = 0.0
    return out


def prune_layer_magnitude(net: DenseNet, sparsities: dict[str, float]) -> DenseNet:
    """Magnitude-prune individual layers at their own sparsity."""
    out = net.copy()
    names = [layer.name for layer in out.layers]
    for name, sparsity in sparsities.items():
        if name not in names:
            raise UnknownPath(f"no layer named {name!r}", detail=name)
        if not 0.0 <= sparsity < 1.0:
            raise ValueError("sparsity must be in [0, 1)")
        li = names.index(name)
        k = int(np.floor(sparsity * out.layers[li].weights.size))
        if k == 0:
            continue
        cells = _ranked_weight_cells(out, [li])[:k]
        for lj, flat in cells:
            out.layers[int(lj)].weights.ravel()[int(flat)] = 0.0
    return out


def round_half_away_from_zero(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_uniform(net: DenseNet, bits: int) -> DenseNet:
    """Symmetric per-tensor uniform quantization, stored dequantized."""
    if not 2 <= bits <= 16:
        raise ValueError("bits must be in 2..16")
    out = net.copy()
    qmax = 2 ** (bits - 1) - 1
    for layer in out.layers:
        peak = float(np.max(np.abs(layer.weights)))
        if peak == 0.0:
            continue
        scale = peak / qmax
        q = np.clip(round_half_away_from_zero(layer.weights / scale), -qmax, qmax)
        layer.weights = q * scale
    out.bits_per_weight = bits
    return out


def _tensor_refs(net: DenseNet, path: str) -> list[tuple[object, str]]:
    """(layer, attribute) pairs addressed by a layer or tensor path."""
    if "." in path:
        name, attr = path.split(".", 1)
        if attr not in ("weight", "bias"):
            raise UnknownPath(f"unknown tensor {path!r}", detail=path)
        layer = net.layer(name)
        return [(layer, "weights" if attr == "weight" else "bias")]
    layer = net.layer(path)
    return [(layer, "weights"), (layer, "bias")]


def restore_layers(net: DenseNet, base: DenseNet, paths: list[str]) -> DenseNet:
    """Copy the listed tensors verbatim from the base network."""
    out = net.copy()
    for path in paths:
        targets = _tensor_refs(out, path)
        sources = _tensor_refs(base, path)
        for (t_layer, attr), (s_layer, _) in zip(targets, sources):
            src = getattr(s_layer, attr)
            dst = getattr(t_layer, attr)
            if src.shape != dst.shape:
                raise ShapeMismatch(f"tensor {path!r} shapes differ", detail=path)
            setattr(t_layer, attr, src.copy())
    return out


def calibrate_biases(net: DenseNet, base: DenseNet, sample_x: np.ndarray) -> DenseNet:
    """Shift biases so mean pre-activations match the base on the sample.

    Layers are corrected in order, feeding each layer's corrected output
    forward before correcting the next.
    """
    if sample_x.shape[0] == 0:
        raise ValueError("calibration sample is empty")
    out = net.copy()
    a_net = sample_x
    a_base = sample_x
    for i, (layer, base_layer) in enumerate(zip(out.layers, base.layers)):
        z_net = a_net @ layer.weights + layer.bias
        z_base = a_base @ base_layer.weights + base_layer.bias
        layer.bias = layer.bias + (z_base.mean(axis=0) - z_net.mean(axis=0))
        z_net = a_net @ layer.weights + layer.bias
        if i < len(out.layers) - 1:
            a_net = np.maximum(z_net, 0.0)
            a_base = np.maximum(z_base, 0.0)
    return out
