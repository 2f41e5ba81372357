"""Forward passes of the region proposal head and the detection head.

Weights are never trained here; they come from a seeded initializer or a
tensor file (see :mod:`detkit.tensor_io`). All arithmetic is float64.

Channel layout of :class:`RpnOutput`:

* ``cls_map`` channel ``2a`` is the object logit of anchor ``a`` and channel
  ``2a + 1`` its not-object logit.
* ``reg_map`` channels ``4a .. 4a + 3`` hold ``(tx, ty, tw, th)`` of anchor ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .box_coding import BoxDelta


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMap:
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeError(f"feature map must be (C, H, W) with all dims >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature map contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ConvLayer:
    weight: np.ndarray  # (out, in, kh, kw)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] not in (1, 3):
            raise ShapeError(f"conv weight must be (out, in, 3, 3) or (out, in, 1, 1), got {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise ShapeError(f"bias has {b.shape[0]} entries for {w.shape[0]} output channels")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("conv parameters contain non-finite values")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]


@dataclass(frozen=True)
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or b.shape[0] != w.shape[0]:
            raise ShapeError(f"dense layer shapes do not agree: weight {w.shape}, bias {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("dense parameters contain non-finite values")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def conv_forward(features: FeatureMap, layer: ConvLayer) -> FeatureMap:
    """Cross-correlation plus bias; 3x3 kernels are zero-padded to keep H x W."""
    if layer.in_channels != features.channels:
        raise ShapeError(
            f"layer expects {layer.in_channels} input channels, feature map has {features.channels}"
        )
    x = features.data
    ks = layer.kernel_size
    pad = ks // 2
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(x, (ks, ks), axis=(1, 2))  # (C, H, W, ks, ks)
    out = np.einsum("chwyx,ocyx->ohw", windows, layer.weight, optimize=True)
    out += layer.bias[:, None, None]
    return FeatureMap(out)


@dataclass(frozen=True)
class RpnWeights:
    shared: ConvLayer
    cls: ConvLayer
    reg: ConvLayer

    @property
    def k(self) -> int:
        return self.cls.out_channels // 2

    def to_tensors(self) -> dict[str, np.ndarray]:
        return {
            "rpn_conv.weight": self.shared.weight,
            "rpn_conv.bias": self.shared.bias,
            "rpn_cls.weight": self.cls.weight,
            "rpn_cls.bias": self.cls.bias,
            "rpn_reg.weight": self.reg.weight,
            "rpn_reg.bias": self.reg.bias,
        }

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> RpnWeights:
        try:
            return cls(
                shared=ConvLayer(tensors["rpn_conv.weight"], tensors["rpn_conv.bias"]),
                cls=ConvLayer(tensors["rpn_cls.weight"], tensors["rpn_cls.bias"]),
                reg=ConvLayer(tensors["rpn_reg.weight"], tensors["rpn_reg.bias"]),
            )
        except KeyError as exc:
            raise ShapeError(f"weight file is missing tensor {exc.args[0]!r}") from None


@dataclass(frozen=True)
class RpnOutput:
    cls_map: FeatureMap
    reg_map: FeatureMap
    k: int

    @property
    def height(self) -> int:
        return self.cls_map.height

    @property
    def width(self) -> int:
        return self.cls_map.width

    def probabilities(self) -> np.ndarray:
        """``(Hf, Wf, k, 2)`` softmax over each (object, not-object) pair."""
        logits = self.cls_map.data.reshape(self.k, 2, self.height, self.width)
        return softmax(logits.transpose(2, 3, 0, 1), axis=-1)

    def objectness(self) -> np.ndarray:
        """Object probability per anchor, flattened position-major anchor-minor."""
        return self.probabilities()[..., 0].reshape(-1)

    def deltas(self) -> np.ndarray:
        """``(Hf * Wf * k, 4)`` regression outputs in anchor order."""
        reg = self.reg_map.data.reshape(self.k, 4, self.height, self.width)
        return reg.transpose(2, 3, 0, 1).reshape(-1, 4)


def rpn_forward(features: FeatureMap, weights: RpnWeights, k: int | None = None) -> RpnOutput:
    """Shared 3x3 conv and rectifier, then sibling 1x1 cls (2k) and reg (4k) convs.

    Pass ``k`` to pin the anchor count; otherwise it is read off the cls layer.
    """
    shared, cls, reg = weights.shared, weights.cls, weights.reg
    if k is not None:
        if cls.out_channels != 2 * k or reg.out_channels != 4 * k:
            raise ShapeError(
                f"k = {k} needs cls/reg outputs 2k = {2 * k} / 4k = {4 * k}, "
                f"got {cls.out_channels} / {reg.out_channels}"
            )
    if shared.kernel_size != 3:
        raise ShapeError(f"shared RPN conv must be 3x3, got {shared.kernel_size}x{shared.kernel_size}")
    if cls.kernel_size != 1 or reg.kernel_size != 1:
        raise ShapeError("RPN cls and reg layers must be 1x1 convolutions")
    if cls.out_channels % 2:
        raise ShapeError(f"cls layer must have 2k outputs, got {cls.out_channels}")
    k = cls.out_channels // 2
    if reg.out_channels != 4 * k:
        raise ShapeError(f"reg layer must have 4k = {4 * k} outputs for k = {k}, got {reg.out_channels}")
    for name, layer in (("cls", cls), ("reg", reg)):
        if layer.in_channels != shared.out_channels:
            raise ShapeError(
                f"{name} layer expects {layer.in_channels} channels, shared conv gives {shared.out_channels}"
            )
    hidden = conv_forward(features, shared)
    hidden = FeatureMap(np.maximum(hidden.data, 0.0))
    return RpnOutput(cls_map=conv_forward(hidden, cls), reg_map=conv_forward(hidden, reg), k=k)


@dataclass(frozen=True)
class DetectionHead:
    """Fully connected stack feeding a (C+1)-way classifier and 4C box regressor."""

    fc_layers: tuple[DenseLayer, ...]
    cls: DenseLayer
    bbox: DenseLayer
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "fc_layers", tuple(self.fc_layers))
        c = self.num_classes
        if c < 1:
            raise ValueError(f"need at least one foreground class, got {c}")
        if self.cls.out_features != c + 1:
            raise ShapeError(f"classifier must have C+1 = {c + 1} outputs, got {self.cls.out_features}")
        if self.bbox.out_features != 4 * c:
            raise ShapeError(f"box regressor must have 4C = {4 * c} outputs, got {self.bbox.out_features}")
        for prev, nxt in zip(self.fc_layers, self.fc_layers[1:]):
            if nxt.in_features != prev.out_features:
                raise ShapeError(f"dense stack breaks: {prev.out_features} -> {nxt.in_features}")
        feat = self.fc_layers[-1].out_features if self.fc_layers else None
        for name, layer in (("classifier", self.cls), ("box regressor", self.bbox)):
            if feat is not None and layer.in_features != feat:
                raise ShapeError(f"{name} expects {layer.in_features} inputs, stack gives {feat}")
        if not self.fc_layers and self.cls.in_features != self.bbox.in_features:
            raise ShapeError("classifier and box regressor disagree on input size")

    @property
    def in_features(self) -> int:
        return self.fc_layers[0].in_features if self.fc_layers else self.cls.in_features


@dataclass(frozen=True)
class HeadOutput:
    class_probs: np.ndarray  # (C+1,), background last
    box_deltas: np.ndarray  # (4C,)

    def delta_for(self, class_index: int) -> BoxDelta:
        return BoxDelta(*self.box_deltas[4 * class_index:4 * class_index + 4])


def head_forward(roi_vector: np.ndarray, head: DetectionHead) -> HeadOutput:
    x = np.asarray(roi_vector, dtype=np.float64).reshape(-1)
    if x.shape[0] != head.in_features:
        raise ShapeError(f"RoI vector has length {x.shape[0]}, head expects {head.in_features}")
    for layer in head.fc_layers:
        x = np.maximum(layer.weight @ x + layer.bias, 0.0)
    probs = softmax(head.cls.weight @ x + head.cls.bias)
    deltas = head.bbox.weight @ x + head.bbox.bias
    return HeadOutput(class_probs=probs, box_deltas=deltas)


def init_rpn(in_channels: int, k: int = 9, mid_channels: int | None = None,
             seed: int = 0, std: float = 0.01) -> RpnWeights:
    """Seeded Gaussian weights, zero biases; ``mid_channels`` defaults to ``in_channels``."""
    mid = in_channels if mid_channels is None else mid_channels
    rng = np.random.default_rng(seed)
    return RpnWeights(
        shared=ConvLayer(rng.normal(0, std, (mid, in_channels, 3, 3)), np.zeros(mid)),
        cls=ConvLayer(rng.normal(0, std, (2 * k, mid, 1, 1)), np.zeros(2 * k)),
        reg=ConvLayer(rng.normal(0, std, (4 * k, mid, 1, 1)), np.zeros(4 * k)),
    )


def init_head(in_features: int, num_classes: int, hidden: tuple[int, ...] = (1024, 1024),
              seed: int = 0, std: float = 0.01) -> DetectionHead:
    rng = np.random.default_rng(seed)
    layers = []
    n = in_features
    for h in hidden:
        layers.append(DenseLayer(rng.normal(0, std, (h, n)), np.zeros(h)))
        n = h
    cls = DenseLayer(rng.normal(0, std, (num_classes + 1, n)), np.zeros(num_classes + 1))
    bbox = DenseLayer(rng.normal(0, 0.001, (4 * num_classes, n)), np.zeros(4 * num_classes))
    return DetectionHead(tuple(layers), cls, bbox, num_classes)
