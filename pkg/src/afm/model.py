"""Feature-extractor MLP and the paired interpolation/normal classifiers."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor


class Affine:
    """Dense layer y = x @ W + b with glorot-uniform init, zero bias."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator | None = None):
        if rng is None:
            w = np.zeros((fan_in, fan_out))
        else:
            a = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-a, a, size=(fan_in, fan_out))
        self.weight = T.parameter(w)
        self.bias = T.parameter(np.zeros((1, fan_out)))

    @property
    def fan_in(self):
        return self.weight.values.shape[0]

    @property
    def fan_out(self):
        return self.weight.values.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        if x.values.shape[0] == 0:
            # empty batch short-circuits; no tape entry needed
            return T.constant(np.zeros((0, self.fan_out)))
        return T.add(T.matmul(x, self.weight), self.bias)

    def parameters(self, prefix: str):
        return [(f"{prefix}.weight", self.weight), (f"{prefix}.bias", self.bias)]


class Backbone:
    """MLP feature extractor; relu after every layer, features post-relu."""

    def __init__(self, widths, rng: np.random.Generator | None = None):
        widths = list(widths)
        if len(widths) < 1:
            raise ShapeError("backbone needs at least an input width")
        self.widths = widths
        self.layers = [Affine(widths[i], widths[i + 1], rng) for i in range(len(widths) - 1)]

    @property
    def input_dim(self):
        return self.widths[0]

    @property
    def feature_dim(self):
        return self.widths[-1]

    def extract_features(self, batch: Tensor) -> Tensor:
        if batch.values.ndim != 2 or batch.values.shape[1] != self.input_dim:
            raise ShapeError(
                f"backbone expects width {self.input_dim}, got {batch.values.shape}"
            )
        h = batch
        for layer in self.layers:
            h = layer(h)
            if h.values.shape[0] > 0:
                h = T.relu(h)
        return h

    def parameters(self):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend(layer.parameters(f"backbone.{i}"))
        return out


class ClassifierPair:
    """Interpolation classifier (head1) and normal classifier (head2).

    In shared mode both heads reference the same parameter tensors, so an
    update through either path affects both.
    """

    def __init__(self, feature_dim: int, n_classes: int, shared: bool = True,
                 rng: np.random.Generator | None = None):
        self.shared = bool(shared)
        self.n_classes = n_classes
        self.head1 = Affine(feature_dim, n_classes, rng)
        self.head2 = self.head1 if self.shared else Affine(feature_dim, n_classes, rng)

    def classify(self, features: Tensor, head: int) -> Tensor:
        if head not in (1, 2):
            raise ShapeError(f"head must be 1 or 2, got {head}")
        layer = self.head1 if head == 1 else self.head2
        if features.values.ndim != 2 or features.values.shape[1] != layer.fan_in:
            raise ShapeError(
                f"classifier expects width {layer.fan_in}, got {features.values.shape}"
            )
        logits = layer(features)
        if logits.values.shape[0] == 0:
            return logits
        return T.softmax(logits)

    def parameters(self):
        out = self.head1.parameters("classifier.head1")
        if not self.shared:
            out.extend(self.head2.parameters("classifier.head2"))
        return out


class Model:
    """Backbone plus classifier pair; the piece kept at inference time."""

    def __init__(self, widths, n_classes, shared_classifiers=True,
                 rng: np.random.Generator | None = None):
        self.backbone = Backbone(widths, rng)
        self.classifiers = ClassifierPair(self.backbone.feature_dim, n_classes,
                                          shared_classifiers, rng)

    def extract_features(self, batch: Tensor) -> Tensor:
        return self.backbone.extract_features(batch)

    def classify(self, features: Tensor, head: int) -> Tensor:
        return self.classifiers.classify(features, head)

    def inference_predict(self, batch) -> np.ndarray:
        """argmax of the normal-classifier probabilities; no group/mixup
        computation occurs. Ties break toward the lowest class index."""
        x = batch if isinstance(batch, Tensor) else T.constant(batch)
        probs = self.classify(self.extract_features(x), head=2)
        if probs.values.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        return np.argmax(probs.values, axis=1)

    def parameters(self):
        return self.backbone.parameters() + self.classifiers.parameters()
