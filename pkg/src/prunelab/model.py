"""Plain (single-branch) CNN container: filter banks, prune masks, soft and hard pruning.

The architecture is conv -> relu repeated, then global average pooling and a
linear classifier. Conv layers carry no bias; the classifier is never pruned.
Soft pruning zeroes filter weights and their velocity buffers but keeps the
full shapes, so later gradient steps can revive a pruned filter. Hard pruning
(compact) physically removes pruned output channels and the matching input
channels of the next layer.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import ops


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel, self.stride) < 1:
            raise ValueError(f"conv dims must be >= 1: {self}")
        if self.pad < 0:
            raise ValueError(f"pad must be >= 0: {self}")


@dataclass(frozen=True)
class Architecture:
    input_shape: tuple[int, int, int]  # (C, H, W)
    conv_layers: tuple[ConvSpec, ...]
    num_classes: int

    def __post_init__(self):
        if len(self.conv_layers) < 1:
            raise ValueError("architecture needs at least one conv layer")
        if self.conv_layers[0].in_channels != self.input_shape[0]:
            raise ValueError(
                f"layer 0 expects {self.conv_layers[0].in_channels} input channels, "
                f"input has {self.input_shape[0]}"
            )
        for i in range(len(self.conv_layers) - 1):
            a, b = self.conv_layers[i], self.conv_layers[i + 1]
            if a.out_channels != b.in_channels:
                raise ValueError(
                    f"channel chain broken: layer {i} outputs {a.out_channels} "
                    f"but layer {i + 1} expects {b.in_channels}"
                )
        if self.num_classes < 2:
            raise ValueError(f"need >= 2 classes, got {self.num_classes}")

    def spatial_sizes(self) -> list[tuple[int, int]]:
        """Output (H, W) after each conv layer."""
        h, w = self.input_shape[1], self.input_shape[2]
        sizes = []
        for spec in self.conv_layers:
            h = ops.conv_out_size(h, spec.kernel, spec.stride, spec.pad)
            w = ops.conv_out_size(w, spec.kernel, spec.stride, spec.pad)
            if h < 1 or w < 1:
                raise ValueError(f"spatial size collapsed to {h}x{w} at {spec}")
            sizes.append((h, w))
        return sizes

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "conv_layers": [
                {
                    "in_channels": s.in_channels,
                    "out_channels": s.out_channels,
                    "kernel": s.kernel,
                    "stride": s.stride,
                    "pad": s.pad,
                }
                for s in self.conv_layers
            ],
            "num_classes": self.num_classes,
        }

    @staticmethod
    def from_dict(d: dict) -> "Architecture":
        return Architecture(
            input_shape=tuple(d["input_shape"]),
            conv_layers=tuple(ConvSpec(**s) for s in d["conv_layers"]),
            num_classes=d["num_classes"],
        )


@dataclass
class ModelState:
    arch: Architecture
    conv_weights: list[np.ndarray]          # per layer: (out, in, K, K)
    masks: list[np.ndarray]                 # per layer: bool keep-vector, len = out
    fc_weight: np.ndarray                   # (num_classes, last_out)
    fc_bias: np.ndarray                     # (num_classes,)
    conv_velocity: list[np.ndarray] = field(default_factory=list)
    fc_weight_velocity: np.ndarray | None = None
    fc_bias_velocity: np.ndarray | None = None

    def __post_init__(self):
        if not self.conv_velocity:
            self.conv_velocity = [np.zeros_like(w) for w in self.conv_weights]
        if self.fc_weight_velocity is None:
            self.fc_weight_velocity = np.zeros_like(self.fc_weight)
        if self.fc_bias_velocity is None:
            self.fc_bias_velocity = np.zeros_like(self.fc_bias)

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)

    def total_filters(self) -> int:
        return sum(s.out_channels for s in self.arch.conv_layers)

    def nonzero_filter_count(self) -> int:
        """Sparsity level: number of filters with any nonzero weight."""
        return sum(int(np.any(w != 0, axis=(1, 2, 3)).sum()) for w in self.conv_weights)


def all_keep_masks(arch: Architecture) -> list[np.ndarray]:
    return [np.ones(s.out_channels, dtype=bool) for s in arch.conv_layers]


def build_model(arch: Architecture, seed: int) -> ModelState:
    """Seeded uniform init on [-b, b] with b = sqrt(6 / (fan_in))."""
    rng = np.random.default_rng(seed)
    weights = []
    for spec in arch.conv_layers:
        bound = math.sqrt(6.0 / (spec.in_channels * spec.kernel * spec.kernel))
        weights.append(
            rng.uniform(-bound, bound, size=(spec.out_channels, spec.in_channels, spec.kernel, spec.kernel))
        )
    last_out = arch.conv_layers[-1].out_channels
    bound = math.sqrt(6.0 / last_out)
    fc_w = rng.uniform(-bound, bound, size=(arch.num_classes, last_out))
    fc_b = np.zeros(arch.num_classes)
    return ModelState(
        arch=arch,
        conv_weights=weights,
        masks=all_keep_masks(arch),
        fc_weight=fc_w,
        fc_bias=fc_b,
    )


def flatten_filters(weights: np.ndarray) -> np.ndarray:
    """(N_out, N_in, K, K) -> (N_out, N_in*K*K), row j = filter j row-major."""
    return weights.reshape(weights.shape[0], -1)


def _forward_activations(model: ModelState, batch: np.ndarray) -> tuple[list, np.ndarray]:
    """Returns per-layer caches and logits. Caches hold (pre_relu, post_relu)."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 4 or x.shape[1:] != model.arch.input_shape:
        raise ValueError(
            f"batch shape {x.shape} does not match architecture input "
            f"(B, {', '.join(map(str, model.arch.input_shape))})"
        )
    caches = []
    for spec, w in zip(model.arch.conv_layers, model.conv_weights):
        pre = ops.conv2d_forward(x, w, spec.stride, spec.pad)
        post = ops.relu_forward(pre)
        caches.append((x, pre, post))
        x = post
    pooled = ops.global_avgpool_forward(x)
    logits = ops.linear_forward(pooled, model.fc_weight, model.fc_bias)
    caches.append((x, pooled))
    return caches, logits


def forward(model: ModelState, batch: np.ndarray) -> np.ndarray:
    """Batch (B, C, H, W) -> logits (B, num_classes)."""
    _, logits = _forward_activations(model, batch)
    return logits


def conv_feature_maps(model: ModelState, image: np.ndarray, layer_index: int) -> np.ndarray:
    """Post-activation feature maps of one conv layer for a single image (C, H, W)."""
    if not 0 <= layer_index < len(model.arch.conv_layers):
        raise ValueError(
            f"layer_index {layer_index} out of range [0, {len(model.arch.conv_layers)})"
        )
    x = np.asarray(image, dtype=np.float64)
    if x.shape != model.arch.input_shape:
        raise ValueError(f"image shape {x.shape} != architecture input {model.arch.input_shape}")
    x = x[None]
    for i, (spec, w) in enumerate(zip(model.arch.conv_layers, model.conv_weights)):
        x = ops.relu_forward(ops.conv2d_forward(x, w, spec.stride, spec.pad))
        if i == layer_index:
            return x[0]
    raise AssertionError("unreachable")


def _check_masks(model: ModelState, masks: list[np.ndarray]) -> list[np.ndarray]:
    if len(masks) != len(model.conv_weights):
        raise ValueError(
            f"got {len(masks)} masks for {len(model.conv_weights)} conv layers"
        )
    out = []
    for i, (m, spec) in enumerate(zip(masks, model.arch.conv_layers)):
        m = np.asarray(m, dtype=bool)
        if m.shape != (spec.out_channels,):
            raise ValueError(
                f"mask {i} has length {m.shape}, layer has {spec.out_channels} filters"
            )
        out.append(m)
    return out


def apply_mask(model: ModelState, masks: list[np.ndarray]) -> ModelState:
    """Soft prune in place: zero pruned filters' weights and velocities."""
    masks = _check_masks(model, masks)
    for w, v, m in zip(model.conv_weights, model.conv_velocity, masks):
        w[~m] = 0.0
        v[~m] = 0.0
    model.masks = [m.copy() for m in masks]
    return model


def compact(model: ModelState, masks: list[np.ndarray]) -> ModelState:
    """Hard prune: physically drop pruned output channels and the matching
    input channels downstream. Returns a new model; velocities reset."""
    masks = _check_masks(model, masks)
    for i, m in enumerate(masks):
        if not m.any():
            raise ValueError(f"mask {i} prunes every filter of layer {i}")
    new_specs = []
    new_weights = []
    prev_keep: np.ndarray | None = None
    for spec, w, m in zip(model.arch.conv_layers, model.conv_weights, masks):
        w = w[m]
        in_ch = spec.in_channels
        if prev_keep is not None:
            w = w[:, prev_keep]
            in_ch = int(prev_keep.sum())
        new_specs.append(
            ConvSpec(in_ch, int(m.sum()), spec.kernel, spec.stride, spec.pad)
        )
        new_weights.append(w.copy())
        prev_keep = m
    fc_w = model.fc_weight[:, prev_keep].copy()
    arch = Architecture(model.arch.input_shape, tuple(new_specs), model.arch.num_classes)
    return ModelState(
        arch=arch,
        conv_weights=new_weights,
        masks=all_keep_masks(arch),
        fc_weight=fc_w,
        fc_bias=model.fc_bias.copy(),
    )


def evaluate(model: ModelState, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> dict:
    """Loss plus top-1/top-5 accuracy over a labelled set."""
    n = x.shape[0]
    losses = []
    top1 = 0
    top5 = 0
    for start in range(0, n, batch_size):
        xb, yb = x[start : start + batch_size], y[start : start + batch_size]
        logits = forward(model, xb)
        loss, _ = ops.softmax_cross_entropy(logits, yb)
        losses.append(loss * len(yb))
        pred = logits.argmax(axis=1)
        top1 += int((pred == yb).sum())
        k = min(5, logits.shape[1])
        topk = np.argpartition(-logits, kth=k - 1, axis=1)[:, :k]
        top5 += int((topk == yb[:, None]).any(axis=1).sum())
    return {
        "loss": sum(losses) / n,
        "top1": top1 / n,
        "top5": top5 / n,
    }


def loss_and_gradients(
    model: ModelState, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, dict]:
    """Cross-entropy loss, logits and gradients of every parameter.

    Gradient dict keys: "conv" (list per layer), "fc_weight", "fc_bias".
    """
    caches, logits = _forward_activations(model, x)
    loss, grad_logits = ops.softmax_cross_entropy(logits, y)
    pooled_in, pooled = caches[-1]
    grad_pooled, grad_fc_w, grad_fc_b = ops.linear_backward(
        pooled, model.fc_weight, grad_logits
    )
    grad = ops.global_avgpool_backward(pooled_in, grad_pooled)
    conv_grads: list[np.ndarray] = [None] * len(model.conv_weights)  # type: ignore
    for i in range(len(model.conv_weights) - 1, -1, -1):
        xin, pre, _post = caches[i]
        grad = ops.relu_backward(pre, grad)
        grad, gw = ops.conv2d_backward(
            xin, model.conv_weights[i],
            grad, model.arch.conv_layers[i].stride, model.arch.conv_layers[i].pad,
        )
        conv_grads[i] = gw
    grads = {"conv": conv_grads, "fc_weight": grad_fc_w, "fc_bias": grad_fc_b}
    return loss, logits, grads


def train_epoch(
    model: ModelState,
    x: np.ndarray,
    y: np.ndarray,
    lr: float,
    momentum: float,
    weight_decay: float,
    batch_size: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """One seeded-shuffle pass of minibatch SGD. Mutates the model in place.

    lr == 0 is allowed and leaves weights untouched (pure evaluation pass).
    Returns (mean loss, accuracy) over the epoch.
    """
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    order = rng.permutation(n)
    total_loss = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        xb, yb = x[idx], y[idx]
        loss, logits, grads = loss_and_gradients(model, xb, yb)
        total_loss += loss * len(idx)
        correct += int((logits.argmax(axis=1) == yb).sum())
        if lr > 0:
            ops.sgd_step(
                model.conv_weights + [model.fc_weight, model.fc_bias],
                grads["conv"] + [grads["fc_weight"], grads["fc_bias"]],
                model.conv_velocity + [model.fc_weight_velocity, model.fc_bias_velocity],
                lr=lr,
                momentum=momentum,
                weight_decay=weight_decay,
            )
    return total_loss / n, correct / n
