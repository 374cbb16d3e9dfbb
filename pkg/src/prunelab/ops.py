"""Dense tensor ops with analytic backward passes.

Everything here is double precision and purely functional: no op mutates
its inputs, identical inputs produce bit-identical outputs. Convolution
uses the cross-correlation convention (no kernel flip).

Shapes follow the (batch, channels, height, width) layout. The single-image
variants accept (C, H, W) and add/strip the batch axis internally.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _check_conv_shapes(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> None:
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(
            f"conv2d expects 4-d input and weights, got input {x.shape}, weights {w.shape}"
        )
    if x.shape[1] != w.shape[1]:
        raise ValueError(
            f"conv2d channel mismatch: input has {x.shape[1]} channels "
            f"(shape {x.shape}) but weights expect {w.shape[1]} (shape {w.shape})"
        )
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if pad < 0:
        raise ValueError(f"pad must be >= 0, got {pad}")
    k = w.shape[2]
    if x.shape[2] + 2 * pad < k or x.shape[3] + 2 * pad < k:
        raise ValueError(
            f"kernel {k} larger than padded input {x.shape} with pad={pad}"
        )


def _as_batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    return x, False


def _im2col(x: np.ndarray, kernel: int, stride: int, pad: int) -> np.ndarray:
    """(B, C, H, W) -> (B, H', W', C, K, K) patch view (copied)."""
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (B, C, H', W', K, K)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))


def conv2d_forward(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlate input with a filter bank.

    x: (C_in, H, W) or (B, C_in, H, W); w: (C_out, C_in, K, K).
    """
    xb, squeeze = _as_batched(np.asarray(x, dtype=np.float64))
    w = np.asarray(w, dtype=np.float64)
    _check_conv_shapes(xb, w, stride, pad)
    k = w.shape[2]
    cols = _im2col(xb, k, stride, pad)
    b, oh, ow = cols.shape[:3]
    out = cols.reshape(b * oh * ow, -1) @ w.reshape(w.shape[0], -1).T
    out = out.reshape(b, oh, ow, w.shape[0]).transpose(0, 3, 1, 2)
    return out[0] if squeeze else out


def conv2d_backward(
    x: np.ndarray, w: np.ndarray, grad_out: np.ndarray, stride: int = 1, pad: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of sum(grad_out * conv2d_forward(x, w)) w.r.t. x and w."""
    xb, squeeze = _as_batched(np.asarray(x, dtype=np.float64))
    w = np.asarray(w, dtype=np.float64)
    gb, _ = _as_batched(np.asarray(grad_out, dtype=np.float64))
    _check_conv_shapes(xb, w, stride, pad)
    k = w.shape[2]
    oh = conv_out_size(xb.shape[2], k, stride, pad)
    ow = conv_out_size(xb.shape[3], k, stride, pad)
    expect = (xb.shape[0], w.shape[0], oh, ow)
    if gb.shape != expect:
        raise ValueError(f"grad_out shape {gb.shape} does not match conv output {expect}")

    cols = _im2col(xb, k, stride, pad)  # (B, H', W', C, K, K)
    g2 = gb.transpose(0, 2, 3, 1).reshape(-1, w.shape[0])  # (B*H'*W', C_out)
    grad_w = (g2.T @ cols.reshape(g2.shape[0], -1)).reshape(w.shape)

    # scatter grad back: dcols = g @ w, then col2im
    dcols = (g2 @ w.reshape(w.shape[0], -1)).reshape(
        xb.shape[0], oh, ow, xb.shape[1], k, k
    )
    hp, wp = xb.shape[2] + 2 * pad, xb.shape[3] + 2 * pad
    grad_xp = np.zeros((xb.shape[0], xb.shape[1], hp, wp))
    for i in range(k):
        for j in range(k):
            grad_xp[:, :, i : i + oh * stride : stride, j : j + ow * stride : stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    grad_x = grad_xp[:, :, pad : pad + xb.shape[2], pad : pad + xb.shape[3]]
    if squeeze:
        grad_x = grad_x[0]
    return grad_x, grad_w


def conv2d_reference(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Naive 6-nested-loop convolution, the correctness oracle for conv2d_forward."""
    xb, squeeze = _as_batched(np.asarray(x, dtype=np.float64))
    w = np.asarray(w, dtype=np.float64)
    _check_conv_shapes(xb, w, stride, pad)
    b, c_in, h, wd = xb.shape
    c_out, _, k, _ = w.shape
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(wd, k, stride, pad)
    xp = np.pad(xb, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((b, c_out, oh, ow))
    for n in range(b):
        for co in range(c_out):
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0
                    for ci in range(c_in):
                        for ky in range(k):
                            for kx in range(k):
                                acc += (
                                    xp[n, ci, oy * stride + ky, ox * stride + kx]
                                    * w[co, ci, ky, kx]
                                )
                    out[n, co, oy, ox] = acc
    return out[0] if squeeze else out


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # subgradient 1 at exactly 0: lets gradient reach soft-pruned (zeroed)
    # filters whose pre-activations are identically zero, enabling recovery
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if x.shape != grad_out.shape:
        raise ValueError(f"relu_backward shape mismatch: {x.shape} vs {grad_out.shape}")
    return grad_out * (x >= 0)


def global_avgpool_forward(x: np.ndarray) -> np.ndarray:
    """(B, C, H, W) -> (B, C) per-channel spatial mean."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"global_avgpool expects (B, C, H, W), got {x.shape}")
    return x.mean(axis=(2, 3))


def global_avgpool_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != x.shape[:2]:
        raise ValueError(
            f"global_avgpool_backward shape mismatch: grad {grad_out.shape} vs input {x.shape}"
        )
    area = x.shape[2] * x.shape[3]
    return np.broadcast_to(grad_out[:, :, None, None] / area, x.shape).copy()


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x: (B, D), w: (C, D), b: (C,) -> (B, C)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ValueError(
            f"linear shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}"
        )
    return x @ w.T + b


def linear_backward(
    x: np.ndarray, w: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (x.shape[0], w.shape[0]):
        raise ValueError(
            f"linear_backward grad shape {grad_out.shape}, expected {(x.shape[0], w.shape[0])}"
        )
    return grad_out @ w, grad_out.T @ x, grad_out.sum(axis=0)


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch plus the gradient w.r.t. logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(
            f"softmax_cross_entropy expects (B, C) logits and (B,) labels, "
            f"got {logits.shape} and {labels.shape}"
        )
    b, c = logits.shape
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels out of range [0, {c}): {labels.min()}..{labels.max()}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(lse - shifted[np.arange(b), labels]))
    probs = np.exp(shifted - lse[:, None])
    probs[np.arange(b), labels] -= 1.0
    return loss, probs / b


def sgd_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    velocities: Sequence[np.ndarray],
    lr: float,
    momentum: float = 0.0,
    weight_decay: float = 0.0,
) -> None:
    """In-place momentum SGD: v <- m*v + g + wd*p; p <- p - lr*v."""
    if lr <= 0:
        raise ValueError(f"lr must be > 0, got {lr}")
    if not 0 <= momentum < 1:
        raise ValueError(f"momentum must be in [0, 1), got {momentum}")
    for p, g, v in zip(params, grads, velocities):
        v *= momentum
        v += g + weight_decay * p
        p -= lr * v


def finite_difference_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, the test oracle."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        hi = f(x)
        xf[i] = orig - eps
        lo = f(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1, |a|, |n|), elementwise."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
