"""FLOPs accounting (counted as multiply-accumulates) and forward timing.

Only convolution work is counted; pooling and the classifier are negligible
at this scale. Theoretical reduction follows from surviving channel counts:
layer i runs with kept(i-1) input channels and kept(i) output channels.
Measured wall-clock times are reported, never asserted: background load and
BLAS behavior make realistic speedup hardware-dependent.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .model import ModelState, forward

log = logging.getLogger(__name__)


@dataclass
class LayerFlops:
    index: int
    baseline_macs: int
    pruned_macs: int


@dataclass
class FlopsReport:
    layers: list[LayerFlops]
    baseline_total: int
    pruned_total: int
    measured_ms_baseline: float | None = None
    measured_ms_pruned: float | None = None

    @property
    def theoretical_reduction_ratio(self) -> float:
        if self.baseline_total == 0:
            return 0.0
        return 1.0 - self.pruned_total / self.baseline_total

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "index": l.index,
                    "baseline_macs": l.baseline_macs,
                    "pruned_macs": l.pruned_macs,
                }
                for l in self.layers
            ],
            "baseline_macs": self.baseline_total,
            "pruned_macs": self.pruned_total,
            "theoretical_reduction": self.theoretical_reduction_ratio,
            "measured_ms_baseline": self.measured_ms_baseline,
            "measured_ms_pruned": self.measured_ms_pruned,
        }


def layer_flops(n_in: int, n_out: int, kernel: int, h_out: int, w_out: int) -> int:
    """MACs of one convolution layer for a single input."""
    if min(n_in, n_out, kernel, h_out, w_out) < 1:
        raise ValueError("all layer_flops arguments must be positive")
    return n_out * n_in * kernel * kernel * h_out * w_out


def theoretical_reduction(p_i: float, p_iplus1: float) -> float:
    """Pruned-FLOPs ratio when a layer loses rate p_i of its inputs and
    rate p_iplus1 of its outputs: 1 - (1 - p_iplus1)(1 - p_i)."""
    if not (0 <= p_i < 1 and 0 <= p_iplus1 < 1):
        raise ValueError(f"rates must be in [0, 1): {p_i}, {p_iplus1}")
    return 1.0 - (1.0 - p_iplus1) * (1.0 - p_i)


def model_flops(model: ModelState, masks: list[np.ndarray] | None = None) -> FlopsReport:
    """Per-layer MAC counts, baseline and with the given keep-masks applied."""
    masks = masks if masks is not None else model.masks
    if len(masks) != len(model.arch.conv_layers):
        raise ValueError(
            f"got {len(masks)} masks for {len(model.arch.conv_layers)} layers"
        )
    sizes = model.arch.spatial_sizes()
    layers = []
    prev_kept = model.arch.input_shape[0]  # input channels are never pruned
    for i, (spec, m, (h, w)) in enumerate(zip(model.arch.conv_layers, masks, sizes)):
        m = np.asarray(m, dtype=bool)
        if m.shape != (spec.out_channels,):
            raise ValueError(f"mask {i} length {m.shape} != {spec.out_channels} filters")
        kept = int(m.sum())
        base = layer_flops(spec.in_channels, spec.out_channels, spec.kernel, h, w)
        pruned = (
            kept * prev_kept * spec.kernel * spec.kernel * h * w if kept > 0 else 0
        )
        layers.append(LayerFlops(index=i, baseline_macs=base, pruned_macs=pruned))
        prev_kept = kept
    return FlopsReport(
        layers=layers,
        baseline_total=sum(l.baseline_macs for l in layers),
        pruned_total=sum(l.pruned_macs for l in layers),
    )


def timing_harness(
    model: ModelState, batch: np.ndarray, warmup: int = 2, reps: int = 5
) -> float:
    """Median forward wall time in milliseconds over reps runs after warmup.
    Single-threaded; background machine load corrupts the measurement."""
    if reps < 3:
        raise ValueError(f"reps must be >= 3, got {reps}")
    for _ in range(warmup):
        forward(model, batch)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        forward(model, batch)
        times.append((time.perf_counter() - t0) * 1000.0)
    return float(np.median(times))
