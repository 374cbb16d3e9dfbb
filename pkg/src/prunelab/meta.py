"""Adaptive criterion selection as a greedy sequential decision process.

At each pruning step every candidate criterion is tried on a throwaway
masked copy of the current model; the criterion whose meta-attribute gap
|M(pruned) - M(reference)| is smallest wins and its masks are applied
softly. By default the reference is the current pre-step model; a config
switch allows comparing against a frozen initial snapshot instead.

Exactly one criterion is applied per step (one-hot action vector).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import flops, model as mdl
from .criteria import Criterion, criterion_scores, select_filters
from .model import ModelState

log = logging.getLogger(__name__)

META_ATTRIBUTES = ("top5_loss", "top1_loss", "mean_weight", "sparsity", "random")


@dataclass
class PruneStepRecord:
    step: int
    epoch: int
    candidate_names: list[str]
    candidate_values: list[float]
    candidate_gaps: list[float]
    selected: str
    action: list[int]                      # one-hot over candidates
    reference_value: float
    masks: list[list[int]]
    attribute: str

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "epoch": self.epoch,
            "attribute": self.attribute,
            "reference_value": self.reference_value,
            "candidates": [
                {"criterion": n, "value": v, "gap": g}
                for n, v, g in zip(
                    self.candidate_names, self.candidate_values, self.candidate_gaps
                )
            ],
            "selected": self.selected,
            "action": self.action,
            "masks": self.masks,
        }


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    train_acc: float
    eval_top1: float
    eval_top5: float
    kappa: int
    masked_macs: int

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "train_acc": self.train_acc,
            "eval_top1": self.eval_top1,
            "eval_top5": self.eval_top5,
            "kappa": self.kappa,
            "masked_macs": self.masked_macs,
        }


def meta_attribute(
    model: ModelState,
    eval_x: np.ndarray | None,
    eval_y: np.ndarray | None,
    attribute: str,
    rng: np.random.Generator | None = None,
) -> float:
    """Scalar characterization of a network used for pruned-vs-original gaps."""
    if attribute not in META_ATTRIBUTES:
        raise ValueError(f"unknown meta-attribute {attribute!r}, expected one of {META_ATTRIBUTES}")
    if attribute in ("top5_loss", "top1_loss"):
        if eval_x is None or eval_y is None or len(eval_x) == 0:
            raise ValueError(f"{attribute} needs a non-empty evaluation batch")
        if attribute == "top5_loss" and model.arch.num_classes < 6:
            raise ValueError(
                f"top5_loss is degenerate with {model.arch.num_classes} classes "
                "(top-5 accuracy is always 1.0 when classes <= 5)"
            )
        stats = mdl.evaluate(model, eval_x, eval_y)
        return 1.0 - (stats["top5"] if attribute == "top5_loss" else stats["top1"])
    if attribute == "mean_weight":
        total = sum(w.sum() for w in model.conv_weights)
        count = sum(w.size for w in model.conv_weights)
        return float(total / count)
    if attribute == "sparsity":
        return float(model.nonzero_filter_count())
    # random: seeded uniform baseline, no model information
    if rng is None:
        raise ValueError("random meta-attribute needs an rng")
    return float(rng.uniform())


def candidate_prune(model: ModelState, criterion: Criterion, rate: float) -> list[np.ndarray]:
    """Masks pruning floor(rate * N) filters of every conv layer by one
    criterion; previously zeroed filters participate in the ranking."""
    if not 0 <= rate < 1:
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    masks = []
    for w in model.conv_weights:
        scores = criterion_scores(w, criterion)
        keep = np.ones(w.shape[0], dtype=bool)
        keep[select_filters(scores, rate)] = False
        masks.append(keep)
    return masks


def select_criterion(
    model: ModelState,
    eval_x: np.ndarray | None,
    eval_y: np.ndarray | None,
    candidates: Sequence[Criterion],
    rate: float,
    attribute: str,
    rng: np.random.Generator,
    step: int = 0,
    epoch: int = 0,
    reference_model: ModelState | None = None,
) -> tuple[Criterion, list[np.ndarray], PruneStepRecord]:
    """Evaluate every candidate on a masked copy and pick the gap minimizer
    (ties: earliest in list order). The input model is never mutated.

    The gap reference defaults to the current model; pass reference_model to
    compare against a frozen snapshot instead."""
    if not candidates:
        raise ValueError("candidate list is empty")
    ref = meta_attribute(reference_model or model, eval_x, eval_y, attribute, rng)
    names, values, gaps, all_masks = [], [], [], []
    for cand in candidates:
        masks = candidate_prune(model, cand, rate)
        trial = mdl.apply_mask(model.copy(), masks)
        val = meta_attribute(trial, eval_x, eval_y, attribute, rng)
        names.append(cand.name)
        values.append(val)
        gaps.append(abs(val - ref))
        all_masks.append(masks)
    if attribute == "random":
        pick = int(rng.integers(len(candidates)))
    else:
        pick = int(np.argmin(gaps))  # argmin returns the first minimum
        assert gaps[pick] <= min(gaps)
    action = [1 if i == pick else 0 for i in range(len(candidates))]
    assert sum(action) == 1
    record = PruneStepRecord(
        step=step,
        epoch=epoch,
        candidate_names=names,
        candidate_values=[float(v) for v in values],
        candidate_gaps=[float(g) for g in gaps],
        selected=names[pick],
        action=action,
        reference_value=float(ref),
        masks=[m.astype(int).tolist() for m in all_masks[pick]],
        attribute=attribute,
    )
    return candidates[pick], all_masks[pick], record


@dataclass
class TrainingPlan:
    epochs: int
    interval: int
    prune_rate: float
    candidates: Sequence[Criterion]
    attribute: str
    lr: float
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 32
    lr_schedule: Callable[[int], float] | None = None  # epoch (1-based) -> lr
    reference_initial: bool = False  # gap vs epoch-0 snapshot instead of current

    def __post_init__(self):
        if self.interval < 1 or self.epochs < self.interval:
            raise ValueError(
                f"need epochs >= interval >= 1, got epochs={self.epochs} interval={self.interval}"
            )
        if not 0 <= self.prune_rate < 1:
            raise ValueError(f"prune_rate must be in [0, 1), got {self.prune_rate}")

    def lr_at(self, epoch: int) -> float:
        return self.lr_schedule(epoch) if self.lr_schedule else self.lr


def run_pruning_training(
    model: ModelState,
    train_x: np.ndarray,
    train_y: np.ndarray,
    eval_x: np.ndarray,
    eval_y: np.ndarray,
    plan: TrainingPlan,
    rng: np.random.Generator,
) -> tuple[ModelState, list[PruneStepRecord], list[EpochReport]]:
    """Alternate training and soft pruning, then compact.

    Loop: train `interval` epochs -> select criterion -> apply masks.
    A trailing partial interval still gets a final selection, so the run
    always ends selection -> apply_mask -> compact.
    Returns (compacted model, prune step records, epoch reports).
    """
    reference = model.copy() if plan.reference_initial else None
    records: list[PruneStepRecord] = []
    reports: list[EpochReport] = []
    step = 0
    last_masks = model.masks

    def prune_step(epoch: int) -> None:
        nonlocal step, last_masks
        step += 1
        _, masks, record = select_criterion(
            model, eval_x, eval_y, plan.candidates, plan.prune_rate,
            plan.attribute, rng, step=step, epoch=epoch, reference_model=reference,
        )
        mdl.apply_mask(model, masks)
        last_masks = masks
        records.append(record)

    for epoch in range(1, plan.epochs + 1):
        loss, acc = mdl.train_epoch(
            model, train_x, train_y,
            lr=plan.lr_at(epoch), momentum=plan.momentum,
            weight_decay=plan.weight_decay, batch_size=plan.batch_size, rng=rng,
        )
        if epoch % plan.interval == 0:
            prune_step(epoch)
        stats = mdl.evaluate(model, eval_x, eval_y)
        report = flops.model_flops(model, model.masks)
        reports.append(
            EpochReport(
                epoch=epoch,
                train_loss=float(loss),
                train_acc=float(acc),
                eval_top1=float(stats["top1"]),
                eval_top5=float(stats["top5"]),
                kappa=model.nonzero_filter_count(),
                masked_macs=report.pruned_total,
            )
        )
    if plan.epochs % plan.interval != 0:
        prune_step(plan.epochs)
    final = mdl.compact(model, last_masks)
    return final, records, reports
