"""Experiment orchestration: config, run driver, report emission, feature maps.

Reports come in two flavors written side by side:
  report.csv   one row per epoch and one per prune step (LF newlines,
               fixed column order, see CSV_COLUMNS)
  report.json  config echo + all epoch/prune-step records + FLOPs report

Determinism contract: identical (config, seed) produce byte-identical
report.csv / report.json / final.ckpt. Wall-clock timings live only in
manifest.json and in the two measured_ms_* fields of the FLOPs report,
which are the documented fields to mask when comparing runs.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import data as datamod, flops, meta, model as mdl
from .checkpoint import save_checkpoint
from .criteria import DEFAULT_CRITERIA, Criterion, parse_criterion
from .model import Architecture, ConvSpec, ModelState

PACKAGE_VERSION = "0.1.0"

CSV_COLUMNS = [
    "kind", "epoch", "step", "train_loss", "train_acc", "eval_top1", "eval_top5",
    "kappa", "masked_macs", "selected_criterion", "reference_value", "candidate_gaps",
]

DEFAULT_ARCH = {
    "input_shape": [1, 16, 16],
    "conv_layers": [
        {"in_channels": 1, "out_channels": 8, "kernel": 3, "stride": 1, "pad": 1},
        {"in_channels": 8, "out_channels": 16, "kernel": 3, "stride": 2, "pad": 1},
        {"in_channels": 16, "out_channels": 16, "kernel": 3, "stride": 1, "pad": 1},
        {"in_channels": 16, "out_channels": 16, "kernel": 3, "stride": 2, "pad": 1},
    ],
    "num_classes": 10,
}


@dataclass
class ExperimentConfig:
    seed: int = 0
    arch: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_ARCH)))
    dataset: str = "synthetic"          # "synthetic" or "cifar10:<path>"
    n_train: int = 600
    n_eval: int = 300
    image_size: int = 16
    epochs: int = 20
    interval: int = 2
    prune_rate: float = 0.4
    criteria: tuple[str, ...] = tuple(c.name for c in DEFAULT_CRITERIA)
    meta_attribute: str = "top5_loss"
    lr: float = 0.02
    decay_factor: float = 0.1
    decay_at: tuple[float, float] = (0.5, 0.75)  # fractions of total epochs
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 32
    eval_batch_size: int = 512
    reference_initial: bool = False

    def validate(self) -> None:
        if not (self.epochs >= self.interval >= 1):
            raise ValueError(
                f"need epochs >= interval >= 1 (epochs={self.epochs}, interval={self.interval})"
            )
        if not 0 <= self.prune_rate < 1:
            raise ValueError(f"prune_rate must be in [0, 1), got {self.prune_rate}")
        if self.meta_attribute not in meta.META_ATTRIBUTES:
            raise ValueError(
                f"meta_attribute must be one of {meta.META_ATTRIBUTES}, got {self.meta_attribute!r}"
            )
        arch = self.architecture()
        if self.meta_attribute == "top5_loss" and arch.num_classes < 6:
            raise ValueError("top5_loss needs >= 6 classes")
        for name in self.criteria:
            parse_criterion(name)

    def architecture(self) -> Architecture:
        return Architecture.from_dict(self.arch)

    def criterion_objects(self) -> list[Criterion]:
        return [parse_criterion(n) for n in self.criteria]

    def lr_schedule(self):
        """Step decay at the configured fractions of the run."""
        marks = sorted(int(f * self.epochs) for f in self.decay_at)

        def at(epoch: int) -> float:
            lr = self.lr
            for m in marks:
                if m > 0 and epoch > m:
                    lr *= self.decay_factor
            return lr

        return at

    def to_dict(self) -> dict:
        d = asdict(self)
        d["criteria"] = list(self.criteria)
        d["decay_at"] = list(self.decay_at)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "criteria" in d:
            d["criteria"] = tuple(d["criteria"])
        if "decay_at" in d:
            d["decay_at"] = tuple(d["decay_at"])
        return ExperimentConfig(**d)


def load_dataset(config: ExperimentConfig) -> datamod.Dataset:
    if config.dataset == "synthetic":
        return datamod.gen_synthetic_dataset(
            seed=config.seed,
            n_train=config.n_train,
            n_eval=config.n_eval,
            classes=config.architecture().num_classes,
            image_size=config.image_size,
        )
    if config.dataset.startswith("cifar10:"):
        return datamod.load_cifar10_binary(config.dataset.split(":", 1)[1])
    raise ValueError(f"unknown dataset spec {config.dataset!r}")


def run_experiment(
    config: ExperimentConfig, out_dir: str | Path | None = None
) -> dict:
    """Run the full train/prune loop; optionally emit reports and checkpoint.

    Returns {"model", "records", "reports", "flops", "files"}.
    """
    config.validate()
    t0 = time.perf_counter()
    dataset = load_dataset(config)
    arch = config.architecture()
    model = mdl.build_model(arch, seed=config.seed)
    rng = np.random.default_rng(config.seed + 1)

    # one fixed evaluation batch per run keeps selection deterministic and cheap
    n_eval = min(config.eval_batch_size, len(dataset.eval_x))
    eval_x, eval_y = dataset.eval_x[:n_eval], dataset.eval_y[:n_eval]

    plan = meta.TrainingPlan(
        epochs=config.epochs,
        interval=config.interval,
        prune_rate=config.prune_rate,
        candidates=config.criterion_objects(),
        attribute=config.meta_attribute,
        lr=config.lr,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        batch_size=config.batch_size,
        lr_schedule=config.lr_schedule(),
        reference_initial=config.reference_initial,
    )
    final, records, reports = meta.run_pruning_training(
        model, dataset.train_x, dataset.train_y, eval_x, eval_y, plan, rng
    )
    flops_report = flops.model_flops(model, model.masks)

    files = {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = emit_report(config, records, reports, flops_report, out)
        ckpt = out / "final.ckpt"
        save_checkpoint(final, ckpt, seed=config.seed, epoch=config.epochs)
        files["checkpoint"] = str(ckpt)
        manifest = {
            "config": config.to_dict(),
            "version": PACKAGE_VERSION,
            "wall_time_seconds": time.perf_counter() - t0,  # timing: masked in determinism checks
        }
        (out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
        files["manifest"] = str(out / "manifest.json")
    return {
        "model": final,
        "records": records,
        "reports": reports,
        "flops": flops_report,
        "files": files,
    }


def _csv_row(values: dict) -> str:
    return ",".join(str(values.get(c, "")) for c in CSV_COLUMNS)


def emit_report(
    config: ExperimentConfig,
    records: list[meta.PruneStepRecord],
    reports: list[meta.EpochReport],
    flops_report: flops.FlopsReport,
    out_dir: Path,
) -> dict:
    """Write report.csv and report.json; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [",".join(CSV_COLUMNS)]
    by_epoch: dict[int, list[meta.PruneStepRecord]] = {}
    for r in records:
        by_epoch.setdefault(r.epoch, []).append(r)
    for rep in reports:
        lines.append(
            _csv_row(
                {
                    "kind": "epoch",
                    "epoch": rep.epoch,
                    "train_loss": repr(rep.train_loss),
                    "train_acc": repr(rep.train_acc),
                    "eval_top1": repr(rep.eval_top1),
                    "eval_top5": repr(rep.eval_top5),
                    "kappa": rep.kappa,
                    "masked_macs": rep.masked_macs,
                }
            )
        )
        for rec in by_epoch.pop(rep.epoch, []):
            lines.append(_prune_row(rec))
    for epoch in sorted(by_epoch):  # trailing partial-interval step
        for rec in by_epoch[epoch]:
            lines.append(_prune_row(rec))
    csv_path = out_dir / "report.csv"
    csv_path.write_text("\n".join(lines) + "\n", newline="\n")

    bundle = {
        "config": config.to_dict(),
        "epochs": [r.to_dict() for r in reports],
        "prune_steps": [r.to_dict() for r in records],
        "flops": flops_report.to_dict(),
    }
    json_path = out_dir / "report.json"
    json_path.write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n")
    return {"csv": str(csv_path), "json": str(json_path)}


def _prune_row(rec: meta.PruneStepRecord) -> str:
    gaps = ";".join(
        f"{n}={g!r}" for n, g in zip(rec.candidate_names, rec.candidate_gaps)
    )
    return _csv_row(
        {
            "kind": "prune",
            "epoch": rec.epoch,
            "step": rec.step,
            "selected_criterion": rec.selected,
            "reference_value": repr(rec.reference_value),
            "candidate_gaps": gaps,
        }
    )


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255) from a 2-d uint8 array."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError(f"PGM needs a 2-d image, got shape {image.shape}")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def render_feature_maps(
    model: ModelState, image: np.ndarray, layer_index: int, out_dir: str | Path
) -> list[Path]:
    """One channel_<k>.pgm per output channel of the chosen conv layer.

    Each map is min-max normalized independently; a constant map renders
    all-zero (black) by convention, so pruned channels come out black.
    """
    maps = mdl.conv_feature_maps(model, image, layer_index)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(maps.shape[0]):
        fm = maps[k]
        lo, hi = float(fm.min()), float(fm.max())
        if hi > lo:
            img = np.round((fm - lo) / (hi - lo) * 255.0)
        else:
            img = np.zeros_like(fm)  # constant map convention: all black
        p = out / f"channel_{k}.pgm"
        write_pgm(p, img.astype(np.uint8))
        paths.append(p)
    return paths
