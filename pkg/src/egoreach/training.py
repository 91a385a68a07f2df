"""Deterministic seeded training loop with multi-seed averaging.

Each seed gets a fully independent run: the seed fixes parameter init, epoch
shuffling, and batch order, so repeating a run reproduces the checkpoint
bit for bit. Optimization follows the reference protocol: Adam, learning
rate 1e-4, weight decay 1e-5, effective batch size 32, training clips capped
at 25 frames. The best-validation-loss checkpoint is what a run keeps.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import TRAIN_CLIP_CAP, Clip
from .errors import DomainError, ShapeError, TrainingDiverged
from .losses import LossConfig, total_loss_batch
from .model import ModelConfig, TargetPredictor, save_checkpoint

DEFAULT_SEEDS = (11, 23, 47)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 32
    epochs: int = 40
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    clip_cap: int = TRAIN_CLIP_CAP
    patience: int | None = None  # early stop on val loss; None disables
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be positive")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if self.epochs < 1:
            raise DomainError("epochs must be >= 1")
        if not self.seeds:
            raise DomainError("seeds list must be non-empty")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seeds": list(self.seeds),
            "clip_cap": self.clip_cap,
            "patience": self.patience,
            "loss": self.loss.to_dict(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "loss" in d:
            d["loss"] = LossConfig.from_dict(d["loss"])
        if "model" in d:
            d["model"] = ModelConfig.from_dict(d["model"])
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)


@dataclass
class ClipBatch:
    """Padded tensors for a list of clips plus their true lengths."""

    visual: torch.Tensor  # (B, T, 3, H, W) or (B, T, D)
    landmarks_norm: torch.Tensor  # (B, T, 42)
    fingertips: torch.Tensor  # (B, T, 2) pixels
    present: torch.Tensor  # (B, T) bool
    targets_norm: torch.Tensor  # (B, T, 3)
    resolution: torch.Tensor  # (B, T, 2)
    lengths: torch.Tensor  # (B,)


def _clip_tensors(clip: Clip, box) -> dict[str, torch.Tensor]:
    """Per-clip tensor conversion, cached on the clip (clips are immutable)."""
    cached = getattr(clip, "_tensor_cache", None)
    if cached is not None and cached["box"] is box:
        return cached
    res = clip.intrinsics.resolution
    vis0 = clip.frames[0].visual
    if vis0.ndim == 3:
        visual = np.stack([f.visual.transpose(2, 0, 1) for f in clip.frames])
    else:
        visual = np.stack([f.visual for f in clip.frames])
    cached = {
        "box": box,
        "visual": torch.from_numpy(np.ascontiguousarray(visual)),
        "lm": torch.from_numpy(np.stack(
            [(f.landmarks.points / res).reshape(-1) for f in clip.frames]).astype(np.float32)),
        "tips": torch.from_numpy(np.stack(
            [f.landmarks.fingertip() for f in clip.frames]).astype(np.float32)),
        "present": torch.tensor([f.landmarks.present for f in clip.frames], dtype=torch.bool),
        "targets": torch.from_numpy(np.stack(
            [box.normalize(f.target_gt) for f in clip.frames]).astype(np.float32)),
        "res": torch.from_numpy(res.astype(np.float32)),
    }
    object.__setattr__(clip, "_tensor_cache", cached)
    return cached


def clips_to_batch(clips: list[Clip], box) -> ClipBatch:
    if not clips:
        raise ShapeError("empty batch")
    tmax = max(c.length for c in clips)
    b = len(clips)
    first = clips[0].frames[0].visual
    if first.ndim == 3:
        h, w, _ = first.shape
        visual = torch.zeros((b, tmax, 3, h, w))
    else:
        visual = torch.zeros((b, tmax, first.shape[0]))
    lm = torch.zeros((b, tmax, 42))
    tips = torch.zeros((b, tmax, 2))
    present = torch.zeros((b, tmax), dtype=torch.bool)
    targets = torch.zeros((b, tmax, 3))
    resolution = torch.ones((b, tmax, 2))
    lengths = torch.zeros(b, dtype=torch.long)
    for i, clip in enumerate(clips):
        t = clip.length
        cached = _clip_tensors(clip, box)
        lengths[i] = t
        visual[i, :t] = cached["visual"]
        lm[i, :t] = cached["lm"]
        tips[i, :t] = cached["tips"]
        present[i, :t] = cached["present"]
        targets[i, :t] = cached["targets"]
        resolution[i, :t] = cached["res"]
    return ClipBatch(
        visual=visual, landmarks_norm=lm, fingertips=tips, present=present,
        targets_norm=targets, resolution=resolution, lengths=lengths,
    )


def pad_and_batch(clips: list[Clip], batch_size: int, box) -> list[ClipBatch]:
    """Group clips in order into padded batches with valid-length masks."""
    if batch_size < 1:
        raise DomainError("batch_size must be >= 1")
    return [clips_to_batch(clips[i : i + batch_size], box) for i in range(0, len(clips), batch_size)]


def batch_loss(model: TargetPredictor, batch: ClipBatch, cfg: LossConfig):
    out = model.forward_batch(batch.visual, batch.landmarks_norm, batch.resolution)
    return total_loss_batch(
        out, batch.targets_norm, batch.fingertips, batch.present,
        batch.resolution, batch.lengths, cfg,
    )


@dataclass
class TrainResult:
    seed: int
    model: TargetPredictor
    best_epoch: int
    log_rows: list[dict]
    checkpoint_path: Path | None = None


def _epoch_loss(model: TargetPredictor, batches: list[ClipBatch], cfg: LossConfig) -> dict[str, float]:
    """Mean per-clip objective over a list of batches (no gradients)."""
    sums = {"total": 0.0, "p": 0.0, "hand": 0.0, "time": 0.0}
    n = 0
    with torch.no_grad():
        for batch in batches:
            total, parts = batch_loss(model, batch, cfg)
            sums["total"] += float(total)
            for k in ("p", "hand", "time"):
                sums[k] += float(parts[k])
            n += batch.lengths.shape[0]
    return {k: v / n for k, v in sums.items()}


def train(
    splits: dict[str, list[Clip]],
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> list[TrainResult]:
    """Run one deterministic training per seed; keeps the best-val checkpoint."""
    train_clips = splits.get("train", [])
    if not train_clips:
        raise DomainError("train split is empty")
    if any(c.length > cfg.clip_cap for c in train_clips):
        raise DomainError(f"training clip longer than the {cfg.clip_cap}-frame cap")
    val_clips = splits.get("val", []) or train_clips

    torch.use_deterministic_algorithms(True)
    box = cfg.model.box
    val_batches = pad_and_batch(val_clips, cfg.batch_size, box)

    results = []
    for seed in cfg.seeds:
        torch.manual_seed(seed)
        model = TargetPredictor(cfg.model)
        optimizer = torch.optim.Adam(
            model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
        )
        shuffle_rng = np.random.default_rng(seed)

        best_val = math.inf
        best_epoch = -1
        best_state = None
        bad_epochs = 0
        log_rows: list[dict] = []

        for epoch in range(cfg.epochs):
            model.train()
            order = shuffle_rng.permutation(len(train_clips))
            shuffled = [train_clips[i] for i in order]
            train_sums = {"total": 0.0, "p": 0.0, "hand": 0.0, "time": 0.0}
            for batch in pad_and_batch(shuffled, cfg.batch_size, box):
                optimizer.zero_grad()
                total, parts = batch_loss(model, batch, cfg.loss)
                if not torch.isfinite(total):
                    raise TrainingDiverged(epoch)
                # Mean over clips so the step size is batch-size independent.
                (total / batch.lengths.shape[0]).backward()
                optimizer.step()
                train_sums["total"] += float(total.detach())
                for k in ("p", "hand", "time"):
                    train_sums[k] += float(parts[k].detach())
            n_train = len(train_clips)
            model.eval()
            val_stats = _epoch_loss(model, val_batches, cfg.loss)
            if not math.isfinite(val_stats["total"]):
                raise TrainingDiverged(epoch)
            log_rows.append({"epoch": epoch, "split": "train",
                             **{k: train_sums[k] / n_train for k in train_sums}})
            log_rows.append({"epoch": epoch, "split": "val", **val_stats})

            if val_stats["total"] < best_val:
                best_val = val_stats["total"]
                best_epoch = epoch
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
                bad_epochs = 0
            else:
                bad_epochs += 1
                if cfg.patience is not None and bad_epochs > cfg.patience:
                    break

        model.load_state_dict(best_state)
        model.eval()
        result = TrainResult(seed=seed, model=model, best_epoch=best_epoch, log_rows=log_rows)
        if out_dir is not None:
            run_dir = Path(out_dir) / str(seed)
            run_dir.mkdir(parents=True, exist_ok=True)
            result.checkpoint_path = run_dir / "checkpoint.bin"
            save_checkpoint(model, result.checkpoint_path)
            write_train_log(log_rows, run_dir / "log.csv")
            (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        results.append(result)
    return results


def write_train_log(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "split", "total", "p", "hand", "time"])
        for row in rows:
            writer.writerow([row["epoch"], row["split"], repr(float(row["total"])),
                             repr(float(row["p"])), repr(float(row["hand"])), repr(float(row["time"]))])
