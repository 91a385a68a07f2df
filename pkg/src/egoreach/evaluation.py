"""Ten-stage variable-length evaluation, random baseline, and CSV reports.

Every test clip is divided by frames into ten consecutive stages; when the
length is not divisible by ten the extra frames go to the early stages, so
early errors weigh slightly more in the overall mean. Errors are centimeter
Euclidean distances between the (post-processed) prediction and the frame's
own-coordinate ground truth, pooled per stage across clips. The overall
number is the mean over all evaluated frames, not the mean of stage means.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .data import Clip, collect_labels
from .errors import DomainError, FormatError
from .geometry import WorkspaceBox
from .model import TargetPredictor
from .postprocess import post_step, reset

N_STAGES = 10


@dataclass(frozen=True)
class StageSplit:
    """Per-frame stage assignment for a clip of length T."""

    sizes: tuple[int, ...]
    frame_stage: tuple[int, ...]


def stage_split(T: int) -> StageSplit:
    """floor(T/10) frames per stage, the first T mod 10 stages get one extra."""
    if T < 1:
        raise DomainError(f"clip length must be >= 1, got {T}")
    base, extra = divmod(T, N_STAGES)
    sizes = tuple(base + 1 if i < extra else base for i in range(N_STAGES))
    frame_stage = []
    for stage, size in enumerate(sizes):
        frame_stage.extend([stage] * size)
    return StageSplit(sizes=sizes, frame_stage=tuple(frame_stage))


def frame_error(pred_m: np.ndarray, gt_m: np.ndarray) -> float:
    """Euclidean distance in centimeters."""
    return 100.0 * float(np.linalg.norm(np.asarray(pred_m, dtype=np.float64) - gt_m))


@dataclass
class StageReport:
    """Table-row-shaped result: overall plus 10%..100% stage errors in cm."""

    model: str
    modality: str
    split: str
    overall: float
    stages: list[float]
    n_clips: int = 0
    n_frames: int = 0
    seeds: list[int] = field(default_factory=list)

    @classmethod
    def average(cls, reports: Sequence["StageReport"]) -> "StageReport":
        """Arithmetic mean over per-seed reports."""
        if not reports:
            raise DomainError("no reports to average")
        stages = np.mean([r.stages for r in reports], axis=0)
        return cls(
            model=reports[0].model,
            modality=reports[0].modality,
            split=reports[0].split,
            overall=float(np.mean([r.overall for r in reports])),
            stages=[float(s) for s in stages],
            n_clips=reports[0].n_clips,
            n_frames=reports[0].n_frames,
            seeds=sorted({s for r in reports for s in r.seeds}),
        )


PredictFn = Callable[[Clip], np.ndarray]  # clip -> (T, 3) meters


def evaluate_predictions(
    predict: PredictFn,
    clips: Sequence[Clip],
    model: str = "model",
    modality: str = "rgb",
    split: str = "test_seen",
) -> StageReport:
    """Core aggregation: per-frame errors pooled per stage across clips."""
    if not clips:
        raise DomainError("no clips to evaluate")
    stage_sums = np.zeros(N_STAGES)
    stage_counts = np.zeros(N_STAGES, dtype=int)
    total = 0.0
    count = 0
    for clip in clips:
        preds = np.asarray(predict(clip), dtype=np.float64)
        if preds.shape != (clip.length, 3):
            raise DomainError(f"predictor returned shape {preds.shape} for a {clip.length}-frame clip")
        stages = stage_split(clip.length).frame_stage
        for t, frame in enumerate(clip.frames):
            err = frame_error(preds[t], frame.target_gt)
            stage_sums[stages[t]] += err
            stage_counts[stages[t]] += 1
            total += err
            count += 1
    with np.errstate(invalid="ignore"):
        stages_mean = np.where(stage_counts > 0, stage_sums / np.maximum(stage_counts, 1), np.nan)
    return StageReport(
        model=model,
        modality=modality,
        split=split,
        overall=total / count,
        stages=[float(s) for s in stages_mean],
        n_clips=len(clips),
        n_frames=count,
    )


def postprocess_outputs(clip: Clip, frame_outputs, box: WorkspaceBox, use_post: bool = True) -> np.ndarray:
    """Turn raw per-frame model outputs into (T, 3) metric predictions."""
    out = np.zeros((clip.length, 3))
    state = reset()
    for t, (frame, fo) in enumerate(zip(clip.frames, frame_outputs)):
        raw_m = box.denormalize(fo.raw_point.detach().numpy())
        if use_post:
            final_m, state = post_step(raw_m, frame.landmarks, frame.intrinsics, state)
        else:
            final_m = raw_m
        out[t] = final_m
    return out


def model_predictor(
    model: TargetPredictor,
    use_post: bool = True,
    box: WorkspaceBox | None = None,
) -> PredictFn:
    """Wrap a model (plus optional post-processing) as a clip predictor."""
    box = box or model.cfg.box

    def predict(clip: Clip) -> np.ndarray:
        with torch.no_grad():
            frame_outputs = model.forward_clip(clip)
        return postprocess_outputs(clip, frame_outputs, box, use_post=use_post)

    return predict


def evaluate(
    models: Sequence[TargetPredictor],
    clips: Sequence[Clip],
    seeds: Sequence[int] | None = None,
    use_post: bool = True,
    model_name: str = "egoreach",
    modality: str = "rgb+hand",
    split: str = "test_seen",
) -> StageReport:
    """Evaluate each seed checkpoint and average the reports."""
    seeds = list(seeds) if seeds is not None else list(range(len(models)))
    reports = []
    for seed, model in zip(seeds, models):
        report = evaluate_predictions(
            model_predictor(model, use_post=use_post), clips,
            model=model_name, modality=modality, split=split,
        )
        report.seeds = [seed]
        reports.append(report)
    return StageReport.average(reports)


def random_baseline(
    train_labels: np.ndarray,
    clips: Sequence[Clip],
    rng_seed: int,
    split: str = "test_seen",
) -> StageReport:
    """Uniform guesses inside the train-label bounding box, one per frame."""
    labels = np.asarray(train_labels, dtype=np.float64)
    if labels.ndim != 2 or labels.shape[1] != 3 or labels.shape[0] == 0:
        raise DomainError(f"train labels must be a non-empty (N, 3) array, got {labels.shape}")
    lo = labels.min(axis=0)
    hi = labels.max(axis=0)
    rng = np.random.default_rng(rng_seed)

    def predict(clip: Clip) -> np.ndarray:
        return rng.uniform(lo, hi, size=(clip.length, 3))

    return evaluate_predictions(predict, clips, model="random", modality="none", split=split)


def random_baseline_from_clips(train_clips: Sequence[Clip], clips: Sequence[Clip],
                               rng_seed: int, split: str = "test_seen") -> StageReport:
    return random_baseline(collect_labels(list(train_clips)), clips, rng_seed, split=split)


# ---- report CSV (Table-style layout) ----------------------------------------

REPORT_COLUMNS = ["model", "modality", "overall"] + [f"s{p}" for p in range(10, 101, 10)]


def write_report_csv(reports: Sequence[StageReport], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            writer.writerow([r.model, r.modality, repr(float(r.overall))] + [repr(float(s)) for s in r.stages])


def read_report_csv(path: str | Path) -> list[StageReport]:
    path = Path(path)
    if not path.is_file():
        raise FormatError("report", f"missing file {path}")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != REPORT_COLUMNS:
        raise FormatError("report.header", f"expected columns {REPORT_COLUMNS}")
    out = []
    for i, row in enumerate(rows[1:]):
        if len(row) != len(REPORT_COLUMNS):
            raise FormatError("report", f"row {i}: expected {len(REPORT_COLUMNS)} columns")
        try:
            out.append(StageReport(
                model=row[0], modality=row[1], split="",
                overall=float(row[2]), stages=[float(v) for v in row[3:]],
            ))
        except ValueError as e:
            raise FormatError("report", f"row {i}: {e}") from e
    return out
