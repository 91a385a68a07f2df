"""Training objective: weighted truncated regression plus two auxiliary losses.

Per frame t (1-indexed) of a T-frame clip the total objective is

    L = sum_t w_t * (Lp_t + delta * (Lhand_t + Ltime_t))

with w_t falling linearly from 2 at the first frame to 1 at the last. Lp is
a per-axis squared error on normalized coordinates, each axis term clamped at
``cap``; Lhand is the squared resolution-normalized distance between the
predicted hand position and the observed fingertip (zero when no hand is in
frame); Ltime is the squared error against the clip-progress fraction t/T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data import FINGERTIP_INDEX, Clip, HandLandmarks
from .errors import DomainError, ShapeError
from .geometry import WorkspaceBox, default_workspace
from .model import FrameOutput, ModelOutputs


@dataclass(frozen=True)
class LossConfig:
    delta: float = 0.1  # weight of the two auxiliary losses
    cap: float = 1.0  # per-axis clamp on the squared regression error
    w_start: float = 2.0
    w_end: float = 1.0
    use_hand_loss: bool = True
    use_time_loss: bool = True

    def __post_init__(self):
        if self.delta < 0:
            raise DomainError(f"delta must be nonnegative, got {self.delta}")
        if self.cap <= 0:
            raise DomainError(f"cap must be positive, got {self.cap}")
        if not (self.w_start >= self.w_end > 0):
            raise DomainError(f"need w_start >= w_end > 0, got {self.w_start}, {self.w_end}")

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "cap": self.cap,
            "w_start": self.w_start,
            "w_end": self.w_end,
            "use_hand_loss": self.use_hand_loss,
            "use_time_loss": self.use_time_loss,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**d)


@dataclass
class LossBreakdown:
    """Total plus the per-frame terms it was assembled from."""

    total: torch.Tensor  # ()
    p: torch.Tensor  # (T,)
    hand: torch.Tensor  # (T,)
    time: torch.Tensor  # (T,)
    weights: torch.Tensor  # (T,)


def frame_weights(T: int, cfg: LossConfig = LossConfig()) -> np.ndarray:
    """Linear per-frame weights from w_start down to w_end over the clip."""
    if T < 1:
        raise DomainError(f"clip length must be >= 1, got {T}")
    if T == 1:
        return np.array([cfg.w_start])
    t = np.arange(T, dtype=np.float64)
    return cfg.w_start + (cfg.w_end - cfg.w_start) * t / (T - 1)


def p_loss(raw_point: torch.Tensor, target_norm: torch.Tensor, cfg: LossConfig = LossConfig()) -> torch.Tensor:
    """Per-axis squared error, clamped at cfg.cap per axis, summed over axes."""
    err = (raw_point - target_norm) ** 2
    return torch.clamp(err, max=cfg.cap).sum(dim=-1)


def hand_loss(hand_pred: torch.Tensor, landmarks: HandLandmarks, resolution: np.ndarray,
              fingertip_index: int = FINGERTIP_INDEX) -> torch.Tensor:
    """Squared resolution-normalized fingertip error; exactly 0 with no hand."""
    if not landmarks.present:
        return torch.zeros((), dtype=hand_pred.dtype)
    res = torch.as_tensor(np.asarray(resolution, dtype=np.float64), dtype=hand_pred.dtype)
    tip = torch.as_tensor(landmarks.fingertip(fingertip_index), dtype=hand_pred.dtype)
    return (((hand_pred - tip) / res) ** 2).sum()


def time_loss(time_pred: torch.Tensor, t: int, T: int) -> torch.Tensor:
    """Squared error against the clip-progress fraction t/T (t is 1-indexed)."""
    if not (1 <= t <= T):
        raise DomainError(f"frame index {t} outside [1, {T}]")
    frac = torch.as_tensor(t / T, dtype=time_pred.dtype)
    return (time_pred - frac) ** 2


def total_loss(
    outputs: list[FrameOutput],
    clip: Clip,
    cfg: LossConfig = LossConfig(),
    box: WorkspaceBox | None = None,
) -> LossBreakdown:
    """Assemble the full objective for one clip; differentiable end to end."""
    if len(outputs) != clip.length:
        raise ShapeError(f"{len(outputs)} outputs for a {clip.length}-frame clip")
    box = box or default_workspace()
    T = clip.length
    dtype = outputs[0].raw_point.dtype
    w = torch.as_tensor(frame_weights(T, cfg), dtype=dtype)
    p_terms, hand_terms, time_terms = [], [], []
    for t, (out, frame) in enumerate(zip(outputs, clip.frames), start=1):
        target_norm = torch.as_tensor(box.normalize(frame.target_gt), dtype=dtype)
        p_terms.append(p_loss(out.raw_point, target_norm, cfg))
        if cfg.use_hand_loss:
            hand_terms.append(hand_loss(out.hand_pred, frame.landmarks, frame.intrinsics.resolution))
        else:
            hand_terms.append(torch.zeros((), dtype=dtype))
        if cfg.use_time_loss:
            time_terms.append(time_loss(out.time_pred, t, T))
        else:
            time_terms.append(torch.zeros((), dtype=dtype))
    p = torch.stack(p_terms)
    hand = torch.stack(hand_terms)
    time = torch.stack(time_terms)
    total = (w * (p + cfg.delta * (hand + time))).sum()
    return LossBreakdown(total=total, p=p, hand=hand, time=time, weights=w)


def total_loss_batch(
    outputs: ModelOutputs,
    targets_norm: torch.Tensor,  # (B, T, 3)
    fingertips: torch.Tensor,  # (B, T, 2) pixels, zeros where absent
    present: torch.Tensor,  # (B, T) bool
    resolution: torch.Tensor,  # (B, T, 2)
    lengths: torch.Tensor,  # (B,)
    cfg: LossConfig = LossConfig(),
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Masked batch objective; equals the sum of per-clip total_loss values.

    Returns (total, parts) where parts holds the summed p/hand/time terms for
    logging. Padded frames contribute exactly zero.
    """
    b, t = outputs.time_pred.shape
    dtype = outputs.raw_point.dtype
    targets_norm = targets_norm.to(dtype)
    fingertips = fingertips.to(dtype)
    resolution = resolution.to(dtype)
    steps = torch.arange(t, dtype=dtype).unsqueeze(0)  # 0-indexed
    tlen = lengths.to(dtype).unsqueeze(1)
    valid = (steps < tlen).to(dtype)

    denom = torch.clamp(tlen - 1.0, min=1.0)
    w = cfg.w_start + (cfg.w_end - cfg.w_start) * steps / denom
    w = torch.where(tlen > 1, w, torch.full_like(w, cfg.w_start)) * valid

    p = torch.clamp((outputs.raw_point - targets_norm) ** 2, max=cfg.cap).sum(dim=-1)
    if cfg.use_hand_loss:
        hand = (((outputs.hand_pred - fingertips) / resolution) ** 2).sum(dim=-1)
        hand = hand * present.to(dtype)
    else:
        hand = torch.zeros_like(p)
    if cfg.use_time_loss:
        frac = (steps + 1.0) / tlen
        time = (outputs.time_pred - frac) ** 2
    else:
        time = torch.zeros_like(p)

    per_frame = w * (p + cfg.delta * (hand + time))
    total = per_frame.sum()
    parts = {
        "p": (w * p).sum(),
        "hand": (w * cfg.delta * hand).sum(),
        "time": (w * cfg.delta * time).sum(),
    }
    return total, parts
