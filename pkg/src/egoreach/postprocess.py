"""Inference-time hand-prior adjustment of the model's raw 3D prediction.

The raw prediction is projected to pixels and blended with the observed
index-fingertip position. The blend weight is the ratio of the current hand
displacement to its historical maximum: a hand moving at record speed leaves
the model output untouched, a hand that has stopped replaces it with the
fingertip. The blended pixel is back-projected at the raw prediction's depth,
so depth is never altered.

Fallbacks (cases the blend formula does not define): on the first observed
hand, when the hand has not moved yet (max offset 0), or when no hand is in
frame, the raw prediction passes through unchanged. Absent-hand frames also
leave the state untouched, since the all-zero landmark sentinel is not a
geometric measurement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FINGERTIP_INDEX, HandLandmarks
from .errors import DegenerateProjection
from .geometry import CameraIntrinsics, project, unproject


@dataclass(frozen=True)
class PostProcessState:
    """Per-stream history: previous fingertip pixel and running max offset."""

    prev_hand: np.ndarray | None = None
    max_offset: float = 0.0
    initialized: bool = False

    def __post_init__(self):
        if self.max_offset < 0:
            raise ValueError(f"max_offset must be nonnegative, got {self.max_offset}")


def reset() -> PostProcessState:
    """Fresh per-clip state; idempotent."""
    return PostProcessState()


def post_step(
    raw_point_3d: np.ndarray,
    landmarks: HandLandmarks,
    intrinsics: CameraIntrinsics,
    state: PostProcessState,
    fingertip_index: int = FINGERTIP_INDEX,
) -> tuple[np.ndarray, PostProcessState]:
    """Blend one prediction with the fingertip prior; returns (point, state)."""
    raw = np.asarray(raw_point_3d, dtype=np.float64)
    if raw[2] <= 0:
        raise DegenerateProjection(f"post-processing requires depth > 0, got z={raw[2]}")

    if not landmarks.present:
        return raw.copy(), state

    tip = landmarks.fingertip(fingertip_index).astype(np.float64)
    if not state.initialized:
        return raw.copy(), PostProcessState(prev_hand=tip, max_offset=state.max_offset, initialized=True)

    offset = float(np.linalg.norm(tip - state.prev_hand))
    max_offset = max(state.max_offset, offset)  # updated first, so alpha <= 1
    new_state = PostProcessState(prev_hand=tip, max_offset=max_offset, initialized=True)

    if max_offset == 0.0:
        return raw.copy(), new_state
    alpha = offset / max_offset
    if alpha == 1.0:
        # Formula endpoint: full weight on the model output, returned exactly
        # rather than through a project/unproject round trip.
        return raw.copy(), new_state
    projected = project(raw, intrinsics)
    blended = alpha * projected + (1.0 - alpha) * tip
    return unproject(blended, raw[2], intrinsics), new_state
