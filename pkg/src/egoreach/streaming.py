"""Online inference sessions: one frame in, one prediction out.

A session owns a model reference, the recurrent state, and the post-process
history for a single stream. Pushing a whole clip frame by frame produces
exactly the same outputs as the offline clip pass, because both run the same
per-frame computation. Sessions from one checkpoint share read-only weights
and may run concurrently; a single session is single-owner.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import Clip, Frame
from .model import RecurrentState, TargetPredictor, load_checkpoint, state_from_arrays, state_to_arrays
from .postprocess import PostProcessState, post_step, reset

_WARMUP_FRAMES = 10


@dataclass(frozen=True)
class FramePrediction:
    """Per-frame streaming output; meters are in the current camera frame."""

    frame_index: int
    raw_point_norm: np.ndarray  # (3,) in [-1, 1]
    raw_point_m: np.ndarray  # (3,)
    final_point_m: np.ndarray  # (3,) post-processed
    hand_pred_px: np.ndarray  # (2,)
    time_pred: float

    def to_dict(self) -> dict:
        return {
            "frame": self.frame_index,
            "raw_point_norm": [float(v) for v in self.raw_point_norm],
            "raw_point_m": [float(v) for v in self.raw_point_m],
            "final_point_m": [float(v) for v in self.final_point_m],
            "hand_pred_px": [float(v) for v in self.hand_pred_px],
            "time_pred": float(self.time_pred),
        }


@dataclass
class StreamSession:
    model: TargetPredictor
    rec_state: RecurrentState
    post_state: PostProcessState
    frames_seen: int = 0
    frame_times: list[float] = field(default_factory=list)


def open_session(checkpoint_path) -> StreamSession:
    """Load a checkpoint and start a zero-state session."""
    model = load_checkpoint(checkpoint_path)
    return session_from_model(model)


def session_from_model(model: TargetPredictor) -> StreamSession:
    return StreamSession(model=model, rec_state=model.init_state(), post_state=reset())


def push_frame(session: StreamSession, frame: Frame) -> FramePrediction:
    """Consume one frame; bit-identical to the offline pass on the prefix."""
    start = time.perf_counter()
    with torch.no_grad():
        out, session.rec_state = session.model.forward_frame(frame, session.rec_state)
    raw_norm = out.raw_point.detach().numpy().astype(np.float64)
    raw_m = session.model.cfg.box.denormalize(raw_norm)
    final_m, session.post_state = post_step(raw_m, frame.landmarks, frame.intrinsics, session.post_state)
    session.frames_seen += 1
    session.frame_times.append(time.perf_counter() - start)
    return FramePrediction(
        frame_index=session.frames_seen - 1,
        raw_point_norm=raw_norm,
        raw_point_m=raw_m,
        final_point_m=final_m,
        hand_pred_px=out.hand_pred.detach().numpy().astype(np.float64),
        time_pred=float(out.time_pred),
    )


def stream_clip(session: StreamSession, clip: Clip) -> list[FramePrediction]:
    return [push_frame(session, frame) for frame in clip.frames]


def session_fps(session: StreamSession, warmup: int = _WARMUP_FRAMES) -> float | None:
    """Wall-clock throughput excluding the first ``warmup`` frames."""
    times = session.frame_times[warmup:]
    if not times or sum(times) == 0:
        return None
    return len(times) / sum(times)


def snapshot_session(session: StreamSession) -> dict:
    """Serializable mid-stream state; restoring reproduces subsequent outputs."""
    rec = state_to_arrays(session.rec_state)
    return {
        "rec_h": rec["h"],
        "rec_c": rec["c"],
        "post_prev_hand": None if session.post_state.prev_hand is None else session.post_state.prev_hand.copy(),
        "post_max_offset": session.post_state.max_offset,
        "post_initialized": session.post_state.initialized,
        "frames_seen": session.frames_seen,
    }


def restore_session(model: TargetPredictor, snapshot: dict) -> StreamSession:
    rec = state_from_arrays({"h": snapshot["rec_h"], "c": snapshot["rec_c"]})
    prev = snapshot["post_prev_hand"]
    post = PostProcessState(
        prev_hand=None if prev is None else np.asarray(prev, dtype=np.float64),
        max_offset=float(snapshot["post_max_offset"]),
        initialized=bool(snapshot["post_initialized"]),
    )
    return StreamSession(model=model, rec_state=rec, post_state=post, frames_seen=int(snapshot["frames_seen"]))
