"""Point-effector workspace simulator consuming streaming target predictions.

Two behaviors mirror the shared-workspace demos the predictions are meant to
drive: *avoid* retreats radially whenever the predicted target enters a
safety ball around the end-effector, *reach* moves straight toward the
prediction (the shortest Cartesian path in free space). The effector is a
free-flying point; motion planning and kinematics are out of scope.

``run_episode`` models the streaming pipeline with a reaction latency of
exactly one step: the motion executed at step k uses the prediction from
step k-1, then the step-k prediction is checked for violation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

# Deterministic retreat direction when the target coincides with the effector.
_TIE_BREAK = np.array([0.0, 0.0, 1.0])


@dataclass
class WorkspaceSim:
    """Single-owner mutable simulation state."""

    end_effector: np.ndarray
    radius: float = 0.15
    speed: float = 0.05
    mode: str = "avoid"
    trajectory: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.end_effector = np.asarray(self.end_effector, dtype=np.float64).reshape(3).copy()
        if self.radius <= 0:
            raise DomainError(f"avoid radius must be positive, got {self.radius}")
        if self.speed <= 0:
            raise DomainError(f"max speed must be positive, got {self.speed}")
        if self.mode not in ("avoid", "reach"):
            raise DomainError(f"mode must be 'avoid' or 'reach', got {self.mode!r}")
        self.trajectory.append(self.end_effector.copy())


@dataclass(frozen=True)
class ActionRecord:
    step: int
    prediction: np.ndarray
    effector: np.ndarray
    moved: float
    violated: bool
    clearance: float


def sim_step(sim: WorkspaceSim, predicted_target: np.ndarray) -> ActionRecord:
    """React to one prediction immediately; returns the post-motion record."""
    target = np.asarray(predicted_target, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(target)):
        raise DomainError(f"prediction must be finite, got {target}")
    moved = 0.0
    if sim.mode == "avoid":
        delta = sim.end_effector - target
        dist = float(np.linalg.norm(delta))
        if dist < sim.radius:
            direction = delta / dist if dist > 0 else _TIE_BREAK
            sim.end_effector = sim.end_effector + sim.speed * direction
            moved = sim.speed
    else:  # reach: straight segment toward the target, no overshoot
        delta = target - sim.end_effector
        dist = float(np.linalg.norm(delta))
        if dist > 0:
            moved = min(sim.speed, dist)
            sim.end_effector = sim.end_effector + delta / dist * moved
    sim.trajectory.append(sim.end_effector.copy())
    clearance = float(np.linalg.norm(target - sim.end_effector))
    return ActionRecord(
        step=len(sim.trajectory) - 1,
        prediction=target,
        effector=sim.end_effector.copy(),
        moved=moved,
        violated=clearance < sim.radius,
        clearance=clearance,
    )


@dataclass
class EpisodeLog:
    records: list[ActionRecord]
    violations: int
    violations_after_delay: int
    min_clearance: float
    path_length: float

    def to_rows(self) -> list[dict]:
        rows = [
            {
                "step": r.step,
                "prediction": [float(v) for v in r.prediction],
                "effector": [float(v) for v in r.effector],
                "violated": r.violated,
                "clearance": r.clearance,
            }
            for r in self.records
        ]
        return rows


def run_episode(sim: WorkspaceSim, predictions) -> EpisodeLog:
    """Drive the simulator through a prediction stream with 1-step latency."""
    preds = [np.asarray(p, dtype=np.float64).reshape(3) for p in predictions]
    if not preds:
        raise DomainError("prediction stream must be non-empty")
    records = []
    path_length = 0.0
    for k, pred in enumerate(preds):
        moved = 0.0
        if k > 0:
            before = sim.end_effector.copy()
            sim_step(sim, preds[k - 1])
            moved = float(np.linalg.norm(sim.end_effector - before))
            path_length += moved
        clearance = float(np.linalg.norm(pred - sim.end_effector))
        records.append(
            ActionRecord(
                step=k,
                prediction=pred,
                effector=sim.end_effector.copy(),
                moved=moved,
                violated=clearance < sim.radius,
                clearance=clearance,
            )
        )
    violations = sum(r.violated for r in records)
    after_delay = sum(r.violated for r in records[1:])
    return EpisodeLog(
        records=records,
        violations=violations,
        violations_after_delay=after_delay,
        min_clearance=min(r.clearance for r in records),
        path_length=path_length,
    )
