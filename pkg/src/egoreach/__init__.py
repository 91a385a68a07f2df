"""Online egocentric 3D action-target prediction at desk scale.

Given a streaming sequence of frames (RGB raster plus 21 hand landmarks),
predict at every frame the 3D coordinate where the hand's manipulation
action will end. Includes a synthetic reach-trajectory dataset generator,
seeded training, ten-stage evaluation, hand-prior post-processing, an online
streaming engine, and a shared-workspace robot simulator.
"""

from .data import Clip, Frame, HandLandmarks, load_clip, save_clip, split_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    DegenerateProjection,
    DomainError,
    EgoReachError,
    FormatError,
    GenerationFailed,
    ShapeError,
    SplitError,
    TrainingDiverged,
)
from .evaluation import StageReport, evaluate, frame_error, random_baseline, stage_split
from .geometry import (
    CameraIntrinsics,
    NormalizedCoord,
    RigidTransform,
    WorkspaceBox,
    apply_transform,
    default_4k_intrinsics,
    default_workspace,
    project,
    unproject,
)
from .hri_sim import WorkspaceSim, run_episode, sim_step
from .losses import LossConfig, frame_weights, hand_loss, p_loss, time_loss, total_loss
from .model import FrameOutput, GridSpec, ModelConfig, TargetPredictor, decode, load_checkpoint, save_checkpoint
from .postprocess import PostProcessState, post_step, reset
from .streaming import FramePrediction, StreamSession, open_session, push_frame, stream_clip
from .synthetic import SyntheticWorldConfig, generate_clip
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "CheckpointError",
    "Clip",
    "ConfigError",
    "DegenerateProjection",
    "DomainError",
    "EgoReachError",
    "Frame",
    "FrameOutput",
    "FramePrediction",
    "FormatError",
    "GenerationFailed",
    "GridSpec",
    "HandLandmarks",
    "LossConfig",
    "ModelConfig",
    "NormalizedCoord",
    "PostProcessState",
    "RigidTransform",
    "ShapeError",
    "SplitError",
    "StageReport",
    "StreamSession",
    "SyntheticWorldConfig",
    "TargetPredictor",
    "TrainConfig",
    "TrainingDiverged",
    "WorkspaceBox",
    "WorkspaceSim",
    "apply_transform",
    "decode",
    "default_4k_intrinsics",
    "default_workspace",
    "evaluate",
    "frame_error",
    "frame_weights",
    "generate_clip",
    "hand_loss",
    "load_checkpoint",
    "load_clip",
    "open_session",
    "p_loss",
    "post_step",
    "project",
    "push_frame",
    "random_baseline",
    "reset",
    "run_episode",
    "save_checkpoint",
    "save_clip",
    "sim_step",
    "split_dataset",
    "stage_split",
    "stream_clip",
    "time_loss",
    "total_loss",
    "train",
    "unproject",
    "__version__",
]
