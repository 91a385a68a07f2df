"""Prediction network: encoders, 2-layer LSTM core, grid-score heads, decode.

Per frame the model encodes the RGB raster and the stacked hand landmarks,
fuses them with an MLP, advances a 2-layer LSTM, and emits three per-axis
score vectors over G grid bins plus two auxiliary outputs (2D hand position
and clip-progress fraction). Coordinates are decoded from the scores as a
masked, renormalized expectation over the bin centers in [-1, 1].

Two forward paths exist on purpose:

* ``forward_clip`` / ``forward_frame`` run one frame at a time and are used
  for evaluation and streaming; prefix outputs are bit-identical to full-clip
  outputs because each frame repeats the exact same computation.
* ``forward_batch`` runs padded batches for training throughput; it matches
  the stepwise path to ~1e-6 (different gemm blocking, same math).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .data import NUM_LANDMARKS, Clip, Frame
from .errors import CheckpointError, DomainError, ShapeError
from .geometry import NormalizedCoord, WorkspaceBox, default_workspace

_CKPT_MAGIC = b"ERCHKPT1"


@dataclass(frozen=True)
class GridSpec:
    """Per-axis discretization of [-1, 1] into ``bins`` equal cells.

    ``centers`` are the cell midpoints; ``gamma`` is the score-mask threshold.
    The default gamma of 1/bins sits exactly at the uniform-distribution level,
    so the mask stays inactive for uninformative outputs.
    """

    bins: int = 1024
    gamma: float | None = None

    def __post_init__(self):
        if self.bins < 2:
            raise DomainError(f"grid needs at least 2 bins, got {self.bins}")
        if self.gamma is not None and self.gamma < 0:
            raise DomainError(f"gamma must be nonnegative, got {self.gamma}")

    @property
    def mask_threshold(self) -> float:
        return 1.0 / self.bins if self.gamma is None else self.gamma

    @property
    def centers(self) -> np.ndarray:
        i = np.arange(self.bins, dtype=np.float64)
        return -1.0 + (2.0 * i + 1.0) / self.bins

    def to_dict(self) -> dict:
        return {"bins": self.bins, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(bins=int(d["bins"]), gamma=d.get("gamma"))


@dataclass(frozen=True)
class ModelConfig:
    visual_dim: int = 128
    hand_dim: int = 32
    fused_dim: int = 128
    lstm_hidden: int = 128
    lstm_layers: int = 2
    grid: GridSpec = field(default_factory=GridSpec)
    encoder: str = "conv_small"  # or "linear" for precomputed feature vectors
    image_size: int = 64
    feature_dim: int | None = None
    conv_channels: tuple[int, int, int, int] = (16, 32, 64, 96)
    use_hand_features: bool = True
    box: WorkspaceBox = field(default_factory=default_workspace)

    def __post_init__(self):
        for name in ("visual_dim", "hand_dim", "fused_dim", "lstm_hidden"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.lstm_layers != 2:
            raise DomainError("the recurrent core is a 2-layer LSTM; lstm_layers must be 2")
        if self.encoder not in ("conv_small", "linear"):
            raise DomainError(f"unknown encoder variant {self.encoder!r}")
        if self.encoder == "linear" and not self.feature_dim:
            raise DomainError("linear encoder requires feature_dim")
        if self.encoder == "conv_small" and self.image_size < 8:
            raise DomainError("conv encoder needs image_size >= 8")

    def to_dict(self) -> dict:
        return {
            "visual_dim": self.visual_dim,
            "hand_dim": self.hand_dim,
            "fused_dim": self.fused_dim,
            "lstm_hidden": self.lstm_hidden,
            "lstm_layers": self.lstm_layers,
            "grid": self.grid.to_dict(),
            "encoder": self.encoder,
            "image_size": self.image_size,
            "feature_dim": self.feature_dim,
            "conv_channels": list(self.conv_channels),
            "use_hand_features": self.use_hand_features,
            "box": self.box.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "grid" in d:
            d["grid"] = GridSpec.from_dict(d["grid"])
        if "box" in d:
            d["box"] = WorkspaceBox.from_dict(d["box"])
        if "conv_channels" in d:
            d["conv_channels"] = tuple(d["conv_channels"])
        return cls(**d)


@dataclass
class FrameOutput:
    """Raw per-frame model outputs (torch tensors, shapes fixed by config)."""

    raw_scores: torch.Tensor  # (3, G) normalized per axis
    raw_point: torch.Tensor  # (3,) decoded coordinate in [-1, 1]
    hand_pred: torch.Tensor  # (2,) pixels
    time_pred: torch.Tensor  # () fraction in [0, 1]


@dataclass
class ModelOutputs:
    """Batched counterpart of FrameOutput for the padded training path."""

    raw_scores: torch.Tensor  # (B, T, 3, G)
    raw_point: torch.Tensor  # (B, T, 3)
    hand_pred: torch.Tensor  # (B, T, 2)
    time_pred: torch.Tensor  # (B, T)


RecurrentState = tuple[torch.Tensor, torch.Tensor]  # (h, c), each (layers, B, hidden)


def decode_scores(scores: torch.Tensor, grid: GridSpec, gamma: float | None = None) -> torch.Tensor:
    """Masked-expectation decode over the last axis (length G).

    Bins with score > gamma survive, the survivors are renormalized, and the
    coordinate is their expectation over the bin centers. If the mask removes
    every bin, the plain (unmasked) expectation is used instead.
    """
    if scores.shape[-1] != grid.bins:
        raise ShapeError(f"expected {grid.bins} scores, got {scores.shape[-1]}")
    g = torch.as_tensor(grid.centers, dtype=scores.dtype, device=scores.device)
    thr = grid.mask_threshold if gamma is None else gamma
    mask = (scores > thr).to(scores.dtype)
    masked = scores * mask
    kept = masked.sum(dim=-1, keepdim=True)
    total = scores.sum(dim=-1, keepdim=True)
    empty = kept <= 0
    weights = torch.where(empty, scores / total, masked / torch.where(empty, torch.ones_like(kept), kept))
    return weights @ g


def decode(scores, grid: GridSpec, gamma: float | None = None) -> NormalizedCoord:
    """Single-vector decode returning a validated normalized coordinate."""
    t = torch.as_tensor(np.asarray(scores, dtype=np.float64))
    if t.ndim != 1:
        raise ShapeError(f"decode expects a 1-D score vector, got shape {tuple(t.shape)}")
    return NormalizedCoord(float(decode_scores(t, grid, gamma)))


class TargetPredictor(nn.Module):
    """Visual + hand encoders, fusion MLP, LSTM core, and output heads."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c1, c2, c3, c4 = cfg.conv_channels
        if cfg.encoder == "conv_small":
            # 5 input channels: RGB plus two coordinate grids, which let the
            # average-pooled features keep track of blob positions.
            self.visual_net = nn.Sequential(
                nn.Conv2d(5, c1, 3, stride=2, padding=1), nn.ReLU(),
                nn.Conv2d(c1, c2, 3, stride=2, padding=1), nn.ReLU(),
                nn.Conv2d(c2, c3, 3, stride=2, padding=1), nn.ReLU(),
                nn.Conv2d(c3, c4, 3, stride=1, padding=1), nn.ReLU(),
                nn.AdaptiveAvgPool2d((4, 4)),
                nn.Flatten(),
                nn.Linear(c4 * 16, cfg.visual_dim),
            )
        else:
            self.visual_net = nn.Linear(cfg.feature_dim, cfg.visual_dim)

        if cfg.use_hand_features:
            self.hand_net = nn.Sequential(
                nn.Linear(2 * NUM_LANDMARKS, 64), nn.ReLU(), nn.Linear(64, cfg.hand_dim)
            )
            fuse_in = cfg.visual_dim + cfg.hand_dim
        else:
            self.hand_net = None
            fuse_in = cfg.visual_dim
        self.fusion = nn.Sequential(
            nn.Linear(fuse_in, cfg.fused_dim), nn.ReLU(), nn.Linear(cfg.fused_dim, cfg.fused_dim)
        )
        self.core = nn.LSTM(cfg.fused_dim, cfg.lstm_hidden, num_layers=cfg.lstm_layers, batch_first=True)
        self.score_nets = nn.ModuleList(
            nn.Sequential(
                nn.Linear(cfg.lstm_hidden, cfg.lstm_hidden), nn.ReLU(),
                nn.Linear(cfg.lstm_hidden, cfg.grid.bins),
            )
            for _ in range(3)
        )
        self.hand_head = nn.Sequential(nn.Linear(cfg.visual_dim, 64), nn.ReLU(), nn.Linear(64, 2))
        self.time_head = nn.Sequential(nn.Linear(cfg.lstm_hidden, 32), nn.ReLU(), nn.Linear(32, 1))

    # ---- stage operations ------------------------------------------------

    def encode_visual(self, visual: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) images or (B, D) feature vectors -> (B, visual_dim)."""
        if self.cfg.encoder == "conv_small":
            if visual.ndim != 4 or visual.shape[1] != 3 or visual.shape[2] != self.cfg.image_size \
                    or visual.shape[3] != self.cfg.image_size:
                raise ShapeError(
                    f"expected (B, 3, {self.cfg.image_size}, {self.cfg.image_size}) images, "
                    f"got {tuple(visual.shape)}"
                )
            b, _, h, w = visual.shape
            ys = torch.linspace(-1.0, 1.0, h, dtype=visual.dtype, device=visual.device)
            xs = torch.linspace(-1.0, 1.0, w, dtype=visual.dtype, device=visual.device)
            yg, xg = torch.meshgrid(ys, xs, indexing="ij")
            coords = torch.stack([xg, yg]).expand(b, 2, h, w)
            return self.visual_net(torch.cat([visual - 0.5, coords], dim=1))
        if visual.ndim != 2 or visual.shape[1] != self.cfg.feature_dim:
            raise ShapeError(f"expected (B, {self.cfg.feature_dim}) features, got {tuple(visual.shape)}")
        return self.visual_net(visual)

    def encode_hand(self, landmarks_norm: torch.Tensor) -> torch.Tensor:
        """(B, 42) resolution-normalized stacked landmarks -> (B, hand_dim)."""
        if self.hand_net is None:
            raise ShapeError("model was built without hand features")
        if landmarks_norm.ndim != 2 or landmarks_norm.shape[1] != 2 * NUM_LANDMARKS:
            raise ShapeError(f"expected (B, {2 * NUM_LANDMARKS}) landmarks, got {tuple(landmarks_norm.shape)}")
        return self.hand_net(landmarks_norm)

    def fuse(self, visual_feat: torch.Tensor, hand_feat: torch.Tensor | None) -> torch.Tensor:
        """Concatenate (visual, hand) and project to the fused dimension."""
        if self.cfg.use_hand_features:
            if hand_feat is None:
                raise ShapeError("hand features required by this configuration")
            if visual_feat.shape[1] != self.cfg.visual_dim or hand_feat.shape[1] != self.cfg.hand_dim:
                raise ShapeError(
                    f"feature dims {visual_feat.shape[1]}+{hand_feat.shape[1]} do not match "
                    f"config {self.cfg.visual_dim}+{self.cfg.hand_dim}"
                )
            fused_in = torch.cat([visual_feat, hand_feat], dim=1)
        else:
            fused_in = visual_feat
        return self.fusion(fused_in)

    def init_state(self, batch: int = 1, dtype: torch.dtype | None = None) -> RecurrentState:
        """All-zero initial recurrent state."""
        p = next(self.parameters())
        dtype = dtype or p.dtype
        shape = (self.cfg.lstm_layers, batch, self.cfg.lstm_hidden)
        return (torch.zeros(shape, dtype=dtype), torch.zeros(shape, dtype=dtype))

    def step(self, fused: torch.Tensor, state: RecurrentState) -> tuple[torch.Tensor, RecurrentState]:
        """Advance the LSTM one timestep: (B, fused_dim) -> (B, hidden)."""
        if fused.ndim != 2 or fused.shape[1] != self.cfg.fused_dim:
            raise ShapeError(f"expected (B, {self.cfg.fused_dim}) fused features, got {tuple(fused.shape)}")
        if state[0].shape[0] != self.cfg.lstm_layers or state[0].shape[2] != self.cfg.lstm_hidden:
            raise ShapeError(f"state shape {tuple(state[0].shape)} does not match config")
        out, new_state = self.core(fused.unsqueeze(1), state)
        return out[:, 0], new_state

    def score_heads(self, core_out: torch.Tensor) -> torch.Tensor:
        """(B, hidden) -> (B, 3, G) nonnegative scores summing to 1 per axis."""
        logits = torch.stack([net(core_out) for net in self.score_nets], dim=1)
        return torch.softmax(logits, dim=-1)

    def aux_heads(self, visual_feat: torch.Tensor, core_out: torch.Tensor,
                  resolution: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        hand_px = torch.sigmoid(self.hand_head(visual_feat)) * resolution
        time_frac = torch.sigmoid(self.time_head(core_out)).squeeze(-1)
        return hand_px, time_frac

    # ---- frame-at-a-time path (evaluation / streaming) --------------------

    def forward_frame(self, frame: Frame, state: RecurrentState) -> tuple[FrameOutput, RecurrentState]:
        dtype = next(self.parameters()).dtype
        visual, lm_norm, resolution = (t.to(dtype) for t in frame_tensors(frame))
        v = self.encode_visual(visual)
        h = self.encode_hand(lm_norm) if self.cfg.use_hand_features else None
        u = self.fuse(v, h)
        core_out, new_state = self.step(u, state)
        scores = self.score_heads(core_out)
        point = decode_scores(scores, self.cfg.grid)
        hand_px, time_frac = self.aux_heads(v, core_out, resolution)
        out = FrameOutput(
            raw_scores=scores[0],
            raw_point=point[0],
            hand_pred=hand_px[0],
            time_pred=time_frac[0],
        )
        return out, new_state

    def forward_clip(self, clip: Clip, state: RecurrentState | None = None) -> list[FrameOutput]:
        """Strictly causal clip pass; output t depends on frames 1..t only."""
        if state is None:
            state = self.init_state()
        outputs = []
        for frame in clip.frames:
            out, state = self.forward_frame(frame, state)
            outputs.append(out)
        return outputs

    # ---- padded batch path (training) -------------------------------------

    def forward_batch(self, visual: torch.Tensor, landmarks_norm: torch.Tensor,
                      resolution: torch.Tensor) -> ModelOutputs:
        """visual (B, T, ...), landmarks (B, T, 42), resolution (B, T, 2)."""
        dtype = next(self.parameters()).dtype
        visual = visual.to(dtype)
        landmarks_norm = landmarks_norm.to(dtype)
        resolution = resolution.to(dtype)
        b, t = visual.shape[:2]
        v = self.encode_visual(visual.reshape(b * t, *visual.shape[2:]))
        if self.cfg.use_hand_features:
            h = self.encode_hand(landmarks_norm.reshape(b * t, -1))
        else:
            h = None
        u = self.fuse(v, h).reshape(b, t, -1)
        core_out, _ = self.core(u, self.init_state(b, dtype=u.dtype))
        flat_core = core_out.reshape(b * t, -1)
        scores = self.score_heads(flat_core)
        point = decode_scores(scores, self.cfg.grid)
        hand_px, time_frac = self.aux_heads(v, flat_core, resolution.reshape(b * t, 2))
        return ModelOutputs(
            raw_scores=scores.reshape(b, t, 3, -1),
            raw_point=point.reshape(b, t, 3),
            hand_pred=hand_px.reshape(b, t, 2),
            time_pred=time_frac.reshape(b, t),
        )


def frame_tensors(frame: Frame) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Frame -> (visual (1, ...), landmarks_norm (1, 42), resolution (1, 2))."""
    vis = np.asarray(frame.visual, dtype=np.float32)
    if vis.ndim == 3:
        visual = torch.from_numpy(np.ascontiguousarray(vis.transpose(2, 0, 1)))[None]
    else:
        visual = torch.from_numpy(vis)[None]
    res = frame.intrinsics.resolution
    lm = (frame.landmarks.points / res).astype(np.float32).reshape(-1)
    return visual, torch.from_numpy(lm)[None], torch.from_numpy(res.astype(np.float32))[None]


def state_to_arrays(state: RecurrentState) -> dict[str, np.ndarray]:
    return {"h": state[0].detach().numpy().copy(), "c": state[1].detach().numpy().copy()}


def state_from_arrays(arrays: dict[str, np.ndarray]) -> RecurrentState:
    return (torch.from_numpy(np.asarray(arrays["h"])).clone(), torch.from_numpy(np.asarray(arrays["c"])).clone())


# ---- checkpoint container --------------------------------------------------
# Layout: magic | uint64 header length | header JSON | float32 LE payload.
# The header maps parameter names to shapes and byte offsets, so loading is
# by-name and tolerates extra entries from newer models.


def save_checkpoint(model: TargetPredictor, path) -> None:
    params = []
    payload = io.BytesIO()
    offset = 0
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        params.append({"name": name, "shape": list(arr.shape), "dtype": "float32", "offset": offset})
        raw = arr.tobytes()
        payload.write(raw)
        offset += len(raw)
    header = json.dumps(
        {"format": "egoreach-checkpoint", "version": 1, "config": model.cfg.to_dict(), "params": params},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        f.write(payload.getvalue())


def load_checkpoint(path) -> TargetPredictor:
    try:
        blob = open(path, "rb").read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint: {e}") from e
    if len(blob) < len(_CKPT_MAGIC) + 8 or blob[: len(_CKPT_MAGIC)] != _CKPT_MAGIC:
        raise CheckpointError("not an egoreach checkpoint (bad magic)")
    (hlen,) = struct.unpack_from("<Q", blob, len(_CKPT_MAGIC))
    start = len(_CKPT_MAGIC) + 8
    try:
        header = json.loads(blob[start : start + hlen].decode())
        cfg = ModelConfig.from_dict(header["config"])
        entries = {p["name"]: p for p in header["params"]}
    except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError, DomainError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from e

    model = TargetPredictor(cfg)
    payload_start = start + hlen
    state = {}
    for name, tensor in model.state_dict().items():
        if name not in entries:
            raise CheckpointError(f"checkpoint is missing parameter {name!r}")
        p = entries[name]
        shape = tuple(p["shape"])
        count = int(np.prod(shape)) if shape else 1
        begin = payload_start + p["offset"]
        end = begin + 4 * count
        if end > len(blob):
            raise CheckpointError(f"checkpoint payload truncated at parameter {name!r}")
        arr = np.frombuffer(blob[begin:end], dtype="<f4").reshape(shape)
        if tuple(tensor.shape) != shape:
            raise CheckpointError(f"parameter {name!r} has shape {shape}, expected {tuple(tensor.shape)}")
        state[name] = torch.from_numpy(arr.copy())
    model.load_state_dict(state)
    model.eval()
    return model
