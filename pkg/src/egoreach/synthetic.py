"""Synthetic desk-scale reach-trajectory generator.

Each clip simulates one manipulation reach seen from a head-mounted camera:
the hand starts somewhere in the workspace and moves toward a target with an
ease-in/ease-out speed profile (fast in the first half, nearly still at the
end, which is the stabilization the post-processor exploits). The camera
drifts with a small random-walk ego-motion, so the fixed world target has
different coordinates in every frame.

Rendered frames are small RGB rasters: a textured background with blob
distractors, a marker at the target, and a disc at the hand. Distractors
share the marker's palette on purpose; early in a clip the image alone is
ambiguous about which blob is the target, and the hand's motion disambiguates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import FINGERTIP_INDEX, NUM_LANDMARKS, Clip, Frame, HandLandmarks
from .errors import DomainError, GenerationFailed
from .geometry import CameraIntrinsics, RigidTransform, WorkspaceBox, default_workspace, project, rotation_about_axis

_MARKER_COLOR = np.array([0.85, 0.18, 0.12])
_HAND_COLOR = np.array([0.15, 0.75, 0.30])


def default_synthetic_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


@dataclass(frozen=True)
class SyntheticWorldConfig:
    """Parameters of the simulated reach world; all magnitudes nonnegative."""

    workspace: WorkspaceBox = field(default_factory=default_workspace)
    intrinsics: CameraIntrinsics = field(default_factory=default_synthetic_intrinsics)
    # Targets and hand starts are sampled inside these sub-boxes (meters).
    target_lo: tuple[float, float, float] = (-0.30, -0.22, 0.65)
    target_hi: tuple[float, float, float] = (0.30, 0.22, 1.35)
    start_lo: tuple[float, float, float] = (-0.35, -0.25, 0.55)
    start_hi: tuple[float, float, float] = (0.35, 0.28, 1.45)
    peak_speed: float = 0.08  # m/frame cap on per-frame hand displacement
    ease_exponent: float = 2.0  # velocity ~ tau * (1 - tau)^b; b > 1 peaks early
    rot_per_frame: float = 0.004  # rad, camera random-walk step
    trans_per_frame: float = 0.002  # m, camera random-walk step
    hand_size_m: float = 0.09
    landmark_jitter_px: float = 1.5
    length_min: int = 8
    length_max: int = 115
    length_mean: float = 24.0
    hidden_frac: float = 0.1  # fraction of early frames with no detected hand
    distractors: int = 12
    distractor_size_m: float = 0.03
    marker_size_m: float = 0.035
    render_size: int = 64
    frustum_margin_px: float = 8.0
    max_retries: int = 64
    scene_id: int = 0

    def __post_init__(self):
        if self.length_min < 2:
            raise DomainError(f"length_min must be >= 2, got {self.length_min}")
        if not (self.length_min <= self.length_mean <= self.length_max):
            raise DomainError("length_mean must lie within [length_min, length_max]")
        for name in ("peak_speed", "rot_per_frame", "trans_per_frame", "hand_size_m",
                     "landmark_jitter_px", "hidden_frac", "distractor_size_m", "marker_size_m"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")
        if self.ease_exponent <= 0:
            raise DomainError("ease_exponent must be positive")
        if self.render_size < 8:
            raise DomainError("render_size must be >= 8")
        lo, hi = np.asarray(self.target_lo), np.asarray(self.target_hi)
        if not (np.all(hi >= lo) and self.workspace.contains(lo) and self.workspace.contains(hi)):
            raise DomainError("target box must be inside the workspace")

    def to_dict(self) -> dict:
        return {
            "workspace": self.workspace.to_dict(),
            "intrinsics": self.intrinsics.to_dict(),
            "target_lo": list(self.target_lo),
            "target_hi": list(self.target_hi),
            "start_lo": list(self.start_lo),
            "start_hi": list(self.start_hi),
            "peak_speed": self.peak_speed,
            "ease_exponent": self.ease_exponent,
            "rot_per_frame": self.rot_per_frame,
            "trans_per_frame": self.trans_per_frame,
            "hand_size_m": self.hand_size_m,
            "landmark_jitter_px": self.landmark_jitter_px,
            "length_min": self.length_min,
            "length_max": self.length_max,
            "length_mean": self.length_mean,
            "hidden_frac": self.hidden_frac,
            "distractors": self.distractors,
            "distractor_size_m": self.distractor_size_m,
            "marker_size_m": self.marker_size_m,
            "render_size": self.render_size,
            "frustum_margin_px": self.frustum_margin_px,
            "max_retries": self.max_retries,
            "scene_id": self.scene_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticWorldConfig":
        d = dict(d)
        if "workspace" in d:
            d["workspace"] = WorkspaceBox.from_dict(d["workspace"])
        if "intrinsics" in d:
            d["intrinsics"] = CameraIntrinsics.from_dict(d["intrinsics"])
        for key in ("target_lo", "target_hi", "start_lo", "start_hi"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class SceneAssets:
    """Per-scene randomness shared by every clip from the same scene."""

    landmark_offsets_m: np.ndarray  # (21, 3) hand shape template, fingertip at 0
    distractor_points_w: np.ndarray  # (D, 3) world positions
    distractor_colors: np.ndarray  # (D, 3)
    bg_freq: np.ndarray  # (3, 2) spatial frequencies per channel
    bg_phase: np.ndarray  # (3,)
    bg_base: np.ndarray  # (3,)


def build_scene(cfg: SyntheticWorldConfig) -> SceneAssets:
    rng = np.random.default_rng([0x5CE4E, cfg.scene_id])
    offsets = rng.normal(0.0, cfg.hand_size_m * 0.5, size=(NUM_LANDMARKS, 3))
    offsets[:, 2] *= 0.3  # hands are roughly planar
    offsets[FINGERTIP_INDEX] = 0.0
    lo, hi = np.asarray(cfg.target_lo), np.asarray(cfg.target_hi)
    points = rng.uniform(lo, hi, size=(cfg.distractors, 3))
    # Half the distractors borrow the marker palette so color alone cannot
    # identify the target; the rest are muted background clutter.
    colors = rng.uniform(0.1, 0.7, size=(cfg.distractors, 3))
    n_decoy = cfg.distractors // 2
    colors[:n_decoy] = _MARKER_COLOR + rng.normal(0.0, 0.05, size=(n_decoy, 3))
    colors = np.clip(colors, 0.0, 1.0)
    return SceneAssets(
        landmark_offsets_m=offsets,
        distractor_points_w=points,
        distractor_colors=colors,
        bg_freq=rng.uniform(1.0, 4.0, size=(3, 2)),
        bg_phase=rng.uniform(0.0, 2 * math.pi, size=3),
        bg_base=rng.uniform(0.2, 0.45, size=3),
    )


def _ease_curve(taus: np.ndarray, b: float) -> np.ndarray:
    """Normalized progress s(tau) for velocity ~ tau * (1 - tau)^b, s(1) = 1."""
    u = 1.0 - taus
    return 1.0 - (b + 2.0) * u ** (b + 1.0) + (b + 1.0) * u ** (b + 2.0)


def _sample_length(cfg: SyntheticWorldConfig, rng: np.random.Generator) -> int:
    spread = max(cfg.length_mean - cfg.length_min, 0.0)
    if spread == 0:
        return cfg.length_min
    t = cfg.length_min + rng.gamma(shape=2.0, scale=spread / 2.0)
    return int(np.clip(round(t), cfg.length_min, cfg.length_max))


def _draw_disc(img: np.ndarray, xg: np.ndarray, yg: np.ndarray, center: np.ndarray,
               radius: float, color: np.ndarray) -> None:
    d = np.sqrt((xg - center[0]) ** 2 + (yg - center[1]) ** 2)
    w = np.clip(radius + 0.5 - d, 0.0, 1.0)[..., None]
    img *= 1.0 - w
    img += w * color


def render_frame(
    cfg: SyntheticWorldConfig,
    scene: SceneAssets,
    world_to_cam: RigidTransform,
    hand_cam: np.ndarray | None,
    target_cam: np.ndarray,
) -> np.ndarray:
    """Rasterize one frame at cfg.render_size; blob radii shrink with depth."""
    s = cfg.render_size
    intr = cfg.intrinsics
    sx, sy = s / intr.width, s / intr.height
    rscale = 0.5 * (sx + sy)
    yg, xg = np.mgrid[0:s, 0:s].astype(np.float64)

    u = xg / s
    v = yg / s
    img = np.empty((s, s, 3))
    for c in range(3):
        img[..., c] = scene.bg_base[c] + 0.12 * np.sin(
            2 * math.pi * (scene.bg_freq[c, 0] * u + scene.bg_freq[c, 1] * v) + scene.bg_phase[c]
        )

    def blob(point_cam, size_m, color):
        if point_cam[2] <= 0:
            return
        px = project(point_cam, intr)
        center = np.array([px[0] * sx, px[1] * sy])
        radius = max(size_m * intr.fx / point_cam[2] * rscale, 1.0)
        _draw_disc(img, xg, yg, center, radius, color)

    for p, c in zip(scene.distractor_points_w, scene.distractor_colors):
        blob(world_to_cam.apply(p), cfg.distractor_size_m, c)
    blob(target_cam, cfg.marker_size_m, _MARKER_COLOR)
    if hand_cam is not None:
        blob(hand_cam, cfg.hand_size_m, _HAND_COLOR)

    return np.clip(img, 0.0, 1.0).astype(np.float32)


class _FrustumReject(Exception):
    pass


def _check_in_frame(px: np.ndarray, intr: CameraIntrinsics, margin: float) -> None:
    if not (margin <= px[0] <= intr.width - margin and margin <= px[1] <= intr.height - margin):
        raise _FrustumReject


def simulate_reach(
    cfg: SyntheticWorldConfig, rng: np.random.Generator
) -> tuple[Clip, list[RigidTransform], np.ndarray]:
    """One reach attempt; raises _FrustumReject if anything leaves the view.

    Returns the clip, the per-frame world-to-camera transforms, and the
    (T, 2) projected hand-center pixel track (defined even on hidden frames).
    """
    intr = cfg.intrinsics
    scene = build_scene(cfg)
    T = _sample_length(cfg, rng)

    target_w = rng.uniform(cfg.target_lo, cfg.target_hi)
    start_w = rng.uniform(cfg.start_lo, cfg.start_hi)
    reach = start_w - target_w
    dist = np.linalg.norm(reach)
    if dist < 1e-6:
        reach = np.array([0.0, 0.0, -0.1])
        dist = 0.1

    taus = np.arange(T) / (T - 1)
    s_curve = _ease_curve(taus, cfg.ease_exponent)
    max_step = np.max(np.diff(s_curve)) if T > 1 else 1.0
    if dist * max_step > cfg.peak_speed:  # shrink the reach to respect the speed cap
        dist_new = cfg.peak_speed / max_step
        start_w = target_w + reach / dist * dist_new
    hand_w = start_w + s_curve[:, None] * (target_w - start_w)  # ends exactly on target

    # Camera random walk; world frame == first camera frame.
    orient = np.eye(3)
    center = np.zeros(3)
    transforms: list[RigidTransform] = []
    for t in range(T):
        if t > 0:
            orient = orient @ rotation_about_axis(rng.normal(size=3), rng.normal(0.0, cfg.rot_per_frame))
            center = center + rng.normal(0.0, cfg.trans_per_frame, size=3)
        transforms.append(RigidTransform(rotation=orient.T, translation=-orient.T @ center))

    n_hidden = min(int(round(cfg.hidden_frac * T)), T - 2)
    frames: list[Frame] = []
    hand_track_px = np.zeros((T, 2))
    for t in range(T):
        w2c = transforms[t]
        target_cam = w2c.apply(target_w)
        if target_cam[2] <= 0.05:
            raise _FrustumReject
        _check_in_frame(project(target_cam, intr), intr, cfg.frustum_margin_px)

        hand_cam = w2c.apply(hand_w[t])
        if hand_cam[2] <= 0.05:
            raise _FrustumReject
        hand_px = project(hand_cam, intr)
        _check_in_frame(hand_px, intr, cfg.frustum_margin_px)
        hand_track_px[t] = hand_px

        present = t >= n_hidden
        if present:
            pts = np.empty((NUM_LANDMARKS, 2))
            for i in range(NUM_LANDMARKS):
                lm_cam = w2c.apply(hand_w[t] + scene.landmark_offsets_m[i])
                if lm_cam[2] <= 0.05:
                    raise _FrustumReject
                pts[i] = project(lm_cam, intr)
                if i != FINGERTIP_INDEX:  # fingertip is exact so it lands on the target
                    pts[i] += rng.normal(0.0, cfg.landmark_jitter_px, size=2)
            landmarks = HandLandmarks(points=pts, present=True)
        else:
            landmarks = HandLandmarks.absent()

        visual = render_frame(cfg, scene, w2c, hand_cam if present else None, target_cam)
        frames.append(Frame(visual=visual, landmarks=landmarks, target_gt=target_cam, intrinsics=intr))

    clip = Clip(frames=frames, scene_id=cfg.scene_id)
    return clip, transforms, hand_track_px


def generate_clip(cfg: SyntheticWorldConfig, rng_seed: int) -> Clip:
    """Deterministic clip from (config, seed); retries on frustum violations."""
    clip, _, _ = generate_clip_debug(cfg, rng_seed)
    return clip


def generate_clip_debug(
    cfg: SyntheticWorldConfig, rng_seed: int
) -> tuple[Clip, list[RigidTransform], np.ndarray]:
    """generate_clip plus the simulator's transforms and hand pixel track."""
    for attempt in range(cfg.max_retries):
        rng = np.random.default_rng([rng_seed, cfg.scene_id, attempt])
        try:
            return simulate_reach(cfg, rng)
        except _FrustumReject:
            continue
    raise GenerationFailed(f"no in-frustum clip after {cfg.max_retries} attempts (seed={rng_seed})")


def generate_dataset(
    cfg: SyntheticWorldConfig,
    count: int,
    seed: int,
    n_scenes: int = 8,
) -> list[Clip]:
    """``count`` clips cycled over ``n_scenes`` scene identities."""
    if count < 1 or n_scenes < 1:
        raise DomainError("count and n_scenes must be positive")
    clips = []
    for i in range(count):
        scene_cfg = replace(cfg, scene_id=i % n_scenes)
        clips.append(generate_clip(scene_cfg, rng_seed=seed * 1_000_003 + i))
    return clips
