"""Clip data model, on-disk clip format, and dataset splitting.

A clip is a directory:

    clip_00000/
      meta.json       length, split, scene id, camera intrinsics
      landmarks.csv   T rows x 43 columns: present flag + 21 (x, y) pixel pairs
      targets.csv     T rows x 3 columns: per-frame ground-truth target (meters)
      visual.npy      float32 blob, (T, H, W, 3) images or (T, D) feature vectors

Label files are human-inspectable CSV; the bulk visual data is one binary
blob. Floats are written with full repr precision so save -> load is exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError, SplitError
from .geometry import CameraIntrinsics

NUM_LANDMARKS = 21
# Standard 21-point hand topology: the index fingertip is point 8.
FINGERTIP_INDEX = 8
# Training clips are truncated to this many frames; val/test are unbounded.
TRAIN_CLIP_CAP = 25

SPLIT_TAGS = ("train", "val", "test_seen", "test_unseen")


@dataclass(frozen=True)
class HandLandmarks:
    """21 hand keypoints in pixel coordinates; all-zero when no hand is detected."""

    points: np.ndarray
    present: bool

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (NUM_LANDMARKS, 2):
            raise DomainError(f"expected {NUM_LANDMARKS} landmark points, got shape {pts.shape}")
        object.__setattr__(self, "points", pts)
        if not self.present and np.any(pts != 0.0):
            raise DomainError("absent hand must have all landmarks at (0, 0)")

    @classmethod
    def absent(cls) -> "HandLandmarks":
        return cls(points=np.zeros((NUM_LANDMARKS, 2)), present=False)

    def fingertip(self, index: int = FINGERTIP_INDEX) -> np.ndarray:
        return self.points[index]


@dataclass(frozen=True)
class Frame:
    """One observation: visual input, hand landmarks, and the per-frame target.

    ``target_gt`` is the clip's final action target expressed in this frame's
    camera coordinates. ``visual`` is either an (H, W, 3) float image in [0, 1]
    or a precomputed 1-D feature vector.
    """

    visual: np.ndarray
    landmarks: HandLandmarks
    target_gt: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        tgt = np.asarray(self.target_gt, dtype=np.float64).reshape(3)
        object.__setattr__(self, "target_gt", tgt)
        if not np.all(np.isfinite(tgt)):
            raise DomainError(f"target_gt must be finite, got {tgt}")
        if tgt[2] <= 0:
            raise DomainError(f"target_gt depth must be positive, got z={tgt[2]}")
        vis = np.asarray(self.visual, dtype=np.float32)
        if vis.ndim not in (1, 3):
            raise DomainError(f"visual must be an (H, W, 3) image or 1-D features, got ndim={vis.ndim}")
        if vis.ndim == 3 and vis.shape[2] != 3:
            raise DomainError(f"visual image must have 3 channels, got shape {vis.shape}")
        object.__setattr__(self, "visual", vis)


@dataclass
class Clip:
    """Ordered frames sharing one camera; immutable after construction."""

    frames: list[Frame]
    scene_id: int = 0
    split_tag: str | None = None

    def __post_init__(self):
        if len(self.frames) < 2:
            raise DomainError(f"clip needs at least 2 frames, got {len(self.frames)}")
        if self.split_tag is not None and self.split_tag not in SPLIT_TAGS:
            raise DomainError(f"unknown split tag {self.split_tag!r}")
        if self.split_tag == "train" and len(self.frames) > TRAIN_CLIP_CAP:
            raise DomainError(f"training clip exceeds {TRAIN_CLIP_CAP} frames: {len(self.frames)}")

    @property
    def length(self) -> int:
        return len(self.frames)

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.frames[0].intrinsics

    def prefix(self, k: int) -> "Clip":
        if not (2 <= k <= self.length):
            raise DomainError(f"prefix length {k} outside [2, {self.length}]")
        return Clip(frames=self.frames[:k], scene_id=self.scene_id, split_tag=self.split_tag)


def _format_float(v: float) -> str:
    return repr(float(v))


def save_clip(clip: Clip, path: str | Path) -> None:
    """Write a clip directory; every field round-trips exactly through load_clip."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    intr = clip.intrinsics
    if any(f.intrinsics != intr for f in clip.frames):
        raise DomainError("all frames in a clip must share one set of intrinsics")

    meta = {
        "format": "egoreach-clip",
        "version": 1,
        "length": clip.length,
        "split": clip.split_tag if clip.split_tag is not None else "unsplit",
        "scene_id": int(clip.scene_id),
        "intrinsics": intr.to_dict(),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    with open(out / "landmarks.csv", "w", newline="") as f:
        writer = csv.writer(f)
        header = ["present"]
        for i in range(NUM_LANDMARKS):
            header += [f"x{i}", f"y{i}"]
        writer.writerow(header)
        for frame in clip.frames:
            row = ["1" if frame.landmarks.present else "0"]
            for x, y in frame.landmarks.points:
                row += [_format_float(x), _format_float(y)]
            writer.writerow(row)

    with open(out / "targets.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "z"])
        for frame in clip.frames:
            writer.writerow([_format_float(v) for v in frame.target_gt])

    visual = np.stack([f.visual for f in clip.frames]).astype(np.float32)
    np.save(out / "visual.npy", visual)


def load_clip(path: str | Path) -> Clip:
    """Read a clip directory, validating every invariant; raises FormatError."""
    src = Path(path)

    meta_path = src / "meta.json"
    if not meta_path.is_file():
        raise FormatError("meta.json", "missing")
    try:
        meta = json.loads(meta_path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise FormatError("meta.json", str(e)) from e
    for key in ("length", "split", "scene_id", "intrinsics"):
        if key not in meta:
            raise FormatError(f"meta.{key}", "missing")
    length = int(meta["length"])
    split = meta["split"]
    if split == "unsplit":
        split = None
    elif split not in SPLIT_TAGS:
        raise FormatError("meta.split", f"unknown tag {split!r}")
    try:
        intr = CameraIntrinsics.from_dict(meta["intrinsics"])
    except (DomainError, KeyError, TypeError, ValueError) as e:
        raise FormatError("intrinsics", str(e)) from e

    landmarks = _load_landmarks(src / "landmarks.csv", length)
    targets = _load_targets(src / "targets.csv", length)

    visual_path = src / "visual.npy"
    if not visual_path.is_file():
        raise FormatError("visual.npy", "missing")
    try:
        visual = np.load(visual_path)
    except (ValueError, OSError, EOFError) as e:
        raise FormatError("visual.npy", str(e)) from e
    if visual.ndim not in (2, 4) or visual.shape[0] != length:
        raise FormatError("visual", f"expected {length} frames of images or features, got shape {visual.shape}")

    frames = []
    for t in range(length):
        try:
            frames.append(
                Frame(
                    visual=visual[t],
                    landmarks=landmarks[t],
                    target_gt=targets[t],
                    intrinsics=intr,
                )
            )
        except DomainError as e:
            raise FormatError(f"frame[{t}]", str(e)) from e
    try:
        return Clip(frames=frames, scene_id=int(meta["scene_id"]), split_tag=split)
    except DomainError as e:
        raise FormatError("clip", str(e)) from e


def _load_landmarks(path: Path, length: int) -> list[HandLandmarks]:
    if not path.is_file():
        raise FormatError("landmarks.csv", "missing")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise FormatError("landmarks", "empty file")
    body = rows[1:]
    if len(body) != length:
        raise FormatError("landmarks", f"expected {length} rows, got {len(body)}")
    out = []
    for i, row in enumerate(body):
        if len(row) != 1 + 2 * NUM_LANDMARKS:
            raise FormatError("landmarks", f"row {i}: expected {1 + 2 * NUM_LANDMARKS} columns, got {len(row)}")
        try:
            present = bool(int(row[0]))
            pts = np.array([float(v) for v in row[1:]], dtype=np.float64).reshape(NUM_LANDMARKS, 2)
            out.append(HandLandmarks(points=pts, present=present))
        except (ValueError, DomainError) as e:
            raise FormatError("landmarks", f"row {i}: {e}") from e
    return out


def _load_targets(path: Path, length: int) -> list[np.ndarray]:
    if not path.is_file():
        raise FormatError("targets.csv", "missing")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    body = rows[1:]
    if len(body) != length:
        raise FormatError("targets", f"expected {length} rows, got {len(body)}")
    out = []
    for i, row in enumerate(body):
        if len(row) != 3:
            raise FormatError("targets", f"row {i}: expected 3 columns, got {len(row)}")
        try:
            out.append(np.array([float(v) for v in row], dtype=np.float64))
        except ValueError as e:
            raise FormatError("targets", f"row {i}: {e}") from e
    return out


def _largest_remainder(total: int, ratios: np.ndarray) -> np.ndarray:
    raw = total * ratios
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    for i in range(short):
        counts[order[i]] += 1
    return counts


def split_dataset(
    clips: list[Clip],
    ratios: tuple[float, float, float, float],
    rng_seed: int,
    train_cap: int = TRAIN_CLIP_CAP,
) -> dict[str, list[Clip]]:
    """Deterministic (train, val, test_seen, test_unseen) partition.

    The unseen split is built from whole scenes so it shares no scene identity
    with train/val; training clips are truncated to ``train_cap`` frames.
    """
    r = np.asarray(ratios, dtype=np.float64)
    if r.shape != (4,) or np.any(r < 0) or abs(r.sum() - 1.0) > 1e-9:
        raise SplitError(f"ratios must be 4 nonnegative values summing to 1, got {ratios}")
    n = len(clips)
    if n == 0:
        raise SplitError("no clips to split")

    rng = np.random.default_rng(rng_seed)
    counts = _largest_remainder(n, r)
    if np.any((r > 0) & (counts == 0)):
        raise SplitError(f"{n} clips are too few for ratios {ratios}")

    unseen: list[Clip] = []
    remaining = list(clips)
    if counts[3] > 0:
        by_scene: dict[int, list[Clip]] = {}
        for c in clips:
            by_scene.setdefault(c.scene_id, []).append(c)
        scene_ids = sorted(by_scene)
        rng.shuffle(scene_ids)
        picked: set[int] = set()
        total = 0
        for sid in scene_ids:
            if total >= counts[3]:
                break
            picked.add(sid)
            total += len(by_scene[sid])
        unseen = [c for c in clips if c.scene_id in picked]
        remaining = [c for c in clips if c.scene_id not in picked]
        head = r[:3]
        if head.sum() > 0:
            head_counts = _largest_remainder(len(remaining), head / head.sum())
            if np.any((head > 0) & (head_counts == 0)):
                raise SplitError("unseen scenes consume too many clips for the remaining ratios")
            counts = np.array([*head_counts, len(unseen)])
        elif remaining:
            raise SplitError("unseen ratio is 1 but scene grouping left clips unassigned")

    order = rng.permutation(len(remaining))
    shuffled = [remaining[i] for i in order]
    train = shuffled[: counts[0]]
    val = shuffled[counts[0] : counts[0] + counts[1]]
    seen = shuffled[counts[0] + counts[1] : counts[0] + counts[1] + counts[2]]

    def tag(cs: list[Clip], name: str) -> list[Clip]:
        out = []
        for c in cs:
            frames = c.frames[:train_cap] if name == "train" and c.length > train_cap else c.frames
            out.append(replace(c, frames=frames, split_tag=name))
        return out

    return {
        "train": tag(train, "train"),
        "val": tag(val, "val"),
        "test_seen": tag(seen, "test_seen"),
        "test_unseen": tag(unseen, "test_unseen"),
    }


def load_dataset(root: str | Path) -> dict[str, list[Clip]]:
    """Load every ``clip_*`` directory under root, grouped by split tag."""
    root = Path(root)
    splits: dict[str, list[Clip]] = {name: [] for name in SPLIT_TAGS}
    clip_dirs = sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("clip_"))
    if not clip_dirs:
        raise FormatError("dataset", f"no clip_* directories under {root}")
    for d in clip_dirs:
        clip = load_clip(d)
        tag = clip.split_tag if clip.split_tag is not None else "train"
        splits.setdefault(tag, []).append(clip)
    return splits


def collect_labels(clips: list[Clip]) -> np.ndarray:
    """Stack every per-frame ground-truth target into an (N, 3) array."""
    if not clips:
        return np.zeros((0, 3))
    return np.concatenate([[f.target_gt for f in c.frames] for c in clips], axis=0)
