"""Command-line surface: generate | train | eval | stream | simulate.

Exit codes: 0 success, 1 runtime error from a module, 2 usage or config
error. Config files are strict JSON: unknown fields are rejected by name so
typos fail loudly.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .data import load_clip, load_dataset, save_clip, split_dataset
from .errors import ConfigError, EgoReachError
from .evaluation import evaluate, random_baseline_from_clips, write_report_csv
from .hri_sim import WorkspaceSim, run_episode
from .model import load_checkpoint
from .streaming import push_frame, session_from_model, session_fps
from .synthetic import SyntheticWorldConfig, generate_dataset
from .training import TrainConfig, train


def _load_json(path: str, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(what, f"missing file {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(what, f"invalid JSON: {e}")


def _strict_fields(d: dict, allowed: set[str], what: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{what}.{sorted(unknown)[0]}", "unknown field")


def _world_from_dict(d: dict, what: str) -> SyntheticWorldConfig:
    _strict_fields(d, {f.name for f in fields(SyntheticWorldConfig)}, what)
    try:
        return SyntheticWorldConfig.from_dict(d)
    except (EgoReachError, TypeError, KeyError, ValueError) as e:
        raise ConfigError(what, str(e))


def cmd_generate(args) -> int:
    cfg_json = _load_json(args.config, "generate-config")
    _strict_fields(cfg_json, {"world", "ratios", "scenes"}, "generate-config")
    world = _world_from_dict(cfg_json.get("world", {}), "world")
    ratios = tuple(cfg_json.get("ratios", (0.7, 0.1, 0.1, 0.1)))
    n_scenes = int(cfg_json.get("scenes", 8))

    clips = generate_dataset(world, count=args.count, seed=args.seed, n_scenes=n_scenes)
    splits = split_dataset(clips, ratios, rng_seed=args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    idx = 0
    for name in ("train", "val", "test_seen", "test_unseen"):
        for clip in splits[name]:
            save_clip(clip, out / f"clip_{idx:05d}")
            idx += 1
    print(f"wrote {idx} clips to {out}")
    return 0


def _train_config(path: str) -> TrainConfig:
    d = _load_json(path, "train-config")
    from .losses import LossConfig
    from .model import GridSpec, ModelConfig

    _strict_fields(d, {f.name for f in fields(TrainConfig)}, "train-config")
    if "loss" in d:
        _strict_fields(d["loss"], {f.name for f in fields(LossConfig)}, "loss")
    if "model" in d:
        allowed = {f.name for f in fields(ModelConfig)}
        _strict_fields(d["model"], allowed, "model")
        if "grid" in d["model"]:
            _strict_fields(d["model"]["grid"], {f.name for f in fields(GridSpec)}, "model.grid")
    try:
        return TrainConfig.from_dict(d)
    except (EgoReachError, TypeError, KeyError, ValueError) as e:
        raise ConfigError("train-config", str(e))


def cmd_train(args) -> int:
    cfg = _train_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seeds=(args.seed,))
    splits = load_dataset(args.data)
    results = train(splits, cfg, out_dir=args.out)
    for r in results:
        print(f"seed {r.seed}: best epoch {r.best_epoch}, checkpoint {r.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    runs = Path(args.checkpoints)
    ckpt_paths = sorted(runs.glob("*/checkpoint.bin"))
    if runs.is_file():
        ckpt_paths = [runs]
    if not ckpt_paths:
        raise ConfigError("checkpoints", f"no */checkpoint.bin under {runs}")
    models = [load_checkpoint(p) for p in ckpt_paths]
    seeds = []
    for p in ckpt_paths:
        try:
            seeds.append(int(p.parent.name))
        except ValueError:
            seeds.append(len(seeds))

    splits = load_dataset(args.data)
    clips = splits[args.split]
    if not clips:
        raise ConfigError("split", f"no clips tagged {args.split}")
    use_post = not args.no_post
    modality = "rgb+hand" if models[0].cfg.use_hand_features else "rgb"
    report = evaluate(models, clips, seeds=seeds, use_post=use_post,
                      model_name="egoreach", modality=modality, split=args.split)
    reports = [report]
    if args.baseline:
        reports.append(random_baseline_from_clips(
            splits["train"], clips, rng_seed=args.seed if args.seed is not None else 0, split=args.split))
    write_report_csv(reports, args.out)
    print(f"{args.split}: overall {report.overall:.2f} cm over {report.n_clips} clips -> {args.out}")
    return 0


def cmd_stream(args) -> int:
    model = load_checkpoint(args.checkpoint)
    clip = load_clip(args.input)
    session = session_from_model(model)
    with open(args.out, "w") as f:
        for frame in clip.frames:
            pred = push_frame(session, frame)
            f.write(json.dumps(pred.to_dict(), sort_keys=True) + "\n")
    fps = session_fps(session)
    if fps is not None:
        print(f"streamed {clip.length} frames, {fps:.1f} FPS (first 10 warm-up frames excluded)")
    else:
        print(f"streamed {clip.length} frames (too few for an FPS estimate)")
    return 0


def cmd_simulate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    clip = load_clip(args.clip)
    session = session_from_model(model)
    predictions = [push_frame(session, frame).final_point_m for frame in clip.frames]
    effector = np.array([float(v) for v in args.effector.split(",")])
    sim = WorkspaceSim(end_effector=effector, radius=args.radius, speed=args.speed, mode=args.mode)
    log = run_episode(sim, predictions)
    with open(args.out, "w") as f:
        for row in log.to_rows():
            f.write(json.dumps(row, sort_keys=True) + "\n")
        f.write(json.dumps({
            "summary": {
                "violations": log.violations,
                "violations_after_delay": log.violations_after_delay,
                "min_clearance": log.min_clearance,
                "path_length": log.path_length,
            }
        }, sort_keys=True) + "\n")
    print(f"{args.mode}: {log.violations_after_delay} violations after delay, "
          f"path {log.path_length:.3f} m -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egoreach", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic clip dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train per-seed models on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override config seeds with one seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="ten-stage evaluation of trained checkpoints")
    p.add_argument("--checkpoints", required=True, help="runs dir with <seed>/checkpoint.bin")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["test_seen", "test_unseen", "val", "train"], default="test_seen")
    p.add_argument("--out", required=True)
    p.add_argument("--no-post", action="store_true", help="disable post-processing")
    p.add_argument("--baseline", action="store_true", help="append the random baseline row")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stream", help="push a clip through an online session")
    p.add_argument("--input", required=True, help="clip directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="JSON-lines prediction file")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("simulate", help="drive the workspace simulator from a clip")
    p.add_argument("--mode", choices=["avoid", "reach"], required=True)
    p.add_argument("--radius", type=float, default=0.15)
    p.add_argument("--speed", type=float, default=0.05)
    p.add_argument("--effector", default="0,0,1", help="initial end-effector x,y,z in meters")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except EgoReachError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
