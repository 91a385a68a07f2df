import pytest
import torch
from dataclasses import replace

from conftest import tiny_model_config, tiny_world
from egoreach.data import TRAIN_CLIP_CAP, split_dataset
from egoreach.errors import DomainError, TrainingDiverged
from egoreach.losses import LossConfig, total_loss
from egoreach.model import TargetPredictor
from egoreach.synthetic import generate_clip
from egoreach.training import TrainConfig, batch_loss, clips_to_batch, pad_and_batch, train


@pytest.fixture(scope="module")
def small_splits():
    cfg = tiny_world()
    clips = [generate_clip(replace(cfg, scene_id=i % 4), rng_seed=900 + i) for i in range(24)]
    return split_dataset(clips, (0.7, 0.15, 0.15, 0.0), rng_seed=1)


def _double_batch(batch):
    for name in ("visual", "landmarks_norm", "fingertips", "targets_norm", "resolution"):
        setattr(batch, name, getattr(batch, name).double())
    return batch


class TestPadAndBatch:
    def test_batch_of_one_matches_unbatched(self, small_splits):
        torch.manual_seed(3)
        model = TargetPredictor(tiny_model_config()).double()
        clip = small_splits["train"][0]
        batch = _double_batch(clips_to_batch([clip], model.cfg.box))
        with torch.no_grad():
            total_b, _ = batch_loss(model, batch, LossConfig())
            outs = model.forward_clip(clip)
            total_u = total_loss(outs, clip, LossConfig(), box=model.cfg.box).total
        assert abs(float(total_b) - float(total_u)) < 1e-6

    def test_padded_frames_contribute_zero(self, small_splits):
        torch.manual_seed(3)
        model = TargetPredictor(tiny_model_config()).double()
        clips = sorted(small_splits["train"], key=lambda c: c.length)[:4]
        assert clips[0].length != clips[-1].length  # padding actually happens
        batch = _double_batch(clips_to_batch(clips, model.cfg.box))
        with torch.no_grad():
            total_b, _ = batch_loss(model, batch, LossConfig())
            total_sum = sum(
                float(total_loss(model.forward_clip(c), c, LossConfig(), box=model.cfg.box).total)
                for c in clips
            )
        assert abs(float(total_b) - total_sum) < 1e-6

    def test_random_batch_equals_per_clip_sum(self, small_splits):
        torch.manual_seed(4)
        model = TargetPredictor(tiny_model_config()).double()
        clips = small_splits["train"][:6]
        batch = _double_batch(clips_to_batch(clips, model.cfg.box))
        with torch.no_grad():
            total_b, _ = batch_loss(model, batch, LossConfig())
            total_sum = sum(
                float(total_loss(model.forward_clip(c), c, LossConfig(), box=model.cfg.box).total)
                for c in clips
            )
        assert abs(float(total_b) - total_sum) < 1e-6

    def test_batch_grouping(self, small_splits):
        clips = small_splits["train"]
        batches = pad_and_batch(clips, 4, tiny_model_config().box)
        assert sum(b.lengths.shape[0] for b in batches) == len(clips)
        assert all(b.lengths.shape[0] <= 4 for b in batches)

    def test_rejects_bad_batch_size(self, small_splits):
        with pytest.raises(DomainError):
            pad_and_batch(small_splits["train"], 0, tiny_model_config().box)


class TestTrain:
    def test_same_seed_bitwise_identical_checkpoints(self, small_splits, tmp_path):
        cfg = TrainConfig(epochs=2, seeds=(7,), model=tiny_model_config())
        train(small_splits, cfg, out_dir=tmp_path / "a")
        train(small_splits, cfg, out_dir=tmp_path / "b")
        a = (tmp_path / "a" / "7" / "checkpoint.bin").read_bytes()
        b = (tmp_path / "b" / "7" / "checkpoint.bin").read_bytes()
        assert a == b
        la = (tmp_path / "a" / "7" / "log.csv").read_bytes()
        lb = (tmp_path / "b" / "7" / "log.csv").read_bytes()
        assert la == lb

    def test_one_checkpoint_per_seed(self, small_splits):
        cfg = TrainConfig(epochs=1, seeds=(1, 2, 3), model=tiny_model_config())
        results = train(small_splits, cfg)
        assert [r.seed for r in results] == [1, 2, 3]

    def test_divergence_raises_with_epoch(self, small_splits):
        cfg = TrainConfig(epochs=5, seeds=(7,), learning_rate=1e12, model=tiny_model_config())
        with pytest.raises(TrainingDiverged) as exc:
            train(small_splits, cfg)
        assert exc.value.epoch >= 0

    def test_rejects_overlong_training_clips(self, small_splits):
        cfg = tiny_world(length_min=30, length_max=30, length_mean=30)
        long_clip = generate_clip(cfg, rng_seed=1)
        bad = dict(small_splits)
        bad["train"] = small_splits["train"] + [long_clip]
        with pytest.raises(DomainError):
            train(bad, TrainConfig(epochs=1, seeds=(1,), model=tiny_model_config()))

    def test_empty_train_split(self):
        with pytest.raises(DomainError):
            train({"train": []}, TrainConfig(epochs=1, seeds=(1,), model=tiny_model_config()))

    def test_no_train_batch_exceeds_cap(self, small_splits):
        batches = pad_and_batch(small_splits["train"], 8, tiny_model_config().box)
        assert all(int(b.lengths.max()) <= TRAIN_CLIP_CAP for b in batches)

    def test_log_rows_cover_train_and_val(self, small_splits):
        cfg = TrainConfig(epochs=2, seeds=(7,), model=tiny_model_config())
        result = train(small_splits, cfg)[0]
        splits_seen = [(r["epoch"], r["split"]) for r in result.log_rows]
        assert splits_seen == [(0, "train"), (0, "val"), (1, "train"), (1, "val")]

    def test_val_loss_matches_objective_definition(self, small_splits):
        # The logged val metric must be the training objective itself
        # (no post-processing), averaged per clip.
        cfg = TrainConfig(epochs=1, seeds=(9,), model=tiny_model_config())
        result = train(small_splits, cfg)[0]
        model = result.model
        val = small_splits["val"]
        with torch.no_grad():
            expect = sum(
                float(total_loss(model.forward_clip(c), c, cfg.loss, box=model.cfg.box).total) for c in val
            ) / len(val)
        logged = [r for r in result.log_rows if r["split"] == "val"][-1]["total"]
        assert logged == pytest.approx(expect, rel=1e-4)


@pytest.mark.slow
class TestOverfitSanity:
    def test_memorizes_small_set(self):
        # Run-to-convergence oracle: a toy model trained long enough on a
        # memorizable set must beat the random baseline by a wide margin.
        from egoreach.evaluation import evaluate, random_baseline_from_clips

        world = tiny_world(render_size=16, length_min=6, length_max=14, length_mean=9,
                           distractors=0)
        clips = [generate_clip(replace(world, scene_id=i % 4), rng_seed=1500 + i) for i in range(50)]
        splits = split_dataset(clips, (1.0, 0.0, 0.0, 0.0), rng_seed=2)
        mcfg = tiny_model_config(
            visual_dim=32, hand_dim=16, fused_dim=32, lstm_hidden=48, image_size=16,
            conv_channels=(6, 12, 16, 24),
        )
        cfg = TrainConfig(epochs=400, seeds=(7,), learning_rate=5e-3, model=mcfg)
        result = train(splits, cfg)[0]
        report = evaluate([result.model], splits["train"], seeds=[7], split="train")
        baseline = random_baseline_from_clips(splits["train"], splits["train"], rng_seed=0, split="train")
        assert report.overall < 0.2 * baseline.overall
