import numpy as np
import pytest
from dataclasses import replace

from conftest import tiny_world
from egoreach.errors import DomainError
from egoreach.hri_sim import WorkspaceSim, run_episode, sim_step
from egoreach.synthetic import generate_clip


class TestSimStep:
    def test_avoid_outside_ball_no_motion(self):
        sim = WorkspaceSim(end_effector=np.zeros(3), radius=0.15, speed=0.1, mode="avoid")
        rec = sim_step(sim, np.array([0.25, 0.0, 0.0]))
        assert rec.moved == 0.0
        assert np.array_equal(sim.end_effector, np.zeros(3))
        assert not rec.violated

    def test_avoid_inside_ball_retreats_radially(self):
        sim = WorkspaceSim(end_effector=np.zeros(3), radius=0.15, speed=0.1, mode="avoid")
        rec = sim_step(sim, np.array([0.1, 0.0, 0.0]))
        assert np.allclose(sim.end_effector, [-0.1, 0.0, 0.0])
        assert rec.moved == pytest.approx(0.1)

    def test_avoid_coincident_target_tie_break_plus_z(self):
        sim = WorkspaceSim(end_effector=np.array([0.3, 0.2, 0.5]), radius=0.15, speed=0.1, mode="avoid")
        sim_step(sim, np.array([0.3, 0.2, 0.5]))
        assert np.allclose(sim.end_effector, [0.3, 0.2, 0.6])

    def test_reach_lands_exactly_without_overshoot(self):
        sim = WorkspaceSim(end_effector=np.zeros(3), radius=0.15, speed=0.1, mode="reach")
        target = np.array([0.05, 0.0, 0.0])
        rec = sim_step(sim, target)
        assert np.allclose(sim.end_effector, target)
        assert rec.moved == pytest.approx(0.05)

    def test_step_never_exceeds_max_speed(self, rng):
        for mode in ("avoid", "reach"):
            sim = WorkspaceSim(end_effector=np.zeros(3), radius=0.3, speed=0.07, mode=mode)
            for _ in range(50):
                before = sim.end_effector.copy()
                sim_step(sim, rng.uniform(-0.5, 0.5, size=3))
                assert np.linalg.norm(sim.end_effector - before) <= 0.07 + 1e-12

    def test_avoid_clearance_nondecreasing_for_static_target(self):
        sim = WorkspaceSim(end_effector=np.array([0.02, 0.0, 0.0]), radius=0.2, speed=0.03, mode="avoid")
        target = np.zeros(3)
        prev = np.linalg.norm(sim.end_effector - target)
        for _ in range(20):
            sim_step(sim, target)
            d = np.linalg.norm(sim.end_effector - target)
            assert d >= prev - 1e-12
            prev = d

    def test_reach_distance_strictly_decreasing_until_arrival(self):
        sim = WorkspaceSim(end_effector=np.zeros(3), radius=0.1, speed=0.04, mode="reach")
        target = np.array([0.3, 0.1, 0.2])
        prev = np.linalg.norm(target - sim.end_effector)
        while prev > 0:
            sim_step(sim, target)
            d = np.linalg.norm(target - sim.end_effector)
            assert d < prev or d == 0.0
            if d == prev:
                break
            prev = d
        assert np.allclose(sim.end_effector, target)

    def test_rejects_bad_config(self):
        with pytest.raises(DomainError):
            WorkspaceSim(end_effector=np.zeros(3), radius=0.0, speed=0.1, mode="avoid")
        with pytest.raises(DomainError):
            WorkspaceSim(end_effector=np.zeros(3), radius=0.1, speed=0.1, mode="patrol")


class TestRunEpisode:
    def test_empty_stream_rejected(self):
        sim = WorkspaceSim(end_effector=np.zeros(3), radius=0.1, speed=0.1, mode="avoid")
        with pytest.raises(DomainError):
            run_episode(sim, [])

    def test_oracle_avoid_no_violations_after_delay(self, rng):
        # Ground-truth targets from generated clips; speed >= radius means one
        # reaction step always clears the ball.
        cfg = tiny_world()
        for seed in range(10):
            clip = generate_clip(replace(cfg, scene_id=seed % 3), rng_seed=3000 + seed)
            preds = [f.target_gt for f in clip.frames]
            start = preds[0] + rng.uniform(-0.1, 0.1, size=3)
            sim = WorkspaceSim(end_effector=start, radius=0.15, speed=0.2, mode="avoid")
            log = run_episode(sim, preds)
            assert log.violations_after_delay == 0

    def test_reach_path_length_close_to_straight_line(self):
        sim = WorkspaceSim(end_effector=np.zeros(3), radius=0.1, speed=0.07, mode="reach")
        target = np.array([0.25, 0.1, 0.4])
        preds = [target] * 30
        log = run_episode(sim, preds)
        dist = np.linalg.norm(target)
        assert log.path_length <= dist + 0.07 + 1e-9
        assert np.allclose(sim.end_effector, target)

    def test_log_shape_and_summary(self):
        sim = WorkspaceSim(end_effector=np.zeros(3), radius=0.1, speed=0.05, mode="reach")
        preds = [np.array([0.2, 0.0, 0.0])] * 5
        log = run_episode(sim, preds)
        assert len(log.records) == 5
        assert log.min_clearance == min(r.clearance for r in log.records)
        rows = log.to_rows()
        assert set(rows[0]) == {"step", "prediction", "effector", "violated", "clearance"}
