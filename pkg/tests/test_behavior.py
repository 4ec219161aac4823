import math

import numpy as np
import pytest

from swarmdisc import CapabilityModel, ContractError, Controller, rollout
from swarmdisc.behavior import BehaviorVector, frame_metrics, hand_crafted_embed
from swarmdisc.sim import Trajectory

SINGLE = CapabilityModel.single()


def make_traj(frames, width=500.0, height=500.0):
    return Trajectory(frames=np.asarray(frames, dtype=float),
                      controller=Controller((0, 0, 0, 0)), seed=0, model=SINGLE,
                      width=width, height=height)


class TestFrameMetrics:
    def test_stationary_swarm(self):
        rng = np.random.default_rng(0)
        pos = rng.uniform(50, 450, size=(10, 2))
        vel = np.zeros((10, 2))
        speed, ang_mom, rad_var, scatter, rot = frame_metrics(pos, vel, 250.0)
        assert speed == 0.0 and ang_mom == 0.0 and rot == 0.0
        assert scatter >= 0.0 and rad_var >= 0.0

    def test_coincident_swarm_degenerate(self):
        pos = np.full((6, 2), 123.0)
        vel = np.ones((6, 2))
        speed, ang_mom, rad_var, scatter, rot = frame_metrics(pos, vel, 250.0)
        assert scatter == 0.0 and rad_var == 0.0
        assert rot == 0.0                          # zero-norm terms contribute 0
        assert speed == pytest.approx(math.sqrt(2.0))

    def test_pure_rotation_known_values(self):
        # 4 agents on a circle of radius rho, unit tangential speed
        rho, n, r_norm = 100.0, 4, 250.0
        ang = np.arange(n) * (2 * np.pi / n)
        pos = np.stack([250 + rho * np.cos(ang), 250 + rho * np.sin(ang)], axis=1)
        vel = np.stack([-np.sin(ang), np.cos(ang)], axis=1)    # CCW tangent
        speed, ang_mom, rad_var, scatter, rot = frame_metrics(pos, vel, r_norm)
        assert speed == pytest.approx(1.0)
        # v cross r (in that order) is -rho for counter-clockwise motion
        assert ang_mom == pytest.approx(-rho / r_norm)
        assert rot == pytest.approx(-1.0 / r_norm)
        assert rad_var == pytest.approx(0.0, abs=1e-18)
        assert scatter == pytest.approx((rho / r_norm) ** 2)

    def test_translation_invariance(self):
        rng = np.random.default_rng(1)
        pos = rng.uniform(0, 500, size=(12, 2))
        vel = rng.normal(0, 1, size=(12, 2))
        base = frame_metrics(pos, vel, 250.0)
        moved = frame_metrics(pos + np.array([37.0, -12.0]), vel, 250.0)
        assert np.allclose(base, moved, atol=1e-9)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(2)
        pos = rng.uniform(-100, 100, size=(9, 2))
        vel = rng.normal(0, 1, size=(9, 2))
        c, s = math.cos(0.7), math.sin(0.7)
        rot = np.array([[c, -s], [s, c]])
        base = frame_metrics(pos, vel, 250.0)
        turned = frame_metrics(pos @ rot.T, vel @ rot.T, 250.0)
        assert np.allclose(base, turned, atol=1e-9)

    def test_scaling_behavior(self):
        rng = np.random.default_rng(3)
        pos = rng.uniform(-50, 50, size=(8, 2))
        vel = rng.normal(0, 1, size=(8, 2))
        s = 2.5
        base = frame_metrics(pos, vel, 250.0)
        scaled = frame_metrics(pos * s, vel * s, 250.0)
        assert scaled[0] == pytest.approx(s * base[0])         # speed ~ s
        assert scaled[1] == pytest.approx(s * s * base[1])     # angular momentum ~ s^2
        assert scaled[2] == pytest.approx(s * s * base[2])     # radial variance ~ s^2
        assert scaled[3] == pytest.approx(s * s * base[3])     # scatter ~ s^2
        assert scaled[4] == pytest.approx(s * base[4])         # group rotation ~ s


class TestHandCraftedEmbed:
    def test_window_too_long_rejected(self):
        traj = make_traj(np.zeros((100, 3, 3)))
        with pytest.raises(ContractError):
            hand_crafted_embed(traj, window=160)

    def test_stationary_rollout_vector(self):
        traj = rollout(Controller((0, 0, 0, 0)), SINGLE, seed=7, horizon=200)
        vec = hand_crafted_embed(traj)
        assert vec.mapping_id == "hand"
        speed, ang_mom, rad_var, scatter, rot = vec.values
        assert speed == 0.0 and ang_mom == 0.0 and rot == 0.0
        assert scatter > 0.0

    def test_window_average_matches_manual_loop(self):
        traj = rollout(Controller((0.6, 1.0, 0.4, 0.5)), SINGLE, seed=1, horizon=220)
        vec = hand_crafted_embed(traj, window=160)
        acc = np.zeros(5)
        for t in range(len(traj) - 160, len(traj)):
            pos = traj.frames[t, :, :2]
            v = traj.frames[t, :, :2] - traj.frames[t - 1, :, :2]
            acc += frame_metrics(pos, v, 250.0)
        assert np.allclose(vec.values, acc / 160, atol=1e-12)

    def test_dispersal_scatter_grows(self):
        # reference dispersal controller: late-window scatter above early-window
        c = Controller((0.2, 0.7, -0.5, -0.1))
        wins = 0
        for seed in range(5):
            traj = rollout(c, SINGLE, seed=seed, horizon=1200)
            late = hand_crafted_embed(traj, window=160).values[3]
            early_frames = traj.frames[:161]
            early = Trajectory(frames=early_frames, controller=c, seed=seed,
                               model=SINGLE, width=500.0, height=500.0)
            early_scatter = hand_crafted_embed(early, window=160).values[3]
            wins += late > early_scatter
        assert wins >= 4

    def test_behavior_vector_validation(self):
        with pytest.raises(ContractError):
            BehaviorVector(np.zeros(4), "hand")
        with pytest.raises(ContractError):
            BehaviorVector(np.array([np.inf, 0, 0, 0, 0]), "hand")
