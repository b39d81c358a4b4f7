"""Shape sampling statistics, ground-truth trajectories, frame rendering
and the scenario / measurement file formats."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gpeot.geometry import QUAT_IDENTITY, quat_exp, rot_matrix
from gpeot.sim import (ScenarioConfig, SensorSpec, ShapeSpec,
                       TrajectorySpec, angular_rate_profile, frame_rng,
                       generate_truth, load_scenario, read_measurements_csv,
                       read_truth_csv, render_frame, sample_surface,
                       save_scenario, simulate_run, write_measurements_csv,
                       write_truth_csv)

CUBE = ShapeSpec("cube", (3.0,))
ELLIPSOID = ShapeSpec("ellipsoid", (2.5, 1.0, 1.0))
CONE = ShapeSpec("cone", (1.5, 4.0))


class TestShapes:
    def test_validation(self):
        with pytest.raises(ValueError):
            ShapeSpec("cube", (0.0,))
        with pytest.raises(ValueError):
            ShapeSpec("ellipsoid", (1.0, 2.0))
        with pytest.raises(ValueError):
            ShapeSpec("pyramid", (1.0,))

    def test_zero_samples(self):
        assert sample_surface(CUBE, 0, 0).shape == (0, 3)

    def test_cube_samples_on_boundary(self):
        pts = sample_surface(CUBE, 5000, 1)
        assert_allclose(np.abs(pts).max(axis=1), 1.5, atol=1e-12)
        assert np.all(np.abs(pts) <= 1.5 + 1e-12)

    def test_cube_face_frequencies_uniform(self):
        # chi-square over the 6 faces at the 99% level (5 dof: 15.09)
        pts = sample_surface(CUBE, 60000, 2)
        on_face = np.isclose(np.abs(pts), 1.5)
        axis = on_face.argmax(axis=1)
        sign = np.sign(pts[np.arange(len(pts)), axis])
        face = axis * 2 + (sign < 0)
        counts = np.bincount(face, minlength=6)
        expected = len(pts) / 6.0
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert chi2 < 15.09, f"chi2 = {chi2:.2f}, counts {counts}"

    def test_ellipsoid_samples_on_surface(self):
        pts = sample_surface(ELLIPSOID, 4000, 3)
        a, b, c = ELLIPSOID.params
        val = (pts[:, 0] / a) ** 2 + (pts[:, 1] / b) ** 2 + (pts[:, 2] / c) ** 2
        assert_allclose(val, 1.0, atol=1e-10)

    def test_sphere_octants_uniform(self):
        # with equal semi-axes the sampler must be uniform on the sphere:
        # chi-square over octants (7 dof: 18.48 at 99%)
        sphere = ShapeSpec("ellipsoid", (1.0, 1.0, 1.0))
        pts = sample_surface(sphere, 40000, 4)
        octant = ((pts[:, 0] > 0).astype(int) * 4 + (pts[:, 1] > 0) * 2
                  + (pts[:, 2] > 0))
        counts = np.bincount(octant, minlength=8)
        expected = len(pts) / 8.0
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert chi2 < 18.48

    def test_cone_samples_on_surface(self):
        pts = sample_surface(CONE, 4000, 5)
        r, h = CONE.params
        z0 = -h / 4.0
        rho = np.hypot(pts[:, 0], pts[:, 1])
        on_base = np.isclose(pts[:, 2], z0, atol=1e-12) & (rho <= r + 1e-12)
        frac = (pts[:, 2] - z0) / h
        on_side = np.abs(rho - r * (1.0 - frac)) < 1e-10
        assert np.all(on_base | on_side)
        # base fraction close to its area share
        base_share = r / (r + np.hypot(r, h))
        assert abs(on_base.mean() - base_share) < 0.03

    def test_contains_matches_surface(self):
        for shape in (CUBE, ELLIPSOID, CONE):
            pts = sample_surface(shape, 500, 6)
            assert np.all(shape.contains(pts * 0.999999) | shape.contains(pts))
            assert not np.any(shape.contains(pts * 1.5))

    def test_volumes(self):
        assert_allclose(CUBE.volume(), 27.0)
        assert_allclose(CONE.volume(), np.pi * 1.5 ** 2 * 4.0 / 3.0)


class TestTrajectories:
    def test_linear_spacing(self):
        truth = generate_truth(TrajectorySpec(kind="linear", speed=10.0,
                                              duration=10.0, rate=10.0))
        steps = np.linalg.norm(np.diff(truth.c, axis=0), axis=1)
        assert_allclose(steps, 1.0, atol=1e-12)
        assert_allclose(truth.q, np.tile(QUAT_IDENTITY, (100, 1)), atol=1e-12)

    def test_maneuver_constant_speed(self):
        traj = TrajectorySpec(kind="complex_maneuver", speed=0.5, duration=10.0)
        truth = generate_truth(traj)
        assert_allclose(np.linalg.norm(truth.v, axis=1), 0.5, atol=1e-9)

    def test_quaternion_norms(self):
        traj = TrajectorySpec(kind="complex_maneuver", speed=0.5, duration=5.0)
        truth = generate_truth(traj)
        assert_allclose(np.linalg.norm(truth.q, axis=1), 1.0, atol=1e-12)

    def test_attitude_integrates_rate_profile(self):
        # constant yaw rate only: the quaternion at t must equal the exact
        # exponential of the accumulated rotation
        traj = TrajectorySpec(kind="complex_maneuver", speed=0.5, duration=5.0,
                              yaw_rate=0.3, roll_amplitude=0.0)
        truth = generate_truth(traj)
        for k in (0, 24, 49):
            expect = quat_exp(np.array([0.0, 0.0, 0.3 * truth.t[k]]))
            align = np.sign(expect @ truth.q[k])
            assert_allclose(truth.q[k] * align, expect, atol=1e-9)

    def test_rate_profile_shape(self):
        traj = TrajectorySpec(kind="complex_maneuver", speed=0.5, duration=5.0)
        w = angular_rate_profile(traj, np.array([0.0, 1.0]))
        assert w.shape == (2, 3)
        assert_allclose(w[:, 2], traj.yaw_rate)


class TestRenderFrame:
    def test_noiseless_points_on_surface(self):
        c = np.array([3.0, -1.0, 2.0])
        q = quat_exp(np.array([0.2, -0.1, 0.4]))
        frame = render_frame(c, q, CUBE, 50, np.zeros((3, 3)), 7, t=1.0)
        local = (frame.points - c) @ rot_matrix(q)
        assert_allclose(np.abs(local).max(axis=1), 1.5, atol=1e-10)

    def test_noise_statistics(self):
        frame = render_frame(np.zeros(3), QUAT_IDENTITY, CUBE, 10000,
                             0.1 ** 2 * np.eye(3), 8)
        clean = render_frame(np.zeros(3), QUAT_IDENTITY, CUBE, 10000,
                             np.zeros((3, 3)), 8)
        noise = frame.points - clean.points
        std = noise.std(axis=0)
        assert np.all(std > 0.097) and np.all(std < 0.103)

    def test_defaults_match_benchmark_setup(self):
        scen = ScenarioConfig()
        assert scen.sensor.n_points == 20
        assert scen.trajectory.rate == 10.0
        assert_allclose(scen.trajectory.period, 0.1)
        assert_allclose(scen.sensor.cov(), 0.01 * np.eye(3))
        assert scen.shape.kind == "cube" and scen.shape.params == (3.0,)

    def test_deterministic_given_seed(self):
        scen = ScenarioConfig(seed=5)
        truth = generate_truth(scen.trajectory)
        f1 = simulate_run(scen, truth, run=2)
        f2 = simulate_run(scen, truth, run=2)
        for a, b in zip(f1, f2):
            assert np.array_equal(a.points, b.points)

    def test_runs_and_frames_independent(self):
        r1 = frame_rng(1, 0, 0).standard_normal(4)
        r2 = frame_rng(1, 0, 1).standard_normal(4)
        r3 = frame_rng(1, 1, 0).standard_normal(4)
        assert not np.allclose(r1, r2)
        assert not np.allclose(r1, r3)


class TestSerialization:
    def test_scenario_roundtrip(self, tmp_path):
        scen = ScenarioConfig(
            shape=CONE,
            trajectory=TrajectorySpec(kind="complex_maneuver", speed=0.5,
                                      duration=8.0, rate=5.0, yaw_rate=0.25),
            sensor=SensorSpec(n_points=7),
            seed=42)
        path = tmp_path / "scenario.json"
        save_scenario(scen, path)
        back = load_scenario(path)
        assert back == scen

    def test_measurements_roundtrip(self, tmp_path):
        scen = ScenarioConfig(seed=3, trajectory=TrajectorySpec(duration=0.5))
        truth = generate_truth(scen.trajectory)
        frames = simulate_run(scen, truth, 0)
        path = tmp_path / "m.csv"
        write_measurements_csv(frames, path)
        back = read_measurements_csv(path, scen.sensor.cov())
        assert len(back) == len(frames)
        for a, b in zip(frames, back):
            assert np.array_equal(a.points, b.points)
            assert a.t == b.t

    def test_measurement_csv_columns(self, tmp_path):
        scen = ScenarioConfig(seed=3, trajectory=TrajectorySpec(duration=0.2))
        truth = generate_truth(scen.trajectory)
        frames = simulate_run(scen, truth, 0)
        path = tmp_path / "m.csv"
        write_measurements_csv(frames, path)
        header = path.read_text().splitlines()[0]
        assert header == "t,x,y,z,point_id,frame_id"

    def test_truth_roundtrip(self, tmp_path):
        truth = generate_truth(TrajectorySpec(kind="complex_maneuver",
                                              speed=0.5, duration=1.0))
        path = tmp_path / "truth.csv"
        write_truth_csv(truth, path)
        back = read_truth_csv(path)
        assert np.array_equal(back.c, truth.c)
        assert np.array_equal(back.q, truth.q)
        assert np.array_equal(back.w, truth.w)

    def test_byte_identical_files_for_same_seed(self, tmp_path):
        scen = ScenarioConfig(seed=11, trajectory=TrajectorySpec(duration=0.5))
        truth = generate_truth(scen.trajectory)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_measurements_csv(simulate_run(scen, truth, 0), p1)
        write_measurements_csv(simulate_run(scen, truth, 0), p2)
        assert p1.read_bytes() == p2.read_bytes()
