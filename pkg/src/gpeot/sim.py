"""Scenario simulation: parametric shapes, ground-truth trajectories,
surface point-cloud rendering, and the scenario / measurement file formats.

All randomness flows through counter-based seed sequences keyed by
(master seed, run index, frame index), so runs are reproducible and frames
may be generated in any order.

File formats (also the ingestion path for externally recorded data):

* scenario: JSON with fields {shape, trajectory, sensor: {n_points,
  noise_cov, rate}, seed}
* measurements: CSV with columns t,x,y,z,point_id,frame_id
* ground truth: CSV with columns frame_id,t,cx,cy,cz,vx,vy,vz,
  q1,q2,q3,q4,wx,wy,wz
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import quat_exp, quat_normalize, quat_product, rot_matrix
from .measurement import MeasurementFrame

SHAPE_KINDS = ("cube", "ellipsoid", "cone")


@dataclass(frozen=True)
class ShapeSpec:
    """Parametric star-convex solid, centered at its centroid.

    cube: params = (edge,); ellipsoid: params = (a, b, c) semi-axes;
    cone: params = (base_radius, height), base at z = -height/4.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if any(p <= 0.0 for p in self.params):
            raise ValueError("shape dimensions must be positive")
        n = {"cube": 1, "ellipsoid": 3, "cone": 2}[self.kind]
        if len(self.params) != n:
            raise ValueError(f"{self.kind} takes {n} parameter(s)")

    def max_radius(self) -> float:
        """Radius of the smallest origin-centered ball containing the shape."""
        if self.kind == "cube":
            return self.params[0] * np.sqrt(3.0) / 2.0
        if self.kind == "ellipsoid":
            return max(self.params)
        r, h = self.params
        return max(np.hypot(r, h / 4.0), 3.0 * h / 4.0)

    def diameter(self) -> float:
        return 2.0 * self.max_radius()

    def volume(self) -> float:
        if self.kind == "cube":
            return self.params[0] ** 3
        if self.kind == "ellipsoid":
            a, b, c = self.params
            return 4.0 / 3.0 * np.pi * a * b * c
        r, h = self.params
        return np.pi * r * r * h / 3.0

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized inside test in the shape's local frame."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "cube":
            half = self.params[0] / 2.0
            return np.all(np.abs(pts) <= half, axis=1)
        if self.kind == "ellipsoid":
            a, b, c = self.params
            return ((pts[:, 0] / a) ** 2 + (pts[:, 1] / b) ** 2
                    + (pts[:, 2] / c) ** 2) <= 1.0
        r, h = self.params
        z0 = -h / 4.0
        rho = np.hypot(pts[:, 0], pts[:, 1])
        z = pts[:, 2]
        frac = (z - z0) / h
        return (frac >= 0.0) & (frac <= 1.0) & (rho <= r * (1.0 - frac))


def sample_surface(shape: ShapeSpec, n: int, rng) -> np.ndarray:
    """n points uniform by surface area, in the shape's local frame."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    if n == 0:
        return np.zeros((0, 3))
    if shape.kind == "cube":
        return _sample_cube(shape.params[0], n, rng)
    if shape.kind == "ellipsoid":
        return _sample_ellipsoid(shape.params, n, rng)
    return _sample_cone(shape.params, n, rng)


def _sample_cube(edge, n, rng):
    half = edge / 2.0
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-half, half, size=(n, 2))
    out = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, half, -half)
    for ax in range(3):
        mask = axis == ax
        others = [a for a in range(3) if a != ax]
        out[mask, ax] = sign[mask]
        out[np.ix_(mask, others)] = uv[mask]
    return out


def _sample_ellipsoid(semi_axes, n, rng):
    a, b, c = semi_axes
    scale = np.array([b * c, a * c, a * b])
    gmax = scale.max()
    out = np.empty((n, 3))
    got = 0
    while got < n:
        m = max(2 * (n - got), 64)
        u = rng.standard_normal((m, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        # surface-element weight of the unit-sphere parametrization
        g = np.linalg.norm(u * scale, axis=1)
        acc = u[rng.uniform(0.0, gmax, size=m) < g]
        take = min(acc.shape[0], n - got)
        out[got:got + take] = acc[:take] * np.array([a, b, c])
        got += take
    return out


def _sample_cone(params, n, rng):
    r, h = params
    z0 = -h / 4.0
    lateral_area = np.pi * r * np.hypot(r, h)
    base_area = np.pi * r * r
    on_base = rng.uniform(0.0, 1.0, size=n) < base_area / (base_area + lateral_area)
    ang = rng.uniform(0.0, 2.0 * np.pi, size=n)
    out = np.empty((n, 3))
    nb = int(on_base.sum())
    rho = r * np.sqrt(rng.uniform(0.0, 1.0, size=nb))
    out[on_base] = np.stack([rho * np.cos(ang[on_base]),
                             rho * np.sin(ang[on_base]),
                             np.full(nb, z0)], axis=1)
    # lateral: area element is proportional to the local radius r*(1-t)
    t = 1.0 - np.sqrt(rng.uniform(0.0, 1.0, size=n - nb))
    rho = r * (1.0 - t)
    side = ~on_base
    out[side] = np.stack([rho * np.cos(ang[side]),
                          rho * np.sin(ang[side]),
                          z0 + t * h], axis=1)
    return out


@dataclass(frozen=True)
class TrajectorySpec:
    """Ground-truth motion profile.

    linear: straight line along +x at `speed`, identity attitude.
    complex_maneuver: horizontal circular arc of radius `turn_radius` at
    `speed`, with a constant yaw rate and a sinusoidal roll rate (both
    world-frame, rad/s).
    """

    kind: str = "linear"
    speed: float = 10.0
    duration: float = 10.0
    rate: float = 10.0
    turn_radius: float = 10.0
    yaw_rate: float = 0.3
    roll_amplitude: float = 0.2
    roll_frequency: float = 0.05

    def __post_init__(self):
        if self.kind not in ("linear", "complex_maneuver"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.rate <= 0.0 or self.duration <= 0.0:
            raise ValueError("rate and duration must be positive")

    @property
    def period(self) -> float:
        return 1.0 / self.rate

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.rate))


@dataclass(eq=False)
class GroundTruth:
    """Per-frame true pose and rates at t_k = (k + 1) * T."""

    t: np.ndarray
    c: np.ndarray
    v: np.ndarray
    q: np.ndarray
    w: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.t.shape[0]


def position_velocity(traj: TrajectorySpec, t):
    """True center position and velocity of the motion profile at time t."""
    t = np.asarray(t, dtype=float)
    if traj.kind == "linear":
        c = np.stack([traj.speed * t, np.zeros_like(t), np.zeros_like(t)], axis=-1)
        v = np.broadcast_to(np.array([traj.speed, 0.0, 0.0]), c.shape).copy()
        return c, v
    R = traj.turn_radius
    phase = traj.speed * t / R
    c = np.stack([R * np.sin(phase), R * (1.0 - np.cos(phase)), np.zeros_like(t)], axis=-1)
    v = traj.speed * np.stack([np.cos(phase), np.sin(phase), np.zeros_like(t)], axis=-1)
    return c, v


def angular_rate_profile(traj: TrajectorySpec, t):
    """World-frame angular rate at time(s) t."""
    t = np.asarray(t, dtype=float)
    if traj.kind == "linear":
        return np.zeros(t.shape + (3,))
    wx = traj.roll_amplitude * np.sin(2.0 * np.pi * traj.roll_frequency * t)
    return np.stack([wx, np.zeros_like(t), np.full_like(t, traj.yaw_rate)], axis=-1)


def generate_truth(traj: TrajectorySpec) -> GroundTruth:
    """Integrate the motion profile at the frame times.

    Attitude integrates the rate profile with one exact quaternion
    increment per step (midpoint-sampled rate) and renormalization.
    """
    T = traj.period
    n = traj.n_frames
    tk = T * np.arange(1, n + 1)
    c, v = position_velocity(traj, tk)
    q = np.empty((n, 4))
    qk = np.array([0.0, 0.0, 0.0, 1.0])
    for k in range(n):
        t_prev = tk[k] - T
        w_mid = angular_rate_profile(traj, t_prev + 0.5 * T)
        qk = quat_normalize(quat_product(quat_exp(w_mid * T), qk))
        q[k] = qk
    return GroundTruth(t=tk, c=c, v=v, q=q, w=angular_rate_profile(traj, tk))


def render_frame(c, q, shape: ShapeSpec, n_points: int, noise_cov, rng,
                 t: float = 0.0) -> MeasurementFrame:
    """Sample surface points in the local frame, pose them, add noise."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    noise_cov = np.asarray(noise_cov, dtype=float)
    local = sample_surface(shape, n_points, rng)
    pts = np.asarray(c, dtype=float) + local @ rot_matrix(q).T
    if n_points and noise_cov.any():
        pts = pts + rng.standard_normal((n_points, 3)) @ np.linalg.cholesky(noise_cov).T
    return MeasurementFrame(t=t, points=pts, noise_cov=noise_cov)


@dataclass(frozen=True)
class SensorSpec:
    n_points: int = 20
    noise_cov: tuple = ((0.01, 0.0, 0.0), (0.0, 0.01, 0.0), (0.0, 0.0, 0.01))

    def cov(self) -> np.ndarray:
        return np.asarray(self.noise_cov, dtype=float)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one simulated scenario."""

    shape: ShapeSpec = ShapeSpec("cube", (3.0,))
    trajectory: TrajectorySpec = TrajectorySpec()
    sensor: SensorSpec = SensorSpec()
    seed: int = 0


def frame_rng(seed: int, run: int, frame: int):
    """Independent, order-free random stream for one (run, frame) pair."""
    return np.random.default_rng([seed, run, frame])


def simulate_run(scenario: ScenarioConfig, truth: GroundTruth, run: int):
    """Measurement frames of one Monte-Carlo run."""
    cov = scenario.sensor.cov()
    frames = []
    for k in range(truth.n_frames):
        rng = frame_rng(scenario.seed, run, k)
        frames.append(render_frame(truth.c[k], truth.q[k], scenario.shape,
                                   scenario.sensor.n_points, cov, rng, t=truth.t[k]))
    return frames


# ---------------------------------------------------------------------------
# serialization


def scenario_to_dict(s: ScenarioConfig) -> dict:
    shape = {"kind": s.shape.kind}
    if s.shape.kind == "cube":
        shape["edge"] = s.shape.params[0]
    elif s.shape.kind == "ellipsoid":
        shape["semi_axes"] = list(s.shape.params)
    else:
        shape["base_radius"], shape["height"] = s.shape.params
    traj = {
        "kind": s.trajectory.kind,
        "speed": s.trajectory.speed,
        "duration": s.trajectory.duration,
    }
    if s.trajectory.kind == "complex_maneuver":
        traj.update(turn_radius=s.trajectory.turn_radius,
                    yaw_rate=s.trajectory.yaw_rate,
                    roll_amplitude=s.trajectory.roll_amplitude,
                    roll_frequency=s.trajectory.roll_frequency)
    return {
        "shape": shape,
        "trajectory": traj,
        "sensor": {
            "n_points": s.sensor.n_points,
            "noise_cov": [list(row) for row in s.sensor.noise_cov],
            "rate": s.trajectory.rate,
        },
        "seed": s.seed,
    }


def scenario_from_dict(d: dict) -> ScenarioConfig:
    sh = d["shape"]
    if sh["kind"] == "cube":
        shape = ShapeSpec("cube", (sh["edge"],))
    elif sh["kind"] == "ellipsoid":
        shape = ShapeSpec("ellipsoid", tuple(sh["semi_axes"]))
    else:
        shape = ShapeSpec("cone", (sh["base_radius"], sh["height"]))
    tr = d["trajectory"]
    sensor = d.get("sensor", {})
    traj = TrajectorySpec(
        kind=tr["kind"],
        speed=tr["speed"],
        duration=tr["duration"],
        rate=sensor.get("rate", tr.get("rate", 10.0)),
        turn_radius=tr.get("turn_radius", 10.0),
        yaw_rate=tr.get("yaw_rate", 0.3),
        roll_amplitude=tr.get("roll_amplitude", 0.2),
        roll_frequency=tr.get("roll_frequency", 0.05),
    )
    spec = SensorSpec(
        n_points=int(sensor.get("n_points", 20)),
        noise_cov=tuple(tuple(row) for row in sensor.get(
            "noise_cov", SensorSpec().noise_cov)),
    )
    return ScenarioConfig(shape=shape, trajectory=traj, sensor=spec,
                          seed=int(d.get("seed", 0)))


def save_scenario(s: ScenarioConfig, path):
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")


def load_scenario(path) -> ScenarioConfig:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def write_measurements_csv(frames, path):
    """CSV with columns t,x,y,z,point_id,frame_id (ingestion format)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "x", "y", "z", "point_id", "frame_id"])
        for k, frame in enumerate(frames):
            for l, p in enumerate(frame.points):
                wr.writerow([repr(float(frame.t)), repr(float(p[0])),
                             repr(float(p[1])), repr(float(p[2])), l, k])


def read_measurements_csv(path, noise_cov) -> list:
    """Measurement frames grouped by frame_id, ordered by point_id."""
    noise_cov = np.asarray(noise_cov, dtype=float)
    rows = {}
    times = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            k = int(rec["frame_id"])
            rows.setdefault(k, []).append(
                (int(rec["point_id"]), [float(rec["x"]), float(rec["y"]), float(rec["z"])]))
            times[k] = float(rec["t"])
    frames = []
    for k in sorted(rows):
        pts = [p for _, p in sorted(rows[k])]
        frames.append(MeasurementFrame(t=times[k], points=np.array(pts), noise_cov=noise_cov))
    return frames


def write_truth_csv(truth: GroundTruth, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["frame_id", "t", "cx", "cy", "cz", "vx", "vy", "vz",
                     "q1", "q2", "q3", "q4", "wx", "wy", "wz"])
        for k in range(truth.n_frames):
            wr.writerow([k, repr(float(truth.t[k]))]
                        + [repr(float(x)) for x in truth.c[k]]
                        + [repr(float(x)) for x in truth.v[k]]
                        + [repr(float(x)) for x in truth.q[k]]
                        + [repr(float(x)) for x in truth.w[k]])


def read_truth_csv(path) -> GroundTruth:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    get = lambda *names: np.stack([data[n] for n in names], axis=1)
    return GroundTruth(t=np.asarray(data["t"], dtype=float),
                       c=get("cx", "cy", "cz"),
                       v=get("vx", "vy", "vz"),
                       q=get("q1", "q2", "q3", "q4"),
                       w=get("wx", "wy", "wz"))
