"""End-to-end pipeline: build a tracker from a run configuration, process
measurement sequences, and score the results.  The CLI wraps these
functions with file IO; tests call them directly.
"""

import logging
from contextlib import nullcontext
from dataclasses import dataclass, replace
from functools import lru_cache
from multiprocessing import get_context

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    def threadpool_limits(limits=None):
        return nullcontext()

from . import evaluate as ev
from .config import RunConfig
from .ekf import FilterUpdateError, JacobianError, mekf_reset
from .geometry import QUAT_IDENTITY
from .gp import GpHyperparams, build_extent_model, make_circle_grid, make_sphere_grid
from .measurement import ProjectionSetup
from .sim import (GroundTruth, TrajectorySpec, angular_rate_profile,
                  generate_truth, position_velocity, simulate_run)
from .tracker import Tracker

log = logging.getLogger(__name__)


@lru_cache(maxsize=8)
def _cached_sphere_model(level: int, hyper: GpHyperparams):
    return build_extent_model(make_sphere_grid(level), hyper, "geodesic3d")


@lru_cache(maxsize=8)
def _cached_circle_model(n: int, hyper: GpHyperparams, kind: str):
    return build_extent_model(make_circle_grid(n), hyper, kind)


def build_tracker(cfg: RunConfig) -> Tracker:
    if cfg.tracker == "gpeot":
        models = (_cached_sphere_model(cfg.sphere_level, cfg.gp),)
        projection = None
    else:
        models = tuple(_cached_circle_model(cfg.circle_points, cfg.gp, kind)
                       for kind in cfg.projection.kernel_kinds)
        projection = ProjectionSetup(kernel_kinds=cfg.projection.kernel_kinds,
                                     scale_mean=cfg.projection.scale_mean,
                                     scale_var=cfg.projection.scale_var)
    return Tracker(kind=cfg.tracker, models=models, process=cfg.process,
                   filter_cfg=cfg.filter_cfg, projection=projection)


def truth_at_zero(traj: TrajectorySpec):
    """True initial kinematics at t = 0 (one step before the first frame)."""
    c, v = position_velocity(traj, 0.0)
    return c, v, QUAT_IDENTITY.copy(), angular_rate_profile(traj, 0.0)


def initial_state(cfg: RunConfig, tracker: Tracker, frames):
    """Prior mean: first-frame centroid for the center; velocity and
    attitude from the scenario when configured, zeros otherwise."""
    first = next((f for f in frames if f.points.shape[0] > 0), None)
    c0 = first.points.mean(axis=0) if first is not None else np.zeros(3)
    if cfg.init.from_truth:
        _, v0, q0, _ = truth_at_zero(cfg.scenario.trajectory)
    else:
        v0, q0 = np.zeros(3), QUAT_IDENTITY.copy()
    # the angular-rate prior mean is always zero; rates are estimated
    return tracker.initial_state(c0, v0, q0, np.zeros(3), t0=0.0,
                                 kin_prior_var=cfg.init.kin_prior_var)


@dataclass(eq=False)
class RunResult:
    """Per-frame posterior estimates of one Monte-Carlo run."""

    run: int
    t: np.ndarray
    c: np.ndarray
    v: np.ndarray
    q: np.ndarray
    w: np.ndarray
    f: np.ndarray
    f_std: np.ndarray
    skipped: list

    @property
    def n_frames(self) -> int:
        return self.t.shape[0]


def track_frames(tracker: Tracker, frames, state0, run: int = 0) -> RunResult:
    """Run the filter over a frame sequence.

    Frames on which the update fails are logged and skipped (the state
    keeps the prediction for that frame), matching the degenerate-frame
    behavior.
    """
    n = len(frames)
    ext = sum(tracker.extent_sizes)
    res = RunResult(run=run, t=np.zeros(n), c=np.zeros((n, 3)), v=np.zeros((n, 3)),
                    q=np.zeros((n, 4)), w=np.zeros((n, 3)), f=np.zeros((n, ext)),
                    f_std=np.zeros((n, ext)), skipped=[])
    state = state0
    # single-threaded BLAS: the matrices are small enough that thread
    # synchronization dominates; parallelism belongs at the run level
    with threadpool_limits(limits=1):
        for k, frame in enumerate(frames):
            try:
                state = tracker.step(state, frame)
            except (FilterUpdateError, JacobianError) as exc:
                log.warning("run %d frame %d: update skipped (%s)", run, k, exc)
                pred = (tracker.predict(state, frame.t - state.t)
                        if frame.t > state.t else state.copy())
                state = replace(mekf_reset(pred), t=frame.t)
                res.skipped.append(k)
            res.t[k] = state.t
            res.c[k] = state.c
            res.v[k] = state.v
            res.q[k] = state.q_ref
            res.w[k] = state.w
            res.f[k] = state.f
            res.f_std[k] = state.extent_std()
    return res


def run_single(cfg: RunConfig, run: int, truth: GroundTruth = None,
               tracker: Tracker = None) -> RunResult:
    if truth is None:
        truth = generate_truth(cfg.scenario.trajectory)
    if tracker is None:
        tracker = build_tracker(cfg)
    scenario = replace(cfg.scenario, seed=cfg.seed)
    frames = simulate_run(scenario, truth, run)
    state0 = initial_state(cfg, tracker, frames)
    return track_frames(tracker, frames, state0, run=run)


def _run_single_star(args):
    cfg, run = args
    return run_single(cfg, run)


def run_batch(cfg: RunConfig, jobs: int = 1):
    """All Monte-Carlo runs of a configuration; optionally in parallel.

    Results are identical for any job count: every run draws from its own
    (seed, run, frame) stream.
    """
    truth = generate_truth(cfg.scenario.trajectory)
    if jobs <= 1:
        tracker = build_tracker(cfg)
        results = [run_single(cfg, r, truth, tracker) for r in range(cfg.mc_runs)]
    else:
        with get_context("spawn").Pool(jobs) as pool:
            results = pool.map(_run_single_star, [(cfg, r) for r in range(cfg.mc_runs)])
    return truth, results


# ---------------------------------------------------------------------------
# evaluation


@dataclass(eq=False)
class EvaluationReport:
    """Per-frame metrics of one run; IOU is NaN on frames not evaluated."""

    run: int
    t: np.ndarray
    iou: np.ndarray
    vel_err: np.ndarray
    orient_err: np.ndarray
    rate_err: np.ndarray
    velocity_rmse: float
    rate_rmse: float

    @property
    def iou_mean(self) -> float:
        return float(np.nanmean(self.iou))

    def steady_iou(self, n_frames: int) -> float:
        tail = self.iou[~np.isnan(self.iou)]
        if tail.size == 0:
            return float("nan")
        return float(tail[-n_frames:].mean())


def estimate_solid(cfg: RunConfig, tracker: Tracker, result: RunResult, k: int):
    """The estimated solid at frame k, posed in the global frame."""
    pose_c, pose_q = result.c[k], result.q[k]
    if cfg.tracker == "gpeot":
        mesh = ev.radial_to_mesh(result.f[k], tracker.models[0].grid, (pose_c, pose_q))
        return ev.MeshSolid(mesh)
    sizes = tracker.extent_sizes
    offs = np.concatenate([[0], np.cumsum(sizes)])
    contours = [result.f[k][offs[j]:offs[j + 1]] for j in range(3)]
    grids = [m.grid for m in tracker.models]
    return ev.CarvedSolid(contours, grids, tracker.projection.planes, pose_c, pose_q)


def evaluate_run(cfg: RunConfig, truth: GroundTruth, result: RunResult,
                 tracker: Tracker = None, iou_frames=None) -> EvaluationReport:
    """Score one run against the ground truth.

    ``iou_frames`` selects the frames whose IOU is computed (default: every
    ``evaluation.frame_stride``-th frame); velocity and orientation errors
    are always computed on all frames.
    """
    if tracker is None:
        tracker = build_tracker(cfg)
    n = result.n_frames
    if iou_frames is None:
        iou_frames = range(0, n, cfg.evaluation.frame_stride)
    vel_err = np.linalg.norm(result.v - truth.v, axis=1)
    angles, _ = ev.orientation_errors(result.q, truth.q)
    rate_err = np.linalg.norm(result.w - truth.w, axis=1)
    cell = cfg.scenario.shape.diameter() / cfg.evaluation.cell_div
    iou_vals = np.full(n, np.nan)
    for k in iou_frames:
        true_solid = ev.PosedShape(cfg.scenario.shape, truth.c[k], truth.q[k])
        iou_vals[k] = ev.iou(true_solid, estimate_solid(cfg, tracker, result, k), cell)
    return EvaluationReport(
        run=result.run, t=result.t.copy(), iou=iou_vals, vel_err=vel_err,
        orient_err=angles, rate_err=rate_err,
        velocity_rmse=ev.velocity_rmse(result.v, truth.v),
        rate_rmse=float(np.sqrt(np.mean(rate_err ** 2))),
    )
