"""Filter-cycle orchestration for both trackers.

One :class:`Tracker` instance owns the immutable models and configuration;
the mutable estimate lives in a :class:`~gpeot.ekf.TrackerState` that is
threaded through :meth:`Tracker.step`.  Instances are independent, so
Monte-Carlo batches run one tracker per task without shared state.

Prediction uses the block structure of the transition (dense kinematic
block, identity or scalar-decay extent block) instead of full-state matrix
products; the result is identical to :func:`gpeot.ekf.time_update` on the
assembled dense transition.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import ekf, motion
from .measurement import (EmptyFrameError, MeasurementFrame, ProjectionSetup,
                          build_frame_pseudo_meas)

KIN_DIM = ekf.KIN_DIM


@dataclass(frozen=True, eq=False)
class Tracker:
    """Configuration bundle for one tracker kind.

    kind: "gpeot" (radial 3D extent) or "gpeot_p" (plane projections).
    models: one extent model, or one per projection plane.
    """

    kind: str
    models: tuple
    process: motion.ProcessNoiseConfig
    filter_cfg: ekf.FilterConfig
    projection: ProjectionSetup | None = None

    def __post_init__(self):
        if self.kind not in ("gpeot", "gpeot_p"):
            raise ValueError(f"unknown tracker kind {self.kind!r}")
        if self.kind == "gpeot" and len(self.models) != 1:
            raise ValueError("radial tracker takes exactly one extent model")
        if self.kind == "gpeot_p":
            if len(self.models) != 3:
                raise ValueError("projection tracker takes one model per plane")
            if self.projection is None:
                object.__setattr__(self, "projection", ProjectionSetup())

    @property
    def extent_sizes(self) -> tuple:
        return tuple(m.grid.count for m in self.models)

    @property
    def dim(self) -> int:
        return KIN_DIM + sum(self.extent_sizes)

    def initial_state(self, c0, v0=(0.0, 0.0, 0.0), q0=(0.0, 0.0, 0.0, 1.0),
                      w0=(0.0, 0.0, 0.0), t0=0.0,
                      kin_prior_var=(0.25, 1.0, 0.25, 0.01)) -> ekf.TrackerState:
        """Prior state; extent prior comes from the GP models.

        kin_prior_var holds per-block variances for (c, v, a, w).
        """
        x = np.zeros(self.dim)
        x[0:3] = np.asarray(c0, dtype=float)
        x[3:6] = np.asarray(v0, dtype=float)
        x[9:12] = np.asarray(w0, dtype=float)
        P = np.zeros((self.dim, self.dim))
        for blk, var in enumerate(kin_prior_var):
            sl = slice(3 * blk, 3 * blk + 3)
            P[sl, sl] = var * np.eye(3)
        at = KIN_DIM
        for m in self.models:
            n = m.grid.count
            x[at:at + n] = m.prior_mean
            P[at:at + n, at:at + n] = m.prior_cov
            at += n
        return ekf.TrackerState(x=x, q_ref=np.asarray(q0, dtype=float).copy(),
                                P=P, t=t0, extent_sizes=self.extent_sizes)

    # -- prediction ---------------------------------------------------------

    def _kinematic_fq(self, state: ekf.TrackerState, dt: float):
        Ft, Qt = motion.translational_fq(dt, self.process.sigma_c)
        Fr, Qr = motion.rotational_fq(state.w, dt, self.process.sigma_alpha,
                                      self.process.alpha_axis_mask)
        F = np.zeros((KIN_DIM, KIN_DIM))
        Q = np.zeros((KIN_DIM, KIN_DIM))
        F[:6, :6], Q[:6, :6] = Ft, Qt
        F[6:, 6:], Q[6:, 6:] = Fr, Qr
        return F, Q

    def transition(self, state: ekf.TrackerState, dt: float) -> motion.TransitionModel:
        """Dense full-state transition (reference path; prediction uses the
        equivalent block-structured update)."""
        Ft, Qt = motion.translational_fq(dt, self.process.sigma_c)
        Fr, Qr = motion.rotational_fq(state.w, dt, self.process.sigma_alpha,
                                      self.process.alpha_axis_mask)
        extent_parts = []
        if self.process.extent_dyn_kind == "max_entropy":
            fsl = slice(KIN_DIM, self.dim)
            Qf = motion.extent_q_max_entropy(state.P[fsl, fsl], self.process.lam)
            extent_parts.append((np.eye(self.dim - KIN_DIM), Qf))
        else:
            for m in self.models:
                extent_parts.append(motion.extent_fq_forgetting(
                    self.process.forgetting_alpha, dt, m.prior_cov))
        return motion.assemble_transition(((Ft, Qt), (Fr, Qr)), extent_parts)

    def predict(self, state: ekf.TrackerState, dt: float) -> ekf.TrackerState:
        """Structured time update; equals time_update on :meth:`transition`."""
        Fk, Qk = self._kinematic_fq(state, dt)
        x = state.x.copy()
        P = state.P.copy()
        x[:KIN_DIM] = Fk @ x[:KIN_DIM]
        kin = slice(0, KIN_DIM)
        ext = slice(KIN_DIM, self.dim)
        Pkk = Fk @ P[kin, kin] @ Fk.T + Qk
        P[kin, kin] = 0.5 * (Pkk + Pkk.T)
        if self.process.extent_dyn_kind == "max_entropy":
            P[kin, ext] = Fk @ P[kin, ext]
            P[ext, kin] = P[kin, ext].T
            P[ext, ext] /= self.process.lam
        else:
            decay = np.exp(-self.process.forgetting_alpha * dt)
            x[ext] *= decay
            P[kin, ext] = decay * (Fk @ P[kin, ext])
            P[ext, kin] = P[kin, ext].T
            Pff = decay ** 2 * P[ext, ext]
            at = 0
            for m in self.models:
                n = m.grid.count
                Pff[at:at + n, at:at + n] += (1.0 - decay ** 2) * m.prior_cov
                at += n
            P[ext, ext] = 0.5 * (Pff + Pff.T)
        return replace(state, x=x, P=P)

    # -- filter cycle -------------------------------------------------------

    def step(self, state: ekf.TrackerState, frame: MeasurementFrame) -> ekf.TrackerState:
        """Predict to the frame time, update against the frame, reset.

        An empty or fully degenerate frame yields the prediction-only
        state; filter failures propagate to the caller.
        """
        dt = frame.t - state.t
        if dt < 0.0:
            raise ValueError("frame is older than the state")
        pred = self.predict(state, dt) if dt > 0.0 else state.copy()
        try:
            pm = build_frame_pseudo_meas(pred, frame, self.kind, self.models,
                                         self.projection, self.filter_cfg)
        except EmptyFrameError:
            return replace(ekf.mekf_reset(pred), t=frame.t)
        upd = ekf.measurement_update(pred, pm, self.filter_cfg)
        ekf.check_covariance(upd.P, self.filter_cfg.psd_tol_factor)
        return replace(ekf.mekf_reset(upd), t=frame.t)
