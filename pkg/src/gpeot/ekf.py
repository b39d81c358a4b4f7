"""Extended Kalman filter primitives over the joint kinematics + extent
state, with pseudo-measurements (zero-vector observations), numerical
Jacobians, and the multiplicative reset of the reference quaternion.

State vector layout is always (c, v, a, w, extent segments...), where ``a``
is the Rodrigues orientation deviation from the reference quaternion.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .geometry import delta_quat, quat_product

KIN_DIM = 12
_SL_C = slice(0, 3)
_SL_V = slice(3, 6)
_SL_A = slice(6, 9)
_SL_W = slice(9, 12)


class FilterUpdateError(RuntimeError):
    """Measurement update could not be completed (e.g. singular innovation)."""


class JacobianError(RuntimeError):
    """Residual function returned non-finite values during differentiation."""


@dataclass(frozen=True)
class FilterConfig:
    """Numerical settings of the filter.

    jacobian_rel_step / jacobian_abs_step: central-difference step is
    ``max(rel * |x_i|, abs)`` per component.
    update_mode: "batch" stacks all points of a frame into one update;
    "sequential" applies the per-point blocks one after another (same H).
    """

    jacobian_rel_step: float = 1e-6
    jacobian_abs_step: float = 1e-8
    max_condition_warn: float = 1e12
    update_mode: str = "batch"
    psd_tol_factor: float = 1e-6

    def __post_init__(self):
        if self.jacobian_rel_step <= 0.0 or self.jacobian_abs_step <= 0.0:
            raise ValueError("jacobian steps must be positive")
        if self.update_mode not in ("batch", "sequential"):
            raise ValueError(f"unknown update mode {self.update_mode!r}")


@dataclass(eq=False)
class TrackerState:
    """Joint filter state: mean vector, reference quaternion, covariance.

    ``extent_sizes`` records how the tail of the mean vector splits into
    extent segments (one for the radial tracker, three for the projection
    tracker).
    """

    x: np.ndarray
    q_ref: np.ndarray
    P: np.ndarray
    t: float
    extent_sizes: tuple = (0,)

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    @property
    def c(self) -> np.ndarray:
        return self.x[_SL_C]

    @property
    def v(self) -> np.ndarray:
        return self.x[_SL_V]

    @property
    def a(self) -> np.ndarray:
        return self.x[_SL_A]

    @property
    def w(self) -> np.ndarray:
        return self.x[_SL_W]

    @property
    def f(self) -> np.ndarray:
        """Concatenated extent coefficients."""
        return self.x[KIN_DIM:]

    def extent_slice(self, j: int) -> slice:
        start = KIN_DIM + sum(self.extent_sizes[:j])
        return slice(start, start + self.extent_sizes[j])

    def extent(self, j: int) -> np.ndarray:
        return self.x[self.extent_slice(j)]

    def extent_std(self) -> np.ndarray:
        """Posterior standard deviation of the extent coefficients."""
        return np.sqrt(np.maximum(np.diag(self.P)[KIN_DIM:], 0.0))

    def copy(self) -> "TrackerState":
        return replace(self, x=self.x.copy(), q_ref=self.q_ref.copy(), P=self.P.copy())


@dataclass(eq=False)
class PseudoMeasurement:
    """Stacked implicit residual with its Jacobian and block noise.

    ``blocks`` lists (offset, size) of the per-point rows, so sequential
    updates and block-diagonal noise handling need no bookkeeping elsewhere.
    """

    h: np.ndarray
    H_jac: np.ndarray
    R: np.ndarray
    blocks: list = field(default_factory=list)


def numerical_jacobian(h, x: np.ndarray, cfg: FilterConfig) -> np.ndarray:
    """Central-difference Jacobian of ``h`` at ``x``.

    Raises :class:`JacobianError` if any evaluation is non-finite.
    """
    x = np.asarray(x, dtype=float)
    h0 = np.asarray(h(x), dtype=float)
    if not np.all(np.isfinite(h0)):
        raise JacobianError("residual non-finite at the evaluation point")
    J = np.empty((h0.shape[0], x.shape[0]))
    for i in range(x.shape[0]):
        step = max(cfg.jacobian_rel_step * abs(x[i]), cfg.jacobian_abs_step)
        xp = x.copy()
        xp[i] += step
        hp = np.asarray(h(xp), dtype=float)
        xm = x.copy()
        xm[i] -= step
        hm = np.asarray(h(xm), dtype=float)
        if not (np.all(np.isfinite(hp)) and np.all(np.isfinite(hm))):
            raise JacobianError(f"residual non-finite while perturbing component {i}")
        J[:, i] = (hp - hm) / (2.0 * step)
    return J


def time_update(state: TrackerState, transition) -> TrackerState:
    """Standard prediction ``x <- F x``, ``P <- F P F^T + Q`` (symmetrized)."""
    F, Q = transition.F, transition.Q
    if F.shape[0] != state.dim:
        raise ValueError("transition dimension does not match the state")
    x = F @ state.x
    P = F @ state.P @ F.T + Q
    return replace(state, x=x, P=0.5 * (P + P.T))


def _solve_update(x, P, h, H, R):
    HP = H @ P
    S = HP @ H.T + R
    S = 0.5 * (S + S.T)
    try:
        chol = cho_factor(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FilterUpdateError(f"innovation covariance not factorizable: {exc}") from exc
    d = np.diag(chol[0])
    cond_est = (d.max() / d.min()) ** 2
    # K = P H^T S^-1, computed via the factorization
    K = cho_solve(chol, HP, check_finite=False).T
    x = x + K @ (-h)
    P = P - K @ HP
    return x, 0.5 * (P + P.T), cond_est


def measurement_update(state: TrackerState, pm: PseudoMeasurement,
                       cfg: FilterConfig | None = None) -> TrackerState:
    """EKF update against the zero pseudo-measurement ``0 = h + e``.

    The innovation system is solved through a Cholesky factorization, never
    an explicit inverse.  In sequential mode the per-point blocks are
    applied one at a time with the same linearization.
    """
    cfg = cfg or FilterConfig()
    if pm.H_jac.shape[1] != state.dim:
        raise ValueError("pseudo-measurement dimension does not match the state")
    x, P = state.x, state.P
    if cfg.update_mode == "sequential" and pm.blocks:
        # per-block conditioning on the shared linearization: the residual
        # of a later block is re-expressed at the running mean
        x0 = state.x
        worst = 0.0
        for off, size in pm.blocks:
            rows = slice(off, off + size)
            Hb = pm.H_jac[rows]
            hb = pm.h[rows] + Hb @ (x - x0)
            x, P, cond = _solve_update(x, P, hb, Hb, pm.R[rows, rows])
            worst = max(worst, cond)
        cond = worst
    else:
        x, P, cond = _solve_update(x, P, pm.h, pm.H_jac, pm.R)
    if cond > cfg.max_condition_warn:
        logging.getLogger(__name__).warning(
            "innovation covariance badly conditioned (estimate %.2e)", cond)
    return replace(state, x=x, P=P)


def mekf_reset(state: TrackerState) -> TrackerState:
    """Fold the estimated deviation into the reference quaternion.

    ``q_ref <- dq(a) (.) q_ref`` and ``a <- 0``; the covariance is kept
    unchanged (zero-order reset).
    """
    x = state.x.copy()
    q_ref = quat_product(delta_quat(x[_SL_A]), state.q_ref)
    x[_SL_A] = 0.0
    return replace(state, x=x, q_ref=q_ref)


def check_covariance(P: np.ndarray, tol_factor: float = 1e-6) -> None:
    """Fail the run if P is not symmetric PSD within tolerance.

    Uses a Cholesky test of ``P + tol I``: success proves the smallest
    eigenvalue is above ``-tol`` without an eigendecomposition.
    """
    if np.abs(P - P.T).max() > 1e-9:
        raise FilterUpdateError("covariance lost symmetry")
    tol = tol_factor * np.trace(P) / P.shape[0]
    shifted = P.copy()
    shifted.flat[:: P.shape[0] + 1] += tol
    try:
        np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError as exc:
        raise FilterUpdateError(
            f"covariance has eigenvalues below -{tol:.3e}") from exc
