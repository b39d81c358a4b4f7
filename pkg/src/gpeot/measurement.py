"""Implicit pseudo-measurement models for both trackers.

A 3D point either constrains the radial extent directly (radial tracker)
or, after transformation into the object frame, constrains the contour of
its projection onto each of three body-fixed planes (projection tracker).
Both models are expressed as a residual ``h(x, m)`` observed to be zero
with Gaussian noise, stacked over all points of a frame.

The Jacobian of the stacked residual exploits structure: the residual does
not depend on velocity or angular rate, depends linearly on the extent
coefficients (read-out rows are exact derivatives), and only the six
(center, orientation-deviation) columns are differentiated numerically.
The result is identical to a full numerical Jacobian over the whole state.
"""

from dataclasses import dataclass

import numpy as np

from . import ekf
from .geometry import cart_to_spherical, delta_quat, quat_product, rot_matrix
from .gp import GpExtentModel, cross_covariance, gp_projection

# points closer than this to the center (or projecting this close to a
# plane origin) have no usable direction and are skipped
EPS_DIR = 1e-6

_SL_C = slice(0, 3)
_SL_A = slice(3, 6)


class EmptyFrameError(RuntimeError):
    """No usable point remained after degenerate-direction filtering."""


@dataclass(eq=False)
class MeasurementFrame:
    """Timestamped 3D point set with a shared noise covariance."""

    t: float
    points: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.noise_cov = np.asarray(self.noise_cov, dtype=float)
        if self.points.size and self.points.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        if self.noise_cov.shape != (3, 3):
            raise ValueError("noise covariance must be 3x3")
        if not np.allclose(self.noise_cov, self.noise_cov.T):
            raise ValueError("noise covariance must be symmetric")


def default_projection_planes():
    """Row-orthonormal selectors for the xy, xz and yz body planes."""
    p1 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    p2 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    p3 = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return (p1, p2, p3)


@dataclass(frozen=True, eq=False)
class ProjectionSetup:
    """Projection planes and the scaling-factor moments of the contour model."""

    planes: tuple = None
    kernel_kinds: tuple = ("periodic2pi", "periodic2pi", "periodic2pi")
    scale_mean: float = 5.0 / 6.0
    scale_var: float = 1.0 / 18.0

    def __post_init__(self):
        if self.planes is None:
            object.__setattr__(self, "planes", default_projection_planes())
        for P in self.planes:
            if P.shape != (2, 3) or not np.allclose(P @ P.T, np.eye(2), atol=1e-12):
                raise ValueError("each projection matrix must be 2x3 with orthonormal rows")


def to_local(m: np.ndarray, c: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Resolve global point(s) in the object-local frame.

    ``m_local = R(q)^T (m - c)``; accepts shape (3,) or (n, 3).
    """
    m = np.asarray(m, dtype=float)
    rel = m - np.asarray(c, dtype=float)
    R = rot_matrix(q)
    return rel @ R  # row-wise R^T @ rel


def state_quaternion(state: ekf.TrackerState) -> np.ndarray:
    """Current orientation: deviation applied to the reference quaternion."""
    return quat_product(delta_quat(state.a), state.q_ref)


# ---------------------------------------------------------------------------
# radial (3D) model


def _radial_parts(points, c, a, q_ref):
    """Center-relative offsets, distances and local coordinates of a batch."""
    rel = points - c
    dist = np.linalg.norm(rel, axis=1)
    q = quat_product(delta_quat(a), q_ref)
    local = rel @ rot_matrix(q)
    return rel, dist, local


def _radial_residual(points, c, a, q_ref, model, kinv_f, kinv_ones):
    """Stacked radial residuals using precomputed Gram-inverse products.

    ``kinv_f`` is ``K^-1 f_hat`` so that ``H(g) f_hat == K(g, basis) kinv_f``;
    this keeps the cost of repeated evaluations (finite differences) at one
    kernel row per point instead of one Gram-sized product.
    """
    rel, dist, local = _radial_parts(points, c, a, q_ref)
    gamma = cart_to_spherical(local)
    kx = cross_covariance(gamma, model)
    radius = kx @ kinv_f + model.hyper.mu_r * (1.0 - kx @ kinv_ones)
    p = rel / dist[:, None]
    return (-rel + p * radius[:, None]).ravel()


def gpeot_point_residual(state: ekf.TrackerState, m: np.ndarray, model: GpExtentModel,
                         noise_cov=None):
    """Residual, extent read-out block and noise covariance of one point.

    Returns ``(h, H_block, R)`` with ``h`` of length 3, ``H_block`` of
    shape (3, N) equal to the exact derivative of ``h`` with respect to
    the extent coefficients, and ``R = p r_f p^T + noise_cov``.
    """
    Rbar = np.zeros((3, 3)) if noise_cov is None else np.asarray(noise_cov, dtype=float)
    h, Hb, Rl = _gpeot_batch(state, np.atleast_2d(m), Rbar, model)
    return h[0], Hb[0], Rl[0]


def _gpeot_batch(state, points, noise_cov, model):
    c, a = state.c, state.a
    rel, dist, local = _radial_parts(points, c, a, state.q_ref)
    if np.any(dist <= EPS_DIR):
        raise ekf.JacobianError("degenerate point passed to residual")
    gamma = cart_to_spherical(local)
    H, r_f, c_mean = gp_projection(gamma, model)
    radius = H @ state.f + c_mean
    p = rel / dist[:, None]
    h = -rel + p * radius[:, None]
    H_blocks = p[:, :, None] * H[:, None, :]
    R_blocks = r_f[:, None, None] * p[:, :, None] * p[:, None, :] + noise_cov
    return h, H_blocks, R_blocks


# ---------------------------------------------------------------------------
# projection model


def _projected_parts(points, c, a, q_ref, plane):
    rel = points - c
    q = quat_product(delta_quat(a), q_ref)
    local = rel @ rot_matrix(q)
    mj = local @ plane.T
    dist = np.linalg.norm(mj, axis=1)
    return mj, dist


def _projection_residual(points, c, a, q_ref, plane, model, scale_mean, kinv_f, kinv_ones):
    """Stacked 2D residuals on one plane (fast path for differentiation)."""
    mj, dist = _projected_parts(points, c, a, q_ref, plane)
    theta = np.arctan2(mj[:, 1], mj[:, 0])
    kx = cross_covariance(theta, model)
    radius = kx @ kinv_f + model.hyper.mu_r * (1.0 - kx @ kinv_ones)
    p = mj / dist[:, None]
    return (-mj + scale_mean * p * radius[:, None]).ravel()


def gpeotp_point_residual(state: ekf.TrackerState, m: np.ndarray, plane_index: int,
                          setup: ProjectionSetup, model_j: GpExtentModel,
                          noise_cov=None):
    """Residual, extent read-out block and noise covariance on one plane.

    ``noise_cov`` is the 3x3 point noise; it is projected onto the plane.
    """
    Rbar = np.zeros((3, 3)) if noise_cov is None else np.asarray(noise_cov, dtype=float)
    h, Hb, Rl = _gpeotp_batch(state, np.atleast_2d(m), Rbar, plane_index, setup, model_j,
                              state.extent(plane_index))
    return h[0], Hb[0], Rl[0]


def _gpeotp_batch(state, points, noise_cov, j, setup, model, f_j):
    plane = setup.planes[j]
    if f_j is None:
        f_j = state.extent(j)
    mj, dist = _projected_parts(points, state.c, state.a, state.q_ref, plane)
    if np.any(dist <= EPS_DIR):
        raise ekf.JacobianError("degenerate projection passed to residual")
    theta = np.arctan2(mj[:, 1], mj[:, 0])
    H, r_f, c_mean = gp_projection(theta, model)
    radius = H @ f_j + c_mean
    p = mj / dist[:, None]
    h = -mj + setup.scale_mean * p * radius[:, None]
    H_blocks = setup.scale_mean * p[:, :, None] * H[:, None, :]
    Rbar_proj = plane @ noise_cov @ plane.T
    rank1 = (setup.scale_var * radius ** 2 + r_f)[:, None, None] * p[:, :, None] * p[:, None, :]
    return h, H_blocks, rank1 + Rbar_proj


# ---------------------------------------------------------------------------
# frame assembly


def _kinematic_jacobian(hfun, c, a, cfg, out):
    """Fill the (c, a) columns of the stacked Jacobian by central differences."""
    z0 = np.concatenate([c, a])
    J = ekf.numerical_jacobian(hfun, z0, cfg)
    out[:, 0:3] = J[:, 0:3]
    out[:, 6:9] = J[:, 3:6]


def build_frame_pseudo_meas(state: ekf.TrackerState, frame: MeasurementFrame,
                            tracker_kind: str, models,
                            setup: ProjectionSetup | None = None,
                            cfg: ekf.FilterConfig | None = None) -> ekf.PseudoMeasurement:
    """Stacked residual, Jacobian and block-diagonal noise for one frame.

    ``tracker_kind`` is "gpeot" (one radial model) or "gpeot_p" (one model
    per projection plane, residuals stacked plane-major).  Degenerate
    points are skipped individually; if nothing remains an
    :class:`EmptyFrameError` is raised and the caller should fall back to
    prediction only.
    """
    cfg = cfg or ekf.FilterConfig()
    if tracker_kind == "gpeot":
        return _build_gpeot(state, frame, models[0], cfg)
    if tracker_kind == "gpeot_p":
        if setup is None:
            setup = ProjectionSetup()
        return _build_gpeotp(state, frame, models, setup, cfg)
    raise ValueError(f"unknown tracker kind {tracker_kind!r}")


def _build_gpeot(state, frame, model, cfg):
    pts = frame.points
    if pts.shape[0] == 0:
        raise EmptyFrameError("frame has no points")
    dist = np.linalg.norm(pts - state.c, axis=1)
    keep = dist > EPS_DIR
    kept = pts[keep]
    n = kept.shape[0]
    if n == 0:
        raise EmptyFrameError("all points collapsed onto the center estimate")

    h, H_blocks, R_blocks = _gpeot_batch(state, kept, frame.noise_cov, model)

    dim = state.dim
    J = np.zeros((3 * n, dim))
    kinv_f = model.gram_inverse @ state.f
    q_ref = state.q_ref

    def hfun(z):
        return _radial_residual(kept, z[_SL_C], z[_SL_A], q_ref, model,
                                kinv_f, model.kinv_ones)

    _kinematic_jacobian(hfun, state.c, state.a, cfg, J)
    fsl = state.extent_slice(0)
    J[:, fsl] = H_blocks.reshape(3 * n, -1)

    R = np.zeros((3 * n, 3 * n))
    blocks = []
    for l in range(n):
        R[3 * l:3 * l + 3, 3 * l:3 * l + 3] = R_blocks[l]
        blocks.append((3 * l, 3))
    return ekf.PseudoMeasurement(h=h.ravel(), H_jac=J, R=R, blocks=blocks)


def _build_gpeotp(state, frame, models, setup, cfg):
    pts = frame.points
    if pts.shape[0] == 0:
        raise EmptyFrameError("frame has no points")

    q_ref = state.q_ref
    kept_per_plane = []
    for j, plane in enumerate(setup.planes):
        _, dist = _projected_parts(pts, state.c, state.a, q_ref, plane)
        kept_per_plane.append(pts[dist > EPS_DIR])
    total = sum(2 * k.shape[0] for k in kept_per_plane)
    if total == 0:
        raise EmptyFrameError("all points project onto plane origins")

    dim = state.dim
    h_all = np.empty(total)
    J = np.zeros((total, dim))
    R = np.zeros((total, total))
    blocks = []
    offset = 0
    for j, plane in enumerate(setup.planes):
        kept = kept_per_plane[j]
        n = kept.shape[0]
        if n == 0:
            continue
        model = models[j]
        f_j = state.extent(j)
        h, H_blocks, R_blocks = _gpeotp_batch(state, kept, frame.noise_cov, j, setup, model, f_j)
        rows = slice(offset, offset + 2 * n)
        h_all[rows] = h.ravel()

        kinv_f = model.gram_inverse @ f_j

        def hfun(z, kept=kept, plane=plane, model=model, kinv_f=kinv_f):
            return _projection_residual(kept, z[_SL_C], z[_SL_A], q_ref, plane, model,
                                        setup.scale_mean, kinv_f, model.kinv_ones)

        Jj = np.zeros((2 * n, dim))
        _kinematic_jacobian(hfun, state.c, state.a, cfg, Jj)
        Jj[:, state.extent_slice(j)] = H_blocks.reshape(2 * n, -1)
        J[rows] = Jj

        for l in range(n):
            r0 = offset + 2 * l
            R[r0:r0 + 2, r0:r0 + 2] = R_blocks[l]
            blocks.append((r0, 2))
        offset += 2 * n
    return ekf.PseudoMeasurement(h=h_all, H_jac=J, R=R, blocks=blocks)
