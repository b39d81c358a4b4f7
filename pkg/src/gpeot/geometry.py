"""Quaternion algebra, rotation matrices and spherical-coordinate utilities.

Conventions used throughout the package:

* Quaternions are length-4 arrays ``[q1, q2, q3, q4]`` with the vector part
  first and the scalar part last.
* ``rot_matrix(q)`` is the matrix that maps object-local coordinates to
  global coordinates; its transpose maps global to local.
* Spherical angles are pairs ``(theta, phi)`` with azimuth
  ``theta in [-pi, pi]`` and elevation ``phi in [-pi/2, pi/2]``.

All functions are pure and operate on plain numpy arrays, so they are safe
to call concurrently.
"""

import numpy as np

QUAT_IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])


class DegenerateDirectionError(ValueError):
    """A direction was requested for a (near-)zero vector."""


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Scale a quaternion to unit norm."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("cannot normalize near-zero quaternion")
    return q / n


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    """Conjugate (group inverse for unit quaternions)."""
    q = np.asarray(q, dtype=float)
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_product(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Quaternion product ``p (.) q``.

    Composes rotations such that ``rot_matrix(p) @ rot_matrix(q)`` equals
    ``rot_matrix(quat_product(p, q))``.  The result is renormalized to bound
    norm drift over long filter runs.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pv, ps = p[:3], p[3]
    qv, qs = q[:3], q[3]
    out = np.empty(4)
    out[:3] = ps * qv + qs * pv - np.cross(pv, qv)
    out[3] = ps * qs - pv @ qv
    return quat_normalize(out)


def cross_matrix(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix ``[v x]`` with ``cross_matrix(v) @ w == cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def rot_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix (local frame to global frame) of a unit quaternion.

    ``R = (q4^2 - qv.qv) I + 2 qv qv^T - 2 q4 [qv x]``
    """
    q = np.asarray(q, dtype=float)
    qv, qs = q[:3], q[3]
    return ((qs * qs - qv @ qv) * np.eye(3)
            + 2.0 * np.outer(qv, qv)
            - 2.0 * qs * cross_matrix(qv))


def delta_quat(a: np.ndarray) -> np.ndarray:
    """Rodrigues deviation vector ``a`` mapped to a unit quaternion.

    ``dq(a) = [a; 2] / sqrt(4 + |a|^2)``; unit norm by construction, so no
    renormalization is needed.
    """
    a = np.asarray(a, dtype=float)
    out = np.empty(4)
    out[:3] = a
    out[3] = 2.0
    return out / np.sqrt(4.0 + a @ a)


def quat_exp(rotvec: np.ndarray) -> np.ndarray:
    """Unit quaternion for a rotation vector (axis * angle).

    Exact one-step integrator increment for constant angular rate:
    ``q_next = quat_product(quat_exp(w * dt), q)``.
    """
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec)
    out = np.empty(4)
    if angle < 1e-12:
        out[:3] = 0.5 * rotvec
        out[3] = 1.0
        return quat_normalize(out)
    out[:3] = np.sin(0.5 * angle) * rotvec / angle
    out[3] = np.cos(0.5 * angle)
    return out


def rotation_angle(q: np.ndarray) -> float:
    """Rotation angle of a unit quaternion, in [0, pi].

    Resolves the double cover by taking the representative with a
    non-negative scalar part.
    """
    q = np.asarray(q, dtype=float)
    return 2.0 * np.arctan2(np.linalg.norm(q[:3]), abs(q[3]))


def cart_to_spherical(p: np.ndarray) -> np.ndarray:
    """Azimuth/elevation angles of one or many 3D points.

    Accepts shape ``(3,)`` or ``(n, 3)`` and returns ``(2,)`` or ``(n, 2)``.
    Azimuth uses the full-quadrant two-argument arctangent; at the poles
    (x = y = 0) the azimuth is defined as 0 for determinism.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = np.atleast_2d(p)
    rho = np.hypot(pts[:, 0], pts[:, 1])
    r = np.linalg.norm(pts, axis=1)
    if np.any(r < 1e-300):
        raise DegenerateDirectionError("zero vector has no direction")
    theta = np.where(rho > 0.0, np.arctan2(pts[:, 1], pts[:, 0]), 0.0)
    phi = np.arctan2(pts[:, 2], rho)
    out = np.stack([theta, phi], axis=1)
    return out[0] if single else out


def spherical_to_cart(angles: np.ndarray, radius=1.0) -> np.ndarray:
    """Inverse of :func:`cart_to_spherical` for the given radius."""
    angles = np.asarray(angles, dtype=float)
    single = angles.ndim == 1
    ang = np.atleast_2d(angles)
    theta, phi = ang[:, 0], ang[:, 1]
    cp = np.cos(phi)
    out = np.stack([cp * np.cos(theta), cp * np.sin(theta), np.sin(phi)], axis=1)
    out = out * np.asarray(radius, dtype=float).reshape(-1, 1)
    return out[0] if single else out


def geodesic_angle(g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """Central angle between directions given as (theta, phi) pairs.

    Broadcasts over leading dimensions.  The arccos argument is clamped to
    [-1, 1] because floating-point drift can exceed the domain by ~1e-16.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    t1, p1 = g1[..., 0], g1[..., 1]
    t2, p2 = g2[..., 0], g2[..., 1]
    c = np.cos(p1) * np.cos(p2) * np.cos(t1 - t2) + np.sin(p1) * np.sin(p2)
    return np.arccos(np.clip(c, -1.0, 1.0))
