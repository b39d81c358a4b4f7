"""Process models: translational constant velocity, the linearized and
discretized rotational constant-velocity model, and the two extent dynamics
variants.  The rotational blocks are closed-form Rodrigues-series
expressions of the exact matrix exponential and its integrals, with Taylor
limits near zero rate where the closed forms divide by |w|.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import cross_matrix

# below this value of |w|*T the closed forms are replaced by Taylor limits
_SMALL_ANGLE = 1e-6


@dataclass(frozen=True)
class ProcessNoiseConfig:
    """Process-noise settings shared by both trackers.

    extent_dyn_kind selects between the maximum-entropy prediction
    (covariance scaled by 1/lam, mean kept) and the forgetting-factor
    model (state decays toward the stationary prior).
    """

    sigma_c: float = 0.1
    sigma_alpha: float = 0.1
    alpha_axis_mask: tuple = (1.0, 1.0, 1.0)
    lam: float = 0.99
    forgetting_alpha: float = 1e-4
    extent_dyn_kind: str = "max_entropy"

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must be in (0, 1]")
        if self.sigma_c < 0.0 or self.sigma_alpha < 0.0:
            raise ValueError("noise standard deviations must be >= 0")
        if self.forgetting_alpha < 0.0:
            raise ValueError("forgetting_alpha must be >= 0")
        if self.extent_dyn_kind not in ("max_entropy", "forgetting"):
            raise ValueError(f"unknown extent dynamics {self.extent_dyn_kind!r}")


@dataclass(frozen=True, eq=False)
class TransitionModel:
    """Full-state transition matrix and process noise covariance."""

    F: np.ndarray
    Q: np.ndarray


def translational_fq(T: float, sigma_c: float):
    """Constant-velocity model blocks for the (c, v) sub-state."""
    if T <= 0.0:
        raise ValueError("sampling time must be positive")
    F = np.kron(np.array([[1.0, T], [0.0, 1.0]]), np.eye(3))
    Q = np.kron(np.array([[T ** 3 / 3.0, T ** 2 / 2.0],
                          [T ** 2 / 2.0, T]]), sigma_c ** 2 * np.eye(3))
    return F, Q


def _rot_series_blocks(w_hat: np.ndarray, T: float):
    """Coefficient triples (on I, K, K^2 with K = [-w x]) of
    exp((T/2)K), its integral over [0, T], and the tau-weighted integral."""
    n = float(np.linalg.norm(w_hat))
    if n * T < _SMALL_ANGLE:
        e0 = (1.0, T / 2.0, T ** 2 / 8.0)
        e1 = (T, T ** 2 / 4.0, T ** 3 / 24.0)
        e2 = (T ** 2 / 2.0, T ** 3 / 6.0, T ** 4 / 32.0)
        return e0, e1, e2
    half = 0.5 * T * n
    s, c = np.sin(half), np.cos(half)
    e0 = (1.0, s / n, (1.0 - c) / n ** 2)
    e1 = (T, 2.0 * (1.0 - c) / n ** 2, (T - 2.0 * s / n) / n ** 2)
    e2 = (T ** 2 / 2.0,
          (4.0 * s / n - 2.0 * T * c) / n ** 2,
          (T ** 2 / 2.0 - 2.0 * T * s / n + 4.0 * (1.0 - c) / n ** 2) / n ** 2)
    return e0, e1, e2


def _series_eval(coeffs, K, K2):
    a0, a1, a2 = coeffs
    return a0 * np.eye(3) + a1 * K + a2 * K2


def rotational_fq(w_hat: np.ndarray, T: float, sigma_alpha: float, axis_mask=(1.0, 1.0, 1.0)):
    """Discretized rotational constant-velocity blocks for (a, w).

    ``F_r`` is the exact matrix exponential of the linearized continuous
    model; ``Q_r = G S G^T`` with ``G`` the exact integral of the
    exponential applied to the noise input and ``S`` the rotational
    acceleration covariance restricted to the active axes.
    """
    if T <= 0.0:
        raise ValueError("sampling time must be positive")
    w_hat = np.asarray(w_hat, dtype=float)
    K = cross_matrix(-w_hat)
    K2 = K @ K
    e0, e1, e2 = _rot_series_blocks(w_hat, T)
    E0 = _series_eval(e0, K, K2)
    E1 = _series_eval(e1, K, K2)
    E2 = _series_eval(e2, K, K2)

    F = np.zeros((6, 6))
    F[:3, :3] = E0
    F[:3, 3:] = E1
    F[3:, 3:] = np.eye(3)

    G = np.zeros((6, 3))
    G[:3, :] = T * E1 - E2
    G[3:, :] = T * np.eye(3)
    sigma = sigma_alpha ** 2 * np.diag(np.asarray(axis_mask, dtype=float))
    Q = G @ sigma @ G.T
    return F, 0.5 * (Q + Q.T)


def extent_q_max_entropy(P_ff: np.ndarray, lam: float) -> np.ndarray:
    """Process noise that scales the predicted extent covariance by 1/lam."""
    if not 0.0 < lam <= 1.0:
        raise ValueError("lam must be in (0, 1]")
    return (1.0 / lam - 1.0) * P_ff


def extent_fq_forgetting(alpha: float, T: float, prior_cov: np.ndarray):
    """Forgetting-factor extent dynamics; stationary at the prior covariance."""
    if alpha < 0.0:
        raise ValueError("alpha must be >= 0")
    if T <= 0.0:
        raise ValueError("sampling time must be positive")
    decay = np.exp(-alpha * T)
    F = decay * np.eye(prior_cov.shape[0])
    Q = (1.0 - decay ** 2) * prior_cov
    return F, Q


def assemble_transition(kin_parts, extent_parts) -> TransitionModel:
    """Block-diagonal transition in state order (c, v, a, w, extent...).

    ``kin_parts`` is ((F_t, Q_t), (F_r, Q_r)); ``extent_parts`` is a list of
    (F_f, Q_f) pairs, one per extent segment.
    """
    blocks = [kin_parts[0], kin_parts[1], *extent_parts]
    for Fb, Qb in blocks:
        if Fb.shape != Qb.shape or Fb.shape[0] != Fb.shape[1]:
            raise ValueError("transition blocks must be square and matching")
    dim = sum(Fb.shape[0] for Fb, _ in blocks)
    F = np.zeros((dim, dim))
    Q = np.zeros((dim, dim))
    at = 0
    for Fb, Qb in blocks:
        d = Fb.shape[0]
        F[at:at + d, at:at + d] = Fb
        Q[at:at + d, at:at + d] = Qb
        at += d
    return TransitionModel(F=F, Q=0.5 * (Q + Q.T))
