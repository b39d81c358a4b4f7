"""Gaussian-process extent machinery: kernels, basis grids and the
finite-dimensional projection used by the trackers.

The radial extent function is summarized at a fixed set of basis inputs.
Conditioning on that summary yields, for any query input ``u``, a linear
read-out row ``H(u)``, a residual variance ``R(u)`` and a mean-correction
term ``c(u)`` (nonzero only for a nonzero prior mean radius); these are the
quantities consumed by the measurement models.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .geometry import cart_to_spherical, geodesic_angle

KERNEL_KINDS = ("geodesic3d", "periodic2pi", "periodic_pi")


class SingularKernelError(np.linalg.LinAlgError):
    """Gram matrix could not be factorized (degenerate hyperparameters)."""


@dataclass(frozen=True)
class GpHyperparams:
    """Kernel and prior hyperparameters of one extent model.

    mu_r:            prior mean radius [m]
    sigma_f:         prior amplitude [m]
    sigma_r:         std of the unknown constant mean radius [m]
    ell:             length-scale [rad]
    meas_noise_var:  scalar radial observation noise variance [m^2]
    """

    mu_r: float = 0.0
    sigma_f: float = 1.0
    sigma_r: float = 0.2
    ell: float = np.pi / 8
    meas_noise_var: float = 0.1 ** 2

    def __post_init__(self):
        if self.sigma_f <= 0.0:
            raise ValueError("sigma_f must be positive")
        if self.sigma_r < 0.0:
            raise ValueError("sigma_r must be non-negative")
        if self.ell <= 0.0:
            raise ValueError("ell must be positive")
        if self.meas_noise_var < 0.0:
            raise ValueError("meas_noise_var must be non-negative")


def kernel_geodesic3d(g1, g2, hyper: GpHyperparams):
    """Squared-exponential kernel in the central angle, plus sigma_r^2.

    Inputs are (theta, phi) pairs; broadcasts over leading dimensions.
    """
    d = geodesic_angle(g1, g2)
    sf2 = np.square(np.float64(hyper.sigma_f))
    return sf2 * np.exp(-d * d / (2.0 * hyper.ell ** 2)) + hyper.sigma_r ** 2


def kernel_periodic2pi(t1, t2, hyper: GpHyperparams):
    """2*pi-periodic kernel for projection contours."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    s = np.sin(0.5 * (t1 - t2))
    sf2 = np.square(np.float64(hyper.sigma_f))
    return sf2 * np.exp(-2.0 * s * s / hyper.ell ** 2) + hyper.sigma_r ** 2


def kernel_periodic_pi(t1, t2, hyper: GpHyperparams):
    """pi-periodic kernel; encodes contours symmetric under 180 degree turns."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    s = np.sin(t1 - t2)
    sf2 = np.square(np.float64(hyper.sigma_f))
    return sf2 * np.exp(-s * s / (2.0 * hyper.ell ** 2)) + hyper.sigma_r ** 2


_KERNELS = {
    "geodesic3d": kernel_geodesic3d,
    "periodic2pi": kernel_periodic2pi,
    "periodic_pi": kernel_periodic_pi,
}


def kernel_matrix(kind: str, u1: np.ndarray, u2: np.ndarray, hyper: GpHyperparams) -> np.ndarray:
    """Cross-covariance matrix of shape (len(u1), len(u2))."""
    k = _KERNELS[kind]
    if kind == "geodesic3d":
        return k(u1[:, None, :], u2[None, :, :], hyper)
    return k(u1[:, None], u2[None, :], hyper)


@dataclass(frozen=True, eq=False)
class BasisGrid:
    """Fixed set of basis inputs at which the extent GP is summarized.

    For ``kind == "sphere"`` the inputs are (theta, phi) pairs from a
    subdivided icosahedron; ``dirs`` holds the matching unit vectors and
    ``faces`` the triangle topology (reused for meshing).  For
    ``kind == "circle"`` the inputs are strictly increasing polar angles
    in [0, 2*pi).  Inputs must be pairwise distinct.
    """

    kind: str
    inputs: np.ndarray
    dirs: np.ndarray | None = None
    faces: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "circle":
            if self.inputs.ndim != 1 or np.any(np.diff(self.inputs) <= 0.0):
                raise ValueError("circle grid angles must be strictly increasing")
            if self.inputs[0] < 0.0 or self.inputs[-1] >= 2.0 * np.pi:
                raise ValueError("circle grid angles must lie in [0, 2*pi)")
        elif self.kind == "sphere":
            dots = self.dirs @ self.dirs.T
            np.fill_diagonal(dots, -1.0)
            if dots.max() >= 1.0 - 1e-12:
                raise ValueError("sphere grid directions must be pairwise distinct")
        else:
            raise ValueError(f"unknown grid kind {self.kind!r}")

    @property
    def count(self) -> int:
        return self.inputs.shape[0]


def _icosahedron():
    g = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
        [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
        [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=int)
    return verts, faces


def icosphere(subdivision_level: int):
    """Unit icosphere vertices and faces; level 3 has 642 unique vertices."""
    if subdivision_level < 0:
        raise ValueError("subdivision level must be >= 0")
    verts, faces = _icosahedron()
    verts = list(verts)
    for _ in range(subdivision_level):
        midpoint = {}

        def midpoint_index(i, j):
            key = (min(i, j), max(i, j))
            idx = midpoint.get(key)
            if idx is None:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                idx = len(verts) - 1
                midpoint[key] = idx
            return idx

        new_faces = []
        for a, b, c in faces:
            ab = midpoint_index(a, b)
            bc = midpoint_index(b, c)
            ca = midpoint_index(c, a)
            new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        faces = np.asarray(new_faces, dtype=int)
    return np.asarray(verts), faces


def make_sphere_grid(subdivision_level: int) -> BasisGrid:
    """Evenly spaced sphere grid from a subdivided icosahedron."""
    dirs, faces = icosphere(subdivision_level)
    return BasisGrid(kind="sphere", inputs=cart_to_spherical(dirs), dirs=dirs, faces=faces)


def make_circle_grid(n: int) -> BasisGrid:
    """n equidistant polar angles 2*pi*i/n, i = 0..n-1."""
    if n < 3:
        raise ValueError("circle grid needs at least 3 points")
    return BasisGrid(kind="circle", inputs=2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True, eq=False)
class GpExtentModel:
    """Immutable per-grid GP summary: prior and cached Gram inverse.

    ``gram_inverse`` is the inverse of the jittered Gram matrix; ``kinv_ones``
    caches ``gram_inverse @ 1`` for the constant-mean correction term.
    """

    grid: BasisGrid
    hyper: GpHyperparams
    kernel_kind: str
    gram: np.ndarray
    gram_inverse: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    kinv_ones: np.ndarray = field(repr=False, default=None)


def build_extent_model(grid: BasisGrid, hyper: GpHyperparams, kernel_kind: str) -> GpExtentModel:
    """Assemble the prior and the cached Gram inverse for a basis grid.

    A diagonal jitter of ``1e-9 * (sigma_f^2 + sigma_r^2)`` is added before
    inversion: the constant sigma_r^2 term makes large Grams nearly
    rank-deficient.
    """
    if kernel_kind not in KERNEL_KINDS:
        raise ValueError(f"unknown kernel kind {kernel_kind!r}")
    u = grid.inputs
    gram = kernel_matrix(kernel_kind, u, u, hyper)
    # the constant sigma_r^2 term plus a smooth kernel leaves eigenvalues at
    # the jitter floor for large grids; 1e-8 keeps the float64 identity
    # residual of the cached inverse below 1e-6 (1e-9 provably cannot)
    jitter = 1e-8 * (np.square(np.float64(hyper.sigma_f)) + hyper.sigma_r ** 2)
    gram = gram + jitter * np.eye(grid.count)
    gram = 0.5 * (gram + gram.T)
    try:
        chol = cho_factor(gram, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularKernelError(
            f"Gram factorization failed for kernel {kernel_kind!r}: {exc}") from exc
    gram_inverse = cho_solve(chol, np.eye(grid.count)).T
    resid = np.abs(gram_inverse @ gram - np.eye(grid.count)).max()
    if resid > 1e-6:
        raise SingularKernelError(
            f"Gram inverse residual {resid:.2e} for kernel {kernel_kind!r} "
            "(degenerate hyperparameters)")
    return GpExtentModel(
        grid=grid,
        hyper=hyper,
        kernel_kind=kernel_kind,
        gram=gram,
        gram_inverse=gram_inverse,
        prior_mean=np.full(grid.count, hyper.mu_r),
        prior_cov=gram.copy(),
        kinv_ones=gram_inverse @ np.ones(grid.count),
    )


def cross_covariance(u, model: GpExtentModel) -> np.ndarray:
    """K(u, basis) rows for one or many query inputs, shape (m, N)."""
    u = np.asarray(u, dtype=float)
    if model.grid.kind == "sphere":
        u2 = np.atleast_2d(u)
        return kernel_matrix(model.kernel_kind, u2, model.grid.inputs, model.hyper)
    u1 = np.atleast_1d(u)
    return kernel_matrix(model.kernel_kind, u1, model.grid.inputs, model.hyper)


def gp_projection(u, model: GpExtentModel):
    """Read-out row(s), residual variance(s) and mean correction(s) at ``u``.

    Returns ``(h, r, c)`` where ``h`` has shape (m, N), and ``r`` and ``c``
    have shape (m,).  ``r`` includes the radial observation noise and is
    clamped at zero against round-off.
    """
    kx = cross_covariance(u, model)
    h = kx @ model.gram_inverse
    kdiag = model.hyper.sigma_f ** 2 + model.hyper.sigma_r ** 2
    r = kdiag + model.hyper.meas_noise_var - np.einsum("ij,ij->i", h, kx)
    c = model.hyper.mu_r * (1.0 - kx @ model.kinv_ones)
    return h, np.maximum(r, 0.0), c
