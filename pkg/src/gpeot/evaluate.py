"""Shape and tracking metrics: radial meshes, voxel IOU, reconstruction of
a 3D volume from projection contours, and velocity / orientation errors.

IOU voxelizes both solids on a common grid of cell centers.  A solid is
anything with ``contains(points) -> bool array`` and ``bounds()``:
parametric shapes test analytically, radial meshes via their piecewise
planar radial function (exact for star-convex meshes), and carved solids
via the three projection-contour tests.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import quat_conjugate, quat_product, rot_matrix, rotation_angle
from .gp import BasisGrid
from .sim import ShapeSpec

# radii at or below zero are clamped here before meshing; the GP posterior
# can dip negative early in a run
R_MIN = 1e-3


class UndefinedIouError(ValueError):
    """Both solids voxelized to the empty set."""


@dataclass(eq=False)
class TriangleMesh:
    """Closed triangle mesh, star-convex with respect to ``origin``."""

    vertices: np.ndarray
    faces: np.ndarray
    origin: np.ndarray = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.faces = np.asarray(self.faces, dtype=int)
        if self.origin is None:
            self.origin = self.vertices.mean(axis=0)
        else:
            self.origin = np.asarray(self.origin, dtype=float)


def radial_to_mesh(f_hat: np.ndarray, grid: BasisGrid, pose=None) -> TriangleMesh:
    """Scale each sphere-grid direction by its radial coefficient.

    ``pose`` is an optional (center, quaternion) pair mapping the local
    mesh into the global frame.  Non-positive radii are clamped to R_MIN.
    """
    if grid.kind != "sphere":
        raise ValueError("radial meshes need a sphere grid")
    radii = np.maximum(np.asarray(f_hat, dtype=float), R_MIN)
    verts = grid.dirs * radii[:, None]
    origin = np.zeros(3)
    if pose is not None:
        c, q = pose
        verts = np.asarray(c, dtype=float) + verts @ rot_matrix(q).T
        origin = np.asarray(c, dtype=float)
    return TriangleMesh(vertices=verts, faces=grid.faces.copy(), origin=origin)


def mesh_volume(mesh: TriangleMesh) -> float:
    """Signed-tetrahedron volume about the mesh origin."""
    v = mesh.vertices - mesh.origin
    a, b, c = (v[mesh.faces[:, i]] for i in range(3))
    return float(np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)).sum()) / 6.0)


def mesh_to_obj(mesh: TriangleMesh, path):
    """ASCII OBJ export (vertices and 1-based triangular faces)."""
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ---------------------------------------------------------------------------
# solids (uniform contains/bounds interface)


class PosedShape:
    """Parametric shape at a pose; contains() works in global coordinates."""

    def __init__(self, shape: ShapeSpec, c=(0.0, 0.0, 0.0), q=(0.0, 0.0, 0.0, 1.0)):
        self.shape = shape
        self.c = np.asarray(c, dtype=float)
        self.R = rot_matrix(q)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        local = (np.atleast_2d(pts) - self.c) @ self.R
        return self.shape.contains(local)

    def bounds(self):
        r = self.shape.max_radius()
        return self.c - r, self.c + r


class MeshSolid:
    """Star-convex mesh with an exact piecewise-planar radial inside test.

    The face containing a query direction is located either by brute force
    (small meshes), by exact descent through the subdivision hierarchy
    (icosphere meshes, whose four children of face i are faces 4i..4i+3),
    or by a KD-tree over face directions.  The surface radius along the
    direction is then one dot product with the precomputed face-plane
    vector.
    """

    _BRUTE_LIMIT = 64

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        o = mesh.origin
        tri = mesh.vertices[mesh.faces] - o  # (F, 3 vertices, 3)
        dirs = tri / np.linalg.norm(tri, axis=2, keepdims=True)
        # dir matrices have vertex directions as columns; the plane vector w
        # solves p_i . w = 1 for the three vertices (rows of tri)
        self._dir_inv = np.linalg.inv(dirs.transpose(0, 2, 1))
        self._plane_w = np.linalg.solve(tri, np.ones((tri.shape[0], 3, 1)))[:, :, 0]
        self._rad_lo = 1.0 / np.linalg.norm(self._plane_w, axis=1).max()
        self._rad_hi = np.linalg.norm(mesh.vertices - o, axis=1).max()
        self._levels = self._unit_plane_pyramid(dirs)
        self._tree = None
        if self._levels is None and mesh.faces.shape[0] > self._BRUTE_LIMIT:
            centroid = dirs.sum(axis=1)
            self._tree = cKDTree(centroid / np.linalg.norm(centroid, axis=1, keepdims=True))

    @staticmethod
    def _unit_plane_pyramid(dirs):
        """Unit-sphere face-plane vectors for every subdivision level.

        The unit icosphere is convex at each level, so the face containing
        a direction u maximizes w_f . u; parent corner directions are the
        first vertices of children 0..2, so the whole pyramid follows from
        the leaf faces.  Returns None if the face count is not 20 * 4^L.
        """
        nf = dirs.shape[0]
        m = nf
        while m > 20 and m % 4 == 0:
            m //= 4
        if m != 20:
            return None
        levels = []
        corners = dirs  # (nf, 3 corners, 3)
        try:
            while True:
                levels.append(np.linalg.solve(corners, np.ones((nf, 3, 1)))[:, :, 0])
                if nf == 20:
                    return levels[::-1]
                corners = corners.reshape(nf // 4, 4, 3, 3)[:, [0, 1, 2], 0, :]
                nf //= 4
        except np.linalg.LinAlgError:
            return None

    def radius(self, dirs: np.ndarray) -> np.ndarray:
        """Surface radius along unit directions from the origin."""
        dirs = np.atleast_2d(dirs)
        face = self._find_faces(dirs)
        return 1.0 / np.einsum("ij,ij->i", self._plane_w[face], dirs)

    def _alpha_min(self, inv_mats, dirs):
        # smallest barycentric-cone coordinate of dirs w.r.t. candidates
        alpha = np.einsum("nkij,nj->nki", inv_mats, dirs)
        return alpha.min(axis=2)

    def _find_faces(self, dirs):
        n = dirs.shape[0]
        nf = self.mesh.faces.shape[0]
        if self._levels is not None:
            face = (dirs @ self._levels[0].T).argmax(axis=1)
            rows = np.arange(n)
            for w in self._levels[1:]:
                cand = 4 * face[:, None] + np.arange(4)
                t = np.einsum("nkj,nj->nk", w[cand], dirs)
                face = cand[rows, t.argmax(axis=1)]
            return face
        if self._tree is None:
            cand = np.broadcast_to(np.arange(nf), (n, nf))
            return self._alpha_min(self._dir_inv[cand], dirs).argmax(axis=1)
        out = np.empty(n, dtype=int)
        todo = np.arange(n)
        for k in (8, 32):
            _, cand = self._tree.query(dirs[todo], k=k)
            amin = self._alpha_min(self._dir_inv[cand], dirs[todo])
            out[todo] = cand[np.arange(todo.shape[0]), amin.argmax(axis=1)]
            todo = todo[amin.max(axis=1) <= -1e-9]
            if todo.size == 0:
                return out
        cand = np.broadcast_to(np.arange(nf), (todo.shape[0], nf))
        out[todo] = self._alpha_min(self._dir_inv[cand], dirs[todo]).argmax(axis=1)
        return out

    def contains(self, pts: np.ndarray) -> np.ndarray:
        rel = np.atleast_2d(pts) - self.mesh.origin
        dist = np.linalg.norm(rel, axis=1)
        out = dist <= self._rad_lo  # inside the largest inscribed sphere
        idx = (dist > self._rad_lo) & (dist <= self._rad_hi)
        if idx.any():
            dirs = rel[idx] / dist[idx, None]
            out[idx] = dist[idx] <= self.radius(dirs)
        return out

    def bounds(self):
        return self.mesh.vertices.min(axis=0), self.mesh.vertices.max(axis=0)


def contour_radius(grid: BasisGrid, radii: np.ndarray, theta) -> np.ndarray:
    """Periodic linear interpolation of contour radii at query angles."""
    if grid.kind != "circle":
        raise ValueError("contours need a circle grid")
    ang = grid.inputs
    radii = np.maximum(np.asarray(radii, dtype=float), 0.0)
    theta = np.mod(np.asarray(theta, dtype=float), 2.0 * np.pi)
    xp = np.concatenate([ang, [ang[0] + 2.0 * np.pi]])
    fp = np.concatenate([radii, [radii[0]]])
    return np.interp(theta, xp, fp)


class CarvedSolid:
    """Volume consistent with three projection contours, at a pose.

    A point is inside iff, on every plane, its projection lies within the
    interpolated contour radius at the projected polar angle.
    """

    def __init__(self, contours, grids, planes, c=(0.0, 0.0, 0.0),
                 q=(0.0, 0.0, 0.0, 1.0)):
        self.contours = [np.maximum(np.asarray(f, dtype=float), 0.0) for f in contours]
        self.grids = grids
        self.planes = planes
        self.c = np.asarray(c, dtype=float)
        self.R = rot_matrix(q)
        self.rmax = max(float(f.max()) if f.size else 0.0 for f in self.contours)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        local = (np.atleast_2d(pts) - self.c) @ self.R
        out = np.ones(local.shape[0], dtype=bool)
        for f, grid, plane in zip(self.contours, self.grids, self.planes):
            proj = local @ plane.T
            rho = np.linalg.norm(proj, axis=1)
            theta = np.arctan2(proj[:, 1], proj[:, 0])
            out &= rho <= contour_radius(grid, f, theta)
        return out

    def bounds(self):
        return self.c - self.rmax, self.c + self.rmax


# ---------------------------------------------------------------------------
# voxelization and IOU


@dataclass(eq=False)
class VoxelGrid:
    """Axis-aligned boolean occupancy; ``origin`` is the lower corner."""

    origin: np.ndarray
    cell: float
    occupancy: np.ndarray

    def __post_init__(self):
        if self.cell <= 0.0:
            raise ValueError("cell size must be positive")

    @property
    def volume(self) -> float:
        return float(self.occupancy.sum()) * self.cell ** 3

    def centers(self) -> np.ndarray:
        nx, ny, nz = self.occupancy.shape
        ax = [self.origin[i] + self.cell * (np.arange(n) + 0.5)
              for i, n in enumerate((nx, ny, nz))]
        g = np.meshgrid(*ax, indexing="ij")
        return np.stack([gi.ravel() for gi in g], axis=1)


def _common_grid(lo, hi, cell):
    lo = lo - 0.5 * cell
    n = np.maximum(np.ceil((hi - lo) / cell).astype(int) + 1, 1)
    return lo, n


def _count_occupancy(solid_a, solid_b, lo, n, cell):
    """Counts of (inside a, inside b, inside both) over the cell centers,
    processed in x-slabs to bound memory."""
    na = nb = nab = 0
    ys = lo[1] + cell * (np.arange(n[1]) + 0.5)
    zs = lo[2] + cell * (np.arange(n[2]) + 0.5)
    yz = np.stack([g.ravel() for g in np.meshgrid(ys, zs, indexing="ij")], axis=1)
    slab = np.empty((yz.shape[0], 3))
    slab[:, 1:] = yz
    for i in range(n[0]):
        slab[:, 0] = lo[0] + cell * (i + 0.5)
        ina = solid_a.contains(slab)
        inb = solid_b.contains(slab)
        na += int(ina.sum())
        nb += int(inb.sum())
        nab += int((ina & inb).sum())
    return na, nb, nab


def iou(solid_a, solid_b, cell_size: float) -> float:
    """Intersection-over-union of two solids on a shared voxel grid."""
    lo_a, hi_a = solid_a.bounds()
    lo_b, hi_b = solid_b.bounds()
    lo, n = _common_grid(np.minimum(lo_a, lo_b), np.maximum(hi_a, hi_b), cell_size)
    na, nb, nab = _count_occupancy(solid_a, solid_b, lo, n, cell_size)
    union = na + nb - nab
    if union == 0:
        raise UndefinedIouError("both solids are empty at this resolution")
    return nab / union


def reconstruct_from_projections(contours, grids, cell_size: float,
                                 planes=None) -> VoxelGrid:
    """Carve a voxel volume from three projection contours (local frame).

    Keeps a voxel iff its center projects inside all three contours.
    """
    if planes is None:
        from .measurement import default_projection_planes
        planes = default_projection_planes()
    solid = CarvedSolid(contours, grids, planes)
    if solid.rmax <= 0.0:
        return VoxelGrid(origin=np.full(3, -0.5 * cell_size), cell=cell_size,
                         occupancy=np.zeros((1, 1, 1), dtype=bool))
    lo, n = _common_grid(np.full(3, -solid.rmax), np.full(3, solid.rmax), cell_size)
    grid = VoxelGrid(origin=lo, cell=cell_size, occupancy=np.zeros(tuple(n), dtype=bool))
    occ = solid.contains(grid.centers())
    grid.occupancy = occ.reshape(tuple(n))
    return grid


# ---------------------------------------------------------------------------
# tracking error metrics


def velocity_rmse(est: np.ndarray, truth: np.ndarray) -> float:
    """Root mean squared Euclidean velocity error over the sequence."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError("velocity sequences must have equal length")
    return float(np.sqrt(np.mean(np.sum((est - truth) ** 2, axis=1))))


def orientation_errors(est_q: np.ndarray, true_q: np.ndarray,
                       est_w: np.ndarray = None, true_w: np.ndarray = None):
    """Per-frame attitude error angle and (optionally) angular-rate RMSE.

    The error angle is the rotation angle of ``q_est (.) conj(q_true)``;
    the quaternion sign ambiguity cancels in the angle.
    """
    est_q = np.asarray(est_q, dtype=float)
    true_q = np.asarray(true_q, dtype=float)
    if est_q.shape != true_q.shape:
        raise ValueError("quaternion sequences must have equal length")
    angles = np.array([
        rotation_angle(quat_product(qe, quat_conjugate(qt)))
        for qe, qt in zip(est_q, true_q)
    ])
    rate_rmse = None
    if est_w is not None and true_w is not None:
        est_w = np.asarray(est_w, dtype=float)
        true_w = np.asarray(true_w, dtype=float)
        if est_w.shape != true_w.shape:
            raise ValueError("rate sequences must have equal length")
        rate_rmse = float(np.sqrt(np.mean(np.sum((est_w - true_w) ** 2, axis=1))))
    return angles, rate_rmse
