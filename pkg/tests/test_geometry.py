"""Quaternion algebra, rotations and spherical-coordinate utilities."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from gpeot.geometry import (QUAT_IDENTITY, DegenerateDirectionError,
                            cart_to_spherical, cross_matrix, delta_quat,
                            geodesic_angle, quat_conjugate, quat_exp,
                            quat_normalize, quat_product, rot_matrix,
                            rotation_angle, spherical_to_cart)


def random_unit_quats(n, seed=0):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def oracle_matrix(axis, angle):
    """Axis-angle rotation matrix in the package's frame convention.

    The package composes rotations on the left factor of the quaternion
    product, which corresponds to the negated rotation vector in scipy's
    active convention.
    """
    return Rotation.from_rotvec(-angle * np.asarray(axis, dtype=float)).as_matrix()


class TestQuatProduct:
    def test_identity_element(self):
        for p in random_unit_quats(20, seed=1):
            assert_allclose(quat_product(p, QUAT_IDENTITY), p, atol=1e-12)
            assert_allclose(quat_product(QUAT_IDENTITY, p), p, atol=1e-12)

    def test_conjugate_is_inverse(self):
        for p in random_unit_quats(20, seed=2):
            assert_allclose(quat_product(p, quat_conjugate(p)), QUAT_IDENTITY, atol=1e-12)

    def test_two_quarter_turns_make_a_half_turn(self):
        # two successive 90 degree z-rotations equal the 180 degree one,
        # whose matrix is the same in either frame convention
        q90 = delta_quat([0.0, 0.0, 2.0])  # tan(45 deg) = 1
        q180 = quat_product(q90, q90)
        assert_allclose(rot_matrix(q180), np.diag([-1.0, -1.0, 1.0]), atol=1e-12)

    def test_unit_norm_after_long_products(self):
        q = QUAT_IDENTITY
        for p in random_unit_quats(500, seed=3):
            q = quat_product(q, p)
            assert abs(np.linalg.norm(q) - 1.0) < 1e-9


class TestRotMatrix:
    def test_identity_quaternion(self):
        assert_allclose(rot_matrix(QUAT_IDENTITY), np.eye(3), atol=1e-15)

    def test_orthonormal_det_plus_one(self):
        for q in random_unit_quats(100, seed=4):
            R = rot_matrix(q)
            assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert_allclose(np.linalg.det(R), 1.0, atol=1e-12)

    def test_axis_angle_oracle_90deg_x(self):
        # delta_quat([2, 0, 0]) encodes a 90 degree rotation about x
        R = rot_matrix(delta_quat([2.0, 0.0, 0.0]))
        assert_allclose(R, oracle_matrix([1.0, 0.0, 0.0], np.pi / 2), atol=1e-12)
        # frozen expected value, by direct substitution into the formula
        assert_allclose(R, np.array([[1.0, 0.0, 0.0],
                                     [0.0, 0.0, 1.0],
                                     [0.0, -1.0, 0.0]]), atol=1e-12)

    def test_axis_angle_oracle_random(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(-np.pi, np.pi)
            a = 2.0 * np.tan(angle / 2.0) * axis
            assert_allclose(rot_matrix(delta_quat(a)), oracle_matrix(axis, angle), atol=1e-9)

    def test_homomorphism(self):
        ps = random_unit_quats(100, seed=6)
        qs = random_unit_quats(100, seed=7)
        for p, q in zip(ps, qs):
            assert_allclose(rot_matrix(p) @ rot_matrix(q),
                            rot_matrix(quat_product(p, q)), atol=1e-8)


class TestCrossMatrix:
    def test_zero_vector(self):
        assert_allclose(cross_matrix(np.zeros(3)), np.zeros((3, 3)))

    def test_annihilates_itself(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            v = rng.standard_normal(3)
            assert_allclose(cross_matrix(v) @ v, np.zeros(3), atol=1e-12)

    def test_basis_vectors(self):
        ex, ey, ez = np.eye(3)
        assert_allclose(cross_matrix(ex) @ ey, ez, atol=1e-15)

    def test_matches_np_cross(self):
        rng = np.random.default_rng(9)
        v, w = rng.standard_normal(3), rng.standard_normal(3)
        assert_allclose(cross_matrix(v) @ w, np.cross(v, w), atol=1e-12)


class TestDeltaQuat:
    def test_zero_gives_identity(self):
        assert_allclose(delta_quat(np.zeros(3)), QUAT_IDENTITY)

    def test_direct_substitution(self):
        assert_allclose(delta_quat([2.0, 0.0, 0.0]),
                        np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2.0), atol=1e-15)

    def test_unit_norm_for_large_deviations(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            a = rng.standard_normal(3) * rng.uniform(0.0, 100.0)
            assert abs(np.linalg.norm(delta_quat(a)) - 1.0) < 1e-12

    def test_quat_exp_agrees_for_small_rotations(self):
        rng = np.random.default_rng(11)
        rho = 1e-4 * rng.standard_normal(3)
        assert_allclose(quat_exp(rho), delta_quat(rho), atol=1e-9)


class TestSpherical:
    def test_axes(self):
        assert_allclose(cart_to_spherical([1.0, 0.0, 0.0]), [0.0, 0.0], atol=1e-15)
        assert_allclose(cart_to_spherical([0.0, 0.0, 1.0]), [0.0, np.pi / 2], atol=1e-15)
        assert_allclose(cart_to_spherical([1.0, 1.0, 0.0]), [np.pi / 4, 0.0], atol=1e-15)

    def test_zero_vector_raises(self):
        with pytest.raises(DegenerateDirectionError):
            cart_to_spherical(np.zeros(3))

    def test_ranges(self):
        rng = np.random.default_rng(12)
        pts = rng.standard_normal((500, 3))
        ang = cart_to_spherical(pts)
        assert np.all(np.abs(ang[:, 0]) <= np.pi)
        assert np.all(np.abs(ang[:, 1]) <= np.pi / 2)

    def test_roundtrip_off_poles(self):
        rng = np.random.default_rng(13)
        theta = rng.uniform(-np.pi, np.pi, 200)
        phi = rng.uniform(-np.pi / 2 + 1e-3, np.pi / 2 - 1e-3, 200)
        ang = np.stack([theta, phi], axis=1)
        back = cart_to_spherical(spherical_to_cart(ang))
        assert_allclose(back, ang, atol=1e-10)


class TestGeodesicAngle:
    def test_same_pole_different_azimuth(self):
        # (0, pi/2) and (pi, pi/2) address the same point
        assert_allclose(geodesic_angle([0.0, np.pi / 2], [np.pi, np.pi / 2]), 0.0, atol=1e-12)

    def test_opposite_poles(self):
        assert_allclose(geodesic_angle([0.0, np.pi / 2], [0.0, -np.pi / 2]), np.pi, atol=1e-12)

    def test_coincident_inputs(self):
        # arccos resolves angles near zero only to ~sqrt(eps)
        rng = np.random.default_rng(14)
        for _ in range(20):
            g = np.array([rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi / 2, np.pi / 2)])
            assert_allclose(geodesic_angle(g, g), 0.0, atol=1e-7)

    def test_symmetric_bounded_and_zero_iff_coincident(self):
        rng = np.random.default_rng(15)
        g1 = np.stack([rng.uniform(-np.pi, np.pi, 200),
                       rng.uniform(-np.pi / 2, np.pi / 2, 200)], axis=1)
        g2 = np.stack([rng.uniform(-np.pi, np.pi, 200),
                       rng.uniform(-np.pi / 2, np.pi / 2, 200)], axis=1)
        d12 = geodesic_angle(g1, g2)
        d21 = geodesic_angle(g2, g1)
        assert_allclose(d12, d21, atol=1e-12)
        assert np.all(d12 >= 0.0) and np.all(d12 <= np.pi)
        # matches the angle between the embedded unit vectors
        u1, u2 = spherical_to_cart(g1), spherical_to_cart(g2)
        expect = np.arccos(np.clip(np.sum(u1 * u2, axis=1), -1.0, 1.0))
        assert_allclose(d12, expect, atol=1e-9)


def test_rotation_angle_double_cover():
    q = delta_quat([0.5, -0.2, 0.1])
    assert_allclose(rotation_angle(q), rotation_angle(-q), atol=1e-15)
    assert_allclose(rotation_angle(QUAT_IDENTITY), 0.0, atol=1e-15)


def test_quat_normalize_rejects_zero():
    with pytest.raises(ValueError):
        quat_normalize(np.zeros(4))
