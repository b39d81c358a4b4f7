"""Kernels, basis grids, the extent-model prior and the recursive-GP
projection, including the recursive-vs-batch equivalence oracle."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gpeot.geometry import spherical_to_cart
from gpeot.gp import (GpHyperparams, SingularKernelError, build_extent_model,
                      cross_covariance, gp_projection, icosphere,
                      kernel_geodesic3d, kernel_matrix, kernel_periodic2pi,
                      kernel_periodic_pi, make_circle_grid, make_sphere_grid)

HYPER = GpHyperparams(mu_r=0.0, sigma_f=1.0, sigma_r=0.2, ell=np.pi / 8,
                      meas_noise_var=0.01)
PEAK = HYPER.sigma_f ** 2 + HYPER.sigma_r ** 2


class TestKernels:
    def test_geodesic_at_coincident_inputs(self):
        g = np.array([0.3, -0.2])
        assert_allclose(kernel_geodesic3d(g, g, HYPER), PEAK, atol=1e-9)

    def test_geodesic_antipodal(self):
        k = kernel_geodesic3d(np.array([0.0, np.pi / 2]), np.array([0.0, -np.pi / 2]), HYPER)
        expect = HYPER.sigma_f ** 2 * np.exp(-np.pi ** 2 / (2 * HYPER.ell ** 2)) + HYPER.sigma_r ** 2
        assert_allclose(k, expect, rtol=1e-12)

    def test_geodesic_symmetry(self, rng):
        g1 = np.stack([rng.uniform(-np.pi, np.pi, 50),
                       rng.uniform(-np.pi / 2, np.pi / 2, 50)], axis=1)
        g2 = np.stack([rng.uniform(-np.pi, np.pi, 50),
                       rng.uniform(-np.pi / 2, np.pi / 2, 50)], axis=1)
        assert_allclose(kernel_geodesic3d(g1, g2, HYPER),
                        kernel_geodesic3d(g2, g1, HYPER), rtol=1e-12)

    def test_periodic2pi_values(self):
        assert_allclose(kernel_periodic2pi(0.7, 0.7, HYPER), PEAK, rtol=1e-12)
        assert_allclose(kernel_periodic2pi(0.7, 0.7 + 2 * np.pi, HYPER), PEAK, atol=1e-12)
        expect = HYPER.sigma_f ** 2 * np.exp(-2.0 / HYPER.ell ** 2) + HYPER.sigma_r ** 2
        assert_allclose(kernel_periodic2pi(0.0, np.pi, HYPER), expect, rtol=1e-12)

    def test_periodic2pi_depends_on_difference_mod_2pi(self, rng):
        t = rng.uniform(0, 2 * np.pi, 50)
        s = rng.uniform(0, 2 * np.pi, 50)
        shift = rng.uniform(-10, 10, 50)
        wrap = 2 * np.pi * rng.integers(-3, 4, 50)
        assert_allclose(kernel_periodic2pi(t + shift, s + shift, HYPER),
                        kernel_periodic2pi(t, s, HYPER), rtol=1e-9)
        assert_allclose(kernel_periodic2pi(t + wrap, s, HYPER),
                        kernel_periodic2pi(t, s, HYPER), atol=1e-9)

    def test_periodic_pi_values(self):
        assert_allclose(kernel_periodic_pi(0.4, 0.4, HYPER), PEAK, rtol=1e-12)
        assert_allclose(kernel_periodic_pi(0.4, 0.4 + np.pi, HYPER), PEAK, atol=1e-12)

    def test_periodic_pi_symmetry_and_mod(self, rng):
        t = rng.uniform(0, 2 * np.pi, 50)
        s = rng.uniform(0, 2 * np.pi, 50)
        assert_allclose(kernel_periodic_pi(t, s, HYPER),
                        kernel_periodic_pi(s, t, HYPER), rtol=1e-12)
        wrap = np.pi * rng.integers(-3, 4, 50)
        assert_allclose(kernel_periodic_pi(t + wrap, s, HYPER),
                        kernel_periodic_pi(t, s, HYPER), atol=1e-9)

    def test_hyperparameter_validation(self):
        with pytest.raises(ValueError):
            GpHyperparams(sigma_f=0.0)
        with pytest.raises(ValueError):
            GpHyperparams(ell=-1.0)


class TestGrids:
    def test_icosphere_counts(self):
        for level, nv in [(0, 12), (1, 42), (2, 162), (3, 642)]:
            verts, faces = icosphere(level)
            assert verts.shape == (nv, 3)
            assert faces.shape == (20 * 4 ** level, 3)
            assert_allclose(np.linalg.norm(verts, axis=1), 1.0, atol=1e-12)

    def test_sphere_grid_level3_has_642_points(self):
        assert make_sphere_grid(3).count == 642

    def test_sphere_grid_points_distinct_up_to_level4(self):
        for level in range(5):
            grid = make_sphere_grid(level)
            dots = grid.dirs @ grid.dirs.T
            np.fill_diagonal(dots, -1.0)
            # strictly positive minimum pairwise angle
            assert np.arccos(np.clip(dots.max(), -1, 1)) > 1e-3

    def test_sphere_grid_angles_match_dirs(self):
        grid = make_sphere_grid(2)
        assert_allclose(spherical_to_cart(grid.inputs), grid.dirs, atol=1e-12)

    def test_circle_grid_values(self):
        g4 = make_circle_grid(4)
        assert_allclose(g4.inputs, [0.0, np.pi / 2, np.pi, 3 * np.pi / 2], atol=1e-15)
        g50 = make_circle_grid(50)
        assert_allclose(np.diff(g50.inputs), 2 * np.pi / 50, atol=1e-12)
        assert np.all(g50.inputs >= 0.0) and np.all(g50.inputs < 2 * np.pi)

    def test_circle_grid_minimum_size(self):
        with pytest.raises(ValueError):
            make_circle_grid(2)


class TestExtentModel:
    def test_zero_prior_mean(self):
        model = build_extent_model(make_circle_grid(10), HYPER, "periodic2pi")
        assert_allclose(model.prior_mean, 0.0)

    def test_nonzero_prior_mean(self):
        hyper = GpHyperparams(mu_r=1.5, ell=np.pi / 8)
        model = build_extent_model(make_circle_grid(10), hyper, "periodic2pi")
        assert_allclose(model.prior_mean, 1.5)

    def test_prior_cov_diagonal(self):
        model = build_extent_model(make_sphere_grid(1), HYPER, "geodesic3d")
        assert_allclose(np.diag(model.prior_cov), PEAK, rtol=1e-6)

    def test_prior_cov_psd_at_paper_scale(self):
        model = build_extent_model(make_sphere_grid(3), HYPER, "geodesic3d")
        eig = np.linalg.eigvalsh(model.prior_cov)
        assert eig.min() >= -1e-8

    def test_gram_inverse_is_inverse(self):
        for grid, kind in [(make_sphere_grid(2), "geodesic3d"),
                           (make_circle_grid(50), "periodic2pi"),
                           (make_circle_grid(50), "periodic_pi")]:
            model = build_extent_model(grid, HYPER, kind)
            resid = model.gram_inverse @ model.gram - np.eye(grid.count)
            assert np.abs(resid).max() < 1e-6

    def test_coincident_inputs_rejected_by_grid(self):
        grid = make_circle_grid(8)
        bad = grid.inputs.copy()
        bad[1] = bad[0]
        from gpeot.gp import BasisGrid
        with pytest.raises(ValueError):
            BasisGrid(kind="circle", inputs=bad)

    def test_degenerate_hyperparameters_raise(self):
        # overflowing amplitude produces a non-factorizable Gram
        with np.errstate(over="ignore", invalid="ignore"), \
                pytest.raises(SingularKernelError):
            build_extent_model(make_circle_grid(8),
                               GpHyperparams(sigma_f=1e200), "periodic2pi")

    def test_unknown_kernel_kind(self):
        with pytest.raises(ValueError):
            build_extent_model(make_circle_grid(8), HYPER, "linear")


class TestGpProjection:
    def test_readout_at_grid_point_is_basis_row(self):
        model = build_extent_model(make_sphere_grid(2), HYPER, "geodesic3d")
        for i in (0, 17, 101):
            h, r, c = gp_projection(model.grid.inputs[i], model)
            expect = np.zeros(model.grid.count)
            expect[i] = 1.0
            assert np.abs(h[0] - expect).max() < 1e-4
            assert_allclose(r[0], HYPER.meas_noise_var, atol=1e-6)

    def test_zero_mean_correction_vanishes(self, rng):
        model = build_extent_model(make_circle_grid(20), HYPER, "periodic2pi")
        _, _, c = gp_projection(rng.uniform(0, 2 * np.pi, 30), model)
        assert_allclose(c, 0.0, atol=1e-12)

    def test_constant_mean_correction_vanishes_at_grid_points(self):
        hyper = GpHyperparams(mu_r=2.0, ell=np.pi / 8)
        model = build_extent_model(make_circle_grid(20), hyper, "periodic2pi")
        _, _, c = gp_projection(model.grid.inputs, model)
        # read-out rows sum to one at the grid points, so the correction
        # cancels there
        assert np.abs(c).max() < 1e-3

    def test_residual_variance_floor(self, rng):
        model = build_extent_model(make_sphere_grid(2), HYPER, "geodesic3d")
        u = np.stack([rng.uniform(-np.pi, np.pi, 200),
                      rng.uniform(-np.pi / 2, np.pi / 2, 200)], axis=1)
        _, r, _ = gp_projection(u, model)
        assert np.all(r >= HYPER.meas_noise_var - 1e-9)

    def test_cross_covariance_shape(self):
        model = build_extent_model(make_circle_grid(12), HYPER, "periodic2pi")
        assert cross_covariance(np.array([0.1, 0.2, 0.3]), model).shape == (3, 12)


class TestRecursiveBatchEquivalence:
    """Sequentially conditioning the basis summary on measurements taken at
    basis points must reproduce batch GP regression exactly."""

    def test_posterior_matches_batch_gp(self):
        hyper = GpHyperparams(mu_r=0.0, sigma_f=1.0, sigma_r=0.2, ell=0.8,
                              meas_noise_var=0.1 ** 2)
        grid = make_circle_grid(5)
        model = build_extent_model(grid, hyper, "periodic2pi")
        meas_idx = [0, 2, 3]
        m = np.array([1.1, 0.7, -0.4])
        u_meas = grid.inputs[meas_idx]

        # batch GP regression (independent oracle, raw kernel algebra)
        K_mm = kernel_matrix("periodic2pi", u_meas, u_meas, hyper)
        K_fm = kernel_matrix("periodic2pi", grid.inputs, u_meas, hyper)
        K_ff = kernel_matrix("periodic2pi", grid.inputs, grid.inputs, hyper)
        Ky = K_mm + hyper.meas_noise_var * np.eye(3)
        mean_batch = K_fm @ np.linalg.solve(Ky, m)
        cov_batch = K_ff - K_fm @ np.linalg.solve(Ky, K_fm.T)

        # recursive Kalman conditioning through the projection quantities
        mean = model.prior_mean.copy()
        cov = model.prior_cov.copy()
        for u, mi in zip(u_meas, m):
            h, r, c = gp_projection(u, model)
            h, r, c = h[0], r[0], c[0]
            s = h @ cov @ h + r
            k = cov @ h / s
            mean = mean + k * (mi - (h @ mean + c))
            cov = cov - np.outer(k, h @ cov)

        assert np.abs(mean - mean_batch).max() < 1e-6
        assert np.abs(cov - cov_batch).max() < 1e-6
