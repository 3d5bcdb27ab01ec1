"""Field quantities and kernels against independently coded scalar oracles."""

import cmath
import math

import numpy as np
import pytest

from risimage import em_core as em
from risimage import scene as sc
from risimage.errors import (
    CacheMismatch,
    CoincidentPoints,
    DimensionMismatch,
    KernelSizeError,
    KindMismatch,
)

from conftest import small_config

# Constants restated here so the oracles share nothing with the implementation.
MU = 4.0 * math.pi * 1e-7
EPS = 8.8541878128e-12
ETA = math.sqrt(MU / EPS)


def oracle_jx(cfg, y):
    k = 2.0 * math.pi / cfg.wavelength
    return (
        2.0
        * cfg.incident_amplitude
        / ETA
        * math.cos(cfg.incident_elevation)
        * cmath.exp(-1j * k * math.sin(cfg.incident_elevation) * y)
    )


def oracle_z_entry(cfg, target_pt, ris_pt, cell_area):
    k = 2.0 * math.pi / cfg.wavelength
    r = math.dist(target_pt, ris_pt)
    return (
        -(1.0 + 1j * k * r)
        / (4.0 * math.pi * r**3)
        * cell_area
        * cfg.target_distance
        * oracle_jx(cfg, ris_pt[1])
        * cmath.exp(-1j * k * r)
    )


def oracle_green_row(cfg, receiver, point):
    k = 2.0 * math.pi / cfg.wavelength
    rr = math.dist(receiver, point)
    rhat = [(receiver[i] - point[i]) / rr for i in range(3)]
    g = cmath.exp(-1j * k * rr) / (4.0 * math.pi * rr)
    radial = 3.0 / (k * rr) ** 2 + 3j / (k * rr) - 1.0
    transverse = 1.0 / (k * rr) ** 2 + 1j / (k * rr) - 1.0
    return [
        (radial * rhat[0] * rhat[a] - (transverse if a == 0 else 0.0)) * g for a in range(3)
    ]


def oracle_e_factors(cfg, target_pt, ris_pt):
    k = 2.0 * math.pi / cfg.wavelength
    r = math.dist(target_pt, ris_pt)
    kr = k * r
    dx = target_pt[0] - ris_pt[0]
    dy = target_pt[1] - ris_pt[1]
    near = (3.0 + 3j * kr - kr**2) / r**5
    t_xx = (-1.0 - 1j * kr + kr**2) / r**3 + near * dx**2
    t_xy = near * dy * dx
    t_xz = near * target_pt[2] * dx
    return t_xx, t_xy, t_xz


def oracle_y_entry(cfg, receiver, target_pt, ris_pt, cell_area):
    k = 2.0 * math.pi / cfg.wavelength
    r = math.dist(target_pt, ris_pt)
    g_row = oracle_green_row(cfg, receiver, target_pt)
    t_xx, t_xy, t_xz = oracle_e_factors(cfg, target_pt, ris_pt)
    return (
        -1j
        * ETA
        / (4.0 * math.pi * k)
        * cell_area
        * oracle_jx(cfg, ris_pt[1])
        * cmath.exp(-1j * k * r)
        * (g_row[0] * t_xx + g_row[1] * t_xy + g_row[2] * t_xz)
    )


class TestIncidentCurrent:
    def test_unit_phase_at_origin(self, small_scene):
        scene, _ = small_scene
        value = em.incident_current(scene, (0.0, 0.0, 0.0))
        assert value == pytest.approx(2.0 * math.cos(math.radians(30.0)) / ETA)
        assert value.imag == 0.0

    def test_grazing_incidence_vanishes(self):
        scene = sc.validate_scene(small_config(incident_elevation=math.pi / 2.0))
        assert abs(em.incident_current(scene, (0.1, 0.2, 0.0))) < 1e-15

    def test_quarter_wave_path_phase(self, small_scene):
        scene, _ = small_scene
        cfg = scene.config
        y = cfg.wavelength / (4.0 * math.sin(cfg.incident_elevation))
        value = em.incident_current(scene, (0.0, y))
        assert cmath.phase(value) == pytest.approx(-math.pi / 2.0)


class TestKernel2d:
    def test_entries_match_scalar_oracle(self, small_scene):
        scene, grids = small_scene
        kernel = em.kernel_2d(scene, grids)
        rng = np.random.default_rng(7)
        for _ in range(100):
            m = int(rng.integers(grids.target_points.shape[0]))
            n = int(rng.integers(grids.ris_points.shape[0]))
            expected = oracle_z_entry(
                scene.config, grids.target_points[m], grids.ris_points[n], grids.ris_cell_area
            )
            assert kernel.entries[m, n] == pytest.approx(expected, rel=1e-12)

    def test_entries_finite_and_nonzero(self, desk_scene):
        scene, grids = desk_scene
        kernel = em.kernel_2d(scene, grids)
        assert np.all(np.isfinite(kernel.entries))
        assert np.all(np.abs(kernel.entries) > 0.0)

    def test_x_mirror_symmetry(self):
        # |Z| depends only on the source-target distance, so the x-mirrored
        # pair of (target, aperture) points has equal magnitude
        scene = sc.validate_scene(small_config())
        grids = sc.sample_grids(scene)
        kernel = em.kernel_2d(scene, grids)
        x_t = grids.target_points[:, 0]
        x_r = grids.ris_points[:, 0]
        m_pos = int(np.argmax(x_t))
        n_pos = int(np.argmax(x_r))
        m_neg = int(np.argmin((grids.target_points[:, 0] + x_t[m_pos]) ** 2 + (grids.target_points[:, 1] - grids.target_points[m_pos, 1]) ** 2))
        n_neg = int(np.argmin((grids.ris_points[:, 0] + x_r[n_pos]) ** 2 + (grids.ris_points[:, 1] - grids.ris_points[n_pos, 1]) ** 2))
        assert abs(kernel.entries[m_pos, n_pos]) == pytest.approx(abs(kernel.entries[m_neg, n_neg]), rel=1e-12)

    def test_far_entry_magnitude_halves_when_distance_doubles(self):
        # on-axis, kR >> 1: |Z| ~ 1/z'
        near = sc.validate_scene(small_config(z_prime=0.2))
        far = sc.validate_scene(small_config(z_prime=0.4))
        g_near, g_far = sc.sample_grids(near), sc.sample_grids(far)
        centre_m = 8 * 4 + 4
        centre_n = 16 * 8 + 8
        z_near = oracle_z_entry(near.config, g_near.target_points[centre_m], g_near.ris_points[centre_n], g_near.ris_cell_area)
        z_far = oracle_z_entry(far.config, g_far.target_points[centre_m], g_far.ris_points[centre_n], g_far.ris_cell_area)
        assert em.kernel_2d(near, g_near).entries[centre_m, centre_n] == pytest.approx(z_near, rel=1e-12)
        assert abs(z_far) / abs(z_near) == pytest.approx(0.5, rel=0.05)

    def test_sizing_cap_raises_before_allocation(self, small_scene):
        scene, grids = small_scene
        with pytest.raises(KernelSizeError):
            em.kernel_2d(scene, grids, entry_cap=100)

    def test_kind_mismatch(self, volume_scene):
        scene, grids = volume_scene
        with pytest.raises(KindMismatch):
            em.kernel_2d(scene, grids)


class TestHOutY:
    def test_zero_coefficients_zero_field(self, small_scene):
        scene, grids = small_scene
        kernel = em.kernel_2d(scene, grids)
        np.testing.assert_array_equal(em.h_out_y(kernel, np.zeros(scene.n_ris)), 0.0)

    def test_unit_coefficient_selects_column(self, small_scene):
        scene, grids = small_scene
        kernel = em.kernel_2d(scene, grids)
        p = np.zeros(scene.n_ris, dtype=complex)
        p[5] = 1.0
        np.testing.assert_allclose(em.h_out_y(kernel, p), kernel.entries[:, 5], rtol=1e-15)

    def test_superposition(self, small_scene):
        scene, grids = small_scene
        kernel = em.kernel_2d(scene, grids)
        rng = np.random.default_rng(3)
        p1 = rng.standard_normal(scene.n_ris) + 1j * rng.standard_normal(scene.n_ris)
        p2 = rng.standard_normal(scene.n_ris) + 1j * rng.standard_normal(scene.n_ris)
        np.testing.assert_allclose(
            em.h_out_y(kernel, p1 + p2),
            em.h_out_y(kernel, p1) + em.h_out_y(kernel, p2),
            rtol=1e-12,
        )

    def test_length_mismatch(self, small_scene):
        scene, grids = small_scene
        kernel = em.kernel_2d(scene, grids)
        with pytest.raises(DimensionMismatch):
            em.h_out_y(kernel, np.zeros(scene.n_ris + 1))


class TestPsf:
    def test_modulus_identity(self, small_scene):
        scene, grids = small_scene
        point = grids.target_points[3]
        k = scene.wavenumber
        r = math.dist(point, scene.config.receiver_pos)
        assert abs(em.psf(scene, point)) == pytest.approx(k * ETA / (4.0 * math.pi * r))

    def test_phase_identity(self, small_scene):
        scene, grids = small_scene
        point = grids.target_points[11]
        k = scene.wavenumber
        r = math.dist(point, scene.config.receiver_pos)
        expected = (-math.pi / 2.0 - k * r) % (2.0 * math.pi)
        assert cmath.phase(em.psf(scene, point)) % (2.0 * math.pi) == pytest.approx(expected, abs=1e-9)

    def test_equidistant_points_equal_magnitude(self, small_scene):
        scene, _ = small_scene
        x_r, y_r, z_r = scene.config.receiver_pos
        p1 = (x_r + 1.0, y_r, z_r)
        p2 = (x_r - 1.0, y_r, z_r)
        assert abs(em.psf(scene, p1)) == pytest.approx(abs(em.psf(scene, p2)), rel=1e-12)


class TestGreenTensor:
    K = 2.0 * math.pi / 0.01

    def test_symmetric_for_random_pairs(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            r_r = rng.uniform(-1.0, 1.0, 3)
            r_p = rng.uniform(-1.0, 1.0, 3)
            tensor = em.green_tensor(r_r, r_p, self.K).matrix
            np.testing.assert_array_equal(tensor, tensor.T)

    def test_far_field_limit(self):
        # kR = 1e4: tensor tends to (I - Rhat Rhat^T) g
        direction = np.array([2.0, -1.0, 2.0]) / 3.0
        r_r = direction * (1e4 / self.K)
        tensor = em.green_tensor(r_r, np.zeros(3), self.K).matrix
        rr = float(np.linalg.norm(r_r))
        g = cmath.exp(-1j * self.K * rr) / (4.0 * math.pi * rr)
        limit = (np.eye(3) - np.outer(direction, direction)) * g
        assert np.linalg.norm(tensor - limit) / np.linalg.norm(limit) < 1e-3

    def test_matches_finite_difference_operator(self):
        # central differences of (I + grad grad / k^2) g at step 1e-4 lambda
        rng = np.random.default_rng(5)
        step = 1e-4 * 0.01

        def g_scalar(r_r, r_p):
            rr = float(np.linalg.norm(r_r - r_p))
            return cmath.exp(-1j * self.K * rr) / (4.0 * math.pi * rr)

        for _ in range(20):
            r_p = rng.uniform(-0.3, 0.3, 3)
            r_r = r_p + rng.uniform(0.2, 1.0) * _random_direction(rng)
            tensor = em.green_tensor(r_r, r_p, self.K).matrix
            fd = np.empty((3, 3), dtype=complex)
            for a in range(3):
                for b in range(3):
                    ea = np.eye(3)[a] * step
                    eb = np.eye(3)[b] * step
                    if a == b:
                        second = (g_scalar(r_r + ea, r_p) - 2.0 * g_scalar(r_r, r_p) + g_scalar(r_r - ea, r_p)) / step**2
                    else:
                        second = (
                            g_scalar(r_r + ea + eb, r_p)
                            - g_scalar(r_r + ea - eb, r_p)
                            - g_scalar(r_r - ea + eb, r_p)
                            + g_scalar(r_r - ea - eb, r_p)
                        ) / (4.0 * step**2)
                    fd[a, b] = (g_scalar(r_r, r_p) if a == b else 0.0) + second / self.K**2
            assert np.abs(tensor - fd).max() / np.abs(tensor).max() < 1e-4

    def test_coincident_points_rejected(self):
        with pytest.raises(CoincidentPoints):
            em.green_tensor((1.0, 2.0, 3.0), (1.0, 2.0, 3.0), self.K)


def _random_direction(rng):
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


class TestEOutComponents:
    def test_zero_coefficients(self, volume_scene):
        scene, grids = volume_scene
        point = grids.target_points[0]
        assert em.e_out_components(scene, grids, np.zeros(scene.n_ris), point) == (0.0, 0.0, 0.0)

    def test_sample_directly_below_point_kills_transverse_terms(self, volume_scene):
        scene, grids = volume_scene
        n = 4
        ris_pt = grids.ris_points[n]
        point = np.array([ris_pt[0], ris_pt[1], 0.3])
        p = np.zeros(scene.n_ris, dtype=complex)
        p[n] = 1.0
        e_x, e_y, e_z = em.e_out_components(scene, grids, p, point)
        assert e_x != 0.0
        assert e_y == 0.0 and e_z == 0.0

    def test_single_sample_matches_oracle(self, volume_scene):
        scene, grids = volume_scene
        rng = np.random.default_rng(13)
        k = scene.wavenumber
        for _ in range(10):
            n = int(rng.integers(scene.n_ris))
            point = grids.target_points[int(rng.integers(grids.target_points.shape[0]))]
            weight = complex(rng.standard_normal(), rng.standard_normal())
            p = np.zeros(scene.n_ris, dtype=complex)
            p[n] = weight
            t_xx, t_xy, t_xz = oracle_e_factors(scene.config, point, grids.ris_points[n])
            r = math.dist(point, grids.ris_points[n])
            common = (
                -1j * ETA / (4.0 * math.pi * k)
                * grids.ris_cell_area
                * oracle_jx(scene.config, grids.ris_points[n][1])
                * weight
                * cmath.exp(-1j * k * r)
            )
            e = em.e_out_components(scene, grids, p, point)
            assert e[0] == pytest.approx(common * t_xx, rel=1e-12)
            assert e[1] == pytest.approx(common * t_xy, rel=1e-12)
            assert e[2] == pytest.approx(common * t_xz, rel=1e-12)


class TestKernel3d:
    def test_entries_match_scalar_oracle(self, volume_scene):
        scene, grids = volume_scene
        kernel = em.kernel_3d(scene, grids)
        rng = np.random.default_rng(17)
        receiver = scene.config.receiver_pos
        for _ in range(100):
            m = int(rng.integers(grids.target_points.shape[0]))
            n = int(rng.integers(grids.ris_points.shape[0]))
            expected = oracle_y_entry(
                scene.config, receiver, grids.target_points[m], grids.ris_points[n], grids.ris_cell_area
            )
            assert kernel.entries[m, n] == pytest.approx(expected, rel=1e-12)

    def test_zero_coefficients_zero_field(self, volume_scene):
        scene, grids = volume_scene
        kernel = em.kernel_3d(scene, grids)
        np.testing.assert_array_equal(kernel.entries @ np.zeros(scene.n_ris), 0.0)

    def test_two_path_consistency(self, volume_scene):
        # contrast-weighted receiver sum equals the Green-row contraction of
        # the aperture field components, voxel by voxel
        scene, grids = volume_scene
        kernel = em.kernel_3d(scene, grids)
        rng = np.random.default_rng(23)
        receiver = np.asarray(scene.config.receiver_pos)
        k = scene.wavenumber
        chi = np.zeros(scene.n_target, dtype=complex)
        chi[[1, 6]] = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        for _ in range(5):
            p = rng.standard_normal(scene.n_ris) + 1j * rng.standard_normal(scene.n_ris)
            direct = k**2 * np.sum(chi * (kernel.entries @ p)) * grids.target_cell_measure
            contracted = 0.0
            for m in np.flatnonzero(chi):
                g_row = em.green_tensor(receiver, grids.target_points[m], k).matrix[0]
                e_vec = em.e_out_components(scene, grids, p, grids.target_points[m])
                contracted += chi[m] * (g_row @ np.asarray(e_vec))
            contracted *= k**2 * grids.target_cell_measure
            assert abs(direct - contracted) / abs(direct) < 1e-10


class TestKernelCache:
    def test_round_trip(self, small_scene, tmp_path):
        scene, grids = small_scene
        kernel = em.kernel_2d(scene, grids)
        path = tmp_path / "kernel.bin"
        em.save_kernel(path, kernel)
        loaded = em.load_kernel(path, expected_fingerprint=scene.fingerprint)
        assert loaded.kind == kernel.kind
        np.testing.assert_array_equal(loaded.entries, kernel.entries)

    def test_fingerprint_mismatch_rejected(self, small_scene, tmp_path):
        scene, grids = small_scene
        path = tmp_path / "kernel.bin"
        em.save_kernel(path, em.kernel_2d(scene, grids))
        with pytest.raises(CacheMismatch):
            em.load_kernel(path, expected_fingerprint="different")

    def test_truncated_body_rejected(self, small_scene, tmp_path):
        scene, grids = small_scene
        path = tmp_path / "kernel.bin"
        em.save_kernel(path, em.kernel_2d(scene, grids))
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(CacheMismatch):
            em.load_kernel(path)
