import math

import numpy as np
import pytest

from wivision import (
    GridSpec,
    NoiseSubspace,
    PathHypothesis,
    Scene,
    ScenePath,
    SnapshotWindow,
    Spectrum2D,
    covariance,
    detect_peaks,
    noise_subspace,
    noise_subspace_from_window,
    sanitize,
    simulate,
    spectrum,
    virtual_steering_vector,
    windows,
)
from wivision import inject_phase_offsets
from wivision.music import estimate_source_count


def jittered_paths(specs):
    return tuple(ScenePath(PathHypothesis(az, el, tof, aod), gain=gain,
                           phase_jitter=1.0)
                 for az, el, tof, aod, gain in specs)


def make_stream(cfg, geom, paths, snr_db=math.inf, duration=0.1, seed=0):
    return simulate(Scene(tuple(paths), snr_db=snr_db, duration_s=duration,
                          rng_seed=seed), cfg, geom)


def small_grids():
    return GridSpec(tof_grid_s=np.arange(8) * 10e-9,
                    aod_grid_deg=np.array([45.0, 90.0, 135.0]))


class TestWindows:
    def test_window_count_formula(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom, [ScenePath(PathHypothesis(90, 90))],
                             duration=1.0)
        assert len(stream) == 1000
        assert len(windows(stream, 100, 33)) == 28

    def test_unit_window_per_frame(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom, [ScenePath(PathHypothesis(90, 90))],
                             duration=0.02)
        assert len(windows(stream, 1, 1)) == 20

    def test_single_full_window(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom, [ScenePath(PathHypothesis(90, 90))],
                             duration=0.02)
        ws = windows(stream, 20, 5)
        assert len(ws) == 1
        assert ws[0].matrix.shape == (small_geom.dim, 20)

    def test_short_stream_yields_nothing(self, cfg, small_geom, caplog):
        stream = make_stream(cfg, small_geom, [ScenePath(PathHypothesis(90, 90))],
                             duration=0.01)
        with caplog.at_level("WARNING"):
            assert windows(stream, 100, 33) == []
        assert "shorter" in caplog.text

    def test_columns_are_vectorized_frames(self, cfg, small_geom):
        hyp = PathHypothesis(73, 58, 21e-9, 84)
        stream = make_stream(cfg, small_geom, [ScenePath(hyp)], duration=0.01)
        w = windows(stream, 5, 5)[0]
        expected = virtual_steering_vector(cfg, small_geom, hyp).values
        np.testing.assert_allclose(w.matrix[:, 0], expected, atol=1e-12)


class TestCovariance:
    def test_all_ones_column(self):
        w = SnapshotWindow(np.ones((4, 1), dtype=complex), 1, 1)
        np.testing.assert_array_equal(covariance(w), np.ones((4, 4)))

    def test_single_path_rank_one(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom, [ScenePath(PathHypothesis(64, 49))],
                             duration=0.05)
        r = covariance(windows(stream, 50, 50)[0])
        lam = np.linalg.eigvalsh(r)[::-1]
        assert lam[1] / lam[0] < 1e-8

    def test_hermitian(self, cfg, small_geom, rng):
        m = rng.standard_normal((small_geom.dim, 10)) \
            + 1j * rng.standard_normal((small_geom.dim, 10))
        r = covariance(SnapshotWindow(m, 10, 1))
        assert np.max(np.abs(r - r.conj().T)) < 1e-12


class TestNoiseSubspace:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_auto_source_count(self, cfg, small_geom, k):
        specs = [(40.0, 70.0, 5e-9, 50.0, 1.0),
                 (120.0, 110.0, 25e-9, 120.0, 0.8),
                 (80.0, 50.0, 45e-9, 90.0, 0.6)][:k]
        stream = make_stream(cfg, small_geom, jittered_paths(specs), duration=0.1)
        w = windows(stream, 100, 100)[0]
        assert noise_subspace_from_window(w).s_hat == k
        assert noise_subspace(covariance(w)).s_hat == k

    def test_dim_minus_one_leaves_single_vector(self, rng):
        r = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        r = r @ r.conj().T
        sub = noise_subspace(r, s_hat=5)
        assert sub.basis.shape == (6, 1)
        assert abs(np.linalg.norm(sub.basis) - 1.0) < 1e-8

    def test_basis_orthonormal(self, rng):
        r = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        r = r @ r.conj().T
        for s_hat in (0, 2, 5):
            b = noise_subspace(r, s_hat=s_hat).basis
            np.testing.assert_allclose(b.conj().T @ b, np.eye(8 - s_hat), atol=1e-8)

    def test_no_noise_subspace_left(self, rng):
        r = np.eye(4, dtype=complex)
        with pytest.raises(ValueError, match="noise subspace"):
            noise_subspace(r, s_hat=4)

    def test_window_and_covariance_paths_agree(self, cfg, small_geom):
        specs = [(40.0, 70.0, 5e-9, 50.0, 1.0), (120.0, 110.0, 25e-9, 120.0, 0.7)]
        stream = make_stream(cfg, small_geom, jittered_paths(specs),
                             snr_db=20.0, duration=0.06)
        w = windows(stream, 60, 60)[0]
        a = noise_subspace_from_window(w, s_hat=2)
        b = noise_subspace(covariance(w), s_hat=2)
        # same projector even if individual eigenvectors differ by phase
        pa = a.signal_basis @ a.signal_basis.conj().T
        pb = b.signal_basis @ b.signal_basis.conj().T
        np.testing.assert_allclose(pa, pb, atol=1e-8)

    def test_lazy_noise_basis_matches_projector(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom,
                             jittered_paths([(60.0, 60.0, 10e-9, 60.0, 1.0)]),
                             duration=0.03)
        sub = noise_subspace_from_window(windows(stream, 30, 30)[0], s_hat=1)
        en = sub.basis
        assert en.shape == (small_geom.dim, small_geom.dim - 1)
        v = virtual_steering_vector(cfg, small_geom, PathHypothesis(97, 33)).values
        explicit = np.linalg.norm(en.conj().T @ v) ** 2
        assert explicit == pytest.approx(sub.projection_deficit(v), rel=1e-9)

    def test_mdl_source_count(self, rng):
        lam = np.concatenate([np.array([50.0, 30.0]), np.full(20, 1.0)
                              + rng.uniform(-0.05, 0.05, 20)])
        assert estimate_source_count(lam, method="mdl", n_snapshots=200) == 2


class TestSpectrum:
    def test_single_path_argmax(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom,
                             [ScenePath(PathHypothesis(60, 45, 30e-9, 90))],
                             duration=0.05)
        sub = noise_subspace_from_window(windows(stream, 50, 50)[0])
        spec = spectrum(sub, small_grids(), cfg, small_geom)
        az, el = spec.argmax_angles()
        assert abs(az - 60) <= 1 and abs(el - 45) <= 1

    def test_zero_sources_flat(self, cfg, small_geom):
        sub = NoiseSubspace(np.zeros((small_geom.dim, 0), dtype=complex), 0)
        spec = spectrum(sub, small_grids(), cfg, small_geom)
        assert spec.grid.max() / spec.grid.min() < 1 + 1e-6

    def test_reduce_max_option(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom,
                             [ScenePath(PathHypothesis(60, 45, 30e-9, 90))],
                             duration=0.05)
        sub = noise_subspace_from_window(windows(stream, 50, 50)[0])
        spec = spectrum(sub, small_grids(), cfg, small_geom, reduce="max")
        az, el = spec.argmax_angles()
        assert abs(az - 60) <= 1 and abs(el - 45) <= 1

    def test_matches_explicit_noise_basis(self, cfg, rng):
        # factorized evaluation equals the textbook a^H En En^H a scan
        from wivision.arraymodel import ArrayGeometry, steering_tensor
        geom = ArrayGeometry.l_shaped(cfg.wavelength_m / 2.0, arm_x=2, arm_z=2,
                                      n_tx=2, n_subcarriers=4)
        stream = make_stream(cfg, geom,
                             jittered_paths([(70.0, 80.0, 12e-9, 70.0, 1.0),
                                             (120.0, 60.0, 30e-9, 110.0, 0.6)]),
                             snr_db=20.0, duration=0.04)
        w = windows(stream, 40, 40)[0]
        sub = noise_subspace(covariance(w), s_hat=2)
        grids = GridSpec(tof_grid_s=np.array([0.0, 15e-9]),
                         aod_grid_deg=np.array([70.0, 110.0]))
        spec = spectrum(sub, grids, cfg, geom)
        en = sub.basis
        azs = rng.integers(1, 181, 40)
        els = rng.integers(1, 181, 40)
        for az, el in zip(azs, els):
            total = 0.0
            for tof in grids.tof_grid_s:
                for aod in grids.aod_grid_deg:
                    a = steering_tensor(cfg, geom, float(az), float(el), tof,
                                        float(aod)).transpose(1, 0, 2).reshape(-1)
                    total += 1.0 / np.linalg.norm(en.conj().T @ a) ** 2
            assert spec.grid[az - 1, el - 1] == pytest.approx(total, rel=1e-6)

    def test_two_separated_paths_peaks(self, cfg, small_geom):
        specs = [(60.0, 60.0, 10e-9, 70.0, 1.0), (110.0, 100.0, 35e-9, 120.0, 0.8)]
        stream = make_stream(cfg, small_geom, jittered_paths(specs), duration=0.1)
        sub = noise_subspace_from_window(windows(stream, 100, 100)[0])
        spec = spectrum(sub, small_grids(), cfg, small_geom)
        peaks = detect_peaks(spec, min_prominence_db=6.0, max_peaks=4)
        assert len(peaks) >= 2
        found = {(az, el) for az, el, _ in peaks[:2]}
        for true_az, true_el in [(60, 60), (110, 100)]:
            assert any(abs(az - true_az) <= 2 and abs(el - true_el) <= 2
                       for az, el in found)

    def test_scale_invariance_of_peaks(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom,
                             [ScenePath(PathHypothesis(75, 120, 20e-9, 60))],
                             snr_db=15.0, duration=0.05)
        w = windows(stream, 50, 50)[0]
        scaled = SnapshotWindow(w.matrix * (3.5 - 1.2j), w.window_len, w.stride)
        a = spectrum(noise_subspace_from_window(w), small_grids(), cfg, small_geom)
        b = spectrum(noise_subspace_from_window(scaled), small_grids(), cfg,
                     small_geom)
        assert a.argmax_angles() == b.argmax_angles()

    def test_packet_permutation_invariance(self, cfg, small_geom, rng):
        stream = make_stream(cfg, small_geom,
                             jittered_paths([(85.0, 95.0, 15e-9, 100.0, 1.0)]),
                             snr_db=10.0, duration=0.05)
        w = windows(stream, 50, 50)[0]
        perm = rng.permutation(50)
        shuffled = SnapshotWindow(w.matrix[:, perm], w.window_len, w.stride)
        np.testing.assert_allclose(covariance(w), covariance(shuffled), atol=1e-12)
        a = spectrum(noise_subspace_from_window(w, s_hat=1), small_grids(), cfg,
                     small_geom)
        b = spectrum(noise_subspace_from_window(shuffled, s_hat=1), small_grids(),
                     cfg, small_geom)
        np.testing.assert_allclose(a.grid, b.grid, rtol=1e-6)

    def test_subspace_orthogonal_at_truth(self, cfg, small_geom):
        hyp = PathHypothesis(64, 49, 18e-9, 85)
        stream = make_stream(cfg, small_geom, [ScenePath(hyp)], duration=0.05)
        sub = noise_subspace_from_window(windows(stream, 50, 50)[0], s_hat=1)
        a = virtual_steering_vector(cfg, small_geom, hyp).values
        assert sub.projection_deficit(a) < 1e-6 * np.linalg.norm(a) ** 2

    def test_threads_bit_identical(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom,
                             jittered_paths([(70.0, 80.0, 12e-9, 70.0, 1.0)]),
                             snr_db=15.0, duration=0.05)
        sub = noise_subspace_from_window(windows(stream, 50, 50)[0])
        a = spectrum(sub, small_grids(), cfg, small_geom, threads=1)
        b = spectrum(sub, small_grids(), cfg, small_geom, threads=4)
        assert np.array_equal(a.grid, b.grid)

    def test_sanitized_offset_injected_matches_clean(self, cfg, small_geom):
        specs = [(60.0, 80.0, 15e-9, 75.0, 1.0), (130.0, 95.0, 35e-9, 110.0, 0.4)]
        clean = make_stream(cfg, small_geom, jittered_paths(specs),
                            snr_db=25.0, duration=0.06)
        injected = inject_phase_offsets(clean, seed=21)

        def image(stream):
            w = windows(sanitize(stream), 60, 60)[0]
            return spectrum(noise_subspace_from_window(w, s_hat=2), small_grids(),
                            cfg, small_geom)

        a, b = image(clean), image(injected)
        assert a.argmax_angles() == b.argmax_angles()
        rel = np.abs(a.grid - b.grid) / np.maximum(np.abs(a.grid), 1e-300)
        assert np.max(rel) < 0.01


class TestDetectPeaks:
    def test_single_path_single_peak(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom,
                             [ScenePath(PathHypothesis(60, 45, 30e-9, 90))],
                             duration=0.05)
        sub = noise_subspace_from_window(windows(stream, 50, 50)[0])
        spec = spectrum(sub, small_grids(), cfg, small_geom)
        peaks = detect_peaks(spec)
        assert len(peaks) == 1
        az, el, _ = peaks[0]
        assert abs(az - 60) <= 1 and abs(el - 45) <= 1

    def test_constant_spectrum_has_no_peaks(self):
        spec = Spectrum2D(np.full((180, 180), 3.3))
        assert detect_peaks(spec) == []

    def test_max_peaks_truncation(self, rng):
        grid = np.zeros((180, 180))
        for i in range(20):
            grid[5 + 8 * i, 90] = 100.0 + i
        grid += 0.001
        peaks = detect_peaks(Spectrum2D(grid), min_prominence_db=6.0, max_peaks=10)
        assert len(peaks) == 10
        powers = [p for _, _, p in peaks]
        assert powers == sorted(powers, reverse=True)
