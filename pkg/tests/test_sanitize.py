import math

import numpy as np
import pytest

from wivision import (
    ArrayGeometry,
    PathHypothesis,
    Scene,
    ScenePath,
    inject_phase_offsets,
    sanitize,
    simulate,
)


def make_stream(cfg, geom, paths, snr_db=math.inf, duration=0.05, seed=0):
    return simulate(Scene(tuple(paths), snr_db=snr_db, duration_s=duration,
                          rng_seed=seed), cfg, geom)


class TestSanitize:
    def test_trivial_path_is_untouched(self, cfg, small_geom):
        # exactly all-ones tensors: the fitted line is identically zero
        geom = ArrayGeometry(np.zeros((2, 3)), n_tx=1, n_subcarriers=8)
        stream = make_stream(cfg, geom, [ScenePath(PathHypothesis(42, 137, 0.0, 65))])
        assert np.array_equal(stream.stack().real, np.ones_like(stream.stack().real))
        out = sanitize(stream)
        assert np.array_equal(out.stack(), stream.stack())
        # a zero-ToF path on the real array is preserved to machine precision
        stream = make_stream(cfg, small_geom,
                             [ScenePath(PathHypothesis(90, 90, 0.0, 180.0))])
        out = sanitize(stream)
        np.testing.assert_allclose(out.stack(), stream.stack(), atol=1e-12)

    def test_magnitudes_unchanged(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom,
                             [ScenePath(PathHypothesis(55, 70, 22e-9, 60)),
                              ScenePath(PathHypothesis(120, 100, 40e-9, 120),
                                        gain=0.4)],
                             snr_db=20.0)
        out = sanitize(stream)
        np.testing.assert_allclose(np.abs(out.stack()), np.abs(stream.stack()),
                                   rtol=1e-12)

    def test_roundtrip_matches_clean_sanitized(self, cfg, small_geom):
        paths = [ScenePath(PathHypothesis(60, 80, 15e-9, 75), gain=1.0),
                 ScenePath(PathHypothesis(130, 95, 35e-9, 110), gain=0.3)]
        clean = make_stream(cfg, small_geom, paths, snr_db=25.0, seed=7)
        for inject_seed in (1, 2, 3):
            injected = inject_phase_offsets(clean, seed=inject_seed)
            a = sanitize(injected).stack()
            b = sanitize(clean).stack()
            phase_err = np.angle(a / b)
            assert np.max(np.abs(phase_err)) < 1e-6

    def test_idempotent(self, cfg, small_geom):
        stream = make_stream(cfg, small_geom,
                             [ScenePath(PathHypothesis(60, 80, 15e-9, 75))],
                             snr_db=15.0)
        once = sanitize(stream)
        twice = sanitize(once)
        np.testing.assert_allclose(twice.stack(), once.stack(), atol=1e-9)

    def test_offset_invariance_fixed_offsets(self, cfg, small_geom):
        # a fixed common (offset, slope), not just the random injector
        stream = make_stream(cfg, small_geom,
                             [ScenePath(PathHypothesis(100, 60, 18e-9, 95))],
                             snr_db=30.0)
        n_su = small_geom.n_subcarriers
        for eta0, eta1 in [(1.0, 0.05), (4.5, -np.pi / n_su), (2.0, 0.0)]:
            ramp = np.exp(-1j * (eta0 + eta1 * np.arange(n_su)))
            shifted = stream.stack() * ramp
            from wivision.sanitize import sanitize_tensors
            a = sanitize_tensors(shifted)
            b = sanitize_tensors(stream.stack())
            np.testing.assert_allclose(a, b, atol=1e-9)

    def test_needs_two_subcarriers(self, cfg):
        geom = ArrayGeometry(np.zeros((2, 3)), n_tx=1, n_subcarriers=1)
        stream = make_stream(cfg, geom, [ScenePath(PathHypothesis(90, 90))])
        with pytest.raises(ValueError, match="subcarrier"):
            sanitize(stream)
