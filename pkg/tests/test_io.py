import math
import struct

import numpy as np
import pytest

from wivision import (
    ArrayGeometry,
    CsifFormatError,
    PathHypothesis,
    Scene,
    SceneFileError,
    ScenePath,
    Spectrum2D,
    load_scene,
    read_csif,
    simulate,
    write_csif,
)
from wivision.csif import packet_size_bytes
from wivision.export import read_spectrum_csv, write_pgm, write_spectrum_csv


@pytest.fixture
def stream(cfg, small_geom):
    scene = Scene((ScenePath(PathHypothesis(70, 60, 20e-9, 80), phase_jitter=0.5),),
                  snr_db=18.0, duration_s=0.02, rng_seed=4)
    return simulate(scene, cfg, small_geom)


class TestCsif:
    def test_roundtrip_preserves_f32_payload(self, stream, tmp_path):
        path = tmp_path / "s.csif"
        write_csif(stream, path)
        back = read_csif(path, geometry=stream.geometry)
        np.testing.assert_array_equal(back.stack().astype(np.complex64),
                                      stream.stack().astype(np.complex64))
        np.testing.assert_array_equal(back.timestamps_ns, stream.timestamps_ns)
        assert back.config.carrier_hz == stream.config.carrier_hz

    def test_second_write_is_byte_identical(self, stream, tmp_path):
        a, b = tmp_path / "a.csif", tmp_path / "b.csif"
        write_csif(stream, a)
        write_csif(stream, b)
        assert a.read_bytes() == b.read_bytes()

    def test_packet_size_arithmetic(self):
        assert packet_size_bytes(9, 3, 30) == 8 + 2 * 810 * 4 == 6488

    def test_full_array_packet_layout(self, cfg, tmp_path):
        geom = ArrayGeometry.l_shaped(cfg.wavelength_m / 2.0)
        scene = Scene((ScenePath(PathHypothesis(90, 90)),), duration_s=0.002)
        stream = simulate(scene, cfg, geom)
        path = tmp_path / "full.csif"
        write_csif(stream, path)
        assert path.stat().st_size == 36 + 2 * 6488

    def test_truncated_file_names_packet(self, stream, tmp_path):
        path = tmp_path / "t.csif"
        write_csif(stream, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(CsifFormatError, match=f"packet {len(stream) - 1}"):
            read_csif(path)

    def test_bad_magic(self, stream, tmp_path):
        path = tmp_path / "m.csif"
        write_csif(stream, path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XSIF"
        path.write_bytes(bytes(raw))
        with pytest.raises(CsifFormatError, match="magic"):
            read_csif(path)

    def test_nonmonotone_timestamps(self, stream, tmp_path):
        path = tmp_path / "ts.csif"
        write_csif(stream, path)
        raw = bytearray(path.read_bytes())
        per = packet_size_bytes(*stream.stack().shape[1:])
        # overwrite packet 1's timestamp with packet 0's
        struct.pack_into("<Q", raw, 36 + per, stream.frames[0].timestamp_ns)
        path.write_bytes(bytes(raw))
        with pytest.raises(CsifFormatError, match="timestamp"):
            read_csif(path)

    def test_default_geometry_reconstruction(self, cfg, tmp_path):
        geom = ArrayGeometry.l_shaped(cfg.wavelength_m / 2.0)
        scene = Scene((ScenePath(PathHypothesis(90, 90)),), duration_s=0.002)
        stream = simulate(scene, cfg, geom)
        path = tmp_path / "g.csif"
        write_csif(stream, path)
        back = read_csif(path)
        np.testing.assert_allclose(back.geometry.rx_positions, geom.rx_positions)

    def test_geometry_mismatch_rejected(self, stream, tmp_path, cfg):
        path = tmp_path / "mm.csif"
        write_csif(stream, path)
        wrong = ArrayGeometry.l_shaped(cfg.wavelength_m / 2.0, arm_x=3, arm_z=3,
                                       n_tx=1, n_subcarriers=4)
        with pytest.raises(CsifFormatError, match="geometry"):
            read_csif(path, geometry=wrong)


class TestSpectrumExport:
    def test_all_zero_pgm(self, tmp_path):
        path = tmp_path / "z.pgm"
        write_pgm(Spectrum2D(np.zeros((180, 180))), path)
        raw = path.read_bytes()
        header, pixels = raw.split(b"\n255\n", 1)
        assert header == b"P5\n180 180"
        assert pixels == bytes(180 * 180)

    def test_single_bin_pgm(self, tmp_path):
        grid = np.zeros((180, 180))
        grid[59, 44] = 7.5  # azimuth 60, elevation 45
        path = tmp_path / "p.pgm"
        write_pgm(Spectrum2D(grid), path)
        pixels = np.frombuffer(path.read_bytes().split(b"\n255\n", 1)[1],
                               dtype=np.uint8).reshape(180, 180)
        assert (pixels == 255).sum() == 1
        # row 0 is elevation 180: elevation 45 lands on row 135, azimuth col 59
        assert pixels[180 - 45, 59] == 255

    def test_csv_row_count_and_roundtrip(self, tmp_path, rng):
        spec = Spectrum2D(rng.uniform(0, 9, (180, 180)))
        path = tmp_path / "s.csv"
        write_spectrum_csv(spec, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "azimuth,elevation,power"
        assert len(lines) == 1 + 32400
        back = read_spectrum_csv(path)
        np.testing.assert_array_equal(back.grid, spec.grid)

    def test_export_dispatcher(self, tmp_path, rng):
        from wivision import export_spectrum
        spec = Spectrum2D(rng.uniform(0, 9, (180, 180)))
        export_spectrum(spec, tmp_path / "a.csv", format="csv")
        export_spectrum(spec, tmp_path / "a.pgm", format="pgm")
        assert (tmp_path / "a.csv").exists() and (tmp_path / "a.pgm").exists()
        with pytest.raises(ValueError, match="format"):
            export_spectrum(spec, tmp_path / "a.xyz", format="xyz")


SCENE_TEXT = """
[channel]
carrier_hz = 5.18e9
subcarrier_spacing_hz = 1.25e6

[geometry]
arm_x = 2
arm_z = 2
n_tx = 2
n_subcarriers = 8

[simulation]
snr_db = inf
packet_rate_hz = 1000
duration_s = 0.05
seed = 3

[path:los]
tag = los
azimuth_deg = 90
elevation_deg = 90
tof_ns = 5
aod_deg = 90
gain_db = 0

[path:wall]
tag = static
azimuth_deg = 120
elevation_deg = 80
tof_ns = 30
aod_deg = 110
gain_db = -6
phase_jitter = 1.0
gate_period_s = 0.2
gate_duty = 0.5
"""


class TestSceneFile:
    def test_parse_and_simulate(self, tmp_path):
        path = tmp_path / "scene.ini"
        path.write_text(SCENE_TEXT)
        bundle = load_scene(path)
        assert bundle.geometry.n_rx == 3
        assert bundle.scene.duration_s == 0.05
        assert len(bundle.scene.paths) == 2
        assert bundle.scene.paths[1].gate.period_s == 0.2
        stream = simulate(bundle.scene, bundle.config, bundle.geometry)
        assert len(stream) == 50

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "scene.ini"
        path.write_text(SCENE_TEXT + "\n[path:bad]\nazimuth_degrees = 10\n")
        with pytest.raises(SceneFileError, match="azimuth_degrees"):
            load_scene(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "scene.ini"
        path.write_text(SCENE_TEXT + "\n[mystery]\nx = 1\n")
        with pytest.raises(SceneFileError, match="mystery"):
            load_scene(path)

    def test_keyframes(self, tmp_path):
        text = SCENE_TEXT + """
[path:walker]
tag = human
azimuth_deg = 50
elevation_deg = 100
tof_ns = 40
aod_deg = 90
keyframe_0_time_s = 0.0
keyframe_0_azimuth_deg = 50
keyframe_1_time_s = 0.05
keyframe_1_azimuth_deg = 60
"""
        path = tmp_path / "scene.ini"
        path.write_text(text)
        bundle = load_scene(path)
        walker = bundle.scene.paths[2]
        az, _, _, _ = walker.hypothesis_at(np.array([0.0, 0.025, 0.05]))
        np.testing.assert_allclose(az, [50.0, 55.0, 60.0])

    def test_persona_section_expands_to_paths(self, tmp_path):
        text = """
[simulation]
duration_s = 1.0

[persona:alice]
elevation_span_deg = 30
azimuth_span_deg = 12
gait_period_s = 1.0
"""
        path = tmp_path / "scene.ini"
        path.write_text(text)
        bundle = load_scene(path)
        assert len(bundle.scene.paths) == 4
        assert all(p.tag == "human" for p in bundle.scene.paths)

    def test_empty_scene_rejected(self, tmp_path):
        path = tmp_path / "scene.ini"
        path.write_text("[simulation]\nduration_s = 1.0\n")
        with pytest.raises(SceneFileError, match="no paths"):
            load_scene(path)

    def test_infinite_snr_parses(self, tmp_path):
        path = tmp_path / "scene.ini"
        path.write_text(SCENE_TEXT)
        assert math.isinf(load_scene(path).scene.snr_db)
