"""CSIF binary container for CSI packet streams.

Layout (little-endian):

    magic   4 bytes  b"CSIF"
    version u16      1
    n_rx    u16
    n_tx    u16
    n_su    u16
    carrier_hz              f64
    subcarrier_spacing_hz   f64
    packet_count            u64

followed, per packet, by a u64 timestamp in nanoseconds and
``2 * n_rx * n_tx * n_su`` little-endian float32 values (interleaved real,
imaginary; index order rx-major, then tx, then subcarrier).

The format carries dimensions but not antenna positions or tx spacing; readers
reconstruct the default L-shaped half-wavelength layout unless an explicit
geometry is supplied.
"""

from __future__ import annotations

import struct

import numpy as np

from .arraymodel import ArrayGeometry, ChannelConfig
from .simulate import CsiStream

MAGIC = b"CSIF"
VERSION = 1
_HEADER = struct.Struct("<4sHHHHddQ")


class CsifFormatError(ValueError):
    """Malformed CSIF file."""


def packet_size_bytes(n_rx: int, n_tx: int, n_su: int) -> int:
    return 8 + 2 * n_rx * n_tx * n_su * 4


def write_csif(stream: CsiStream, path) -> None:
    """Serialize a stream; values are stored at float32 precision."""
    geom = stream.geometry
    n_rx, n_tx, n_su = geom.n_rx, geom.n_tx, geom.n_subcarriers
    for dim, name in ((n_rx, "n_rx"), (n_tx, "n_tx"), (n_su, "n_su")):
        if not 0 < dim <= 0xFFFF:
            raise ValueError(f"{name}={dim} does not fit the CSIF header")
    header = _HEADER.pack(MAGIC, VERSION, n_rx, n_tx, n_su,
                          stream.config.carrier_hz,
                          stream.config.subcarrier_spacing_hz, len(stream))
    tensors = stream.stack().reshape(len(stream), -1)
    iq = np.empty((len(stream), tensors.shape[1] * 2), dtype="<f4")
    iq[:, 0::2] = tensors.real
    iq[:, 1::2] = tensors.imag
    timestamps = stream.timestamps_ns.astype("<u8")
    with open(path, "wb") as fh:
        fh.write(header)
        for ts, row in zip(timestamps, iq):
            fh.write(struct.pack("<Q", int(ts)))
            fh.write(row.tobytes())


def read_csif(path, geometry: ArrayGeometry | None = None) -> CsiStream:
    """Parse a CSIF file back into a stream.

    ``geometry`` overrides the synthesized default layout; its dimensions must
    match the header.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise CsifFormatError(f"file too short for a CSIF header ({len(raw)} bytes)")
    magic, version, n_rx, n_tx, n_su, carrier_hz, spacing_hz, n_packets = \
        _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CsifFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CsifFormatError(f"unsupported CSIF version {version}")
    if min(n_rx, n_tx, n_su) < 1:
        raise CsifFormatError(f"invalid dimensions {n_rx}x{n_tx}x{n_su}")

    payload = raw[_HEADER.size:]
    per_packet = packet_size_bytes(n_rx, n_tx, n_su)
    complete, leftover = divmod(len(payload), per_packet)
    if leftover:
        raise CsifFormatError(f"file truncated mid packet {complete}: "
                              f"{leftover} trailing bytes of {per_packet}")
    if complete != n_packets:
        raise CsifFormatError(f"header declares {n_packets} packets but payload "
                              f"holds {complete}; bad packet index {min(complete, n_packets)}")

    record = np.dtype([("ts", "<u8"), ("iq", "<f4", (2 * n_rx * n_tx * n_su,))])
    packets = np.frombuffer(payload, dtype=record)
    timestamps = packets["ts"].astype(np.int64)
    if np.any(np.diff(timestamps) <= 0):
        bad = int(np.nonzero(np.diff(timestamps) <= 0)[0][0]) + 1
        raise CsifFormatError(f"non-monotone timestamp at packet {bad}")

    iq = packets["iq"].astype(np.float64)
    tensors = (iq[:, 0::2] + 1j * iq[:, 1::2]).reshape(n_packets, n_rx, n_tx, n_su)

    cfg = ChannelConfig(carrier_hz=carrier_hz, subcarrier_spacing_hz=spacing_hz)
    if geometry is None:
        geometry = _default_layout(cfg, n_rx, n_tx, n_su)
    expected = (geometry.n_rx, geometry.n_tx, geometry.n_subcarriers)
    if expected != (n_rx, n_tx, n_su):
        raise CsifFormatError(f"geometry {expected} does not match header "
                              f"{(n_rx, n_tx, n_su)}")
    return CsiStream.from_arrays(cfg, geometry, timestamps, tensors)


def _default_layout(cfg: ChannelConfig, n_rx: int, n_tx: int, n_su: int) -> ArrayGeometry:
    """L-shaped half-wavelength layout with n_rx elements (x arm gets the extra one)."""
    arm_x = (n_rx + 2) // 2
    arm_z = n_rx + 1 - arm_x
    return ArrayGeometry.l_shaped(cfg.wavelength_m / 2.0, arm_x=arm_x, arm_z=arm_z,
                                  n_tx=n_tx, n_subcarriers=n_su)
