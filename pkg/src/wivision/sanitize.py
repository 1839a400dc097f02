"""Removal of per-packet STO/PDD phase offsets via pooled linear phase fitting.

Sampling time offset and packet detection delay add, per packet, a phase ramp
``eta0 + eta1 * n`` over subcarrier index ``n`` that is common to all antenna
pairs of a receiver.  Per packet we unwrap the phase of each (rx, tx) pair
along the subcarrier axis, fit one common line pooled over all pairs, and
divide it out.  Magnitudes are untouched.

The pooled slope comes from an ordinary least-squares fit; the intercept is
recovered in the complex domain (angle of the slope-compensated sum) so the
result does not depend on which 2*pi branch the unwrap picked per pair.
Removing the common slope also removes the common true-delay component, so
time of flight becomes relative after sanitization; the 2D image marginalizes
over delay, so downstream angle estimates are unaffected.
"""

from __future__ import annotations

import numpy as np

from .simulate import CsiStream


def sanitize(stream: CsiStream) -> CsiStream:
    """Return a stream with per-packet common phase offset and slope removed."""
    n_su = stream.geometry.n_subcarriers
    if n_su < 2:
        raise ValueError(f"sanitize needs at least 2 subcarriers, got {n_su}")
    data = stream.stack()
    out = sanitize_tensors(data)
    return CsiStream.from_arrays(stream.config, stream.geometry,
                                 stream.timestamps_ns, out)


def sanitize_tensors(tensors: np.ndarray) -> np.ndarray:
    """Sanitize a (n_packets, rx, tx, subcarrier) array; see :func:`sanitize`."""
    n_su = tensors.shape[-1]
    if n_su < 2:
        raise ValueError(f"sanitize needs at least 2 subcarriers, got {n_su}")
    n_idx = np.arange(n_su, dtype=float)
    centered = n_idx - n_idx.mean()
    norm = centered @ centered

    phases = np.unwrap(np.angle(tensors), axis=-1)
    n_pairs = tensors.shape[1] * tensors.shape[2]
    slopes = np.einsum("prmn,n->p", phases, centered) / (n_pairs * norm)

    detrended = tensors * np.exp(-1j * slopes[:, None, None, None] * n_idx)
    intercepts = np.angle(detrended.sum(axis=(1, 2, 3)))
    return detrended * np.exp(-1j * intercepts)[:, None, None, None]
