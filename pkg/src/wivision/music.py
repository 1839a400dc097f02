"""Joint (azimuth, elevation, tof, aod) MUSIC over the virtual array.

Pipeline: sliding snapshot windows over the packet stream, sample covariance,
noise-subspace extraction, and a spatial-spectrum scan

    P(az, el, tof, aod) = 1 / (a^H E_N E_N^H a)

reduced over the (tof, aod) grid to a 180 x 180 angle image.

Two implementation notes that matter for speed on the 810-element virtual
array:

* With far fewer snapshots than array elements the covariance is rank
  deficient, so the signal basis is taken from a thin SVD of the snapshot
  matrix and the noise projection is evaluated implicitly as
  ``|a|^2 - |E_S^H a|^2``; the 700-odd noise eigenvectors are never formed.
* The scan never materializes steering vectors.  Basis columns are contracted
  against the tx and subcarrier factor vectors per (tof, aod) grid point,
  collapsed to a 9 x 9 Hermitian form, and the per-bin quadratic form is a
  real matrix product against a cached table of rx-factor pair products.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .arraymodel import (
    N_ANGLE_BINS,
    ArrayGeometry,
    ChannelConfig,
    rx_factors,
    subcarrier_factors,
    tx_factors,
)
from .simulate import CsiStream

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_LEN = 100
DEFAULT_STRIDE = 33
DEFAULT_TOF_GRID_S = np.arange(16) * 5e-9
DEFAULT_AOD_GRID_DEG = np.arange(20.0, 161.0, 20.0)

_EIGENVALUE_FLOOR_REL = 1e-9
_DENOMINATOR_FLOOR_REL = 1e-15
_CHUNK_BINS = 4096


@dataclass(frozen=True)
class GridSpec:
    """Search grids for the marginalized time-of-flight and AoD dimensions."""

    tof_grid_s: np.ndarray = field(default_factory=lambda: DEFAULT_TOF_GRID_S.copy())
    aod_grid_deg: np.ndarray = field(default_factory=lambda: DEFAULT_AOD_GRID_DEG.copy())

    def __post_init__(self):
        for name in ("tof_grid_s", "aod_grid_deg"):
            g = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if g.size == 0:
                raise ValueError(f"{name} must be nonempty")
            if g.size > 1 and np.any(np.diff(g) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            g.setflags(write=False)
            object.__setattr__(self, name, g)


@dataclass(frozen=True)
class SnapshotWindow:
    """One covariance estimation window: vectorized frames as matrix columns.

    Rows follow the steering-vector ordering (tx-major, then rx, then
    subcarrier); there is one column per packet.
    """

    matrix: np.ndarray
    window_len: int
    stride: int
    timestamp_ns: int = 0

    def __post_init__(self):
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.window_len:
            raise ValueError(
                f"window matrix must have window_len={self.window_len} columns, "
                f"got shape {self.matrix.shape}"
            )

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def vectorize_frames(tensors: np.ndarray) -> np.ndarray:
    """(n, rx, tx, su) frame tensors -> (n, rx*tx*su) rows in steering order."""
    n = tensors.shape[0]
    return np.ascontiguousarray(tensors.transpose(0, 2, 1, 3)).reshape(n, -1)


def windows(stream: CsiStream, window_len: int = DEFAULT_WINDOW_LEN,
            stride: int = DEFAULT_STRIDE) -> list[SnapshotWindow]:
    """Overlapping snapshot windows; empty (with a log note) if the stream is short."""
    if window_len < 1 or stride < 1:
        raise ValueError("window_len and stride must be >= 1")
    n = len(stream)
    if n < window_len:
        logger.warning("stream of %d packets is shorter than one %d-packet window; "
                       "no windows produced", n, window_len)
        return []
    rows = vectorize_frames(stream.stack())
    ts = stream.timestamps_ns
    out = []
    for start in range(0, n - window_len + 1, stride):
        block = rows[start:start + window_len]
        out.append(SnapshotWindow(np.ascontiguousarray(block.T), window_len, stride,
                                  timestamp_ns=int(ts[start + window_len - 1])))
    return out


def covariance(window: SnapshotWindow) -> np.ndarray:
    """Sample covariance R = X X^H / window_len; Hermitian PSD."""
    x = window.matrix
    r = x @ x.conj().T
    r /= window.window_len
    return r


def estimate_source_count(eigenvalues: np.ndarray, *, method: str = "threshold",
                          n_snapshots: int | None = None,
                          threshold_factor: float = 10.0) -> int:
    """Estimate the number of sources from descending covariance eigenvalues.

    ``threshold`` counts eigenvalues above threshold_factor times a noise-floor
    estimate (median of the lower half of the spectrum, guarded by a relative
    floor so noiseless data does not divide by zero).  ``mdl`` is the classic
    minimum-description-length criterion and needs ``n_snapshots``.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    lam = np.clip(lam, 0.0, None)
    m = lam.size
    if m < 2:
        return 1
    if method == "threshold":
        floor = max(float(np.median(lam[m // 2:])), lam[0] * _EIGENVALUE_FLOOR_REL,
                    np.finfo(float).tiny)
        count = int(np.sum(lam > threshold_factor * floor))
        return min(max(count, 1), m - 1)
    if method == "mdl":
        if n_snapshots is None:
            raise ValueError("mdl source-count estimation requires n_snapshots")
        lam = np.clip(lam, lam[0] * 1e-12 + np.finfo(float).tiny, None)
        n = n_snapshots
        scores = np.empty(m)
        for k in range(m):
            tail = lam[k:]
            log_gm = float(np.mean(np.log(tail)))
            log_am = float(np.log(np.mean(tail)))
            scores[k] = -n * (m - k) * (log_gm - log_am) + 0.5 * k * (2 * m - k) * np.log(n)
        return min(max(int(np.argmin(scores)), 1), m - 1)
    raise ValueError(f"unknown source-count method {method!r}")


class NoiseSubspace:
    """Signal/noise split of a covariance.

    Stores the (dim, s_hat) orthonormal signal basis; the complementary noise
    basis is only materialized on demand (it has dim - s_hat columns, which for
    the full virtual array is several hundred).
    """

    def __init__(self, signal_basis: np.ndarray, s_hat: int,
                 eigenvalues: np.ndarray | None = None,
                 noise_basis: np.ndarray | None = None):
        signal_basis = np.asarray(signal_basis, dtype=complex)
        if signal_basis.ndim != 2 or signal_basis.shape[1] != s_hat:
            raise ValueError(f"signal basis must be (dim, s_hat={s_hat}), "
                             f"got {signal_basis.shape}")
        self.signal_basis = signal_basis
        self.s_hat = int(s_hat)
        self.eigenvalues = eigenvalues
        self._noise_basis = noise_basis

    @property
    def dim(self) -> int:
        return self.signal_basis.shape[0]

    @property
    def noise_dim(self) -> int:
        return self.dim - self.s_hat

    @property
    def basis(self) -> np.ndarray:
        """Orthonormal noise basis, (dim, dim - s_hat); materialized lazily."""
        if self._noise_basis is None:
            if self.s_hat == 0:
                self._noise_basis = np.eye(self.dim, dtype=complex)
            else:
                self._noise_basis = scipy.linalg.null_space(self.signal_basis.conj().T)
        return self._noise_basis

    def projection_deficit(self, vec: np.ndarray) -> float:
        """|v|^2 - |E_S^H v|^2, i.e. |E_N^H v|^2 without forming E_N."""
        v = np.asarray(vec, dtype=complex).reshape(-1)
        proj = self.signal_basis.conj().T @ v
        return float(np.vdot(v, v).real - np.vdot(proj, proj).real)


def noise_subspace(r: np.ndarray, s_hat: int | None = None, *,
                   method: str = "threshold",
                   n_snapshots: int | None = None) -> NoiseSubspace:
    """Eigendecompose a covariance matrix into signal and noise subspaces."""
    r = np.asarray(r, dtype=complex)
    dim = r.shape[0]
    if r.shape != (dim, dim):
        raise ValueError(f"covariance must be square, got {r.shape}")
    lam, vec = np.linalg.eigh(r)
    lam = lam[::-1]
    vec = vec[:, ::-1]
    if s_hat is None:
        s_hat = estimate_source_count(lam, method=method, n_snapshots=n_snapshots)
    if s_hat >= dim:
        raise ValueError(f"s_hat={s_hat} leaves no noise subspace (dim {dim})")
    if s_hat < 0:
        raise ValueError(f"s_hat must be >= 0, got {s_hat}")
    return NoiseSubspace(vec[:, :s_hat], s_hat, eigenvalues=lam,
                         noise_basis=np.ascontiguousarray(vec[:, s_hat:]))


def noise_subspace_from_window(window: SnapshotWindow, s_hat: int | None = None, *,
                               method: str = "threshold") -> NoiseSubspace:
    """Signal/noise split from the snapshot matrix via thin SVD.

    Equivalent to :func:`noise_subspace` of the sample covariance but never
    forms the dim x dim matrix; preferred for the full-size virtual array.
    """
    u, sv, _ = np.linalg.svd(window.matrix, full_matrices=False)
    lam = sv ** 2 / window.window_len
    if s_hat is None:
        s_hat = estimate_source_count(lam, method=method, n_snapshots=window.window_len)
    if s_hat >= window.dim:
        raise ValueError(f"s_hat={s_hat} leaves no noise subspace (dim {window.dim})")
    if s_hat < 0:
        raise ValueError(f"s_hat must be >= 0, got {s_hat}")
    return NoiseSubspace(np.ascontiguousarray(u[:, :s_hat]), s_hat, eigenvalues=lam)


@dataclass
class Spectrum2D:
    """180 x 180 nonnegative power image over (azimuth, elevation).

    ``grid[i, j]`` is the power at azimuth ``i + 1`` degrees and elevation
    ``j + 1`` degrees.
    """

    grid: np.ndarray
    timestamp_ns: int = 0

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.shape != (N_ANGLE_BINS, N_ANGLE_BINS):
            raise ValueError(f"spectrum grid must be {N_ANGLE_BINS}x{N_ANGLE_BINS}, "
                             f"got {g.shape}")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ValueError("spectrum values must be finite and >= 0")
        self.grid = g

    def argmax_angles(self) -> tuple[int, int]:
        """(azimuth_deg, elevation_deg) of the strongest bin."""
        i, j = np.unravel_index(int(np.argmax(self.grid)), self.grid.shape)
        return int(i) + 1, int(j) + 1


# Cached per (carrier, rx positions): upper-triangle rx-factor pair products
# over all 180*180 angle bins, split into real and imaginary parts.
_PAIR_TABLE_CACHE: dict = {}


def _rx_pair_tables(cfg: ChannelConfig, geom: ArrayGeometry):
    key = (cfg.carrier_hz, cfg.speed_of_light, geom.rx_positions.tobytes())
    hit = _PAIR_TABLE_CACHE.get(key)
    if hit is not None:
        return hit
    angles = np.arange(1, N_ANGLE_BINS + 1, dtype=float)
    az = np.repeat(angles, N_ANGLE_BINS)
    el = np.tile(angles, N_ANGLE_BINS)
    table = rx_factors(cfg, geom, az, el)          # (bins, n_rx), unit magnitude
    iu, il = np.triu_indices(geom.n_rx, 1)
    pairs = table[:, iu] * table[:, il].conj()
    entry = (np.ascontiguousarray(pairs.real), np.ascontiguousarray(pairs.imag), iu, il)
    if len(_PAIR_TABLE_CACHE) > 8:
        _PAIR_TABLE_CACHE.clear()
    _PAIR_TABLE_CACHE[key] = entry
    return entry


def _basis_pair_forms(basis: np.ndarray, cfg: ChannelConfig, geom: ArrayGeometry,
                      grids: GridSpec, iu: np.ndarray, il: np.ndarray):
    """Collapse basis columns into per-(tof, aod) n_rx x n_rx Hermitian forms.

    Returns (diag_sums, pair_real, pair_imag) where for each grid point w the
    per-bin projected power is diag_sums[w] + 2 * (Qr @ pair_real[:, w]
    - Qi @ pair_imag[:, w]) with Q the rx pair-product table.
    """
    n_rx, n_tx, n_su = geom.n_rx, geom.n_tx, geom.n_subcarriers
    a_tx = tx_factors(cfg, n_tx, grids.aod_grid_deg)          # (n_w, n_tx)
    a_su = subcarrier_factors(cfg, n_su, grids.tof_grid_s)    # (n_t, n_su)
    cols = basis.shape[1]
    e = basis.conj().reshape(n_tx, n_rx, n_su, cols)
    # G[r, s, w, t] = sum_{m, n} conj(E[m, r, n, s]) a_tx[w, m] a_su[t, n]
    e1 = np.tensordot(e, a_su, axes=([2], [1]))               # (tx, rx, cols, n_t)
    g = np.tensordot(e1, a_tx, axes=([0], [1]))               # (rx, cols, n_t, n_w)
    n_t, n_w = grids.tof_grid_s.size, grids.aod_grid_deg.size
    g = g.transpose(2, 3, 0, 1).reshape(n_t * n_w, n_rx, cols)
    h = g @ g.conj().transpose(0, 2, 1)                       # (wt, rx, rx)
    diag_sums = np.einsum("wkk->w", h).real
    hv = h[:, iu, il]                                         # (wt, n_pairs)
    return diag_sums, np.ascontiguousarray(hv.real.T), np.ascontiguousarray(hv.imag.T)


def spectrum(subspace: NoiseSubspace, grids: GridSpec | None, cfg: ChannelConfig,
             geom: ArrayGeometry, *, reduce: str = "sum", threads: int = 1,
             timestamp_ns: int = 0) -> Spectrum2D:
    """Marginalized 2D MUSIC image for one snapshot window.

    For every angle bin the spatial spectrum 1 / (a^H E_N E_N^H a) is evaluated
    on the full (tof, aod) grid via the Kronecker factorization of the steering
    vector and reduced with ``sum`` (default) or ``max``.  Output is identical
    for any ``threads`` value; threads only split the angle bins.
    """
    if grids is None:
        grids = GridSpec()
    if reduce not in ("sum", "max"):
        raise ValueError(f"reduce must be 'sum' or 'max', got {reduce!r}")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    dim = geom.dim
    if subspace.dim != dim:
        raise ValueError(f"subspace dimension {subspace.dim} does not match "
                         f"geometry dimension {dim}")

    qr, qi, iu, il = _rx_pair_tables(cfg, geom)
    basis = subspace.signal_basis

    n_bins = N_ANGLE_BINS * N_ANGLE_BINS
    floor = dim * _DENOMINATOR_FLOOR_REL
    image = np.empty(n_bins)

    if basis.shape[1] == 0:
        # Every direction counts as noise: a^H E_N E_N^H a = |a|^2 = dim.
        value = 1.0 / dim
        image.fill(value * (grids.tof_grid_s.size * grids.aod_grid_deg.size)
                   if reduce == "sum" else value)
        return Spectrum2D(image.reshape(N_ANGLE_BINS, N_ANGLE_BINS), timestamp_ns)

    diag_sums, hr, hi = _basis_pair_forms(basis, cfg, geom, grids, iu, il)

    def run_chunk(start: int):
        stop = min(start + _CHUNK_BINS, n_bins)
        power = qr[start:stop] @ hr
        power -= qi[start:stop] @ hi
        power *= 2.0
        power += diag_sums
        den = dim - power
        np.clip(den, floor, None, out=den)
        p = 1.0 / den
        image[start:stop] = p.sum(axis=1) if reduce == "sum" else p.max(axis=1)

    starts = range(0, n_bins, _CHUNK_BINS)
    if threads == 1:
        for s in starts:
            run_chunk(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_chunk, starts))
    return Spectrum2D(image.reshape(N_ANGLE_BINS, N_ANGLE_BINS), timestamp_ns)


def detect_peaks(spec: Spectrum2D, min_prominence_db: float = 6.0,
                 max_peaks: int = 10) -> list[tuple[int, int, float]]:
    """Local maxima of a spectrum as (azimuth_deg, elevation_deg, power).

    A bin qualifies if it strictly exceeds all 8 neighbors and sits at least
    ``min_prominence_db`` above the spectrum median; results are sorted by
    power, strongest first, truncated to ``max_peaks``.
    """
    g = spec.grid
    padded = np.full((g.shape[0] + 2, g.shape[1] + 2), -np.inf)
    padded[1:-1, 1:-1] = g
    is_peak = np.ones_like(g, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            shifted = padded[1 + di:padded.shape[0] - 1 + di,
                             1 + dj:padded.shape[1] - 1 + dj]
            is_peak &= g > shifted
    med = float(np.median(g))
    if med > 0:
        is_peak &= g >= med * 10.0 ** (min_prominence_db / 10.0)
    else:
        is_peak &= g > 0
    az_idx, el_idx = np.nonzero(is_peak)
    powers = g[az_idx, el_idx]
    order = np.argsort(-powers, kind="stable")[:max_peaks]
    return [(int(az_idx[i]) + 1, int(el_idx[i]) + 1, float(powers[i])) for i in order]
