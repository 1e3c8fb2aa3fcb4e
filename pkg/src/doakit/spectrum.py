"""Spatial spectra (1D baseline, 2D joint, geometry-matched) and peak picking.

All spectra score a per-bin estimated RTF vector against prototype
databases with a phase-only l2 distance, summed over frequency bins with
DC and Nyquist excluded.  Higher scores are better (scores are negated
distances, so 0 is a perfect match).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, GridMismatchError, ScenePose, azimuth_to_unit, wrap_deg
from .sim import PrototypeDb, angle_in_frame


def phase_distance(a, b):
    """l2 distance between the element-wise phase factors of two vectors.

    d(a, b) = ||exp(i*angle(a)) - exp(i*angle(b))||_2.  Zero-magnitude
    entries are assigned phase 0 by convention (numpy's angle(0) == 0).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise GridMismatchError("phase_distance requires equal-length vectors")
    pa = np.exp(1j * np.angle(a))
    pb = np.exp(1j * np.angle(b))
    return float(np.linalg.norm(pa - pb))


def summation_bins(num_bins):
    """Bin indices entering spectrum sums: all but DC and Nyquist."""
    if num_bins < 3:
        raise ConfigError("need at least 3 bins to exclude DC and Nyquist")
    return np.arange(1, num_bins - 1)


@dataclass(frozen=True)
class SpatialSpectrum1D:
    """Angle-indexed similarity scores for one frame (higher = better)."""

    angles_deg: np.ndarray
    scores: np.ndarray
    frame_index: int | None = None

    def __post_init__(self):
        angles = np.asarray(self.angles_deg, dtype=float)
        scores = np.asarray(self.scores, dtype=float)
        if angles.shape != scores.shape or angles.ndim != 1 or angles.size == 0:
            raise ConfigError("angles and scores must be matching nonempty 1D arrays")
        if not np.all(np.isfinite(scores)):
            raise ConfigError("scores must be finite")
        object.__setattr__(self, "angles_deg", angles)
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class SpatialSpectrum2D:
    """Angle-pair-indexed similarity scores for one frame."""

    angles_h_deg: np.ndarray
    angles_e_deg: np.ndarray
    scores: np.ndarray
    frame_index: int | None = None

    def __post_init__(self):
        ah = np.asarray(self.angles_h_deg, dtype=float)
        ae = np.asarray(self.angles_e_deg, dtype=float)
        s = np.asarray(self.scores, dtype=float)
        if s.shape != (ah.size, ae.size) or ah.size == 0 or ae.size == 0:
            raise ConfigError("score grid must have shape (I, J)")
        if not np.all(np.isfinite(s)):
            raise ConfigError("scores must be finite")
        object.__setattr__(self, "angles_h_deg", ah)
        object.__setattr__(self, "angles_e_deg", ae)
        object.__setattr__(self, "scores", s)


@dataclass(frozen=True)
class DoaEstimate:
    """Peak-picking result; theta_e_deg is None for 1D spectra."""

    theta_deg: float
    theta_e_deg: float | None = None
    flat_spectrum: bool = False
    peak_score: float | None = None


def _unit_phasors(x):
    return np.exp(1j * np.angle(np.asarray(x)))


def _check_db(db: PrototypeDb, num_bins, dim):
    if db.num_bins != num_bins:
        raise GridMismatchError(
            f"database has {db.num_bins} bins, estimate has {num_bins}"
        )
    if db.num_mics != dim:
        raise GridMismatchError(
            f"database dimension {db.num_mics} != estimate dimension {dim}"
        )


def _sq_distances(est, db_vectors, bins):
    """Per-bin squared phase distances to every database angle.

    est: (K, M) estimated vectors; db_vectors: (I, K, M).
    Returns (len(bins), I).
    """
    pe = _unit_phasors(est[bins])  # (B, M)
    pd = _unit_phasors(db_vectors[:, bins, :])  # (I, B, M)
    diff = pe[None, :, :] - pd
    return np.sum(np.abs(diff) ** 2, axis=2).T  # (B, I)


def _sq_distances_batch(est_stack, db_phasors, bins):
    """Per-bin squared phase distances for a stack of frames.

    est_stack: (L, K, M); db_phasors: (I, K, M) unit phasors.
    Returns (L, B, I) float64.  Uses ||p - q||^2 = 2M - 2 Re <p, q>
    for unit-magnitude phasors, so no (L, I, B, M) intermediate is built.
    """
    m = est_stack.shape[2]
    pe = _unit_phasors(est_stack[:, bins, :])  # (L, B, M)
    pd = db_phasors[:, bins, :]  # (I, B, M)
    inner = np.einsum("lbm,ibm->lbi", pe, pd.conj(), optimize=True).real
    return np.maximum(2.0 * m - 2.0 * inner, 0.0)


def _masked(d2, mask, bins):
    """Zero out masked bins; mask is (L, K) or None."""
    if mask is None:
        return d2
    return d2 * np.asarray(mask, dtype=bool)[:, bins, None]


def spectrum_1d(g_hat, db: PrototypeDb, bin_valid=None, frame_index=None):
    """Baseline 1D spatial spectrum: -sum_k d(g_hat(k), prototype(k, theta)).

    g_hat: (K, M) per-bin estimated RTF vectors.  Bins where bin_valid is
    False are dropped from the sum entirely.
    """
    g_hat = np.asarray(g_hat)
    if g_hat.ndim != 2:
        raise GridMismatchError("g_hat must be a (K, M) array")
    _check_db(db, g_hat.shape[0], g_hat.shape[1])
    bins = summation_bins(g_hat.shape[0])
    d2 = _sq_distances(g_hat, db.vectors, bins)  # (B, I)
    if bin_valid is not None:
        d2 = d2 * np.asarray(bin_valid, dtype=bool)[bins][:, None]
    scores = -np.sum(np.sqrt(d2), axis=0)
    return SpatialSpectrum1D(db.angles_deg.copy(), scores, frame_index)


def spectrum_2d(
    g_tilde,
    db_h: PrototypeDb,
    db_e: PrototypeDb,
    e_valid=None,
    bin_valid=None,
    frame_index=None,
):
    """Joint 2D spatial spectrum over all prototype angle pairs.

    g_tilde: (K, M_H + M_E) concatenated estimated RTF vectors.  Bins
    where e_valid is False contribute only their hearing-aid block
    (per-bin squared distances add across the blocks).
    """
    g_tilde = np.asarray(g_tilde)
    if g_tilde.ndim != 2:
        raise GridMismatchError("g_tilde must be a (K, M) array")
    k, m = g_tilde.shape
    m_h, m_e = db_h.num_mics, db_e.num_mics
    if m != m_h + m_e:
        raise GridMismatchError(f"estimate dimension {m} != {m_h} + {m_e}")
    _check_db(db_h, k, m_h)
    _check_db(db_e, k, m_e)
    bins = summation_bins(k)
    d2_h = _sq_distances(g_tilde[:, :m_h], db_h.vectors, bins)  # (B, I)
    d2_e = _sq_distances(g_tilde[:, m_h:], db_e.vectors, bins)  # (B, J)
    if e_valid is not None:
        mask = np.asarray(e_valid, dtype=bool)[bins]
        d2_e = d2_e * mask[:, None]
    if bin_valid is not None:
        keep = np.asarray(bin_valid, dtype=bool)[bins]
        d2_h = d2_h * keep[:, None]
        d2_e = d2_e * keep[:, None]
    scores = -np.sqrt(d2_h[:, :, None] + d2_e[:, None, :]).sum(axis=0)
    return SpatialSpectrum2D(db_h.angles_deg.copy(), db_e.angles_deg.copy(), scores, frame_index)


@dataclass(frozen=True)
class MatchedPairSet:
    """Angle pairs whose prototypes steer both arrays to one candidate spot.

    theta_e_exact_deg holds the geometry angles before snapping to the
    external database grid (kept for verification).
    """

    theta_h_deg: np.ndarray
    theta_e_deg: np.ndarray
    theta_e_exact_deg: np.ndarray
    positions: np.ndarray
    h_indices: np.ndarray
    e_indices: np.ndarray

    def __post_init__(self):
        if self.theta_h_deg.size == 0:
            raise ConfigError("matched pair set is empty")
        if np.unique(self.theta_h_deg).size != self.theta_h_deg.size:
            raise ConfigError("matched pairs must be unique in theta")

    def __len__(self):
        return self.theta_h_deg.size


def build_matched_pairs(
    db_h: PrototypeDb,
    db_e: PrototypeDb,
    pose_h: ScenePose,
    pose_e: ScenePose,
    radius_m=2.0,
    count=20,
):
    """Candidate positions on a circle around the hearing-aid array.

    `count` equally spaced bearings are snapped to the nearest hearing-aid
    database angle; for each resulting candidate position the external
    bearing is computed from the known poses and snapped to the nearest
    external database angle.  Duplicate hearing-aid angles collapse.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    if radius_m <= 0:
        raise ConfigError("radius_m must be positive")
    raw = wrap_deg(-180.0 + 360.0 * np.arange(count) / count)
    h_idx = sorted({db_h.nearest_angle_index(t) for t in raw})
    theta_h, theta_e_exact, theta_e, e_idx, positions = [], [], [], [], []
    for i in h_idx:
        th = float(db_h.angles_deg[i])
        pos = pose_h.position + radius_m * pose_h.to_global(azimuth_to_unit(th))
        te_exact = angle_in_frame(pos, pose_e)
        j = db_e.nearest_angle_index(te_exact)
        theta_h.append(th)
        theta_e_exact.append(te_exact)
        theta_e.append(float(db_e.angles_deg[j]))
        e_idx.append(j)
        positions.append(pos)
    return MatchedPairSet(
        theta_h_deg=np.asarray(theta_h),
        theta_e_deg=np.asarray(theta_e),
        theta_e_exact_deg=np.asarray(theta_e_exact),
        positions=np.asarray(positions),
        h_indices=np.asarray(h_idx, dtype=int),
        e_indices=np.asarray(e_idx, dtype=int),
    )


def spectrum_matched(
    g_tilde,
    db_h: PrototypeDb,
    db_e: PrototypeDb,
    pairs: MatchedPairSet,
    e_valid=None,
    bin_valid=None,
    frame_index=None,
):
    """1D spectrum over the geometry-matched angle pairs only."""
    g_tilde = np.asarray(g_tilde)
    if g_tilde.ndim != 2:
        raise GridMismatchError("g_tilde must be a (K, M) array")
    k, m = g_tilde.shape
    m_h, m_e = db_h.num_mics, db_e.num_mics
    if m != m_h + m_e:
        raise GridMismatchError(f"estimate dimension {m} != {m_h} + {m_e}")
    _check_db(db_h, k, m_h)
    _check_db(db_e, k, m_e)
    bins = summation_bins(k)
    d2_h = _sq_distances(g_tilde[:, :m_h], db_h.vectors[pairs.h_indices], bins)
    d2_e = _sq_distances(g_tilde[:, m_h:], db_e.vectors[pairs.e_indices], bins)
    if e_valid is not None:
        mask = np.asarray(e_valid, dtype=bool)[bins]
        d2_e = d2_e * mask[:, None]
    if bin_valid is not None:
        keep = np.asarray(bin_valid, dtype=bool)[bins]
        d2_h = d2_h * keep[:, None]
        d2_e = d2_e * keep[:, None]
    scores = -np.sqrt(d2_h + d2_e).sum(axis=0)
    return SpatialSpectrum1D(pairs.theta_h_deg.copy(), scores, frame_index)


def spectra_1d_batch(g_stack, db: PrototypeDb, bin_valid=None):
    """1D spectrum scores for a stack of frames; returns (L, I).

    Row l equals spectrum_1d(g_stack[l], db, bin_valid[l]).scores up to
    floating-point summation order.
    """
    g_stack = np.asarray(g_stack)
    if g_stack.ndim != 3:
        raise GridMismatchError("g_stack must be a (L, K, M) array")
    _check_db(db, g_stack.shape[1], g_stack.shape[2])
    bins = summation_bins(g_stack.shape[1])
    d2 = _masked(_sq_distances_batch(g_stack, db.phasors, bins), bin_valid, bins)
    return -np.sum(np.sqrt(d2), axis=1)


def spectra_2d_batch(g_stack, db_h: PrototypeDb, db_e: PrototypeDb, e_valid=None, bin_valid=None):
    """2D spectrum scores for a stack of frames; returns (L, I, J)."""
    g_stack = np.asarray(g_stack)
    if g_stack.ndim != 3:
        raise GridMismatchError("g_stack must be a (L, K, M) array")
    k = g_stack.shape[1]
    m_h = db_h.num_mics
    _check_db(db_h, k, m_h)
    _check_db(db_e, k, g_stack.shape[2] - m_h)
    bins = summation_bins(k)
    d2_h = _masked(_sq_distances_batch(g_stack[:, :, :m_h], db_h.phasors, bins), bin_valid, bins)
    d2_e = _masked(_sq_distances_batch(g_stack[:, :, m_h:], db_e.phasors, bins), e_valid, bins)
    d2_e = _masked(d2_e, bin_valid, bins)
    num_frames = g_stack.shape[0]
    scores = np.empty((num_frames, db_h.num_angles, db_e.num_angles))
    for l in range(num_frames):  # keeps the (B, I, J) temporary per-frame
        scores[l] = -np.sqrt(d2_h[l][:, :, None] + d2_e[l][:, None, :]).sum(axis=0)
    return scores


def spectra_matched_batch(
    g_stack, db_h: PrototypeDb, db_e: PrototypeDb, pairs: MatchedPairSet, e_valid=None, bin_valid=None
):
    """Matched-pair spectrum scores for a stack of frames; returns (L, P)."""
    g_stack = np.asarray(g_stack)
    if g_stack.ndim != 3:
        raise GridMismatchError("g_stack must be a (L, K, M) array")
    k = g_stack.shape[1]
    m_h = db_h.num_mics
    _check_db(db_h, k, m_h)
    _check_db(db_e, k, g_stack.shape[2] - m_h)
    bins = summation_bins(k)
    ph_h = db_h.phasors[pairs.h_indices]
    ph_e = db_e.phasors[pairs.e_indices]
    d2_h = _masked(_sq_distances_batch(g_stack[:, :, :m_h], ph_h, bins), bin_valid, bins)
    d2_e = _masked(_sq_distances_batch(g_stack[:, :, m_h:], ph_e, bins), e_valid, bins)
    d2_e = _masked(d2_e, bin_valid, bins)
    return -np.sqrt(d2_h + d2_e).sum(axis=1)


def _tiebreak_key(theta):
    return (abs(theta), theta)


def pick_doa(spectrum):
    """Location of the main peak; exact ties break toward the smallest
    |angle|, then the smallest angle (both coordinates for 2D grids)."""
    if isinstance(spectrum, SpatialSpectrum1D):
        scores = spectrum.scores
        best = np.max(scores)
        ties = np.flatnonzero(scores == best)
        theta = min((float(spectrum.angles_deg[i]) for i in ties), key=_tiebreak_key)
        return DoaEstimate(
            theta_deg=theta,
            flat_spectrum=bool(np.min(scores) == best and scores.size > 1),
            peak_score=float(best),
        )
    if isinstance(spectrum, SpatialSpectrum2D):
        scores = spectrum.scores
        best = np.max(scores)
        ti, tj = np.nonzero(scores == best)
        pairs = [
            (float(spectrum.angles_h_deg[i]), float(spectrum.angles_e_deg[j]))
            for i, j in zip(ti, tj)
        ]
        theta, theta_e = min(pairs, key=lambda p: _tiebreak_key(p[0]) + _tiebreak_key(p[1]))
        return DoaEstimate(
            theta_deg=theta,
            theta_e_deg=theta_e,
            flat_spectrum=bool(np.min(scores) == best and scores.size > 1),
            peak_score=float(best),
        )
    raise ConfigError("pick_doa expects a SpatialSpectrum1D or SpatialSpectrum2D")


def dump_spectrum_csv(spectrum, path):
    """Write a spectrum as CSV: 1D -> header of angles plus one score row;
    2D -> long form (frame, theta_h, theta_e, score) rows."""
    frame = spectrum.frame_index if spectrum.frame_index is not None else 0
    with open(path, "w") as fh:
        if isinstance(spectrum, SpatialSpectrum1D):
            fh.write(",".join(f"{a:g}" for a in spectrum.angles_deg) + "\n")
            fh.write(",".join(repr(float(s)) for s in spectrum.scores) + "\n")
        elif isinstance(spectrum, SpatialSpectrum2D):
            fh.write("frame,theta_h_deg,theta_e_deg,score\n")
            for i, th in enumerate(spectrum.angles_h_deg):
                for j, te in enumerate(spectrum.angles_e_deg):
                    fh.write(f"{frame},{th:g},{te:g},{float(spectrum.scores[i, j])!r}\n")
        else:
            raise ConfigError("unsupported spectrum type")
