"""Shared domain types and complex linear-algebra primitives.

Everything here is a pure function on immutable values; matrices and
vectors are plain numpy arrays (complex128).  Azimuth convention used
throughout the package: 0 deg points along the local +y axis ("front"),
angles increase counter-clockwise (towards -x, i.e. to the left) and are
wrapped to the interval (-180, 180].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITIAN_RTOL = 1e-10


class DoakitError(Exception):
    """Base class for all package errors."""


class ConfigError(DoakitError):
    """Invalid configuration or inconsistent inputs."""


class GridMismatchError(DoakitError):
    """Frequency grid or dimensionality mismatch between components."""


class NumericalError(DoakitError):
    """Numerical failure (decomposition, convergence, degeneracy)."""


class DecompositionError(NumericalError):
    """Matrix decomposition failed (e.g. non-positive-definite input)."""


class DegenerateEstimateError(NumericalError):
    """An RTF estimate could not be normalized (reference entry ~ 0)."""


def wrap_deg(angle_deg):
    """Wrap an angle (scalar or array, degrees) to (-180, 180]."""
    a = np.asarray(angle_deg, dtype=float)
    wrapped = -(np.mod(-a + 180.0, 360.0) - 180.0)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


def angular_diff_deg(a_deg, b_deg):
    """Smallest signed difference a - b on the circle, in (-180, 180]."""
    return wrap_deg(np.asarray(a_deg, dtype=float) - np.asarray(b_deg, dtype=float))


def azimuth_to_unit(theta_deg):
    """Unit direction vector(s) for azimuth(s) in degrees.

    0 deg -> (0, 1, 0), 90 deg -> (-1, 0, 0) (counter-clockwise positive).
    """
    t = np.deg2rad(np.asarray(theta_deg, dtype=float))
    return np.stack([-np.sin(t), np.cos(t), np.zeros_like(t)], axis=-1)


def unit_to_azimuth(v):
    """Azimuth in degrees of a direction vector (inverse of azimuth_to_unit)."""
    v = np.asarray(v, dtype=float)
    return wrap_deg(np.rad2deg(np.arctan2(-v[..., 0], v[..., 1])))


def rotation_z(angle_deg):
    """3x3 rotation about +z by `angle_deg` (counter-clockwise positive)."""
    t = np.deg2rad(float(angle_deg))
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions (meters, local frame) plus reference index."""

    mic_positions: np.ndarray
    reference_index: int = 0

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        if pos.shape[1] == 2:
            pos = np.hstack([pos, np.zeros((pos.shape[0], 1))])
        if pos.shape[0] < 1 or pos.shape[1] != 3:
            raise ConfigError("mic_positions must be an (M, 3) array with M >= 1")
        if not np.all(np.isfinite(pos)):
            raise ConfigError("mic_positions must be finite")
        if not 0 <= self.reference_index < pos.shape[0]:
            raise ConfigError(f"reference_index {self.reference_index} out of range")
        object.__setattr__(self, "mic_positions", pos)

    @property
    def num_mics(self):
        return self.mic_positions.shape[0]


@dataclass(frozen=True)
class ScenePose:
    """Position (meters, global frame) and orientation azimuth (degrees)."""

    position: np.ndarray
    orientation_deg: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).ravel()
        if p.size == 2:
            p = np.append(p, 0.0)
        if p.size != 3 or not np.all(np.isfinite(p)):
            raise ConfigError("position must be a finite 2D/3D coordinate")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation_deg", wrap_deg(float(self.orientation_deg)))

    def to_global(self, local_vec):
        """Rotate a local-frame vector into the global frame."""
        return rotation_z(self.orientation_deg) @ np.asarray(local_vec, dtype=float)

    def to_local(self, global_vec):
        """Rotate a global-frame vector into this pose's local frame."""
        return rotation_z(-self.orientation_deg) @ np.asarray(global_vec, dtype=float)


@dataclass(frozen=True)
class StftTensor:
    """Complex STFT data indexed [channel, frame, bin]."""

    data: np.ndarray
    sample_rate: float
    hop: int
    window_length: int

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.ndim != 3 or min(d.shape) < 1:
            raise ConfigError("STFT data must be a nonempty (M, L, K) array")
        if d.shape[2] != self.window_length // 2 + 1:
            raise ConfigError("bin count must equal window_length//2 + 1")
        if not np.all(np.isfinite(d)):
            raise ConfigError("STFT data must be finite")
        object.__setattr__(self, "data", d)

    @property
    def num_channels(self):
        return self.data.shape[0]

    @property
    def num_frames(self):
        return self.data.shape[1]

    @property
    def num_bins(self):
        return self.data.shape[2]

    @property
    def bin_freqs_hz(self):
        return np.fft.rfftfreq(self.window_length, d=1.0 / self.sample_rate)

    def select_channels(self, idx):
        return StftTensor(self.data[idx], self.sample_rate, self.hop, self.window_length)


@dataclass(frozen=True)
class SelectionOperator:
    """Selects the hearing-aid ('H') or external ('E') block of a stacked vector."""

    kind: str
    m_h: int
    m_e: int

    def __post_init__(self):
        if self.kind not in ("H", "E"):
            raise ConfigError("SelectionOperator kind must be 'H' or 'E'")
        if self.m_h < 1 or self.m_e < 1:
            raise ConfigError("block sizes must be >= 1")


def is_hermitian(a, rtol=HERMITIAN_RTOL):
    """True if max|A - A^H| <= rtol * max|A| (zero matrix counts as Hermitian)."""
    a = np.asarray(a)
    scale = np.max(np.abs(a))
    if scale == 0.0:
        return True
    return np.max(np.abs(a - a.conj().T)) <= rtol * scale


def hermitize(a):
    """Return the Hermitian part (A + A^H)/2; cheap symmetry repair."""
    a = np.asarray(a, dtype=complex)
    return 0.5 * (a + np.swapaxes(a, -1, -2).conj())


def cholesky_sqrt(m, bin_index=None):
    """Lower-triangular L with L @ L^H == m, for Hermitian PD m.

    Raises DecompositionError (naming the frequency bin if given) when the
    input is not positive definite.
    """
    m = np.asarray(m, dtype=complex)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        where = "" if bin_index is None else f" at frequency bin {bin_index}"
        raise DecompositionError(
            f"Cholesky decomposition failed{where}: matrix not positive definite"
        ) from exc


def principal_eigenvector(m):
    """Unit-norm eigenvector of the largest eigenvalue of Hermitian m.

    The phase is fixed so that the entry of largest magnitude is real and
    positive, which makes the result deterministic.
    """
    m = np.asarray(m, dtype=complex)
    try:
        _, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigendecomposition did not converge") from exc
    v = vecs[:, -1]
    return _fix_phase(v)


def _fix_phase(v):
    i = int(np.argmax(np.abs(v)))
    pivot = v[i]
    if pivot == 0:
        return v
    v = v * (pivot.conjugate() / abs(pivot))
    return v / np.linalg.norm(v)


def principal_eigenvectors_batch(mats):
    """Batched principal_eigenvector over a (..., N, N) Hermitian stack.

    Returns (eigenvectors (..., N), largest eigenvalues (...,)).
    """
    mats = np.asarray(mats, dtype=complex)
    vals, vecs = np.linalg.eigh(mats)
    v = vecs[..., :, -1]
    idx = np.argmax(np.abs(v), axis=-1)
    pivot = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
    mag = np.abs(pivot)
    phase = np.where(mag > 0, pivot.conj() / np.where(mag > 0, mag, 1.0), 1.0)
    v = v * phase[..., None]
    return v, vals[..., -1]


def extract_block(g, sel: SelectionOperator):
    """Extract the H- or E-block of a stacked RTF vector.

    The H-block is returned unchanged (its reference entry is already 1);
    the E-block is renormalized so that its own first entry equals 1.
    """
    g = np.asarray(g)
    if g.shape[-1] != sel.m_h + sel.m_e:
        raise GridMismatchError(
            f"vector length {g.shape[-1]} != m_h + m_e = {sel.m_h + sel.m_e}"
        )
    if sel.kind == "H":
        return g[..., : sel.m_h]
    block = g[..., sel.m_h :]
    ref = block[..., 0]
    if np.any(np.abs(ref) < 1e-300) or np.any(ref == 0):
        raise DegenerateEstimateError(
            "external block reference entry is zero; cannot renormalize"
        )
    return block / ref[..., None]


def normalize_rtf(vec, ref_index=0):
    """Normalize a complex vector so entry `ref_index` equals exactly 1."""
    vec = np.asarray(vec, dtype=complex)
    ref = vec[..., ref_index]
    if np.any(ref == 0):
        raise DegenerateEstimateError("reference entry is zero; cannot normalize")
    out = vec / ref[..., None]
    out[..., ref_index] = 1.0
    return out
