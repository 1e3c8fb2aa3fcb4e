"""Covariance-whitening RTF-vector estimation (H-only and all-microphone).

The estimator whitens the noisy covariance with a Cholesky square root of
the (regularized) undesired covariance, takes the principal eigenvector
of the whitened matrix, de-whitens it and normalizes by the reference
entry.  Under the rank-1 signal model this recovers the direct-path RTF
vector exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DecompositionError,
    DegenerateEstimateError,
    GridMismatchError,
    SelectionOperator,
    cholesky_sqrt,
    extract_block,
    principal_eigenvector,
    principal_eigenvectors_batch,
)

COV_REG_DELTA = 1e-8
REF_DEGENERACY_TOL = 1e-12


def _regularize(phi_u, delta=COV_REG_DELTA):
    """Add delta * trace/N * I; recursive estimates can be rank-deficient.

    A zero undesired covariance (noiseless stream) is regularized by the
    scale of an identity fallback instead, since whitening by eps*I is
    scale-invariant and reduces the estimator to a plain eigenvector.
    """
    phi_u = np.asarray(phi_u, dtype=complex)
    n = phi_u.shape[-1]
    t = np.einsum("...ii->...", phi_u).real / n
    t = np.where(t > 0, t, 1.0)
    eye = np.eye(n)
    return phi_u + (delta * t)[..., None, None] * eye


def cw_estimate(phi_y, phi_u, bin_index=None):
    """Covariance-whitening RTF estimate from one covariance pair.

    Returns an RTF vector whose first (reference) entry is exactly 1.
    Raises DegenerateEstimateError if the de-whitened eigenvector has a
    vanishing reference entry.
    """
    phi_y = np.asarray(phi_y, dtype=complex)
    phi_u = np.asarray(phi_u, dtype=complex)
    if phi_y.shape != phi_u.shape or phi_y.ndim != 2:
        raise GridMismatchError("covariance matrices must be square and same order")
    chol = cholesky_sqrt(_regularize(phi_u), bin_index=bin_index)
    whitened = np.linalg.solve(chol, phi_y)
    whitened = np.linalg.solve(chol, whitened.conj().T).conj().T
    w = principal_eigenvector(0.5 * (whitened + whitened.conj().T))
    g = chol @ w
    ref = g[0]
    if abs(ref) < REF_DEGENERACY_TOL * np.linalg.norm(g):
        raise DegenerateEstimateError(
            "reference entry of the de-whitened eigenvector is ~0"
        )
    out = g / ref
    out[0] = 1.0
    return out


@dataclass(frozen=True)
class BatchCwResult:
    """Per-bin CW estimates plus validity metadata.

    vectors: (K, M) RTF estimates (reference entry 1 where valid).
    valid: (K,) False where the reference entry was degenerate.
    low_confidence: (K,) True where the whitened principal eigenvalue was
        <= 1 (no speech dominance); kept as metadata only.
    """

    vectors: np.ndarray
    valid: np.ndarray
    low_confidence: np.ndarray


def cw_estimate_batch(phi_y, phi_u):
    """Vectorized covariance whitening over a stack of bins.

    phi_y, phi_u: (K, M, M) Hermitian stacks.  Degenerate bins are
    flagged in the result instead of raising, so one bad bin does not
    take down a whole frame.
    """
    phi_y = np.asarray(phi_y, dtype=complex)
    phi_u = np.asarray(phi_u, dtype=complex)
    if phi_y.shape != phi_u.shape or phi_y.ndim != 3:
        raise GridMismatchError("expected matching (K, M, M) stacks")
    try:
        chol = np.linalg.cholesky(_regularize(phi_u))
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(
            "Cholesky decomposition failed on the regularized undesired covariance"
        ) from exc
    whitened = np.linalg.solve(chol, phi_y)
    whitened = np.linalg.solve(chol, np.swapaxes(whitened, -1, -2).conj())
    whitened = np.swapaxes(whitened, -1, -2).conj()
    whitened = 0.5 * (whitened + np.swapaxes(whitened, -1, -2).conj())
    w, top_eigenvalue = principal_eigenvectors_batch(whitened)
    g = np.einsum("kij,kj->ki", chol, w)
    ref = g[:, 0]
    norm = np.linalg.norm(g, axis=1)
    valid = np.abs(ref) >= REF_DEGENERACY_TOL * norm
    safe_ref = np.where(valid, ref, 1.0)
    vectors = g / safe_ref[:, None]
    vectors[valid, 0] = 1.0
    return BatchCwResult(
        vectors=vectors,
        valid=valid,
        low_confidence=top_eigenvalue.real <= 1.0,
    )


def estimate_gh_cw(phi_y_h, phi_u_h):
    """H-only CW estimate from the hearing-aid covariance sub-blocks."""
    return cw_estimate(phi_y_h, phi_u_h)


@dataclass(frozen=True)
class CwAllMicsEstimate:
    """All-microphone CW estimate split into its blocks.

    g_full has reference entry 1 (hearing-aid reference); g_h is its
    leading block; g_e is the external block renormalized to its own
    first entry.  e_valid is False when that renormalization was
    degenerate (g_e is then unusable, g_h still is).
    """

    g_full: np.ndarray
    g_h: np.ndarray
    g_e: np.ndarray
    e_valid: bool


def estimate_g_cwe(phi_y, phi_u, m_h):
    """All-microphone CW estimate plus extracted H/E blocks."""
    g_full = cw_estimate(phi_y, phi_u)
    m = g_full.shape[0]
    if not 1 <= m_h < m:
        raise GridMismatchError(f"m_h={m_h} invalid for a length-{m} vector")
    sel_h = SelectionOperator("H", m_h, m - m_h)
    sel_e = SelectionOperator("E", m_h, m - m_h)
    g_h = extract_block(g_full, sel_h)
    try:
        g_e = extract_block(g_full, sel_e)
        e_valid = bool(np.abs(g_full[m_h]) >= REF_DEGENERACY_TOL * np.linalg.norm(g_full))
    except DegenerateEstimateError:
        g_e = np.zeros(m - m_h, dtype=complex)
        e_valid = False
    return CwAllMicsEstimate(g_full=g_full, g_h=g_h, g_e=g_e, e_valid=e_valid)


def concat_estimated(g_h, g_e):
    """Stack reference-normalized H and E estimates into one vector."""
    g_h = np.asarray(g_h, dtype=complex)
    g_e = np.asarray(g_e, dtype=complex)
    return np.concatenate([g_h, g_e], axis=-1)
