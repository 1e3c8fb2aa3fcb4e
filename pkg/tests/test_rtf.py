"""Tests for covariance-whitening RTF estimation."""

from dataclasses import replace

import numpy as np
import pytest

from doakit import sim, stft
from doakit.core import DegenerateEstimateError, GridMismatchError, principal_eigenvector
from doakit.rtf import (
    _regularize,
    concat_estimated,
    cw_estimate,
    cw_estimate_batch,
    estimate_g_cwe,
    estimate_gh_cw,
)


def random_model(rng, m):
    """Synthetic rank-1-plus-noise covariance pair with known RTF."""
    g = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    g /= g[0]
    g[0] = 1.0
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    phi_u = a @ a.conj().T + 0.1 * np.eye(m)
    phi = float(rng.uniform(0.5, 5.0))
    phi_y = np.outer(g, g.conj()) * phi + phi_u
    return g, phi_y, phi_u


def exact_scene_snapshots(cfg, num_renders=3):
    """Per-bin signal snapshots read on the exact STFT-commensurate DFT grid.

    Renders the scene with several independent source signals and samples
    the full-length spectrum at every (N/512)-th bin, where the rendered
    channels are exact fractional delays of one another.  Returns
    (snapshots (R, 257, M), true theta_E).
    """
    snaps = []
    theta_e = None
    for j in range(num_renders):
        rng = np.random.default_rng(1000 + j)
        speech = rng.standard_normal(int(cfg.speech_duration_s * cfg.sample_rate))
        r = sim.render_scene(replace(cfg, trim_acausal=False), speech=speech)
        n = r.clean_speech.shape[1]
        assert n % 512 == 0
        snaps.append(np.fft.rfft(r.clean_speech, axis=1)[:, :: n // 512].T)
        theta_e = r.theta_e_deg
    return np.stack(snaps), theta_e


# ------------------------------------------------------------ cw_estimate


def test_cw_exact_recovery():
    rng = np.random.default_rng(0)
    for m in (2, 4, 8):
        for _ in range(20):
            g, phi_y, phi_u = random_model(rng, m)
            est = cw_estimate(phi_y, phi_u)
            assert np.max(np.abs(est - g)) < 1e-6
            assert est[0] == 1.0


def test_cw_identity_whitening_reduces_to_eigenvector():
    rng = np.random.default_rng(1)
    g, phi_y, _ = random_model(rng, 4)
    est = cw_estimate(phi_y, np.eye(4))
    v = principal_eigenvector(phi_y)
    assert np.allclose(est, v / v[0], atol=1e-10)


def test_cw_scale_invariant():
    rng = np.random.default_rng(2)
    g, phi_y, phi_u = random_model(rng, 4)
    assert np.allclose(cw_estimate(phi_y, phi_u), cw_estimate(10.0 * phi_y, phi_u))


def test_cw_degenerate_reference_raises():
    # principal direction orthogonal to the reference microphone
    phi_y = np.diag([0.0, 5.0]).astype(complex)
    with pytest.raises(DegenerateEstimateError):
        cw_estimate(phi_y, np.eye(2))


def test_cw_shape_mismatch():
    with pytest.raises(GridMismatchError):
        cw_estimate(np.eye(3), np.eye(4))


def test_regularize_zero_trace_falls_back_to_identity_scale():
    out = _regularize(np.zeros((3, 3)))
    assert np.allclose(out, 1e-8 * np.eye(3))
    # and cw still works on a noiseless covariance pair
    rng = np.random.default_rng(3)
    g = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    g /= g[0]
    est = cw_estimate(np.outer(g, g.conj()), np.zeros((4, 4)))
    assert np.max(np.abs(est - g)) < 1e-9


# ------------------------------------------------------------- batch path


def test_batch_matches_single():
    rng = np.random.default_rng(4)
    models = [random_model(rng, 4) for _ in range(6)]
    phi_y = np.stack([m[1] for m in models])
    phi_u = np.stack([m[2] for m in models])
    res = cw_estimate_batch(phi_y, phi_u)
    assert np.all(res.valid)
    for i, (g, py, pu) in enumerate(models):
        assert np.allclose(res.vectors[i], cw_estimate(py, pu), atol=1e-9)


def test_batch_flags_degenerate_bins():
    phi_y = np.stack([np.diag([0.0, 5.0]).astype(complex), np.diag([5.0, 1.0]).astype(complex)])
    phi_u = np.stack([np.eye(2, dtype=complex)] * 2)
    res = cw_estimate_batch(phi_y, phi_u)
    assert not res.valid[0] and res.valid[1]


def test_batch_low_confidence_without_speech():
    # phi_y == phi_u: whitened matrix is the identity, top eigenvalue 1
    rng = np.random.default_rng(5)
    _, _, phi_u = random_model(rng, 3)
    res = cw_estimate_batch(phi_u[None], phi_u[None])
    assert bool(res.low_confidence[0])
    g, phi_y, phi_u = random_model(rng, 3)
    res = cw_estimate_batch(phi_y[None], phi_u[None])
    assert not bool(res.low_confidence[0])


# ------------------------------------------------------------ estimators


def test_gh_cw_equals_cw_on_extracted_block():
    rng = np.random.default_rng(6)
    g, phi_y, phi_u = random_model(rng, 4)
    full_y = np.zeros((6, 6), dtype=complex)
    full_u = np.zeros((6, 6), dtype=complex)
    full_y[:4, :4], full_u[:4, :4] = phi_y, phi_u
    full_y[4:, 4:] = full_u[4:, 4:] = np.eye(2)
    assert np.allclose(estimate_gh_cw(full_y[:4, :4], full_u[:4, :4]), cw_estimate(phi_y, phi_u))


def test_noiseless_scene_recovers_direct_path_rtf():
    # covariance built from exact DFT-grid snapshots of rendered scenes:
    # the H-block estimate matches the prototype phases far inside 1e-3 rad
    cfg = sim.default_scene(speaker_doa_deg=-120.0, seed=0, speech_duration_s=1.0)
    snaps, _ = exact_scene_snapshots(cfg)
    snaps_h = snaps[:, :, :4]
    phi_y = np.einsum("rkm,rkn->kmn", snaps_h, snaps_h.conj()) / snaps.shape[0]
    res = cw_estimate_batch(phi_y, np.zeros_like(phi_y))
    db = sim.build_prototype_db(cfg.array_h, [cfg.speaker_doa_deg], 16000.0, 512)
    err = np.angle(res.vectors * np.conj(db.vectors[0]))
    assert np.max(np.abs(err[1:256])) < 1e-3


def test_noiseless_scene_full_vector_matches_concatenated_truth():
    cfg = sim.default_scene(speaker_doa_deg=60.0, seed=0, speech_duration_s=1.0)
    snaps, theta_e = exact_scene_snapshots(cfg)
    phi_y = np.einsum("rkm,rkn->kmn", snaps, snaps.conj()) / snaps.shape[0]
    db_h = sim.build_prototype_db(cfg.array_h, [cfg.speaker_doa_deg], 16000.0, 512)
    db_e = sim.build_prototype_db(cfg.array_e, [theta_e], 16000.0, 512)
    for k in range(1, 256):
        est = estimate_g_cwe(phi_y[k], np.zeros((8, 8)), m_h=4)
        assert est.e_valid
        truth_h = db_h.vectors[0, k].astype(complex)
        truth_e = db_e.vectors[0, k].astype(complex)
        # the per-array 1/r attenuation is common to all E elements, so it
        # cancels in the E-renormalization and the blocks match directly
        assert np.max(np.abs(est.g_h - truth_h)) < 1e-6
        assert np.max(np.abs(est.g_e - truth_e)) < 1e-6


def test_noisy_scene_cw_and_cwe_h_blocks_differ():
    cfg = sim.default_scene(
        speaker_doa_deg=-40.0, seed=1, snr_db=0.0, num_interferers=4, speech_duration_s=1.0
    )
    r = sim.render_scene(cfg)
    mix = stft.analyze(r.mixture, 16000.0)
    y = mix.data[:, 30:, :]  # (M, L, K) steady frames
    phi = np.einsum("mlk,nlk->kmn", y, y.conj()) / y.shape[1]
    noise = stft.analyze(r.noise, 16000.0).data[:, 30:, :]
    phi_u = np.einsum("mlk,nlk->kmn", noise, noise.conj()) / noise.shape[1]
    k = 80
    g_h_only = estimate_gh_cw(phi[k, :4, :4], phi_u[k, :4, :4])
    g_all = estimate_g_cwe(phi[k], phi_u[k], m_h=4)
    assert np.max(np.abs(g_h_only - g_all.g_h)) > 1e-8


def test_concat_round_trip():
    rng = np.random.default_rng(7)
    g_h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    g_e = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    g_h[0] = 1.0
    g_e[0] = 1.0
    g = concat_estimated(g_h, g_e)
    assert g.shape == (8,)
    assert np.array_equal(g[:4], g_h)
    assert np.array_equal(g[4:], g_e)
    assert g[0] == 1.0 and g[4] == 1.0
