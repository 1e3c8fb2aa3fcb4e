"""Forward STFT analysis of multichannel time-domain signals.

Batch analysis only: square-root Hann window, no zero-padding and no
centering pad (the first frame starts at sample 0).  The one-sided
spectrum keeps DC and Nyquist in the tensor; spatial-spectrum sums
exclude them downstream.
"""

from __future__ import annotations

import numpy as np

from .core import ConfigError, StftTensor


def sqrt_hann(n):
    """Square-root of a periodic Hann window of length n."""
    m = np.arange(n)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * m / n))


def frame_count(num_samples, window_length, hop):
    """Number of full analysis frames: floor((N - N_w)/hop) + 1."""
    if num_samples < window_length:
        return 0
    return (num_samples - window_length) // hop + 1


def analyze(signals, sample_rate, window_ms=32.0, overlap_frac=0.5):
    """Forward STFT of an (M, N) multichannel signal.

    Returns an StftTensor with K = N_w/2 + 1 one-sided bins.  Defaults
    match the processing configuration used throughout the package:
    32 ms square-root Hann windows with 50% overlap.
    """
    x = np.atleast_2d(np.asarray(signals, dtype=float))
    if x.ndim != 2:
        raise ConfigError("signals must be an (M, N) array")
    if not 0.0 < overlap_frac < 1.0:
        raise ConfigError("overlap_frac must be in (0, 1)")
    n_w_exact = window_ms * sample_rate / 1000.0
    n_w = int(round(n_w_exact))
    if abs(n_w_exact - n_w) > 1e-9 or n_w < 2:
        raise ConfigError(f"window_ms * sample_rate must be integral, got {n_w_exact}")
    hop_exact = n_w * (1.0 - overlap_frac)
    hop = int(round(hop_exact))
    if abs(hop_exact - hop) > 1e-9 or hop < 1:
        raise ConfigError(f"hop must be integral, got {hop_exact}")

    num_frames = frame_count(x.shape[1], n_w, hop)
    if num_frames < 1:
        raise ConfigError(
            f"signal of {x.shape[1]} samples is shorter than one window ({n_w})"
        )
    window = sqrt_hann(n_w)
    starts = np.arange(num_frames) * hop
    # (M, L, N_w) view of all frames, then windowed rFFT along the last axis
    idx = starts[:, None] + np.arange(n_w)[None, :]
    frames = x[:, idx] * window[None, None, :]
    data = np.fft.rfft(frames, axis=-1)
    return StftTensor(data=data, sample_rate=float(sample_rate), hop=hop, window_length=n_w)
