"""WAV reading/writing for multichannel scene signals.

Channel order on disk is [H microphones..., E microphones...].  Float32
is the default sample format so that phase-sensitive tests are not
confounded by quantization; PCM16 is accepted on read.
"""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .core import ConfigError


def write_wav(path, signals, sample_rate, dtype="float32"):
    """Write an (M, N) signal array as an M-channel WAV file."""
    x = np.atleast_2d(np.asarray(signals, dtype=float))
    if dtype == "float32":
        data = x.T.astype(np.float32)
    elif dtype == "pcm16":
        peak = np.max(np.abs(x))
        scale = 32767.0 / peak if peak > 0 else 1.0
        data = np.round(x.T * scale).astype(np.int16)
    else:
        raise ConfigError(f"unsupported WAV dtype '{dtype}'")
    wavfile.write(path, int(sample_rate), data)


def read_wav(path):
    """Read a WAV file; returns (signals (M, N) float64, sample_rate)."""
    rate, data = wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.int16:
        x = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(float) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(float)
    else:
        raise ConfigError(f"unsupported WAV sample format {data.dtype}")
    return x.T, float(rate)
