"""Recursive per-frequency covariance tracking with speech-presence gating.

Two covariance estimates are maintained per frequency bin: the noisy
covariance (updated during speech-and-noise bins) and the undesired
covariance (updated during noise-only bins).  Both are initialized from
the average outer product of the first frames, which the simulator
guarantees to be a speech-free preroll.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, GridMismatchError

DEFAULT_HOP_S = 0.016
DEFAULT_TAU_Y_S = 0.250
DEFAULT_TAU_U_S = 0.500


def alpha_from_time_constant(tau_s, hop_s):
    """Exponential smoothing factor alpha = exp(-hop/tau)."""
    if tau_s <= 0 or hop_s <= 0:
        raise ConfigError("time constant and hop must be positive")
    return float(np.exp(-hop_s / tau_s))


@dataclass
class SppGate:
    """Per-TF-bin speech-presence decision, oracle or blind.

    Oracle mode compares the clean-speech power (averaged over the gate's
    channels) against `oracle_gamma` times a noise-floor estimate taken
    from the first `init_frames` frames of the mixture.  Blind mode maps
    a temporally smoothed a-posteriori SNR through a logistic (slope 1,
    midpoint 2) per channel, averages the probabilities over channels and
    thresholds them.
    """

    mode: str = "oracle"
    threshold: float = 0.5
    oracle_gamma: float = 1.0
    init_frames: int = 10
    snr_smoothing: float = 0.9
    psd_smoothing: float = 0.97
    _frames_seen: int = field(default=0, repr=False)
    _floor: np.ndarray | None = field(default=None, repr=False)
    _noise_psd: np.ndarray | None = field(default=None, repr=False)
    _snr_smooth: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("oracle", "blind"):
            raise ConfigError("SppGate mode must be 'oracle' or 'blind'")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")

    def decide(self, y_frame, clean_frame=None):
        """Binary speech-presence decision per frequency bin.

        y_frame: (K, M) mixture STFT frame for the gate's channels.
        clean_frame: (K, M) clean-speech STFT frame (oracle mode only).
        Returns a boolean array of shape (K,): True = speech-and-noise.
        """
        y = np.asarray(y_frame)
        if y.ndim != 2:
            raise GridMismatchError("gate expects a (K, M) frame")
        power = np.abs(y) ** 2  # (K, M)
        k = power.shape[0]

        if self.mode == "oracle":
            if clean_frame is None:
                raise ConfigError("oracle gate requires the clean-speech frame")
            clean_power = np.mean(np.abs(np.asarray(clean_frame)) ** 2, axis=1)
            if self._floor is None:
                self._floor = np.zeros(k)
            if self._frames_seen < self.init_frames:
                self._floor += np.mean(power, axis=1) / self.init_frames
                decision = np.zeros(k, dtype=bool)
            else:
                decision = clean_power > self.oracle_gamma * self._floor
        else:
            if self._noise_psd is None:
                self._noise_psd = np.zeros_like(power)
                self._snr_smooth = np.zeros(k)
            if self._frames_seen < self.init_frames:
                self._noise_psd += power / self.init_frames
                decision = np.zeros(k, dtype=bool)
            else:
                psd = np.maximum(self._noise_psd, 1e-300)
                a_post = np.mean(power / psd, axis=1)
                self._snr_smooth = (
                    self.snr_smoothing * self._snr_smooth
                    + (1.0 - self.snr_smoothing) * a_post
                )
                prob = 1.0 / (1.0 + np.exp(-(self._snr_smooth - 2.0)))
                decision = prob > self.threshold
                noise_only = ~decision
                self._noise_psd[noise_only] = (
                    self.psd_smoothing * self._noise_psd[noise_only]
                    + (1.0 - self.psd_smoothing) * power[noise_only]
                )
        self._frames_seen += 1
        return decision


@dataclass
class CovTracker:
    """Recursive noisy/undesired covariance estimates, one pair per bin.

    The first `init_frames` frames seed both matrices with the average
    outer product; recursive updates start afterwards, routed per bin by
    the speech-presence decisions.
    """

    num_bins: int
    order: int
    alpha_y: float = field(default_factory=lambda: alpha_from_time_constant(DEFAULT_TAU_Y_S, DEFAULT_HOP_S))
    alpha_u: float = field(default_factory=lambda: alpha_from_time_constant(DEFAULT_TAU_U_S, DEFAULT_HOP_S))
    init_frames: int = 10

    def __post_init__(self):
        if not (0.0 <= self.alpha_y < 1.0 and 0.0 <= self.alpha_u < 1.0):
            raise ConfigError("smoothing factors must be in [0, 1)")
        k, m = self.num_bins, self.order
        self.phi_y = np.zeros((k, m, m), dtype=complex)
        self.phi_u = np.zeros((k, m, m), dtype=complex)
        self.frames_seen = 0
        self.phi_y_ever_updated = False

    @property
    def initialized(self):
        return self.frames_seen >= self.init_frames

    def update(self, y_frame, decisions=None):
        """Advance the tracker by one frame.

        y_frame: (K, M) complex STFT frame.
        decisions: (K,) bool, True = speech-and-noise bin.  Ignored during
        the initialization phase.  Returns self.
        """
        y = np.asarray(y_frame, dtype=complex)
        if y.shape != (self.num_bins, self.order):
            raise GridMismatchError(
                f"frame shape {y.shape} does not match tracker ({self.num_bins}, {self.order})"
            )
        outer = y[:, :, None] * y[:, None, :].conj()  # (K, M, M)
        if self.frames_seen < self.init_frames:
            self.phi_y += outer / self.init_frames
            self.phi_u += outer / self.init_frames
        else:
            if decisions is None:
                raise ConfigError("decisions required once the tracker is initialized")
            d = np.asarray(decisions, dtype=bool)
            if d.shape != (self.num_bins,):
                raise GridMismatchError("decisions must have shape (K,)")
            if np.any(d):
                self.phi_y[d] = self.alpha_y * self.phi_y[d] + (1.0 - self.alpha_y) * outer[d]
                self.phi_y_ever_updated = True
            nd = ~d
            if np.any(nd):
                self.phi_u[nd] = self.alpha_u * self.phi_u[nd] + (1.0 - self.alpha_u) * outer[nd]
        self.frames_seen += 1
        return self

    def h_blocks(self, m_h):
        """Views of the leading m_h x m_h sub-blocks (phi_y_h, phi_u_h)."""
        return self.phi_y[:, :m_h, :m_h], self.phi_u[:, :m_h, :m_h]
