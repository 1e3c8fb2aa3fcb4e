"""Synthetic acoustic scenes and anechoic prototype RTF databases.

The simulator and the prototype databases share the same free-field
far-field propagation model: per-microphone plane-wave projection delays
and a common 1/r amplitude per array.  Head shadowing is deliberately not
modeled, so the simulator's direct path is self-consistent with the
databases it is evaluated against.

Prototype database file format ("RTFDB1"):
    bytes 0..5   magic b"RTFDB1"
    uint32 LE    sample_rate (Hz)
    uint32 LE    window_length (samples)
    uint32 LE    K (one-sided bins, window_length//2 + 1)
    uint32 LE    M_arr (microphones)
    uint32 LE    I (angles)
    float64 LE   angle list, I entries (degrees)
    complex64 LE vectors, row-major [angle][bin][mic]
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .core import (
    ArrayGeometry,
    ConfigError,
    ScenePose,
    azimuth_to_unit,
    unit_to_azimuth,
    wrap_deg,
)

SPEED_OF_SOUND = 343.0
RTFDB_MAGIC = b"RTFDB1"
DEFAULT_SPEECH_SEED = 7131


def freefield_atf(geom: ArrayGeometry, doa_deg, freq_hz, c=SPEED_OF_SOUND):
    """Free-field plane-wave acoustic transfer vector for one array.

    Element m has unit magnitude and phase -2*pi*f*tau_m, where
    tau_m = -(p_m . u)/c is the projection delay of microphone m onto the
    unit DOA vector (microphones closer to the source lead in phase).
    Broadcasts over an array of frequencies; output shape (..., M).
    """
    u = azimuth_to_unit(float(doa_deg))
    tau = -(geom.mic_positions @ u) / c  # (M,)
    f = np.asarray(freq_hz, dtype=float)
    return np.exp(-2j * np.pi * f[..., None] * tau)


@dataclass(frozen=True)
class PrototypeDb:
    """Angle-indexed anechoic prototype RTF vectors on a fixed STFT grid.

    vectors has shape (I, K, M), dtype complex64, reference entry 1.
    """

    angles_deg: np.ndarray
    vectors: np.ndarray
    sample_rate: float
    window_length: int

    def __post_init__(self):
        angles = wrap_deg(np.asarray(self.angles_deg, dtype=float).ravel())
        if angles.size < 1:
            raise ConfigError("database needs at least one angle")
        if np.unique(angles).size != angles.size:
            raise ConfigError("database angles must be unique after wrapping")
        order = np.argsort(angles)
        vecs = np.asarray(self.vectors, dtype=np.complex64)
        if vecs.ndim != 3 or vecs.shape[0] != angles.size:
            raise ConfigError("vectors must have shape (I, K, M)")
        if vecs.shape[1] != self.window_length // 2 + 1:
            raise ConfigError("database bin count does not match window length")
        object.__setattr__(self, "angles_deg", angles[order])
        object.__setattr__(self, "vectors", np.ascontiguousarray(vecs[order]))

    @property
    def num_angles(self):
        return self.angles_deg.size

    @property
    def phasors(self):
        """Unit-magnitude phase factors exp(i*angle(vectors)), cached."""
        cached = self.__dict__.get("_phasors")
        if cached is None:
            cached = np.exp(1j * np.angle(self.vectors.astype(np.complex128)))
            object.__setattr__(self, "_phasors", cached)
        return cached

    @property
    def num_bins(self):
        return self.vectors.shape[1]

    @property
    def num_mics(self):
        return self.vectors.shape[2]

    def nearest_angle_index(self, theta_deg):
        """Index of the database angle closest (wrap-aware) to theta_deg."""
        diff = np.abs(wrap_deg(self.angles_deg - float(theta_deg)))
        return int(np.argmin(diff))

    def matches_grid(self, stft_tensor):
        return (
            self.sample_rate == stft_tensor.sample_rate
            and self.window_length == stft_tensor.window_length
        )

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(RTFDB_MAGIC)
            fh.write(
                struct.pack(
                    "<5I",
                    int(self.sample_rate),
                    int(self.window_length),
                    self.num_bins,
                    self.num_mics,
                    self.num_angles,
                )
            )
            fh.write(self.angles_deg.astype("<f8").tobytes())
            fh.write(self.vectors.astype("<c8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(6)
            if magic != RTFDB_MAGIC:
                raise ConfigError(f"{path}: not an RTFDB1 file")
            fs, wl, k, m, i = struct.unpack("<5I", fh.read(20))
            angles = np.frombuffer(fh.read(8 * i), dtype="<f8")
            vecs = np.frombuffer(fh.read(8 * i * k * m), dtype="<c8").reshape(i, k, m)
            if k != wl // 2 + 1:
                raise ConfigError(f"{path}: inconsistent header (K vs window length)")
        return cls(
            angles_deg=angles.copy(),
            vectors=vecs.copy(),
            sample_rate=float(fs),
            window_length=int(wl),
        )


def build_prototype_db(
    geom: ArrayGeometry,
    angles_deg,
    sample_rate,
    window_length,
    c=SPEED_OF_SOUND,
):
    """Free-field prototype RTF database on the one-sided rFFT grid.

    Each entry is the free-field transfer vector normalized by its
    reference element, so the reference entry is exactly 1.
    """
    angles = wrap_deg(np.asarray(angles_deg, dtype=float).ravel())
    if angles.size == 0:
        raise ConfigError("angle list is empty")
    if np.unique(angles).size != angles.size:
        raise ConfigError("duplicate angles in database grid")
    freqs = np.fft.rfftfreq(int(window_length), d=1.0 / float(sample_rate))
    vectors = np.empty((angles.size, freqs.size, geom.num_mics), dtype=np.complex64)
    for i, theta in enumerate(angles):
        atf = freefield_atf(geom, theta, freqs, c=c)  # (K, M)
        rtf = atf / atf[:, geom.reference_index][:, None]
        rtf[:, geom.reference_index] = 1.0
        vectors[i] = rtf.astype(np.complex64)
    return PrototypeDb(
        angles_deg=angles,
        vectors=vectors,
        sample_rate=float(sample_rate),
        window_length=int(window_length),
    )


def parse_angle_grid(spec_str):
    """Parse 'start:step:stop' (inclusive, degrees) into a wrapped angle grid."""
    try:
        start, step, stop = (float(p) for p in spec_str.split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad angle grid '{spec_str}', expected start:step:stop") from exc
    if step <= 0:
        raise ConfigError("angle grid step must be positive")
    n = int(np.floor((stop - start) / step + 0.5)) + 1
    return wrap_deg(start + step * np.arange(n))


def fractional_delay(x, delay_samples, out_len=None):
    """Delay a signal by a non-integer number of samples.

    Band-limited interpolation implemented in the frequency domain: the
    rFFT of the (zero-padded) signal is multiplied by exp(-2j*pi*f*d),
    which has exactly linear phase at every bin of the padded grid.  The
    Nyquist bin of an even-length grid gets the real factor cos(pi*d).
    Output length is `out_len` (default: len(x) + ceil(delay) + 1); it
    must leave room for the delayed signal, otherwise the tail wraps.
    """
    d = float(delay_samples)
    if d < 0:
        raise ConfigError("delay must be nonnegative")
    x = np.asarray(x, dtype=float)
    if out_len is None:
        out_len = len(x) + int(np.ceil(d)) + 1
    if out_len < len(x) + d:
        raise ConfigError("out_len too short for the requested delay")
    spec = np.fft.rfft(x, n=out_len)
    cycles = np.arange(spec.size) / out_len
    shift = np.exp(-2j * np.pi * cycles * d)
    if out_len % 2 == 0:
        shift[-1] = np.cos(np.pi * d)
    return np.fft.irfft(spec * shift, n=out_len)


def speech_shaped_noise(num_samples, sample_rate, rng, modulation_hz=0.0):
    """Seeded speech-spectrum-shaped Gaussian noise, optionally modulated.

    The long-term spectrum rolls off 6 dB/octave above 500 Hz.  With
    modulation_hz > 0 a slow raised-cosine envelope adds speech-like
    level fluctuation while keeping the signal constantly active.
    """
    white = rng.standard_normal(int(num_samples))
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(int(num_samples), d=1.0 / sample_rate)
    shaping = 1.0 / np.sqrt(1.0 + (f / 500.0) ** 2)
    x = np.fft.irfft(spec * shaping, n=int(num_samples))
    if modulation_hz > 0:
        t = np.arange(int(num_samples)) / sample_rate
        phase = rng.uniform(0, 2 * np.pi)
        env = 0.15 + 0.85 * (0.5 + 0.5 * np.sin(2 * np.pi * modulation_hz * t + phase))
        x = x * env
    # smooth onset/offset so the band-limited delay does not ring acausally
    fade = min(int(0.016 * sample_rate), x.size // 4)
    if fade > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
        x[:fade] *= ramp
        x[-fade:] *= ramp[::-1]
    rms = np.sqrt(np.mean(x**2))
    return x / rms if rms > 0 else x


@dataclass(frozen=True)
class ReverbTail:
    """Exponentially decaying incoherent tail (T60 proxy)."""

    tail_seconds: float
    direct_to_reverb_db: float

    def __post_init__(self):
        if self.tail_seconds <= 0:
            raise ConfigError("tail_seconds must be positive")


@dataclass(frozen=True)
class SceneConfig:
    """Full description of one synthetic scene.

    `seed` drives the noise field only; the speech component (including
    its reverberant tail) is seeded independently by `speech_seed`, so
    rerunning with a different `seed` keeps the speech bit-identical.
    """

    array_h: ArrayGeometry
    pose_h: ScenePose
    array_e: ArrayGeometry
    pose_e: ScenePose
    speaker_doa_deg: float
    seed: int
    speaker_distance_m: float = 2.0
    reverb: ReverbTail | None = None
    snr_db: float | None = None
    num_interferers: int = 0
    interferer_distance_m: float = 4.0
    white_floor_db: float = -40.0
    speech_duration_s: float = 4.0
    preroll_s: float = 0.2
    sample_rate: float = 16000.0
    speech_seed: int = DEFAULT_SPEECH_SEED
    trim_acausal: bool = True

    def __post_init__(self):
        if self.speaker_distance_m <= 0:
            raise ConfigError("speaker_distance_m must be positive")
        if self.seed is None:
            raise ConfigError("seed is mandatory for reproducibility")
        if self.snr_db is not None and self.num_interferers < 1:
            raise ConfigError("snr_db requires at least one interferer (noise source)")
        if self.num_interferers >= 1 and self.snr_db is None:
            raise ConfigError("scenes with noise must specify snr_db")
        if self.speech_duration_s <= 0:
            raise ConfigError("speech_duration_s must be positive")

    @property
    def num_channels(self):
        return self.array_h.num_mics + self.array_e.num_mics

    def to_dict(self):
        d = {
            "array_h": {
                "mic_positions": self.array_h.mic_positions.tolist(),
                "reference_index": self.array_h.reference_index,
            },
            "pose_h": {
                "position": self.pose_h.position.tolist(),
                "orientation_deg": self.pose_h.orientation_deg,
            },
            "array_e": {
                "mic_positions": self.array_e.mic_positions.tolist(),
                "reference_index": self.array_e.reference_index,
            },
            "pose_e": {
                "position": self.pose_e.position.tolist(),
                "orientation_deg": self.pose_e.orientation_deg,
            },
            "speaker_doa_deg": self.speaker_doa_deg,
            "speaker_distance_m": self.speaker_distance_m,
            "seed": self.seed,
            "snr_db": self.snr_db,
            "num_interferers": self.num_interferers,
            "interferer_distance_m": self.interferer_distance_m,
            "white_floor_db": self.white_floor_db,
            "speech_duration_s": self.speech_duration_s,
            "preroll_s": self.preroll_s,
            "sample_rate": self.sample_rate,
            "speech_seed": self.speech_seed,
            "trim_acausal": self.trim_acausal,
        }
        if self.reverb is not None:
            d["reverb"] = {
                "tail_seconds": self.reverb.tail_seconds,
                "direct_to_reverb_db": self.reverb.direct_to_reverb_db,
            }
        return d

    @classmethod
    def from_dict(cls, d):
        def geom(key):
            g = d[key]
            return ArrayGeometry(
                np.asarray(g["mic_positions"], dtype=float),
                int(g.get("reference_index", 0)),
            )

        def pose(key):
            p = d[key]
            return ScenePose(np.asarray(p["position"], dtype=float), float(p["orientation_deg"]))

        reverb = None
        if d.get("reverb") is not None:
            reverb = ReverbTail(
                float(d["reverb"]["tail_seconds"]),
                float(d["reverb"]["direct_to_reverb_db"]),
            )
        return cls(
            array_h=geom("array_h"),
            pose_h=pose("pose_h"),
            array_e=geom("array_e"),
            pose_e=pose("pose_e"),
            speaker_doa_deg=float(d["speaker_doa_deg"]),
            speaker_distance_m=float(d.get("speaker_distance_m", 2.0)),
            seed=int(d["seed"]),
            reverb=reverb,
            snr_db=None if d.get("snr_db") is None else float(d["snr_db"]),
            num_interferers=int(d.get("num_interferers", 0)),
            interferer_distance_m=float(d.get("interferer_distance_m", 4.0)),
            white_floor_db=float(d.get("white_floor_db", -40.0)),
            speech_duration_s=float(d.get("speech_duration_s", 4.0)),
            preroll_s=float(d.get("preroll_s", 0.2)),
            sample_rate=float(d.get("sample_rate", 16000.0)),
            speech_seed=int(d.get("speech_seed", DEFAULT_SPEECH_SEED)),
            trim_acausal=bool(d.get("trim_acausal", True)),
        )

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")


def speaker_position(cfg: SceneConfig):
    """Global speaker position implied by the configured DOA and distance."""
    u_local = azimuth_to_unit(cfg.speaker_doa_deg)
    return cfg.pose_h.position + cfg.speaker_distance_m * cfg.pose_h.to_global(u_local)


def angle_in_frame(point_global, pose: ScenePose):
    """Azimuth of a global point as seen from a pose's local frame."""
    v = np.asarray(point_global, dtype=float) - pose.position
    if np.linalg.norm(v) < 1e-12:
        raise ConfigError("point coincides with the array origin; angle undefined")
    return unit_to_azimuth(pose.to_local(v))


def true_theta_e(cfg: SceneConfig):
    """Speaker azimuth in the external array's local frame (degrees)."""
    return angle_in_frame(speaker_position(cfg), cfg.pose_e)


@dataclass(frozen=True)
class SceneRender:
    """Rendered multichannel signals: mixture = clean_speech + noise exactly."""

    mixture: np.ndarray
    clean_speech: np.ndarray
    noise: np.ndarray
    theta_deg: float
    theta_e_deg: float
    sample_rate: float
    num_h: int
    num_e: int


def _render_point_source(signal, arrays_and_poses, source_global, sample_rate, c, out_len, trim_acausal=True):
    """Far-field rendering of one point source to all arrays (stacked channels).

    Per-array: common 1/r amplitude and a common base delay r/c, plus
    per-microphone plane-wave projection delays from the source bearing
    in that array's local frame.  All channels share one output length so
    their delays live on the same frequency-domain grid.
    """
    signal = np.asarray(signal, dtype=float)
    nz = np.flatnonzero(signal)
    source_onset = int(nz[0]) if nz.size else signal.size
    chans = []
    for geom, pose in arrays_and_poses:
        v = np.asarray(source_global, dtype=float) - pose.position
        r = np.linalg.norm(v)
        if r < 1e-9:
            raise ConfigError("source coincides with an array center")
        theta_local = unit_to_azimuth(pose.to_local(v))
        u = azimuth_to_unit(theta_local)
        tau = -(geom.mic_positions @ u) / c  # (M,)
        base = r / c
        for m in range(geom.num_mics):
            delay = (base + tau[m]) * sample_rate
            delayed = fractional_delay(signal, delay, out_len=out_len)
            if trim_acausal:
                # causality: nothing can arrive before the propagation delay;
                # zero the band-limited interpolator's acausal pre-ring
                arrival = source_onset + int(np.floor(delay))
                if arrival > 0:
                    delayed[: min(arrival, delayed.size)] = 0.0
            chans.append(delayed / r)
    return np.stack(chans)


def _pad_to(x, n):
    if x.shape[-1] >= n:
        return x[..., :n]
    pad = [(0, 0)] * (x.ndim - 1) + [(0, n - x.shape[-1])]
    return np.pad(x, pad)


def measure_snr_db(speech, noise, channels=None):
    """10*log10(mean-over-channels speech power / noise power)."""
    s = np.atleast_2d(speech)
    n = np.atleast_2d(noise)
    if channels is not None:
        s = s[channels]
        n = n[channels]
    p_s = np.mean(s**2)
    p_n = np.mean(n**2)
    if p_n <= 0:
        raise ConfigError("noise has zero energy; SNR undefined")
    return 10.0 * np.log10(p_s / p_n)


def render_scene(cfg: SceneConfig, speech=None):
    """Render a scene to multichannel time signals.

    Channel order is [H microphones..., E microphones...].  The speech
    component is preceded by `preroll_s` seconds of silence so that
    covariance trackers can initialize on noise only.
    """
    fs = cfg.sample_rate
    c = SPEED_OF_SOUND
    rng_speech = np.random.default_rng(cfg.speech_seed)
    if speech is None:
        speech = speech_shaped_noise(
            int(round(cfg.speech_duration_s * fs)), fs, rng_speech, modulation_hz=3.0
        )
    speech = np.asarray(speech, dtype=float).ravel()
    if speech.size == 0:
        raise ConfigError("speech signal is empty")
    preroll = int(round(cfg.preroll_s * fs))
    dry = np.concatenate([np.zeros(preroll), speech])

    arrays = [(cfg.array_h, cfg.pose_h), (cfg.array_e, cfg.pose_e)]
    m_h = cfg.array_h.num_mics
    src = speaker_position(cfg)

    # One common output length (multiple of 512 samples, friendly to the
    # default 32 ms window) covering all propagation delays and the tail.
    max_dist = max(cfg.speaker_distance_m + 2.0, cfg.interferer_distance_m + 2.0)
    tail_len = 0 if cfg.reverb is None else int(round(cfg.reverb.tail_seconds * fs))
    n_out = len(dry) + int(np.ceil(max_dist / c * fs)) + tail_len + 64
    n_out = int(np.ceil(n_out / 512.0)) * 512

    clean = _render_point_source(dry, arrays, src, fs, c, n_out, trim_acausal=cfg.trim_acausal)

    if cfg.reverb is not None:
        rng_rev = np.random.default_rng(cfg.speech_seed + 1)
        t = np.arange(tail_len) / fs
        envelope = 10.0 ** (-3.0 * t / cfg.reverb.tail_seconds)  # 60 dB over the tail
        rev = np.zeros_like(clean)
        ch = 0
        for geom, pose in arrays:
            r = np.linalg.norm(src - pose.position)
            onset = int(round(r / c * fs))  # tail starts at the direct arrival
            for _ in range(geom.num_mics):
                h = rng_rev.standard_normal(tail_len) * envelope
                y = fftconvolve(dry, h)
                rev[ch] += _pad_to(np.concatenate([np.zeros(onset), y]), n_out)
                ch += 1
        # scale reverb so that mean direct power / mean reverb power over
        # the H microphones equals the configured direct-to-reverb ratio
        p_dir = np.mean(clean[:m_h] ** 2)
        p_rev = np.mean(rev[:m_h] ** 2)
        if p_rev > 0:
            target = p_dir / 10.0 ** (cfg.reverb.direct_to_reverb_db / 10.0)
            rev *= np.sqrt(target / p_rev)
        clean = clean + rev

    noise = np.zeros_like(clean)
    if cfg.num_interferers >= 1:
        rng_noise = np.random.default_rng(cfg.seed)
        # interferers face in from the "room corner" bearings 45, 135, ... deg
        corner_az = wrap_deg(45.0 + 360.0 * np.arange(cfg.num_interferers) / max(cfg.num_interferers, 4))
        sig_len = n_out - int(np.ceil(max_dist / c * fs)) - 1
        for q in range(cfg.num_interferers):
            sig = speech_shaped_noise(sig_len, fs, rng_noise)
            pos = cfg.interferer_distance_m * azimuth_to_unit(float(corner_az[q]))
            noise += _render_point_source(sig, arrays, pos, fs, c, n_out, trim_acausal=cfg.trim_acausal)
        # small spatially-white floor relative to the diffuse field
        p_diffuse = np.mean(noise**2)
        floor = rng_noise.standard_normal(noise.shape)
        floor *= np.sqrt(p_diffuse * 10.0 ** (cfg.white_floor_db / 10.0))
        noise += floor
        p_s = np.mean(clean[:m_h] ** 2)
        p_n = np.mean(noise[:m_h] ** 2)
        if p_n <= 0 or p_s <= 0:
            raise ConfigError("cannot scale noise to the requested SNR (zero energy)")
        noise *= np.sqrt(p_s / p_n / 10.0 ** (cfg.snr_db / 10.0))

    return SceneRender(
        mixture=clean + noise,
        clean_speech=clean,
        noise=noise,
        theta_deg=wrap_deg(cfg.speaker_doa_deg),
        theta_e_deg=true_theta_e(cfg),
        sample_rate=fs,
        num_h=m_h,
        num_e=cfg.array_e.num_mics,
    )


def binaural_array(ear_span_m=0.164, mic_pair_gap_m=0.016):
    """4-microphone behind-the-ear style geometry (two mics per ear).

    Reference is the front-left microphone; +y is "front", +x is "right"
    in the sense that azimuths increase counter-clockwise (to the left).
    """
    hx = ear_span_m / 2.0
    hy = mic_pair_gap_m / 2.0
    return ArrayGeometry(
        mic_positions=np.array(
            [
                [-hx, hy, 0.0],
                [-hx, -hy, 0.0],
                [hx, hy, 0.0],
                [hx, -hy, 0.0],
            ]
        ),
        reference_index=0,
    )


def default_scene(
    speaker_doa_deg,
    seed,
    snr_db=None,
    num_interferers=0,
    reverb=None,
    speech_duration_s=4.0,
    sample_rate=16000.0,
):
    """Two identical binaural arrays, external array 1 m away at -80 deg.

    The external array is rotated -120 deg, which for a speaker at
    -120 deg and 2 m puts the speaker near -27.5 deg in its local frame.
    """
    return SceneConfig(
        array_h=binaural_array(),
        pose_h=ScenePose(np.zeros(3), 0.0),
        array_e=binaural_array(),
        pose_e=ScenePose(azimuth_to_unit(-80.0), -120.0),
        speaker_doa_deg=speaker_doa_deg,
        seed=seed,
        snr_db=snr_db,
        num_interferers=num_interferers,
        reverb=reverb,
        speech_duration_s=speech_duration_s,
        sample_rate=sample_rate,
    )
