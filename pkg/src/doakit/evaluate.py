"""Experiment runner: four-algorithm comparison and localization accuracy.

Per scene, covariance tracking runs exactly once on the full microphone
set; every algorithm variant consumes the identical tracker state, so
performance differences are attributable to the estimator/spectrum
choice only.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import rtf, sim, spectrum, stft, track
from .core import ConfigError, DoakitError, StftTensor, angular_diff_deg


class UndefinedAccuracyError(DoakitError):
    """Accuracy requested over zero estimate-bearing frames."""


class AlgorithmVariant(str, Enum):
    """X/Y naming: X estimates the RTF vector, Y builds the spectrum."""

    H_OVER_H = "hh"
    HE_OVER_H = "heh"
    HE_OVER_HE_2D = "he2d"
    HE_OVER_HE_MATCH = "hematch"


VARIANTS_NEEDING_E_DB = (AlgorithmVariant.HE_OVER_HE_2D, AlgorithmVariant.HE_OVER_HE_MATCH)


@dataclass(frozen=True)
class PipelineConfig:
    """Tracking and gating parameters shared by all variants."""

    alpha_y: float = field(
        default_factory=lambda: track.alpha_from_time_constant(track.DEFAULT_TAU_Y_S, track.DEFAULT_HOP_S)
    )
    alpha_u: float = field(
        default_factory=lambda: track.alpha_from_time_constant(track.DEFAULT_TAU_U_S, track.DEFAULT_HOP_S)
    )
    init_frames: int = 10
    gate_mode: str = "oracle"
    gate_threshold: float = 0.5
    oracle_gamma: float = 1.0


@dataclass(frozen=True)
class FrameEstimates:
    """Per-frame CW estimates for one scene (inputs to all spectra).

    active marks frames carrying a usable estimate: tracker initialized
    and the noisy covariance updated by speech at least once (warm-up
    frames are excluded from accuracy).
    """

    g_h_cw: np.ndarray  # (L, K, M_H) H-only CW estimates
    h_valid: np.ndarray  # (L, K)
    g_tilde: np.ndarray  # (L, K, M) all-mic estimates, E block renormalized
    full_valid: np.ndarray  # (L, K) reference entry of the full estimate OK
    e_valid: np.ndarray  # (L, K) external block renormalization OK
    active: np.ndarray  # (L,)
    m_h: int


def estimate_frames(mix: StftTensor, m_h, pipeline: PipelineConfig, clean: StftTensor | None = None):
    """Track covariances over a mixture and produce per-frame CW estimates.

    clean is required for the oracle gate.  Returns FrameEstimates.
    """
    if not 1 <= m_h < mix.num_channels:
        raise ConfigError(f"m_h={m_h} invalid for {mix.num_channels} channels")
    if pipeline.gate_mode == "oracle" and clean is None:
        raise ConfigError("oracle gating requires the clean-speech STFT")
    k = mix.num_bins
    m = mix.num_channels
    num_frames = mix.num_frames
    gate = track.SppGate(
        mode=pipeline.gate_mode,
        threshold=pipeline.gate_threshold,
        oracle_gamma=pipeline.oracle_gamma,
        init_frames=pipeline.init_frames,
    )
    tracker = track.CovTracker(
        num_bins=k,
        order=m,
        alpha_y=pipeline.alpha_y,
        alpha_u=pipeline.alpha_u,
        init_frames=pipeline.init_frames,
    )

    g_h_cw = np.zeros((num_frames, k, m_h), dtype=complex)
    h_valid = np.zeros((num_frames, k), dtype=bool)
    g_tilde = np.zeros((num_frames, k, m), dtype=complex)
    full_valid = np.zeros((num_frames, k), dtype=bool)
    e_valid = np.zeros((num_frames, k), dtype=bool)
    active = np.zeros(num_frames, dtype=bool)

    for l in range(num_frames):
        y = mix.data[:, l, :].T  # (K, M)
        clean_frame = None if clean is None else clean.data[:m_h, l, :].T
        decisions = gate.decide(y[:, :m_h], clean_frame)
        if tracker.initialized:
            tracker.update(y, decisions)
        else:
            tracker.update(y)
        if not (tracker.initialized and tracker.phi_y_ever_updated):
            continue
        active[l] = True

        phi_y_h, phi_u_h = tracker.h_blocks(m_h)
        res_h = rtf.cw_estimate_batch(phi_y_h, phi_u_h)
        g_h_cw[l] = res_h.vectors
        h_valid[l] = res_h.valid

        res = rtf.cw_estimate_batch(tracker.phi_y, tracker.phi_u)
        full_valid[l] = res.valid
        vec = res.vectors.copy()
        e_ref = vec[:, m_h]
        ok = res.valid & (np.abs(e_ref) >= rtf.REF_DEGENERACY_TOL * np.linalg.norm(vec, axis=1))
        e_valid[l] = ok
        safe = np.where(ok, e_ref, 1.0)
        vec[:, m_h:] = vec[:, m_h:] / safe[:, None]
        vec[ok, m_h] = 1.0
        g_tilde[l] = vec

    return FrameEstimates(
        g_h_cw=g_h_cw,
        h_valid=h_valid,
        g_tilde=g_tilde,
        full_valid=full_valid,
        e_valid=e_valid,
        active=active,
        m_h=m_h,
    )


@dataclass(frozen=True)
class FrameDoa:
    frame: int
    theta_deg: float
    theta_e_deg: float | None = None
    flat: bool = False
    peak_score: float | None = None


def variant_estimates(variant, frames: FrameEstimates, db_h, db_e=None, pairs=None, aggregate=False):
    """Per-frame DOA estimates for one algorithm variant.

    With aggregate=True the spectra of all active frames are summed and a
    single utterance-level FrameDoa (frame=-1) is returned.
    """
    variant = AlgorithmVariant(variant)
    if variant in VARIANTS_NEEDING_E_DB and db_e is None:
        raise ConfigError(f"variant {variant.value} requires the external database")
    if variant is AlgorithmVariant.HE_OVER_HE_MATCH and pairs is None:
        raise ConfigError("matched variant requires a MatchedPairSet (known poses)")

    idx = np.flatnonzero(frames.active)
    if idx.size == 0:
        return []
    if variant is AlgorithmVariant.H_OVER_H:
        scores = spectrum.spectra_1d_batch(
            frames.g_h_cw[idx], db_h, bin_valid=frames.h_valid[idx]
        )
    elif variant is AlgorithmVariant.HE_OVER_H:
        scores = spectrum.spectra_1d_batch(
            frames.g_tilde[idx][:, :, : frames.m_h], db_h, bin_valid=frames.full_valid[idx]
        )
    elif variant is AlgorithmVariant.HE_OVER_HE_2D:
        scores = spectrum.spectra_2d_batch(
            frames.g_tilde[idx],
            db_h,
            db_e,
            e_valid=frames.e_valid[idx],
            bin_valid=frames.full_valid[idx],
        )
    else:
        scores = spectrum.spectra_matched_batch(
            frames.g_tilde[idx],
            db_h,
            db_e,
            pairs,
            e_valid=frames.e_valid[idx],
            bin_valid=frames.full_valid[idx],
        )

    def _wrap(frame_scores, frame_index):
        if variant is AlgorithmVariant.HE_OVER_HE_2D:
            return spectrum.SpatialSpectrum2D(
                db_h.angles_deg, db_e.angles_deg, frame_scores, frame_index
            )
        angles = pairs.theta_h_deg if variant is AlgorithmVariant.HE_OVER_HE_MATCH else db_h.angles_deg
        return spectrum.SpatialSpectrum1D(angles, frame_scores, frame_index)

    if aggregate:
        est = spectrum.pick_doa(_wrap(scores.sum(axis=0), None))
        return [FrameDoa(-1, est.theta_deg, est.theta_e_deg, est.flat_spectrum, est.peak_score)]
    out = []
    for pos, l in enumerate(idx):
        est = spectrum.pick_doa(_wrap(scores[pos], int(l)))
        out.append(FrameDoa(int(l), est.theta_deg, est.theta_e_deg, est.flat_spectrum, est.peak_score))
    return out


def run_variant(variant, mix: StftTensor, db_h, db_e=None, pairs=None, pipeline=None, clean=None, aggregate=False):
    """Convenience wrapper: track one scene and evaluate one variant."""
    pipeline = pipeline or PipelineConfig()
    frames = estimate_frames(mix, db_h.num_mics, pipeline, clean)
    return variant_estimates(variant, frames, db_h, db_e, pairs, aggregate=aggregate)


def localization_accuracy(estimates_deg, truth_deg, tol_deg=5.0):
    """Fraction of estimates within tol_deg of the truth (wrap-aware)."""
    if tol_deg <= 0:
        raise ConfigError("tol_deg must be positive")
    est = np.asarray([e for e in np.atleast_1d(estimates_deg)], dtype=float)
    if est.size == 0:
        raise UndefinedAccuracyError("no estimate-bearing frames; accuracy undefined")
    err = np.abs(angular_diff_deg(est, float(truth_deg)))
    return float(np.mean(err <= tol_deg))


@dataclass(frozen=True)
class ExperimentConfig:
    """Scene grid x variants evaluation, mirroring the 4-way comparison.

    `scene` is a template; its speaker DOA and noise seed are overridden
    per run.  Database/pair settings apply to both arrays.
    """

    scene: sim.SceneConfig
    doas_deg: tuple = tuple(range(-160, 161, 40))
    noise_seeds: tuple = (0,)
    variants: tuple = tuple(v.value for v in AlgorithmVariant)
    db_angles_start: float = -180.0
    db_angles_step: float = 5.0
    pair_count: int = 72
    pair_radius_m: float = 2.0
    window_ms: float = 32.0
    overlap_frac: float = 0.5
    tolerance_deg: float = 5.0
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    aggregate_frames: bool = False

    def db_angles(self):
        n = int(round(360.0 / self.db_angles_step))
        return self.db_angles_start + self.db_angles_step * np.arange(n)

    def to_dict(self):
        return {
            "scene": self.scene.to_dict(),
            "doas_deg": list(self.doas_deg),
            "noise_seeds": list(self.noise_seeds),
            "variants": list(self.variants),
            "db_angles_start": self.db_angles_start,
            "db_angles_step": self.db_angles_step,
            "pair_count": self.pair_count,
            "pair_radius_m": self.pair_radius_m,
            "window_ms": self.window_ms,
            "overlap_frac": self.overlap_frac,
            "tolerance_deg": self.tolerance_deg,
            "pipeline": {
                "alpha_y": self.pipeline.alpha_y,
                "alpha_u": self.pipeline.alpha_u,
                "init_frames": self.pipeline.init_frames,
                "gate_mode": self.pipeline.gate_mode,
                "gate_threshold": self.pipeline.gate_threshold,
                "oracle_gamma": self.pipeline.oracle_gamma,
            },
            "aggregate_frames": self.aggregate_frames,
        }

    @classmethod
    def from_dict(cls, d):
        pl = d.get("pipeline", {})
        return cls(
            scene=sim.SceneConfig.from_dict(d["scene"]),
            doas_deg=tuple(d.get("doas_deg", tuple(range(-160, 161, 40)))),
            noise_seeds=tuple(d.get("noise_seeds", (0,))),
            variants=tuple(d.get("variants", tuple(v.value for v in AlgorithmVariant))),
            db_angles_start=float(d.get("db_angles_start", -180.0)),
            db_angles_step=float(d.get("db_angles_step", 5.0)),
            pair_count=int(d.get("pair_count", 72)),
            pair_radius_m=float(d.get("pair_radius_m", 2.0)),
            window_ms=float(d.get("window_ms", 32.0)),
            overlap_frac=float(d.get("overlap_frac", 0.5)),
            tolerance_deg=float(d.get("tolerance_deg", 5.0)),
            pipeline=PipelineConfig(**pl) if pl else PipelineConfig(),
            aggregate_frames=bool(d.get("aggregate_frames", False)),
        )

    def config_hash(self):
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


@dataclass
class EvalReport:
    """Per-(variant, DOA, seed) accuracies plus per-variant averages."""

    entries: list
    variant_average: dict
    metadata: dict

    def to_dict(self):
        return {
            "entries": self.entries,
            "variant_average": self.variant_average,
            "metadata": self.metadata,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    def summary_csv(self, path):
        with open(path, "w") as fh:
            fh.write("variant,average_accuracy\n")
            for v in sorted(self.variant_average):
                fh.write(f"{v},{self.variant_average[v]!r}\n")

    def summary_table(self):
        lines = ["variant    average accuracy"]
        for v in sorted(self.variant_average):
            lines.append(f"{v:<10} {self.variant_average[v]:.4f}")
        return "\n".join(lines)


def run_experiment(cfg: ExperimentConfig):
    """Render every (DOA, seed) scene once and score all variants on it."""
    scene_t = cfg.scene
    angles = cfg.db_angles()
    db_h = sim.build_prototype_db(
        scene_t.array_h, angles, scene_t.sample_rate, _window_samples(cfg, scene_t)
    )
    db_e = sim.build_prototype_db(
        scene_t.array_e, angles, scene_t.sample_rate, _window_samples(cfg, scene_t)
    )
    pairs = None
    if AlgorithmVariant.HE_OVER_HE_MATCH.value in cfg.variants:
        pairs = spectrum.build_matched_pairs(
            db_h, db_e, scene_t.pose_h, scene_t.pose_e, cfg.pair_radius_m, cfg.pair_count
        )

    entries = []
    for doa in cfg.doas_deg:
        for seed in cfg.noise_seeds:
            scene = replace(scene_t, speaker_doa_deg=float(doa), seed=int(seed))
            try:
                rendered = sim.render_scene(scene)
                mix = stft.analyze(rendered.mixture, scene.sample_rate, cfg.window_ms, cfg.overlap_frac)
                clean = stft.analyze(rendered.clean_speech, scene.sample_rate, cfg.window_ms, cfg.overlap_frac)
                frames = estimate_frames(mix, scene.array_h.num_mics, cfg.pipeline, clean)
            except DoakitError as exc:
                for v in cfg.variants:
                    entries.append(_entry(v, doa, seed, None, 0, error=str(exc)))
                continue
            for v in cfg.variants:
                ests = variant_estimates(
                    v, frames, db_h, db_e, pairs, aggregate=cfg.aggregate_frames
                )
                thetas = [e.theta_deg for e in ests]
                try:
                    acc = localization_accuracy(thetas, rendered.theta_deg, cfg.tolerance_deg)
                except UndefinedAccuracyError:
                    acc = None
                entries.append(_entry(v, doa, seed, acc, len(thetas)))

    averages = {}
    for v in cfg.variants:
        accs = [e["accuracy"] for e in entries if e["variant"] == v and e["accuracy"] is not None]
        averages[v] = float(np.mean(accs)) if accs else None
    metadata = {
        "config_hash": cfg.config_hash(),
        "tolerance_deg": cfg.tolerance_deg,
        "noise_seeds": list(cfg.noise_seeds),
        "accuracy_denominator": "estimate-bearing frames after tracker warm-up",
    }
    return EvalReport(entries=entries, variant_average=averages, metadata=metadata)


def _window_samples(cfg, scene):
    return int(round(cfg.window_ms * scene.sample_rate / 1000.0))


def _entry(variant, doa, seed, accuracy, num_frames, error=None):
    e = {
        "variant": str(AlgorithmVariant(variant).value),
        "doa_deg": float(doa),
        "seed": int(seed),
        "accuracy": accuracy,
        "num_frames": int(num_frames),
    }
    if error is not None:
        e["error"] = error
    return e
