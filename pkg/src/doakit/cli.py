"""Command-line front end for the DOA estimation pipeline.

Subcommands: build-db, simulate, estimate, evaluate.  Exit codes:
0 success, 2 configuration error, 3 I/O error, 4 numerical failure.
Config files are JSON; command-line flags override file values.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluate, io, sim, spectrum, stft
from .core import ArrayGeometry, ConfigError, NumericalError, ScenePose

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


def _load_geometry(path):
    with open(path) as fh:
        d = json.load(fh)
    return ArrayGeometry(
        np.asarray(d["mic_positions"], dtype=float),
        int(d.get("reference_index", 0)),
    )


def _parse_pose(text):
    """Pose flag format: 'x,y,orientation_deg' (meters, degrees)."""
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"pose '{text}' must be 'x,y,orientation_deg'")
    x, y, orient = (float(p) for p in parts)
    return ScenePose(np.array([x, y, 0.0]), orient)


def cmd_build_db(args):
    geom = _load_geometry(args.geom)
    angles = sim.parse_angle_grid(args.angles)
    window_len = int(round(args.window_ms * args.rate / 1000.0))
    db = sim.build_prototype_db(geom, angles, args.rate, window_len)
    db.save(args.out)
    print(f"wrote {args.out}: I={db.num_angles} K={db.num_bins} M_arr={db.num_mics}")
    return EXIT_OK


def cmd_simulate(args):
    cfg = sim.SceneConfig.from_json(args.scene)
    cfg = replace(cfg, seed=args.seed)
    rendered = sim.render_scene(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fs = rendered.sample_rate
    io.write_wav(out / "mixture.wav", rendered.mixture, fs)
    io.write_wav(out / "speech.wav", rendered.clean_speech, fs)
    io.write_wav(out / "noise.wav", rendered.noise, fs)
    truth = {
        "theta_deg": rendered.theta_deg,
        "theta_e_deg": rendered.theta_e_deg,
        "seed": cfg.seed,
        "num_h": rendered.num_h,
        "num_e": rendered.num_e,
        "sample_rate": fs,
        "channel_order": "H microphones first, then E microphones",
    }
    with open(out / "truth.json", "w") as fh:
        json.dump(truth, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote scene to {out} (theta={rendered.theta_deg:.1f} deg, "
          f"theta_E={rendered.theta_e_deg:.1f} deg)")
    return EXIT_OK


def cmd_estimate(args):
    variant = evaluate.AlgorithmVariant(args.variant)
    db_h = sim.PrototypeDb.load(args.db_h)
    db_e = sim.PrototypeDb.load(args.db_e) if args.db_e else None
    signals, rate = io.read_wav(args.wav)
    if rate != db_h.sample_rate:
        raise ConfigError(f"WAV rate {rate} does not match database rate {db_h.sample_rate}")
    m_h = db_h.num_mics
    if signals.shape[0] < m_h:
        raise ConfigError(f"WAV has {signals.shape[0]} channels, need at least {m_h}")
    window_ms = 1000.0 * db_h.window_length / db_h.sample_rate
    mix = stft.analyze(signals, rate, window_ms, args.overlap)
    clean = None
    if args.clean_wav:
        clean_sig, clean_rate = io.read_wav(args.clean_wav)
        if clean_rate != rate:
            raise ConfigError("clean WAV sample rate differs from the mixture")
        clean = stft.analyze(clean_sig, rate, window_ms, args.overlap)
    pairs = None
    if variant is evaluate.AlgorithmVariant.HE_OVER_HE_MATCH:
        if not (args.pose_h and args.pose_e and db_e):
            raise ConfigError("hematch requires --pose-h, --pose-e and --db-e")
        pairs = spectrum.build_matched_pairs(
            db_h, db_e, _parse_pose(args.pose_h), _parse_pose(args.pose_e),
            args.radius, args.pairs,
        )
    gate_mode = "oracle" if clean is not None else "blind"
    pipeline = evaluate.PipelineConfig(gate_mode=gate_mode)
    frames = evaluate.estimate_frames(mix, m_h, pipeline, clean)
    ests = evaluate.variant_estimates(variant, frames, db_h, db_e, pairs)

    hop_s = mix.hop / rate
    with open(args.out, "w") as fh:
        fh.write("frame,time_s,theta_hat_deg,theta_e_hat_deg,peak_score,flags\n")
        for e in ests:
            te = "" if e.theta_e_deg is None else f"{e.theta_e_deg:g}"
            score = "" if e.peak_score is None else repr(e.peak_score)
            flags = "flat" if e.flat else ""
            fh.write(f"{e.frame},{e.frame * hop_s:.4f},{e.theta_deg:g},{te},{score},{flags}\n")
    print(f"wrote {len(ests)} frame estimates to {args.out}")
    return EXIT_OK


def cmd_evaluate(args):
    with open(args.config) as fh:
        cfg = evaluate.ExperimentConfig.from_dict(json.load(fh))
    if args.seed is not None:
        cfg = replace(cfg, noise_seeds=tuple(args.seed))
    report = evaluate.run_experiment(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "report.json")
    report.summary_csv(out / "summary.csv")
    print(report.summary_table())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="doakit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-db", help="build a free-field prototype RTF database")
    b.add_argument("--geom", required=True, help="array geometry JSON file")
    b.add_argument("--angles", required=True, help="angle grid 'start:step:stop' in degrees")
    b.add_argument("--rate", type=float, default=16000.0, help="sample rate (Hz)")
    b.add_argument("--window-ms", type=float, default=32.0, help="STFT window (ms)")
    b.add_argument("--out", required=True, help="output .rtfdb path")
    b.set_defaults(func=cmd_build_db)

    s = sub.add_parser("simulate", help="render a synthetic scene to WAV files")
    s.add_argument("--scene", required=True, help="scene config JSON file")
    s.add_argument("--seed", type=int, required=True, help="noise seed")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="per-frame DOA estimation from a WAV file")
    e.add_argument("--wav", required=True, help="mixture WAV (H channels first)")
    e.add_argument("--clean-wav", help="clean-speech WAV for oracle gating")
    e.add_argument("--db-h", required=True, help="hearing-aid prototype database")
    e.add_argument("--db-e", help="external-array prototype database")
    e.add_argument("--variant", required=True, choices=[v.value for v in evaluate.AlgorithmVariant])
    e.add_argument("--pose-h", help="hearing-aid pose 'x,y,orientation_deg'")
    e.add_argument("--pose-e", help="external-array pose 'x,y,orientation_deg'")
    e.add_argument("--radius", type=float, default=2.0, help="matched-pair candidate radius (m)")
    e.add_argument("--pairs", type=int, default=20, help="matched-pair candidate count")
    e.add_argument("--overlap", type=float, default=0.5, help="STFT overlap fraction")
    e.add_argument("--out", required=True, help="output CSV path")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("evaluate", help="run the multi-scene algorithm comparison")
    v.add_argument("--config", required=True, help="experiment config JSON file")
    v.add_argument("--seed", type=int, nargs="+", help="override noise seeds")
    v.add_argument("--out", required=True, help="output directory")
    v.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
