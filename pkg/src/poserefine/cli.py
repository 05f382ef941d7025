"""Command-line entry point: synth, train, refine, eval, angles, export."""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import dataset as ds
from . import pipeline as pl
from .conditioning import SavGolConfig, TrustRegionConfig
from .config import load_config, resolve
from .errors import PoseRefineError
from .refiner import save_model
from .skeleton import pose_to_angles
from .training import TrainConfig, save_train_log, train_model
from .windows import MergeConfig


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="base RNG seed")
    parser.add_argument("--config", default=None, help="flat key = value config file")


def _load(args) -> dict:
    return load_config(args.config) if args.config else {}


def _cmd_synth(args) -> int:
    cfg = _load(args)
    seed = resolve(args.seed, cfg, "seed", 0, int)
    rad = math.radians
    noise = ds.NoiseSpec(
        jitter_sigma_range=(
            rad(resolve(args.jitter_min_deg, cfg, "jitter_min_deg", 0.0, float)),
            rad(resolve(args.jitter_max_deg, cfg, "jitter_max_deg", 15.0, float)),
        ),
        outlier_fraction=resolve(
            args.outlier_fraction, cfg, "outlier_fraction", 0.05, float
        ),
        outlier_sigma_max=rad(
            resolve(args.outlier_max_deg, cfg, "outlier_max_deg", 45.0, float)
        ),
        secondary_sigma=resolve(args.secondary_sigma, cfg, "secondary_sigma", 2.0, float),
        secondary_max=resolve(args.secondary_max, cfg, "secondary_max", 5, int),
        seed=seed,
    )
    manifest = ds.generate_dataset(
        args.out,
        train_count=resolve(args.train_count, cfg, "train_count", 20000, int),
        test_count=resolve(args.test_count, cfg, "test_count", 4000, int),
        noise=noise,
        window=resolve(args.window, cfg, "window", 100, int),
        stride=resolve(args.stride, cfg, "stride", 1, int),
        frames_per_cycle=resolve(args.frames_per_cycle, cfg, "frames_per_cycle", 100, int),
        cycles=resolve(args.cycles, cfg, "cycles", 2, int),
        records_per_shard=resolve(
            args.records_per_shard, cfg, "records_per_shard", 65536, int
        ),
    )
    total = sum(manifest.counts.values())
    print(f"wrote {total} records under {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load(args)
    manifest = ds.DatasetManifest.load(args.manifest)
    train_cfg = TrainConfig(
        batch_size=resolve(args.batch, cfg, "batch", 256, int),
        learning_rate=resolve(args.lr, cfg, "lr", 1e-3, float),
        max_epochs=resolve(args.epochs, cfg, "epochs", 20, int),
        patience=resolve(args.patience, cfg, "patience", 5, int),
        validation_fraction=resolve(args.val_fraction, cfg, "val_fraction", 0.1, float),
        hidden=resolve(args.hidden, cfg, "hidden", 64, int),
        d_att=resolve(args.d_att, cfg, "d_att", 32, int),
        seed=resolve(args.seed, cfg, "seed", 0, int),
    )

    def progress(stats):
        print(
            f"epoch {stats.epoch}: train {stats.train_mse:.6f} "
            f"val {stats.val_mse:.6f} ({stats.wall_time_s:.1f}s)",
            file=sys.stderr,
        )

    model, log = train_model(manifest, train_cfg, progress=progress)
    save_model(model, args.out)
    if args.log:
        save_train_log(log, args.log, include_timing=args.log_times)
    print(f"best epoch {log.best_epoch}: val mse {log.best_val_mse:.6f}")
    return 0


def _pipeline_config(args, cfg) -> pl.PipelineConfig:
    return pl.PipelineConfig(
        savgol=SavGolConfig(
            half_width=resolve(args.sg_halfwidth, cfg, "sg_halfwidth", 50, int)
        ),
        trust=TrustRegionConfig(
            smoothness_weight=resolve(args.lam, cfg, "lambda", 1.0, float)
        ),
        stride=resolve(args.stride, cfg, "stride", 5, int),
        merge=MergeConfig(epsilon=resolve(args.epsilon, cfg, "epsilon", 1e-3, float)),
    )


def _cmd_refine(args) -> int:
    cfg = _load(args)
    pl.refine_keypoint_file(
        args.input, args.model, args.output, _pipeline_config(args, cfg)
    )
    print(f"refined {args.input} -> {args.output}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load(args)
    refined = pl.parse_keypoints(args.refined)
    truth = pl.parse_keypoints(args.truth)
    erroneous = pl.load_erroneous_frames(args.errors) if args.errors else {}
    tau_deg = resolve(args.tau_deg, cfg, "tau_deg", 10.0, float)
    report = pl.evaluate_metrics(
        pose_to_angles(refined),
        pose_to_angles(truth),
        erroneous,
        tau=math.radians(tau_deg),
    )
    doc = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(doc)
            fh.write("\n")
    print(doc)
    return 0


def _cmd_angles(args) -> int:
    seq = pl.parse_keypoints(args.input)
    motion = pl.RefinedMotion(
        base=seq.xy[:, 0, :],
        theta=pose_to_angles(seq),
        lengths=pl.pose_to_limb_lengths(seq),
        fps=seq.fps,
    )
    pl.export_series(motion, "angles", args.output)
    print(f"wrote angle series to {args.output}")
    return 0


def _cmd_export(args) -> int:
    seq = pl.parse_keypoints(args.input)
    motion = pl.RefinedMotion(
        base=seq.xy[:, 0, :],
        theta=pose_to_angles(seq),
        lengths=pl.pose_to_limb_lengths(seq),
        fps=seq.fps,
    )
    pl.export_series(motion, args.what, args.output)
    print(f"wrote {args.what} to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poserefine",
        description="Refine noisy 2D pose keypoint sequences via joint angles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic training corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--train-count", type=int, default=None)
    p.add_argument("--test-count", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--frames-per-cycle", type=int, default=None)
    p.add_argument("--cycles", type=int, default=None)
    p.add_argument("--jitter-min-deg", type=float, default=None)
    p.add_argument("--jitter-max-deg", type=float, default=None)
    p.add_argument("--outlier-fraction", type=float, default=None)
    p.add_argument("--outlier-max-deg", type=float, default=None)
    p.add_argument("--secondary-sigma", type=float, default=None)
    p.add_argument("--secondary-max", type=int, default=None)
    p.add_argument("--records-per-shard", type=int, default=None)
    _common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a refiner on a synth manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--log", default=None, help="JSON epoch log to write")
    p.add_argument("--log-times", action="store_true", help="include wall times in the log")
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--val-fraction", type=float, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--d-att", type=int, default=None)
    _common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("refine", help="refine a keypoint JSON file")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--sg-halfwidth", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    _common(p)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("eval", help="compare refined keypoints against truth")
    p.add_argument("--refined", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--errors", default=None, help="erroneous-frame JSON file")
    p.add_argument("--tau-deg", type=float, default=None)
    p.add_argument("--out", default=None, help="metrics JSON to write")
    _common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("angles", help="export limb angles from keypoints")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _common(p)
    p.set_defaults(func=_cmd_angles)

    p = sub.add_parser("export", help="export series from a keypoint file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument(
        "--what",
        choices=("positions", "angles", "velocities"),
        default="positions",
    )
    _common(p)
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PoseRefineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
