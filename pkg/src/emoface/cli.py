"""Command-line entry points.

One `emoface` executable with subcommands covering the full workflow:
dataset synthesis, preprocessing, both training stages, one-shot
adaptation, animation, and evaluation. Errors raised by the library are
reported on stderr with exit code 1 instead of a traceback.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .adaptation import AdaptationConfig, one_shot_finetune
from .checkpoint import load_texture_model, save_texture_model
from .config import PipelineConfig, load_config
from .data import SyntheticDatasetSpec, write_synthetic_dataset
from .errors import EmofaceError
from .geometry import BlinkParams
from .landmark_gen import CATEGORIES, INTENSITIES, EmotionVector
from .pipeline import (
    animate,
    evaluate_directories,
    pipeline_stage,
    preprocess,
    run_landmark_training,
    run_texture_training,
)
from .texture_gen import load_image


def _load_cfg(args) -> PipelineConfig:
    return load_config(getattr(args, "config", None))


def _cmd_make_data(args) -> int:
    spec = SyntheticDatasetSpec(
        subjects=args.subjects,
        emotions=tuple(args.emotions.split(",")) if args.emotions else ("happy", "sad"),
        intensities=tuple(args.intensities.split(",")),
        clips_per_condition=args.clips,
        frames_per_clip=args.frames,
        resolution=args.resolution,
        seed=args.seed,
    )
    index = write_synthetic_dataset(args.out, spec)
    print(f"wrote {len(index.entries)} clips under {args.out}")
    return 0


def _cmd_preprocess(args) -> int:
    index = preprocess(args.data, args.out)
    print(f"indexed {len(index.entries)} clips; canonical landmarks in {args.out}")
    return 0


def _cmd_train_landmarks(args) -> int:
    cfg = _load_cfg(args)
    if args.steps is not None:
        cfg.landmark_steps = args.steps
    out = run_landmark_training(args.data, args.out, cfg)
    print(f"saved landmark generator to {out}")
    return 0


def _cmd_train_texture(args) -> int:
    cfg = _load_cfg(args)
    if args.steps is not None:
        cfg.texture_steps = args.steps
    out = run_texture_training(args.data, args.out, cfg)
    print(f"saved texture generator to {out}")
    return 0


def _cmd_adapt(args) -> int:
    with pipeline_stage("load"):
        model = load_texture_model(args.model)
        identity = load_image(args.identity)
    cfg = AdaptationConfig(steps=args.steps, lr=args.lr)
    adapted = one_shot_finetune(model, identity, cfg)
    save_texture_model(args.out, adapted)
    print(f"saved adapted texture generator to {args.out}")
    return 0


def _cmd_animate(args) -> int:
    cfg = _load_cfg(args)
    emotion = EmotionVector.of(args.emotion, args.intensity)
    paths = animate(
        identity=args.identity,
        features=args.audio_features,
        emotion=emotion,
        out_dir=args.out,
        landmark_model=args.landmark_model,
        texture_model=args.texture_model,
        target_landmarks=args.landmarks,
        mask=args.mask,
        background=args.background,
        adapt=args.adapt,
        seed=args.seed if args.seed is not None else cfg.seed,
        jobs=args.jobs,
        blink_params=BlinkParams(
            mean_interval_s=cfg.blink_interval,
            duration_s=cfg.blink_duration,
            amplitude=cfg.blink_amplitude,
        ),
    )
    print(f"wrote {len(paths)} frames to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    report = evaluate_directories(
        args.pred,
        args.gt,
        report_path=args.report,
        use_stub_scorers=args.stub_scorers,
        features=args.audio_features,
        emotion_label=args.emotion,
    )
    for key, value in report.to_dict().items():
        print(f"{key} = {value:.6g}")
    if args.report:
        print(f"report written to {args.report}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emoface",
        description="Emotional talking-face generation from one image and speech features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="render a synthetic training dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--subjects", type=int, default=2)
    p.add_argument("--emotions", default="happy,sad",
                   help=f"comma-separated subset of {','.join(CATEGORIES)}")
    p.add_argument("--intensities", default="high",
                   help=f"comma-separated subset of {','.join(INTENSITIES)}")
    p.add_argument("--clips", type=int, default=1, help="clips per condition")
    p.add_argument("--frames", type=int, default=24, help="frames per clip")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_make_data)

    p = sub.add_parser("preprocess", help="index a dataset and canonicalize landmarks")
    p.add_argument("--data", required=True, type=Path, help="dataset root")
    p.add_argument("--out", required=True, type=Path,
                   help="where to write the canonical-landmark index")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train-landmarks", help="train the landmark generator")
    p.add_argument("--data", required=True, type=Path,
                   help="dataset root (not a preprocess output)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=_cmd_train_landmarks)

    p = sub.add_parser("train-texture", help="train the texture generator")
    p.add_argument("--data", required=True, type=Path,
                   help="dataset root (not a preprocess output)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=_cmd_train_texture)

    p = sub.add_parser("adapt", help="one-shot adaptation to a new identity frame")
    p.add_argument("--model", required=True, type=Path, help="texture checkpoint")
    p.add_argument("--identity", required=True, type=Path, help="neutral face PNG")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--lr", type=float, default=2e-4)
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("animate", help="animate an identity frame from speech features")
    p.add_argument("--identity", required=True, type=Path)
    p.add_argument("--audio-features", required=True, type=Path)
    p.add_argument("--emotion", required=True,
                   choices=("neutral",) + CATEGORIES)
    p.add_argument("--intensity", default="high", choices=INTENSITIES)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--landmark-model", required=True, type=Path)
    p.add_argument("--texture-model", required=True, type=Path)
    p.add_argument("--landmarks", type=Path,
                   help="neutral-face landmarks in the identity image (pixels)")
    p.add_argument("--mask", type=Path, help="face mask PNG")
    p.add_argument("--background", type=Path, help="replacement background PNG")
    p.add_argument("--adapt", action="store_true",
                   help="run one-shot adaptation before animating")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", type=Path)
    p.set_defaults(func=_cmd_animate)

    p = sub.add_parser("evaluate", help="metric battery over generated vs reference frames")
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--report", type=Path)
    p.add_argument("--stub-scorers", action="store_true",
                   help="include csim/emo_acc/sync_conf from the bundled stand-ins")
    p.add_argument("--emotion", choices=("neutral",) + CATEGORIES)
    p.add_argument("--audio-features", type=Path)
    p.set_defaults(func=_cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EmofaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
