"""Command-line entry point.

Subcommands mirror the pipeline stages so any of them can be re-run in
isolation against the on-disk stage boundaries:

    make-case   build a case directory (synthetic or from loose files)
    trajgen     generate a trajectory spec JSON
    compose     case -> copy clip + region masks
    stage1      copy clip -> coarse clip (pixel or latent mode)
    stage2      coarse clip -> aligned clip
    eval        aligned clip -> report.json
    run         all of the above from one config
    ablate      run over a parameter grid

Exit codes: 0 success, 2 validation/configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .clip_io import load_clip, load_frame, save_clip
from .compositor import make_copy_sequence, ObjectAsset
from .diffusion import Condition, available_backends, create_backend
from .geometry import BBox, Delta, generate_trajectory, load_trajectory_spec, save_trajectory_spec
from .metrics import PromptLibrary, available_embedders, create_embedder, evaluate_case
from .pipeline import (
    CasePaths,
    RunConfig,
    StageError,
    ValidationError,
    ablate,
    build_synthetic_case,
    format_sweep_table,
    load_case,
    load_case_prompts,
    load_partitions,
    make_dataset_case,
    run_case,
    _save_partitions,
)
from .pixel_noise import NoiseConfig, inject
from .stage1 import run_latent_injection
from .stage2 import InjectionSchedule, run_alignment

log = logging.getLogger("vidinsert")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STAGE = 3


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend", default="toy-linear", help=f"one of {available_backends()}"
    )
    parser.add_argument("--backend-seed", type=int, default=0)
    parser.add_argument("--codec", default="identity", choices=["identity", "block"])
    parser.add_argument("--downsample", type=int, default=1)


def _make_backend(args: argparse.Namespace, video: bool):
    return create_backend(
        args.backend,
        codec=args.codec,
        downsample=args.downsample,
        seed=args.backend_seed,
        video=video,
    )


def _cmd_make_case(args: argparse.Namespace) -> int:
    if args.synthetic:
        out = build_synthetic_case(args.out, frames=args.frames, size=args.size, seed=args.seed)
    else:
        required = ("background", "object", "mask", "trajectory", "prompts")
        missing = [name for name in required if getattr(args, name) is None]
        if missing:
            raise ValidationError(
                f"non-synthetic make-case needs --{', --'.join(missing)}"
            )
        out = make_dataset_case(
            args.background, args.object, args.mask, args.trajectory, args.prompts, args.out
        )
    print(out)
    return EXIT_OK


def _cmd_trajgen(args: argparse.Namespace) -> int:
    init = BBox(args.init[0], args.init[1], args.init[2], args.init[3])
    delta = Delta(dx=args.dx, dy=args.dy, dw=args.dw, dh=args.dh)
    traj = generate_trajectory(init, delta, args.frames, args.width, args.height)
    save_trajectory_spec(traj, args.out)
    print(args.out)
    return EXIT_OK


def _cmd_compose(args: argparse.Namespace) -> int:
    paths = CasePaths.from_case_dir(args.case)
    missing = paths.missing()
    if missing:
        raise ValidationError(f"missing case inputs: {missing}")
    background, asset, traj, _ = load_case(paths, fps=args.fps)
    copy_clip, parts = make_copy_sequence(asset, background, traj)
    out = Path(args.out)
    save_clip(copy_clip, out / "copy")
    _save_partitions(parts, out / "masks")
    print(out / "copy")
    return EXIT_OK


def _cmd_stage1(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    copy_dir = run_dir / "copy"
    masks_dir = run_dir / "masks"
    if not copy_dir.is_dir() or not masks_dir.is_dir():
        raise ValidationError(f"{run_dir} does not contain copy/ and masks/ (run compose first)")
    copy_clip = load_clip(copy_dir, fps=args.fps)
    parts = load_partitions(masks_dir)

    mode = {"pn": "pixel", "pixel": "pixel", "ln": "latent", "latent": "latent"}.get(args.mode)
    if mode is None:
        raise ValidationError(f"unknown mode {args.mode!r}")
    if mode == "pixel":
        coarse = inject(copy_clip, parts, NoiseConfig(args.sigma1, args.sigma2, args.seed))
    else:
        backend = _make_backend(args, video=False)
        coarse = run_latent_injection(
            copy_clip,
            parts,
            Condition(text=args.prompt),
            backend,
            args.steps,
            args.seed,
            invert_steps=args.invert_steps,
            condition_inversion=args.condition_inversion,
            strict=args.strict,
            dump_dir=args.dump_latents,
        )
    out = run_dir / "coarse"
    save_clip(coarse, out)
    print(out)
    return EXIT_OK


def _cmd_stage2(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    copy_dir = run_dir / "copy"
    coarse_dir = run_dir / "coarse"
    if not copy_dir.is_dir() or not coarse_dir.is_dir():
        raise ValidationError(f"{run_dir} does not contain copy/ and coarse/ (run stage1 first)")
    copy_clip = load_clip(copy_dir, fps=args.fps)
    coarse = load_clip(coarse_dir, fps=args.fps)
    backend = _make_backend(args, video=True)
    schedule = InjectionSchedule(
        feature_steps=args.inject_feature,
        spatial_attn_steps=args.inject_sattn,
        temporal_attn_steps=args.inject_tattn,
        total_steps=args.steps,
    )
    aligned, _ = run_alignment(
        copy_clip, coarse, Condition(text=args.prompt), backend, schedule, args.steps
    )
    out = run_dir / "aligned"
    save_clip(aligned, out)
    print(out)
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    pred = load_clip(args.pred)
    reference = load_clip(args.reference)
    case_paths = CasePaths.from_case_dir(args.case_dir)
    prompts = load_case_prompts(case_paths.prompts)
    case_id = args.case or prompts["case_id"]
    if args.library:
        library = PromptLibrary.from_json(args.library)
    else:
        library = PromptLibrary.from_json(
            [{"case_id": prompts["case_id"], "optimal": prompts["optimal"], "fake": prompts["fake"]}]
        )
    traj = load_trajectory_spec(case_paths.trajectory)
    object_image = load_frame(case_paths.object_image)
    embedder = create_embedder(args.embedder, seed=args.embedder_seed)
    report = evaluate_case(
        pred,
        reference,
        prompts["optimal"],
        traj,
        object_image,
        case_id,
        library,
        embedder,
        args.logit_scale,
    )
    report.write(args.out)
    print(args.out)
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    overrides = {
        "case_dir": args.case_dir,
        "output_dir": args.out,
        "mode": args.mode,
        "sigma1": args.sigma1,
        "sigma2": args.sigma2,
        "backend": args.backend,
        "embedder": args.embedder,
    }
    if args.config:
        cfg = RunConfig.from_json(args.config, overrides)
    else:
        if not args.case_dir:
            raise ValidationError("run needs --config or --case-dir")
        cfg = RunConfig.from_dict(
            {k: v for k, v in overrides.items() if v is not None}
        )
    manifest = run_case(cfg)
    out = cfg.resolve_output_dir()
    print(out / "manifest.json")
    report = json.loads((out / "report.json").read_text())
    for case_id, scores in report["cases"].items():
        pretty = " ".join(f"{k}={v:.4f}" for k, v in sorted(scores.items()))
        print(f"{case_id}: {pretty}")
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_json(args.config, {"case_dir": args.case_dir, "output_dir": args.out})
    sweep_path = Path(args.sweep)
    if not sweep_path.is_file():
        raise ValidationError(f"sweep file {sweep_path} does not exist")
    sweep = json.loads(sweep_path.read_text())
    if not isinstance(sweep, dict):
        raise ValidationError("sweep file must hold a JSON object of param: [values]")
    ablate(cfg, sweep)
    base = cfg.resolve_output_dir()
    rows = json.loads((base / "sweep_summary.json").read_text())
    print(format_sweep_table(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidinsert",
        description="Training-free object insertion into short video clips.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-case", help="build a case directory")
    p.add_argument("--synthetic", action="store_true", help="bundled synthetic case")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--background", help="directory of frame_*.png")
    p.add_argument("--object", help="object image PNG")
    p.add_argument("--mask", help="object mask PNG")
    p.add_argument("--trajectory", help="trajectory spec JSON")
    p.add_argument("--prompts", help="prompts JSON")
    p.set_defaults(func=_cmd_make_case)

    p = sub.add_parser("trajgen", help="generate a trajectory spec")
    p.add_argument("--init", nargs=4, type=int, required=True, metavar=("X0", "Y0", "W", "H"))
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--dx", type=int, default=0)
    p.add_argument("--dy", type=int, default=0)
    p.add_argument("--dw", type=int, default=0)
    p.add_argument("--dh", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_trajgen)

    p = sub.add_parser("compose", help="composite the object along the trajectory")
    p.add_argument("--case", required=True, help="case directory")
    p.add_argument("--out", required=True, help="run directory (gets copy/ and masks/)")
    p.add_argument("--fps", type=float, default=8.0)
    p.set_defaults(func=_cmd_compose)

    p = sub.add_parser("stage1", help="roughen the composited clip (pixel or latent)")
    p.add_argument("--run", required=True, help="run directory with copy/ and masks/")
    p.add_argument("--mode", default="pixel", help="pixel/pn or latent/ln")
    p.add_argument("--sigma1", type=float, default=0.4)
    p.add_argument("--sigma2", type=float, default=0.1)
    p.add_argument("--prompt", default="", help="object prompt (latent mode)")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--invert-steps", type=int, default=None)
    p.add_argument("--condition-inversion", action="store_true")
    p.add_argument("--strict", action="store_true", help="fail on empty interaction masks")
    p.add_argument("--dump-latents", default=None, metavar="DIR")
    p.add_argument("--fps", type=float, default=8.0)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_stage1)

    p = sub.add_parser("stage2", help="invert the coarse clip and re-decode aligned")
    p.add_argument("--run", required=True, help="run directory with copy/ and coarse/")
    p.add_argument("--prompt", default="", help="alignment prompt")
    p.add_argument("--inject-feature", type=int, default=5)
    p.add_argument("--inject-sattn", type=int, default=5)
    p.add_argument("--inject-tattn", type=int, default=5)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--fps", type=float, default=8.0)
    _add_backend_args(p)
    p.set_defaults(func=_cmd_stage2)

    p = sub.add_parser("eval", help="score a predicted clip")
    p.add_argument("--pred", required=True, help="predicted clip directory")
    p.add_argument("--reference", required=True, help="composited reference clip directory")
    p.add_argument("--case-dir", required=True, help="case directory (assets + prompts)")
    p.add_argument("--case", default=None, help="case id (default: from prompts.json)")
    p.add_argument("--library", default=None, help="prompt library JSON (default: this case)")
    p.add_argument("--embedder", default="toy", help=f"one of {available_embedders()}")
    p.add_argument("--embedder-seed", type=int, default=0)
    p.add_argument("--logit-scale", type=float, default=100.0)
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("run", help="full pipeline from a config")
    p.add_argument("--config", default=None, help="run config JSON")
    p.add_argument("--case-dir", default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--mode", default=None)
    p.add_argument("--sigma1", type=float, default=None)
    p.add_argument("--sigma2", type=float, default=None)
    p.add_argument("--backend", default=None)
    p.add_argument("--embedder", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("ablate", help="sweep stage parameters over a grid")
    p.add_argument("--config", required=True)
    p.add_argument("--sweep", required=True, help="JSON object of param: [values]")
    p.add_argument("--case-dir", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ValidationError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
