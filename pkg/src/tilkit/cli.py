"""Command-line interface.

Subcommands:
    dynamics  <manifest>            dump the speed profile and its plot
    localize  <manifest|dir>        run a localization mode over videos
    evaluate  <results> --manifests ...   score results against ground truth
    plot      <manifest> <result>   plot dynamics with predictions and GT

Exit codes: 0 success; 1 validation error; 2 backend failure; 3 completed
with partial results.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .dataset_io import (
    dump_profile,
    find_manifests,
    load_manifest,
    plot_dynamics,
    read_result,
    write_result,
)
from .errors import BackendUnavailableError, TilError
from .metrics import MetricsReport, score_video
from .pipeline import PipelineConfig, compute_profile, localize, run_trials
from .vlm_gateway import HttpBackend, ScriptedBackend, VlmGateway

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_BACKEND = 2
EXIT_PARTIAL = 3


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BackendUnavailableError as exc:
        print(f"error: backend unavailable: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except TilError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tilkit",
        description="Zero-shot temporal interaction localization for egocentric RGB-D video.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_dyn = sub.add_parser("dynamics", help="dump the hand-speed profile and plot it")
    p_dyn.add_argument("manifest", help="video manifest file")
    _add_dynamics_flags(p_dyn)
    p_dyn.add_argument("--out", default=".", help="output directory (default: .)")
    p_dyn.set_defaults(func=_cmd_dynamics)

    p_loc = sub.add_parser("localize", help="localize interaction transitions")
    p_loc.add_argument("target", help="manifest file or directory of manifests")
    p_loc.add_argument("--mode", choices=("egoloc", "threshold", "greedy"), default="egoloc")
    p_loc.add_argument("--sampling", choices=("sass-3d", "sass-2d", "random"), default="sass-3d")
    p_loc.add_argument("--n-adj", type=int, default=2, dest="n_adj")
    p_loc.add_argument("--n-ac", type=int, default=5, dest="n_ac")
    p_loc.add_argument("--lambda", type=float, default=1.0, dest="lambda_")
    p_loc.add_argument("--seed", type=int, default=0)
    p_loc.add_argument("--trials", type=int, default=1)
    p_loc.add_argument("--max-resamples", type=int, default=None)
    p_loc.add_argument("--threshold", type=float, default=0.03,
                       help="tip-distance threshold in meters (threshold mode)")
    p_loc.add_argument("--static-camera", action="store_true",
                       help="skip registration; treat the camera as static")
    p_loc.add_argument("--vlm-backend", choices=("http", "scripted"), default="http")
    p_loc.add_argument("--vlm-model", default="gpt-4o")
    p_loc.add_argument("--vlm-base-url", default="https://api.openai.com/v1")
    p_loc.add_argument("--script", default=None,
                       help="JSON role->responses file for the scripted backend")
    p_loc.add_argument("--dump-prompts", default=None, metavar="DIR",
                       help="save every prompt image/text/response under DIR")
    p_loc.add_argument("--audit", default=None, metavar="FILE",
                       help="append a JSONL audit record per VLM call")
    p_loc.add_argument("--out", default=".", help="output directory (default: .)")
    p_loc.set_defaults(func=_cmd_localize)

    p_eval = sub.add_parser("evaluate", help="score result files against ground truth")
    p_eval.add_argument("results", help="result file or directory of *.til.json files")
    p_eval.add_argument("--manifests", required=True,
                        help="manifest file or directory (source of ground truth)")
    p_eval.add_argument("--gamma", default="1,3,5",
                        help="comma-separated SR tolerances (default: 1,3,5)")
    p_eval.add_argument("--out", default=None, help="also write the report to this file")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_plot = sub.add_parser("plot", help="plot dynamics with predictions and ground truth")
    p_plot.add_argument("manifest", help="video manifest file")
    p_plot.add_argument("result", help="result file from localize")
    _add_dynamics_flags(p_plot)
    p_plot.add_argument("--out", default=None, help="output file (default: <video_id>.svg)")
    p_plot.set_defaults(func=_cmd_plot)
    return parser


def _add_dynamics_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sampling", choices=("sass-3d", "sass-2d"), default="sass-3d")
    p.add_argument("--sg-window", type=int, default=None, dest="sg_window")
    p.add_argument("--sg-order", type=int, default=None, dest="sg_order")
    p.add_argument("--static-camera", action="store_true",
                   help="skip registration; treat the camera as static")


def _dynamics_config(args) -> PipelineConfig:
    return PipelineConfig(
        sampling=args.sampling,
        sg_window=args.sg_window,
        sg_order=args.sg_order,
        assume_static_camera=args.static_camera,
    )


def _cmd_dynamics(args) -> int:
    video = load_manifest(args.manifest)
    profile = compute_profile(video, _dynamics_config(args))
    out = Path(args.out)
    json_path = dump_profile(profile, out / f"{video.id}_dynamics.json")
    svg_path = plot_dynamics(profile, None, video.ground_truth, out / f"{video.id}_dynamics.svg")
    print(f"wrote {json_path} and {svg_path}")
    print(f"zero-acceleration times: {[round(t, 3) for t in profile.zero_accel_times]}")
    return EXIT_OK


def _cmd_localize(args) -> int:
    config = PipelineConfig(
        mode=args.mode,
        sampling=args.sampling,
        n_adj=args.n_adj,
        n_ac=args.n_ac,
        lambda_=args.lambda_,
        seed=args.seed,
        max_resamples=args.max_resamples,
        assume_static_camera=args.static_camera,
        tip_threshold=args.threshold,
        dump_dir=args.dump_prompts,
    )
    out = Path(args.out)
    audit = Path(args.audit) if args.audit else None

    def make_gateway() -> VlmGateway:
        if args.vlm_backend == "scripted":
            if not args.script:
                raise TilError("--vlm-backend scripted needs --script FILE")
            return VlmGateway(ScriptedBackend.from_file(args.script), audit_path=audit)
        return VlmGateway(
            HttpBackend(base_url=args.vlm_base_url, model=args.vlm_model), audit_path=audit
        )

    partial = 0
    resolved = 0
    for manifest in find_manifests(args.target):
        video = load_manifest(manifest)
        if args.trials > 1:
            results = run_trials(video, config, make_gateway, args.trials)
        else:
            gateway = make_gateway() if config.mode != "threshold" else None
            results = [localize(video, config, gateway)]
        for i, result in enumerate(results):
            suffix = f".trial{i}" if args.trials > 1 else ""
            path = write_result(result, out / f"{video.id}{suffix}.til.json")
            partial += int(result.diagnostics.partial)
            resolved += len(result.events)
            print(
                f"{video.id}{suffix}: contacts={list(result.contacts)} "
                f"separations={list(result.separations)} -> {path}"
            )
    if partial and not resolved:
        print("error: backend failed before any event was localized", file=sys.stderr)
        return EXIT_BACKEND
    if partial:
        print(f"warning: {partial} result(s) are partial", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    gammas = _parse_gammas(args.gamma)
    gt_by_id = {}
    n_obs_by_id = {}
    for manifest in find_manifests(args.manifests):
        video = load_manifest(manifest)
        if video.ground_truth is not None:
            gt_by_id[video.id] = video.ground_truth
            n_obs_by_id[video.id] = video.n_obs

    results_dir = Path(args.results)
    if results_dir.is_dir():
        result_paths = sorted(results_dir.glob("*.til.json"))
    else:
        result_paths = [results_dir]
    if not result_paths:
        raise TilError(f"no *.til.json files in {results_dir}")

    report = MetricsReport()
    skipped = []
    for path in result_paths:
        result = read_result(path)
        gt = gt_by_id.get(result.video_id)
        if gt is None:
            skipped.append(result.video_id)
            continue
        report.add(
            score_video(
                video_id=result.video_id,
                pred_contacts=result.contacts,
                pred_separations=result.separations,
                gt_contacts=gt["contacts"],
                gt_separations=gt["separations"],
                n_obs=n_obs_by_id[result.video_id],
                gammas=gammas,
            )
        )
    if not report.rows:
        raise TilError("no result file matched a manifest with ground truth")
    text = report.render()
    if skipped:
        text += f"\nskipped (no ground truth): {', '.join(skipped)}"
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_plot(args) -> int:
    video = load_manifest(args.manifest)
    result = read_result(args.result)
    profile = compute_profile(video, _dynamics_config(args))
    out = Path(args.out) if args.out else Path(f"{video.id}.svg")
    plot_dynamics(profile, result, video.ground_truth, out)
    print(f"wrote {out}")
    return EXIT_OK


def _parse_gammas(raw: str) -> tuple[int, ...]:
    try:
        gammas = tuple(int(g.strip()) for g in raw.split(",") if g.strip())
    except ValueError:
        raise TilError(f"--gamma expects comma-separated integers, got {raw!r}") from None
    if not gammas or any(g < 0 for g in gammas):
        raise TilError(f"--gamma values must be >= 0, got {raw!r}")
    return gammas


if __name__ == "__main__":
    sys.exit(main())
