"""Command-line experiment runner.

Verbs: validate, kernel, masks, synthesize, measure, reconstruct, run, sweep.
Scene options come from a config file; any key can be overridden on the
command line with repeated ``--set key=value`` flags (same syntax and units
as the file).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import em_core, mask_design, measurement, reconstruct, ris_synthesis
from .errors import ImagingError, MalformedConfig
from .runner import ExperimentPlan, default_gamma, load_plan, run_plan
from .scene import (
    SceneConfig,
    aperture_half_sine,
    parse_scene_config,
    resolution,
    sample_grids,
    validate_scene,
)
from .targets import resolve_target, write_grid_image


def _scene_from_args(args) -> SceneConfig:
    text = Path(args.scene).read_text()
    if args.set:
        values = dict(item.split("=", 1) for item in args.set)
        lines = []
        for raw in text.splitlines():
            key = raw.split("#", 1)[0].split("=", 1)[0].strip()
            if key in values:
                lines.append(f"{key} = {values.pop(key)}")
            else:
                lines.append(raw)
        lines.extend(f"{key} = {value}" for key, value in values.items())
        text = "\n".join(lines)
    return parse_scene_config(text)


def _add_scene_options(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--scene", required=required, help="scene config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a scene config key (repeatable)",
    )


def _add_plan_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--target", default="block", help="built-in name or target file")
    parser.add_argument("-I", "--measurements", type=int, default=None, help="mask count")
    parser.add_argument("--snr-db", type=float, default=None, help="receiver SNR (omit for noiseless)")
    parser.add_argument("--gamma", type=float, default=None, help="regularization weight")
    parser.add_argument("--threshold-factor", type=float, default=ris_synthesis.DEFAULT_THRESHOLD_FACTOR)
    parser.add_argument(
        "--truncation-mode",
        choices=[ris_synthesis.TRUNCATE_SIGMA_SQ, ris_synthesis.TRUNCATE_SIGMA],
        default=ris_synthesis.TRUNCATE_SIGMA_SQ,
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", default="runs/out", help="run directory")
    parser.add_argument(
        "--calibration",
        choices=[reconstruct.CALIBRATE_NONE, reconstruct.CALIBRATE_MAX1, reconstruct.CALIBRATE_LSQ],
        default=reconstruct.CALIBRATE_MAX1,
    )
    parser.add_argument(
        "--noise-mode",
        choices=[measurement.NOISE_RELATIVE, measurement.NOISE_ABSOLUTE],
        default=measurement.NOISE_RELATIVE,
    )
    parser.add_argument(
        "--phase-mode",
        choices=[mask_design.PHASE_TAYLOR, mask_design.PHASE_EXACT],
        default=mask_design.PHASE_TAYLOR,
    )
    parser.add_argument(
        "--ideal-masks",
        action="store_true",
        help="bypass synthesis and apply the ideal masks directly (oracle mode)",
    )
    parser.add_argument("--keep-artifacts", action="store_true")
    parser.add_argument("--workers", type=int, default=1)


def _default_measurements(scene) -> int:
    # smallest usable Hadamard order that leaves no point on the all-ones column
    n_points = validate_scene(scene).n_target
    count = 4
    while count < n_points + 1:
        count *= 2
    return count


def cmd_validate(args) -> int:
    scene = validate_scene(_scene_from_args(args))
    cfg = scene.config
    dx, dy = resolution(scene)
    print(f"scene valid: N={scene.n_ris} aperture samples, M={scene.n_target} target samples")
    print(f"rayleigh_distance_m = {scene.rayleigh_distance!r}")
    print(f"receiver_target_distance_m = {scene.receiver_target_distance!r}")
    print(f"receiver_far_field_bound_m = {scene.receiver_far_field_bound!r}")
    print(f"aperture_half_sine_x = {aperture_half_sine(cfg.ris_len_x, cfg.target_distance)!r}")
    print(f"aperture_half_sine_y = {aperture_half_sine(cfg.ris_len_y, cfg.target_distance)!r}")
    print(f"resolution_x_m = {dx!r}")
    print(f"resolution_y_m = {dy!r}")
    return 0


def cmd_kernel(args) -> int:
    scene = validate_scene(_scene_from_args(args))
    grids = sample_grids(scene)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.exists() and not args.force:
        kernel = em_core.load_kernel(out, expected_fingerprint=scene.fingerprint)
        print(f"cache hit: {out} ({kernel.kind} {kernel.shape[0]}x{kernel.shape[1]})")
        return 0
    kernel = em_core.assemble_kernel(scene, grids)
    em_core.save_kernel(out, kernel)
    print(f"assembled {kernel.kind} kernel {kernel.shape[0]}x{kernel.shape[1]} -> {out}")
    return 0


def cmd_masks(args) -> int:
    scene = validate_scene(_scene_from_args(args))
    grids = sample_grids(scene)
    count = args.measurements or _default_measurements(scene.config)
    masks = mask_design.ideal_masks(scene, grids, count, args.phase_mode)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    mask_design.save_mask_vectors(out, masks, scene.fingerprint, which="ideal")
    print(f"designed {masks.count} ideal {masks.kind} masks over {masks.points} points -> {out}")
    return 0


def _synthesized_masks(args, scene, grids):
    count = args.measurements or _default_measurements(scene.config)
    masks = mask_design.ideal_masks(scene, grids, count, args.phase_mode)
    kernel = em_core.assemble_kernel(scene, grids)
    gamma = args.gamma if args.gamma is not None else default_gamma(scene.config.target_distance)
    inv = ris_synthesis.tikhonov_inverse(kernel, gamma, args.threshold_factor, args.truncation_mode)
    return ris_synthesis.realize_masks(kernel, inv, masks, scene.config.amplification), inv


def cmd_synthesize(args) -> int:
    scene = validate_scene(_scene_from_args(args))
    grids = sample_grids(scene)
    masks, inv = _synthesized_masks(args, scene, grids)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    fp = scene.fingerprint
    mask_design.save_mask_vectors(out_dir / "masks_ideal.bin", masks, fp, which="ideal")
    mask_design.save_mask_vectors(out_dir / "masks_realized.bin", masks, fp, which="realized")
    ris_synthesis.save_profiles(out_dir / "profiles.bin", masks, fp)
    ris_synthesis.write_synthesis_summary(out_dir / "synthesis.txt", inv, masks)
    print(
        f"synthesized {masks.count} profiles (retained rank {inv.retained_rank}, "
        f"gamma {inv.gamma!r}) -> {out_dir}"
    )
    return 0


def cmd_measure(args) -> int:
    scene = validate_scene(_scene_from_args(args))
    grids = sample_grids(scene)
    target = resolve_target(args.target, scene)
    if args.ideal_masks:
        count = args.measurements or _default_measurements(scene.config)
        masks = mask_design.ideal_masks(scene, grids, count, args.phase_mode)
        use = "ideal"
    else:
        masks, _ = _synthesized_masks(args, scene, grids)
        use = "realized"
    records = measurement.measure(
        scene, grids, masks, target, args.snr_db, args.seed, noise_mode=args.noise_mode, use=use
    )
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    measurement.records_to_csv(out, records)
    print(f"measured {len(records)} records (sigma2 {records[0].noise_variance!r}) -> {out}")
    return 0


def cmd_reconstruct(args) -> int:
    scene = validate_scene(_scene_from_args(args))
    grids = sample_grids(scene)
    records = measurement.records_from_csv(args.records)
    kind, vectors, fp = mask_design.load_mask_vectors(args.masks)
    if fp != scene.fingerprint:
        print(f"warning: mask export fingerprint {fp[:16]} does not match the scene", file=sys.stderr)
    masks = mask_design.MaskSet(kind=kind, ideal=vectors)
    if scene.is_3d:
        result = reconstruct.reconstruct_3d(scene, records, masks, use="ideal")
    else:
        psf_values = em_core.psf_vector(scene, grids.target_points)
        result = reconstruct.reconstruct_2d(records, masks, psf_values, use="ideal")
    scaled = result.estimate / grids.target_cell_measure
    truth = resolve_target(args.target, scene).values if args.target else None
    calibrated = reconstruct.calibrate_estimate(scaled, args.calibration, truth)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    cfg = scene.config
    if scene.is_3d:
        volume = calibrated.reshape(cfg.n_target_z, cfg.n_target_y, cfg.n_target_x)
        for iz in range(cfg.n_target_z):
            write_grid_image(out.with_name(f"{out.stem}_slice{iz}_re.pgm"), volume[iz].T.real)
            write_grid_image(out.with_name(f"{out.stem}_slice{iz}_im.pgm"), volume[iz].T.imag)
    else:
        write_grid_image(out, calibrated.reshape(cfg.n_target_y, cfg.n_target_x).T)
    if truth is not None:
        print(f"nmse = {reconstruct.nmse(truth, calibrated)!r}")
    print(f"estimate written -> {out}")
    return 0


def _plan_from_args(args, sweep: bool) -> ExperimentPlan:
    scene = _scene_from_args(args)
    i_default = args.measurements or _default_measurements(scene)
    snr_values = (args.snr_db,) if not sweep else _parse_sweep_list(args.snr_sweep, float, (args.snr_db,))
    i_values = (i_default,) if not sweep else _parse_sweep_list(args.i_sweep, int, (i_default,))
    z_values = () if not sweep else _parse_sweep_list(args.z_sweep, float, ())
    return ExperimentPlan(
        scene=scene,
        target=args.target,
        i_values=i_values,
        snr_values=snr_values,
        z_values=z_values,
        gamma=args.gamma,
        threshold_factor=args.threshold_factor,
        truncation_mode=args.truncation_mode,
        seed=args.seed,
        output_dir=args.output,
        calibration=args.calibration,
        noise_mode=args.noise_mode,
        phase_mode=args.phase_mode,
        ideal_masks=args.ideal_masks,
        keep_artifacts=args.keep_artifacts,
        workers=args.workers,
    )


def _parse_sweep_list(raw: str | None, cast, fallback):
    if raw is None:
        return fallback
    return tuple(
        None if item.strip().lower() == "none" else cast(item) for item in raw.split(",")
    )


def _print_run(result) -> int:
    failed = [p for p in result.points if p.error is not None]
    for p in result.points:
        label = f"I={p.n_measurements} snr={p.snr_db} z'={p.z_prime}"
        if p.error is not None:
            print(f"{label}: ERROR {p.error}")
        else:
            print(f"{label}: nmse={p.nmse!r}")
    print(f"metrics -> {result.run_dir / 'metrics.csv'} (kernel builds: {result.kernel_builds})")
    return 1 if failed and len(failed) == len(result.points) else 0


def cmd_run(args) -> int:
    return _print_run(run_plan(_plan_from_args(args, sweep=False)))


def cmd_sweep(args) -> int:
    if args.plan:
        plan = load_plan(args.plan)
        if args.output != "runs/out":
            plan = dataclasses.replace(plan, output_dir=args.output)
        return _print_run(run_plan(plan))
    if not args.scene:
        raise MalformedConfig("sweep needs either --plan or --scene")
    return _print_run(run_plan(_plan_from_args(args, sweep=True)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risimage",
        description="Virtual-mask computational imaging simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check scene invariants and report resolution")
    _add_scene_options(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("kernel", help="assemble the propagation kernel and cache it")
    _add_scene_options(p)
    p.add_argument("--output", required=True, help="kernel cache file")
    p.add_argument("--force", action="store_true", help="reassemble even if cached")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("masks", help="design ideal masks and export them")
    _add_scene_options(p)
    _add_plan_options(p)
    p.set_defaults(func=cmd_masks)

    p = sub.add_parser("synthesize", help="compute coefficient profiles realizing the masks")
    _add_scene_options(p)
    _add_plan_options(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("measure", help="simulate noisy measurements to CSV")
    _add_scene_options(p)
    _add_plan_options(p)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("reconstruct", help="reconstruct from measurement CSV + mask export")
    _add_scene_options(p)
    _add_plan_options(p)
    p.add_argument("--records", required=True, help="measurement CSV")
    p.add_argument("--masks", required=True, help="mask vector export used for the measurement")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("run", help="end-to-end single experiment")
    _add_scene_options(p)
    _add_plan_options(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="plan-driven sweep over I / SNR / target distance")
    p.add_argument("--plan", help="plan file (overrides the scene/sweep flags)")
    _add_scene_options(p, required=False)
    _add_plan_options(p)
    p.add_argument("--i-sweep", help="comma list of measurement counts")
    p.add_argument("--snr-sweep", help="comma list of SNR values in dB ('none' = noiseless)")
    p.add_argument("--z-sweep", help="comma list of target distances in m")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ImagingError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
