"""Command-line entry point: ``sinoforge <subcommand> ...``.

Exit codes: 0 success, 2 validation, 3 I/O, 4 numerical.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace

from . import __version__
from .errors import EXIT_IO, DatasetError, SinoforgeError, ValidationError
from .grid import (ProjectionGeometry, export_png, read_image, read_mask, read_sinogram,
                   write_image, write_mask, write_sinogram)
from .metrics import compare, sobel_edges
from .morpho import Calibration, morphometry, segmentation_report, threshold_segment
from .motion import (ANGLE_MAX_RAD, ANGLE_MIN_RAD, SPAN_VIEWS, MotionEvent, MotionSamplerConfig,
                     consistency_score, inject_single_step_rotation, sample_motion_event)
from .phantom import KINDS, PAPER_SPACING_MM, PhantomSpec, make_phantom
from .pipeline import WHICH, evaluate_dataset, load_config, rows_to_csv, run_dataset
from .projector import NoiseSpec, add_noise, default_geometry, radon_forward, rotate_image
from .recon import FILTERS, SirtConfig, fbp_reconstruct, sirt_reconstruct

log = logging.getLogger("sinoforge")


def _emit_json(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_phantom(args):
    spec = PhantomSpec.for_kind(args.kind, size_px=args.size, seed=args.seed,
                                spacing_mm=args.spacing)
    img = make_phantom(spec)
    print(write_image(img, args.out))
    if args.png:
        hi = max(spec.attenuation_cortical, spec.attenuation_background + 1e-6)
        export_png(img, args.png, (spec.attenuation_background, hi))


def cmd_project(args):
    img = read_image(args.input)
    geom = default_geometry(img, args.angles, args.detectors)
    sino = radon_forward(img, geom)
    if args.noise_sigma:
        sino = add_noise(sino, NoiseSpec(args.noise_sigma, args.noise_seed))
    print(write_sinogram(sino, args.out))


def cmd_rotate(args):
    img = read_image(args.input)
    print(write_image(rotate_image(img, math.radians(args.angle_deg)), args.out))


def cmd_corrupt(args):
    sino = read_sinogram(args.input)
    img = read_image(args.image)
    geom = ProjectionGeometry.from_sinogram(sino)
    if args.sample:
        cfg = MotionSamplerConfig(math.radians(args.angle_min_deg), math.radians(args.angle_max_deg),
                                  args.span, args.seed)
        ev = sample_motion_event(cfg, geom)
        if args.start is not None:
            ev = replace(ev, start_view=args.start)
    else:
        if args.angle_deg is None:
            raise ValidationError("give --angle-deg or --sample")
        start = geom.n_angles - args.span if args.start is None else args.start
        ev = MotionEvent(math.radians(args.angle_deg), start, args.span)
    out = inject_single_step_rotation(sino, img, geom, ev)
    checksum = write_sinogram(out, args.out)
    _emit_json({"checksum": checksum, "event": ev.to_dict()})


def cmd_score_motion(args):
    _emit_json(consistency_score(read_sinogram(args.input)).to_dict(), args.out)


def cmd_reconstruct(args):
    sino = read_sinogram(args.input)
    geom = ProjectionGeometry.from_sinogram(sino)
    size = args.size
    spacing = args.spacing or geom.detector_spacing_mm
    if args.algo == "sirt":
        cfg = SirtConfig(args.iters, args.relax, not args.allow_negative)
        img = sirt_reconstruct(sino, geom, size, cfg, spacing)
    else:
        img = fbp_reconstruct(sino, geom, size, args.filter, spacing)
    print(write_image(img, args.out))


def cmd_metrics(args):
    if args.manifest:
        rows = evaluate_dataset(args.manifest, args.which, args.dir)
        text = rows_to_csv(rows)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return
    if not (args.ref and args.test):
        raise ValidationError("give --ref and --test, or --manifest")
    ref, test = read_image(args.ref), read_image(args.test)
    _emit_json(compare(ref, test, args.data_range).to_dict(), args.out)


def cmd_evaluate(args):
    rows = evaluate_dataset(args.manifest, args.which, args.dir)
    text = rows_to_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_edges(args):
    print(write_image(sobel_edges(read_image(args.input), sqrt=args.sqrt), args.out))


def cmd_segment(args):
    cortical, trabecular = threshold_segment(read_image(args.input), args.threshold,
                                             args.min_component)
    write_mask(cortical, args.out_cortical)
    write_mask(trabecular, args.out_trabecular)
    _emit_json({"threshold": args.threshold, "cortical_px": cortical.count(),
                "trabecular_px": trabecular.count()})


def cmd_morpho(args):
    img = read_image(args.image)
    report = morphometry(img, read_mask(args.cortical), read_mask(args.trabecular),
                         args.threshold, Calibration(args.slope, args.intercept))
    _emit_json(report.to_dict(), args.out)


def cmd_segmetrics(args):
    _emit_json(segmentation_report(read_mask(args.a), read_mask(args.b)).to_dict(), args.out)


def cmd_gen_dataset(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.n_pairs is not None:
        overrides["n_pairs"] = args.n_pairs
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if overrides:
        cfg = replace(cfg, **overrides)
    manifest = run_dataset(cfg, args.out, args.workers)
    print(f"{len(manifest['items'])} items written to {args.out}")


def cmd_export_png(args):
    export_png(read_image(args.input), args.out, (args.min, args.max))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sinoforge", description="Synthetic CT motion-artifact datasets.")
    p.add_argument("--version", action="version", version=f"sinoforge {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phantom", help="generate a synthetic phantom")
    s.add_argument("--kind", choices=KINDS, default="distal")
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--spacing", type=float, default=PAPER_SPACING_MM)
    s.add_argument("--out", required=True)
    s.add_argument("--png", help="also write a 16-bit PNG preview")
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("project", help="parallel-beam forward projection")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--angles", type=int, default=1800)
    s.add_argument("--detectors", type=int)
    s.add_argument("--noise-sigma", type=float, default=0.0)
    s.add_argument("--noise-seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("rotate", help="rotate an image about its centre")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--angle-deg", type=float, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_rotate)

    s = sub.add_parser("corrupt", help="splice a single-step rotation into a sinogram")
    s.add_argument("--in", dest="input", required=True, help="clean sinogram")
    s.add_argument("--image", required=True, help="image the sinogram was projected from")
    s.add_argument("--angle-deg", type=float)
    s.add_argument("--sample", action="store_true", help="draw the event from the sampler")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--angle-min-deg", type=float, default=math.degrees(ANGLE_MIN_RAD))
    s.add_argument("--angle-max-deg", type=float, default=math.degrees(ANGLE_MAX_RAD))
    s.add_argument("--span", type=int, default=SPAN_VIEWS)
    s.add_argument("--start", type=int, help="first altered view (default: end of scan, or sampled)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_corrupt)

    s = sub.add_parser("score-motion", help="0/180 degree consistency score as JSON")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_score_motion)

    s = sub.add_parser("reconstruct", help="SIRT or FBP reconstruction")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--algo", choices=("sirt", "fbp"), default="sirt")
    s.add_argument("--iters", type=int, default=50)
    s.add_argument("--relax", type=float, default=1.0)
    s.add_argument("--allow-negative", action="store_true")
    s.add_argument("--filter", choices=FILTERS, default="ramlak")
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--spacing", type=float, help="pixel pitch (default: detector pitch)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("metrics", help="PSNR/SSIM/VIF for a pair, or a dataset as CSV")
    s.add_argument("--ref")
    s.add_argument("--test")
    s.add_argument("--data-range", type=float)
    s.add_argument("--manifest")
    s.add_argument("--which", choices=WHICH, default="corrupted")
    s.add_argument("--dir")
    s.add_argument("--out")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("edges", help="squared Sobel gradient magnitude")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--sqrt", action="store_true", help="write the magnitude instead")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_edges)

    s = sub.add_parser("segment", help="threshold segmentation into compartments")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--threshold", type=float, required=True)
    s.add_argument("--min-component", type=int, default=20)
    s.add_argument("--out-cortical", required=True)
    s.add_argument("--out-trabecular", required=True)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("morpho", help="Ct.Th, Tb.N and compartment BMD as JSON")
    s.add_argument("--image", required=True)
    s.add_argument("--cortical", required=True)
    s.add_argument("--trabecular", required=True)
    s.add_argument("--threshold", type=float)
    s.add_argument("--slope", type=float, default=1.0)
    s.add_argument("--intercept", type=float, default=0.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_morpho)

    s = sub.add_parser("segmetrics", help="Dice, Jaccard and Hausdorff between two masks")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_segmetrics)

    s = sub.add_parser("gen-dataset", help="generate a paired dataset")
    s.add_argument("--config", required=True, help="TOML/JSON config or profile name (desk, paper)")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--n-pairs", type=int)
    s.add_argument("--seed", type=int, help="override master_seed")
    s.set_defaults(func=cmd_gen_dataset)

    s = sub.add_parser("evaluate", help="score a dataset against its ground truth (CSV)")
    s.add_argument("--manifest", required=True)
    s.add_argument("--which", choices=WHICH, default="corrupted")
    s.add_argument("--dir", help="directory of external outputs named <item_id>.raw/.json")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("export-png", help="16-bit PNG preview of an image")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--min", type=float, required=True)
    s.add_argument("--max", type=float, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_png)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return exc.exit_code
    except SinoforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
