"""Command-line entry point: ``ipssd {patch,detect,eval,bench,selfcheck}``.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 contract violation (including a failed self-check).
"""
import argparse
import json
import sys
import warnings
from pathlib import Path

from . import selfcheck
from .dataio import (RecordSet, assign_to_patch, augment, box_to_polygon, crop_patch,
                     format_detection, load_ground_truth, read_detections, read_pnm, tile_image,
                     write_pnm)
from .errors import ConfigError, ContractViolation, DataError
from .evaluation import compute_ap
from .pipeline import PipelineConfig, bench, load_config, load_model, run_pipeline

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONTRACT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _config(args):
    return load_config(args.config) if args.config else PipelineConfig()


def _read_text(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


# --- subcommands -------------------------------------------------------------

def cmd_patch(args):
    image = read_pnm(args.image)
    h, w = image.shape[:2]
    stem = Path(args.image).stem
    objects = []
    if args.annotations:
        objects = load_ground_truth(_read_text(args.annotations), stem, args.annotations)
    rs = RecordSet(w, h, objects, image)
    if args.rotate90:
        rs = augment(rs, "rotate90", args.rotate90)
    if args.rescale != 1.0:
        rs = augment(rs, "rescale", args.rescale)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = ".pgm" if rs.image.ndim == 2 else ".ppm"
    lines = []
    for p in tile_image(rs.width, rs.height, args.patch, args.overlap, stem):
        name = f"{stem}__{p.origin_x}__{p.origin_y}"
        write_pnm(out / (name + ext), crop_patch(rs.image, p))
        inside = assign_to_patch(rs.objects, p)
        rows = []
        for o in inside:
            coords = " ".join(f"{v:.1f}" for pt in box_to_polygon(o.box) for v in pt)
            rows.append(f"{coords} {o.class_name} {o.difficulty}\n")
        (out / (name + ".txt")).write_text("".join(rows), encoding="utf-8")
        lines.append(f"{name} origin=({p.origin_x},{p.origin_y}) size={p.width}x{p.height} "
                     f"objects={len(inside)}{' clamped' if p.clamped else ''}\n")
    sys.stdout.write("".join(lines))
    return EXIT_OK


def cmd_detect(args):
    cfg = _config(args)
    model = load_model(cfg, args.weights)
    rows = []
    for path in args.images:
        dets = run_pipeline(read_pnm(path), model=model, source_id=Path(path).stem)
        rows += [format_detection(d) + "\n" for d in dets]
    _emit("".join(rows), args.out)
    return EXIT_OK


def _report_text(rep):
    lines = [f"mode = {rep.mode}", f"iou_threshold = {rep.iou_threshold}",
             f"interpolation = {rep.interpolation}", f"mAP = {rep.mAP:.6f}",
             f"unknown_class_fp = {rep.unknown_class_fp}"]
    for name, r in rep.per_class.items():
        lines += [f"class.{name}.ap = {r.ap:.6f}", f"class.{name}.tp = {r.tp}",
                  f"class.{name}.fp = {r.fp}", f"class.{name}.npos = {r.npos}",
                  f"class.{name}.ignored = {r.ignored}"]
    return "\n".join(lines) + "\n"


def cmd_eval(args):
    dets = read_detections(args.detections)
    gts = []
    for path in args.gt:
        gts += load_ground_truth(_read_text(path), Path(path).stem, path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = compute_ap(dets, gts, args.iou, args.mode)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.format == "json":
        text = json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n"
    else:
        text = _report_text(rep)
    _emit(text, args.out)
    return EXIT_OK


def cmd_bench(args):
    cfg = _config(args)
    model = load_model(cfg, args.weights)
    images = [read_pnm(p) for p in args.images]  # decoded before timing starts
    rep = bench(images, model=model, repeats=args.repeats)
    _emit(json.dumps(rep, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_selfcheck(args):
    lines = []
    results = selfcheck.run_all(full=args.full, only=args.only,
                                out=lambda s: (print(s, flush=True), lines.append(s)))
    passed = sum(r.passed for r in results)
    summary = f"{passed}/{len(results)} suites passed"
    print(summary)
    if args.out:
        Path(args.out).write_text("\n".join(lines + [summary]) + "\n", encoding="utf-8")
    return EXIT_OK if passed == len(results) else EXIT_CONTRACT


# --- parser ------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="pipeline config file (key = value)")
    common.add_argument("--out", metavar="PATH", help="write the result here instead of stdout")

    p = _Parser(prog="ipssd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("patch", parents=[common], help="tile an image and remap its annotations")
    s.add_argument("image", help="binary PGM/PPM image")
    s.add_argument("--annotations", metavar="PATH", help="DOTA annotation file for the image")
    s.add_argument("--patch", type=int, default=600)
    s.add_argument("--overlap", type=int, default=100)
    s.add_argument("--rotate90", type=int, default=0, choices=range(4), metavar="K")
    s.add_argument("--rescale", type=float, default=1.0, metavar="S")
    s.set_defaults(func=cmd_patch)

    s = sub.add_parser("detect", parents=[common], help="run the detector, print detection lines")
    s.add_argument("images", nargs="+", help="binary PGM/PPM images")
    s.add_argument("--weights", metavar="PATH", help="RDW1 weight file (overrides weights.path)")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("eval", parents=[common], help="score detections against ground truth")
    s.add_argument("detections", help="detection lines file")
    s.add_argument("gt", nargs="+", help="DOTA ground truth files; the file stem is the image id")
    s.add_argument("--mode", choices=("obb", "hbb"), default="obb")
    s.add_argument("--iou", type=float, default=0.5, metavar="T")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", parents=[common], help="throughput report (JSON)")
    s.add_argument("images", nargs="+")
    s.add_argument("--weights", metavar="PATH")
    s.add_argument("--repeats", type=int, default=3)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("selfcheck", parents=[common], help="run the oracle suites")
    s.add_argument("--full", action="store_true", help="acceptance-size instance counts")
    s.add_argument("--only", nargs="+", choices=list(selfcheck.QUICK), metavar="SUITE")
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "patch" and not args.out:
        parser.error("patch needs --out DIR for the patch files")
    if args.command == "eval" and not 0.0 < args.iou <= 1.0:
        parser.error("--iou must lie in (0, 1]")
    try:
        return args.func(args)
    except ContractViolation as exc:
        print(f"error: contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (DataError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
