"""Command-line entry point: ``ndmultiplex <subcommand> [options]``.

Exit codes
----------
0  success
2  validation error (bad config, infeasible request, malformed input file)
3  solver did not converge
4  I/O error (missing file, unwritable directory)
"""

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import ConvergenceError, ValidationError
from . import pipeline

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4

log = logging.getLogger("ndmultiplex")


def _common(p, seed=False, threads=False):
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
    if seed:
        p.add_argument("--seed", type=int, help="override the config seed (u64)")
    if threads:
        p.add_argument("--threads", type=int, default=1, help="worker threads")


def build_parser():
    parser = argparse.ArgumentParser(prog="ndmultiplex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize-sequence", help="sweep pulse count and spacing")
    _common(p, threads=True)

    p = sub.add_parser("select-frames", help="greedy frame pruning on a dense sequence")
    _common(p)
    p.add_argument("--target", type=int, help="frames to keep (default from config)")

    p = sub.add_parser("simulate", help="write FRS1 stacks for a fraction grid")
    _common(p, seed=True, threads=True)

    p = sub.add_parser("unmix", help="ROI and pixel-wise unmixing of FRS1 stacks")
    _common(p, threads=True)
    p.add_argument("--endmembers", type=Path, required=True,
                   help="headerless CSV of ND28/ND56 reference traces")
    p.add_argument("--no-maps", action="store_true", help="skip per-pixel maps")
    p.add_argument("stacks", nargs="+", type=Path)

    p = sub.add_parser("calibrate", help="fit (and optionally apply) a calibration line")
    _common(p)
    p.add_argument("--data", type=Path, required=True,
                   help="CSV with true_frac56 and est_frac56 columns")
    p.add_argument("--apply", type=Path, help="CSV whose est_frac56 column is corrected")

    p = sub.add_parser("pipeline", help="full two-batch calibration experiment")
    _common(p, seed=True, threads=True)
    return parser


def _run(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    out = args.out if args.out is not None else Path(cfg.output_dir)
    threads = getattr(args, "threads", None)
    timer = pipeline.Timer()
    cmd = args.command

    if cmd == "optimize-sequence":
        res, files = pipeline.run_optimize(cfg, out, threads)
        log.info("best: %d pulses, tau %.3f s, metric %.6g",
                 res.best.n_pulses, res.best.tau_fus_s, res.best.metric)
    elif cmd == "select-frames":
        if args.target is not None:
            cfg = cfg.with_overrides(selection_target=args.target)
        sel, files = pipeline.run_select(cfg, out)
        log.info("kept %d frames, metric %.6g", len(sel.kept), sel.metric)
    elif cmd == "simulate":
        _, files = pipeline.run_simulate(cfg, out, threads)
    elif cmd == "unmix":
        _, files = pipeline.run_unmix(cfg, args.stacks, args.endmembers, out, threads,
                                      maps=not args.no_maps)
    elif cmd == "calibrate":
        curve, files = pipeline.run_calibrate(args.data, out, args.apply)
        log.info("slope %.4f intercept %.4f R2 %.4f",
                 curve.slope, curve.intercept, curve.r_squared)
    elif cmd == "pipeline":
        res = pipeline.run_pipeline(cfg, out, threads)
        files = res.files
        log.info("uncalibrated error %.4f, calibrated error %.4f",
                 res.uncalibrated_error, res.calibrated_error)
    else:  # pragma: no cover - argparse enforces the choices
        raise ValidationError(f"unknown command {cmd}")
    pipeline.write_manifest(out, cfg, files, cmd, {"elapsed_s": timer.elapsed()})
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
