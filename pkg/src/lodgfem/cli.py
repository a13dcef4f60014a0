"""Command line entry point: ``lodgfem run|gen-coeff|decay``."""

import argparse
import logging
import sys

from .coeff import random_field, save_field
from .errors import LodError
from .harness import decay_study, read_config, run_experiment, write_report

log = logging.getLogger("lodgfem")


def _cmd_run(args):
    cfg = read_config(args.config)
    if args.output:
        cfg.output = args.output
    report = run_experiment(cfg, threads=args.threads)
    write_report(report, cfg.output)
    for r in report.rows:
        print(f"level {r.level}  H={r.H:.4g}  dofs={r.dofs}  k={r.k}  "
              f"lod={r.rel_err_lod:.3e}  p1={r.rel_err_p1:.3e}")
    print(f"order_lod={report.order_lod:.3f} order_p1={report.order_p1:.3f} -> {cfg.output}")


def _cmd_gen_coeff(args):
    field = random_field(args.grid_level, args.lo, args.hi, args.seed)
    save_field(field, args.path)
    print(f"wrote {args.path}: grid_level={field.grid_level} "
          f"alpha={field.alpha:.4g} beta={field.beta:.4g} contrast={field.contrast:.4g}")


def _cmd_decay(args):
    cfg = read_config(args.config)
    rows = decay_study(cfg)
    print("k,energy_error,ratio")
    for k, err, ratio in rows:
        print(f"{k},{err!r},{ratio!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="lodgfem", description=__doc__)
    parser.add_argument("--threads", type=int, default=1,
                        help="coarse levels computed concurrently (default 1)")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a convergence experiment and write the CSV report")
    p.add_argument("config")
    p.add_argument("--output", "-o", help="override the report path from the config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("gen-coeff", help="write a random log-uniform coefficient file")
    p.add_argument("grid_level", type=int)
    p.add_argument("lo", type=float)
    p.add_argument("hi", type=float)
    p.add_argument("seed", type=int)
    p.add_argument("path")
    p.set_defaults(func=_cmd_gen_coeff)

    p = sub.add_parser("decay", help="corrector decay study for one coarse node")
    p.add_argument("config")
    p.set_defaults(func=_cmd_decay)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except (LodError, OSError) as exc:
        print(f"lodgfem: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
