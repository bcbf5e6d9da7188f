"""Command-line front end.

    par run     --config cfg.json [--budget N] [--seed S] [--out DIR]
    par sens    --config cfg.json --image NAME [--iters K] [--out DIR]
    par prop1   --config cfg.json --trials N [--image NAME]
    par heatmap <csv-or-mask> <out.pgm>
    par synth   --out DIR [--n N] [--seed S] ...

PAR_LOG_LEVEL (error|warn|info|debug) controls verbosity.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .attacks import compose
from .errors import ContractViolation
from .harness import ExperimentConfig, export_heatmap, run_experiment
from .patchgrid import build_grid
from .sensitivity import proposition1_check, sensitivity_map
from .synth import load_manifest, make_suite, write_suite

log = logging.getLogger("par")

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("PAR_LOG_LEVEL", "warn").strip().lower()
    if name not in _LEVELS:
        raise ContractViolation(
            "PAR_LOG_LEVEL must be one of %s" % "|".join(_LEVELS))
    logging.basicConfig(level=_LEVELS[name],
                        format="%(levelname)s %(name)s: %(message)s")


def _pick_entry(cfg, image):
    entries = load_manifest(cfg.dataset)
    if image is None:
        return entries[0]
    for e in entries:
        if e["id"] == image or os.path.basename(image).startswith(e["id"]):
            return e
    raise ContractViolation("image %r not found in %s" % (image, cfg.dataset))


def _attacked_state(cfg, entry):
    from .harness import _make_oracle
    oracle = _make_oracle(cfg, entry)
    state = compose(oracle, entry["image"], entry["label"], cfg.attack)
    return oracle, state


def cmd_run(args):
    cfg = ExperimentConfig.from_json(args.config, output_dir=args.out)
    if args.budget is not None or args.seed is not None:
        from dataclasses import replace
        updates = {}
        if args.budget is not None:
            updates["budget"] = args.budget
        if args.seed is not None:
            updates["seed"] = args.seed
        cfg.attack = replace(cfg.attack, **updates)
    result = run_experiment(cfg)
    print("wrote %s (%d rows); median l2 %.6g, average l2 %.6g"
          % (result.csv_path, len(result.rows), result.median_l2,
             result.average_l2))
    return 0


def cmd_sens(args):
    cfg = ExperimentConfig.from_json(args.config)
    entry = _pick_entry(cfg, args.image)
    oracle, state = _attacked_state(cfg, entry)
    try:
        grid = build_grid(entry["image"].shape, cfg.attack.min_patch_size)
        smap = sensitivity_map(oracle, entry["image"], state.x_star, grid,
                               iters=args.iters, y=entry["label"])
    finally:
        close = getattr(oracle, "close", None)
        if close:
            close()
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "%s_sens.csv" % entry["id"])
    pgm_path = os.path.join(out_dir, "%s_sens.pgm" % entry["id"])
    smap.to_csv(csv_path)
    smap.to_pgm(pgm_path)
    print("sens map for %s: %dx%d patches, %d queries; max %.4f; wrote %s, %s"
          % (entry["id"], grid.rows, grid.cols, smap.queries_spent,
             float(smap.values.max()), csv_path, pgm_path))
    return 0


def cmd_prop1(args):
    cfg = ExperimentConfig.from_json(args.config)
    entry = _pick_entry(cfg, args.image)
    oracle, state = _attacked_state(cfg, entry)
    try:
        from .core import make_rng
        from .sensitivity import PatchRect
        grid = build_grid(entry["image"].shape, cfg.attack.min_patch_size)
        smap = sensitivity_map(oracle, entry["image"], state.x_star, grid,
                               iters=6, y=entry["label"])
        flat_lo = int(np.argmin(smap.values))
        flat_hi = int(np.argmax(smap.values))
        if smap.values.flat[flat_lo] == smap.values.flat[flat_hi]:
            print("sensitivity map is flat; nothing to compare")
            return 1
        lo = PatchRect.from_grid(grid, flat_lo // grid.cols, flat_lo % grid.cols)
        hi = PatchRect.from_grid(grid, flat_hi // grid.cols, flat_hi % grid.cols)
        report = proposition1_check(
            oracle, entry["image"], state.x_star, lo, hi, args.trials,
            args.delta, args.epsilon, make_rng(cfg.attack.seed),
            y=entry["label"])
    finally:
        close = getattr(oracle, "close", None)
        if close:
            close()
    print("p_low=%.4f p_high=%.4f z=%.3f p_value=%.3g (%d/%d conditioned, "
          "%d queries)" % (report.p_low, report.p_high, report.z_stat,
                           report.p_value, report.trials, report.attempts,
                           report.queries_spent))
    return 0


def _matrix_from_file(path):
    with open(path) as f:
        head = f.readline()
        f.seek(0)
        if head.strip().lower().startswith("row,col"):
            reader = csv.DictReader(f)
            cells = [(int(r["row"]), int(r["col"]), float(r["sens"]))
                     for r in reader]
            rows = 1 + max(c[0] for c in cells)
            cols = 1 + max(c[1] for c in cells)
            m = np.zeros((rows, cols))
            for r, c, v in cells:
                m[r, c] = v
            return m
        return np.loadtxt(f, ndmin=2)


def cmd_heatmap(args):
    export_heatmap(_matrix_from_file(args.input), args.output)
    print("wrote %s" % args.output)
    return 0


def cmd_synth(args):
    cases = make_suite(n_images=args.n, seed=args.seed, height=args.size,
                       width=args.size, channels=args.channels,
                       region_size=args.region_size,
                       hot_regions=args.hot_regions,
                       init_stddev=args.stddev)
    manifest = write_suite(args.out, cases)
    print("wrote %d cases to %s" % (len(cases), manifest))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="par",
                                description="query-budgeted hard-label attack toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run an experiment over a dataset")
    pr.add_argument("--config", required=True)
    pr.add_argument("--budget", type=int, default=None)
    pr.add_argument("--seed", type=int, default=None)
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_run)

    ps = sub.add_parser("sens", help="per-patch sensitivity map of one image")
    ps.add_argument("--config", required=True)
    ps.add_argument("--image", default=None)
    ps.add_argument("--iters", type=int, default=10)
    ps.add_argument("--out", default=None)
    ps.set_defaults(func=cmd_sens)

    pp = sub.add_parser("prop1", help="failed-step restoration comparison")
    pp.add_argument("--config", required=True)
    pp.add_argument("--trials", type=int, required=True)
    pp.add_argument("--image", default=None)
    pp.add_argument("--delta", type=float, default=0.1)
    pp.add_argument("--epsilon", type=float, default=0.003)
    pp.set_defaults(func=cmd_prop1)

    ph = sub.add_parser("heatmap", help="matrix or sens CSV to PGM")
    ph.add_argument("input")
    ph.add_argument("output")
    ph.set_defaults(func=cmd_heatmap)

    py = sub.add_parser("synth", help="generate a synthetic suite")
    py.add_argument("--out", required=True)
    py.add_argument("--n", type=int, default=50)
    py.add_argument("--seed", type=int, default=0)
    py.add_argument("--size", type=int, default=112)
    py.add_argument("--channels", type=int, default=3)
    py.add_argument("--region-size", type=int, default=28)
    py.add_argument("--hot-regions", type=int, default=1)
    py.add_argument("--stddev", type=float, default=16.0)
    py.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ContractViolation as e:
        print("error: %s" % e, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
