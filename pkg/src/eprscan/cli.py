"""Command-line entry point: ``eprscan <command> ...``.

Exit codes: 0 success, 1 analysis failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, coincidence, io, scansim, schmidt
from .errors import EprScanError, FitError, InputError, InsufficientDataError
from .optics import Mode

CONFIG_ENV = "EPRSCAN_CONFIG"


def _config(path):
    path = path or os.environ.get(CONFIG_ENV)
    return io.load_config(path) if path else io.default_config()


def cmd_simulate(args):
    cfg = _config(args.config)
    mode = Mode.parse(args.mode)
    source, lens, grid, noise = cfg.setup(mode)
    seed = cfg.seed if args.seed is None else args.seed
    ds = scansim.simulate_scan(source, lens, grid, noise, seed, workers=args.workers)
    out = Path(args.out) if args.out else Path(cfg.output) / f"scan_{mode.value}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path, side = io.write_scan(out, ds)
    print(f"mode            {mode.value}")
    print(f"points          {grid.n_points}")
    print(f"seed            {seed}")
    print(f"peak singles    {ds.s1.max()} / {ds.s2.max()} counts per {ds.dwell:g} s")
    print(f"peak coinc.     {ds.cc.max()}")
    print(f"total coinc.    {int(ds.cc.sum())}")
    print(f"wrote           {csv_path} (+ {side.name})")
    return 0


def _read_pair(nf_path, ff_path):
    nf, ff = io.read_scan(nf_path), io.read_scan(ff_path)
    if nf.mode is not Mode.NEAR_FIELD:
        raise InputError(f"{nf_path}: expected a near-field scan, sidecar says {nf.mode.value}")
    if ff.mode is not Mode.FAR_FIELD:
        raise InputError(f"{ff_path}: expected a far-field scan, sidecar says {ff.mode.value}")
    return nf, ff


def cmd_analyze(args):
    nf, ff = _read_pair(args.nf, args.ff)
    try:
        report = analysis.epr_report(nf, ff, floor=args.floor)
    except (FitError, InsufficientDataError) as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return 1
    print(report.table())
    if args.report:
        Path(args.report).write_text(report.to_json(indent=2) + "\n")
    if args.require_violation and not report.all_violated:
        print("no EPR violation in at least one row", file=sys.stderr)
        return 1
    return 0


def cmd_schmidt(args):
    nf, ff = _read_pair(args.nf, args.ff)
    result = {}
    for arm in (1, 2):
        est = schmidt.estimate_schmidt(
            schmidt.singles_to_intensity(nf, arm), schmidt.singles_to_intensity(ff, arm),
            n_boot=args.bootstrap, seed=args.seed,
        )
        result[f"arm{arm}"] = est.to_dict()
    text = json.dumps(result, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_coincidence(args):
    a, b = coincidence.read_tags(args.tags1), coincidence.read_tags(args.tags2)
    n = coincidence.count_coincidences(a, b, args.window)
    print(f"coincidences    {n}")
    print(f"tags            {len(a)} / {len(b)}")
    if args.hist:
        hist = coincidence.coincidence_histogram(a, b, args.bin, args.span)
        np.savetxt(args.hist, np.column_stack([hist.centers, hist.counts]), fmt=["%.10g", "%d"],
                   delimiter=",", header="delay_ps,count", comments="")
    return 0


def cmd_timetags(args):
    a, b = scansim.generate_timetags(args.rate1, args.rate2, args.pair_rate, args.jitter, args.duration, args.seed)
    write = coincidence.write_tags_csv if args.csv else coincidence.write_tags
    write(args.out1, a)
    write(args.out2, b)
    print(f"wrote {len(a)} + {len(b)} tags")
    return 0


def cmd_heatmaps(args):
    ds = io.read_scan(args.dataset)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for arm in (1, 2):
        x, y = ds.axis(arm, 0), ds.axis(arm, 1)
        io.write_grid_csv(outdir / f"singles_avg_arm{arm}.csv", x, y, ds.averaged_singles(arm))
        io.write_grid_csv(outdir / f"coinc_max_arm{arm}.csv", x, y, ds.max_coincidences(arm))
    print(f"wrote 4 grids to {outdir}")
    return 0


def cmd_config(args):
    print(json.dumps(io.default_config().to_dict(), indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="eprscan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a raster scan")
    p.add_argument("config", nargs="?", help=f"JSON run configuration (default: ${CONFIG_ENV} or built-in)")
    p.add_argument("--mode", required=True, choices=["nf", "ff"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV path; the JSON sidecar is written next to it")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="EPR analysis of a near-field and a far-field scan")
    p.add_argument("nf")
    p.add_argument("ff")
    p.add_argument("--report", help="write the report as JSON")
    p.add_argument("--floor", type=int, default=50, help="minimum raw coincidences per slice")
    p.add_argument("--require-violation", action="store_true", help="exit 1 unless every row violates")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("schmidt", help="Schmidt-number estimate from the singles of both scans")
    p.add_argument("nf")
    p.add_argument("ff")
    p.add_argument("--bootstrap", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_schmidt)

    p = sub.add_parser("coincidence", help="count coincidences between two tag files")
    p.add_argument("tags1")
    p.add_argument("tags2")
    p.add_argument("--window", type=float, default=300.0, help="ps")
    p.add_argument("--hist", help="write a delay histogram CSV")
    p.add_argument("--bin", type=float, default=50.0, help="histogram bin, ps")
    p.add_argument("--span", type=float, default=5000.0, help="histogram half-span, ps")
    p.set_defaults(func=cmd_coincidence)

    p = sub.add_parser("timetags", help="generate two synthetic tag files")
    p.add_argument("--rate1", type=float, required=True)
    p.add_argument("--rate2", type=float, required=True)
    p.add_argument("--pair-rate", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=0.0, help="ps")
    p.add_argument("--duration", type=float, required=True, help="s")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", action="store_true", help="one integer per line instead of binary")
    p.add_argument("out1")
    p.add_argument("out2")
    p.set_defaults(func=cmd_timetags)

    p = sub.add_parser("heatmaps", help="averaged-singles and max-coincidence grids as CSV")
    p.add_argument("dataset")
    p.add_argument("--outdir", default=".")
    p.set_defaults(func=cmd_heatmaps)

    p = sub.add_parser("config", help="print the default run configuration")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EprScanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
