"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric failure.
"""

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from . import capture as cap
from . import experiments as exp
from .doa import crb_single_source
from .errors import (ConfigurationError, DimensionError, FormatError, NumericError, OrderError,
                     ScenarioError)
from .scenario import ESTIMATORS, ScenarioSpec, load_scenario

log = logging.getLogger("srsaoa")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _common(p, out_help):
    p.add_argument("--config", metavar="PATH", help="scenario file (YAML)")
    p.add_argument("--out", metavar="PATH", help=out_help)
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--estimator", choices=ESTIMATORS + ("all",), help="estimator(s) to run")
    p.add_argument("--order", choices=("aic", "mdl", "ecod", "true"),
                   help="order source for the estimators (order study: criterion to evaluate)")


def build_parser():
    ap = argparse.ArgumentParser(prog="srsaoa", description="Uplink SRS angle-of-arrival toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a Monte-Carlo scenario and write a CSV curve table")
    _common(p, "CSV output (default <scenario name>.csv)")
    p.add_argument("--trials", type=int, help="override n_trials")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    p.add_argument("--records", metavar="PATH", help="dump per-trial records as JSON lines")
    p.add_argument("--single-trial", action="store_true",
                   help="run one synthesized capture in memory and write per-window estimates")

    p = sub.add_parser("synthesize", help="write a synthetic capture file for a scenario")
    _common(p, "capture file to write")

    p = sub.add_parser("process", help="estimate angles from a capture file")
    _common(p, "CSV of per-window estimates (default stdout)")
    p.add_argument("--capture", metavar="PATH", required=True, help="capture file to read")
    p.add_argument("--window", type=float, help="window length in s (default capture.window_s)")
    p.add_argument("--period", type=float, help="window period in s (default = window)")

    p = sub.add_parser("crb", help="print the single-source CRB over the scenario SNR grid")
    _common(p, "optional CSV copy of the table")
    return ap


def _spec(args):
    spec = load_scenario(args.config) if args.config else ScenarioSpec()
    kw = {"seed": args.seed}
    if args.estimator:
        kw["estimators"] = ESTIMATORS if args.estimator == "all" else (args.estimator,)
    if args.order:
        if spec.study == "order" and args.order != "true":
            kw["criteria"] = (args.order,)
        else:
            kw["order_source"] = args.order
    if getattr(args, "trials", None):
        kw["n_trials"] = args.trials
    return spec.with_overrides(**kw)


def _write_windows(results, estimators, path):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("window", "estimator", "theta_deg", "n_slots", "flagged"))
        for r in results:
            for name in estimators:
                w.writerow((r.index, name, repr(float(r.estimates.get(name, math.nan))),
                            len(r.slots), int(r.flagged)))
    finally:
        if path:
            fh.close()


def cmd_simulate(args):
    spec = _spec(args)
    out = args.out or f"{spec.name}.csv"
    if args.single_trial:
        results = cap.simulate_single_trial(spec)
        _write_windows(results, spec.estimators, out)
        log.info("wrote %s", out)
        return EXIT_OK
    records = [] if args.records else None
    table = exp.run_study(spec, workers=args.workers, records=records)
    exp.emit_results(table, out)
    log.info("wrote %s (%d rows)", out, len(table))
    if records is not None:
        exp.dump_records(records, args.records)
    if not args.no_plot:
        from .plotting import plot_table
        png = os.path.splitext(out)[0] + ".png"
        plot_table(table, png, spec.study, spec.name)
        log.info("wrote %s", png)
    return EXIT_OK


def cmd_synthesize(args):
    spec = _spec(args)
    if not args.out:
        raise ConfigurationError("synthesize needs --out")
    samples, offsets = cap.synthesize_capture(spec)
    cap.write_capture(args.out, samples, spec.waveform.sample_rate_hz, spec.geometry.carrier_hz)
    log.info("wrote %s: %d channels x %d samples, offsets %s", args.out, samples.shape[0],
             samples.shape[1], offsets)
    return EXIT_OK


def cmd_process(args):
    spec = _spec(args)
    window = args.window or spec.capture.window_s
    plan = cap.SnapshotPlan(window, args.period or window)
    results = cap.process_capture(args.capture, spec, plan=plan, workers=args.workers)
    _write_windows(results, spec.estimators, args.out)
    return EXIT_OK


def cmd_crb(args):
    spec = _spec(args)
    cfg = spec.waveform
    theta = spec.paths[0].theta_deg if spec.paths else 0.0
    rows = []
    for snr in spec.snr_grid_db:
        if not np.isfinite(snr):
            continue
        per_cell = exp.snapshot_snr_db(cfg, snr)
        bound = math.sqrt(crb_single_source(spec.geometry, per_cell, cfg.n_snapshots, theta))
        rows.append((snr, per_cell, bound))
    print(f"# M={spec.geometry.m_elements} N={cfg.n_snapshots} theta={theta:g} deg")
    print(f"{'snr_db':>8} {'cell_snr_db':>12} {'crb_deg':>12}")
    for snr, per_cell, bound in rows:
        print(f"{snr:8.2f} {per_cell:12.3f} {bound:12.6g}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("snr_db", "cell_snr_db", "crb_deg"))
            w.writerows([tuple(repr(float(v)) for v in r) for r in rows])
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "synthesize": cmd_synthesize,
    "process": cmd_process,
    "crb": cmd_crb,
}


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ScenarioError, DimensionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, OrderError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
