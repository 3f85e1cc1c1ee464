"""Command-line interface: ``plugpull <subcommand> [options]``.

Exit codes
----------
0   success
1   a verdict failed (sweep or transition check)
2   usage error
3   configuration error
4   NoSeparation: the wire-pulling guard never fired
5   EnvelopeExit: the run left the flight envelope
6   GimbalLock
7   trace file error
8   SamplingBudgetExceeded
9   SingularMass
10  NonInvertible
11  FitDegenerate
12  SectorViolation
13  DegenerateWindow
70  internal error
"""

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import analysis as an
from . import config as cfg
from . import dynamics as dyn
from . import experiments as ex
from . import hybrid as hy
from .errors import PlugPullError, TraceError
from .trace import mode_intervals, read_trace, write_run

log = logging.getLogger("plugpull")

EXIT_OK, EXIT_VERDICT, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 70
OUTCOME_EXIT = {"completed": 0, "no_separation": 4, "envelope_exit": 5}


def _float_list(text):
    try:
        vals = [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("expected one or more positive numbers")
    return vals


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser():
    p = _Parser(prog="plugpull", description="Wire-pulling hybrid maneuver simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out=True):
        sp.add_argument("--config", default="replication",
                        help="YAML config file or preset name (default: replication)")
        sp.add_argument("--seed", type=_u64, help="override the config seed")
        if out:
            sp.add_argument("--out", default="plugpull-out", help="output directory")

    sp = sub.add_parser("run", help="simulate one scenario and write its trace")
    common(sp)
    sp.add_argument("--force-separation-at", type=float, metavar="T",
                    help="manual WP->ST trigger time instead of the force guard")

    sp = sub.add_parser("sweep-epsilon", help="decay-rate and nominal/actual deviation sweep")
    common(sp)
    sp.add_argument("--epsilons", type=_float_list, help="comma-separated eps values")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    sp = sub.add_parser("montecarlo-transition", help="robust WP->ST transition check")
    common(sp)
    sp.add_argument("--samples", type=int, help="reset samples (>= 100)")
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--delta-sigma", type=float)
    sp.add_argument("--fail-fast", action="store_true", help="stop at the first failing center")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    sp = sub.add_parser("compare-baseline", help="DOB run vs nominal-only baseline")
    common(sp)
    sp.add_argument("--force-separation-at", type=float, metavar="T")
    sp.add_argument("--pin-separation", action="store_true",
                    help="make the baseline separate at the DOB run's separation time")

    sp = sub.add_parser("emit-plots", help="per-panel CSV extracts and a gnuplot script")
    sp.add_argument("trace", help="trace.csv written by `run`")
    sp.add_argument("--out", default=None, help="output directory (default: next to the trace)")

    sp = sub.add_parser("validate-config", help="load, validate and print a config")
    common(sp, out=False)
    sp.add_argument("--dump", action="store_true", help="print the resolved config as YAML")
    return p


# -- subcommands ---------------------------------------------------------------

def _load(args):
    data = cfg.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    return data


def cmd_run(args):
    data = _load(args)
    sc = cfg.build_scenario(data, force_separation_at=args.force_separation_at)
    trace = hy.simulate(sc)
    summary = ex.summarize(trace, sc)
    lines = [f"config_hash={cfg.config_hash(data)}", f"seed={sc.seed}"] + summary.lines()
    if trace.message:
        lines.append(f"message={trace.message}")
    write_run(args.out, trace, lines, cfg.config_hash(data), dyn.KERNEL)
    print("\n".join(lines))
    return OUTCOME_EXIT[trace.outcome]


def cmd_sweep_epsilon(args):
    data = _load(args)
    st = cfg.analysis_settings(data)
    eps = args.epsilons or st.epsilons
    sc = cfg.build_scenario(data)
    rows = ex.epsilon_sweep(sc, eps, t_span=st.deviation_span,
                            disturbances=st.sweep_disturbances, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    header = ["eps", "decay_rate", "ratio", "floor", "n_fit", "deviation"]
    table = [[r.eps, r.fit.rate, np.nan if r.ratio is None else r.ratio, r.fit.floor,
              r.fit.n_samples, r.deviation] for r in rows]
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([["%.17g" % v for v in row] for row in table])
    print(" ".join(f"{h:>12}" for h in header))
    for row in table:
        print(" ".join(f"{v:12.6g}" for v in row))
    verdict = sweep_verdict(rows, st.deviation_sigma)
    print("\n".join(verdict.lines()))
    return EXIT_OK if verdict.passed else EXIT_VERDICT


def sweep_verdict(rows, sigma):
    """Ratios within [1.6, 2.4], deviation non-increasing, last deviation below sigma."""
    ratios = [r.ratio for r in rows[1:]]
    devs = [r.deviation for r in rows]
    ratio_ok = all(1.6 <= x <= 2.4 for x in ratios)
    mono = all(b <= a for a, b in zip(devs, devs[1:]))
    below = devs[-1] < sigma
    margin = min([sigma - devs[-1]] + [min(x - 1.6, 2.4 - x) for x in ratios])
    return an.Verdict("epsilon_sweep", ratio_ok and mono and below, margin, sigma,
                      {"ratios_in_band": ratio_ok, "deviation_non_increasing": mono,
                       "deviation_below_sigma": below})


def cmd_montecarlo(args):
    data = _load(args)
    st = cfg.analysis_settings(data)
    n = st.samples if args.samples is None else args.samples
    if n < 100:
        log.error("--samples must be at least 100")
        return EXIT_USAGE
    sigma = st.sigma if args.sigma is None else args.sigma
    dsig = st.delta_sigma if args.delta_sigma is None else args.delta_sigma
    sc = cfg.build_scenario(data)
    rep = ex.transition_check(sc, n_samples=n, sigma=sigma, delta_sigma=dsig, metric=st.metric,
                              post_horizon=st.post_horizon, max_centers=st.max_centers,
                              fail_fast=args.fail_fast, jobs=args.jobs)
    lines = [f"config_hash={cfg.config_hash(data)}", f"seed={sc.seed}"] + rep.lines()
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "transition.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if rep.passed else EXIT_VERDICT


def cmd_compare(args):
    data = _load(args)
    sc = cfg.build_scenario(data, force_separation_at=args.force_separation_at)
    cmp, t_dob, t_base = ex.compare_baseline(sc, pin_separation=args.pin_separation)
    h = cfg.config_hash(data)
    write_run(os.path.join(args.out, "dob"), t_dob, cmp.dob.lines(), h, dyn.KERNEL)
    write_run(os.path.join(args.out, "baseline"), t_base, cmp.baseline.lines(), h, dyn.KERNEL)
    print("\n".join([f"config_hash={h}"] + cmp.lines()))
    return EXIT_OK


PANELS = [("px", "q0", "p_d_x"), ("py", "q1", "p_d_y"), ("pz", "q2", "p_d_z"),
          ("phi", "q3", "eta_d_phi"), ("theta", "q4", "eta_d_theta"), ("psi", "q5", "eta_d_psi")]


def cmd_emit_plots(args):
    meta, cols, modes, data = read_trace(args.trace)
    out = args.out or os.path.dirname(os.path.abspath(args.trace))
    os.makedirs(out, exist_ok=True)
    t = data[:, cols.index("t")]
    intervals = mode_intervals(t, modes)
    events = os.path.join(os.path.dirname(os.path.abspath(args.trace)), "events.csv")
    if os.path.exists(events):
        intervals = _event_intervals(events, intervals)
    with open(os.path.join(out, "modes.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "t_start", "t_end"])
        w.writerows([[m, "%.17g" % a, "%.17g" % b] for m, a, b in intervals])
    for name, col, dcol in PANELS:
        missing = [c for c in (col, dcol) if c not in cols]
        if missing:
            raise TraceError(f"{args.trace}: missing columns {missing}")
        with open(os.path.join(out, f"panel_{name}.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "mode", name, f"{name}_d"])
            for i in range(len(t)):
                w.writerow(["%.17g" % t[i], modes[i], "%.17g" % data[i, cols.index(col)],
                            "%.17g" % data[i, cols.index(dcol)]])
    with open(os.path.join(out, "plot.gp"), "w") as fh:
        fh.write(gnuplot_script(intervals))
    print(f"wrote {len(PANELS)} panels and plot.gp to {out}")
    return EXIT_OK


def _event_intervals(path, intervals):
    """Mode intervals with boundaries at the exact event times of ``events.csv``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = [[intervals[0][0], intervals[0][1], None]]
    for r in rows:
        out[-1][2] = float(r["t"])
        out.append([r["to"], float(r["t"]), None])
    out[-1][2] = intervals[-1][2]
    return [tuple(x) for x in out]


def gnuplot_script(intervals):
    shade = {"WP": "#e8e8ff", "ST": "#ffe8e8", "FF": "#e8ffe8"}
    lines = ["# gnuplot script: run `gnuplot plot.gp` in this directory",
             "set datafile separator ','", "set terminal pngcairo size 1200,900",
             "set output 'states.png'", "set multiplot layout 3,2", "set key off"]
    for i, (m, a, b) in enumerate(intervals, start=1):
        lines.append(f"set object {i} rect from {a:.6g}, graph 0 to {b:.6g}, graph 1 "
                     f"fc rgb '{shade.get(m, '#eeeeee')}' fs solid behind noborder")
    for name, _, _ in PANELS:
        lines.append(f"set title '{name}'")
        lines.append(f"plot 'panel_{name}.csv' every ::1 using 1:3 with lines lw 2, "
                     f"'' every ::1 using 1:4 with lines dt 2")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def cmd_validate(args):
    data = _load(args)
    print(f"config ok: hash={cfg.config_hash(data)}")
    if args.dump:
        print(cfg.dump_config(data), end="")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep-epsilon": cmd_sweep_epsilon,
            "montecarlo-transition": cmd_montecarlo, "compare-baseline": cmd_compare,
            "emit-plots": cmd_emit_plots, "validate-config": cmd_validate}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except PlugPullError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
