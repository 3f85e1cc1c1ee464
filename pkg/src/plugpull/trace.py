"""Trace persistence: CSV with a metadata comment line, event log, summary."""

import csv
import io
import os

import numpy as np

from .errors import TraceError
from .hybrid import TRACE_COLUMNS

RNG_NAME = "numpy.random.default_rng/PCG64"


def _fmt(v):
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def metadata_line(config_hash, seed, kernel, extra=None):
    items = [("config_hash", config_hash), ("seed", seed), ("rng", RNG_NAME), ("kernel", kernel)]
    items += sorted((extra or {}).items())
    return "# plugpull-trace " + " ".join(f"{k}={v}" for k, v in items)


def trace_text(trace, config_hash, kernel, extra=None):
    buf = io.StringIO()
    buf.write(metadata_line(config_hash, trace.seed, kernel, extra) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in trace.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def events_text(trace):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "from", "to", "jump_x", "jump_y", "jump_z"])
    for e in trace.events:
        j = np.zeros(3) if e.jump is None else e.jump
        w.writerow([_fmt(e.t), e.edge[0], e.edge[1]] + [_fmt(x) for x in j])
    return buf.getvalue()


def write_run(out_dir, trace, summary_lines, config_hash, kernel, extra=None):
    """Write trace.csv, events.csv and summary.txt into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, text in (("trace.csv", trace_text(trace, config_hash, kernel, extra)),
                       ("events.csv", events_text(trace)),
                       ("summary.txt", "\n".join(summary_lines) + "\n")):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        paths[name] = path
    return paths


def read_trace(path):
    """Returns ``(meta, columns, modes, data)`` with ``data`` numeric (mode column dropped)."""
    try:
        with open(path, newline="") as fh:
            first = fh.readline()
            if not first.startswith("#"):
                raise TraceError(f"{path}: missing metadata line")
            meta = dict(kv.split("=", 1) for kv in first[1:].split()[1:])
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise TraceError(f"cannot read trace {path}: {exc}") from None
    except ValueError:
        raise TraceError(f"{path}: malformed metadata line") from None
    if not rows:
        raise TraceError(f"{path}: no header")
    columns = rows[0]
    if "t" not in columns or "mode" not in columns:
        raise TraceError(f"{path}: header lacks t/mode")
    body = rows[1:]
    if not body:
        raise TraceError(f"{path}: trace has no rows")
    mi = columns.index("mode")
    try:
        modes = [r[mi] for r in body]
        data = np.array([[float(x) for j, x in enumerate(r) if j != mi] for r in body])
    except (IndexError, ValueError) as exc:
        raise TraceError(f"{path}: malformed row ({exc})") from None
    cols = [c for c in columns if c != "mode"]
    return meta, cols, modes, data


def mode_intervals(times, modes):
    """[(mode, t_start, t_end)] from per-row modes."""
    out = []
    for t, m in zip(times, modes):
        if out and out[-1][0] == m:
            out[-1][2] = t
        else:
            if out:
                out[-1][2] = t
            out.append([m, t, t])
    return [tuple(x) for x in out]
