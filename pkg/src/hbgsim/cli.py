"""Command line front end.

Subcommands: validate (diagnostics), compile (dot emission, mode-causality
report), sim (CSV trace export), bench (three-tank scenario checks) and plot
(SVG line chart from a CSV). Exit codes: 0 success, 1 model or runtime error,
2 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys

from .causality import TooManyModes, check_all_modes
from .engine import NumericalBlowup, SimConfig, SimTrace, simulate
from .ibd import CompileError, compile_graph, emit_dot
from .model import HbgError, validate_graph
from .parser import HbgParseError, parse_file
from .threetank import TankParams, build_three_tank, crossing_time, oracle_simulate, steady_state

USAGE_ERROR = 2
MODEL_ERROR = 1


class _CliError(Exception):
    def __init__(self, message, code=MODEL_ERROR):
        super().__init__(message)
        self.code = code


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(trace: SimTrace, path, probes=None, include_mode: bool = False) -> None:
    """Write the trace as UTF-8 CSV with full round-trip precision: header
    t,<probe...>[,mode], one row per recorded step."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    names = list(trace.probe_names) if probes is None else list(probes)
    for name in names:
        if name not in trace.probe_names:
            raise _CliError(f"unknown probe '{name}' (have {', '.join(trace.probe_names)})")
    cols = [trace.probe(name) for name in names]
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            header = "t," + ",".join(names)
            if include_mode:
                header += ",mode"
            f.write(header + "\n")
            for k in range(len(trace)):
                row = _fmt(trace.times[k]) + "," + ",".join(_fmt(c[k]) for c in cols)
                if include_mode:
                    row += "," + trace.mode_string(k)
                f.write(row + "\n")
    except OSError as exc:
        raise _CliError(f"cannot write CSV '{path}': {exc}") from exc


def read_csv(path):
    """Parse a CSV written by write_csv: returns (column names, columns).
    Malformed rows are reported with their line number."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise _CliError(f"cannot read CSV '{path}': {exc}") from exc
    if not lines:
        raise _CliError(f"CSV '{path}' is empty")
    names = lines[0].split(",")
    numeric = [name for name in names if name != "mode"]
    columns = {name: [] for name in names}
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(names):
            raise _CliError(f"{path}:{ln}: expected {len(names)} fields, found {len(parts)}")
        for name, part in zip(names, parts):
            if name == "mode":
                columns[name].append(part)
            else:
                try:
                    columns[name].append(float(part))
                except ValueError:
                    raise _CliError(f"{path}:{ln}: bad number {part!r}") from None
    return numeric, columns


# --------------------------------------------------------------------------
# SVG rendering
# --------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 800, 480
_ML, _MR, _MT, _MB = 64, 140, 20, 42


def _nice_ticks(lo: float, hi: float, n: int = 6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = 10.0 * mag
    for m in (1.0, 2.0, 5.0, 10.0):
        if raw <= m * mag:
            step = m * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + step * 1e-9:
        ticks.append(round(t, 12))
        t += step
    return ticks


def plot_svg(csv_path, out_path, series) -> None:
    """Render selected CSV columns as one SVG line chart: a polyline per
    series, auto-scaled linear axes with labelled ticks, and a legend.
    Deterministic for identical input."""
    if not series:
        raise _CliError("no series selected", USAGE_ERROR)
    names, columns = read_csv(csv_path)
    if "t" not in columns:
        raise _CliError(f"CSV '{csv_path}' has no 't' column")
    for s in series:
        if s not in columns or s == "mode":
            raise _CliError(f"unknown series '{s}' (have {', '.join(n for n in names if n != 't')})")
    ts = columns["t"]
    ys = [columns[s] for s in series]
    xmin, xmax = min(ts), max(ts)
    ymin = min(min(col) for col in ys)
    ymax = max(max(col) for col in ys)
    if xmax <= xmin:
        xmax = xmin + 1.0
    if ymax <= ymin:
        ymax = ymin + 1.0
    px = _W - _ML - _MR
    py = _H - _MT - _MB

    def sx(x):
        return _ML + (x - xmin) / (xmax - xmin) * px

    def sy(y):
        return _MT + py - (y - ymin) / (ymax - ymin) * py

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
             f'viewBox="0 0 {_W} {_H}">',
             f'<rect x="{_ML}" y="{_MT}" width="{px}" height="{py}" '
             f'fill="white" stroke="#444"/>']
    for x in _nice_ticks(xmin, xmax):
        if xmin <= x <= xmax:
            X = sx(x)
            parts.append(f'<line x1="{X:.2f}" y1="{_MT + py}" x2="{X:.2f}" '
                         f'y2="{_MT + py + 5}" stroke="#444"/>')
            parts.append(f'<text x="{X:.2f}" y="{_MT + py + 18}" font-size="11" '
                         f'text-anchor="middle">{x:g}</text>')
    for y in _nice_ticks(ymin, ymax):
        if ymin <= y <= ymax:
            Y = sy(y)
            parts.append(f'<line x1="{_ML - 5}" y1="{Y:.2f}" x2="{_ML}" '
                         f'y2="{Y:.2f}" stroke="#444"/>')
            parts.append(f'<text x="{_ML - 8}" y="{Y + 4:.2f}" font-size="11" '
                         f'text-anchor="end">{y:g}</text>')
    for i, (name, col) in enumerate(zip(series, ys)):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(ts, col))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{pts}"/>')
        ly = _MT + 16 + 18 * i
        lx = _W - _MR + 12
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly}" font-size="12">{name}</text>')
    parts.append(f'<text x="{_ML + px / 2:.2f}" y="{_H - 8}" font-size="12" '
                 f'text-anchor="middle">t</text>')
    parts.append("</svg>")
    try:
        with open(out_path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(parts) + "\n")
    except OSError as exc:
        raise _CliError(f"cannot write SVG '{out_path}': {exc}") from exc


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def _load(path):
    try:
        return parse_file(path)
    except FileNotFoundError:
        raise _CliError(f"no such model file: {path}")
    except HbgParseError as exc:
        msgs = [f"{path}:{e.span.line}:{e.span.column}: {e.kind}: {e.message}"
                for e in exc.errors]
        raise _CliError("\n".join(msgs))


def _cmd_validate(args) -> int:
    g = _load(args.model)
    diags = validate_graph(g)
    for d in diags:
        print(f"{args.model}: {d.kind}: {d.message}", file=sys.stderr)
    return 0 if not diags else MODEL_ERROR


def _cmd_compile(args) -> int:
    g = _load(args.model)
    try:
        ibd = compile_graph(g, mode_cap=args.mode_cap)
    except (CompileError, TooManyModes, HbgError) as exc:
        raise _CliError(f"compile {args.model}: {exc}")
    print(f"{args.model}: {len(ibd.blocks)} blocks, {len(ibd.state_blocks)} states, "
          f"{len(ibd.switched_names)} switched junctions")
    if args.check_modes:
        report = check_all_modes(g, mode_cap=args.mode_cap)
        print(report.to_text())
    if args.emit:
        with open(args.emit, "w", encoding="utf-8") as f:
            f.write(emit_dot(ibd))
        print(f"wrote {args.emit}")
    if args.emit_graph:
        with open(args.emit_graph, "w", encoding="utf-8") as f:
            f.write(emit_dot(g))
        print(f"wrote {args.emit_graph}")
    return 0


def _cmd_sim(args) -> int:
    g = _load(args.model)
    try:
        ibd = compile_graph(g)
    except HbgError as exc:
        raise _CliError(f"compile {args.model}: {exc}")
    cfg = SimConfig(dt=args.dt, t_end=args.t_end, integrator=args.integrator,
                    record_every=args.record_every)
    try:
        trace = simulate(ibd, g, cfg)
    except NumericalBlowup as exc:
        raise _CliError(f"sim {args.model}: {exc}")
    except ValueError as exc:
        raise _CliError(f"sim {args.model}: {exc}", USAGE_ERROR)
    write_csv(trace, args.out, probes=args.probe or None, include_mode=args.mode)
    print(f"wrote {args.out} ({len(trace)} rows)")
    return 0


def _cmd_bench(args) -> int:
    if args.which != "three-tank":
        raise _CliError(f"bench: unknown benchmark '{args.which}'", USAGE_ERROR)
    p = TankParams()
    g = build_three_tank(p)
    ibd = compile_graph(g)
    trace = simulate(ibd, g, SimConfig(dt=args.dt, t_end=10.0))
    ok = True

    def check(label, value, expected, tol):
        nonlocal ok
        good = value is not None and abs(value - expected) <= tol
        ok = ok and good
        shown = "none" if value is None else f"{value:.3f}"
        print(f"{label}={shown} (expected {expected:.3f} +/- {tol:.3g}) "
              f"{'PASS' if good else 'FAIL'}")

    check("t1", crossing_time(trace, "h1", p.h12), 1.693, 0.02)
    check("t2", crossing_time(trace, "h2", p.h12), 4.19, 0.05)

    long = simulate(ibd, g, SimConfig(dt=args.dt, t_end=60.0))
    target = steady_state(p)
    final = [float(long.probe(n)[-1]) for n in ("h1", "h2", "h3")]
    good = all(abs(a - b) <= 1e-3 for a, b in zip(final, target))
    ok = ok and good
    print(f"steady=({final[0]:.4f}, {final[1]:.4f}, {final[2]:.4f}) "
          f"(expected ({target[0]:.1f}, {target[1]:.1f}, {target[2]:.1f}) +/- 0.001) "
          f"{'PASS' if good else 'FAIL'}")

    oracle = oracle_simulate(p, SimConfig(dt=args.dt, t_end=10.0))
    diff = max(float(abs(trace.probe(n) - oracle.probe(n)).max()) for n in ("h1", "h2", "h3"))
    good = diff < 1e-9
    ok = ok and good
    print(f"oracle-diff={diff:.3g} (expected < 1e-09) {'PASS' if good else 'FAIL'}")
    return 0 if ok else MODEL_ERROR


def _cmd_plot(args) -> int:
    series = [s for part in args.series for s in part.split(",") if s]
    if not series:
        raise _CliError("plot: no series selected", USAGE_ERROR)
    plot_svg(args.csv, args.out, series)
    print(f"wrote {args.out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hbg",
                                 description="hybrid bond graph compiler and simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="parse and validate a model")
    v.add_argument("model")
    v.set_defaults(func=_cmd_validate)

    c = sub.add_parser("compile", help="compile a model to a block diagram")
    c.add_argument("model")
    c.add_argument("--emit", metavar="DOT", help="write the block diagram as GraphViz dot")
    c.add_argument("--emit-graph", metavar="DOT", help="write the bond graph as GraphViz dot")
    c.add_argument("--check-modes", action="store_true",
                   help="print the per-mode causality report")
    c.add_argument("--mode-cap", type=int, default=1024)
    c.set_defaults(func=_cmd_compile)

    s = sub.add_parser("sim", help="simulate a model and export a CSV trace")
    s.add_argument("model")
    s.add_argument("--out", required=True, metavar="CSV")
    s.add_argument("--dt", type=float, default=0.01)
    s.add_argument("--t-end", type=float, default=10.0)
    s.add_argument("--integrator", choices=("euler", "rk4"), default="rk4")
    s.add_argument("--probe", action="append", metavar="NAME",
                   help="probe column to export (repeatable; default: all)")
    s.add_argument("--mode", action="store_true", help="append the mode bit-string column")
    s.add_argument("--record-every", type=int, default=1)
    s.set_defaults(func=_cmd_sim)

    b = sub.add_parser("bench", help="run a built-in benchmark scenario with checks")
    b.add_argument("which", choices=("three-tank",))
    b.add_argument("--dt", type=float, default=0.01)
    b.set_defaults(func=_cmd_bench)

    p = sub.add_parser("plot", help="render CSV columns as an SVG line chart")
    p.add_argument("csv")
    p.add_argument("--out", required=True, metavar="SVG")
    p.add_argument("--series", action="append", default=[], metavar="NAMES",
                   help="comma separated series names (repeatable)")
    p.set_defaults(func=_cmd_plot)
    return ap


def run_cli(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except _CliError as exc:
        print(f"hbg {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except HbgError as exc:
        print(f"hbg {args.command}: error: {exc}", file=sys.stderr)
        return MODEL_ERROR


def main(argv=None) -> int:
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
