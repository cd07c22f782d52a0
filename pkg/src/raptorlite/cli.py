"""Command-line driver: sweeps, co-design estimates, flag heatmaps, selftest.

Subcommands:

    sweep     run a workload over a mantissa/cutoff grid, emit CSV/JSON
    codesign  append speedup estimates and a roofline verdict to a report
    flags     pretty-print a mem-mode flag dump as a location heatmap
    selftest  exhaustive small-format oracle check of the soft-float core

The environment variable RAPTOR_LITE_TRUNCATE overrides any --spec or
--spec-template selection with a single truncation spec in the same
grammar.  Workload parameters may also come from a plain-text config file
(``--config``) with ``key = value`` lines; explicit flags win over the
file.  Documented keys: cells, t_end, cfl, fixed_dt, levels, n, steps.
All outputs are deterministic for fixed flags; wall-clock times appear in
reports only with --include-wall.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass

from . import codesign, oracle, profiler
from . import softfloat as sf
from .memmode import dump_flags
from .scope import ENV_SPEC_OVERRIDE, Session, SpecError, TruncSpec, parse_spec
from .softfloat import FloatFormat
from .workloads import eos, sod, stencil

FLAGS_SCHEMA_VERSION = 1

CONFIG_KEYS = {
    "cells": int,
    "t_end": float,
    "cfl": float,
    "fixed_dt": lambda s: s.lower() in ("1", "true", "yes", "on"),
    "levels": int,
    "n": int,
    "steps": int,
}


class UsageError(ValueError):
    pass


@dataclass
class SweepPlan:
    """One resolved sweep: workload, mode, format grid and run parameters."""

    workload: str
    mode: str
    points: list  # (TruncSpec, mantissa) pairs
    cutoffs: list
    threshold: float
    out: str
    seed: int = 0
    cells: int = 400
    t_end: float = 0.2
    cfl: float = 0.8
    max_levels: int = 4
    adaptive_dt: bool = False
    n: int = 128
    steps: int = 200
    tol: float = eos.DEFAULT_TOL
    max_iter: int = eos.DEFAULT_MAX_ITER

    def __post_init__(self):
        if not self.points:
            raise UsageError("sweep needs at least one mantissa/spec point")
        for _, m in self.points:
            if not (sf.MIN_MAN_BITS <= m <= sf.MAX_MAN_BITS):
                raise UsageError("mantissa %d outside [%d, %d]"
                                 % (m, sf.MIN_MAN_BITS, sf.MAX_MAN_BITS))


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise UsageError("expected a comma-separated integer list, got %r" % text)


def load_config(path: str) -> dict:
    """Plain-text ``key = value`` workload parameters; '#' starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError("%s:%d: expected key = value" % (path, lineno))
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise UsageError("%s:%d: unknown key %r (known: %s)"
                                 % (path, lineno, key, ", ".join(sorted(CONFIG_KEYS))))
            values[key] = CONFIG_KEYS[key](value.strip())
    return values


def _build_specs(args) -> list[tuple[TruncSpec, int]]:
    """Resolve (spec, mantissa) sweep points from flags and the env override."""
    env = os.environ.get(ENV_SPEC_OVERRIDE)
    if env:
        spec = parse_spec(env)
        fmt = spec.for_width(64)
        return [(spec, fmt.man_bits if fmt else 52)]
    if args.spec:
        spec = parse_spec(args.spec)
        fmt = spec.for_width(64)
        return [(spec, fmt.man_bits if fmt else 52)]
    if not args.mantissas:
        raise UsageError("--spec-template requires --mantissas")
    points = []
    for m in args.mantissas:
        text = args.spec_template.replace("M", str(m))
        points.append((parse_spec(text), m))
    return points


def _resolve(args, config, key, default):
    flag = getattr(args, key if key not in ("levels",) else "max_levels", None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def build_plan(args) -> SweepPlan:
    points = _build_specs(args)
    config = load_config(args.config) if args.config else {}
    adaptive = args.adaptive_dt
    if not adaptive and "fixed_dt" in config:
        adaptive = not config["fixed_dt"]
    return SweepPlan(
        workload=args.workload,
        mode=args.mode,
        points=points,
        cutoffs=args.cutoffs if args.workload != "eos" else [0],
        threshold=args.threshold,
        out=args.out,
        seed=args.seed,
        cells=_resolve(args, config, "cells", 400),
        t_end=_resolve(args, config, "t_end", 0.2),
        cfl=_resolve(args, config, "cfl", 0.8),
        max_levels=_resolve(args, config, "levels", 4),
        adaptive_dt=adaptive,
        n=_resolve(args, config, "n", 128),
        steps=_resolve(args, config, "steps", 200),
        tol=args.tol,
        max_iter=args.max_iter,
    )


def cmd_sweep(args) -> int:
    try:
        plan = build_plan(args)
    except (SpecError, UsageError, OSError) as exc:
        print("sweep: %s" % exc, file=sys.stderr)
        return 2

    records = []
    flag_runs = []
    failed = False

    baseline = None
    eos_case = eos.EOSCase(tol=plan.tol, max_iter=plan.max_iter)
    native_root = None
    if plan.workload == "sod":
        params = sod.SodParams(cells=plan.cells, t_end=plan.t_end, cfl=plan.cfl,
                               max_levels=plan.max_levels,
                               adaptive_dt=plan.adaptive_dt,
                               threshold=plan.threshold)
        baseline = sod.run_native(params)
    elif plan.workload == "stencil":
        baseline = stencil.run_native(plan.n, plan.steps, max_levels=plan.max_levels)
    else:
        native_root, _, ok = eos.eos_solve(eos_case.target, eos_case.table, None,
                                           Session("native"), mode="native",
                                           y=eos_case.y, tol=eos_case.tol,
                                           max_iter=eos_case.max_iter)
        if not ok:
            print("sweep: full-precision EOS solve failed", file=sys.stderr)
            return 1

    for spec, mantissa in plan.points:
        for cutoff in plan.cutoffs:
            session = Session("sweep-m%d-l%d" % (mantissa, cutoff))
            try:
                if plan.workload == "sod":
                    _, _, rec = sod.sod_run(plan.cells, plan.t_end, spec, cutoff,
                                            session, mode=plan.mode, params=params,
                                            baseline=baseline)
                elif plan.workload == "stencil":
                    _, rec = stencil.stencil_run(plan.n, plan.steps, spec, cutoff,
                                                 session, mode=plan.mode,
                                                 max_levels=plan.max_levels,
                                                 threshold=plan.threshold,
                                                 baseline=baseline)
                else:
                    _, rec = eos.eos_run(spec, session, mode=plan.mode,
                                         case=eos_case, native_root=native_root)
            except Exception as exc:  # noqa: BLE001 - partial report on failure
                print("sweep: point m=%d l=%d failed: %s" % (mantissa, cutoff, exc),
                      file=sys.stderr)
                failed = True
                continue
            records.append(rec)
            if plan.mode == "mem":
                flag_runs.append({
                    "spec": spec.serialize(),
                    "cutoff_l": cutoff,
                    "entries": [
                        {"location": loc, "count": count,
                         "max_deviation": dev, "first_seen": first}
                        for loc, count, dev, first in dump_flags(session)
                    ],
                })

    profiler.write_csv(records, plan.out, include_wall=args.include_wall)
    if args.json_out:
        profiler.write_json(records, args.json_out, include_wall=args.include_wall)
    if plan.mode == "mem":
        dump = {"schema_version": FLAGS_SCHEMA_VERSION, "mode": plan.mode,
                "threshold": plan.threshold, "runs": flag_runs}
        with open(plan.out + ".flags.json", "w", encoding="utf-8") as fh:
            json.dump(dump, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print("wrote %d record(s) to %s" % (len(records), plan.out))
    return 1 if failed else 0


def cmd_codesign(args) -> int:
    try:
        rows = profiler.read_csv(args.report)
    except profiler.ReportSchemaError as exc:
        print("codesign: %s" % exc, file=sys.stderr)
        return 2
    ratio = _parse_ratio(args.compute_ratio)
    out_rows = []
    for row in rows:
        try:
            fmt = FloatFormat(int(row["exp_bits"]), int(row["mantissa_bits"]))
            n_low = float(row["truncated_flops"])
            n_dbl = float(row["full_flops"])
            b_low = float(row["truncated_bytes"])
            b_dbl = float(row["full_bytes"])
        except (KeyError, ValueError) as exc:
            print("codesign: report row missing counters: %s" % exc, file=sys.stderr)
            return 2
        model = codesign.build_machine(fmt, bandwidth=args.bandwidth * 1e9,
                                       compute_ratio=ratio, total_kge=args.total_kge)
        est = codesign.estimate(n_dbl, n_low, b_dbl, b_low, model)
        row = dict(row)
        row["speedup_compute"] = repr(est.speedup_compute)
        row["speedup_memory"] = repr(est.speedup_memory)
        row["bound_class"] = est.bound_class
        row["fit_slope"] = repr(est.fit_slope)
        row["fit_intercept"] = repr(est.fit_intercept)
        out_rows.append(row)

    out_path = args.out or args.report
    columns = profiler.CSV_COLUMNS + ["speedup_compute", "speedup_memory",
                                      "bound_class", "fit_slope", "fit_intercept"]
    import csv as _csv
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# schema=%d norm=%s\n" % (profiler.SCHEMA_VERSION, profiler.NORM_NAME))
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in out_rows:
            writer.writerow([row.get(c, "") for c in columns])
    verdicts = sorted({r["bound_class"] for r in out_rows})
    print("codesign: %d row(s), bound class(es): %s" % (len(out_rows), ", ".join(verdicts) or "none"))
    return 0


def _parse_ratio(text: str):
    parts = text.split(":")
    if len(parts) != 2:
        raise UsageError("--compute-ratio must look like 1:2, got %r" % text)
    return float(parts[0]), float(parts[1])


def cmd_flags(args) -> int:
    with open(args.dump, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("mode") != "mem":
        print("flags: %s is not a mem-mode dump (mode=%r)" % (args.dump, obj.get("mode")),
              file=sys.stderr)
        return 2
    any_entries = False
    for run in obj.get("runs", []):
        entries = run.get("entries", [])
        if not entries:
            continue
        any_entries = True
        print("spec %s cutoff l=%s" % (run.get("spec"), run.get("cutoff_l")))
        for e in entries:
            print("  %8d  max_dev=%-12.6g  first=%-8d %s"
                  % (e["count"], e["max_deviation"], e["first_seen"], e["location"]))
    if not any_entries:
        print("no flagged locations")
    return 0


def cmd_selftest(args) -> int:
    total = mismatches = 0
    started = time.perf_counter()
    for exp_bits in range(2, args.max_exp + 1):
        for man_bits in range(1, args.max_man + 1):
            fmt = FloatFormat(exp_bits, man_bits)
            vals = list(oracle.enumerate_finite(fmt))
            engine_vals = [_from_triple(t) for (t, _, _, _) in vals]
            fmt_bad = 0
            for op in ("add", "sub", "mul", "div"):
                for i, (_, s_a, n_a, d_a) in enumerate(vals):
                    a = engine_vals[i]
                    for j, (_, s_b, n_b, d_b) in enumerate(vals):
                        want = oracle.rational_op(op, s_a, n_a, d_a, s_b, n_b, d_b, fmt)
                        got = sf.arith(op, a, engine_vals[j], fmt=fmt).rounded._triple()
                        total += 1
                        if got != want:
                            fmt_bad += 1
                            if mismatches + fmt_bad <= 5:
                                print("MISMATCH %s %s: %r vs %r" % (fmt, op, got, want))
            mismatches += fmt_bad
            print("format %s: %d pairs x 4 ops, %d mismatch(es)"
                  % (fmt, len(vals) ** 2, fmt_bad))
    elapsed = time.perf_counter() - started
    print("selftest: %d checks, %d mismatch(es), %.1f s" % (total, mismatches, elapsed))
    return 0 if mismatches == 0 else 1


def _from_triple(t):
    if t[0] == "zero":
        return sf.BigFloat.zero(t[1])
    return sf.BigFloat.finite(t[0], t[1], t[2])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="raptorlite",
                                     description="numerical profiling under reduced precision")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a workload over a mantissa/cutoff grid")
    p.add_argument("--workload", choices=("sod", "stencil", "eos"), required=True)
    p.add_argument("--mode", choices=("op", "mem"), default="op")
    p.add_argument("--spec", help="single truncation spec, e.g. 64_to_5_14;32_to_3_8")
    p.add_argument("--spec-template", default="64_to_11_M",
                   help="spec with M substituted per mantissa (default 64_to_11_M)")
    p.add_argument("--mantissas", type=_int_list, default=None,
                   help="comma-separated mantissa widths, e.g. 4,8,12,23,52")
    p.add_argument("--cutoffs", type=_int_list, default=[0],
                   help="comma-separated level cutoffs l (default 0)")
    p.add_argument("--threshold", type=float, default=1e-6,
                   help="mem-mode deviation threshold (default 1e-6)")
    p.add_argument("--config", help="plain-text key = value workload parameters "
                                    "(keys: %s)" % ", ".join(sorted(CONFIG_KEYS)))
    p.add_argument("--cells", type=int, default=None, help="sod: grid cells (default 400)")
    p.add_argument("--t-end", type=float, default=None, help="sod: end time (default 0.2)")
    p.add_argument("--cfl", type=float, default=None, help="sod: CFL number (default 0.8)")
    p.add_argument("--max-levels", type=int, default=None,
                   help="refinement levels M (default 4)")
    p.add_argument("--adaptive-dt", action="store_true",
                   help="sod: recompute dt from the evolving state")
    p.add_argument("--n", type=int, default=None, help="stencil: grid points (default 128)")
    p.add_argument("--steps", type=int, default=None, help="stencil: timesteps (default 200)")
    p.add_argument("--tol", type=float, default=eos.DEFAULT_TOL, help="eos: tolerance")
    p.add_argument("--max-iter", type=int, default=eos.DEFAULT_MAX_ITER,
                   help="eos: iteration cap")
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--json-out", help="optional JSON report path")
    p.add_argument("--include-wall", action="store_true",
                   help="write real wall-clock times (breaks byte-determinism)")
    p.add_argument("--seed", type=int, default=0,
                   help="reserved; the bundled workloads are deterministic")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("codesign", help="append speedup estimates to a report")
    p.add_argument("--report", required=True, help="input CSV from sweep")
    p.add_argument("--out", help="output CSV (default: rewrite input)")
    p.add_argument("--bandwidth", type=float, default=1024.0,
                   help="memory bandwidth in GB/s (default 1024)")
    p.add_argument("--compute-ratio", default="1:2",
                   help="double:low compute capability ratio (default 1:2)")
    p.add_argument("--total-kge", type=float, default=codesign.DEFAULT_TOTAL_KGE,
                   help="total FPU area in kGE (sets the roofline ceiling)")
    p.set_defaults(func=cmd_codesign)

    p = sub.add_parser("flags", help="print a mem-mode flag dump as a heatmap")
    p.add_argument("--dump", required=True, help="path to <report>.flags.json")
    p.set_defaults(func=cmd_flags)

    p = sub.add_parser("selftest", help="exhaustive small-format oracle check")
    p.add_argument("--max-exp", type=int, default=4)
    p.add_argument("--max-man", type=int, default=4)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SpecError) as exc:
        print("%s: %s" % (args.command, exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
