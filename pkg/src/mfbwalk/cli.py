"""Command-line front end.

Subcommands: visits, absorb-dist, reach, mean-time, barrier-time, simulate,
verify.  Reports go to stdout as JSON (default) or CSV with a fixed column
order; diagnostics go to stderr.  Exit codes: 0 success, 2 invalid model or
inapplicable closed form, 3 verify found a discrepancy beyond tolerance,
64 usage error, 66 model or golden file not found.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings

from . import absorption_engine as ae
from . import oracle
from . import visit_engine as ve
from .errors import (
    BalancedUnsupported,
    ConsistencyFailure,
    FormulaDiscrepancy,
    RejectedParameter,
    StartNotBarrier,
)
from .walk_model import Branch, WalkModel, load_model, validate_model

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DISCREPANCY = 3
EXIT_USAGE = 64
EXIT_NOFILE = 66

VERIFY_COLUMNS = ("quantity", "index", "closed_form", "oracle", "delta",
                  "tolerance", "mode", "status")

# flags whose values may start with "-" (negative numbers, k-ranges)
_DASH_VALUE_FLAGS = {"--window", "--from", "--to", "--i"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _merge_dash_values(argv: list[str]) -> list[str]:
    """Join '--flag -3..3' into '--flag=-3..3' so argparse keeps the value."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if (tok in _DASH_VALUE_FLAGS and nxt is not None
                and nxt.startswith("-") and len(nxt) > 1
                and (nxt[1].isdigit() or nxt[1] == ".")):
            out.append(f"{tok}={nxt}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def _parse_window(text: str) -> tuple[int, int]:
    try:
        lo_s, hi_s = text.split("..")
        lo, hi = int(lo_s), int(hi_s)
    except ValueError:
        raise _UsageError(f"window must look like A..B (got {text!r})")
    if lo > hi:
        raise _UsageError(f"empty window {text!r}")
    return lo, hi


def _parse_steps(text: str) -> tuple[float, ...]:
    try:
        steps = tuple(float(s) for s in text.split(","))
    except ValueError:
        raise _UsageError(f"steps must be comma-separated floats (got {text!r})")
    if len(steps) < 2:
        raise _UsageError("need at least two step sizes")
    return steps


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", metavar="FILE", help="model JSON file "
                   "{p,q,r,p0,q0,r0,s0,N,i0}; exclusive with explicit flags")
    for name in ("p", "q", "r", "p0", "q0", "r0", "s0"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--i0", type=int, default=None)


def _add_output_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", choices=("json", "csv"), default="json")


def build_parser() -> _Parser:
    parser = _Parser(prog="mfbwalk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("visits", help="expected arrivals per site")
    _add_model_flags(sp)
    _add_output_flag(sp)
    sp.add_argument("--window", default="-3..3", metavar="A..B",
                    help="barrier index range (default -3..3)")

    sp = sub.add_parser("absorb-dist", help="absorption mass per barrier")
    _add_model_flags(sp)
    _add_output_flag(sp)
    sp.add_argument("--window", default="-3..3", metavar="A..B")

    sp = sub.add_parser("reach", help="probability of reaching a site")
    _add_model_flags(sp)
    _add_output_flag(sp)
    sp.add_argument("--from", dest="src", type=int, required=True)
    sp.add_argument("--to", dest="dst", type=int, required=True)

    sp = sub.add_parser("mean-time", help="mean absorption time per start site")
    _add_model_flags(sp)
    _add_output_flag(sp)
    sp.add_argument("--i", type=int, default=None,
                    help="single start site (default: one full period)")

    sp = sub.add_parser("barrier-time",
                        help="mean time split per absorbing barrier (drift, i0=0)")
    _add_model_flags(sp)
    _add_output_flag(sp)
    sp.add_argument("--window", default="-3..3", metavar="A..B")

    sp = sub.add_parser("simulate", help="seeded Monte-Carlo estimates")
    _add_model_flags(sp)
    _add_output_flag(sp)
    sp.add_argument("--walks", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--step-cap", type=int, default=None)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--window", default=None, metavar="A..B",
                    help="site window for visit means (default -3N..3N)")

    sp = sub.add_parser("verify",
                        help="closed forms vs oracles; golden file upkeep")
    _add_model_flags(sp)
    _add_output_flag(sp)
    sp.add_argument("--window", default="-3..3", metavar="A..B")
    sp.add_argument("--walks", type=int, default=0,
                    help="Monte-Carlo walks (0 skips simulation)")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--K", type=int, default=None, help="truncation override")
    sp.add_argument("--steps", default="1e-4,5e-5,2.5e-5,1.25e-5",
                    help="difference steps for the derivative oracle")
    sp.add_argument("--golden", metavar="FILE",
                    help="golden record file to diff (or write with --bless)")
    sp.add_argument("--bless", action="store_true",
                    help="regenerate the golden file from the oracles")
    sp.add_argument("--strict-formulas", action="store_true",
                    help="exit 3 if any display-form discrepancy is recorded")
    return parser


def _model_from_args(args) -> WalkModel:
    flags = {name: getattr(args, name)
             for name in ("p", "q", "r", "p0", "q0", "r0", "s0", "N", "i0")
             if getattr(args, name) is not None}
    if args.model and flags:
        raise _UsageError("give either --model FILE or explicit parameter "
                          "flags, not both")
    if args.model:
        return load_model(args.model)
    if not flags:
        raise _UsageError("no model given; use --model FILE or parameter flags")
    return validate_model(flags)


def _emit_json(obj) -> None:
    json.dump(obj, sys.stdout, indent=1)
    sys.stdout.write("\n")


def _emit_csv(rows: list[dict], columns: tuple[str, ...]) -> None:
    writer = csv.writer(sys.stdout)
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if row.get(c) is None else row.get(c)
                         for c in columns])


# ---------------------------------------------------------------------------
# subcommands

def _cmd_visits(model, args) -> int:
    lo, hi = _parse_window(args.window)
    profile = ve.visit_profile(model, lo, hi)
    rows = []
    for site in sorted(profile.values):
        mass = (model.s0 * profile.values[site]
                if site % model.N == 0 else None)
        rows.append({"site": site, "x": profile.values[site],
                     "absorption_mass": mass})
    if args.output == "csv":
        _emit_csv(rows, ("site", "x", "absorption_mass"))
    else:
        _emit_json({"model": model.to_dict(), "quantity": "visits",
                    "window": [lo, hi], "rows": rows})
    return EXIT_OK


def _cmd_absorb_dist(model, args) -> int:
    lo, hi = _parse_window(args.window)
    rows = [{"k": k, "site": k * model.N,
             "absorption_mass": ve.absorption_mass(model, k)}
            for k in range(lo, hi + 1)]
    total = ve.total_absorption(model)
    if args.output == "csv":
        _emit_csv(rows, ("k", "site", "absorption_mass"))
    else:
        _emit_json({"model": model.to_dict(), "quantity": "absorb-dist",
                    "window": [lo, hi], "rows": rows, "total": total})
    return EXIT_OK


def _cmd_reach(model, args) -> int:
    prob = ve.reach_probability(model, args.src, args.dst)
    if args.output == "csv":
        _emit_csv([{"from": args.src, "to": args.dst, "probability": prob}],
                  ("from", "to", "probability"))
    else:
        _emit_json({"model": model.to_dict(), "quantity": "reach",
                    "from": args.src, "to": args.dst, "probability": prob})
    return EXIT_OK


def _cmd_mean_time(model, args) -> int:
    indices = [args.i] if args.i is not None else list(range(model.N + 1))
    rows = [{"i": i, "mean_time": ae.mean_time_any(model, i)} for i in indices]
    if args.output == "csv":
        _emit_csv(rows, ("i", "mean_time"))
    else:
        _emit_json({"model": model.to_dict(), "quantity": "mean-time",
                    "rows": rows})
    return EXIT_OK


def _cmd_barrier_time(model, args) -> int:
    lo, hi = _parse_window(args.window)
    rows = [{"k": k, "site": k * model.N,
             "mean_time": ae.mean_time_to_barrier(model, k)}
            for k in range(lo, hi + 1)]
    if args.output == "csv":
        _emit_csv(rows, ("k", "site", "mean_time"))
    else:
        _emit_json({"model": model.to_dict(), "quantity": "barrier-time",
                    "window": [lo, hi], "rows": rows})
    return EXIT_OK


def _cmd_simulate(model, args) -> int:
    window = _parse_window(args.window) if args.window else None
    stats = oracle.simulate(model, walks=args.walks, seed=args.seed,
                            step_cap=args.step_cap, workers=args.workers,
                            window=window)
    if args.output == "csv":
        rows = [{"kind": "mean_steps", "index": "", "value": stats.mean_steps,
                 "se": stats.mean_steps_se}]
        rows += [{"kind": "absorption_frequency", "index": k, "value": f,
                  "se": ""} for k, f in stats.absorption_hist.items()]
        rows += [{"kind": "visit_mean", "index": site, "value": m, "se": s}
                 for site, (m, s) in stats.visit_means.items()]
        _emit_csv(rows, ("kind", "index", "value", "se"))
    else:
        _emit_json({
            "model": model.to_dict(), "quantity": "simulate",
            "walks": stats.walks, "seed": stats.seed,
            "step_cap": stats.step_cap,
            "mean_steps": stats.mean_steps,
            "mean_steps_se": stats.mean_steps_se,
            "absorbed": stats.absorbed, "censored": stats.censored,
            "absorption_hist": {str(k): v
                                for k, v in stats.absorption_hist.items()},
            "visit_means": {str(site): list(ms)
                            for site, ms in stats.visit_means.items()},
        })
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

def _row(quantity, index, closed, reference, tol, mode) -> dict:
    if mode == "rel":
        delta = abs(closed - reference) / max(abs(reference), 1e-30)
    else:
        delta = abs(closed - reference)
    return {"quantity": quantity, "index": index, "closed_form": closed,
            "oracle": reference, "delta": delta, "tolerance": tol,
            "mode": mode, "status": "pass" if delta <= tol else "fail"}


def _verify_rows(model: WalkModel, window: tuple[int, int], K, steps,
                 walks: int, seed: int) -> list[dict]:
    lo, hi = window
    rows = [_row("total_absorption", "", ve.total_absorption(model), 1.0,
                 1e-10, "abs")]

    tv = oracle.truncated_visits(model, K=K)
    rows.append(_row("conservation", "", tv.absorbed_mass + tv.leak, 1.0,
                     1e-10, "abs"))
    for j in range(lo * model.N, hi * model.N + 1):
        rows.append(_row("site_visits", j, ve.site_visits(model, j),
                         tv.values[j], 1e-8, "rel"))

    periodic = oracle.periodic_mean_times(model)
    for i in range(model.N + 1):
        rows.append(_row("mean_time_any", i, ae.mean_time_any(model, i),
                         float(periodic[i]), 1e-10, "rel"))

    for k in range(lo, hi + 1):
        rows.append(_row("barrier_recurrence_residual", k,
                         ve.barrier_recurrence_residual(model, k), 0.0,
                         1e-10, "abs"))
    for j in range(lo * model.N + 1, hi * model.N):
        rows.append(_row("occupancy_residual", j,
                         ve.occupancy_residual(model, j), 0.0, 1e-10, "abs"))

    if model.branch is Branch.DRIFT and model.i0 == 0:
        profile = oracle.gf_derivative_profile(model, range(-5, 6),
                                               steps=steps, K=K)
        for k, gd in sorted(profile.items()):
            rows.append(_row("mean_time_to_barrier", k,
                             ae.mean_time_to_barrier(model, k), gd.value,
                             1e-6, "rel"))

    if walks > 0:
        stats = oracle.simulate(model, walks=walks, seed=seed)
        m_start = ae.mean_time_any(model, model.i0)
        rows.append(_row("mc_mean_steps", "", m_start, stats.mean_steps,
                         4.0 * stats.mean_steps_se, "abs"))
        for k in range(-2, 3):
            freq = stats.absorption_hist.get(k, 0.0)
            se = math.sqrt(max(freq * (1.0 - freq), 1.0 / walks) / walks)
            rows.append(_row("mc_absorption_frequency", k,
                             ve.absorption_mass(model, k), freq,
                             4.0 * se, "abs"))
    return rows


def _regenerate_record(rec: dict) -> float:
    """Recompute a golden record's value with its stored oracle and params."""
    model = validate_model(rec["model"])
    params = rec.get("params", {})
    which = rec["oracle"]
    if which == "truncated_solver":
        tv = oracle.truncated_visits(model, K=params.get("K"))
        return tv.values[rec["index"]]
    if which == "periodic_solve":
        return float(oracle.periodic_mean_times(model)[rec["index"]])
    if which == "gf_derivative":
        gd = oracle.gf_derivative(model, rec["index"],
                                  steps=params.get("steps", oracle.DEFAULT_STEPS),
                                  K=params.get("K"))
        return gd.value
    if which == "simulate":
        stats = oracle.simulate(model, walks=params["walks"],
                                seed=params["seed"],
                                step_cap=params.get("step_cap"))
        if rec["quantity"] == "mean_steps":
            return stats.mean_steps
        return stats.absorption_hist.get(rec["index"], 0.0)
    raise _UsageError(f"unknown oracle {which!r} in golden record")


def _cmd_verify(model, args) -> int:
    window = _parse_window(args.window)
    steps = _parse_steps(args.steps)

    if args.bless:
        if not args.golden:
            raise _UsageError("--bless requires --golden FILE")
        records = oracle.oracle_battery(model, window=max(abs(window[0]),
                                                          abs(window[1])),
                                        K=args.K, steps=steps,
                                        walks=args.walks, seed=args.seed)
        oracle.write_golden(args.golden, records)
        print(f"blessed {len(records)} golden records -> {args.golden}",
              file=sys.stderr)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = _verify_rows(model, window, args.K, steps, args.walks,
                            args.seed)
    discrepancies = [str(w.message) for w in caught
                     if isinstance(w.message, (FormulaDiscrepancy,
                                               ConsistencyFailure))]
    for note in dict.fromkeys(discrepancies):
        print(f"FormulaDiscrepancy: {note}", file=sys.stderr)

    golden_mismatches = []
    if args.golden and not args.bless:
        for rec in oracle.read_golden(args.golden):
            fresh = _regenerate_record(rec)
            bound = max(rec.get("error_bound", 0.0), 1e-12)
            if abs(fresh - rec["value"]) > bound:
                golden_mismatches.append(
                    {"quantity": rec["quantity"], "index": rec["index"],
                     "stored": rec["value"], "fresh": fresh,
                     "error_bound": bound})
        for miss in golden_mismatches:
            print(f"golden mismatch: {miss}", file=sys.stderr)

    failed = [r for r in rows if r["status"] == "fail"]
    ok = not failed and not golden_mismatches
    if args.output == "csv":
        _emit_csv(rows, VERIFY_COLUMNS)
    else:
        _emit_json({"model": model.to_dict(), "quantity": "verify",
                    "rows": rows,
                    "formula_discrepancies": list(dict.fromkeys(discrepancies)),
                    "golden_mismatches": golden_mismatches, "ok": ok})
    if not ok:
        return EXIT_DISCREPANCY
    if args.strict_formulas and discrepancies:
        return EXIT_DISCREPANCY
    return EXIT_OK


_DISPATCH = {
    "visits": _cmd_visits,
    "absorb-dist": _cmd_absorb_dist,
    "reach": _cmd_reach,
    "mean-time": _cmd_mean_time,
    "barrier-time": _cmd_barrier_time,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(_merge_dash_values(list(argv)))
        model = _model_from_args(args)
        return _DISPATCH[args.command](model, args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_NOFILE
    except (RejectedParameter, BalancedUnsupported, StartNotBarrier) as exc:
        print(f"invalid model: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"invalid request: {exc}", file=sys.stderr)
        return EXIT_INVALID


def entrypoint() -> None:
    sys.exit(main())
