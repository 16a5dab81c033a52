"""Command-line front end.

Every command writes a ``teamdp-report/1`` JSON document (to ``--report`` or
stdout). Reports are byte-identical across reruns with the same inputs; the
wall time is only included with ``--timing``.

Exit codes: 0 success, 1 usage, 2 invalid model or design, 3 budget
exceeded, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

from . import oracle, serialize, witsenhausen
from .errors import (
    BudgetExceeded,
    InvariantViolation,
    MissingControllerEntry,
    ModelParseError,
    ModelValidationError,
    TeamDPError,
    ZeroProbabilityOutput,
)
from .model import load_spec, validate
from .sim import HistoryDesign, SimConfig, simulate
from .solver_finite import DEFAULT_BUDGET, evaluate_design, solve_finite, stage_costs
from .solver_infinite import (
    DiscountConfig,
    StationaryDesign,
    eval_average_stationary,
    eval_discounted_stationary,
    search_stationary_discounted,
    solve_discounted,
)

EXIT_USAGE, EXIT_INVALID, EXIT_BUDGET, EXIT_INTERNAL = 1, 2, 3, 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(v):
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def _threads_default():
    env = os.environ.get("TEAMDP_THREADS")
    if env is None:
        return 1
    try:
        return _positive_int(env)
    except (ValueError, argparse.ArgumentTypeError):
        raise _UsageError(f"TEAMDP_THREADS must be a positive integer, got {env!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="teamdp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, model=True):
        if model:
            sp.add_argument("model", help="model file (teamdp/1 JSON)")
        sp.add_argument("--report", help="write the report here instead of stdout")
        sp.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: $TEAMDP_THREADS or 1)")
        sp.add_argument("--timing", action="store_true", help="record wall time in the manifest")

    def budget(sp):
        sp.add_argument("--budget", type=_positive_int, default=DEFAULT_BUDGET,
                        help="combinatorial budget (default %(default)s)")

    def discount(sp, required=True):
        sp.add_argument("--beta", type=float, required=required)
        sp.add_argument("--epsilon", type=float, required=required)

    sp = sub.add_parser("validate", help="check a model file")
    sp.add_argument("model")

    sp = sub.add_parser("solve-finite", help="optimal finite-horizon design")
    common(sp)
    budget(sp)
    sp.add_argument("--horizon", type=_positive_int, required=True)
    sp.add_argument("--out", help="write the design here")

    sp = sub.add_parser("solve-discounted", help="eps-optimal discounted value by truncation")
    common(sp)
    budget(sp)
    discount(sp)
    sp.add_argument("--out")

    sp = sub.add_parser("search-stationary", help="best stationary design for the discounted cost")
    common(sp)
    budget(sp)
    discount(sp)
    sp.add_argument("--exhaustive-cap", type=int, default=12)
    sp.add_argument("--reference", action="store_true",
                    help="also solve the truncated problem and report the bound gap")
    sp.add_argument("--out")

    sp = sub.add_parser("eval", help="evaluate a design")
    common(sp)
    sp.add_argument("--design", required=True)
    sp.add_argument("--horizon", type=_positive_int)
    discount(sp, required=False)
    sp.add_argument("--average", action="store_true")
    sp.add_argument("--tmax", type=_positive_int, default=1000)
    sp.add_argument("--window", type=float, default=0.1)
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.add_argument("--csv", help="write the running averages here (with --average)")

    sp = sub.add_parser("simulate", help="Monte Carlo simulation of a design")
    common(sp)
    sp.add_argument("--design", required=True)
    sp.add_argument("--horizon", type=_positive_int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--runs", type=_positive_int, required=True)
    sp.add_argument("--traces", help="write per-step records to this CSV")
    sp.add_argument("--trace-runs", type=int, default=None,
                    help="number of runs to trace (default: all, when --traces is given)")

    sp = sub.add_parser("oracle", help="brute-force optimum over history-based designs")
    common(sp)
    budget(sp)
    sp.add_argument("--horizon", type=_positive_int, required=True)
    sp.add_argument("--exhaustive", action="store_true", help="enumerate controller tables literally")
    sp.add_argument("--out")

    sp = sub.add_parser("witsenhausen", help="discrete two-stage problem (teamdp-w2/1)")
    common(sp)
    sp.add_argument("--budget", type=_positive_int, default=witsenhausen.DEFAULT_BUDGET)
    sp.add_argument("--check", action="store_true", help="also run the joint brute force")
    return p


def _emit_report(args, doc):
    text = serialize.dumps(doc)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _config(args, *names):
    return {n: getattr(args, n) for n in names}


def _design_summary(design):
    if isinstance(design, StationaryDesign):
        return {"kind": "stationary", "controller_entries": len(design.controller)}
    if isinstance(design, HistoryDesign):
        return {"kind": "history", "horizon": len(design.encoders)}
    return {"kind": "finite", "horizon": design.horizon,
            "controller_entries": [len(g) for g in design.controllers]}


def _finish(args, command, config, inputs, result, started, design=None):
    wall = time.perf_counter() - started if args.timing else None
    manifest = serialize.make_manifest(command, config, inputs, wall_time=wall)
    if design is not None and getattr(args, "out", None):
        serialize.dump(serialize.design_to_dict(design, manifest), args.out)
    _emit_report(args, serialize.report_document(manifest, result))
    return 0


def _schema_of(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError:
        return None  # reported by the model loader
    return doc.get("schema") if isinstance(doc, dict) else None


def cmd_validate(args):
    if _schema_of(args.model) == witsenhausen.SCHEMA:
        try:
            witsenhausen.load_two_stage(args.model)
            bad = []
        except ModelValidationError as exc:
            bad = exc.violations
    else:
        bad = validate(load_spec(args.model, validate_model=False))
    for v in bad:
        sys.stderr.write(json.dumps({"code": v.code, "message": v.message, "where": v.where}) + "\n")
    return EXIT_INVALID if bad else 0


def cmd_solve_finite(args, spec, inputs, started):
    rep = solve_finite(spec, args.horizon, budget=args.budget)
    result = {"value": rep.value, "horizon": rep.horizon, "stage_costs": stage_costs(spec, rep.design),
              "reachable_beliefs": rep.reachable_beliefs, "explored": rep.explored,
              "memo_entries": rep.memo_entries, "design": _design_summary(rep.design)}
    return _finish(args, "solve-finite", _config(args, "horizon", "budget"), inputs, result, started, rep.design)


def _discount_config(spec, args):
    try:
        return DiscountConfig.for_model(spec, args.beta, args.epsilon)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None


def cmd_solve_discounted(args, spec, inputs, started):
    cfg = _discount_config(spec, args)
    res = solve_discounted(spec, cfg, budget=args.budget)
    result = {"value": res.value, "error_bound": res.error_bound, "truncation_horizon": res.horizon,
              "explored": res.report.explored, "design": _design_summary(res.design)}
    return _finish(args, "solve-discounted", _config(args, "beta", "epsilon", "budget"), inputs, result,
                   started, res.design)


def cmd_search_stationary(args, spec, inputs, started):
    cfg = _discount_config(spec, args)
    reference = solve_discounted(spec, cfg, budget=args.budget).value if args.reference else None
    res = search_stationary_discounted(spec, cfg, budget=args.budget, exhaustive_cap=args.exhaustive_cap,
                                       reference=reference)
    result = {"value": res.value, "error_bound": res.error_bound, "truncation_horizon": res.horizon,
              "local_search": res.local_search, "reference_value": reference, "bound_gap": res.bound_gap,
              "design": _design_summary(res.design)}
    config = _config(args, "beta", "epsilon", "budget", "exhaustive_cap", "reference")
    return _finish(args, "search-stationary", config, inputs, result, started, res.design)


def cmd_eval(args, spec, inputs, started):
    design = serialize.load_design(args.design, spec)
    inputs["design_sha256"] = serialize.sha256_file(args.design)
    config = _config(args, "horizon", "beta", "epsilon", "average", "tmax", "window", "tol")
    if args.average:
        if not isinstance(design, StationaryDesign):
            raise _UsageError("--average needs a stationary design")
        rep = eval_average_stationary(spec, design, args.tmax, args.window, args.tol)
        if args.csv:
            with open(args.csv, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["T", "stage_cost", "average"])
                for t, (c, a) in enumerate(zip(rep.stage_costs, rep.averages), start=1):
                    w.writerow([t, format(c, ".17g"), format(a, ".17g")])
        result = {"criterion": "average", "limsup_estimate": rep.limsup_estimate,
                  "oscillation": rep.oscillation, "converged": rep.converged,
                  "final_average": float(rep.averages[-1])}
    elif isinstance(design, StationaryDesign):
        if args.beta is None or args.epsilon is None:
            raise _UsageError("a stationary design needs --beta and --epsilon (or --average)")
        res = eval_discounted_stationary(spec, design, _discount_config(spec, args))
        result = {"criterion": "discounted", "value": res.value, "error_bound": res.error_bound,
                  "truncation_horizon": res.horizon}
    elif isinstance(design, HistoryDesign):
        T = args.horizon or len(design.encoders)
        value = oracle.history_controller_value(spec, design.encoders, design.memories, design.controllers, T)
        result = {"criterion": "total", "value": value, "horizon": T}
    else:
        T = args.horizon or design.horizon
        if args.beta is not None:
            value = evaluate_design(spec, design, T, beta=args.beta)
            result = {"criterion": "discounted", "value": value, "horizon": T}
        else:
            costs = stage_costs(spec, design, T)
            result = {"criterion": "total", "value": evaluate_design(spec, design, T), "horizon": T,
                      "stage_costs": costs}
    return _finish(args, "eval", config, inputs, result, started)


def cmd_simulate(args, spec, inputs, started, threads):
    design = serialize.load_design(args.design, spec)
    inputs["design_sha256"] = serialize.sha256_file(args.design)
    trace_runs = 0
    if args.traces:
        trace_runs = args.runs if args.trace_runs is None else args.trace_runs
    cfg = SimConfig(args.seed, args.runs, args.horizon, threads=threads, trace_runs=trace_runs)
    res = simulate(spec, design, cfg)
    if args.traces:
        res.write_traces(args.traces)
    result = {"mean": res.mean, "std": res.std, "stderr": res.std / res.n_runs ** 0.5, "runs": res.n_runs}
    config = _config(args, "horizon", "seed", "runs")
    config["trace_runs"] = trace_runs
    return _finish(args, "simulate", config, inputs, result, started)


def cmd_oracle(args, spec, inputs, started):
    res = oracle.brute_force_value(spec, args.horizon, budget=args.budget, exhaustive=args.exhaustive)
    design = HistoryDesign.from_oracle(res)
    result = {"value": res.value, "horizon": args.horizon, "design": _design_summary(design)}
    return _finish(args, "oracle", _config(args, "horizon", "budget", "exhaustive"), inputs, result,
                   started, design)


def cmd_witsenhausen(args, inputs, started):
    ts = witsenhausen.load_two_stage(args.model)
    res = witsenhausen.solve_two_stage_nested(ts, budget=args.budget)
    result = {"value": res.value, "g1": list(res.g1), "g2": list(res.g2), "evaluations": res.evaluations}
    if args.check:
        brute = witsenhausen.solve_two_stage_bruteforce(ts, budget=args.budget)
        result["bruteforce_value"] = brute.value
        result["difference"] = abs(brute.value - res.value)
    return _finish(args, "witsenhausen", _config(args, "budget", "check"), inputs, result, started)


def _dispatch(args):
    started = time.perf_counter()
    if args.command == "validate":
        return cmd_validate(args)
    threads = args.threads if args.threads is not None else _threads_default()
    inputs = {"model_sha256": serialize.sha256_file(args.model)}
    if args.command == "witsenhausen":
        return cmd_witsenhausen(args, inputs, started)
    spec = load_spec(args.model)
    if args.command == "simulate":
        return cmd_simulate(args, spec, inputs, started, threads)
    handler = {"solve-finite": cmd_solve_finite, "solve-discounted": cmd_solve_discounted,
               "search-stationary": cmd_search_stationary, "eval": cmd_eval, "oracle": cmd_oracle}
    return handler[args.command](args, spec, inputs, started)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except _UsageError as exc:
        sys.stderr.write(f"teamdp: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"teamdp: error: {exc}\n")
        return EXIT_USAGE
    except (ModelParseError, ModelValidationError, MissingControllerEntry, ZeroProbabilityOutput) as exc:
        sys.stderr.write(f"teamdp: invalid input: {exc}\n")
        return EXIT_INVALID
    except BudgetExceeded as exc:
        sys.stderr.write(f"teamdp: budget exceeded: {exc}\n")
        return EXIT_BUDGET
    except (InvariantViolation, TeamDPError) as exc:
        sys.stderr.write(f"teamdp: internal error: {exc}\n")
        return EXIT_INTERNAL
