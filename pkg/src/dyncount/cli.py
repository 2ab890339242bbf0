"""Command-line entry point: ``dyncount sens|bounds|simulate|estimate``.

Exit codes: 0 ok, 2 usage or precondition error, 3 bad input data,
4 budget or feasibility error.  DYNCOUNT_THREADS sets the worker count
for Monte-Carlo trials; results do not depend on it.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
from typing import Optional, Sequence

from .bounds import ReportRow, best_branching, bound_rows
from .errors import BudgetError, DataError, FeasibilityError
from .estimators import EstimatorConfig, GraphStream, ItemStream, estimate
from .factorizations import BaryTree, NaiveFactorization, SquareRootToeplitz
from .mechanisms import PrivacyBudget, analytic_error, empirical_error
from .sensitivity import SensQuery, sensitivity
from .stream_model import SetParams
from .streamfile import read_stream

SIMULATION_T_CAP = 2**22
METHOD_NAMES = {"dp": "exact_dp", "bound": "closed_bound", "brute": "brute_force", "empirical": "empirical"}


def fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def parse_int(text: str) -> int:
    """Integer, or 2^e style power."""
    text = text.strip()
    try:
        if "^" in text:
            base, exp = text.split("^")
            return int(base) ** int(exp)
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def parse_k_list(text: str) -> list[int]:
    """Comma list of integers; ``a..b`` expands to a, 2a, 4a, ... up to b."""
    out = []
    for part in text.split(","):
        if ".." in part:
            lo, hi = (parse_int(x) for x in part.split(".."))
            if lo < 1:
                raise argparse.ArgumentTypeError("range start must be positive")
            while lo <= hi:
                out.append(lo)
                lo *= 2
        else:
            out.append(parse_int(part))
    return out


def threads() -> int:
    raw = os.environ.get("DYNCOUNT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"DYNCOUNT_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError("DYNCOUNT_THREADS must be at least 1")
    return n


def add_factorization_args(p: argparse.ArgumentParser):
    p.add_argument("--fact", choices=("naive", "sqrt", "tree"), required=True)
    p.add_argument("--b", type=int, default=3, help="tree branching factor")
    p.add_argument("--variant", choices=("plain", "plain_reduced", "subtract", "subtract_reduced"),
                   help="tree variant (default: subtract_reduced for odd b, else plain)")


def add_budget_args(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--rho", type=float, help="zCDP parameter (default 0.5)")
    g.add_argument("--eps", type=float, help="pure DP parameter")
    p.add_argument("--delta", type=float, help="report the implied (eps, delta)-DP guarantee")


def make_factorization(args, T: int):
    if args.fact == "naive":
        return NaiveFactorization(T)
    if args.fact == "sqrt":
        return SquareRootToeplitz(T)
    variant = args.variant or ("subtract_reduced" if args.b % 2 == 1 and args.b >= 3 else "plain")
    return BaryTree(args.b, T, variant)


def make_budget(args) -> PrivacyBudget:
    if args.eps is not None:
        if args.delta is not None:
            raise BudgetError("--delta applies to zCDP budgets only")
        return PrivacyBudget.pure(args.eps)
    return PrivacyBudget.zcdp(0.5 if args.rho is None else args.rho, args.delta)


def write_csv(rows: list[list], out):
    writer = csv.writer(out, lineterminator="\n")
    for row in rows:
        writer.writerow([fmt(x) for x in row])


def open_out(path: Optional[str]):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


# ---------------------------------------------------------------------------


def cmd_sens(args) -> int:
    f = make_factorization(args, args.T)
    method = args.method
    if method == "auto":
        method = "dp" if args.fact == "tree" else "bound"
    res = sensitivity(SensQuery(f, args.p, SetParams(args.D, args.k, args.T), METHOD_NAMES[method]))
    out = {"factorization": repr(f)} | res.as_dict()
    print(json.dumps(out))
    return 0


def cmd_bounds(args) -> int:
    budget = make_budget(args)
    b = None if args.b == "opt" else parse_int(args.b)
    rows = bound_rows(args.T, args.k, args.D, budget, b)
    used = b if b is not None else best_branching(budget.kind, "max")[0]
    with open_out(args.output) as out:
        write_csv([list(ReportRow.FIELDS)] + [[getattr(r, name) for name in ReportRow.FIELDS] for r in rows], out)
    print(f"tree branching factor: {used}", file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    if args.T > SIMULATION_T_CAP:
        raise FeasibilityError(f"simulation T is capped at 2^22, got {args.T}")
    if args.trials < 1:
        raise ValueError("--trials must be at least 1")
    f = make_factorization(args, args.T)
    budget = make_budget(args)
    s = SetParams(args.D, args.k, args.T)
    analytic = analytic_error(f, budget, s)
    if args.sigma_zero:
        analytic_max = analytic_mean = 0.0
    else:
        analytic_max, analytic_mean = analytic.max_se, analytic.mean_se
    emp = empirical_error(f, budget, s, args.trials, args.seed, noise_scale=0.0 if args.sigma_zero else None,
                          workers=threads())
    rows = [["mechanism", "T", "k", "D", "budget", "metric", "analytic", "empirical", "rel_dev", "sens_exact"]]
    for metric, a, e in (("max_se", analytic_max, emp.max_se), ("mean_se", analytic_mean, emp.mean_se)):
        dev = abs(e - a) / a if a > 0 else abs(e)
        rows.append([f.label, args.T, args.k, args.D, budget.describe(), metric, a, e, dev, analytic.sens_exact])
    with open_out(args.output) as out:
        write_csv(rows, out)
    return 0


def cmd_estimate(args) -> int:
    stream = read_stream(args.input)
    wants_graph = args.problem in ("degree", "triangles")
    if wants_graph != isinstance(stream, GraphStream):
        kind = "graph" if isinstance(stream, GraphStream) else "item"
        raise DataError(f"problem {args.problem} does not accept a {kind} stream")
    f = make_factorization(args, stream.T)
    cfg = EstimatorConfig(f, make_budget(args), args.k, args.D, args.seed, 0.0 if args.sigma_zero else None)
    run = estimate(args.problem, stream, cfg)
    if isinstance(run.outputs, dict):
        nodes = list(run.outputs)
        header = ["t"] + ([f"true_value_{v}" for v in nodes] if args.with_truth else []) + \
                 [f"private_estimate_{v}" for v in nodes]
        rows = [header]
        for t in range(stream.T):
            truth = [run.truth[v][t] for v in nodes] if args.with_truth else []
            rows.append([t] + truth + [run.outputs[v][t] for v in nodes])
    else:
        rows = [["t"] + (["true_value"] if args.with_truth else []) + ["private_estimate"]]
        for t in range(stream.T):
            rows.append([t] + ([run.truth[t]] if args.with_truth else []) + [run.outputs[t]])
    with open(args.output, "w", encoding="utf-8", newline="") as out:
        write_csv(rows, out)
    log_rows = [["t", "position", "op", "key"]]
    for t, i, u in run.truncation_log:
        key = u.key if isinstance(stream, ItemStream) else f"{u.key[0]}|{u.key[1]}"
        log_rows.append([t, i, u.op, key])
    with open(args.output + ".truncation.csv", "w", encoding="utf-8", newline="") as out:
        write_csv(log_rows, out)
    print(json.dumps({"sensitivity_used": run.sensitivity_used, "sensitivity_exact": run.sensitivity_exact,
                      "privacy": run.privacy_note, "truncated_updates": len(run.truncation_log)}),
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyncount", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sens", help="sensitivity of a factorization over S_{D,k}")
    add_factorization_args(p)
    p.add_argument("--T", type=parse_int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--D", type=int, default=1)
    p.add_argument("--p", type=int, choices=(1, 2), default=2)
    p.add_argument("--method", choices=("auto",) + tuple(METHOD_NAMES), default="auto")
    p.set_defaults(func=cmd_sens)

    p = sub.add_parser("bounds", help="closed-form error bounds per mechanism as CSV")
    p.add_argument("--T", type=parse_int, required=True)
    p.add_argument("--k", type=parse_k_list, required=True, help="e.g. 1,4,16 or 1..2^20")
    p.add_argument("--D", type=int, default=1)
    p.add_argument("--b", default="opt", help="odd tree branching factor, or 'opt'")
    p.add_argument("--output", help="CSV path (default stdout)")
    add_budget_args(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("simulate", help="analytic vs Monte-Carlo error as CSV")
    add_factorization_args(p)
    p.add_argument("--T", type=parse_int, required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--D", type=int, default=1)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-zero", action="store_true", help="test hook: run without noise")
    p.add_argument("--output", help="CSV path (default stdout)")
    add_budget_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="private per-step estimates for a stream file")
    p.add_argument("--problem", choices=("countdistinct", "degree", "triangles"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="CSV path; the truncation log goes to <output>.truncation.csv")
    add_factorization_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--D", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--with-truth", action="store_true")
    p.add_argument("--sigma-zero", action="store_true", help="test hook: run without noise")
    add_budget_args(p)
    p.set_defaults(func=cmd_estimate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (BudgetError, FeasibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run():
    sys.exit(main())
