"""Command line front end: solve, brute, bench and export."""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import published
from .heuristics import mdp_values, recursive_values
from .model import BUILTIN_NAMES, DecPomdp, ModelError, builtin, load_model
from .policy import dump_policy, load_policy, vector_to_dot
from .search import BudgetError, Options, brute_force, maa_star

CSV_TAG = "# maastar-report v1"
DEFAULT_NODE_BUDGET = 10**9

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_PROVEN = 2
EXIT_MISMATCH = 3


@dataclass
class RunReport:
    problem: str
    horizon: int
    heuristic: str
    weight: float
    value: float
    proven_optimal: bool
    evaluated_count: int
    subsearch_evaluated: int
    max_open_size: int
    incumbents: list[tuple[int, float]] = field(default_factory=list)
    wall_time: float | None = None
    published_value: float | None = None
    published_evaluated: int | None = None
    published_max_open: int | None = None
    value_mismatch: bool | None = None

    def annotate(self) -> None:
        ref = published.lookup(self.problem, self.heuristic, self.horizon)
        if ref is None:
            return
        self.published_value, self.published_evaluated, self.published_max_open = ref
        self.value_mismatch = not (
            self.proven_optimal and abs(self.value - self.published_value) <= published.VALUE_TOLERANCE
        )


COLUMNS = [f.name for f in fields(RunReport)]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, list):
        return ";".join(f"{n}:{float(v)!r}" for n, v in value)
    return str(value)


def write_reports(reports: list[RunReport], stream) -> None:
    stream.write(CSV_TAG + "\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in reports:
        writer.writerow([_cell(getattr(r, c)) for c in COLUMNS])


def read_reports(stream) -> list[RunReport]:
    tag = stream.readline().rstrip("\n")
    if tag != CSV_TAG:
        raise ValueError(f"unsupported report format {tag!r}")
    reader = csv.DictReader(stream)
    out = []
    for row in reader:
        def opt(key, conv):
            return conv(row[key]) if row[key] != "" else None

        def flag(text):
            return text == "true"

        incumbents = []
        if row["incumbents"]:
            for item in row["incumbents"].split(";"):
                n, v = item.split(":")
                incumbents.append((int(n), float(v)))
        out.append(
            RunReport(
                problem=row["problem"],
                horizon=int(row["horizon"]),
                heuristic=row["heuristic"],
                weight=float(row["weight"]),
                value=float(row["value"]),
                proven_optimal=flag(row["proven_optimal"]),
                evaluated_count=int(row["evaluated_count"]),
                subsearch_evaluated=int(row["subsearch_evaluated"]),
                max_open_size=int(row["max_open_size"]),
                incumbents=incumbents,
                wall_time=opt("wall_time", float),
                published_value=opt("published_value", float),
                published_evaluated=opt("published_evaluated", int),
                published_max_open=opt("published_max_open", int),
                value_mismatch=opt("value_mismatch", flag),
            )
        )
    return out


def _save_csv(reports: list[RunReport], path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            write_reports(reports, fh)


def _fmt(value: float) -> str:
    if value == -math.inf:
        return "-inf"
    return f"{value:.2f}"


def _load(args) -> DecPomdp:
    if args.model:
        return load_model(args.model)
    return builtin(args.problem)


def _problem_label(args, model: DecPomdp) -> str:
    return args.problem or Path(args.model).stem


def run_search(model: DecPomdp, problem: str, horizon: int, heuristic: str, weight: float = 1.0,
               node_budget: int | None = DEFAULT_NODE_BUDGET, time_budget: float | None = None,
               on_incumbent=None, timing: bool = False):
    """Runs one configuration and returns (report, result)."""
    options = Options(
        horizon=horizon,
        heuristic=heuristic,
        weight=weight,
        node_budget=node_budget,
        time_budget=time_budget,
        on_incumbent=on_incumbent,
    )
    table = None
    if heuristic == "recursive":
        table = recursive_values(model, horizon)
        bound = mdp_values(model, horizon).values[: table.values.shape[0]]
        if np.any(table.values > bound + 1e-9):
            raise AssertionError("recursive heuristic exceeds the MDP bound")
    result = maa_star(model, options, table)
    if table is not None:
        result.stats.subsearch_evaluated = table.subsearch_evaluated
    stats = result.stats
    report = RunReport(
        problem=problem,
        horizon=horizon,
        heuristic=heuristic,
        weight=weight,
        value=float(result.value),
        proven_optimal=result.proven_optimal,
        evaluated_count=stats.evaluated_count,
        subsearch_evaluated=stats.subsearch_evaluated,
        max_open_size=stats.max_open_size,
        incumbents=[(e.evaluated, e.value) for e in stats.incumbent_trace],
        wall_time=stats.wall_time if timing else None,
    )
    return report, result


def _print_report(r: RunReport, out) -> None:
    print(f"problem:             {r.problem}", file=out)
    print(f"horizon:             {r.horizon}", file=out)
    print(f"heuristic:           {r.heuristic}", file=out)
    print(f"weight:              {r.weight}", file=out)
    print(f"value:               {_fmt(r.value)}  ({float(r.value)!r})", file=out)
    print(f"proven optimal:      {'yes' if r.proven_optimal else 'no'}", file=out)
    print(f"evaluated pairs:     {r.evaluated_count}", file=out)
    print(f"subsearch evaluated: {r.subsearch_evaluated}", file=out)
    print(f"max open list:       {r.max_open_size}", file=out)
    if r.wall_time is not None:
        print(f"wall time:           {r.wall_time:.3f} s", file=out)


def cmd_solve(args, out) -> int:
    model = _load(args)
    stream = None
    if args.anytime:
        def stream(elapsed, value, vector):
            print(f"{elapsed:.6f},{float(value)!r}", file=out, flush=True)

    report, result = run_search(
        model, _problem_label(args, model), args.horizon, args.heuristic, args.weight,
        args.node_budget, args.time_budget, stream, timing=True,
    )
    _print_report(report, out)
    if args.save_policy and result.vector is not None:
        Path(args.save_policy).write_text(
            dump_policy(result.vector, model, problem=report.problem, value=report.value), encoding="utf-8"
        )
    if args.dot and result.vector is not None:
        _write_dots(vector_to_dot(result.vector, model.actions, model.observations), args.dot)
    report.wall_time = None
    _save_csv([report], args.csv)
    return EXIT_OK if report.proven_optimal else EXIT_NOT_PROVEN


def cmd_brute(args, out) -> int:
    model = _load(args)
    res = brute_force(model, args.horizon, cap=args.cap)
    report = RunReport(
        problem=_problem_label(args, model),
        horizon=args.horizon,
        heuristic="brute",
        weight=1.0,
        value=float(res.value),
        proven_optimal=True,
        evaluated_count=res.enumerated_count,
        subsearch_evaluated=0,
        max_open_size=0,
    )
    _print_report(report, out)
    if args.save_policy:
        Path(args.save_policy).write_text(
            dump_policy(res.vector, model, problem=report.problem, value=report.value), encoding="utf-8"
        )
    _save_csv([report], args.csv)
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}")


def _name_list(choices):
    def parse(text: str) -> list[str]:
        names = [x.strip() for x in text.split(",") if x.strip()]
        for n in names:
            if n not in choices:
                raise argparse.ArgumentTypeError(f"{n!r} is not one of {', '.join(choices)}")
        return names

    return parse


def cmd_bench(args, out) -> int:
    reports = []
    for problem in args.problem:
        model = builtin(problem)
        for horizon in args.horizons:
            for heuristic in args.heuristic:
                report, _ = run_search(
                    model, problem, horizon, heuristic, args.weight,
                    args.node_budget, args.time_budget, timing=args.timing,
                )
                if args.compare_paper:
                    report.annotate()
                reports.append(report)

    header = f"{'problem':<9} {'T':>2} {'heuristic':<10} {'value':>8} {'evaluated':>12} {'max open':>9}  status"
    if args.compare_paper:
        header += f"  {'published':>9} {'pub. evaluated':>14} {'pub. open':>9}"
    print(header, file=out)
    for r in reports:
        status = "optimal" if r.proven_optimal else "BUDGET"
        line = (
            f"{r.problem:<9} {r.horizon:>2} {r.heuristic:<10} {_fmt(r.value):>8} "
            f"{r.evaluated_count:>12} {r.max_open_size:>9}  {status:<7}"
        )
        if args.compare_paper and r.published_value is not None:
            line += (
                f"  {_fmt(r.published_value):>9} {r.published_evaluated:>14} {r.published_max_open:>9}"
                + ("  MISMATCH" if r.value_mismatch else "")
            )
        print(line, file=out)
    _save_csv(reports, args.csv)
    if args.compare_paper and any(r.value_mismatch for r in reports):
        return EXIT_MISMATCH
    return EXIT_OK if all(r.proven_optimal for r in reports) else EXIT_NOT_PROVEN


def _write_dots(dots: list[str], prefix: str) -> list[Path]:
    paths = []
    for i, text in enumerate(dots):
        path = Path(f"{prefix}agent{i}.dot")
        path.write_text(text, encoding="utf-8")
        paths.append(path)
    return paths


def cmd_export(args, out) -> int:
    path = Path(args.policy)
    if not path.exists():
        print(f"error: no saved policy at {path}", file=sys.stderr)
        return EXIT_ERROR
    saved = load_policy(path.read_text(encoding="utf-8"))
    prefix = args.out if args.out is not None else str(path.with_suffix("")) + "-"
    for p in _write_dots(vector_to_dot(saved.vector, saved.action_names, saved.observation_names), prefix):
        print(p, file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maastar", description="Optimal finite-horizon DEC-POMDP planning")
    sub = parser.add_subparsers(dest="command", required=True)

    def source(p):
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--model", metavar="FILE", help="model file")
        g.add_argument("--problem", choices=BUILTIN_NAMES, help="built-in problem")

    def budgets(p):
        p.add_argument("--node-budget", type=int, default=DEFAULT_NODE_BUDGET)
        p.add_argument("--time-budget", type=float, default=None, metavar="SECONDS")

    p = sub.add_parser("solve", help="solve with heuristic search")
    source(p)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--heuristic", choices=("mdp", "recursive"), default="mdp")
    p.add_argument("--weight", type=float, default=1.0)
    p.add_argument("--csv", metavar="PATH")
    p.add_argument("--save-policy", metavar="PATH")
    p.add_argument("--dot", metavar="PREFIX", help="write <PREFIX>agent<i>.dot")
    p.add_argument("--anytime", action="store_true", help="stream incumbents as time,value lines")
    budgets(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("brute", help="exhaustive enumeration")
    source(p)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--cap", type=int, default=10**8)
    p.add_argument("--csv", metavar="PATH")
    p.add_argument("--save-policy", metavar="PATH")
    p.set_defaults(func=cmd_brute)

    p = sub.add_parser("bench", help="benchmark table for the built-in problems")
    p.add_argument("--problem", type=_name_list(BUILTIN_NAMES), required=True)
    p.add_argument("--horizons", type=_int_list, required=True)
    p.add_argument("--heuristic", type=_name_list(("mdp", "recursive")), default=["mdp"])
    p.add_argument("--weight", type=float, default=1.0)
    p.add_argument("--csv", metavar="PATH")
    p.add_argument("--compare-paper", action="store_true", help="show published results and flag value mismatches")
    p.add_argument("--timing", action="store_true", help="include wall time in the CSV")
    budgets(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export", help="write a saved policy as DOT graphs")
    p.add_argument("--policy", required=True, metavar="FILE")
    p.add_argument("--out", metavar="PREFIX")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    if getattr(args, "horizon", None) is not None and args.horizon < 1:
        print("error: --horizon must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args, out)
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (BudgetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
