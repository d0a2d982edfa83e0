"""Command-line surface: simulate, fit, stream, bench, report.

Exit codes: 0 success, 2 malformed flags, 1 runtime failure (data, solver or
checkpoint errors). Every run echoes its resolved configuration first, and no
subcommand writes anywhere except the paths it was given.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from pathlib import Path

from . import estimators, inference, simulate, streaming
from .errors import EstimationError, ParseError
from .estimators import Method

_CASE_BY_NUMBER = {
    "1": simulate.CovariateCase.NORMAL_AR,
    "2": simulate.CovariateCase.MIXTURE,
    "3": simulate.CovariateCase.STUDENT_T5,
    "4": simulate.CovariateCase.EXPONENTIAL,
}


def _parse_methods(raw: str, parser: argparse.ArgumentParser) -> tuple[Method, ...]:
    out = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            out.append(Method(token))
        except ValueError:
            parser.error(
                f"unknown method {token!r}; choose from "
                + ",".join(m.value for m in Method)
            )
    if not out:
        parser.error("--methods must name at least one method")
    return tuple(out)


def _parse_int_list(raw: str, flag: str, parser: argparse.ArgumentParser) -> list[int]:
    try:
        values = [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        parser.error(f"{flag} expects a comma-separated list of integers, got {raw!r}")
    if not values:
        parser.error(f"{flag} expects at least one integer")
    return values


def _echo_config(subcommand: str, pairs: dict) -> None:
    rendered = " ".join(f"{k}={v if v is not None else '-'}" for k, v in pairs.items())
    print(f"config: subcommand={subcommand} {rendered}")


def _make_source(args) -> streaming.BatchSource:
    path = Path(args.input)
    if path.is_dir():
        return streaming.BatchSource.from_directory(
            path, response=args.response, intercept=args.intercept
        )
    return streaming.BatchSource.from_csv(
        path,
        chunk_size=args.chunk_size,
        response=args.response,
        intercept=args.intercept,
    )


def _write(outdir: str, filename: str, content: str) -> None:
    target = Path(outdir)
    target.mkdir(parents=True, exist_ok=True)
    (target / filename).write_text(content, encoding="utf-8")
    print(f"wrote {target / filename}")


def _dgp_from_args(args) -> simulate.DgpConfig:
    return simulate.DgpConfig(
        covariate_case=_CASE_BY_NUMBER[args.case],
        error_law=simulate.ErrorLaw(args.error),
        seed=args.seed,
    )


def _cmd_simulate(args, parser) -> int:
    if (args.nb is None) == (args.B is None):
        parser.error("exactly one of --nb / --B is required")
    methods = _parse_methods(args.methods, parser)
    cfg = _dgp_from_args(args)
    _echo_config(
        "simulate",
        {
            "case": args.case,
            "error": args.error,
            "N": args.N,
            "nb": args.nb,
            "B": args.B,
            "reps": args.reps,
            "methods": ",".join(m.value for m in methods),
            "seed": args.seed,
            "level": args.level,
            "workers": args.workers,
            "format": args.format,
            "out": args.out,
        },
    )
    results = simulate.run_scenario(
        cfg,
        n_total=args.N,
        batch_size=args.nb,
        n_batches=args.B,
        methods=methods,
        replications=args.reps,
        level=args.level,
        workers=args.workers,
    )
    text = simulate.summary_table_text(results)
    csv_text = simulate.summary_table_csv(results)
    print(csv_text if args.format == "csv" else text, end="")
    if args.out:
        _write(args.out, "summary.txt", text)
        _write(args.out, "summary.csv", csv_text)
    return 0


def _cmd_fit(args, parser) -> int:
    _echo_config(
        "fit",
        {
            "input": args.input,
            "chunk_size": args.chunk_size,
            "response": args.response,
            "intercept": args.intercept,
            "level": args.level,
            "format": args.format,
        },
    )
    source = _make_source(args)
    batches = list(source)
    if not batches:
        raise ParseError(f"{args.input}: no batches to fit")
    solver = estimators.SolverConfig()
    beta = estimators.fit_full(batches, solver)
    report = inference.pooled_report(
        batches, beta, level=args.level, names=source.column_names()
    )
    _print_report(report, args.format)
    return 0


def _print_report(report: inference.EstimateReport, fmt: str) -> None:
    if fmt == "csv":
        print(inference.report_csv(report), end="")
    else:
        print(inference.report_text(report))


def _cmd_stream(args, parser) -> int:
    method = Method(args.method)
    if method not in estimators.STREAMING_METHODS:
        parser.error(f"--method must be one of renew,cee,cuee (got {args.method!r})")
    _echo_config(
        "stream",
        {
            "input": args.input,
            "method": method.value,
            "chunk_size": args.chunk_size,
            "response": args.response,
            "intercept": args.intercept,
            "level": args.level,
            "load_checkpoint": args.load_checkpoint,
            "save_checkpoint": args.save_checkpoint,
            "save_every_batch": args.save_every_batch,
            "progress": args.progress,
            "format": args.format,
        },
    )
    source = _make_source(args)
    state = None
    if args.load_checkpoint:
        state = streaming.load_checkpoint(args.load_checkpoint, expect_method=method)
    it = iter(source)
    try:
        first = next(it)
    except StopIteration:
        raise ParseError(f"{args.input}: source yields no batches") from None
    if state is None:
        state = estimators.initial_state(method, first.p)

    def progress(index: int, n: int, new_state, change: float) -> None:
        print(f"batch {index} n={n} sup-change={change:.3e}")

    state = streaming.apply_stream(
        state,
        itertools.chain([first], it),
        save_path=args.save_checkpoint,
        save_every_batch=args.save_every_batch,
        on_batch=progress if args.progress else None,
    )
    names = source.column_names()
    if names is not None and len(names) != state.p:
        names = None
    report = inference.state_report(state, level=args.level, names=names)
    _print_report(report, args.format)
    return 0


def _cmd_bench(args, parser) -> int:
    if (args.nb is None) == (args.B is None):
        parser.error("exactly one of --nb / --B is required")
    methods = _parse_methods(args.methods, parser)
    cfg = _dgp_from_args(args)
    _echo_config(
        "bench",
        {
            "case": args.case,
            "error": args.error,
            "N": args.N,
            "nb": args.nb,
            "B": args.B,
            "reps": args.reps,
            "methods": ",".join(m.value for m in methods),
            "seed": args.seed,
            "format": args.format,
            "out": args.out,
        },
    )
    rows = []
    if args.B is not None:
        for b in _parse_int_list(args.B, "--B", parser):
            rows.append(
                (
                    f"B={b}",
                    simulate.bench(
                        cfg,
                        n_total=args.N,
                        n_batches=b,
                        methods=methods,
                        replications=args.reps,
                    ),
                )
            )
    else:
        for nb in _parse_int_list(args.nb, "--nb", parser):
            rows.append(
                (
                    f"nb={nb}",
                    simulate.bench(
                        cfg,
                        n_total=args.N,
                        batch_size=nb,
                        methods=methods,
                        replications=args.reps,
                    ),
                )
            )
    text = simulate.bench_table_text(rows)
    csv_text = simulate.bench_table_csv(rows)
    print(csv_text if args.format == "csv" else text, end="")
    if args.out:
        _write(args.out, "bench.txt", text)
        _write(args.out, "bench.csv", csv_text)
    return 0


def _cmd_report(args, parser) -> int:
    _echo_config(
        "report",
        {"checkpoint": args.checkpoint, "level": args.level, "format": args.format},
    )
    state = streaming.load_checkpoint(args.checkpoint)
    report = inference.state_report(state, level=args.level)
    _print_report(report, args.format)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lprestream",
        description=(
            "Streaming estimation for multiplicative regression under the "
            "least product relative error criterion."
        ),
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common_io(p):
        p.add_argument("--input", required=True, help="CSV file or directory of CSVs")
        p.add_argument(
            "--chunk-size",
            type=int,
            default=None,
            help="rows per batch for a single CSV (default: whole file is one batch)",
        )
        p.add_argument(
            "--response",
            default=None,
            help="response column name (default: first column)",
        )
        p.add_argument(
            "--intercept",
            action=argparse.BooleanOptionalAction,
            default=True,
            help="prepend an all-ones intercept column",
        )
        p.add_argument("--level", type=float, default=0.95)
        p.add_argument("--format", choices=("text", "csv"), default="text")

    sim = sub.add_parser("simulate", help="Monte Carlo scenario tables")
    sim.add_argument("--case", choices=tuple(_CASE_BY_NUMBER), default="1")
    sim.add_argument(
        "--error", choices=tuple(e.value for e in simulate.ErrorLaw), default="lognormal"
    )
    sim.add_argument("--N", type=int, required=True, help="total observations")
    sim.add_argument("--nb", type=int, default=None, help="batch size")
    sim.add_argument("--B", type=int, default=None, help="number of batches")
    sim.add_argument("--reps", type=int, default=100)
    sim.add_argument("--methods", default="renew")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--level", type=float, default=0.95)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--format", choices=("text", "csv"), default="text")
    sim.add_argument("--out", default=None, help="directory for table files")
    sim.set_defaults(func=_cmd_simulate)

    fit = sub.add_parser("fit", help="full-data fit of pooled input")
    add_common_io(fit)
    fit.set_defaults(func=_cmd_fit)

    stream = sub.add_parser("stream", help="sequential updates with checkpoints")
    add_common_io(stream)
    stream.add_argument(
        "--method", default="renew", help="one of renew,cee,cuee"
    )
    stream.add_argument("--load-checkpoint", default=None)
    stream.add_argument("--save-checkpoint", default=None)
    stream.add_argument("--save-every-batch", action="store_true")
    stream.add_argument("--progress", action="store_true")
    stream.set_defaults(func=_cmd_stream)

    bench = sub.add_parser("bench", help="C.Time / R.Time tables")
    bench.add_argument("--case", choices=tuple(_CASE_BY_NUMBER), default="1")
    bench.add_argument(
        "--error", choices=tuple(e.value for e in simulate.ErrorLaw), default="lognormal"
    )
    bench.add_argument("--N", type=int, required=True)
    bench.add_argument("--nb", default=None, help="comma list of batch sizes")
    bench.add_argument("--B", default=None, help="comma list of batch counts")
    bench.add_argument("--reps", type=int, default=10)
    bench.add_argument("--methods", default="full,cee,cuee,renew")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--format", choices=("text", "csv"), default="text")
    bench.add_argument("--out", default=None)
    bench.set_defaults(func=_cmd_bench)

    rep = sub.add_parser("report", help="inference report from a checkpoint")
    rep.add_argument("--checkpoint", required=True)
    rep.add_argument("--level", type=float, default=0.95)
    rep.add_argument("--format", choices=("text", "csv"), default="text")
    rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (EstimationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
