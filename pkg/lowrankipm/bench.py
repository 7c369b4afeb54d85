"""
Benchmark harness: runs Newton and modified Newton variants over QPS problems and
reports factorization (F) and iteration (It) counts per problem and mu0.
```
python -m lowrankipm problems/ --mu0 1 --mu0 1e-6 --method newton --method mn-r2-h1
```
"""
import argparse
import csv
import logging
import os
import re
import sys
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Sequence, TextIO

from .ipm import InteriorPointSolver, RunReport, SolverConfig
from .problem import AcceptanceFilterError, InconsistentProblemError, QpProblem, classify
from .qps_io import QpsFormatError, load_problem
from .types import (
    HEURISTIC_MODES,
    KKT_FORMULATIONS,
    OUTPUT_FORMATS,
    TRACE_COLUMNS,
    HeuristicMode,
    KktFormulation,
    Method,
    OutputFormat,
    RefactorSetting,
)
from .utils import DEFAULT_LOGLEVEL, configure_logger, create_local_file, safe_identifier

FAILED = "-"
SKIPPED = "skipped"
SMALL_MEDIUM_TOLERANCE = 1e-6
LARGE_TOLERANCE = 1e-5
_COMPACT_METHOD = re.compile(r"^mn-r\(?(\d+)\)?(?:-(h[12]))?$")


@dataclass(frozen=True)
class MethodSpec:
    method: Method
    rank: int = 0
    heuristic: HeuristicMode = "none"

    @property
    def label(self) -> str:
        return SolverConfig(method=self.method, rank=self.rank, heuristic=self.heuristic).method_label

    @property
    def columns(self) -> list[str]:
        if self.method == "newton":
            return [self.label]
        return [f"{self.label} F", f"{self.label} It"]


def parse_method(text: str, rank: int = 2, heuristic: HeuristicMode = "none") -> MethodSpec:
    """
    Accepts `newton`, `mn` (taking `rank` and `heuristic`) or compact forms
    such as `mn-r2-h1` and `mN-r(4)-H2`.
    """
    value = text.strip().lower()
    if value == "newton":
        return MethodSpec("newton")
    if value == "mn":
        return MethodSpec("mn", rank, heuristic)
    match = _COMPACT_METHOD.match(value)
    if match is None:
        raise ValueError(f"Unknown method '{text}'.")
    return MethodSpec("mn", int(match.group(1)), match.group(2) or "none")


DEFAULT_METHODS: tuple[MethodSpec, ...] = (
    MethodSpec("newton"),
    MethodSpec("mn", 2),
    MethodSpec("mn", 2, "h1"),
    MethodSpec("mn", 2, "h2"),
)


@dataclass
class BenchConfig:
    """
    `eps_tol=None` picks 1e-6 for small and medium problems and 1e-5 for large ones.
    """
    problems: list[str] = field(default_factory=list)
    methods: list[MethodSpec] = field(default_factory=lambda: list(DEFAULT_METHODS))
    mu0s: list[float] = field(default_factory=lambda: [1.0])
    sigma: float = 0.1
    eps_tol: float | None = None
    formulation: KktFormulation = "unreduced"
    refactor_interval: RefactorSetting = "auto"
    max_total_iterations: int = 5000
    output_format: OutputFormat = "csv"
    out: str | None = None
    trace_dir: str | None = None
    jobs: int = 1
    max_dim: int = 20000
    min_inequalities: int = 4

    def tolerance_for(self, problem: QpProblem) -> float:
        if self.eps_tol is not None:
            return self.eps_tol
        return LARGE_TOLERANCE if classify(problem).label == "L" else SMALL_MEDIUM_TOLERANCE

    def solver_config(self, method: MethodSpec, mu0: float, problem: QpProblem) -> SolverConfig:
        return SolverConfig(
            mu0=mu0,
            sigma=self.sigma,
            eps_tol=self.tolerance_for(problem),
            method=method.method,
            rank=method.rank,
            heuristic=method.heuristic,
            formulation=self.formulation,
            refactor_interval=self.refactor_interval,
            max_total_iterations=self.max_total_iterations,
        )


@dataclass
class TableRow:
    """
    One problem at one mu0. `reports` lines up with the configured methods; a
    None report means the run raised.
    """
    problem: str
    mu0: float
    reports: list[RunReport | None] = field(default_factory=list)
    skipped: bool = False

    def cells(self, methods: Sequence[MethodSpec]) -> list[str]:
        values: list[str] = [self.problem, repr(self.mu0)]
        if self.skipped:
            return values + [SKIPPED for method in methods for _ in method.columns]
        for method, report in zip(methods, self.reports):
            converged = report is not None and report.converged
            if method.method == "newton":
                values.append(str(report.iterations) if converged else FAILED)
            else:
                values.append(str(report.main_factorizations) if converged else FAILED)
                values.append(str(report.iterations) if converged else FAILED)
        return values


def table_header(methods: Sequence[MethodSpec]) -> list[str]:
    return ["problem", "mu0"] + [column for method in methods for column in method.columns]


class TableFormat(ABC):
    """
    Parent class for result table layouts.
    """

    @abstractmethod
    def render(self, header: list[str], rows: list[list[str]]) -> str:
        raise NotImplementedError()


class DelimitedFormat(TableFormat):
    delimiter: str

    def render(self, header, rows):
        buffer = StringIO()
        writer = csv.writer(buffer, delimiter=self.delimiter, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buffer.getvalue()


class CsvFormat(DelimitedFormat):
    delimiter = ","


class TsvFormat(DelimitedFormat):
    delimiter = "\t"


class PrettyFormat(TableFormat):
    """
    Space-aligned columns for terminals.
    """

    def render(self, header, rows):
        widths = [max(len(row[i]) for row in [header, *rows]) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in [header, *rows]]
        lines.insert(1, "  ".join("-" * width for width in widths))
        return "\n".join(lines) + "\n"


TABLE_FORMATS: dict[OutputFormat, TableFormat] = {
    "csv": CsvFormat(),
    "tsv": TsvFormat(),
    "pretty": PrettyFormat(),
}


def format_table(rows: list[TableRow], methods: Sequence[MethodSpec], output_format: OutputFormat = "csv") -> str:
    return TABLE_FORMATS[output_format].render(table_header(methods), [row.cells(methods) for row in rows])


def _trace_value(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_step_trace(report: RunReport, output: str | os.PathLike | TextIO):
    """
    Writes the per-iteration trace of `report` as CSV to a path or an open stream.
    """
    if isinstance(output, (str, os.PathLike)):
        with open(output, "w", newline="") as stream:
            emit_step_trace(report, stream)
        return
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for record in report.trace:
        writer.writerow([_trace_value(record[column]) for column in TRACE_COLUMNS])


def expand_problem_paths(paths: Sequence[str]) -> list[Path]:
    """
    Files as given, directories replaced by their `.qps` files in name order.
    """
    expanded: list[Path] = []
    for path in map(Path, paths):
        if path.is_dir():
            expanded.extend(sorted(p for p in path.iterdir() if p.suffix.lower() == ".qps"))
        else:
            expanded.append(path)
    return expanded


class SuiteRunner:
    """
    Runs every configured method and mu0 on every problem; problems may run in
    parallel, rows come back in input order.
    """

    def __init__(self, config: BenchConfig, log_level=DEFAULT_LOGLEVEL):
        self.config = config
        self.log_level = log_level
        self.logger = configure_logger(self.__class__.__name__, log_level)
        self.create_trace = create_local_file(config.trace_dir) if config.trace_dir else None

    def _load(self, path: Path) -> QpProblem | None:
        try:
            problem = load_problem(path, self.config.min_inequalities)
        except (OSError, QpsFormatError, AcceptanceFilterError, InconsistentProblemError) as e:
            self.logger.warning(f"Skipping '{path}': {e}")
            return None
        if problem.total_pd_vars > self.config.max_dim:
            self.logger.warning(
                f"Skipping '{problem.name}': dimension {problem.total_pd_vars} exceeds {self.config.max_dim}."
            )
            return None
        return problem

    def _run(self, problem: QpProblem, method: MethodSpec, mu0: float) -> RunReport | None:
        try:
            config = self.config.solver_config(method, mu0, problem)
            report = InteriorPointSolver(config, self.log_level).solve(problem)
        except Exception as e:
            self.logger.warning(f"'{problem.name}' {method.label} mu0={mu0!r} failed: {e}")
            return None
        if self.create_trace is not None:
            with self.create_trace(safe_identifier(problem.name, method.label, f"mu{mu0!r}")) as stream:
                emit_step_trace(report, stream)
        return report

    def run_problem(self, path: Path) -> list[TableRow]:
        problem = self._load(path)
        if problem is None:
            return [TableRow(path.stem, mu0, skipped=True) for mu0 in self.config.mu0s]
        return [
            TableRow(problem.name, mu0, [self._run(problem, method, mu0) for method in self.config.methods])
            for mu0 in self.config.mu0s
        ]

    def run(self) -> list[TableRow]:
        paths = expand_problem_paths(self.config.problems)
        self.logger.info(f"Running {len(self.config.methods)} method(s) on {len(paths)} problem(s).")
        with ThreadPoolExecutor(max_workers=max(1, self.config.jobs)) as executor:
            results = list(executor.map(self.run_problem, paths))
        return [row for rows in results for row in rows]


def run_suite(config: BenchConfig, log_level=DEFAULT_LOGLEVEL) -> list[TableRow]:
    return SuiteRunner(config, log_level).run()


def _refactor_setting(text: str) -> RefactorSetting:
    if text in ("auto", "never"):
        return text
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"--l must be >= 1, 'auto' or 'never', got {text}.")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lowrankipm-bench",
        description="Compare Newton and low-rank modified Newton interior-point runs on QPS problems.",
    )
    parser.add_argument("problems", nargs="*", help="QPS files or directories of QPS files.")
    parser.add_argument("--mu0", type=float, action="append", help="Initial barrier parameter; repeatable (default 1).")
    parser.add_argument("--sigma", type=float, default=0.1)
    parser.add_argument("--tol", type=float, default=None, help="Termination tolerance (default by problem class).")
    parser.add_argument(
        "--method", action="append",
        help="newton, mn, or a compact label such as mn-r2-h1; repeatable (default Newton and mN-r(2) with H1/H2).",
    )
    parser.add_argument("--rank", type=int, default=2, help="Update rank used by --method mn.")
    parser.add_argument("--heuristic", choices=HEURISTIC_MODES, default="none", help="Heuristic used by --method mn.")
    parser.add_argument("--formulation", choices=KKT_FORMULATIONS, default="unreduced")
    parser.add_argument("--l", dest="refactor_interval", type=_refactor_setting, default="auto",
                        help="Refactorization parameter: an integer, 'auto' or 'never'.")
    parser.add_argument("--max-iterations", type=int, default=5000)
    parser.add_argument("--out", default=None, help="Table output file (default stdout).")
    parser.add_argument("--format", dest="output_format", choices=OUTPUT_FORMATS, default="csv")
    parser.add_argument("--trace-dir", default=None, help="Directory for per-run step traces.")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--max-dim", type=int, default=20000, help="Skip problems with more primal-dual variables.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def parse_args(argv: Sequence[str] | None = None) -> tuple[BenchConfig, int]:
    """
    Returns the bench configuration and the log level chosen by -v.
    """
    args = build_parser().parse_args(argv)
    if args.method:
        methods = [parse_method(text, args.rank, args.heuristic) for text in args.method]
    else:
        methods = list(DEFAULT_METHODS)
    config = BenchConfig(
        problems=args.problems,
        methods=methods,
        mu0s=args.mu0 or [1.0],
        sigma=args.sigma,
        eps_tol=args.tol,
        formulation=args.formulation,
        refactor_interval=args.refactor_interval,
        max_total_iterations=args.max_iterations,
        output_format=args.output_format,
        out=args.out,
        trace_dir=args.trace_dir,
        jobs=args.jobs,
        max_dim=args.max_dim,
    )
    log_level = {0: DEFAULT_LOGLEVEL, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    return config, log_level


def main(argv: Sequence[str] | None = None) -> int:
    logger = configure_logger(__name__)
    try:
        config, log_level = parse_args(argv)
        if config.trace_dir:
            os.makedirs(config.trace_dir, exist_ok=True)
        rows = run_suite(config, log_level)
        table = format_table(rows, config.methods, config.output_format)
        if config.out:
            with open(config.out, "w", newline="") as stream:
                stream.write(table)
        else:
            sys.stdout.write(table)
    except (OSError, ValueError) as e:
        logger.error(f"Benchmark aborted: {e}")
        return 2
    return 0
