import argparse
import sys
from typing import Literal, TextIO

from pydantic import BaseModel, Field, field_validator, model_validator

from cli.handlers import (
    cmd_finitefree,
    cmd_freeconv,
    cmd_ldp,
    cmd_otsolve,
    cmd_quadrature,
    cmd_verify,
)
from core.config import settings
from core.errors import DomainError
from core.serialization import dumps_report, write_csv

COMMANDS = {
    "freeconv": cmd_freeconv,
    "otsolve": cmd_otsolve,
    "quadrature": cmd_quadrature,
    "finitefree": cmd_finitefree,
    "ldp": cmd_ldp,
}


class RunConfig(BaseModel):
    """Validated flags for one invocation."""

    command: Literal["freeconv", "otsolve", "quadrature", "finitefree", "ldp", "verify"]
    kind: str = "add"
    mu: str = "bern"
    nu: str | None = None
    marginals: list[str] = Field(default_factory=list)
    z: float | None = None
    z_grid: list[float] | None = None
    tau: float | None = None
    n: int | None = None
    n_list: list[int] | None = None
    k: int | None = None
    d: int = 2
    m: int = 2
    hist: str = "diag"
    samples: int = 20_000
    seed: int = settings.DEFAULT_SEED
    tol: float | None = None
    format: Literal["json", "csv"] = "json"
    csv: str | None = None
    threads: int = settings.THREADS
    filter: str | None = None
    reference: str | None = None

    @field_validator("tau")
    @classmethod
    def tau_in_unit_interval(cls, v: float | None) -> float | None:
        if v is not None and not 0.0 < v < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {v}")
        return v

    @field_validator("threads", "d", "m")
    @classmethod
    def positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be a positive integer")
        return v

    @model_validator(mode="after")
    def exclusive_flags(self) -> "RunConfig":
        if self.z is not None and self.z_grid is not None:
            raise ValueError("--z and --z-grid are mutually exclusive")
        if self.n is not None and self.n_list is not None and self.command != "ldp":
            raise ValueError("--n and --n-list are mutually exclusive")
        if self.csv is not None and self.format == "csv":
            raise ValueError("--csv PATH and --format csv are mutually exclusive")
        return self

    @classmethod
    def from_namespace(cls, args: argparse.Namespace) -> "RunConfig":
        values = {k: v for k, v in vars(args).items() if v is not None and k != "verbose"}
        return cls(**values)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_measures(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=["add", "mul", "comp"], help="free operation")
    p.add_argument("--mu", help="preset, JSON path, or '-' for stdin (default: bern)")
    p.add_argument("--nu", help="second marginal (add/mul)")
    p.add_argument(
        "--marginal",
        dest="marginals",
        action="append",
        help="additional marginal for d-fold operations (repeatable)",
    )
    p.add_argument("--tau", type=float, help="compression parameter in (0, 1)")


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=["json", "csv"], help="stdout format (default: json)")
    p.add_argument("--csv", metavar="PATH", help="also write the report's table as CSV")


def create_parser() -> argparse.ArgumentParser:
    """Creates the argument parser with one subcommand per handler."""
    parser = argparse.ArgumentParser(
        prog=settings.PROJECT_NAME,
        description="Free convolutions by subordination and entropic optimal transport.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("freeconv", help="solve the subordination equations at z")
    _add_measures(p)
    p.add_argument("--z", type=float)
    p.add_argument("--z-grid", dest="z_grid", type=_float_list, help="comma-separated z values")
    _add_output(p)

    p = sub.add_parser("otsolve", help="Sinkhorn coupling and its subordination counterpart")
    _add_measures(p)
    p.add_argument("--z", type=float)
    p.add_argument("--tol", type=float, help="Sinkhorn marginal tolerance")
    _add_output(p)

    p = sub.add_parser("quadrature", help="unitary Monte Carlo vs exact permutation average")
    p.add_argument("--op", dest="kind", choices=["add", "mul", "minor"])
    p.add_argument("--mu", help="diagonal source for A (quantile grid)")
    p.add_argument("--nu", help="diagonal source for B (quantile grid)")
    p.add_argument("--marginal", dest="marginals", action="append")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int, help="number of diagonals for add/mul")
    p.add_argument("--k", type=int, help="minor size")
    p.add_argument("--z", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    _add_output(p)

    p = sub.add_parser("finitefree", help="finite free operation on quantile grids")
    _add_measures(p)
    p.add_argument("--z", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--n-list", dest="n_list", type=_int_list)
    p.add_argument("--reference", help="'arcsine' or a measure for the W1 column")
    _add_output(p)

    p = sub.add_parser("ldp", help="block histogram counts and entropy rate")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--hist", help="diag, flat, or cells like '1,1:1;2,2:1'")
    p.add_argument("--n-list", dest="n_list", type=_int_list)
    _add_output(p)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--filter", help="only checks with this name or tag")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)

    return parser


def _table(report: dict) -> list[dict]:
    table = report.get("table")
    if not table:
        raise DomainError("this report has no table to write as CSV")
    return table


def run(cfg: RunConfig, stdin: TextIO | None = None, stdout: TextIO | None = None) -> int:
    """Dispatch to the handler and print its report; returns the exit code."""
    stdout = stdout or sys.stdout
    if cfg.command == "verify":
        return cmd_verify(cfg, stdout)

    report = COMMANDS[cfg.command](cfg, stdin=stdin)
    if cfg.csv is not None:
        table = _table(report)
        write_csv(cfg.csv, list(table[0]), [list(row.values()) for row in table])
    if cfg.format == "csv":
        table = _table(report)
        write_csv(stdout, list(table[0]), [list(row.values()) for row in table])
    else:
        stdout.write(dumps_report(report))
    return 0
