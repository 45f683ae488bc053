import logging
import math
import time
from functools import wraps
from typing import TextIO

import numpy as np

from cli.verify import run_suite
from core.data_loader import load_measure
from core.entropic_ot import (
    CostSpec,
    closed_form_coupling,
    coupling_cauchy,
    monge_bounds,
    ot_value,
    product_value,
    solve_multimarginal,
    solve_ot,
)
from core.errors import DomainError
from core.finite_free import (
    arcsine_reference,
    asymptotic_logdet_check,
    exact_quadrature,
    finite_free_of_grids,
    mc_perm_quadrature,
    mc_unitary_quadrature,
    oracle_relative_error,
    real_roots,
)
from core.measures import DiscreteMeasure, quantile_grid
from core.operations import OperationKind
from core.permuton_ldp import (
    ENUMERATION_CAP,
    HISTOGRAM_FAMILIES,
    BlockHistogram,
    block_log_probability,
    brute_force_count,
    ldp_convergence,
    rate_functional,
    tuple_count,
)
from core.report_formatter import format_summary, format_table
from core.serialization import coupling_table
from core.subordination import (
    free_cauchy,
    free_convolve_grid,
    free_log_potential,
    solve_free,
)

logger = logging.getLogger(__name__)


def command(func):
    """Logs each command with its wall time."""

    @wraps(func)
    def wrapper(cfg, *args, **kwargs):
        logger.info(f"Running {cfg.command} (seed={cfg.seed}, threads={cfg.threads})")
        start = time.perf_counter()
        result = func(cfg, *args, **kwargs)
        logger.info(f"{cfg.command} finished in {time.perf_counter() - start:.2f}s")
        return result

    return wrapper


def _require_z(cfg) -> float:
    if cfg.z is None:
        raise DomainError(f"{cfg.command} needs --z")
    return cfg.z


def _measures(cfg, kind: OperationKind, stdin: TextIO | None) -> list[DiscreteMeasure]:
    """μ alone for compression; μ, ν and any extra marginals otherwise."""
    mu = load_measure(cfg.mu, stdin=stdin)
    if kind is OperationKind.COMPRESSION:
        if cfg.tau is None:
            raise DomainError("compression needs --tau")
        return [mu]
    if cfg.nu is None:
        raise DomainError(f"{kind.value} needs --nu")
    measures = [mu, load_measure(cfg.nu, stdin=stdin)]
    measures += [load_measure(spec, stdin=stdin) for spec in cfg.marginals]
    return measures


@command
def cmd_freeconv(cfg, stdin: TextIO | None = None) -> dict:
    """Subordination solve at z, or a Cauchy / log-potential table over --z-grid."""
    kind = OperationKind.parse(cfg.kind)
    measures = _measures(cfg, kind, stdin)
    if cfg.z_grid:
        if len(measures) > 2:
            raise DomainError("--z-grid supports two marginals")
        nu = measures[1] if len(measures) > 1 else None
        rows = free_convolve_grid(measures[0], nu, kind, cfg.z_grid, tau=cfg.tau)
        return {
            "kind": kind,
            "tau": cfg.tau,
            "table": [
                {
                    "z": r.z,
                    "cauchy": r.cauchy,
                    "log_potential": r.log_potential,
                    "derivative": r.derivative,
                    "mismatch": r.mismatch,
                }
                for r in rows
            ],
        }

    z = _require_z(cfg)
    sol = solve_free(kind, measures, z, tau=cfg.tau)
    report = {
        "kind": kind,
        "z": z,
        "omega": sol.omega,
        "omega_mu": sol.omega_mu,
        "omega_nu": sol.omega_nu,
        "cauchy": free_cauchy(sol),
        "log_potential": free_log_potential(sol, *measures),
        "residual": sol.residual,
    }
    if kind is OperationKind.COMPRESSION:
        report["tau"] = cfg.tau
    elif len(measures) > 2:
        report["marginal_omegas"] = list(sol.marginal_omegas)
    return report


@command
def cmd_otsolve(cfg, stdin: TextIO | None = None) -> dict:
    """Sinkhorn coupling next to the subordination value it should reproduce."""
    kind = OperationKind.parse(cfg.kind)
    measures = _measures(cfg, kind, stdin)
    z = _require_z(cfg)
    sub = solve_free(kind, measures, z, tau=cfg.tau)
    scale = cfg.tau if kind is OperationKind.COMPRESSION else 1.0
    expected = scale * free_log_potential(sub, *measures)
    expected_cauchy = scale * free_cauchy(sub)

    if len(measures) > 2:
        sol = solve_multimarginal(kind, z, measures, tol=cfg.tol)
    else:
        nu = measures[1] if len(measures) > 1 else None
        sol = solve_ot(CostSpec(kind, z, cfg.tau), measures[0], nu, tol=cfg.tol)
    value = ot_value(sol)
    cauchy = coupling_cauchy(sol)

    report = {
        "kind": kind,
        "z": z,
        "tau": cfg.tau,
        "value": value,
        "subordination_value": expected,
        "gap": abs(value - expected),
        "coupling_cauchy": cauchy,
        "free_cauchy": expected_cauchy,
        "cauchy_gap": abs(cauchy - expected_cauchy),
        "product_value": product_value(sol),
    }
    if len(measures) <= 2:
        closed = closed_form_coupling(sub, *measures)
        report["closed_form_error"] = float(np.max(np.abs(sol.pi - closed)))
        if kind is not OperationKind.COMPRESSION:
            report["monge_inf"], report["monge_sup"] = monge_bounds(*measures, z, kind)
    report["iterations"] = sol.iterations
    report["log_domain"] = sol.log_domain
    report["coupling"] = sol
    report["table"] = coupling_table(sol)
    return report


@command
def cmd_quadrature(cfg, stdin: TextIO | None = None) -> dict:
    """Unitary Monte Carlo against the exact permutation-side expectation."""
    kind = OperationKind.parse(cfg.kind)
    z = _require_z(cfg)
    n = cfg.n or 4
    diagonals = [quantile_grid(load_measure(cfg.mu, stdin=stdin), n)]
    k = None
    if kind is OperationKind.COMPRESSION:
        k = cfg.k or max(1, n // 2)
    else:
        default_nu = "positive-two-point" if kind is OperationKind.MULTIPLICATIVE else "bern"
        nu = quantile_grid(load_measure(cfg.nu or default_nu, stdin=stdin), n)
        extra = [quantile_grid(load_measure(s, stdin=stdin), n) for s in cfg.marginals]
        diagonals += [nu] + (extra or [nu] * (cfg.d - 2))

    exact = exact_quadrature(diagonals, kind, z, k=k)
    mc = mc_unitary_quadrature(diagonals, kind, z, cfg.samples, cfg.seed, k=k, threads=cfg.threads)
    report = {
        "op": "minor" if kind is OperationKind.COMPRESSION else kind,
        "n": n,
        "d": len(diagonals),
        "k": k,
        "z": z,
        "exact": exact,
        "mc_mean": mc.mean,
        "stderr": mc.stderr,
        "z_score": mc.z_score(exact),
        "samples": mc.samples,
        "seed": mc.seed,
    }
    if kind is not OperationKind.COMPRESSION:
        perm = mc_perm_quadrature(diagonals, kind, z, cfg.samples, cfg.seed, threads=cfg.threads)
        report["perm_mc_mean"] = perm.mean
        report["perm_stderr"] = perm.stderr
    return report


def _reference(spec: str | None, stdin: TextIO | None) -> DiscreteMeasure | None:
    if spec is None:
        return None
    if spec == "arcsine":
        return arcsine_reference()
    return load_measure(spec, stdin=stdin)


@command
def cmd_finitefree(cfg, stdin: TextIO | None = None) -> dict:
    """Finite free operation on quantile grids, its roots and the convergence table."""
    kind = OperationKind.parse(cfg.kind)
    measures = _measures(cfg, kind, stdin)
    z = _require_z(cfg)
    n_list = cfg.n_list or ([cfg.n] if cfg.n else [8, 16, 32, 64])
    rows = asymptotic_logdet_check(
        measures, kind, z, n_list, tau=cfg.tau, reference=_reference(cfg.reference, stdin)
    )
    n = n_list[-1]
    poly = finite_free_of_grids(kind, measures, n, tau=cfg.tau)
    report = {
        "kind": kind,
        "z": z,
        "tau": cfg.tau,
        "N": n,
        "polynomial": poly,
        "roots": real_roots(poly),
    }
    if kind is not OperationKind.COMPRESSION and len(measures) == 2 and n <= 10:
        grids = [quantile_grid(m, n) for m in measures]
        report["oracle_relative_error"] = oracle_relative_error(poly, *grids, kind)
    errors = [r.error for r in rows]
    report["monotone_error"] = all(b < a for a, b in zip(errors, errors[1:]))
    report["table"] = [
        {"N": r.n, "value": r.value, "limit": r.limit, "error": r.error, "w1": r.w1}
        for r in rows
    ]
    return report


def parse_histogram(spec: str, n: int, m: int, d: int) -> BlockHistogram:
    """A family name (diag, flat) or explicit cells "1,1:1;2,2:1"."""
    if spec in HISTOGRAM_FAMILIES:
        return HISTOGRAM_FAMILIES[spec](n, m, d)
    cells = {}
    try:
        for item in filter(None, spec.split(";")):
            cell, count = item.split(":")
            cells[tuple(int(r) for r in cell.split(","))] = int(count)
    except ValueError:
        raise DomainError(f"cannot parse histogram {spec!r}; expected e.g. '1,1:1;2,2:1'")
    return BlockHistogram.from_cells(n, m, d, cells)


@command
def cmd_ldp(cfg, stdin: TextIO | None = None) -> dict:
    """Exact tuple count, block log-probability and rate for one histogram."""
    n = cfg.n or 2
    h = parse_histogram(cfg.hist, n, cfg.m, cfg.d)
    total = math.factorial(n) ** cfg.d
    report = {
        "N": n,
        "m": cfg.m,
        "d": cfg.d,
        "histogram": h.to_dict(),
        "count": tuple_count(h),
        "brute_force_count": brute_force_count(h) if total <= ENUMERATION_CAP else None,
        "total_tuples": total,
        "block_log_probability": block_log_probability(h),
        "rate_functional": rate_functional(h),
    }
    report["gap"] = report["block_log_probability"] - report["rate_functional"]
    if cfg.n_list:
        if cfg.hist not in HISTOGRAM_FAMILIES:
            raise DomainError("--n-list needs a histogram family (diag or flat)")
        report["table"] = [
            {
                "N": r.n,
                "block_log_probability": r.block_log_probability,
                "rate_functional": r.rate_functional,
                "gap": r.gap,
                "scaled_gap": r.scaled_gap,
            }
            for r in ldp_convergence(cfg.hist, cfg.n_list, cfg.m, cfg.d)
        ]
    return report


@command
def cmd_verify(cfg, out: TextIO) -> int:
    """Run the acceptance suite; exit code 0 iff every selected check passes."""
    results = run_suite(seed=cfg.seed, tag=cfg.filter, threads=cfg.threads)
    rows = [(r.name, ",".join(r.tags), r.passed, r.detail) for r in results]
    out.write(format_table(["check", "tags", "status", "detail"], rows) + "\n")
    passed = sum(r.passed for r in results)
    out.write(format_summary(passed, len(results)) + "\n")
    return 0 if passed == len(results) and results else 1
