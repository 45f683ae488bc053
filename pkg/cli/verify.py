"""
Acceptance suite behind `verify`.

Each check draws from its own generator seeded by (seed, salt), so running a
subset with --filter gives the same numbers as the full run.
"""

import itertools
import logging
import math
from collections import Counter
from collections.abc import Callable, Iterator
from dataclasses import dataclass

import numpy as np

from core.ctransforms import r_transform, s_transform
from core.entropic_ot import (
    CostSpec,
    brute_force_2x2,
    coupling_cauchy,
    monge_bounds,
    ot_value,
    solve_multimarginal,
    solve_ot,
)
from core.errors import FreeOTError
from core.finite_free import (
    MonicPoly,
    arcsine_reference,
    asymptotic_logdet_check,
    compress_subset_average,
    exact_quadrature,
    finite_free_additive,
    finite_free_compress,
    finite_free_multiplicative,
    haar_unitary,
    horn_quantile_violation,
    mc_unitary_quadrature,
    measure_of,
    oracle_relative_error,
    unitarity_error,
)
from core.measures import (
    DiscreteMeasure,
    classical_convolve,
    log_potential,
    make_measure,
    moment,
    quantile_grid,
    signed_log_potential,
)
from core.operations import OperationKind
from core.permuton_ldp import (
    diagonal_histogram,
    empirical_frequency,
    enumerate_histograms,
    histogram_of_tuple,
    ldp_convergence,
    tuple_count,
)
from core.subordination import (
    compressed_r_transform,
    free_cauchy,
    free_log_potential,
    free_moments,
    free_r_transform,
    free_s_transform,
    free_support_bound,
    solve_additive,
    solve_compression,
    solve_free,
)

logger = logging.getLogger(__name__)

ADD, MUL, COMP = OperationKind.ADDITIVE, OperationKind.MULTIPLICATIVE, OperationKind.COMPRESSION
BERN = make_measure([-1.0, 1.0])
Z_OFFSETS = (0.5, 1.0, 5.0)


@dataclass(frozen=True)
class VerifyContext:
    seed: int
    threads: int = 1

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, salt]))


@dataclass(frozen=True)
class Check:
    name: str
    tags: tuple[str, ...]
    salt: int
    func: Callable[[VerifyContext, np.random.Generator], tuple[bool, str]]


@dataclass(frozen=True)
class CheckResult:
    name: str
    tags: tuple[str, ...]
    passed: bool
    detail: str


CHECKS: list[Check] = []


def check(name: str, *tags: str):
    def decorator(func):
        CHECKS.append(Check(name, tags, len(CHECKS), func))
        return func

    return decorator


def random_measure(
    rng: np.random.Generator, lo: float, hi: float, max_atoms: int = 12
) -> DiscreteMeasure:
    n = int(rng.integers(2, max_atoms + 1))
    return make_measure(rng.uniform(lo, hi, n), rng.uniform(0.1, 1.0, n))


def random_instances(
    rng: np.random.Generator, kind: OperationKind, count: int = 50
) -> Iterator[tuple[list[DiscreteMeasure], float, float | None]]:
    """Marginals with 2–12 atoms and z at bound + 0.5, 1, 5 in turn."""
    for i in range(count):
        tau = None
        if kind is ADD:
            measures = [random_measure(rng, -2.0, 2.0), random_measure(rng, -2.0, 2.0)]
        elif kind is MUL:
            measures = [random_measure(rng, 0.1, 3.0), random_measure(rng, 0.1, 3.0)]
        else:
            measures = [random_measure(rng, -2.0, 2.0)]
            tau = float(rng.uniform(0.1, 0.9))
        yield measures, free_support_bound(kind, measures) + Z_OFFSETS[i % 3], tau


def _seeded_instances(ctx: VerifyContext, kind: OperationKind):
    # Same instances for every check that asks for them.
    salt = {ADD: 1001, MUL: 1002, COMP: 1003}[kind]
    return random_instances(ctx.rng(salt), kind)


@check("bernoulli-closed-forms", "bernoulli", "ot")
def _bernoulli_closed_forms(ctx, rng):
    worst = 0.0
    for z in (2.5, 3.0, 5.0):
        root = math.sqrt(z * z - 4.0)
        q_exact = root / (2.0 * (z + root))
        cost = CostSpec(ADD, z)
        sol = solve_ot(cost, BERN, BERN)
        q_brute, _ = brute_force_2x2(BERN, BERN, cost)
        worst = max(
            worst,
            abs(ot_value(sol) - (math.log(z + root) - math.log(2.0))),
            abs(sol.pi[1, 1] - q_exact),
            abs(q_brute - q_exact),
            abs(coupling_cauchy(sol) - 1.0 / root),
        )
    return worst < 1e-8, f"max error {worst:.2e}"


@check("free-equals-ot", "random", "ot", "subordination")
def _free_equals_ot(ctx, rng):
    worst_value = worst_cauchy = 0.0
    for kind in (ADD, MUL, COMP):
        for measures, z, tau in _seeded_instances(ctx, kind):
            sub = solve_free(kind, measures, z, tau)
            scale = tau if kind is COMP else 1.0
            nu = measures[1] if len(measures) > 1 else None
            sol = solve_ot(CostSpec(kind, z, tau), measures[0], nu)
            worst_value = max(
                worst_value, abs(ot_value(sol) - scale * free_log_potential(sub, *measures))
            )
            worst_cauchy = max(worst_cauchy, abs(coupling_cauchy(sol) - scale * free_cauchy(sub)))
    passed = worst_value < 1e-6 and worst_cauchy < 1e-6
    return passed, f"value {worst_value:.2e}, cauchy {worst_cauchy:.2e} over 150 instances"


@check("multimarginal-bernoulli", "bernoulli", "ot", "multimarginal")
def _multimarginal(ctx, rng):
    measures = [BERN] * 3
    sol = solve_multimarginal(ADD, 4.0, measures)
    expected = free_log_potential(solve_free(ADD, measures, 4.0), *measures)
    err = abs(ot_value(sol) - expected)
    return err < 1e-6, f"|value - subordination| = {err:.2e}"


@check("free-vs-classical-and-monge", "random", "inequalities")
def _inequalities(ctx, rng):
    slack = math.inf
    for kind in (ADD, MUL, COMP):
        for measures, z, tau in _seeded_instances(ctx, kind):
            free = free_log_potential(solve_free(kind, measures, z, tau), *measures)
            if kind is COMP:
                slack = min(slack, free - log_potential(measures[0], z))
                continue
            classical = log_potential(classical_convolve(*measures, kind), z)
            low, high = monge_bounds(*measures, z, kind)
            slack = min(slack, free - classical, free - low, high - free)
    return slack >= -1e-10, f"min slack {slack:.2e}"


@check("quadrature", "quadrature", "stochastic")
def _quadrature(ctx, rng):
    configs = []
    for n in (2, 4, 6):
        for d in (2, 3):
            configs.append((ADD, [rng.uniform(-1.0, 1.0, n) for _ in range(d)], None))
            configs.append((MUL, [rng.uniform(0.5, 2.0, n) for _ in range(d)], None))
        configs.append((COMP, [rng.uniform(-1.0, 1.0, n)], max(1, n // 2)))
        configs.append((COMP, [rng.uniform(-1.0, 1.0, n)], max(1, n - 1)))
    hits = 0
    worst = 0.0
    for index, (kind, diagonals, k) in enumerate(configs):
        top = max(float(np.max(d)) for d in diagonals)
        z = (len(diagonals) * top if kind is ADD else top ** len(diagonals)) + 1.0
        exact = exact_quadrature(diagonals, kind, z, k=k)
        mc = mc_unitary_quadrature(
            diagonals, kind, z, 20_000, seed=ctx.seed * 100 + index, k=k, threads=ctx.threads
        )
        score = mc.z_score(exact)
        worst = max(worst, score)
        hits += score <= 4.0
    needed = math.ceil(0.95 * len(configs))
    return hits >= needed, f"{hits}/{len(configs)} within 4 stderr (max z-score {worst:.2f})"


@check("haar-unitarity", "quadrature", "stochastic")
def _haar(ctx, rng):
    n, samples = 4, 10_000
    draws = np.array([abs(haar_unitary(n, seed=rng)[0, 0]) ** 2 for _ in range(samples)])
    stderr = draws.std(ddof=1) / math.sqrt(samples)
    unitarity = unitarity_error(haar_unitary(n, seed=rng))
    score = abs(draws.mean() - 1.0 / n) / stderr
    return score <= 4.0 and unitarity < 1e-10, f"z-score {score:.2f}, unitarity {unitarity:.1e}"


@check("finite-free-oracles", "finite-free", "oracle")
def _finite_free_oracles(ctx, rng):
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 11))
        a, b = rng.uniform(-1.0, 1.0, n), rng.uniform(-1.0, 1.0, n)
        poly = finite_free_additive(MonicPoly.from_roots(a), MonicPoly.from_roots(b))
        worst = max(worst, oracle_relative_error(poly, a, b, ADD))
        a, b = rng.uniform(0.1, 2.0, n), rng.uniform(0.1, 2.0, n)
        poly = finite_free_multiplicative(MonicPoly.from_roots(a), MonicPoly.from_roots(b))
        worst = max(worst, oracle_relative_error(poly, a, b, MUL))
    for _ in range(20):
        n = int(rng.integers(2, 9))
        roots = rng.uniform(-1.0, 1.0, n)
        k = int(rng.integers(1, n + 1))
        z = 1.5 + float(rng.uniform(0.0, 2.0))
        exact = compress_subset_average(roots, k, z)
        value = finite_free_compress(MonicPoly.from_roots(roots), k)(z)
        worst = max(worst, abs(value - exact) / abs(exact))
    return worst < 1e-9, f"max relative error {worst:.2e}"


@check("finite-free-convergence", "bernoulli", "finite-free", "convergence")
def _finite_free_convergence(ctx, rng):
    limit = math.log((3.0 + math.sqrt(5.0)) / 2.0)
    rows = asymptotic_logdet_check(
        [BERN, BERN], ADD, 3.0, [8, 16, 32, 64], reference=arcsine_reference()
    )
    errors = [abs(r.value - limit) for r in rows]
    w1 = [r.w1 for r in rows]
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    w1_down = all(b <= a for a, b in zip(w1, w1[1:]))
    passed = decreasing and w1_down and errors[-1] < 5e-3 and abs(rows[0].limit - limit) < 1e-10
    shown = ", ".join(f"{e:.1e}" for e in errors)
    shown_w1 = ", ".join(f"{x:.1e}" for x in w1)
    return passed, f"errors {shown}; W1 {shown_w1}"


@check("horn-quantile", "bernoulli", "finite-free")
def _horn(ctx, rng):
    approx = measure_of(finite_free_additive(*[MonicPoly.from_roots(quantile_grid(BERN, 32))] * 2))
    violation = horn_quantile_violation(BERN, BERN, approx, np.linspace(0.05, 1.0, 20))
    return violation <= 1e-10, f"max violation {violation:.2e}"


@check("bernoulli-counterexample", "bernoulli", "counterexample")
def _counterexample(ctx, rng):
    value = signed_log_potential(classical_convolve(BERN, BERN, ADD), 1.0)
    err = abs(value - 0.25 * math.log(3.0))
    return err < 1e-12 and value > 0.0, f"classical {value:.12f} vs arcsine 0"


@check("transform-identities", "transforms", "random")
def _transforms(ctx, rng):
    worst = 0.0
    for _ in range(20):
        mu, nu = random_measure(rng, -1.0, 1.0, 6), random_measure(rng, -1.0, 1.0, 6)
        s = 0.1
        additive = free_r_transform(mu, nu, s) - r_transform(mu, s) - r_transform(nu, s)
        worst = max(worst, abs(additive))

        tau = float(rng.uniform(0.2, 0.8))
        worst = max(worst, abs(compressed_r_transform(mu, tau, s) - r_transform(mu, tau * s)))

        z = mu.e_plus + 1.0
        half = free_cauchy(solve_compression(mu, 0.5, z))
        worst = max(worst, abs(half - 2.0 * free_cauchy(solve_additive(mu, mu, 2.0 * z))))

        pos, pos2 = random_measure(rng, 1.0, 3.0, 6), random_measure(rng, 1.0, 3.0, 6)
        w = 0.1
        product = s_transform(pos, w) * s_transform(pos2, w)
        worst = max(worst, abs(free_s_transform(pos, pos2, w) - product))
    return worst < 1e-8, f"max deviation {worst:.2e}"


@check("free-moments", "moments", "random")
def _moments(ctx, rng):
    worst = 0.0
    for _ in range(5):
        mu, nu = random_measure(rng, -1.0, 1.0, 6), random_measure(rng, -1.0, 1.0, 6)
        classical = classical_convolve(mu, nu, ADD)
        free = free_moments(ADD, [mu, nu], order=3)
        worst = max(worst, *(abs(free[k - 1] - moment(classical, k)) for k in (1, 2, 3)))

        pos, pos2 = random_measure(rng, 0.5, 2.0, 6), random_measure(rng, 0.5, 2.0, 6)
        mean = free_moments(MUL, [pos, pos2], order=1)[0]
        worst = max(worst, abs(mean - pos.mean * pos2.mean))

        tau = float(rng.uniform(0.2, 0.8))
        mean = free_moments(COMP, [mu], order=1, tau=tau)[0]
        worst = max(worst, abs(mean - mu.mean))
    return worst < 1e-6, f"max moment deviation {worst:.2e}"


@check("permuton-counts", "permuton", "ldp")
def _permuton_counts(ctx, rng):
    problems = []
    for n, m, d in ((2, 2, 2), (4, 2, 2), (2, 2, 3)):
        tally = Counter()
        perms = list(itertools.permutations(range(n)))
        for tup in itertools.product(perms, repeat=d):
            tally[histogram_of_tuple(tup, m).counts.tobytes()] += 1
        histograms = enumerate_histograms(n, m, d)
        total = 0
        for h in histograms:
            count = tuple_count(h)
            total += count
            if count != tally.get(h.counts.tobytes(), 0):
                problems.append(f"({n},{m},{d}) count mismatch")
        if total != math.factorial(n) ** d:
            problems.append(f"({n},{m},{d}) total {total}")
    for family in ("flat", "diag"):
        worst = max(r.scaled_gap for r in ldp_convergence(family, [8, 16, 32, 64], 2, 2))
        if worst > 5.0:
            problems.append(f"{family} N*|gap| = {worst:.2f}")
    return not problems, "; ".join(problems) or "counts exact, N*|gap| <= 5"


@check("permuton-frequency", "permuton", "stochastic")
def _permuton_frequency(ctx, rng):
    h = diagonal_histogram(4, 2, 2)
    exact = tuple_count(h) / math.factorial(4) ** 2
    freq, stderr = empirical_frequency(h, 100_000, seed=int(rng.integers(2**31)))
    score = abs(freq - exact) / stderr
    return score <= 4.0, f"frequency {freq:.4f} vs {exact:.4f} (z-score {score:.2f})"


def run_suite(seed: int, tag: str | None = None, threads: int = 1) -> list[CheckResult]:
    """Run every check whose name or tags match `tag` (all when None)."""
    ctx = VerifyContext(seed=seed, threads=threads)
    results = []
    for c in CHECKS:
        if tag is not None and tag != c.name and tag not in c.tags:
            continue
        try:
            passed, detail = c.func(ctx, ctx.rng(c.salt))
        except FreeOTError as e:
            logger.warning(f"Check {c.name} raised {type(e).__name__}: {e}")
            passed, detail = False, f"{type(e).__name__}: {e}"
        results.append(CheckResult(c.name, c.tags, bool(passed), detail))
    return results
