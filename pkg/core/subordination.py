"""
Subordination solvers for free additive/multiplicative convolution and free
compression at real z to the right of the support.

Each system is reduced to one scalar equation in the common level
(g = 1/ω additively, u = 1/ω multiplicatively) through the marginal transform
inverses, bracketed on (0, ∞) and solved with brentq. Every accepted root is
re-checked against the full set of subordination identities.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Chebyshev
from numpy.polynomial.chebyshev import chebpts1
from scipy.optimize import brentq

from core.config import settings
from core.ctransforms import cauchy_G, cauchy_inverse, j_inverse, j_transform
from core.errors import ConvergenceError, DomainError, InconsistencyError
from core.measures import (
    DiscreteMeasure,
    log_potential,
    require_nonnegative,
    scale_pushforward,
)
from core.operations import OperationKind

logger = logging.getLogger(__name__)

_RTOL = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class SubordinationSolution:
    kind: OperationKind
    z: float
    omega: float
    marginal_omegas: tuple[float, ...] = ()
    tau: float | None = None
    residual: float = 0.0

    @property
    def omega_mu(self) -> float | None:
        if self.kind is OperationKind.COMPRESSION:
            return None
        return self.marginal_omegas[0]

    @property
    def omega_nu(self) -> float | None:
        if self.kind is OperationKind.COMPRESSION or len(self.marginal_omegas) < 2:
            return None
        return self.marginal_omegas[1]

    @property
    def arity(self) -> int:
        return len(self.marginal_omegas) if self.marginal_omegas else 1


def _positive_root(f: Callable[[float], float], start: float, label: str) -> float:
    """
    Root of f on (0, ∞) where f > 0 near 0 and f < 0 near ∞.

    Brackets expand geometrically from `start`; if that fails a log-spaced
    scan looks for the first sign change before giving up.
    """
    lo = hi = start
    f_lo = f(lo)
    f_hi = f_lo
    doublings = 0
    while f_lo <= 0 and doublings < settings.BRACKET_MAX_DOUBLINGS:
        hi, f_hi = lo, f_lo
        lo /= 2.0
        f_lo = f(lo)
        doublings += 1
    while f_hi >= 0 and doublings < settings.BRACKET_MAX_DOUBLINGS:
        if f_hi > 0:
            lo, f_lo = hi, f_hi
        hi *= 2.0
        f_hi = f(hi)
        doublings += 1

    if not (f_lo > 0 > f_hi):
        logger.warning(f"{label}: geometric bracket failed, scanning")
        grid = start * np.logspace(-12, 12, settings.BRACKET_SCAN_POINTS)
        values = []
        for x in grid:
            try:
                values.append(f(float(x)))
            except ConvergenceError:
                values.append(math.nan)
        values = np.asarray(values)
        hits = np.nonzero((values[:-1] > 0) & (values[1:] <= 0))[0]
        if hits.size == 0:
            raise ConvergenceError(
                f"{label}: no sign change found",
                diagnostics={"start": start, "lo": lo, "hi": hi, "f_lo": f_lo, "f_hi": f_hi},
            )
        k = int(hits[0])
        lo, hi = float(grid[k]), float(grid[k + 1])
        if values[k + 1] == 0:
            return hi

    return float(brentq(f, lo, hi, xtol=settings.ROOT_XTOL * hi, rtol=_RTOL))


def _split_point_masses(
    measures: Sequence[DiscreteMeasure],
) -> tuple[list[int], list[int]]:
    points = [i for i, m in enumerate(measures) if m.is_point_mass]
    rest = [i for i, m in enumerate(measures) if not m.is_point_mass]
    return points, rest


def additive_residual(sol: SubordinationSolution, measures: Sequence[DiscreteMeasure]) -> float:
    d = len(measures)
    z, omega = sol.z, sol.omega
    g = 1.0 / omega
    r_sum = abs(sum(sol.marginal_omegas) - (d - 1) * omega - z) / max(1.0, abs(z))
    r_level = max(
        abs(cauchy_G(m, w) - g) / max(1.0, g)
        for m, w in zip(measures, sol.marginal_omegas)
    )
    return max(r_sum, r_level)


def multiplicative_residual(
    sol: SubordinationSolution, measures: Sequence[DiscreteMeasure]
) -> float:
    d = len(measures)
    z, omega = sol.z, sol.omega
    target = z * (omega + 1.0) ** (d - 1)
    product = math.prod(sol.marginal_omegas)
    r_prod = abs(product - target) / max(abs(z), abs(target))
    level = 1.0 + 1.0 / omega
    r_level = max(
        abs(w * cauchy_G(m, w) - level) / max(1.0, level)
        for m, w in zip(measures, sol.marginal_omegas)
    )
    return max(r_prod, r_level)


def compression_residual(sol: SubordinationSolution, m: DiscreteMeasure) -> float:
    tau, z, omega = sol.tau, sol.z, sol.omega
    return abs((omega - z) / (1.0 - tau) * cauchy_G(m, omega) - 1.0)


def _verify(sol: SubordinationSolution, residual: float) -> SubordinationSolution:
    if not residual < settings.INVARIANT_TOL:
        raise InconsistencyError(
            f"{sol.kind.value} subordination residual {residual:.3e} exceeds "
            f"{settings.INVARIANT_TOL:.1e} at z={sol.z!r}",
            diagnostics={"omega": sol.omega, "marginal_omegas": sol.marginal_omegas},
        )
    return SubordinationSolution(
        kind=sol.kind,
        z=sol.z,
        omega=sol.omega,
        marginal_omegas=sol.marginal_omegas,
        tau=sol.tau,
        residual=residual,
    )


def solve_additive_many(measures: Sequence[DiscreteMeasure], z: float) -> SubordinationSolution:
    """
    Subordination for μ_1 ⊞ … ⊞ μ_d at z.

    Σ_j ω_j = (d − 1) ω + z and G_j(ω_j) = 1/ω for every j.
    """
    d = len(measures)
    if d < 2:
        raise DomainError("additive subordination needs at least two measures")
    bound = sum(m.e_plus for m in measures)
    if not z > bound:
        raise DomainError(f"z={z!r} must exceed the sum of E+ values={bound!r}")

    points, rest = _split_point_masses(measures)
    shift = sum(measures[i].e_plus for i in points)
    z_rest = z - shift
    omegas = [0.0] * d

    if len(rest) >= 2:
        r = len(rest)

        def level_equation(g: float) -> float:
            return sum(cauchy_inverse(measures[i], g) for i in rest) - (r - 1) / g - z_rest

        start = 1.0 / (z_rest - sum(measures[i].mean for i in rest))
        g = _positive_root(level_equation, start, "solve_additive")
        omega = 1.0 / g
        for i in rest:
            omegas[i] = cauchy_inverse(measures[i], g)
    elif len(rest) == 1:
        i = rest[0]
        omegas[i] = z_rest
        omega = 1.0 / cauchy_G(measures[i], z_rest)
    else:
        omega = z_rest

    for i in points:
        omegas[i] = measures[i].e_plus + omega

    sol = SubordinationSolution(OperationKind.ADDITIVE, float(z), float(omega), tuple(omegas))
    logger.debug(f"additive subordination at z={z!r}: omega={omega!r}")
    return _verify(sol, additive_residual(sol, measures))


def solve_additive(mu: DiscreteMeasure, nu: DiscreteMeasure, z: float) -> SubordinationSolution:
    return solve_additive_many([mu, nu], z)


def solve_multiplicative_many(
    measures: Sequence[DiscreteMeasure], z: float
) -> SubordinationSolution:
    """
    Subordination for μ_1 ⊠ … ⊠ μ_d at z, all factors supported in [0, ∞).

    Π_j ω_j = z (ω + 1)^(d−1) and ω_j G_j(ω_j) = 1 + 1/ω for every j.
    """
    d = len(measures)
    if d < 2:
        raise DomainError("multiplicative subordination needs at least two measures")
    for k, m in enumerate(measures):
        require_nonnegative(m, name=f"factor {k + 1}")
        if m.mean == 0:
            raise DomainError(f"factor {k + 1} has zero mean")
    bound = math.prod(m.e_plus for m in measures)
    if not z > bound:
        raise DomainError(f"z={z!r} must exceed the product of E+ values={bound!r}")

    points, rest = _split_point_masses(measures)
    scale = math.prod(measures[i].e_plus for i in points)
    z_rest = z / scale
    omegas = [0.0] * d

    if len(rest) >= 2:
        r = len(rest)

        def level_equation(u: float) -> float:
            logs = sum(math.log(j_inverse(measures[i], u)) for i in rest)
            return logs - math.log(z_rest) - (r - 1) * (math.log1p(u) - math.log(u))

        start = math.prod(measures[i].mean for i in rest) / z_rest
        u = _positive_root(level_equation, start, "solve_multiplicative")
        omega = 1.0 / u
        for i in rest:
            omegas[i] = j_inverse(measures[i], u)
    elif len(rest) == 1:
        i = rest[0]
        omegas[i] = z_rest
        omega = 1.0 / j_transform(measures[i], z_rest)
    else:
        omega = (z - scale) / scale

    for i in points:
        omegas[i] = measures[i].e_plus * (omega + 1.0)

    sol = SubordinationSolution(
        OperationKind.MULTIPLICATIVE, float(z), float(omega), tuple(omegas)
    )
    logger.debug(f"multiplicative subordination at z={z!r}: omega={omega!r}")
    return _verify(sol, multiplicative_residual(sol, measures))


def solve_multiplicative(
    mu: DiscreteMeasure, nu: DiscreteMeasure, z: float
) -> SubordinationSolution:
    return solve_multiplicative_many([mu, nu], z)


def solve_compression(mu: DiscreteMeasure, tau: float, z: float) -> SubordinationSolution:
    """ω in (z, ∞) with ((ω − z)/(1 − τ)) G_μ(ω) = 1."""
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau={tau!r} must lie in (0, 1)")
    if not z > mu.e_plus:
        raise DomainError(f"z={z!r} must exceed E+={mu.e_plus!r}")

    if mu.is_point_mass:
        omega = (z - (1.0 - tau) * mu.e_plus) / tau
    else:

        def equation(w: float) -> float:
            return (w - z) / (1.0 - tau) * cauchy_G(mu, w) - 1.0

        # equation(z) = -1 and the map is increasing with limit tau/(1 - tau)
        step = max(1.0, abs(z))
        hi = z + step
        while equation(hi) <= 0:
            step *= 2.0
            hi = z + step
            if step > 2.0**settings.BRACKET_MAX_DOUBLINGS:
                raise ConvergenceError(
                    "solve_compression: no upper bracket",
                    diagnostics={"z": z, "tau": tau, "last_hi": hi},
                )
        omega = brentq(
            equation, z, hi, xtol=settings.ROOT_XTOL * max(abs(z), abs(hi)), rtol=_RTOL
        )

    sol = SubordinationSolution(OperationKind.COMPRESSION, float(z), float(omega), tau=tau)
    return _verify(sol, compression_residual(sol, mu))


def solve_free(
    kind: OperationKind | str,
    measures: Sequence[DiscreteMeasure],
    z: float,
    tau: float | None = None,
) -> SubordinationSolution:
    """Dispatch on the operation kind."""
    kind = OperationKind.parse(kind)
    if kind is OperationKind.ADDITIVE:
        return solve_additive_many(measures, z)
    if kind is OperationKind.MULTIPLICATIVE:
        return solve_multiplicative_many(measures, z)
    if tau is None:
        raise DomainError("compression needs tau")
    if len(measures) != 1:
        raise DomainError("compression acts on a single measure")
    return solve_compression(measures[0], tau, z)


def free_support_bound(
    kind: OperationKind | str, measures: Sequence[DiscreteMeasure]
) -> float:
    """The z-bound above which the solvers are guaranteed to apply."""
    kind = OperationKind.parse(kind)
    if kind is OperationKind.ADDITIVE:
        return float(sum(m.e_plus for m in measures))
    if kind is OperationKind.MULTIPLICATIVE:
        return float(math.prod(m.e_plus for m in measures))
    return float(measures[0].e_plus)


def free_cauchy(sol: SubordinationSolution) -> float:
    if sol.kind is OperationKind.ADDITIVE:
        return 1.0 / sol.omega
    if sol.kind is OperationKind.MULTIPLICATIVE:
        return (sol.omega + 1.0) / (sol.z * sol.omega)
    tau = sol.tau
    return (1.0 - tau) / (tau * (sol.omega - sol.z))


def free_log_potential(sol: SubordinationSolution, *measures: DiscreteMeasure) -> float:
    """
    ∫ log(z − x) of the free operation's output, from the subordination data.

    Additive and multiplicative:  −(d−1) log ω + Σ_j ∫ log(ω_j − x) μ_j(dx).
    Compression:  (1/τ) ∫ log(ω − x) μ(dx) + log τ − ((1−τ)/τ) log((ω − z)/(1 − τ)).
    """
    if not sol.omega > 0:
        raise DomainError(f"omega={sol.omega!r} must be positive")
    if sol.kind is OperationKind.COMPRESSION:
        (mu,) = measures
        tau, z, omega = sol.tau, sol.z, sol.omega
        if not omega > z:
            raise DomainError(f"omega={omega!r} must exceed z={z!r}")
        return (
            log_potential(mu, omega) / tau
            + math.log(tau)
            - (1.0 - tau) / tau * math.log((omega - z) / (1.0 - tau))
        )
    if len(measures) != len(sol.marginal_omegas):
        raise DomainError(
            f"solution has {len(sol.marginal_omegas)} factors, got {len(measures)} measures"
        )
    d = len(measures)
    total = -(d - 1) * math.log(sol.omega)
    for m, w in zip(measures, sol.marginal_omegas):
        total += log_potential(m, w)
    return float(total)


@dataclass(frozen=True)
class GridPoint:
    z: float
    cauchy: float
    log_potential: float
    derivative: float

    @property
    def mismatch(self) -> float:
        return abs(self.derivative - self.cauchy)


def _log_potential_at(
    kind: OperationKind, measures: Sequence[DiscreteMeasure], z: float, tau: float | None
) -> float:
    return free_log_potential(solve_free(kind, measures, z, tau), *measures)


def free_convolve_grid(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure | None,
    kind: OperationKind | str,
    z_grid: Sequence[float],
    tau: float | None = None,
) -> list[GridPoint]:
    """
    Tabulate G and the log-potential on a z-grid.

    Each row also carries a centered difference of the log-potential with a
    step well inside the distance to the support bound; it should reproduce G.
    """
    kind = OperationKind.parse(kind)
    measures = [mu] if kind is OperationKind.COMPRESSION else [mu, nu]
    bound = free_support_bound(kind, measures)
    rows = []
    for z in z_grid:
        z = float(z)
        sol = solve_free(kind, measures, z, tau)
        h = min(1e-4 * max(1.0, abs(z)), (z - bound) / 4.0)
        up = _log_potential_at(kind, measures, z + h, tau)
        down = _log_potential_at(kind, measures, z - h, tau)
        rows.append(
            GridPoint(
                z=z,
                cauchy=free_cauchy(sol),
                log_potential=free_log_potential(sol, *measures),
                derivative=(up - down) / (2.0 * h),
            )
        )
    return rows


def _invert_free(
    func: Callable[[float], float], target: float, bound: float, label: str
) -> float:
    """z > bound with func(z) = target for a function decreasing to 0."""
    width = max(1.0, abs(bound))
    lo = bound + 1e-6 * width
    top = func(lo)
    if not top >= target:
        raise DomainError(
            f"{label}: level {target!r} is not attained above the bound (max {top!r})"
        )
    step = width
    hi = bound + step
    while func(hi) > target:
        step *= 2.0
        hi = bound + step
        if step > 2.0**settings.BRACKET_MAX_DOUBLINGS:
            raise ConvergenceError(f"{label}: no upper bracket", diagnostics={"target": target})
    return float(
        brentq(
            lambda x: func(x) - target,
            lo,
            hi,
            xtol=settings.ROOT_XTOL * max(abs(lo), abs(hi)),
            rtol=_RTOL,
        )
    )


def free_cauchy_inverse(
    kind: OperationKind | str,
    measures: Sequence[DiscreteMeasure],
    g: float,
    tau: float | None = None,
) -> float:
    """The z above the support bound where the free operation's G equals g."""
    kind = OperationKind.parse(kind)
    if not g > 0:
        raise DomainError(f"Cauchy level g={g!r} must be positive")
    bound = free_support_bound(kind, measures)
    return _invert_free(
        lambda x: free_cauchy(solve_free(kind, measures, x, tau)), g, bound, "free_cauchy_inverse"
    )


def free_r_transform(mu: DiscreteMeasure, nu: DiscreteMeasure, s: float) -> float:
    """R of μ ⊞ ν, obtained by inverting the subordination-derived G."""
    return free_cauchy_inverse(OperationKind.ADDITIVE, [mu, nu], s) - 1.0 / s


def compressed_r_transform(mu: DiscreteMeasure, tau: float, s: float) -> float:
    """R of [μ]_τ, obtained by inverting the subordination-derived G."""
    return free_cauchy_inverse(OperationKind.COMPRESSION, [mu], s, tau) - 1.0 / s


def free_s_transform(mu: DiscreteMeasure, nu: DiscreteMeasure, w: float) -> float:
    """S of μ ⊠ ν: invert z ↦ z G(z) − 1, then S(w) = ((1 + w)/w) / z."""
    if not w > 0:
        raise DomainError(f"S-transform level w={w!r} must be positive")
    measures = [mu, nu]
    bound = free_support_bound(OperationKind.MULTIPLICATIVE, measures)

    def j_free(x: float) -> float:
        return x * free_cauchy(solve_multiplicative_many(measures, x)) - 1.0

    z = _invert_free(j_free, w, bound, "free_s_transform")
    return (1.0 + w) / w / z


def large_z_moments(
    cauchy: Callable[[float], float],
    radius: float,
    order: int = 3,
    cauchy_left: Callable[[float], float] | None = None,
    nodes: int = 24,
) -> np.ndarray:
    """
    Moments m_1..m_order of a measure supported in [−radius, radius].

    z G(z) = 1 + Σ_k m_k z^(−k) is interpolated in t = radius / z at Chebyshev
    nodes with |t| ≤ ½ and differentiated at t = 0. With `cauchy_left` the
    nodes straddle 0, which keeps the higher derivatives well conditioned.
    """
    if order < 1:
        raise DomainError("order must be at least 1")
    radius = max(1.0, float(radius))
    lo = -0.5 if cauchy_left is not None else 0.0
    t = lo + (0.5 - lo) * (chebpts1(nodes) + 1.0) / 2.0
    y = []
    for tk in t:
        z = radius / float(tk)
        y.append(z * (cauchy(z) if z > 0 else cauchy_left(z)))
    series = Chebyshev.fit(t, y, deg=nodes - 1, domain=[lo, 0.5])
    coef = np.array(
        [series.deriv(k)(0.0) / math.factorial(k) for k in range(1, order + 1)]
    )
    return coef * radius ** np.arange(1, order + 1)


def _reflected_cauchy(
    kind: OperationKind, measures: Sequence[DiscreteMeasure], tau: float | None
) -> Callable[[float], float]:
    """G left of the support, from the mirrored problem: G(z) = −G⁻(−z)."""
    mirrored = [scale_pushforward(m, -1.0) for m in measures]
    return lambda x: -free_cauchy(solve_free(kind, mirrored, -x, tau))


def free_moments(
    kind: OperationKind | str,
    measures: Sequence[DiscreteMeasure],
    order: int = 3,
    tau: float | None = None,
) -> np.ndarray:
    """First moments of the free operation's output, read off its Cauchy transform."""
    kind = OperationKind.parse(kind)
    left = None
    if kind is OperationKind.ADDITIVE:
        radius = max(
            abs(sum(m.e_plus for m in measures)), abs(sum(m.e_minus for m in measures))
        )
        left = _reflected_cauchy(kind, measures, tau)
    elif kind is OperationKind.MULTIPLICATIVE:
        radius = math.prod(m.e_plus for m in measures)
    else:
        radius = max(abs(measures[0].e_plus), abs(measures[0].e_minus))
        left = _reflected_cauchy(kind, measures, tau)
    return large_z_moments(
        lambda x: free_cauchy(solve_free(kind, measures, x, tau)),
        radius,
        order,
        cauchy_left=left,
    )
