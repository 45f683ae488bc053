"""
Entropic optimal transport with logarithmic costs, solved by Sinkhorn scaling.

The regularization strength is fixed at 1, so the kernel is K = exp(c) with
c(x, y) = log(z − x ⊙ y); the optimal coupling is Π_ij = μ_i ν_j a_i b_j K_ij
and its value is −Σ μ log a − Σ ν log b.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import logsumexp, xlogy

from core.config import settings
from core.errors import ConvergenceError, DomainError, InconsistencyError
from core.measures import (
    DiscreteMeasure,
    make_measure,
    quantile_grid,
    quantiles,
    require_nonnegative,
)
from core.operations import OperationKind, combine
from core.subordination import SubordinationSolution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostSpec:
    kind: OperationKind
    z: float
    tau: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", OperationKind.parse(self.kind))
        if self.kind is OperationKind.COMPRESSION:
            if self.tau is None or not 0.0 < self.tau < 1.0:
                raise DomainError(f"compression cost needs tau in (0, 1), got {self.tau!r}")

    def bound(self, mu: DiscreteMeasure, nu: DiscreteMeasure | None = None) -> float:
        if self.kind is OperationKind.ADDITIVE:
            return mu.e_plus + nu.e_plus
        if self.kind is OperationKind.MULTIPLICATIVE:
            return mu.e_plus * nu.e_plus
        return mu.e_plus

    def validate(self, mu: DiscreteMeasure, nu: DiscreteMeasure | None = None) -> None:
        if self.kind is OperationKind.COMPRESSION:
            if not self.z > mu.e_plus:
                raise DomainError(f"z={self.z!r} must exceed E+(mu)={mu.e_plus!r}")
            return
        if nu is None:
            raise DomainError(f"{self.kind.value} cost needs a second marginal")
        if self.kind is OperationKind.MULTIPLICATIVE:
            require_nonnegative(nu, name="nu")
        bound = self.bound(mu, nu)
        if not self.z > bound:
            op = "+" if self.kind is OperationKind.ADDITIVE else "*"
            raise DomainError(
                f"z={self.z!r} must exceed E+(mu){op}E+(nu)={bound!r}"
            )

    def near_bound(self, mu: DiscreteMeasure, nu: DiscreteMeasure | None = None) -> bool:
        bound = self.bound(mu, nu)
        return self.z - bound < settings.LOG_DOMAIN_MARGIN * max(1.0, abs(bound))


def compression_marginal(tau: float) -> DiscreteMeasure:
    """(1 − τ) δ_0 + τ δ_1; the cost only sees y through 1[y = 1]."""
    return make_measure([0.0, 1.0], [1.0 - tau, tau])


def second_marginal(
    cost: CostSpec, nu: DiscreteMeasure | None
) -> DiscreteMeasure:
    if cost.kind is OperationKind.COMPRESSION:
        return compression_marginal(cost.tau)
    return nu


@dataclass(frozen=True, eq=False)
class CouplingSolution:
    pi: np.ndarray
    potentials: tuple[np.ndarray, ...]
    value: float
    iterations: int
    marginal_residual: float
    kernel: np.ndarray
    margins: tuple[np.ndarray, ...]
    residual_history: tuple[float, ...] = ()
    log_domain: bool = False
    cost: CostSpec | None = field(default=None)
    atoms: tuple[np.ndarray, ...] = ()

    @property
    def a_pot(self) -> np.ndarray:
        return self.potentials[0]

    @property
    def b_pot(self) -> np.ndarray:
        return self.potentials[1]

    @property
    def arity(self) -> int:
        return self.kernel.ndim


def _as_weights(m: DiscreteMeasure | np.ndarray) -> np.ndarray:
    if isinstance(m, DiscreteMeasure):
        return m.weights
    return np.asarray(m, dtype=np.float64)


def build_kernel(
    cost: CostSpec, mu: DiscreteMeasure, nu: DiscreteMeasure | None = None
) -> np.ndarray:
    """K = exp(c): z − x ⊙ y, or (z − x)^1[y=1] against the two-atom marginal."""
    cost.validate(mu, nu)
    x = mu.atoms
    if cost.kind is OperationKind.COMPRESSION:
        kernel = np.column_stack([np.ones_like(x), cost.z - x])
    else:
        kernel = cost.z - combine(x[:, None], nu.atoms[None, :], cost.kind)
    if np.any(kernel <= 0):
        raise DomainError(
            f"cost-domain error: kernel has nonpositive entries (min {kernel.min()!r})"
        )
    return kernel


def build_tensor_kernel(
    kind: OperationKind | str, z: float, measures: Sequence[DiscreteMeasure]
) -> np.ndarray:
    """K_{i_1…i_d} = z − x_{i_1} ⊙ … ⊙ x_{i_d}, stored dense."""
    kind = OperationKind.parse(kind)
    d = len(measures)
    if not 2 <= d <= 4:
        raise DomainError(f"multi-marginal problems support 2 <= d <= 4, got d={d}")
    entries = d * math.prod(m.size for m in measures)
    if entries > settings.MAX_TENSOR_ENTRIES:
        raise DomainError(
            f"d * prod(N_j) = {entries} exceeds the dense cap {settings.MAX_TENSOR_ENTRIES}"
        )
    if kind is OperationKind.MULTIPLICATIVE:
        for k, m in enumerate(measures[1:], start=2):
            require_nonnegative(m, name=f"marginal {k}")
    combined = reduce(
        lambda acc, m: combine(np.expand_dims(acc, -1), m.atoms, kind),
        measures[1:],
        measures[0].atoms,
    )
    kernel = z - combined
    if np.any(kernel <= 0):
        raise DomainError(
            f"cost-domain error: z={z!r} does not exceed every combination of atoms"
        )
    return kernel


def coupling_from_potentials(
    kernel: np.ndarray, margins: Sequence[np.ndarray], potentials: Sequence[np.ndarray]
) -> np.ndarray:
    """Π = K ⊙ (μ_1 a_1) ⊗ … ⊗ (μ_d a_d)."""
    scaled = [np.asarray(m) * np.asarray(a) for m, a in zip(margins, potentials)]
    return kernel * reduce(np.multiply.outer, scaled)


def potential_value(
    margins: Sequence[np.ndarray], potentials: Sequence[np.ndarray]
) -> float:
    """−Σ_j E_{μ_j}[log a_j]."""
    return float(-sum(np.dot(m, np.log(a)) for m, a in zip(margins, potentials)))


def _marginals(pi: np.ndarray) -> list[np.ndarray]:
    axes = range(pi.ndim)
    return [pi.sum(axis=tuple(k for k in axes if k != j)) for j in axes]


def _fix_gauge(margins: Sequence[np.ndarray], potentials: list[np.ndarray]) -> list[np.ndarray]:
    """Rescale so that every Σ μ_j log a_j equals their common average."""
    sums = [float(np.dot(m, np.log(a))) for m, a in zip(margins, potentials)]
    mean = sum(sums) / len(sums)
    return [a * math.exp(mean - s) for a, s in zip(potentials, sums)]


def sinkhorn(
    K: np.ndarray,
    mu: DiscreteMeasure | np.ndarray,
    nu: DiscreteMeasure | np.ndarray,
    tol: float | None = None,
    max_iter: int | None = None,
    log_domain: bool = False,
) -> CouplingSolution:
    """
    Alternate a ← 1/(K (ν b)), b ← 1/(Kᵀ (μ a)) until both marginals of Π are
    within tol (max-abs) of their targets.

    The ℓ1 row error after each sweep is recorded; it can only decrease.
    """
    tol = settings.SINKHORN_TOL if tol is None else tol
    max_iter = settings.SINKHORN_MAX_ITER if max_iter is None else max_iter
    K = np.asarray(K, dtype=np.float64)
    mu_w, nu_w = _as_weights(mu), _as_weights(nu)
    if K.shape != (mu_w.size, nu_w.size):
        raise DomainError(f"kernel shape {K.shape} does not match marginals")
    if np.any(K <= 0):
        raise DomainError("sinkhorn needs a strictly positive kernel")

    history: list[float] = []
    residual = math.inf
    if log_domain:
        log_k = np.log(K)
        log_mu, log_nu = np.log(mu_w), np.log(nu_w)
        f = np.zeros_like(mu_w)
        g = np.zeros_like(nu_w)
        for iteration in range(1, max_iter + 1):
            f = -logsumexp(log_k + (g + log_nu)[None, :], axis=1)
            g = -logsumexp(log_k + (f + log_mu)[:, None], axis=0)
            rows = mu_w * np.exp(f + logsumexp(log_k + (g + log_nu)[None, :], axis=1))
            err = np.abs(rows - mu_w)
            history.append(float(err.sum()))
            residual = float(err.max())
            if residual < tol:
                break
        a, b = np.exp(f), np.exp(g)
    else:
        a = np.ones_like(mu_w)
        b = np.ones_like(nu_w)
        for iteration in range(1, max_iter + 1):
            a = 1.0 / (K @ (b * nu_w))
            b = 1.0 / (K.T @ (a * mu_w))
            rows = mu_w * a * (K @ (b * nu_w))
            err = np.abs(rows - mu_w)
            history.append(float(err.sum()))
            residual = float(err.max())
            if residual < tol:
                break

    if not residual < tol:
        raise ConvergenceError(
            f"sinkhorn did not reach tol={tol:.1e} in {max_iter} iterations",
            diagnostics={"iterations": max_iter, "marginal_residual": residual},
        )

    margins = (mu_w, nu_w)
    potentials = _fix_gauge(margins, [a, b])
    pi = coupling_from_potentials(K, margins, potentials)
    residual = max(float(np.abs(p - m).max()) for p, m in zip(_marginals(pi), margins))
    logger.debug(f"sinkhorn converged in {iteration} iterations (residual {residual:.2e})")
    return CouplingSolution(
        pi=pi,
        potentials=tuple(potentials),
        value=potential_value(margins, potentials),
        iterations=iteration,
        marginal_residual=residual,
        kernel=K,
        margins=margins,
        residual_history=tuple(history),
        log_domain=log_domain,
    )


def solve_ot(
    cost: CostSpec,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure | None = None,
    tol: float | None = None,
    max_iter: int | None = None,
) -> CouplingSolution:
    """Build the kernel for `cost` and run Sinkhorn, in log-domain next to the bound."""
    K = build_kernel(cost, mu, nu)
    second = second_marginal(cost, nu)
    log_domain = cost.near_bound(mu, nu)
    if log_domain:
        logger.warning(f"z={cost.z!r} is within the log-domain margin of the bound")
    sol = sinkhorn(K, mu, second, tol=tol, max_iter=max_iter, log_domain=log_domain)
    return replace(sol, cost=cost, atoms=(mu.atoms, second.atoms))


def direct_value(sol: CouplingSolution) -> float:
    """E_Π[log K] − KL(Π | ⊗ μ_j)."""
    product = reduce(np.multiply.outer, sol.margins)
    pi = sol.pi
    energy = float(np.sum(pi * np.log(sol.kernel)))
    entropy = float(np.sum(xlogy(pi, pi / product)))
    return energy - entropy


def ot_value(
    sol: CouplingSolution,
    cost: CostSpec | None = None,
    mu: DiscreteMeasure | None = None,
    nu: DiscreteMeasure | None = None,
) -> float:
    """
    The optimal value from the potentials, cross-checked against the direct
    objective; a disagreement above VALUE_CONSISTENCY_TOL is an error.
    """
    if mu is not None and mu.size != sol.pi.shape[0]:
        raise DomainError("mu does not match the coupling's first axis")
    value = potential_value(sol.margins, sol.potentials)
    check = direct_value(sol)
    if abs(value - check) > settings.VALUE_CONSISTENCY_TOL * max(1.0, abs(value)):
        raise InconsistencyError(
            f"potential value {value!r} and direct objective {check!r} disagree",
            diagnostics={"potential": value, "direct": check},
        )
    return value


def coupling_cauchy(sol: CouplingSolution, cost: CostSpec | None = None) -> float:
    """E_Π[1/(z − x ⊙ y)]; only the y = 1 column counts for compression."""
    cost = cost or sol.cost
    if cost is not None and cost.kind is OperationKind.COMPRESSION:
        return float(np.sum(sol.pi[:, 1] / sol.kernel[:, 1]))
    return float(np.sum(sol.pi / sol.kernel))


def product_value(sol: CouplingSolution) -> float:
    """E_{⊗μ_j}[log K], the value of the independent coupling."""
    product = reduce(np.multiply.outer, sol.margins)
    return float(np.sum(product * np.log(sol.kernel)))


def closed_form_coupling(
    sub: SubordinationSolution, mu: DiscreteMeasure, nu: DiscreteMeasure | None = None
) -> np.ndarray:
    """
    The optimal coupling expressed through the subordination functions.

    ⊞/⊠:  Π_ij = μ_i ν_j ω (z − x_i ⊙ y_j) / ((ω_μ − x_i)(ω_ν − y_j))
    [·]_τ: Π_i1 = μ_i (z − x_i)/(ω − x_i),  Π_i0 = μ_i (ω − z)/(ω − x_i)
    """
    x, z, omega = mu.atoms, sub.z, sub.omega
    if sub.kind is OperationKind.COMPRESSION:
        denom = omega - x
        return np.column_stack(
            [mu.weights * (omega - z) / denom, mu.weights * (z - x) / denom]
        )
    y = nu.atoms
    numer = omega * (z - combine(x[:, None], y[None, :], sub.kind))
    denom = (sub.omega_mu - x)[:, None] * (sub.omega_nu - y)[None, :]
    return np.outer(mu.weights, nu.weights) * numer / denom


def multimarginal_sinkhorn(
    K: np.ndarray,
    margins: Sequence[DiscreteMeasure | np.ndarray],
    tol: float | None = None,
    max_iter: int | None = None,
) -> CouplingSolution:
    """
    Cyclic scaling of d potential vectors on a dense d-way kernel.

    At d = 2 this is the same iteration as `sinkhorn`, but the contractions are
    tensor sums rather than matrix products and both marginals are tested
    before stopping, so results agree within the stopping tolerance, not bit
    for bit.
    """
    tol = settings.SINKHORN_TOL if tol is None else tol
    max_iter = settings.SINKHORN_MAX_ITER if max_iter is None else max_iter
    K = np.asarray(K, dtype=np.float64)
    weights = tuple(_as_weights(m) for m in margins)
    d = K.ndim
    if len(weights) != d or K.shape != tuple(w.size for w in weights):
        raise DomainError(f"kernel shape {K.shape} does not match the {len(weights)} marginals")
    if np.any(K <= 0):
        raise DomainError("multimarginal_sinkhorn needs a strictly positive kernel")

    def along(vec: np.ndarray, axis: int) -> np.ndarray:
        shape = [1] * d
        shape[axis] = vec.size
        return vec.reshape(shape)

    potentials = [np.ones_like(w) for w in weights]
    history: list[float] = []
    residual = math.inf
    for iteration in range(1, max_iter + 1):
        for j in range(d):
            scaled = K
            for k in range(d):
                if k != j:
                    scaled = scaled * along(weights[k] * potentials[k], k)
            potentials[j] = 1.0 / scaled.sum(axis=tuple(k for k in range(d) if k != j))
        pi = coupling_from_potentials(K, weights, potentials)
        errors = [np.abs(p - w) for p, w in zip(_marginals(pi), weights)]
        history.append(float(sum(e.sum() for e in errors)))
        residual = max(float(e.max()) for e in errors)
        if residual < tol:
            break

    if not residual < tol:
        raise ConvergenceError(
            f"multimarginal_sinkhorn did not reach tol={tol:.1e} in {max_iter} iterations",
            diagnostics={"iterations": max_iter, "marginal_residual": residual},
        )

    potentials = _fix_gauge(weights, potentials)
    pi = coupling_from_potentials(K, weights, potentials)
    logger.debug(f"multimarginal sinkhorn (d={d}) converged in {iteration} sweeps")
    return CouplingSolution(
        pi=pi,
        potentials=tuple(potentials),
        value=potential_value(weights, potentials),
        iterations=iteration,
        marginal_residual=residual,
        kernel=K,
        margins=weights,
        residual_history=tuple(history),
    )


def solve_multimarginal(
    kind: OperationKind | str,
    z: float,
    measures: Sequence[DiscreteMeasure],
    tol: float | None = None,
    max_iter: int | None = None,
) -> CouplingSolution:
    kind = OperationKind.parse(kind)
    K = build_tensor_kernel(kind, z, measures)
    sol = multimarginal_sinkhorn(K, measures, tol=tol, max_iter=max_iter)
    return replace(sol, cost=CostSpec(kind, z), atoms=tuple(m.atoms for m in measures))


def _check_monge_domain(
    mu: DiscreteMeasure, nu: DiscreteMeasure, z: float, kind: OperationKind
) -> None:
    if kind is OperationKind.COMPRESSION:
        raise DomainError("monge_bounds covers the additive and multiplicative costs")
    if kind is OperationKind.MULTIPLICATIVE:
        require_nonnegative(mu, name="mu")
        require_nonnegative(nu, name="nu")
    bound = float(combine(mu.e_plus, nu.e_plus, kind))
    if not z > bound:
        raise DomainError(f"z={z!r} must exceed the support bound {bound!r}")


def monge_bounds(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    z: float,
    op: OperationKind | str = OperationKind.ADDITIVE,
    n: int | None = None,
) -> tuple[float, float]:
    """
    (inf, sup) over couplings of E_Π[log(z − x ⊙ y)], entropy switched off.

    The cost is strictly submodular, so the sup is the antitone pairing and
    the inf the comonotone one. With n the marginals are replaced by n-atom
    quantile grids; otherwise the quantile integrals are evaluated exactly.
    """
    kind = OperationKind.parse(op)
    _check_monge_domain(mu, nu, z, kind)
    if n is not None:
        x, y = quantile_grid(mu, n), quantile_grid(nu, n)
        inf_value = float(np.mean(np.log(z - combine(x, y, kind))))
        sup_value = float(np.mean(np.log(z - combine(x, y[::-1], kind))))
        return inf_value, sup_value

    def integrate(breaks: np.ndarray, antitone: bool) -> float:
        breaks = np.unique(np.concatenate((breaks, [1.0])))
        breaks = breaks[(breaks > 0) & (breaks <= 1)]
        lefts = np.concatenate(([0.0], breaks[:-1]))
        widths = breaks - lefts
        keep = widths > 0
        mids = 0.5 * (lefts[keep] + breaks[keep])
        x = quantiles(mu, mids)
        y = quantiles(nu, 1.0 - mids if antitone else mids)
        return float(np.dot(widths[keep], np.log(z - combine(x, y, kind))))

    inf_value = integrate(np.concatenate((mu.cumulative, nu.cumulative)), antitone=False)
    sup_value = integrate(np.concatenate((mu.cumulative, 1.0 - nu.cumulative)), antitone=True)
    return inf_value, sup_value


def brute_force_2x2(
    mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec
) -> tuple[float, float]:
    """
    Maximize the entropic objective over the one-parameter family of 2×2
    couplings, q = Π[0, 0].

    Bounded scalar search locates the optimum; the stationarity condition
    Π00 Π11 / (Π01 Π10) = K00 K11 / (K01 K10) then polishes it.
    """
    second = second_marginal(cost, nu)
    if mu.size != 2 or second.size != 2:
        raise DomainError("brute_force_2x2 needs two-atom marginals")
    K = build_kernel(cost, mu, nu)
    m0, n0 = mu.weights[0], second.weights[0]
    product = np.outer(mu.weights, second.weights)
    log_k = np.log(K)
    lo, hi = max(0.0, m0 + n0 - 1.0), min(m0, n0)

    def plan(q: float) -> np.ndarray:
        return np.array([[q, m0 - q], [n0 - q, 1.0 - m0 - n0 + q]])

    def objective(q: float) -> float:
        pi = np.clip(plan(q), 0.0, None)
        return float(np.sum(pi * log_k) - np.sum(xlogy(pi, pi / product)))

    if hi - lo <= 0:
        return lo, objective(lo)

    result = minimize_scalar(
        lambda q: -objective(q),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12, "maxiter": 1000},
    )
    q = float(result.x)

    log_cross = log_k[0, 0] + log_k[1, 1] - log_k[0, 1] - log_k[1, 0]

    def stationarity(t: float) -> float:
        p = plan(t)
        return log_cross - (
            math.log(p[0, 0]) + math.log(p[1, 1]) - math.log(p[0, 1]) - math.log(p[1, 0])
        )

    width = hi - lo
    a = max(lo + 1e-14 * width, q - 1e-6 * width)
    b = min(hi - 1e-14 * width, q + 1e-6 * width)
    try:
        if stationarity(a) > 0 > stationarity(b):
            q = float(brentq(stationarity, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps))
    except ValueError:
        logger.warning(f"brute_force_2x2: stationarity polish skipped at q={q!r}")
    return q, objective(q)
