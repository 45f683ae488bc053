"""
Finite free probability: expected characteristic polynomials of randomly
rotated diagonal matrices.

Two exact routes are kept side by side:
    - permutation sums (Ryser permanents, exhaustive enumeration), and
    - closed coefficient formulas for ⊞_N, ⊠_N and compression,
evaluated in extended precision with mpmath. Monte-Carlo estimates over Haar
unitaries check the quadrature identities between the two pictures.
"""

import itertools
import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce

import mpmath
import numpy as np
import scipy.linalg

from core.config import settings
from core.errors import DomainError, NotRealRootedError
from core.measures import (
    DiscreteMeasure,
    make_measure,
    quantile_grid,
    quantiles,
    wasserstein1,
)
from core.operations import OperationKind, combine
from core.subordination import free_log_potential, solve_free

logger = logging.getLogger(__name__)

ComplexDense = np.ndarray


# ---------------------------------------------------------------------------
# Monic polynomials
# ---------------------------------------------------------------------------


def _mpf(x) -> mpmath.mpf:
    return x if isinstance(x, mpmath.mpf) else mpmath.mpf(x)


@dataclass(frozen=True)
class MonicPoly:
    """Ascending coefficients c_0 … c_{N−1}, 1 held as mpmath numbers."""

    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(_mpf(c) for c in self.coeffs)
        if len(coeffs) < 1:
            raise DomainError("a monic polynomial needs at least its leading coefficient")
        if coeffs[-1] != 1:
            raise DomainError(f"leading coefficient must be 1, got {coeffs[-1]}")
        if not all(mpmath.isfinite(c) for c in coeffs):
            raise DomainError("polynomial coefficients must be finite")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_roots(cls, roots: Sequence[float]) -> "MonicPoly":
        with mpmath.workdps(settings.FINITE_FREE_DPS):
            coeffs = [mpmath.mpf(1)]
            for r in roots:
                r = _mpf(float(r)) if not isinstance(r, mpmath.mpf) else r
                shifted = [mpmath.mpf(0)] + coeffs
                for k in range(len(coeffs)):
                    shifted[k] -= r * coeffs[k]
                coeffs = shifted
        return cls(tuple(coeffs))

    @classmethod
    def from_signed_elementary(cls, a: Sequence) -> "MonicPoly":
        """p(z) = Σ_i (−1)^i a_i z^(N−i) with a_0 = 1."""
        n = len(a) - 1
        coeffs = [None] * (n + 1)
        for i, value in enumerate(a):
            coeffs[n - i] = value if i % 2 == 0 else -value
        return cls(tuple(coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def signed_elementary(self) -> list:
        n = self.degree
        return [self.coeffs[n - i] if i % 2 == 0 else -self.coeffs[n - i] for i in range(n + 1)]

    def evaluate(self, z) -> mpmath.mpf:
        with mpmath.workdps(settings.FINITE_FREE_DPS):
            return mpmath.polyval(list(reversed(self.coeffs)), _mpf(z))

    def __call__(self, z: float) -> float:
        return float(self.evaluate(z))

    @property
    def float_coeffs(self) -> np.ndarray:
        return np.array([float(c) for c in self.coeffs])

    def to_dict(self) -> dict:
        return {"coeffs": self.float_coeffs.tolist()}


def _require_same_degree(polys: Sequence[MonicPoly]) -> int:
    if len(polys) < 2:
        raise DomainError("finite free convolution needs at least two polynomials")
    degrees = {p.degree for p in polys}
    if len(degrees) != 1:
        raise DomainError(f"degree mismatch: {sorted(degrees)}")
    return degrees.pop()


def _stable_sum(terms: list) -> mpmath.mpf:
    return mpmath.fsum(sorted(terms, key=lambda t: abs(t)))


def _additive_pair(p: MonicPoly, q: MonicPoly) -> MonicPoly:
    n = p.degree
    a, b = p.signed_elementary(), q.signed_elementary()
    fact = [math.factorial(k) for k in range(n + 1)]
    out = []
    for k in range(n + 1):
        terms = []
        for i in range(k + 1):
            j = k - i
            weight = mpmath.mpf(fact[n - i] * fact[n - j]) / (fact[n] * fact[n - k])
            terms.append(weight * a[i] * b[j])
        out.append(_stable_sum(terms))
    out[0] = mpmath.mpf(1)
    return MonicPoly.from_signed_elementary(out)


def finite_free_additive(*polys: MonicPoly) -> MonicPoly:
    """
    p ⊞_N q, folded left over any number of degree-N polynomials.

    In signed elementary form, ĉ_k = Σ_{i+j=k} (N−i)!(N−j)! / (N!(N−k)!) a_i a'_j.
    """
    _require_same_degree(polys)
    with mpmath.workdps(settings.FINITE_FREE_DPS):
        return reduce(_additive_pair, polys)


def _multiplicative_pair(p: MonicPoly, q: MonicPoly) -> MonicPoly:
    n = p.degree
    a, b = p.signed_elementary(), q.signed_elementary()
    out = [a[k] * b[k] / math.comb(n, k) for k in range(n + 1)]
    out[0] = mpmath.mpf(1)
    return MonicPoly.from_signed_elementary(out)


def finite_free_multiplicative(*polys: MonicPoly) -> MonicPoly:
    """p ⊠_N q with ĉ_k = a_k a'_k / C(N, k); every factor after the first has roots ≥ 0."""
    _require_same_degree(polys)
    for k, p in enumerate(polys[1:], start=2):
        if any(c < 0 for c in p.signed_elementary()):
            raise DomainError(f"factor {k} has a negative root")
    with mpmath.workdps(settings.FINITE_FREE_DPS):
        return reduce(_multiplicative_pair, polys)


def finite_free_compress(p: MonicPoly, k: int) -> MonicPoly:
    """k!/N! · p^(N−k), the expected characteristic polynomial of a k×k minor."""
    n = p.degree
    if not 1 <= k <= n:
        raise DomainError(f"compression size k={k} must lie in [1, {n}]")
    with mpmath.workdps(settings.FINITE_FREE_DPS):
        coeffs = list(p.coeffs)
        for _ in range(n - k):
            coeffs = [coeffs[m] * m for m in range(1, len(coeffs))]
        scale = mpmath.mpf(math.factorial(k)) / math.factorial(n)
        coeffs = [c * scale for c in coeffs]
        coeffs[-1] = mpmath.mpf(1)
    return MonicPoly(tuple(coeffs))


def finite_free_op(
    kind: OperationKind | str, polys: Sequence[MonicPoly], k: int | None = None
) -> MonicPoly:
    kind = OperationKind.parse(kind)
    if kind is OperationKind.ADDITIVE:
        return finite_free_additive(*polys)
    if kind is OperationKind.MULTIPLICATIVE:
        return finite_free_multiplicative(*polys)
    if k is None:
        raise DomainError("compression needs the minor size k")
    return finite_free_compress(polys[0], k)


# ---------------------------------------------------------------------------
# Real roots by Sturm sequences
# ---------------------------------------------------------------------------


def _negligible(x, scale) -> bool:
    return abs(x) <= scale * mpmath.mpf(10) ** (-(settings.FINITE_FREE_DPS // 2))


def _trim(coeffs: list, scale) -> list:
    coeffs = list(coeffs)
    while coeffs and _negligible(coeffs[-1], scale):
        coeffs.pop()
    return coeffs


def _derivative(coeffs: list) -> list:
    return [coeffs[m] * m for m in range(1, len(coeffs))]


def _divmod(num: list, den: list) -> tuple[list, list]:
    num = list(num)
    lead = den[-1]
    span = len(num) - len(den)
    quotient = [mpmath.mpf(0)] * (span + 1)
    for k in range(span, -1, -1):
        coef = num[k + len(den) - 1] / lead
        quotient[k] = coef
        for j, d in enumerate(den):
            num[k + j] -= coef * d
    return quotient, num[: len(den) - 1]


def _normalized(coeffs: list) -> list:
    scale = max(abs(c) for c in coeffs)
    return [c / scale for c in coeffs]


def _polyval(coeffs: list, x) -> mpmath.mpf:
    acc = mpmath.mpf(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def sturm_chain(coeffs: list) -> list[list]:
    """p, p', −rem(p, p'), …; the last entry is gcd(p, p') up to a positive factor."""
    chain = [_normalized(coeffs), _normalized(_derivative(coeffs))]
    while len(chain[-1]) > 1:
        scale = max(abs(c) for c in chain[-2])
        _, rem = _divmod(chain[-2], chain[-1])
        rem = _trim(rem, scale)
        if not rem:
            break
        chain.append(_normalized([-c for c in rem]))
    return chain


def sign_variations(chain: list[list], x) -> int:
    signs = [mpmath.sign(_polyval(p, x)) for p in chain]
    signs = [s for s in signs if s != 0]
    return sum(1 for s, t in zip(signs, signs[1:]) if s != t)


def _root_bracket(coeffs: list) -> tuple:
    """Laguerre–Samuelson interval intersected with the Cauchy bound, padded."""
    monic = [c / coeffs[-1] for c in coeffs]
    n = len(monic) - 1
    radius = 1 + max(abs(c) for c in monic[:-1])
    lo, hi = -radius, radius
    if n >= 2:
        s1 = -monic[n - 1]
        s2 = monic[n - 1] ** 2 - 2 * monic[n - 2]
        mean = s1 / n
        spread = mpmath.sqrt(max(s2 / n - mean**2, 0) * (n - 1))
        lo, hi = max(lo, mean - spread), min(hi, mean + spread)
    pad = mpmath.mpf("1e-8") * max(1, hi - lo, abs(lo), abs(hi))
    return lo - pad, hi + pad


def _refine(coeffs: list, deriv: list, a, b):
    f = lambda x: _polyval(coeffs, x)  # noqa: E731
    try:
        root = mpmath.findroot(f, (a, b), solver="anderson", verify=False)
        if not (a <= root <= b):
            raise ValueError("left the bracket")
    except (ValueError, ZeroDivisionError):
        root = mpmath.findroot(f, (a, b), solver="bisect", verify=False, maxsteps=400)
    slope = _polyval(deriv, root)
    if slope != 0:
        candidate = root - f(root) / slope
        if a <= candidate <= b and abs(f(candidate)) < abs(f(root)):
            root = candidate
    return root


def _isolate_by_sturm(chain: list[list], coeffs: list, lo, hi, depth: int = 0) -> list:
    count = sign_variations(chain, lo) - sign_variations(chain, hi)
    if count <= 0:
        return []
    if count == 1:
        if _polyval(coeffs, hi) == 0:
            return [(hi, hi)]
        return [(lo, hi)]
    if depth > 400:
        raise NotRealRootedError("Sturm bisection did not separate the roots")
    mid = (lo + hi) / 2
    return _isolate_by_sturm(chain, coeffs, lo, mid, depth + 1) + _isolate_by_sturm(
        chain, coeffs, mid, hi, depth + 1
    )


def _simple_roots(coeffs: list, chain: list[list]) -> list:
    """Distinct real roots of a squarefree polynomial."""
    n = len(coeffs) - 1
    if n == 1:
        return [-coeffs[0] / coeffs[1]]
    lo, hi = _root_bracket(coeffs)
    count = sign_variations(chain, lo) - sign_variations(chain, hi)
    if count != n:
        raise NotRealRootedError(
            f"found {count} real roots of a degree-{n} squarefree factor",
            diagnostics={"degree": n, "real_roots": count},
        )

    points = min(settings.BRACKET_SCAN_POINTS, max(64, 16 * n))
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    nodes = [mid - half * mpmath.cos(mpmath.pi * (k + 0.5) / points) for k in range(points)]
    grid = [lo] + nodes + [hi]
    values = [_polyval(coeffs, x) for x in grid]
    brackets = []
    for x, y, fx, fy in zip(grid, grid[1:], values, values[1:]):
        if fx == 0:
            brackets.append((x, x))
        elif fx * fy < 0:
            brackets.append((x, y))
    if len(brackets) != n:
        logger.debug(f"grid found {len(brackets)} of {n} sign changes, using Sturm counts")
        brackets = _isolate_by_sturm(chain, coeffs, lo, hi)

    deriv = _derivative(coeffs)
    return [a if a == b else _refine(coeffs, deriv, a, b) for a, b in brackets]


def _roots_with_multiplicity(coeffs: list) -> list:
    n = len(coeffs) - 1
    if n == 0:
        return []
    if n == 1:
        return [-coeffs[0] / coeffs[1]]
    chain = sturm_chain(coeffs)
    gcd = chain[-1]
    if len(gcd) > 1:
        squarefree, _ = _divmod(_normalized(coeffs), gcd)
        distinct = _simple_roots(squarefree, sturm_chain(squarefree))
        return distinct + _roots_with_multiplicity(gcd)
    return _simple_roots(_normalized(coeffs), chain)


def real_roots(p: MonicPoly) -> np.ndarray:
    """All N roots with multiplicity, sorted; raises if p is not real-rooted."""
    with mpmath.workdps(2 * settings.FINITE_FREE_DPS):
        roots = _roots_with_multiplicity(list(p.coeffs))
    if len(roots) != p.degree:
        raise NotRealRootedError(
            f"isolated {len(roots)} real roots for degree {p.degree}",
            diagnostics={"degree": p.degree, "found": len(roots)},
        )
    return np.sort(np.array([float(r) for r in roots]))


def measure_of(p: MonicPoly) -> DiscreteMeasure:
    """Empirical root measure, weight 1/N per root."""
    return make_measure(real_roots(p))


# ---------------------------------------------------------------------------
# Permutation side
# ---------------------------------------------------------------------------


_RESYNC_EVERY = 64


def permanent_ryser(matrix: np.ndarray) -> float:
    """
    Ryser's formula with Gray-code updates of the row sums.

    Row sums are recomputed from the current subset every _RESYNC_EVERY steps
    and the 2^N signed terms are added exactly with math.fsum; Ryser's terms
    cancel heavily, so rounding drift would otherwise dominate at N ≈ 10.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise DomainError("permanent needs a square matrix")
    bits = np.arange(n)
    row_sums = np.zeros(n)
    terms = np.empty(2**n - 1)
    gray = 0
    for k in range(1, 2**n):
        bit = (k & -k).bit_length() - 1
        gray ^= 1 << bit
        if k % _RESYNC_EVERY == 0:
            row_sums = matrix @ ((gray >> bits) & 1).astype(np.float64)
        elif gray >> bit & 1:
            row_sums += matrix[:, bit]
        else:
            row_sums -= matrix[:, bit]
        sign = -1.0 if gray.bit_count() % 2 else 1.0
        terms[k - 1] = sign * np.prod(row_sums)
    return (-1.0) ** n * math.fsum(terms)


def _charpoly_matrix(a: np.ndarray, b: np.ndarray, z: float, kind: OperationKind) -> np.ndarray:
    return z - combine(np.asarray(a, dtype=np.float64)[:, None], np.asarray(b)[None, :], kind)


def perm_expected_charpoly_at(
    a: Sequence[float], b: Sequence[float], z: float, op: OperationKind | str
) -> float:
    """E_σ[Π_i (z − a_i ⊙ b_σ(i))] = perm(M)/N! with M_ij = z − a_i ⊙ b_j."""
    kind = OperationKind.parse(op)
    n = len(a)
    if len(b) != n:
        raise DomainError("diagonals must have equal length")
    if n > settings.PERMANENT_MAX_N:
        raise DomainError(f"N={n} exceeds the permanent cap {settings.PERMANENT_MAX_N}")
    return permanent_ryser(_charpoly_matrix(a, b, z, kind)) / math.factorial(n)


def enumerate_expected_charpoly_at(
    a: Sequence[float], b: Sequence[float], z: float, op: OperationKind | str
) -> float:
    """Same expectation by summing over every permutation."""
    kind = OperationKind.parse(op)
    n = len(a)
    if n > settings.ENUMERATION_MAX_N:
        raise DomainError(f"N={n} exceeds the enumeration cap {settings.ENUMERATION_MAX_N}")
    perms = np.array(list(itertools.permutations(range(n))))
    b = np.asarray(b, dtype=np.float64)
    values = np.prod(z - combine(np.asarray(a, dtype=np.float64)[None, :], b[perms], kind), axis=1)
    return float(math.fsum(values) / len(perms))


def permanent_nodes(a: Sequence[float], b: Sequence[float], op: OperationKind | str) -> np.ndarray:
    """N + 1 interpolation nodes to the right of every root."""
    kind = OperationKind.parse(op)
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    top = float(np.max(combine(a[:, None], b[None, :], kind)))
    spread = max(1.0, float(np.ptp(a)) + float(np.ptp(b)), abs(top))
    return top + spread * (1.0 + np.arange(len(a) + 1) / len(a))


def permanent_interpolation(
    a: Sequence[float], b: Sequence[float], op: OperationKind | str
) -> MonicPoly:
    """The degree-N polynomial through perm(M(z))/N! at N + 1 nodes."""
    nodes = permanent_nodes(a, b, op)
    values = [perm_expected_charpoly_at(a, b, float(z), op) for z in nodes]
    with mpmath.workdps(settings.FINITE_FREE_DPS):
        powers = range(len(nodes))
        vander = mpmath.matrix([[mpmath.mpf(float(z)) ** k for k in powers] for z in nodes])
        coeffs = mpmath.lu_solve(vander, mpmath.matrix([mpmath.mpf(v) for v in values]))
        coeffs = [coeffs[k] for k in range(len(nodes))]
        coeffs[-1] = mpmath.mpf(1)
    return MonicPoly(tuple(coeffs))


def oracle_relative_error(
    poly: MonicPoly, a: Sequence[float], b: Sequence[float], op: OperationKind | str
) -> float:
    """max_k |poly(z_k) − perm(M(z_k))/N!| / |perm(M(z_k))/N!| over the interpolation nodes."""
    errors = []
    for z in permanent_nodes(a, b, op):
        exact = perm_expected_charpoly_at(a, b, float(z), op)
        errors.append(abs(poly(float(z)) - exact) / abs(exact))
    return max(errors)


def compress_subset_average(roots: Sequence[float], k: int, z: float) -> float:
    """Average over k-subsets S of Π_{i∈S}(z − r_i)."""
    n = len(roots)
    if n > settings.ENUMERATION_MAX_N:
        raise DomainError(f"N={n} exceeds the enumeration cap {settings.ENUMERATION_MAX_N}")
    if not 1 <= k <= n:
        raise DomainError(f"subset size k={k} must lie in [1, {n}]")
    roots = np.asarray(roots, dtype=np.float64)
    subsets = np.array(list(itertools.combinations(range(n), k)))
    values = np.prod(z - roots[subsets], axis=1)
    return float(math.fsum(values) / len(subsets))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McEstimate:
    mean: complex | float
    stderr: float
    samples: int
    seed: int

    def z_score(self, exact: float) -> float:
        if self.stderr == 0:
            return 0.0 if abs(self.mean - exact) == 0 else math.inf
        return float(abs(self.mean - exact) / self.stderr)


@dataclass(frozen=True)
class _Moments:
    count: int
    mean: complex
    m2: float

    @classmethod
    def of(cls, values: np.ndarray) -> "_Moments":
        mean = complex(np.mean(values))
        return cls(values.size, mean, float(np.sum(np.abs(values - mean) ** 2)))

    def merge(self, other: "_Moments") -> "_Moments":
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + abs(delta) ** 2 * self.count * other.count / count
        return _Moments(count, mean, m2)


def _chunked_estimate(
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    samples: int,
    seed: int,
    threads: int | None,
    real: bool,
) -> McEstimate:
    """
    Split the budget into fixed-size chunks seeded by (seed, chunk index) and
    merge them in index order, so the result does not depend on `threads`.
    """
    if samples < settings.MC_MIN_SAMPLES:
        raise DomainError(f"samples={samples} is below the minimum {settings.MC_MIN_SAMPLES}")
    chunk = settings.MC_CHUNK_SIZE
    sizes = [min(chunk, samples - start) for start in range(0, samples, chunk)]

    def run(index: int) -> _Moments:
        rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        values = sampler(rng, sizes[index])
        return _Moments.of(np.real(values) if real else values)

    threads = threads or settings.THREADS
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    merged = reduce(_Moments.merge, parts)
    stderr = math.sqrt(merged.m2 / (merged.count - 1)) / math.sqrt(merged.count)
    mean = merged.mean.real if real else merged.mean
    logger.debug(f"merged {len(parts)} chunks: mean={mean!r} stderr={stderr:.3e}")
    return McEstimate(mean=mean, stderr=stderr, samples=merged.count, seed=seed)


def _haar_batch(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    shape = (count, n, n)
    ginibre = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    q, r = np.linalg.qr(ginibre)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[..., None, :]


def haar_unitary(n: int, seed: int | np.random.Generator | None = None) -> ComplexDense:
    """Complex Ginibre, QR, and R's diagonal phases divided out."""
    if not 1 <= n <= settings.HAAR_MAX_N:
        raise DomainError(f"n={n} must lie in [1, {settings.HAAR_MAX_N}]")
    rng = np.random.default_rng(seed)
    ginibre = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    q, r = scipy.linalg.qr(ginibre)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def unitarity_error(u: ComplexDense) -> float:
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def _conjugated(u: np.ndarray, diag: np.ndarray) -> np.ndarray:
    return (u * diag[None, None, :]) @ np.conj(np.swapaxes(u, -1, -2))


def mc_unitary_quadrature(
    diagonals: Sequence[Sequence[float]],
    op: OperationKind | str,
    z: float,
    samples: int,
    seed: int,
    k: int | None = None,
    threads: int | None = None,
) -> McEstimate:
    """
    E[det(z − M)] over independent Haar rotations of the diagonals.

    add:   M = A_1 + U_2 A_2 U_2* + … + U_d A_d U_d*
    mul:   M = A_1 · U_2 A_2 U_2* ⋯ U_d A_d U_d*
    comp:  M = [U A_1 U*]_k, the top-left k×k block
    """
    kind = OperationKind.parse(op)
    diags = [np.asarray(d, dtype=np.float64) for d in diagonals]
    n = diags[0].size
    if any(d.size != n for d in diags):
        raise DomainError("diagonals must have equal length")
    if not 1 <= n <= settings.HAAR_MAX_N:
        raise DomainError(f"n={n} must lie in [1, {settings.HAAR_MAX_N}]")
    if kind is OperationKind.COMPRESSION and (k is None or not 1 <= k <= n):
        raise DomainError(f"minor size k={k!r} must lie in [1, {n}]")

    def sampler(rng: np.random.Generator, count: int) -> np.ndarray:
        if kind is OperationKind.COMPRESSION:
            rotated = _conjugated(_haar_batch(rng, n, count), diags[0])[:, :k, :k]
            return np.linalg.det(z * np.eye(k) - rotated)
        matrix = np.broadcast_to(np.diag(diags[0]).astype(complex), (count, n, n))
        for diag in diags[1:]:
            rotated = _conjugated(_haar_batch(rng, n, count), diag)
            matrix = matrix + rotated if kind is OperationKind.ADDITIVE else matrix @ rotated
        return np.linalg.det(z * np.eye(n) - matrix)

    return _chunked_estimate(sampler, samples, seed, threads, real=True)


def mc_quadrature(
    a: Sequence[float],
    b: Sequence[float] | None,
    op: OperationKind | str,
    z: float,
    samples: int,
    seed: int,
    k: int | None = None,
    threads: int | None = None,
) -> McEstimate:
    kind = OperationKind.parse(op)
    diagonals = [a] if kind is OperationKind.COMPRESSION else [a, b]
    return mc_unitary_quadrature(diagonals, kind, z, samples, seed, k=k, threads=threads)


def mc_perm_quadrature(
    diagonals: Sequence[Sequence[float]],
    op: OperationKind | str,
    z: float,
    samples: int,
    seed: int,
    threads: int | None = None,
) -> McEstimate:
    """Π_i (z − a_{1,i} ⊙ a_{2,σ_2(i)} ⊙ …) averaged over d − 1 uniform permutations."""
    kind = OperationKind.parse(op)
    diags = [np.asarray(d, dtype=np.float64) for d in diagonals]
    n = diags[0].size

    def sampler(rng: np.random.Generator, count: int) -> np.ndarray:
        combined = np.broadcast_to(diags[0], (count, n))
        for diag in diags[1:]:
            perms = rng.permuted(np.tile(np.arange(n), (count, 1)), axis=1)
            combined = combine(combined, diag[perms], kind)
        return np.prod(z - combined, axis=1)

    return _chunked_estimate(sampler, samples, seed, threads, real=True)


def enum_perm_quadrature(
    diagonals: Sequence[Sequence[float]], op: OperationKind | str, z: float
) -> float:
    """Exhaustive average over (N!)^(d−1) permutation tuples, N ≤ 6 and d ≤ 3."""
    kind = OperationKind.parse(op)
    diags = [np.asarray(d, dtype=np.float64) for d in diagonals]
    n, d = diags[0].size, len(diags)
    if n > 6 or d > 3:
        raise DomainError(f"enumeration is capped at N <= 6 and d <= 3, got N={n}, d={d}")
    perms = np.array(list(itertools.permutations(range(n))))
    # One permutation axis per rotated diagonal, then the index axis.
    combined = diags[0].reshape([1] * (d - 1) + [n])
    for axis, diag in enumerate(diags[1:]):
        shape = [1] * (d - 1) + [n]
        shape[axis] = len(perms)
        combined = combine(combined, diag[perms].reshape(shape), kind)
    values = np.prod(z - combined, axis=-1)
    return float(math.fsum(values.ravel()) / values.size)


def exact_quadrature(
    diagonals: Sequence[Sequence[float]],
    op: OperationKind | str,
    z: float,
    k: int | None = None,
) -> float:
    """Permutation-side value matching mc_unitary_quadrature."""
    kind = OperationKind.parse(op)
    if kind is OperationKind.COMPRESSION:
        return finite_free_compress(MonicPoly.from_roots(diagonals[0]), k)(z)
    if len(diagonals) == 2:
        return perm_expected_charpoly_at(diagonals[0], diagonals[1], z, kind)
    return enum_perm_quadrature(diagonals, kind, z)


# ---------------------------------------------------------------------------
# Convergence toward the free operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    value: float
    limit: float
    w1: float | None = None

    @property
    def error(self) -> float:
        return abs(self.value - self.limit)


def arcsine_reference(n: int = 64) -> DiscreteMeasure:
    """Midpoint quantiles T((i − ½)/n) of the arcsine law on [−2, 2], T(t) = 2 sin(π(t − ½))."""
    t = (np.arange(1, n + 1) - 0.5) / n
    return make_measure(2.0 * np.sin(np.pi * (t - 0.5)))


def finite_free_of_grids(
    kind: OperationKind | str,
    measures: Sequence[DiscreteMeasure],
    n: int,
    tau: float | None = None,
) -> MonicPoly:
    """⊞_N / ⊠_N / compression of the polynomials with roots T_j(i/N)."""
    kind = OperationKind.parse(kind)
    if n > settings.FINITE_FREE_MAX_N:
        raise DomainError(f"N={n} exceeds the cap {settings.FINITE_FREE_MAX_N}")
    polys = [MonicPoly.from_roots(quantile_grid(m, n)) for m in measures]
    if kind is OperationKind.COMPRESSION:
        k = math.floor(tau * n)
        if k < 1:
            raise DomainError(f"floor(tau*N) = {k} leaves an empty minor")
        return finite_free_compress(polys[0], k)
    return finite_free_op(kind, polys)


def asymptotic_logdet_check(
    measures: Sequence[DiscreteMeasure],
    kind: OperationKind | str,
    z: float,
    n_list: Sequence[int],
    tau: float | None = None,
    reference: DiscreteMeasure | None = None,
) -> list[ConvergenceRow]:
    """
    (1/deg) Σ log(z − root_i) of the finite free operation on quantile grids,
    next to the subordination value; optionally the W1 distance of the root
    measure to a reference.
    """
    kind = OperationKind.parse(kind)
    limit = free_log_potential(solve_free(kind, measures, z, tau), *measures)
    rows = []
    for n in n_list:
        roots = real_roots(finite_free_of_grids(kind, measures, n, tau))
        if not z > roots[-1]:
            raise DomainError(f"z={z!r} is not right of the finite free roots at N={n}")
        value = float(np.mean(np.log(z - roots)))
        w1 = wasserstein1(make_measure(roots), reference) if reference is not None else None
        rows.append(ConvergenceRow(n=n, value=value, limit=limit, w1=w1))
        logger.debug(f"N={n}: value={value!r} error={abs(value - limit):.3e}")
    return rows


def horn_quantile_violation(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    approx: DiscreteMeasure,
    levels: Sequence[float],
) -> float:
    """max over s, t with s + t > 1 of T_approx(s + t − 1) − T_μ(s) − T_ν(t)."""
    s, t = np.meshgrid(np.asarray(levels), np.asarray(levels), indexing="ij")
    mask = s + t > 1.0
    s, t = s[mask], t[mask]
    lhs = quantiles(approx, s + t - 1.0)
    rhs = quantiles(mu, s) + quantiles(nu, t)
    return float(np.max(lhs - rhs)) if lhs.size else -math.inf
