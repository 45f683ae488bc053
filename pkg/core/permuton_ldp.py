"""
Block histograms of permutation tuples.

A d-tuple of permutations of [N] puts each index i into the cell
r = (r_1, …, r_d) of an m^d grid, where r_j is the block of σ_j(i). The number
of tuples with prescribed cell counts N_r is N! ((N/m)!)^(md) / Π_r N_r!, and
(1/N) log of its share of (N!)^d approaches the entropy of the block density.
"""

import itertools
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from core.errors import DomainError

logger = logging.getLogger(__name__)

ENUMERATION_CAP = 1_000_000


@dataclass(frozen=True, eq=False)
class BlockHistogram:
    """Counts N_r on the grid [m]^d, stored as an int array of shape (m,)*d."""

    n: int
    m: int
    d: int
    counts: np.ndarray

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise DomainError(f"N={self.n} and m={self.m} must be positive")
        if self.d < 2:
            raise DomainError(f"d={self.d} must be at least 2")
        if self.n % self.m:
            raise DomainError(f"m={self.m} does not divide N={self.n}")
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (self.m,) * self.d:
            raise DomainError(f"counts must have shape {(self.m,) * self.d}, got {counts.shape}")
        if np.any(counts < 0):
            raise DomainError("cell counts must be nonnegative")
        if int(counts.sum()) != self.n:
            raise DomainError(f"cell counts sum to {int(counts.sum())}, expected N={self.n}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_cells(
        cls, n: int, m: int, d: int, cells: Mapping[tuple[int, ...], int]
    ) -> "BlockHistogram":
        """Build from 1-based cell labels, e.g. {(1, 1): 2, (2, 2): 2}."""
        counts = np.zeros((m,) * d, dtype=np.int64)
        for cell, count in cells.items():
            if len(cell) != d or not all(1 <= r <= m for r in cell):
                raise DomainError(f"cell {cell} is not in [{m}]^{d}")
            counts[tuple(r - 1 for r in cell)] += count
        return cls(n, m, d, counts)

    @property
    def slab(self) -> int:
        return self.n // self.m

    @property
    def cells(self) -> dict[tuple[int, ...], int]:
        return {
            tuple(int(r) + 1 for r in idx): int(c)
            for idx, c in np.ndenumerate(self.counts)
            if c
        }

    @property
    def is_consistent(self) -> bool:
        """Every slab r_j = v holds exactly N/m indices."""
        for axis in range(self.d):
            others = tuple(a for a in range(self.d) if a != axis)
            if np.any(self.counts.sum(axis=others) != self.slab):
                return False
        return True

    @property
    def density(self) -> np.ndarray:
        """γ_r = N_r m^d / N; identically 1 for the flat histogram."""
        return self.counts * self.m**self.d / self.n

    def relabeled(self, axis: int, perm: Sequence[int]) -> "BlockHistogram":
        """Permute the block labels along one axis."""
        counts = np.take(self.counts, np.argsort(np.asarray(perm)), axis=axis)
        return BlockHistogram(self.n, self.m, self.d, counts)

    def to_dict(self) -> dict:
        return {
            "N": self.n,
            "m": self.m,
            "d": self.d,
            "counts": {",".join(map(str, cell)): c for cell, c in self.cells.items()},
        }


def flat_histogram(n: int, m: int, d: int) -> BlockHistogram:
    if n % m**d:
        raise DomainError(f"flat histogram needs m^d={m**d} to divide N={n}")
    return BlockHistogram(n, m, d, np.full((m,) * d, n // m**d))


def diagonal_histogram(n: int, m: int, d: int) -> BlockHistogram:
    """All mass on the cells (v, …, v): every permutation keeps the blocks aligned."""
    counts = np.zeros((m,) * d, dtype=np.int64)
    for v in range(m):
        counts[(v,) * d] = n // m
    return BlockHistogram(n, m, d, counts)


def tuple_count(h: BlockHistogram) -> int:
    """Exact number of σ ∈ S_N^d with histogram h; 0 when the marginals disagree."""
    if not h.is_consistent:
        return 0
    numerator = math.factorial(h.n) * math.factorial(h.slab) ** (h.m * h.d)
    denominator = math.prod(math.factorial(int(c)) for c in h.counts.ravel())
    count, rem = divmod(numerator, denominator)
    assert rem == 0
    return count


def histogram_of_tuple(perms: Sequence[Sequence[int]], m: int) -> BlockHistogram:
    """
    Histogram of a tuple of permutations.

    Args:
        perms: d permutations of 0..N−1 (0-based images)
        m: Number of blocks per axis, dividing N

    Returns:
        BlockHistogram with N_r = #{i : σ_j(i) in block r_j for all j}
    """
    perms = np.asarray(perms, dtype=np.int64)
    d, n = perms.shape
    if n % m:
        raise DomainError(f"m={m} does not divide N={n}")
    for row in perms:
        if not np.array_equal(np.sort(row), np.arange(n)):
            raise DomainError("every row must be a permutation of 0..N-1")
    blocks = perms // (n // m)
    flat = np.ravel_multi_index(tuple(blocks), (m,) * d)
    counts = np.bincount(flat, minlength=m**d).reshape((m,) * d)
    return BlockHistogram(n, m, d, counts)


def brute_force_count(h: BlockHistogram) -> int:
    """Scan all (N!)^d tuples; the reference for tuple_count at tiny sizes."""
    total = math.factorial(h.n) ** h.d
    if total > ENUMERATION_CAP:
        raise DomainError(f"(N!)^d = {total} tuples exceeds the enumeration cap")
    perms = list(itertools.permutations(range(h.n)))
    return sum(
        1
        for tup in itertools.product(perms, repeat=h.d)
        if np.array_equal(histogram_of_tuple(tup, h.m).counts, h.counts)
    )


def enumerate_histograms(n: int, m: int, d: int) -> list[BlockHistogram]:
    """All marginal-consistent histograms, as multisets of N cells."""
    if n % m:
        raise DomainError(f"m={m} does not divide N={n}")
    cells = m**d
    if math.comb(n + cells - 1, n) > ENUMERATION_CAP:
        raise DomainError(f"too many histograms to enumerate for N={n}, m={m}, d={d}")
    found = []
    for multiset in itertools.combinations_with_replacement(range(cells), n):
        counts = np.bincount(multiset, minlength=cells).reshape((m,) * d)
        h = BlockHistogram(n, m, d, counts)
        if h.is_consistent:
            found.append(h)
    return found


def block_log_probability(h: BlockHistogram) -> float:
    """(1/N) log(tuple_count / (N!)^d) through log-gamma; −inf when the count is 0."""
    if not h.is_consistent:
        return -math.inf
    log_count = (
        gammaln(h.n + 1)
        + h.m * h.d * gammaln(h.slab + 1)
        - float(np.sum(gammaln(h.counts + 1.0)))
    )
    return float((log_count - h.d * gammaln(h.n + 1)) / h.n)


def rate_functional(h: BlockHistogram) -> float:
    """−Σ_r m^(−d) γ_r log γ_r with 0 log 0 = 0."""
    gamma = h.density
    return float(-np.sum(xlogy(gamma, gamma)) / h.m**h.d)


def gap(h: BlockHistogram) -> float:
    return block_log_probability(h) - rate_functional(h)


def sample_histograms(
    n: int, m: int, d: int, samples: int, seed: int
) -> np.ndarray:
    """Histograms of uniformly drawn tuples, shape (samples, m, …, m)."""
    if n % m:
        raise DomainError(f"m={m} does not divide N={n}")
    rng = np.random.default_rng(seed)
    blocks = [
        rng.permuted(np.tile(np.arange(n), (samples, 1)), axis=1) // (n // m)
        for _ in range(d)
    ]
    flat = np.ravel_multi_index(tuple(blocks), (m,) * d)
    offsets = np.arange(samples)[:, None] * m**d
    counts = np.bincount((flat + offsets).ravel(), minlength=samples * m**d)
    return counts.reshape((samples,) + (m,) * d)


def sample_histogram(n: int, m: int, d: int, seed: int) -> BlockHistogram:
    rng = np.random.default_rng(seed)
    return histogram_of_tuple([rng.permutation(n) for _ in range(d)], m)


def empirical_frequency(h: BlockHistogram, samples: int, seed: int) -> tuple[float, float]:
    """Share of sampled tuples landing on h, with its binomial standard error."""
    drawn = sample_histograms(h.n, h.m, h.d, samples, seed)
    hits = np.all(drawn == h.counts, axis=tuple(range(1, h.d + 1)))
    p = float(hits.mean())
    return p, math.sqrt(max(p * (1.0 - p), 1.0 / samples) / samples)


@dataclass(frozen=True)
class LdpRow:
    n: int
    block_log_probability: float
    rate_functional: float

    @property
    def gap(self) -> float:
        return self.block_log_probability - self.rate_functional

    @property
    def scaled_gap(self) -> float:
        return self.n * abs(self.gap)


HISTOGRAM_FAMILIES = {"flat": flat_histogram, "diag": diagonal_histogram}


def ldp_convergence(family: str, n_list: Sequence[int], m: int, d: int) -> list[LdpRow]:
    """Block log-probability next to the rate along a fixed histogram family."""
    try:
        build = HISTOGRAM_FAMILIES[family]
    except KeyError:
        raise DomainError(
            f"unknown histogram family {family!r}; expected one of {sorted(HISTOGRAM_FAMILIES)}"
        ) from None
    rows = []
    for n in n_list:
        h = build(n, m, d)
        rows.append(LdpRow(n, block_log_probability(h), rate_functional(h)))
        logger.debug(f"{family} N={n} gap={rows[-1].gap:.3e}")
    return rows
