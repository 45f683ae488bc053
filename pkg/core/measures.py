"""
Finitely supported probability measures on the real line.

A DiscreteMeasure keeps its atoms strictly increasing and its weights
normalized; every other module consumes measures through the helpers here
(quantiles, log-potentials, classical convolutions, Wasserstein-1).
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from core.config import settings
from core.errors import DomainError
from core.operations import OperationKind, combine

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.ascontiguousarray(self.atoms, dtype=np.float64)
        weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if atoms.ndim != 1 or weights.ndim != 1 or atoms.shape != weights.shape:
            raise DomainError("atoms and weights must be 1-D arrays of equal length")
        if atoms.size == 0:
            raise DomainError("a measure needs at least one atom")
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(weights))):
            raise DomainError("atoms and weights must be finite")
        if np.any(np.diff(atoms) <= 0):
            raise DomainError("atoms must be strictly increasing")
        if np.any(weights <= 0):
            raise DomainError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights sum to {weights.sum()!r}, expected 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return int(self.atoms.size)

    @property
    def e_minus(self) -> float:
        return float(self.atoms[0])

    @property
    def e_plus(self) -> float:
        return float(self.atoms[-1])

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.atoms))

    @property
    def is_point_mass(self) -> bool:
        return self.size == 1

    @property
    def cumulative(self) -> np.ndarray:
        """c_1 < … < c_n = 1, the right ends of the quantile steps."""
        c = np.cumsum(self.weights)
        c[-1] = 1.0
        return c

    def cdf(self, x: float) -> float:
        return float(self.weights[self.atoms <= x].sum())

    def __repr__(self) -> str:
        return f"DiscreteMeasure(atoms={self.atoms.tolist()}, weights={self.weights.tolist()})"


def make_measure(
    atoms: Sequence[float] | np.ndarray,
    weights: Sequence[float] | np.ndarray | None = None,
) -> DiscreteMeasure:
    """
    Build a normalized measure, sorting atoms and merging near-duplicates.

    Args:
        atoms: Atom positions, any order
        weights: Positive masses (uniform when omitted); rescaled to sum 1

    Returns:
        DiscreteMeasure with strictly increasing atoms
    """
    x = np.asarray(atoms, dtype=np.float64).ravel()
    if x.size == 0:
        raise DomainError("a measure needs at least one atom")
    if weights is None:
        w = np.full(x.size, 1.0 / x.size)
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size != x.size:
        raise DomainError(f"got {x.size} atoms but {w.size} weights")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
        raise DomainError("atoms and weights must be finite")
    if np.any(w <= 0):
        raise DomainError("weights must be positive")

    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]

    # Consecutive atoms within relative distance rtol share one group.
    rtol = settings.ATOM_MERGE_RTOL
    gaps = np.diff(x)
    scale = np.maximum(np.abs(x[1:]), np.abs(x[:-1]))
    new_group = gaps > rtol * scale
    group = np.concatenate(([0], np.cumsum(new_group)))
    n_groups = int(group[-1]) + 1
    merged_w = np.bincount(group, weights=w, minlength=n_groups)
    merged_x = np.bincount(group, weights=w * x, minlength=n_groups) / merged_w
    # Keep exact values for singleton groups.
    counts = np.bincount(group, minlength=n_groups)
    first = np.searchsorted(group, np.arange(n_groups), side="left")
    merged_x = np.where(counts == 1, x[first], merged_x)

    merged_w = merged_w / merged_w.sum()
    return DiscreteMeasure(merged_x, merged_w)


def point_mass(c: float) -> DiscreteMeasure:
    return make_measure([c], [1.0])


def quantile(m: DiscreteMeasure, t: float) -> float:
    """Left-continuous quantile T(t) = x_k for t in (c_{k-1}, c_k]."""
    if not (0.0 < t <= 1.0):
        raise DomainError(f"quantile level t={t!r} must lie in (0, 1]")
    return float(quantiles(m, np.asarray([t]))[0])


def quantiles(m: DiscreteMeasure, ts: np.ndarray) -> np.ndarray:
    """Vectorized quantile; levels are assumed to lie in (0, 1]."""
    idx = np.searchsorted(m.cumulative, np.asarray(ts, dtype=np.float64), side="left")
    return m.atoms[np.clip(idx, 0, m.size - 1)]


def quantile_grid(m: DiscreteMeasure, n: int) -> np.ndarray:
    """The values T(i/n), i = 1..n, used as diagonal matrix entries."""
    if n < 1:
        raise DomainError(f"grid size must be positive, got {n}")
    return quantiles(m, np.arange(1, n + 1) / n)


def classical_convolve(
    m: DiscreteMeasure, n: DiscreteMeasure, op: OperationKind | str
) -> DiscreteMeasure:
    """Law of X ⊙ Y for independent X ~ m and Y ~ n."""
    kind = OperationKind.parse(op)
    values = combine(m.atoms[:, None], n.atoms[None, :], kind)
    masses = m.weights[:, None] * n.weights[None, :]
    return make_measure(values.ravel(), masses.ravel())


def log_potential(m: DiscreteMeasure, z: float) -> float:
    """∫ log(z − x) m(dx) for z strictly right of the support."""
    if not z > m.e_plus:
        raise DomainError(f"z={z!r} must exceed E+={m.e_plus!r}")
    return float(np.dot(m.weights, np.log(z - m.atoms)))


def signed_log_potential(m: DiscreteMeasure, z: float) -> float:
    """∫ log|z − x| m(dx); z may sit anywhere except on an atom."""
    dist = np.abs(z - m.atoms)
    if np.any(dist <= settings.ATOM_MERGE_RTOL * np.maximum(np.abs(m.atoms), 1.0)):
        raise DomainError(f"z={z!r} coincides with an atom")
    return float(np.dot(m.weights, np.log(dist)))


def scale_pushforward(m: DiscreteMeasure, lam: float) -> DiscreteMeasure:
    """Image of m under x -> lam * x."""
    if lam == 0:
        raise DomainError("pushforward scale must be nonzero")
    atoms = m.atoms * lam
    weights = m.weights
    if lam < 0:
        atoms, weights = atoms[::-1], weights[::-1]
    return DiscreteMeasure(atoms.copy(), weights.copy())


def shift(m: DiscreteMeasure, c: float) -> DiscreteMeasure:
    return make_measure(m.atoms + c, m.weights)


def moment(m: DiscreteMeasure, k: int) -> float:
    if k < 0:
        raise DomainError(f"moment order must be nonnegative, got {k}")
    return float(np.dot(m.weights, m.atoms**k))


def wasserstein1(m: DiscreteMeasure, n: DiscreteMeasure) -> float:
    """∫_0^1 |T_m(t) − T_n(t)| dt, exact for step quantile functions."""
    breaks = np.union1d(m.cumulative, n.cumulative)
    breaks = breaks[breaks > 0]
    lefts = np.concatenate(([0.0], breaks[:-1]))
    widths = breaks - lefts
    keep = widths > 0
    mids = 0.5 * (lefts[keep] + breaks[keep])
    diff = np.abs(quantiles(m, mids) - quantiles(n, mids))
    return float(np.dot(widths[keep], diff))


def support_bound(m: DiscreteMeasure, n: DiscreteMeasure, op: OperationKind | str) -> float:
    """Right end of supp(m ⊙ n) for the additive or multiplicative kind."""
    kind = OperationKind.parse(op)
    return float(combine(m.e_plus, n.e_plus, kind))


def require_nonnegative(m: DiscreteMeasure, name: str = "measure") -> None:
    if m.e_minus < 0:
        raise DomainError(f"{name} must be supported in [0, inf), got E-={m.e_minus!r}")
