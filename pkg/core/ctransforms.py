"""
Real-axis Cauchy transform of a DiscreteMeasure and its relatives.

Every transform here is evaluated right of the support, where G and J are
strictly decreasing; inverses are found by monotone bracketing followed by
scipy's brentq and one guarded Newton step.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from core.config import settings
from core.errors import ConvergenceError, DomainError
from core.measures import DiscreteMeasure, require_nonnegative

logger = logging.getLogger(__name__)

_RTOL = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class TransformDomain:
    """A measure together with the gap kept from E+ when bracketing inverses."""

    measure: DiscreteMeasure
    eps: float = field(default_factory=lambda: settings.INVERSE_EPS)

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps!r}")

    @property
    def lower(self) -> float:
        return self.measure.e_plus

    def contains(self, s: float) -> bool:
        return s > self.lower

    def cauchy_inverse(self, g: float) -> float:
        return cauchy_inverse(self.measure, g, eps=self.eps)


def _require_right_of_support(m: DiscreteMeasure, s: float, name: str) -> None:
    if not s > m.e_plus:
        raise DomainError(f"{name} needs s > E+={m.e_plus!r}, got s={s!r}")


def cauchy_G(m: DiscreteMeasure, s: float) -> float:
    _require_right_of_support(m, s, "cauchy_G")
    return float(np.sum(m.weights / (s - m.atoms)))


def cauchy_G_prime(m: DiscreteMeasure, s: float) -> float:
    _require_right_of_support(m, s, "cauchy_G_prime")
    return float(-np.sum(m.weights / (s - m.atoms) ** 2))


def j_transform(m: DiscreteMeasure, s: float) -> float:
    """J(s) = s G(s) − 1, summed as Σ w x / (s − x) to avoid cancellation."""
    _require_right_of_support(m, s, "j_transform")
    return float(np.sum(m.weights * m.atoms / (s - m.atoms)))


def j_transform_prime(m: DiscreteMeasure, s: float) -> float:
    _require_right_of_support(m, s, "j_transform_prime")
    return float(-np.sum(m.weights * m.atoms / (s - m.atoms) ** 2))


def attainable_cauchy_range(m: DiscreteMeasure) -> tuple[float, float]:
    """
    Values taken by G on (E+, ∞).

    The top atom carries positive mass, so G blows up at E+ and every
    positive level is attained; R(s) is therefore defined for all s > 0.
    """
    return (0.0, math.inf)


def invert_decreasing(
    func: Callable[[float], float],
    deriv: Callable[[float], float] | None,
    target: float,
    pole: float,
    label: str = "inverse",
    eps: float | None = None,
) -> float:
    """
    Solve func(s) = target for s in (pole, ∞).

    func must decrease strictly from +∞ at pole+ toward a limit below target.
    The lower end starts at pole + eps and moves toward the pole; the upper end
    doubles its distance from the pole until the level is crossed.
    """
    width = max(1.0, abs(pole))
    eps = settings.INVERSE_EPS if eps is None else eps

    lo = pole + eps * width
    shrinks = 0
    while func(lo) < target:
        eps /= 16.0
        shrinks += 1
        lo = pole + eps * width
        if lo <= pole:
            raise ConvergenceError(
                f"{label}: level {target!r} not reached next to the pole {pole!r}",
                diagnostics={"target": target, "pole": pole, "shrinks": shrinks},
            )

    step = width
    hi = pole + step
    doublings = 0
    while func(hi) > target:
        step *= 2.0
        hi = pole + step
        doublings += 1
        if doublings > settings.BRACKET_MAX_DOUBLINGS:
            raise ConvergenceError(
                f"{label}: no upper bracket for level {target!r}",
                diagnostics={"target": target, "pole": pole, "last_hi": hi},
            )
    if hi <= lo:
        hi = lo + step
    logger.debug(f"{label} bracket [{lo!r}, {hi!r}] after {doublings} doublings")

    def shifted(s: float) -> float:
        return func(s) - target

    f_lo, f_hi = shifted(lo), shifted(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    root = brentq(
        shifted, lo, hi, xtol=settings.ROOT_XTOL * max(abs(lo), abs(hi)), rtol=_RTOL
    )

    if deriv is not None:
        r0 = shifted(root)
        slope = deriv(root)
        if slope != 0.0 and r0 != 0.0:
            candidate = root - r0 / slope
            if candidate > pole and abs(shifted(candidate)) < abs(r0):
                root = candidate
    return float(root)


def cauchy_inverse(m: DiscreteMeasure, g: float, eps: float | None = None) -> float:
    """The unique s > E+ with G(s) = g."""
    if not (g > 0 and math.isfinite(g)):
        raise DomainError(f"Cauchy level g={g!r} is outside the attainable range (0, inf)")
    if m.is_point_mass:
        return m.e_plus + 1.0 / g
    s = invert_decreasing(
        lambda s: cauchy_G(m, s),
        lambda s: cauchy_G_prime(m, s),
        g,
        m.e_plus,
        label="cauchy_inverse",
        eps=eps,
    )
    residual = abs(cauchy_G(m, s) - g)
    # one ulp of s already moves G by |G'(s)| * spacing(s)
    floor = 4.0 * abs(cauchy_G_prime(m, s)) * float(np.spacing(s))
    if residual > max(1e-12 * g, floor):
        raise ConvergenceError(
            f"cauchy_inverse: residual {residual:.3e} at level g={g!r}",
            diagnostics={"g": g, "s": s, "residual": residual},
        )
    return s


def r_transform(m: DiscreteMeasure, s: float) -> float:
    """R(s) = G⁻¹(s) − 1/s."""
    if m.is_point_mass:
        return m.e_plus
    return cauchy_inverse(m, s) - 1.0 / s


def _require_s_transform_domain(m: DiscreteMeasure) -> None:
    require_nonnegative(m)
    if m.mean == 0:
        raise DomainError("S-transform needs a measure with nonzero mean")


def j_inverse(m: DiscreteMeasure, u: float) -> float:
    """The unique s > E+ with J(s) = u, for positive-support m with nonzero mean."""
    _require_s_transform_domain(m)
    if not (u > 0 and math.isfinite(u)):
        raise DomainError(f"J level u={u!r} is outside the attainable range (0, inf)")
    if m.is_point_mass:
        c = m.e_plus
        return c * (1.0 + u) / u
    return invert_decreasing(
        lambda s: j_transform(m, s),
        lambda s: j_transform_prime(m, s),
        u,
        m.e_plus,
        label="j_inverse",
    )


def psi(m: DiscreteMeasure, u: float) -> float:
    """ψ(u) = (1/u) G(1/u) − 1, i.e. J(1/u), for 0 < u < 1/E+."""
    if not u > 0:
        raise DomainError(f"psi is evaluated at u > 0, got {u!r}")
    return j_transform(m, 1.0 / u)


def chi(m: DiscreteMeasure, w: float) -> float:
    """Inverse of ψ near 0: χ(w) = 1 / J⁻¹(w)."""
    return 1.0 / j_inverse(m, w)


def psi_and_chi(
    m: DiscreteMeasure,
) -> tuple[Callable[[float], float], Callable[[float], float]]:
    _require_s_transform_domain(m)
    return (lambda u: psi(m, u)), (lambda w: chi(m, w))


def s_transform(m: DiscreteMeasure, w: float) -> float:
    """S(w) = ((1 + w)/w) χ(w)."""
    _require_s_transform_domain(m)
    if m.is_point_mass:
        return 1.0 / m.e_plus
    return (1.0 + w) / w * chi(m, w)
