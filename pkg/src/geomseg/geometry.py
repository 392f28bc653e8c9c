"""S-type sets, hyperrectangles and the approximate intersection/exclusion operators.

An S-type set ``S(i, j)`` (``i < j``, 1-based) is the sublevel set

    { theta : sum_k s^k_ij(theta^k) <= Q[j-1] - Q[i-1] }

where ``s^k_ij`` is the cost of rows ``i .. j-1`` of series ``k`` at
``theta^k``; ``S(i, i)`` is the whole parameter domain. Sets are views over
the shared prefix statistics and never materialised. For the Gaussian model
they are balls.

Testing sets come in two flavours: an S-type set (or ``None`` once proven
empty) and an axis-aligned :class:`Hyperrect`. Every operator returns a
superset of the exact result, so pruning on an empty output is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .dp import RunState
from .model_cost import CostModel, DomainError, ModelKind, SegmentStats, TimeSeriesMatrix, segment_argmin

__all__ = [
    "BallRep",
    "CharPoints",
    "Hyperrect",
    "SSet",
    "UnsupportedOperatorError",
    "ball",
    "ball_disjoint",
    "ball_included",
    "char_points",
    "dim_roots",
    "make_sset",
    "rect_excl",
    "rect_inter",
    "s_eval",
    "sset_excl",
    "sset_inter",
]


class UnsupportedOperatorError(ValueError):
    """The requested operator is not available for this cost model."""


@dataclass(frozen=True, eq=False)
class SSet:
    i: int
    j: int
    delta: float
    data: TimeSeriesMatrix

    def __post_init__(self):
        if not 1 <= self.i <= self.j <= self.data.n + 1:
            raise IndexError(f"invalid S-type set indices i={self.i}, j={self.j} for n={self.data.n}")

    @property
    def full_space(self) -> bool:
        return self.i == self.j

    @property
    def model(self) -> CostModel:
        return self.data.model

    @property
    def count(self) -> int:
        return self.j - self.i

    def stats(self) -> SegmentStats:
        return self.data.stats(self.i, self.j)

    def _kernel_args(self):
        d = self.data
        return d.prefix_sums, d.prefix_second, d.model.code, d.model.phi_value, self.i - 1, self.j - 1, self.delta


def make_sset(i: int, j: int, run_state: RunState, data: TimeSeriesMatrix) -> SSet:
    """S-type set of rows ``i .. j-1`` with threshold ``Q[j-1] - Q[i-1]``."""
    if j - 1 > run_state.t:
        raise IndexError(f"S({i}, {j}) needs Q[{j - 1}] but the run is at t={run_state.t}")
    if not 1 <= i <= j:
        raise IndexError(f"invalid S-type set indices i={i}, j={j}")
    return SSet(i, j, float(run_state.qhat[j - 1] - run_state.qhat[i - 1]), data)


def _check_theta(model: CostModel, theta: np.ndarray) -> None:
    for k, th in enumerate(theta):
        try:
            model.check_theta(float(th))
        except DomainError as exc:
            raise DomainError(f"dimension {k}: {exc}") from exc


def _dim_terms(s: SSet):
    st = s.stats()
    return float(st.count), st.sums, st.second


def s_eval(s: SSet, theta) -> float:
    """``sum_k s^k(theta^k) - delta``; nonpositive exactly on the set."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    _check_theta(s.model, theta)
    if s.full_space:
        return -math.inf
    m, sums, second = _dim_terms(s)
    model = s.model
    total = sum(
        K.dim_value(model.code, model.phi_value, m, float(sums[k]), float(second[k]), float(theta[k]))
        for k in range(len(theta))
    )
    return float(total - s.delta)


@dataclass(frozen=True, eq=False)
class BallRep:
    center: np.ndarray
    radius_sq: float

    @property
    def empty(self) -> bool:
        return self.radius_sq < 0

    @property
    def radius(self) -> float:
        return math.sqrt(self.radius_sq) if self.radius_sq >= 0 else math.nan


def _require_gaussian(model: CostModel, op: str) -> None:
    if model.kind is not ModelKind.GAUSSIAN:
        raise UnsupportedOperatorError(f"{op} is only available for the Gaussian model, not {model.kind.value}")


def ball(s: SSet) -> BallRep:
    """Center and squared radius of a Gaussian S-type set."""
    _require_gaussian(s.model, "ball representation")
    if s.full_space:
        return BallRep(np.zeros(s.data.p), math.inf)
    st = s.stats()
    center = st.sums / st.count
    d = s.data
    r_sq = K.ball_radius_sq(d.prefix_sums, d.prefix_second, s.i - 1, s.j - 1, s.delta)
    return BallRep(center, float(r_sq))


@dataclass(frozen=True, eq=False)
class Hyperrect:
    """Axis-aligned box ``[lo, hi]``; ``empty`` marks a box proven empty."""

    lo: np.ndarray
    hi: np.ndarray
    empty: bool = False

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float)
        hi = np.array(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be vectors of equal length")
        if not self.empty and np.any(lo > hi):
            raise ValueError(f"lo must not exceed hi: {lo} > {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def full(cls, model: CostModel, p: int) -> "Hyperrect":
        lo, hi = model.box
        return cls(np.full(p, lo), np.full(p, hi))

    @classmethod
    def clamped(cls, lo, hi, model: CostModel) -> "Hyperrect":
        """Box with bounds clamped to the model's working domain."""
        dlo, dhi = model.box
        lo = np.clip(np.asarray(lo, dtype=float), dlo, dhi)
        hi = np.clip(np.asarray(hi, dtype=float), dlo, dhi)
        return cls(lo, hi, empty=bool(np.any(lo > hi)))

    @classmethod
    def make_empty(cls, p: int) -> "Hyperrect":
        return cls(np.full(p, np.nan), np.full(p, np.nan), empty=True)

    @property
    def p(self) -> int:
        return self.lo.shape[0]

    def contains(self, theta, tol: float = 0.0) -> bool:
        if self.empty:
            return False
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lo - tol) and np.all(theta <= self.hi + tol))

    def is_subset_of(self, other: "Hyperrect") -> bool:
        if self.empty:
            return True
        if other.empty:
            return False
        return bool(np.all(self.lo >= other.lo) and np.all(self.hi <= other.hi))


@dataclass(frozen=True, eq=False)
class CharPoints:
    """Minimal point ``c``, closest point ``m`` and farthest point ``M``."""

    c: np.ndarray
    m: np.ndarray
    M: np.ndarray


def char_points(s: SSet, r: Hyperrect) -> CharPoints:
    """Characteristic points of ``s`` relative to the box ``r``.

    ``M`` can hold an infinite coordinate when the box is unbounded in a
    direction where ``s^k`` grows without bound.
    """
    if r.empty:
        raise ValueError("char_points needs a nonempty box")
    if s.full_space:
        raise ValueError("the full space has no characteristic points")
    model = s.model
    m, sums, second = _dim_terms(s)
    c = segment_argmin(model, s.stats())
    closest = np.clip(c, r.lo, r.hi)
    far = np.empty_like(c)
    for k in range(len(c)):
        v_lo = K.dim_value(model.code, model.phi_value, m, float(sums[k]), float(second[k]), float(r.lo[k]))
        v_hi = K.dim_value(model.code, model.phi_value, m, float(sums[k]), float(second[k]), float(r.hi[k]))
        far[k] = r.lo[k] if v_lo >= v_hi else r.hi[k]
    return CharPoints(c, closest, far)


def dim_roots(s: SSet, k: int, level: float, *, inner: bool = False) -> tuple[float, float] | None:
    """Interval where ``s^k <= level`` within the domain, or None if empty.

    For the count models the endpoints come from bisection; the default
    returns the outer bracket ends, ``inner=True`` the inner ones.
    """
    if s.full_space:
        raise ValueError("the full space has no per-dimension cost")
    model = s.model
    m, sums, second = _dim_terms(s)
    lo, hi, ok = K.dim_roots(model.code, model.phi_value, m, float(sums[k]), float(second[k]), float(level), inner)
    if not ok:
        return None
    return float(lo), float(hi)


def ball_disjoint(a: BallRep, b: BallRep) -> bool:
    """True when the balls do not meet (tangent balls do meet)."""
    d2 = float(np.sum((np.asarray(a.center) - np.asarray(b.center)) ** 2))
    return bool(K.balls_disjoint(d2, a.radius_sq, b.radius_sq))


def ball_included(a: BallRep, b: BallRep) -> bool:
    """True when one of the balls contains the other."""
    if a.empty or b.empty:
        return True
    d = math.sqrt(float(np.sum((np.asarray(a.center) - np.asarray(b.center)) ** 2)))
    return d <= abs(a.radius - b.radius)


def _ball_inside(a: BallRep, b: BallRep) -> bool:
    d2 = float(np.sum((np.asarray(a.center) - np.asarray(b.center)) ** 2))
    return bool(K.ball_inside(d2, a.radius_sq, b.radius_sq))


def sset_inter(test: SSet | None, s: SSet) -> SSet | None:
    """Intersection operator for S-type testing sets: ``None`` once proven disjoint."""
    _require_gaussian(s.model, "S-type intersection")
    if test is None:
        return None
    if test.full_space:
        return None if (not s.full_space and ball(s).empty) else s
    if s.full_space:
        return test
    return None if ball_disjoint(ball(test), ball(s)) else test


def sset_excl(test: SSet | None, s: SSet) -> SSet | None:
    """Exclusion operator for S-type testing sets: ``None`` once ``test`` lies in ``s``."""
    _require_gaussian(s.model, "S-type exclusion")
    if test is None:
        return None
    if s.full_space:
        return None
    if test.full_space:
        return test
    return None if _ball_inside(ball(test), ball(s)) else test


def rect_inter(r: Hyperrect, s: SSet) -> Hyperrect:
    """Smallest box containing ``r`` intersected with ``s``."""
    if r.empty:
        return r
    if s.full_space:
        return r
    lo, hi = r.lo.copy(), r.hi.copy()
    if not K.rect_inter(*s._kernel_args(), lo, hi):
        return Hyperrect.make_empty(r.p)
    return Hyperrect(lo, hi)


def rect_excl(r: Hyperrect, s: SSet) -> Hyperrect:
    """Box containing ``r`` minus ``s``, per-dimension cuts at the farthest point."""
    if r.empty:
        return r
    if s.full_space:
        return Hyperrect.make_empty(r.p)
    lo, hi = r.lo.copy(), r.hi.copy()
    if not K.rect_excl(*s._kernel_args(), lo, hi):
        return Hyperrect.make_empty(r.p)
    return Hyperrect(lo, hi)
