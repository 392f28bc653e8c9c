"""Per-point likelihood costs, prefix statistics and closed-form segment costs.

Three observation models are supported, one per series dimension and shared
across dimensions: Gaussian with known unit variance (change in mean),
Poisson (change in rate) and negative binomial with a known dispersion
``phi`` (change in success probability). Costs are twice the negative
log-likelihood.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from . import _kernels as K

__all__ = [
    "CostModel",
    "DomainError",
    "InputFormatError",
    "ModelKind",
    "SegmentStats",
    "TimeSeriesMatrix",
    "ZeroScaleError",
    "atomic_cost",
    "default_penalty",
    "estimate_sigma",
    "load_csv",
    "point_cost",
    "segment_argmin",
    "segment_cost",
]

#: Domain floor used for the open parameter domains (and the negbin ceiling).
DOMAIN_EPS = K.EPS


class DomainError(ValueError):
    """A parameter or observation lies outside the model's domain."""


class InputFormatError(ValueError):
    """Input data could not be parsed into a rectangular numeric matrix."""


class ZeroScaleError(ValueError):
    """The noise scale estimate is zero (constant series)."""


class ModelKind(str, Enum):
    GAUSSIAN = "gaussian"
    POISSON = "poisson"
    NEGBIN = "negbin"


_CODES = {ModelKind.GAUSSIAN: K.GAUSSIAN, ModelKind.POISSON: K.POISSON, ModelKind.NEGBIN: K.NEGBIN}


@dataclass(frozen=True)
class CostModel:
    """Observation model; ``phi`` is the negative binomial dispersion."""

    kind: ModelKind = ModelKind.GAUSSIAN
    phi: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.kind is ModelKind.NEGBIN:
            if self.phi is None or not (self.phi > 0 and math.isfinite(self.phi)):
                raise ValueError(f"negbin requires a positive finite phi, got {self.phi!r}")
            object.__setattr__(self, "phi", float(self.phi))
        elif self.phi is not None:
            raise ValueError(f"phi is only meaningful for negbin, got phi={self.phi!r}")

    @classmethod
    def gaussian(cls) -> "CostModel":
        return cls(ModelKind.GAUSSIAN)

    @classmethod
    def poisson(cls) -> "CostModel":
        return cls(ModelKind.POISSON)

    @classmethod
    def negbin(cls, phi: float) -> "CostModel":
        return cls(ModelKind.NEGBIN, phi)

    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def phi_value(self) -> float:
        return self.phi if self.phi is not None else 0.0

    @property
    def domain(self) -> tuple[float, float]:
        """Open parameter domain per dimension, as (lower, upper)."""
        if self.kind is ModelKind.GAUSSIAN:
            return (-math.inf, math.inf)
        if self.kind is ModelKind.POISSON:
            return (0.0, math.inf)
        return (0.0, 1.0)

    @property
    def box(self) -> tuple[float, float]:
        """Closed working box: the domain clamped at ``DOMAIN_EPS``."""
        lo, hi = K.domain_bounds(self.code)
        return float(lo), float(hi)

    @property
    def is_count(self) -> bool:
        return self.kind is not ModelKind.GAUSSIAN

    def check_theta(self, theta: float) -> None:
        lo, hi = self.domain
        if math.isnan(theta) or not (lo < theta < hi):
            raise DomainError(f"theta={theta!r} outside the open domain ({lo}, {hi}) of {self.kind.value}")

    def check_observation(self, y: float) -> None:
        if math.isnan(y) or math.isinf(y):
            raise DomainError(f"observation {y!r} is not finite")
        if self.is_count and (y < 0 or y != math.floor(y)):
            raise DomainError(f"{self.kind.value} observations must be nonnegative integers, got {y!r}")

    def constant_terms(self, values: np.ndarray) -> np.ndarray:
        """Theta-free per-point terms folded into the second prefix statistic."""
        if self.kind is ModelKind.GAUSSIAN:
            return values * values
        if self.kind is ModelKind.POISSON:
            return gammaln(values + 1.0)
        phi = self.phi
        return gammaln(values + phi) - gammaln(phi) - gammaln(values + 1.0)


def atomic_cost(model: CostModel, theta: float, y: float) -> float:
    """Cost of one observation ``y`` of one dimension at parameter ``theta``."""
    model.check_theta(theta)
    model.check_observation(y)
    if model.kind is ModelKind.GAUSSIAN:
        return (y - theta) ** 2
    if model.kind is ModelKind.POISSON:
        ylog = y * math.log(theta) if y != 0 else 0.0
        return 2.0 * (theta - ylog + math.lgamma(y + 1.0))
    phi = model.phi
    log_binom = math.lgamma(y + phi) - math.lgamma(phi) - math.lgamma(y + 1.0)
    ylog = y * math.log(theta) if y != 0 else 0.0
    return -2.0 * (ylog + phi * math.log1p(-theta) + log_binom)


def point_cost(model: CostModel, theta, y_row) -> float:
    """Cost of one p-dimensional observation: the sum of the atomic costs."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    y_row = np.atleast_1d(np.asarray(y_row, dtype=float))
    if theta.shape != y_row.shape:
        raise ValueError(f"theta has shape {theta.shape} but y_row has {y_row.shape}")
    total = 0.0
    for k, (th, y) in enumerate(zip(theta, y_row)):
        try:
            total += atomic_cost(model, float(th), float(y))
        except DomainError as exc:
            raise DomainError(f"dimension {k}: {exc}") from exc
    return total


@dataclass(frozen=True, eq=False)
class SegmentStats:
    """Sufficient statistics of rows ``i .. j-1`` (1-based, ``j`` exclusive).

    ``sums`` holds the per-dimension sums; ``second`` the per-dimension sums of
    the model's second statistic (squares for Gaussian, log-factorials for
    Poisson, log-binomial coefficients for negbin).
    """

    i: int
    j: int
    sums: np.ndarray
    second: np.ndarray

    @property
    def count(self) -> int:
        return self.j - self.i

    @property
    def p(self) -> int:
        return self.sums.shape[0]


@dataclass(frozen=True, eq=False)
class TimeSeriesMatrix:
    """An ``n x p`` series with the prefix statistics of its cost model."""

    values: np.ndarray
    model: CostModel = field(default_factory=CostModel)
    prefix_sums: np.ndarray = field(init=False, repr=False)
    prefix_second: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InputFormatError(f"expected a nonempty n x p matrix, got shape {values.shape}")
        _validate_values(values, self.model)
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "prefix_sums", K.compensated_cumsum(values))
        object.__setattr__(
            self, "prefix_second", K.compensated_cumsum(np.ascontiguousarray(self.model.constant_terms(values)))
        )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def stats(self, i: int, j: int) -> SegmentStats:
        """Statistics of rows ``i .. j-1`` in 1-based indexing."""
        if not (1 <= i < j <= self.n + 1):
            raise IndexError(f"segment [{i}, {j}) is invalid for n={self.n}")
        return SegmentStats(
            i=i,
            j=j,
            sums=self.prefix_sums[j - 1] - self.prefix_sums[i - 1],
            second=self.prefix_second[j - 1] - self.prefix_second[i - 1],
        )

    def segment_cost(self, i: int, j: int) -> float:
        """Cost of rows ``i .. j-1`` (1-based)."""
        if not (1 <= i < j <= self.n + 1):
            raise IndexError(f"segment [{i}, {j}) is invalid for n={self.n}")
        m = self.model
        return float(K.segment_cost(self.prefix_sums, self.prefix_second, m.code, m.phi_value, i - 1, j - 1))


def _validate_values(values: np.ndarray, model: CostModel) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DomainError(f"non-finite value at row {r + 1}, column {c + 1}")
    if model.is_count:
        bad = (values < 0) | (np.abs(values - np.round(values)) > 1e-9)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise DomainError(
                f"{model.kind.value} data must be nonnegative integers; "
                f"row {r + 1}, column {c + 1} holds {values[r, c]!r}"
            )
        np.round(values, out=values)


def load_csv(path: str | Path, model: CostModel | None = None) -> TimeSeriesMatrix:
    """Read a CSV with one row per time point; a non-numeric first row is a header."""
    model = model or CostModel()
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                if line_no == 1 and not rows:
                    continue
                raise InputFormatError(f"line {line_no}: non-numeric or missing value in {row!r}") from None
    if not rows:
        raise InputFormatError(f"{path}: no data rows")
    width = len(rows[0])
    for idx, row in enumerate(rows):
        if len(row) != width:
            raise InputFormatError(f"ragged row {idx + 1}: expected {width} columns, found {len(row)}")
    return TimeSeriesMatrix(np.array(rows), model)


def segment_argmin(model: CostModel, stats: SegmentStats) -> np.ndarray:
    """Per-dimension minimiser of the segment cost."""
    return np.array(
        [K.dim_argmin(model.code, model.phi_value, float(stats.count), float(s)) for s in stats.sums]
    )


def segment_cost(model: CostModel, stats: SegmentStats) -> float:
    """Minimum over theta of the summed point costs of the segment, in O(p)."""
    m = float(stats.count)
    return float(
        sum(
            K.dim_min(model.code, model.phi_value, m, float(s), float(q))
            for s, q in zip(stats.sums, stats.second)
        )
    )


def default_penalty(n: int, p: int, sigma: float = 1.0) -> float:
    """Schwarz-type penalty ``2 p sigma^2 log n`` (natural log)."""
    if not n >= 2:
        raise ValueError(f"penalty needs n >= 2, got n={n}")
    if p < 1:
        raise ValueError(f"penalty needs p >= 1, got p={p}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return 2.0 * p * sigma**2 * math.log(n)


def estimate_sigma(data: TimeSeriesMatrix | np.ndarray) -> float:
    """Robust noise scale: MAD of lag-one differences, averaged over dimensions."""
    values = data.values if isinstance(data, TimeSeriesMatrix) else np.asarray(data, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] < 2:
        raise ValueError("estimate_sigma needs at least two observations")
    diffs = np.abs(np.diff(values, axis=0))
    sigma = float(np.mean(np.median(diffs, axis=0)) / (0.6745 * math.sqrt(2.0)))
    if not sigma > 0:
        raise ZeroScaleError("estimated noise scale is zero (constant or near-constant series)")
    return sigma
