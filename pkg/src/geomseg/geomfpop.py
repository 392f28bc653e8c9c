"""Geometric functional pruning on top of the optimal partitioning recursion.

Each candidate change keeps a *testing set*, a cheap superset of the region
of parameters where its cost function is the optimal one. At every step the
testing set is intersected with (a selection of) the candidate's future
S-type sets and stripped of (a selection of) its past S-type sets; the
candidate is pruned as soon as the testing set is empty. The optimal cost
itself never depends on the geometry, so the output is exact whatever the
selection strategy.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import _kernels as K
from .dp import RunState, Segmentation, run_solver
from .geometry import Hyperrect, SSet, UnsupportedOperatorError, make_sset, rect_excl, rect_inter, sset_excl, sset_inter
from .model_cost import ModelKind, TimeSeriesMatrix

__all__ = [
    "Candidate",
    "FutureSelect",
    "PastSelect",
    "PruningConfig",
    "PruningKind",
    "geomfpop_solve",
    "select_future",
    "select_past",
    "solver_seed",
    "update_testing_set",
]


class PruningKind(str, Enum):
    STYPE = "s"
    RTYPE = "r"


class FutureSelect(str, Enum):
    ALL = "all"
    LAST = "last"
    LAST_RANDOM = "last-random"


class PastSelect(str, Enum):
    ALL = "all"
    EMPTY = "empty"
    RANDOM = "random"


_FUTURE_CODES = {FutureSelect.ALL: K.FUTURE_ALL, FutureSelect.LAST: K.FUTURE_LAST, FutureSelect.LAST_RANDOM: K.FUTURE_LAST_RANDOM}
_PAST_CODES = {PastSelect.ALL: K.PAST_ALL, PastSelect.EMPTY: K.PAST_EMPTY, PastSelect.RANDOM: K.PAST_RANDOM}


@dataclass(frozen=True)
class PruningConfig:
    kind: PruningKind = PruningKind.RTYPE
    future: FutureSelect = FutureSelect.ALL
    past: PastSelect = PastSelect.ALL
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", PruningKind(self.kind))
        object.__setattr__(self, "future", FutureSelect(self.future))
        object.__setattr__(self, "past", PastSelect(self.past))
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    @property
    def label(self) -> str:
        return f"geom-{self.kind.value}:{self.future.value}/{self.past.value}"


def solver_seed(seed: int) -> int:
    """32-bit stream seed for one solve, derived from a 64-bit user seed."""
    return int(np.random.SeedSequence(int(seed)).generate_state(1, dtype=np.uint32)[0])


@dataclass
class Candidate:
    """Candidate change at ``i - 1`` with its testing set.

    The testing set is a :class:`Hyperrect` for R-type pruning, and an
    :class:`SSet` (``None`` once proven empty) for S-type pruning.
    """

    i: int
    testing_set: Hyperrect | SSet | None


def _live_indices(lo: int, hi: int, live: Sequence[int] | None) -> list[int]:
    if live is None:
        return list(range(lo, hi + 1))
    return sorted({v for v in live if lo <= v <= hi} | {lo, hi})


def select_future(
    candidate: Candidate,
    t: int,
    config: PruningConfig,
    rng: np.random.Generator,
    run_state: RunState,
    data: TimeSeriesMatrix,
    live: Sequence[int] | None = None,
) -> list[SSet]:
    """Future sets ``S(i, v)`` taking part in the update; ``S(i, t)`` is always last-in.

    ``live`` restricts the middle indices ``v`` (``i < v < t``) to live
    candidates (given as ``v``, the start of their last segment); None means
    every index.
    """
    i = candidate.i
    if t < i:
        raise ValueError(f"t={t} precedes the candidate start i={i}")
    pool = _live_indices(i, t, live)
    if config.future is FutureSelect.ALL:
        chosen = pool
    elif config.future is FutureSelect.LAST:
        chosen = [t]
    else:
        chosen = [t, pool[int(rng.integers(len(pool)))]]
    return [make_sset(i, v, run_state, data) for v in chosen]


def select_past(
    candidate: Candidate,
    config: PruningConfig,
    rng: np.random.Generator,
    run_state: RunState,
    data: TimeSeriesMatrix,
    live: Sequence[int] | None = None,
) -> list[SSet]:
    """Past sets ``S(u, i)`` for ``u < i`` taking part in the update."""
    i = candidate.i
    pool = [u for u in (range(1, i) if live is None else sorted(live)) if 1 <= u < i]
    if config.past is PastSelect.ALL:
        chosen = pool
    elif config.past is PastSelect.EMPTY or not pool:
        chosen = []
    else:
        chosen = [pool[int(rng.integers(len(pool)))]]
    return [make_sset(u, i, run_state, data) for u in chosen]


def update_testing_set(
    candidate: Candidate,
    past_selection: Sequence[SSet],
    future_selection: Sequence[SSet],
    kind: PruningKind | str,
):
    """Apply the intersections with the future sets, then the exclusions of the past sets."""
    kind = PruningKind(kind)
    z = candidate.testing_set
    if kind is PruningKind.RTYPE:
        if not isinstance(z, Hyperrect):
            raise TypeError("R-type pruning needs a Hyperrect testing set")
        for s in future_selection:
            if z.empty:
                break
            z = rect_inter(z, s)
        for s in past_selection:
            if z.empty:
                break
            z = rect_excl(z, s)
        return z
    for s in (*future_selection, *past_selection):
        if s.model.kind is not ModelKind.GAUSSIAN:
            raise UnsupportedOperatorError("S-type pruning is only available for the Gaussian model")
    for s in future_selection:
        z = sset_inter(z, s)
    for s in past_selection:
        z = sset_excl(z, s)
    return z


def geomfpop_solve(
    data: TimeSeriesMatrix,
    beta: float,
    config: PruningConfig | None = None,
    *,
    time_limit: float | None = None,
    record: bool = False,
) -> Segmentation:
    """Exact penalised segmentation with geometric functional pruning.

    ``record=True`` keeps every R-type testing box (memory ``n^2 p``; small
    inputs only) in ``diagnostics.boxes``.
    """
    config = config or PruningConfig()
    if config.kind is PruningKind.STYPE and data.model.kind is not ModelKind.GAUSSIAN:
        raise UnsupportedOperatorError(
            f"S-type pruning requires the Gaussian model, not {data.model.kind.value}"
        )
    method = K.METHOD_GEOM_S if config.kind is PruningKind.STYPE else K.METHOD_GEOM_R
    return run_solver(
        data,
        beta,
        method,
        future=_FUTURE_CODES[config.future],
        past=_PAST_CODES[config.past],
        seed=solver_seed(config.seed),
        time_limit=time_limit,
        record=record and config.kind is PruningKind.RTYPE,
        algorithm=config.label,
    )
