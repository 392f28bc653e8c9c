"""Penalised optimal partitioning: the OP recursion, PELT pruning and backtracking."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .model_cost import TimeSeriesMatrix

__all__ = [
    "Diagnostics",
    "RunState",
    "Segmentation",
    "SolveTimeout",
    "backtrack",
    "best_cost_best_tau",
    "op_solve",
    "pelt_solve",
    "recompute_cost",
    "run_solver",
]


class SolveTimeout(RuntimeError):
    """A solve exceeded its time limit; ``t_done`` steps were completed."""

    def __init__(self, t_done: int, n: int, elapsed: float):
        super().__init__(f"time limit reached after {t_done}/{n} steps ({elapsed:.2f}s)")
        self.t_done = t_done
        self.n = n
        self.elapsed = elapsed


@dataclass
class RunState:
    """Mutable state of a run after ``t`` steps.

    ``qhat[s]`` is the optimal penalised cost of the first ``s`` rows and
    ``tauhat[s]`` the best last change for them (both valid for ``s <= t``).
    ``candidates`` lists the live change positions, in increasing order.
    """

    qhat: np.ndarray
    tauhat: np.ndarray
    candidates: list[int]
    beta: float
    t: int = 0

    @classmethod
    def start(cls, n: int, beta: float) -> "RunState":
        return cls(np.zeros(n + 1), np.zeros(n + 1, dtype=np.int64), [], float(beta), 0)


@dataclass(frozen=True, eq=False)
class Diagnostics:
    """Per-step trace of a pruned solve (index 0 is unused)."""

    candidate_counts: np.ndarray
    pruned_at: np.ndarray
    inter_ops: np.ndarray
    excl_ops: np.ndarray
    boxes: tuple[np.ndarray, np.ndarray] | None = None

    def live_at(self, t: int) -> np.ndarray:
        """Candidate change positions alive after step ``t``."""
        idx = np.arange(t)
        return idx[self.pruned_at[:t] > t]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "live_candidates", "inter_ops", "excl_ops"])
            for t in range(1, len(self.candidate_counts)):
                writer.writerow([t, int(self.candidate_counts[t]), int(self.inter_ops[t]), int(self.excl_ops[t])])


@dataclass(frozen=True, eq=False)
class Segmentation:
    """Optimal segmentation: change positions ``tau`` with segments ``tau_k+1 .. tau_{k+1}``."""

    changepoints: np.ndarray
    total_cost: float
    beta: float
    qhat: np.ndarray = field(repr=False)
    tauhat: np.ndarray = field(repr=False)
    algorithm: str = "op"
    wall_time: float = 0.0
    diagnostics: Diagnostics | None = field(default=None, repr=False)

    @property
    def segment_count(self) -> int:
        return len(self.changepoints) + 1

    @property
    def n(self) -> int:
        return len(self.qhat) - 1


def backtrack(tauhat, n: int) -> list[int]:
    """Recover the ordered change points from the best-last-change table."""
    out = []
    t = n
    while t > 0:
        tau = int(tauhat[t])
        if not 0 <= tau <= t - 1:
            raise ValueError(f"corrupt backtracking table: tauhat[{t}]={tau}")
        if tau > 0:
            out.append(tau)
        t = tau
    return out[::-1]


def best_cost_best_tau(t: int, run_state: RunState, data: TimeSeriesMatrix) -> tuple[float, int]:
    """Optimal cost of the first ``t`` rows over the live candidates, with its last change."""
    if t < 1 or t > data.n:
        raise IndexError(f"t={t} outside 1..{data.n}")
    cand = np.asarray(run_state.candidates, dtype=np.int64)
    assert len(cand) > 0, "empty candidate list"
    assert cand.max() <= t - 1 and run_state.t >= cand.max()
    model = data.model
    costs = np.empty(len(cand))
    q, tau = K.best_cost_best_tau(
        data.prefix_sums, data.prefix_second, model.code, model.phi_value,
        run_state.qhat, run_state.beta, cand, len(cand), t, costs,
    )
    return float(q), int(tau)


def recompute_cost(data: TimeSeriesMatrix, changepoints, beta: float) -> float:
    """Penalised cost of a segmentation, evaluated from scratch."""
    bounds = [0, *[int(c) for c in changepoints], data.n]
    return sum(data.segment_cost(a + 1, b + 1) for a, b in zip(bounds, bounds[1:])) + beta * (len(bounds) - 1)


def run_solver(
    data: TimeSeriesMatrix,
    beta: float,
    method: int,
    *,
    future: int = K.FUTURE_ALL,
    past: int = K.PAST_ALL,
    seed: int = 0,
    time_limit: float | None = None,
    record: bool = False,
    algorithm: str = "",
) -> Segmentation:
    """Shared driver for every solver; ``method`` is one of the kernel method codes."""
    if not (beta > 0 and math.isfinite(beta)):
        raise ValueError(f"beta must be positive and finite, got {beta}")
    model = data.model
    n, p = data.n, data.p
    if record:
        rec_lo = np.full((n + 1, n, p), np.nan)
        rec_hi = np.full((n + 1, n, p), np.nan)
    else:
        rec_lo = rec_hi = np.empty((1, 1, p))
    limit = math.inf if time_limit is None else float(time_limit)
    start = time.perf_counter()
    qhat, tauhat, counts, pruned_at, inter_ops, excl_ops, t_done = K.solve_run(
        data.prefix_sums, data.prefix_second, model.code, model.phi_value, float(beta),
        method, future, past, np.uint32(seed), limit, record, rec_lo, rec_hi,
    )
    elapsed = time.perf_counter() - start
    if t_done < n:
        raise SolveTimeout(int(t_done), n, elapsed)
    diagnostics = None
    if method != K.METHOD_OP:
        diagnostics = Diagnostics(counts, pruned_at, inter_ops, excl_ops, (rec_lo, rec_hi) if record else None)
    return Segmentation(
        changepoints=np.array(backtrack(tauhat, n), dtype=np.int64),
        total_cost=float(qhat[n]),
        beta=float(beta),
        qhat=qhat,
        tauhat=tauhat,
        algorithm=algorithm,
        wall_time=elapsed,
        diagnostics=diagnostics,
    )


def op_solve(data: TimeSeriesMatrix, beta: float, *, time_limit: float | None = None) -> Segmentation:
    """Exact optimum by scanning every last-change position (quadratic time)."""
    return run_solver(data, beta, K.METHOD_OP, time_limit=time_limit, algorithm="op")


def pelt_solve(data: TimeSeriesMatrix, beta: float, *, time_limit: float | None = None) -> Segmentation:
    """Exact optimum with inequality-based pruning.

    Candidate ``a`` is dropped at step ``t`` once ``Q[a] + C(a+1..t) >= Q[t]``.
    """
    return run_solver(data, beta, K.METHOD_PELT, time_limit=time_limit, algorithm="pelt")
