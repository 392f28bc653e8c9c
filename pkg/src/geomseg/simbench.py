"""Simulated data, candidate-trace experiments and runtime benchmarks.

Series are piecewise constant with equally spaced changes. The parameter of
each affected dimension alternates between a base value (odd segments) and
a shifted value (even segments); unaffected dimensions never change.

Algorithms are named by short labels: ``"op"``, ``"pelt"`` and
``"geom-<kind>:<future>/<past>"`` such as ``"geom-r:last-random/random"``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dp import Segmentation, SolveTimeout, op_solve, pelt_solve
from .geomfpop import PruningConfig, geomfpop_solve
from .model_cost import CostModel, ModelKind, TimeSeriesMatrix, default_penalty

__all__ = [
    "BenchRecord",
    "RuntimeCell",
    "SimSpec",
    "TraceResult",
    "candidate_trace_experiment",
    "cell_rows",
    "comparisons",
    "derive_seed",
    "generate",
    "log_grid",
    "parse_algorithm",
    "record_rows",
    "run_algorithm",
    "runtime_grid",
    "segments_sweep",
    "summarize",
    "write_experiment",
]


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 64-bit seed for the stream identified by ``keys``."""
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SimSpec:
    """Piecewise-constant series specification.

    ``affected_dims`` counts the leading dimensions that carry the changes;
    ``None`` means all of them.
    """

    n: int
    p: int
    segments: int = 1
    model: CostModel = field(default_factory=CostModel)
    amplitude: float = 1.0
    affected_dims: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError(f"n and p must be positive, got n={self.n}, p={self.p}")
        if not 1 <= self.segments <= self.n:
            raise ValueError(f"segments must lie in 1..n={self.n}, got {self.segments}")
        if self.affected_dims is not None and not 0 <= self.affected_dims <= self.p:
            raise ValueError(f"affected_dims must lie in 0..p={self.p}, got {self.affected_dims}")
        if not (self.amplitude >= 0 and math.isfinite(self.amplitude)):
            raise ValueError(f"amplitude must be finite and nonnegative, got {self.amplitude}")

    @property
    def k(self) -> int:
        return self.p if self.affected_dims is None else self.affected_dims

    def boundaries(self) -> np.ndarray:
        """True change positions (segment ``s`` ends after row ``s * n // segments``)."""
        return np.array([s * self.n // self.segments for s in range(1, self.segments)], dtype=np.int64)

    def parameters(self) -> np.ndarray:
        """Per-segment parameters, shape ``(segments, p)``."""
        base, shifted = _levels(self.model, self.amplitude)
        out = np.full((self.segments, self.p), base)
        out[1::2, : self.k] = shifted
        return out


def _levels(model: CostModel, amplitude: float) -> tuple[float, float]:
    if model.kind is ModelKind.GAUSSIAN:
        return 0.0, amplitude
    if model.kind is ModelKind.POISSON:
        return 1.0, 1.0 + amplitude
    # success probability whose mean phi*theta/(1-theta) scales by 1 + amplitude
    return 0.5, (1.0 + amplitude) / (2.0 + amplitude)


def generate(spec: SimSpec) -> tuple[TimeSeriesMatrix, np.ndarray]:
    """Draw a series from ``spec``; returns the data and the true change positions."""
    rng = np.random.default_rng(spec.seed)
    bounds = spec.boundaries()
    edges = np.concatenate([[0], bounds, [spec.n]])
    theta = np.repeat(spec.parameters(), np.diff(edges), axis=0)
    kind = spec.model.kind
    if kind is ModelKind.GAUSSIAN:
        values = theta + rng.standard_normal((spec.n, spec.p))
    elif kind is ModelKind.POISSON:
        values = rng.poisson(theta).astype(float)
    else:
        values = rng.negative_binomial(spec.model.phi, 1.0 - theta).astype(float)
    return TimeSeriesMatrix(values, spec.model), bounds


def parse_algorithm(label: str) -> PruningConfig | str:
    """``"op"``/``"pelt"`` are returned as is, geometric labels as a config (seed 0)."""
    label = label.strip().lower()
    if label in ("op", "pelt"):
        return label
    head, _, rest = label.partition(":")
    if head not in ("geom-r", "geom-s"):
        raise ValueError(f"unknown algorithm {label!r}")
    future, past = (rest.split("/") + [None])[:2] if rest else ("all", "all")
    if past is None:
        raise ValueError(f"expected geom-<kind>:<future>/<past>, got {label!r}")
    return PruningConfig(kind=head[-1], future=future, past=past)


def run_algorithm(
    label: str,
    data: TimeSeriesMatrix,
    beta: float,
    *,
    seed: int = 0,
    time_limit: float | None = None,
) -> Segmentation:
    """Solve with the algorithm named ``label``; geometric runs use ``seed``."""
    algo = parse_algorithm(label)
    if algo == "op":
        return op_solve(data, beta, time_limit=time_limit)
    if algo == "pelt":
        return pelt_solve(data, beta, time_limit=time_limit)
    cfg = PruningConfig(algo.kind, algo.future, algo.past, seed)
    return geomfpop_solve(data, beta, cfg, time_limit=time_limit)


def comparisons(seg: Segmentation) -> int:
    """Work counter: segment-cost evaluations for op/pelt, operator calls otherwise."""
    d = seg.diagnostics
    if d is None:
        n = seg.n
        return n * (n + 1) // 2
    if seg.algorithm == "pelt":
        # every live candidate plus the newcomer is evaluated once per step
        return int(d.candidate_counts[:-1].sum() + seg.n)
    return int(d.inter_ops.sum() + d.excl_ops.sum())


def log_grid(n: int, points: int = 40) -> np.ndarray:
    """Logarithmically spaced distinct steps in ``1..n``, always ending at ``n``."""
    grid = np.unique(np.round(np.logspace(0, math.log10(n), points)).astype(np.int64))
    return np.unique(np.append(grid[(grid >= 1) & (grid <= n)], n))


@dataclass(frozen=True, eq=False)
class TraceResult:
    """Live-candidate traces on noise series.

    ``counts[(p, label)]`` has shape ``(replicates, n + 1)`` and
    ``pruned_at[(p, label)]`` shape ``(replicates, n)`` (position of the
    step that removed each candidate; ``n + 1`` for survivors).
    """

    n: int
    replicates: int
    t_grid: np.ndarray
    counts: dict
    pruned_at: dict

    def percentage(self, p: int, label: str) -> np.ndarray:
        """Mean percentage of retained candidates at each grid step."""
        c = self.counts[(p, label)][:, self.t_grid]
        return 100.0 * c.mean(axis=0) / self.t_grid

    def ratio(self, p: int, label: str, reference: str = "pelt") -> np.ndarray:
        """Squared live count of ``label`` over the live count of ``reference``, per replicate and grid step."""
        g = self.counts[(p, label)][:, self.t_grid].astype(float)
        r = self.counts[(p, reference)][:, self.t_grid].astype(float)
        return g * g / r

    def rows(self) -> list[dict]:
        out = []
        labels = sorted({lab for _, lab in self.counts})
        for p, label in sorted(self.counts):
            pct = self.percentage(p, label)
            ratio = np.median(self.ratio(p, label), axis=0) if "pelt" in labels and (p, "pelt") in self.counts else None
            for idx, t in enumerate(self.t_grid):
                row = {
                    "experiment": "trace",
                    "p": p,
                    "algorithm": label,
                    "t": int(t),
                    "mean_percent_retained": float(pct[idx]),
                    "mean_live": float(self.counts[(p, label)][:, t].mean()),
                }
                if ratio is not None:
                    row["median_ratio_vs_pelt"] = float(ratio[idx])
                out.append(row)
        return out


def _default_beta(data: TimeSeriesMatrix) -> float:
    return default_penalty(max(data.n, 2), data.p)


def candidate_trace_experiment(
    p_range: Sequence[int],
    n: int,
    replicates: int,
    configs: Sequence[str],
    *,
    seed: int = 0,
    t_grid: Sequence[int] | None = None,
) -> TraceResult:
    """Live-candidate traces of each algorithm on Gaussian noise.

    Every algorithm sees the same ``replicates`` series per dimension; the
    penalty is the default one with unit variance.
    """
    if replicates < 1:
        raise ValueError("replicates must be positive")
    for label in configs:
        if parse_algorithm(label) == "op":
            raise ValueError("op keeps every candidate; it has no trace to report")
    counts, pruned = {}, {}
    for p in p_range:
        for label in configs:
            counts[(p, label)] = np.zeros((replicates, n + 1), dtype=np.int64)
            pruned[(p, label)] = np.zeros((replicates, n), dtype=np.int64)
        for r in range(replicates):
            data, _ = generate(SimSpec(n, p, 1, seed=derive_seed(seed, p, r)))
            beta = _default_beta(data)
            for label in configs:
                seg = run_algorithm(label, data, beta, seed=derive_seed(seed, p, r, 1))
                counts[(p, label)][r] = seg.diagnostics.candidate_counts
                pruned[(p, label)][r] = seg.diagnostics.pruned_at
    grid = np.asarray(t_grid, dtype=np.int64) if t_grid is not None else log_grid(n)
    return TraceResult(n, replicates, grid, counts, pruned)


@dataclass(frozen=True)
class BenchRecord:
    """One timed solve."""

    experiment: str
    n: int
    p: int
    segments: int
    affected_dims: int
    model: str
    replicate: int
    seed: int
    algorithm: str
    wall_time: float
    censored: bool
    live_final: int | None
    comparisons: int | None
    changepoint_count: int | None
    trace_file: str | None = None


@dataclass(frozen=True)
class RuntimeCell:
    """Median wall time of one (series shape, algorithm) cell."""

    experiment: str
    n: int
    p: int
    segments: int
    affected_dims: int
    algorithm: str
    replicates: int
    median_time: float | None
    censored: bool


def _time_one(task) -> BenchRecord:
    experiment, spec, replicate, label, time_cap = task
    data, _ = generate(spec)
    beta = _default_beta(data)
    solve_seed = derive_seed(spec.seed, 1)
    try:
        seg = run_algorithm(label, data, beta, seed=solve_seed, time_limit=time_cap)
    except SolveTimeout as exc:
        return BenchRecord(experiment, spec.n, spec.p, spec.segments, spec.k, spec.model.kind.value,
                           replicate, spec.seed, label, exc.elapsed, True, None, None, None)
    live = None if seg.diagnostics is None else int(seg.diagnostics.candidate_counts[-1])
    return BenchRecord(experiment, spec.n, spec.p, spec.segments, spec.k, spec.model.kind.value,
                       replicate, spec.seed, label, seg.wall_time, False, live, comparisons(seg),
                       len(seg.changepoints))


def _warm_up(labels: Iterable[str], p: int) -> None:
    # compile (or load) every kernel specialisation before timing
    data, _ = generate(SimSpec(64, p, 2, seed=0))
    for label in labels:
        run_algorithm(label, data, _default_beta(data))


def _timed_cells(
    experiment: str,
    specs: Sequence[tuple[SimSpec, int]],
    configs: Sequence[str],
    time_cap: float | None,
    jobs: int,
) -> tuple[list[BenchRecord], list[RuntimeCell]]:
    # specs: (spec, replicate) pairs; a cell is everything but the replicate
    if time_cap is not None and not time_cap > 0:
        raise ValueError(f"time cap must be positive, got {time_cap}")
    for label in configs:
        parse_algorithm(label)
    _warm_up(configs, max(s.p for s, _ in specs))
    tasks = [(experiment, spec, r, label, time_cap) for spec, r in specs for label in configs]
    censored_keys: set = set()
    records: list[BenchRecord] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_time_one, tasks))
    else:
        # once a cell is censored, larger instances of the same shape are skipped
        for task in sorted(tasks, key=lambda tk: (tk[1].n, tk[1].segments)):
            _, spec, r, label, cap = task
            key = (spec.p, spec.k, label)
            if key in censored_keys and experiment == "runtime":
                records.append(BenchRecord(experiment, spec.n, spec.p, spec.segments, spec.k,
                                           spec.model.kind.value, r, spec.seed, label, math.nan,
                                           True, None, None, None))
                continue
            rec = _time_one(task)
            if rec.censored:
                censored_keys.add(key)
            records.append(rec)
    records.sort(key=lambda rec: (rec.p, rec.algorithm, rec.n, rec.segments, rec.affected_dims, rec.replicate))
    return records, summarize(records)


def summarize(records: Sequence[BenchRecord]) -> list[RuntimeCell]:
    """Median over replicates per cell; a cell with any censored replicate is censored."""
    groups: dict = {}
    for rec in records:
        key = (rec.experiment, rec.n, rec.p, rec.segments, rec.affected_dims, rec.algorithm)
        groups.setdefault(key, []).append(rec)
    cells = []
    for key in sorted(groups):
        recs = groups[key]
        censored = any(r.censored for r in recs)
        median = None if censored else float(np.median([r.wall_time for r in recs]))
        cells.append(RuntimeCell(*key, replicates=len(recs), median_time=median, censored=censored))
    return cells


def runtime_grid(
    n_powers: Sequence[int],
    p_range: Sequence[int],
    configs: Sequence[str],
    time_cap: float | None,
    *,
    replicates: int = 3,
    seed: int = 0,
    jobs: int = 1,
) -> tuple[list[BenchRecord], list[RuntimeCell]]:
    """Wall times on noise series of length ``2**k`` for ``k`` in ``n_powers``."""
    if replicates < 1:
        raise ValueError("replicates must be positive")
    specs = [
        (SimSpec(2**k, p, 1, seed=derive_seed(seed, 2**k, p, r)), r)
        for k in n_powers
        for p in p_range
        for r in range(replicates)
    ]
    return _timed_cells("runtime", specs, configs, time_cap, jobs)


def segments_sweep(
    n_fixed: int,
    segment_counts: Sequence[int],
    p_range: Sequence[int],
    configs: Sequence[str],
    *,
    affected_dims: int | None = None,
    replicates: int = 3,
    time_cap: float | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> tuple[list[BenchRecord], list[RuntimeCell]]:
    """Wall times at fixed length as the number of (equally spaced) segments grows."""
    if replicates < 1:
        raise ValueError("replicates must be positive")
    specs = []
    for p in p_range:
        k = p if affected_dims is None else min(affected_dims, p)
        for segs in segment_counts:
            for r in range(replicates):
                specs.append((SimSpec(n_fixed, p, segs, affected_dims=k,
                                      seed=derive_seed(seed, n_fixed, p, segs, k, r)), r))
    return _timed_cells("segments", specs, configs, time_cap, jobs)


def _file_label(label: str) -> str:
    return label.replace(":", "_").replace("/", "+")


def write_experiment(out_dir: str | Path, experiment: str, rows: Sequence[dict], summary: dict) -> list[Path]:
    """Write long-format CSVs named ``{experiment}_{p}_{config}.csv`` plus a JSON summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["p"], row["algorithm"]), []).append(row)
    paths = []
    for (p, label), group in sorted(groups.items()):
        path = out_dir / f"{experiment}_{p}_{_file_label(label)}.csv"
        fields = list(group[0])
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(group)
        paths.append(path)
    summary_path = out_dir / f"{experiment}_summary.json"
    tmp = summary_path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    os.replace(tmp, summary_path)
    paths.append(summary_path)
    return paths


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def record_rows(records: Sequence[BenchRecord]) -> list[dict]:
    return [asdict(r) for r in records]


def cell_rows(cells: Sequence[RuntimeCell]) -> list[dict]:
    return [asdict(c) for c in cells]
