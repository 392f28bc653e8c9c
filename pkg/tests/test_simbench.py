"""Simulation, candidate traces and timing grids."""

import csv
import json

import numpy as np
import pytest

from geomseg.geomfpop import PruningConfig
from geomseg.model_cost import CostModel
from geomseg.simbench import (
    SimSpec,
    candidate_trace_experiment,
    cell_rows,
    comparisons,
    derive_seed,
    generate,
    log_grid,
    parse_algorithm,
    record_rows,
    run_algorithm,
    runtime_grid,
    segments_sweep,
    write_experiment,
)

COUNT_MODELS = [CostModel.poisson(), CostModel.negbin(2.0)]


class TestSimSpec:
    def test_single_segment_is_noise(self):
        data, bounds = generate(SimSpec(n=500, p=2, seed=1))
        assert bounds.size == 0
        assert abs(data.values.mean()) < 0.2
        assert data.values.std() == pytest.approx(1.0, abs=0.1)

    def test_equal_spacing(self):
        assert SimSpec(n=10_000, p=1, segments=10).boundaries().tolist() == list(range(1000, 10_000, 1000))

    def test_alternating_levels(self):
        par = SimSpec(n=8, p=2, segments=4, amplitude=3.0).parameters()
        np.testing.assert_array_equal(par[:, 0], [0, 3, 0, 3])

    def test_affected_dims(self):
        spec = SimSpec(n=300, p=3, segments=3, amplitude=4.0, affected_dims=1, seed=2)
        par = spec.parameters()
        assert np.all(par[:, 1:] == 0)
        data, _ = generate(spec)
        tail = data.values[:, 1:]
        assert abs(tail[100:200].mean() - tail[:100].mean()) < 0.5

    @pytest.mark.parametrize(
        "kwargs",
        [dict(n=5, p=1, segments=6), dict(n=5, p=1, segments=0), dict(n=5, p=2, affected_dims=3), dict(n=0, p=1)],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SimSpec(**kwargs)

    def test_reproducible(self):
        a, _ = generate(SimSpec(n=50, p=3, segments=2, seed=9))
        b, _ = generate(SimSpec(n=50, p=3, segments=2, seed=9))
        c, _ = generate(SimSpec(n=50, p=3, segments=2, seed=10))
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    @pytest.mark.parametrize("model", COUNT_MODELS, ids=lambda m: m.kind.value)
    def test_count_models(self, model):
        spec = SimSpec(n=4000, p=1, segments=2, model=model, amplitude=1.0, seed=3)
        data, _ = generate(spec)
        v = data.values[:, 0]
        assert np.all(v >= 0) and np.all(v == np.round(v))
        # segment means follow the alternating parameters
        base, shifted = spec.parameters()[:, 0]
        mean = (lambda th: th) if model.kind.value == "poisson" else (lambda th: model.phi * th / (1 - th))
        assert v[:2000].mean() == pytest.approx(mean(base), rel=0.1)
        assert v[2000:].mean() == pytest.approx(mean(shifted), rel=0.1)
        assert v[2000:].mean() / v[:2000].mean() == pytest.approx(2.0, rel=0.15)


def test_derive_seed():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert len({derive_seed(1, 2, k) for k in range(50)}) == 50
    assert 0 <= derive_seed(7) < 2**64


class TestAlgorithms:
    @pytest.mark.parametrize("label", ["op", "pelt", "PELT "])
    def test_plain(self, label):
        assert parse_algorithm(label) == label.strip().lower()

    def test_geometric(self):
        assert parse_algorithm("geom-r") == PruningConfig()
        assert parse_algorithm("geom-s:last/empty") == PruningConfig("s", "last", "empty")

    @pytest.mark.parametrize("label", ["fpop", "geom-r:all", "geom-x:all/all", "geom-r:any/all"])
    def test_bad_labels(self, label):
        with pytest.raises(ValueError):
            parse_algorithm(label)

    def test_run_and_count(self):
        data, _ = generate(SimSpec(n=200, p=2, segments=2, amplitude=4.0, seed=4))
        results = {lab: run_algorithm(lab, data, 12.0) for lab in ("op", "pelt", "geom-r:last-random/random")}
        assert len({tuple(s.changepoints) for s in results.values()}) == 1
        assert comparisons(results["op"]) == 200 * 201 // 2
        assert comparisons(results["pelt"]) < comparisons(results["op"])
        assert comparisons(results["geom-r:last-random/random"]) > 0


def test_log_grid():
    g = log_grid(10_000)
    assert g[0] == 1 and g[-1] == 10_000
    assert np.all(np.diff(g) > 0)
    assert log_grid(1).tolist() == [1]


@pytest.fixture(scope="module")
def small_trace():
    return candidate_trace_experiment([2], 2000, 3, ["pelt", "geom-r:last-random/random", "geom-r:all/all"], seed=5)


class TestTrace:
    def test_shapes(self, small_trace):
        assert small_trace.counts[(2, "pelt")].shape == (3, 2001)
        assert small_trace.pruned_at[(2, "pelt")].shape == (3, 2000)

    def test_pruning_strength_order(self, small_trace):
        full = small_trace.percentage(2, "geom-r:all/all")
        cheap = small_trace.percentage(2, "geom-r:last-random/random")
        pelt = small_trace.percentage(2, "pelt")
        assert np.all(full <= cheap + 1e-12)
        assert np.all(cheap <= pelt + 1e-12)
        assert pelt[-1] > 85

    def test_counts_match_pruning_times(self, small_trace):
        for key, counts in small_trace.counts.items():
            pruned = small_trace.pruned_at[key]
            for t in (1, 50, 2000):
                assert np.array_equal((pruned[:, :t] > t).sum(axis=1), counts[:, t])

    def test_rows_and_files(self, small_trace, tmp_path):
        rows = small_trace.rows()
        assert len(rows) == 3 * len(small_trace.t_grid)
        paths = write_experiment(tmp_path, "trace", rows, {"n": 2000})
        names = sorted(p.name for p in paths)
        assert "trace_2_geom-r_all+all.csv" in names and "trace_2_pelt.csv" in names
        with open(tmp_path / "trace_2_pelt.csv") as fh:
            first = next(csv.DictReader(fh))
        assert first["t"] == "1" and float(first["mean_percent_retained"]) == 100.0
        assert json.loads((tmp_path / "trace_summary.json").read_text()) == {"n": 2000}

    def test_deterministic(self, small_trace):
        again = candidate_trace_experiment([2], 2000, 3, ["geom-r:last-random/random"], seed=5)
        key = (2, "geom-r:last-random/random")
        assert np.array_equal(again.counts[key], small_trace.counts[key])

    def test_rejects_op(self):
        with pytest.raises(ValueError):
            candidate_trace_experiment([2], 100, 1, ["op"])


class TestTiming:
    def test_runtime_grid_grows_with_n(self):
        records, cells = runtime_grid([10, 12], [2], ["pelt"], time_cap=60.0, replicates=3)
        assert len(records) == 6
        times = {c.n: c.median_time for c in cells}
        assert times[4096] >= times[1024]
        assert all(r.wall_time >= 0 and not r.censored for r in records)

    def test_censoring(self):
        records, cells = runtime_grid([16, 17], [2], ["op"], time_cap=0.2, replicates=1)
        assert all(c.censored and c.median_time is None for c in cells)
        # the larger instance is skipped once the smaller one hit the cap
        assert np.isnan(records[-1].wall_time)

    def test_bad_cap(self):
        with pytest.raises(ValueError):
            runtime_grid([8], [2], ["pelt"], time_cap=0.0)

    def test_segments_sweep(self):
        records, cells = segments_sweep(4000, [1, 40], [2], ["pelt", "geom-r:last-random/random"], replicates=1)
        assert {(c.segments, c.algorithm) for c in cells} == {
            (s, a) for s in (1, 40) for a in ("pelt", "geom-r:last-random/random")
        }
        assert {r.changepoint_count for r in records if r.segments == 40} == {39}
        rows = cell_rows(cells) + record_rows(records)
        assert all("algorithm" in r for r in rows)

    def test_affected_dims_recorded(self):
        records, _ = segments_sweep(1000, [5], [3], ["pelt"], affected_dims=1, replicates=1)
        assert records[0].affected_dims == 1

    def test_parallel_matches_sequential(self):
        seq, _ = segments_sweep(2000, [4], [2], ["pelt"], replicates=2)
        par, _ = segments_sweep(2000, [4], [2], ["pelt"], replicates=2, jobs=2)
        assert [r.changepoint_count for r in seq] == [r.changepoint_count for r in par]
        assert [r.live_final for r in seq] == [r.live_final for r in par]


@pytest.mark.parametrize("seed", range(20))
def test_high_signal_detection(seed):
    data, truth = generate(SimSpec(n=300, p=2, segments=5, amplitude=5.0, seed=seed))
    seg = run_algorithm("geom-r:last-random/random", data, 2 * 2 * np.log(300), seed=seed)
    assert len(seg.changepoints) == len(truth)
    assert np.all(np.abs(seg.changepoints - truth) <= 2)
