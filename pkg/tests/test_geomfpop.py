"""Geometric functional pruning: selection, testing-set updates and the solver."""

import itertools
import math

import numpy as np
import pytest

from conftest import MODELS, draw_values
from geomseg.dp import RunState, op_solve, pelt_solve
from geomseg.geometry import Hyperrect, UnsupportedOperatorError, make_sset
from geomseg.geomfpop import (
    Candidate,
    FutureSelect,
    PastSelect,
    PruningConfig,
    PruningKind,
    geomfpop_solve,
    select_future,
    select_past,
    solver_seed,
    update_testing_set,
)
from geomseg.model_cost import CostModel, TimeSeriesMatrix, default_penalty
from geomseg.simbench import SimSpec, generate

ALL_CONFIGS = [
    PruningConfig(kind, fut, past, seed=3)
    for kind, fut, past in itertools.product(PruningKind, FutureSelect, PastSelect)
]


def cfg_id(c: PruningConfig) -> str:
    return c.label


@pytest.fixture
def state(rng):
    data = TimeSeriesMatrix(rng.normal(size=(10, 2)))
    seg = op_solve(data, 3.0)
    rs = RunState(seg.qhat, seg.tauhat, list(range(10)), 3.0, 10)
    return rs, data


class TestConfig:
    def test_label(self):
        assert PruningConfig().label == "geom-r:all/all"
        assert PruningConfig("s", "last-random", "random").label == "geom-s:last-random/random"

    def test_bad_values(self):
        with pytest.raises(ValueError):
            PruningConfig(future="sometimes")
        with pytest.raises(ValueError):
            PruningConfig(seed=-1)

    def test_solver_seed_is_stable(self):
        assert solver_seed(7) == solver_seed(7)
        assert solver_seed(7) != solver_seed(8)
        assert 0 <= solver_seed(2**64 - 1) < 2**32


class TestSelectFuture:
    def test_at_start_is_full_space(self, state):
        rs, data = state
        sets = select_future(Candidate(4, None), 4, PruningConfig(), np.random.default_rng(0), rs, data)
        assert len(sets) == 1 and sets[0].full_space

    def test_all_cardinality(self, state):
        rs, data = state
        sets = select_future(Candidate(4, None), 7, PruningConfig(), np.random.default_rng(0), rs, data)
        assert [(s.i, s.j) for s in sets] == [(4, 4), (4, 5), (4, 6), (4, 7)]

    def test_last_only(self, state):
        rs, data = state
        cfg = PruningConfig(future="last")
        sets = select_future(Candidate(2, None), 9, cfg, np.random.default_rng(0), rs, data)
        assert [(s.i, s.j) for s in sets] == [(2, 9)]

    def test_last_plus_random_replays(self, state):
        rs, data = state
        cfg = PruningConfig(future="last-random")
        draws = [
            [(s.i, s.j) for s in select_future(Candidate(2, None), 9, cfg, np.random.default_rng(5), rs, data)]
            for _ in range(2)
        ]
        assert draws[0] == draws[1]
        assert len(draws[0]) == 2 and draws[0][0] == (2, 9)
        assert 2 <= draws[0][1][1] <= 9

    def test_live_restriction(self, state):
        rs, data = state
        sets = select_future(Candidate(2, None), 9, PruningConfig(), np.random.default_rng(0), rs, data, live=[5, 7])
        assert [s.j for s in sets] == [2, 5, 7, 9]

    def test_time_before_start(self, state):
        rs, data = state
        with pytest.raises(ValueError):
            select_future(Candidate(5, None), 4, PruningConfig(), np.random.default_rng(0), rs, data)


class TestSelectPast:
    @pytest.mark.parametrize("past", list(PastSelect))
    def test_first_candidate_has_no_past(self, past, state):
        rs, data = state
        assert select_past(Candidate(1, None), PruningConfig(past=past), np.random.default_rng(0), rs, data) == []

    def test_all(self, state):
        rs, data = state
        sets = select_past(Candidate(4, None), PruningConfig(), np.random.default_rng(0), rs, data)
        assert [(s.i, s.j) for s in sets] == [(1, 4), (2, 4), (3, 4)]

    def test_empty(self, state):
        rs, data = state
        assert select_past(Candidate(6, None), PruningConfig(past="empty"), np.random.default_rng(0), rs, data) == []

    def test_random_replays(self, state):
        rs, data = state
        cfg = PruningConfig(past="random")
        a = select_past(Candidate(6, None), cfg, np.random.default_rng(9), rs, data)
        b = select_past(Candidate(6, None), cfg, np.random.default_rng(9), rs, data)
        assert len(a) == 1 and (a[0].i, a[0].j) == (b[0].i, b[0].j)
        assert 1 <= a[0].i < 6


def one_point_set(center, r_sq):
    data = TimeSeriesMatrix(np.atleast_2d(np.asarray(center, dtype=float)))
    rs = RunState.start(1, 1.0)
    rs.qhat[1] = r_sq
    rs.t = 1
    return make_sset(1, 2, rs, data)


class TestUpdate:
    def test_empty_future_absorbs(self):
        r = Hyperrect(np.zeros(2), np.full(2, 2.0))
        out = update_testing_set(Candidate(1, r), [], [one_point_set([1, 1], -0.5), one_point_set([1, 1], 9.0)], "r")
        assert out.empty
        s_out = update_testing_set(Candidate(1, one_point_set([1, 1], 4.0)), [], [one_point_set([1, 1], -0.5)], "s")
        assert s_out is None

    def test_identity(self):
        r = Hyperrect(np.zeros(2), np.full(2, 2.0))
        out = update_testing_set(Candidate(1, r), [], [], PruningKind.RTYPE)
        np.testing.assert_array_equal(out.lo, r.lo)
        np.testing.assert_array_equal(out.hi, r.hi)

    def test_composition(self):
        r = Hyperrect(np.zeros(2), np.full(2, 2.0))
        out = update_testing_set(Candidate(1, r), [one_point_set([20, 20], 1.0)], [one_point_set([3, 0], 2.25)], "r")
        np.testing.assert_allclose(out.lo, [1.5, 0.0], atol=1e-12)
        np.testing.assert_allclose(out.hi, [2.0, 1.1180339887], atol=1e-9)

    def test_stype_needs_gaussian(self):
        data = TimeSeriesMatrix(np.array([[1.0]]), CostModel.poisson())
        rs = RunState.start(1, 1.0)
        rs.qhat[1] = 5.0
        rs.t = 1
        s = make_sset(1, 2, rs, data)
        with pytest.raises(UnsupportedOperatorError):
            update_testing_set(Candidate(1, s), [], [s], "s")

    def test_rtype_needs_box(self):
        with pytest.raises(TypeError):
            update_testing_set(Candidate(1, None), [], [], "r")


def test_stype_rejects_count_models():
    data = TimeSeriesMatrix(np.ones((5, 2)), CostModel.poisson())
    with pytest.raises(UnsupportedOperatorError):
        geomfpop_solve(data, 2.0, PruningConfig(kind="s"))


@pytest.mark.parametrize("config", ALL_CONFIGS, ids=cfg_id)
def test_exactness(config, rng):
    for model in MODELS:
        if config.kind is PruningKind.STYPE and model.kind.value != "gaussian":
            continue
        for n, p in [(60, 1), (120, 3), (80, 5)]:
            data = TimeSeriesMatrix(draw_values(rng, model, n, p, changes=int(rng.integers(0, 6))), model)
            beta = default_penalty(n, p) * rng.uniform(0.5, 4.0)
            ref = op_solve(data, beta)
            seg = geomfpop_solve(data, beta, config)
            assert seg.changepoints.tolist() == ref.changepoints.tolist()
            assert seg.total_cost == pytest.approx(ref.total_cost, rel=1e-8)
            assert seg.algorithm == config.label


def test_worked_example_all_solvers_agree(fig1_data):
    ref = op_solve(fig1_data, 1.0)
    for config in ALL_CONFIGS:
        assert geomfpop_solve(fig1_data, 1.0, config).changepoints.tolist() == ref.changepoints.tolist()


@pytest.mark.parametrize("config", ALL_CONFIGS, ids=cfg_id)
def test_dominated_by_pelt(config):
    data, _ = generate(SimSpec(n=1500, p=2, segments=3, seed=21))
    beta = default_penalty(1500, 2)
    pelt = pelt_solve(data, beta).diagnostics
    geom = geomfpop_solve(data, beta, config).diagnostics
    assert np.all(geom.pruned_at <= pelt.pruned_at)
    assert np.all(geom.candidate_counts <= pelt.candidate_counts)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.kind.value)
def test_boxes_are_nested(model, rng):
    data = TimeSeriesMatrix(draw_values(rng, model, 60, 2, changes=3), model)
    seg = geomfpop_solve(data, default_penalty(60, 2), PruningConfig(future="last-random", past="random", seed=4), record=True)
    lo, hi = seg.diagnostics.boxes
    for a in range(60):
        alive = ~np.isnan(lo[:, a, 0])
        rows_lo, rows_hi = lo[alive, a], hi[alive, a]
        assert np.all(np.diff(rows_lo, axis=0) >= 0)
        assert np.all(np.diff(rows_hi, axis=0) <= 0)
        assert np.all(rows_lo <= rows_hi)


@pytest.mark.parametrize("config", [c for c in ALL_CONFIGS if c.kind is PruningKind.RTYPE], ids=cfg_id)
def test_living_zone_inside_testing_box(config, rng):
    """Grid points where a candidate's functional cost is optimal lie in its box."""
    n = 40
    y = draw_values(rng, CostModel.gaussian(), n, 2, changes=3)
    data = TimeSeriesMatrix(y)
    beta = default_penalty(n, 2)
    seg = geomfpop_solve(data, beta, config, record=True)
    lo, hi = seg.diagnostics.boxes
    g = np.linspace(y.min() - 1, y.max() + 1, 61)
    th = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    # q[a](theta) = Q[a] + beta + sum over rows a..t-1 of |y - theta|^2, by direct accumulation;
    # at step t a box also accounts for the piece Q[t] + beta of the next candidate
    q = np.full((n + 1, len(th)), np.inf)
    for t in range(1, n + 1):
        q[t - 1] = seg.qhat[t - 1] + beta
        q[:t] += ((y[t - 1] - th) ** 2).sum(axis=1)
        q[t] = seg.qhat[t] + beta
        best = q[: t + 1].min(axis=0)
        for a in range(t):
            others = np.delete(q[: t + 1], a, axis=0).min(axis=0)
            if seg.diagnostics.pruned_at[a] <= t:
                assert not np.any(q[a] < others - 1e-7 * (1 + np.abs(others)))
                continue
            pts = th[q[a] <= best + 1e-9 * (1 + np.abs(best))]
            assert np.all(pts >= lo[t, a] - 1e-8) and np.all(pts <= hi[t, a] + 1e-8)


def test_three_operations_per_candidate():
    data, _ = generate(SimSpec(n=3000, p=3, segments=6, seed=2))
    d = geomfpop_solve(data, default_penalty(3000, 3), PruningConfig(future="last-random", past="random", seed=1)).diagnostics
    before = np.r_[0, d.candidate_counts[:-1]] + 1
    ops = d.inter_ops + d.excl_ops
    assert np.all(ops[1:] <= 3 * before[1:])
    assert ops.sum() > 0


@pytest.mark.parametrize("kind", list(PruningKind))
def test_deterministic_for_fixed_seed(kind):
    data, _ = generate(SimSpec(n=2000, p=2, segments=4, seed=6))
    beta = default_penalty(2000, 2)
    cfg = PruningConfig(kind, "last-random", "random", seed=123)
    a, b = geomfpop_solve(data, beta, cfg).diagnostics, geomfpop_solve(data, beta, cfg).diagnostics
    for name in ("candidate_counts", "pruned_at", "inter_ops", "excl_ops"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_trace_matches_live_lists():
    data, _ = generate(SimSpec(n=1000, p=2, segments=5, seed=9))
    d = geomfpop_solve(data, default_penalty(1000, 2)).diagnostics
    for t in (1, 10, 500, 1000):
        assert len(d.live_at(t)) == d.candidate_counts[t]
    assert d.live_at(1000).tolist() == sorted(d.live_at(1000).tolist())


def test_noise_pruning_levels():
    data, _ = generate(SimSpec(n=10_000, p=2, seed=31))
    beta = default_penalty(10_000, 2)
    r = geomfpop_solve(data, beta, PruningConfig()).diagnostics.candidate_counts[-1]
    s = geomfpop_solve(data, beta, PruningConfig(kind="s")).diagnostics.candidate_counts[-1]
    assert r <= 0.02 * 10_000
    assert s <= 0.05 * 10_000
    assert math.isfinite(beta)
