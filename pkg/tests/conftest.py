import numpy as np
import pytest

from geomseg import CostModel, TimeSeriesMatrix

# five bivariate points of a change-free series used as a worked example
FIG1_POINTS = np.array([[0.29, 1.93], [1.86, -0.02], [0.9, 2.51], [-1.26, 0.91], [1.22, 1.11]])

MODELS = [CostModel.gaussian(), CostModel.poisson(), CostModel.negbin(1.0)]

# one status line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def draw_values(rng: np.random.Generator, model: CostModel, n: int, p: int, changes: int = 0) -> np.ndarray:
    """Random series with a few random changes, valid for ``model``."""
    cuts = np.sort(rng.choice(np.arange(1, n), size=min(changes, n - 1), replace=False)) if changes else []
    edges = np.concatenate([[0], cuts, [n]]).astype(int)
    out = np.empty((n, p))
    for a, b in zip(edges, edges[1:]):
        if model.kind.value == "gaussian":
            out[a:b] = rng.normal(rng.normal(0, 2, size=p), 1.0, size=(b - a, p))
        elif model.kind.value == "poisson":
            out[a:b] = rng.poisson(rng.uniform(0.2, 6.0, size=p), size=(b - a, p))
        else:
            theta = rng.uniform(0.1, 0.85, size=p)
            out[a:b] = rng.negative_binomial(model.phi, 1.0 - theta, size=(b - a, p))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def step_series():
    """Ten zeros then ten tens, one dimension."""
    return TimeSeriesMatrix(np.r_[np.zeros(10), np.full(10, 10.0)])


@pytest.fixture
def fig1_data():
    return TimeSeriesMatrix(FIG1_POINTS)


def oracle_segment_cost(model: CostModel, seg: np.ndarray) -> float:
    """Segment cost at the closed-form maximum-likelihood parameter, scored with scipy."""
    from scipy import stats as sps

    seg = np.atleast_2d(seg)
    mean = seg.mean(axis=0)
    if model.kind.value == "gaussian":
        return float(((seg - mean) ** 2).sum())
    if model.kind.value == "poisson":
        theta = np.maximum(mean, 1e-12)
        return float(-2.0 * sps.poisson.logpmf(seg, theta).sum())
    theta = np.clip(mean / (model.phi + mean), 1e-12, 1.0 - 1e-12)
    return float(-2.0 * sps.nbinom.logpmf(seg, model.phi, 1.0 - theta).sum())


def brute_force(values: np.ndarray, model: CostModel, beta: float) -> tuple[list[int], float]:
    """Best penalised segmentation by enumerating every subset of change positions."""
    values = np.asarray(values, dtype=float).reshape(len(values), -1)
    n = len(values)
    cost = {}
    best, best_cps = np.inf, []
    for mask in range(1 << (n - 1)):
        cps = [k + 1 for k in range(n - 1) if mask >> k & 1]
        edges = [0, *cps, n]
        total = beta * (len(edges) - 1)
        for a, b in zip(edges, edges[1:]):
            if (a, b) not in cost:
                cost[a, b] = oracle_segment_cost(model, values[a:b])
            total += cost[a, b]
        if total < best:
            best, best_cps = total, cps
    return best_cps, best
