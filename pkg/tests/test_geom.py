import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavespread.geom import (MetricError, MetricSpec, NeighborTable, distance2, distance_matrix,
                             rank_neighbors, resolve_shift)
from wavespread.population import Population, generate_csr, generate_grid

GRID_EUCLIDEAN = np.array([
    [0, 1, 4, 1, 2, 5, 4, 5, 8],
    [1, 0, 1, 2, 1, 2, 5, 4, 5],
    [4, 1, 0, 5, 2, 1, 8, 5, 4],
    [1, 2, 5, 0, 1, 4, 1, 2, 5],
    [2, 1, 2, 1, 0, 1, 2, 1, 2],
    [5, 2, 1, 4, 1, 0, 5, 2, 1],
    [4, 5, 8, 1, 2, 5, 0, 1, 4],
    [5, 4, 5, 2, 1, 2, 1, 0, 1],
    [8, 5, 4, 5, 2, 1, 4, 1, 0],
])

GRID_TORE = np.array([
    [0, 1, 1, 1, 2, 2, 1, 2, 2],
    [1, 0, 1, 2, 1, 2, 2, 1, 2],
    [1, 1, 0, 2, 2, 1, 2, 2, 1],
    [1, 2, 2, 0, 1, 1, 1, 2, 2],
    [2, 1, 2, 1, 0, 1, 2, 1, 2],
    [2, 2, 1, 1, 1, 0, 2, 2, 1],
    [1, 2, 2, 1, 2, 2, 0, 1, 1],
    [2, 1, 2, 2, 1, 2, 1, 0, 1],
    [2, 2, 1, 2, 2, 1, 1, 1, 0],
])

GRID_SHIFTED = np.array([
    [0, 0.90, 1.24, 0.57, 1.40, 1.74, 1.57, 2.40, 2.74],
    [1.24, 0, 0.90, 1.74, 0.57, 1.40, 2.74, 1.57, 2.40],
    [0.90, 1.24, 0, 1.40, 1.74, 0.57, 2.40, 2.74, 1.57],
    [1.57, 2.40, 2.74, 0, 0.90, 1.24, 0.57, 1.40, 1.74],
    [2.74, 1.57, 2.40, 1.24, 0, 0.90, 1.74, 0.57, 1.40],
    [2.40, 2.74, 1.57, 0.90, 1.24, 0, 1.40, 1.74, 0.57],
    [0.57, 1.40, 1.74, 1.57, 2.40, 2.74, 0, 0.90, 1.24],
    [1.74, 0.57, 1.40, 2.74, 1.57, 2.40, 1.24, 0, 0.90],
    [1.40, 1.74, 0.57, 2.40, 2.74, 1.57, 0.90, 1.24, 0],
])


def test_grid_euclidean_matrix(grid3):
    assert np.array_equal(distance_matrix(MetricSpec("euclidean"), grid3), GRID_EUCLIDEAN)
    assert distance2(MetricSpec(), grid3, 0, 8) == 8


def test_grid_tore_matrix(grid3):
    M = distance_matrix(MetricSpec("tore", grid_dims=(3, 3)), grid3)
    assert np.array_equal(M, GRID_TORE)
    assert distance2(MetricSpec("tore", grid_dims=(3, 3)), grid3, 0, 4) == 2


def test_grid_shifted_tore_matrix(grid3, shift_metric):
    M = distance_matrix(shift_metric, grid3)
    assert np.all(np.abs(M - GRID_SHIFTED) <= 0.005)
    assert abs(distance2(shift_metric, grid3, 0, 1) - 0.90) <= 0.005
    assert not np.allclose(M, M.T)


def test_self_distance_is_zero(grid3, shift_metric):
    for m in (MetricSpec(), MetricSpec("tore", grid_dims=(3, 3)), shift_metric):
        assert all(distance2(m, grid3, k, k) == 0 for k in range(9))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 7), st.integers(2, 7))
def test_tore_bounded_by_euclidean(n1, n2):
    pop = generate_grid(n1, n2)
    E = distance_matrix(MetricSpec(), pop)
    T = distance_matrix(MetricSpec("tore", grid_dims=(n1, n2)), pop)
    assert np.all(T <= E)
    assert np.array_equal(T, T.T)


def test_mahalanobis_is_standardised_euclidean():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 2)) * [3.0, 0.5]
    pop = Population(rng.uniform(size=(40, 2)), aux=x)
    S = np.cov(x.T, bias=True)
    d = x[3] - x[17]
    expected = d @ np.linalg.solve(S, d)
    assert distance2(MetricSpec("mahalanobis"), pop, 3, 17) == pytest.approx(expected, rel=1e-12)


def test_mahalanobis_singular_covariance():
    x = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    pop = Population(np.zeros((5, 1)), aux=x)
    with pytest.raises(MetricError, match="singular"):
        distance2(MetricSpec("mahalanobis"), pop, 0, 1)


def test_metric_errors(grid3):
    with pytest.raises(MetricError, match="valid"):
        MetricSpec("manhattan")
    with pytest.raises(MetricError, match="grid_dims"):
        MetricSpec("tore")
    with pytest.raises(MetricError, match="inside"):
        distance2(MetricSpec("tore", grid_dims=(2, 2)), grid3, 0, 1)
    with pytest.raises(MetricError, match="shift"):
        distance2(MetricSpec("shifted_tore2", grid_dims=(3, 3)), grid3, 0, 1)
    with pytest.raises(MetricError, match="auxiliary"):
        distance2(MetricSpec("mahalanobis"), grid3, 0, 1)


def test_resolve_shift_scale():
    m = MetricSpec("shifted-tore", grid_dims=(12, 12))
    shifts = np.array([resolve_shift(m, s).shift for s in range(2000)])
    assert np.all(np.abs(shifts.std(axis=0) - 0.1) < 0.01)
    fixed = resolve_shift(MetricSpec("shifted-tore", grid_dims=(3, 3), shift=(0.1, 0.2)), 0)
    assert fixed.shift == (0.1, 0.2)


def test_rank_neighbors_tie_group(grid3):
    r = rank_neighbors(MetricSpec(), grid3, 0)
    assert r.order[0] == 0
    groups = [sorted(g.tolist()) for g in r.tie_groups]
    assert groups[0] == [0]
    assert groups[1] == [1, 3]


def test_rank_neighbors_shifted_order(grid3, shift_metric):
    r = rank_neighbors(shift_metric, grid3, 0)
    assert r.order[:4].tolist() == [0, 3, 1, 2]
    assert len(r.tie_groups) == 9


def test_rank_neighbors_singleton(grid3):
    r = rank_neighbors(MetricSpec(), grid3, 4, active=[4])
    assert len(r) == 1
    with pytest.raises(ValueError):
        rank_neighbors(MetricSpec(), grid3, 4, active=[1, 2])


def test_neighbor_table_matches_rankings():
    pop = generate_csr(40, 8, fixed_count=True)
    t = NeighborTable(MetricSpec(), pop)
    for k in (0, 13, 39):
        r = rank_neighbors(MetricSpec(), pop, k)
        assert np.array_equal(t.order[k], r.order)
        d = np.linalg.norm(pop.coords[t.order[k]] - pop.coords[k], axis=1)
        assert np.all(np.diff(d) >= 0)
