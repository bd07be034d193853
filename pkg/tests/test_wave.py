import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavespread.geom import MetricSpec
from wavespread.population import (Population, assign_equal_pi, generate_csr, generate_grid,
                                   inclusion_probabilities)
from wavespread.strata import build_A, build_strata
from wavespread.wave import (SamplingError, WaveOptions, direction_vector, step_bounds,
                             update_choice, wave_sample)


def test_decided_vector_is_returned_unchanged(grid3):
    pi = np.array([1, 0, 0, 1, 1, 0, 0, 0, 1], dtype=float)
    s = wave_sample(grid3, pi=pi, seed=0)
    assert np.array_equal(s.indicator, pi)
    assert s.info["steps"] == 0


@pytest.mark.parametrize("solver", ["gram", "svd"])
def test_direction_identity(solver):
    v = direction_vector(np.eye(2), solver=solver)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert np.linalg.norm(np.eye(2) @ v) == pytest.approx(1.0)


@pytest.mark.parametrize("solver", ["gram", "svd"])
def test_direction_duplicated_rows(solver):
    rng = np.random.default_rng(3)
    A = rng.uniform(size=(6, 6))
    A[4] = A[1]
    A[5] = A[2]
    # duplicated rows leave a 2-dimensional left null space, hence a right one
    v = direction_vector(A, solver=solver)
    assert np.linalg.norm(A @ v) <= 1e-8


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("solver", ["gram", "svd"])
def test_direction_against_dense_svd(seed, solver):
    rng = np.random.default_rng(seed)
    pop = Population(rng.uniform(size=(10, 2)))
    pi = inclusion_probabilities(rng.uniform(0.5, 2.0, size=10), 3)
    A = build_A(build_strata(pop, MetricSpec(), pi_active=pi)).toarray()
    smin = np.linalg.svd(A, compute_uv=False)[-1]
    v = direction_vector(A, solver=solver)
    assert np.linalg.norm(A @ v) <= smin + 1e-9


def test_direction_rejects_non_square():
    with pytest.raises(ValueError):
        direction_vector(np.ones((2, 3)))


@pytest.mark.parametrize("pi, v, expected", [
    ([0.5, 0.5], [1, -1], (0.5, 0.5)),
    ([0.2, 0.8], [1, -1], (0.8, 0.2)),
    ([0.3], [1], (0.7, 0.3)),
])
def test_step_bounds(pi, v, expected):
    assert step_bounds(pi, v) == pytest.approx(expected, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=12), st.integers(0, 2**32 - 1))
def test_step_bounds_reach_the_cube_boundary(pi, seed):
    pi = np.array(pi)
    v = np.random.default_rng(seed).normal(size=len(pi))
    l1, l2 = step_bounds(pi, v)
    for new in (pi + l1 * v, pi - l2 * v):
        assert np.all(new >= -1e-12) and np.all(new <= 1 + 1e-12)
        assert np.min(np.minimum(np.abs(new), np.abs(1 - new))) < 1e-12
    # both branches average back to pi
    p = l2 / (l1 + l2)
    assert np.allclose(p * (pi + l1 * v) + (1 - p) * (pi - l2 * v), pi)


def test_update_choice_is_seeded():
    pi, v = np.array([0.3, 0.7]), np.array([1.0, -1.0])
    l1, l2 = step_bounds(pi, v)
    a = [update_choice(pi, v, l1, l2, np.random.default_rng(9))[0] for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_update_choice_martingale():
    rng = np.random.default_rng(1)
    pi = np.array([0.3, 0.45, 0.25])
    v = np.array([0.6, -0.1, -0.5])
    l1, l2 = step_bounds(pi, v)
    m = 100_000
    draws = np.array([update_choice(pi, v, l1, l2, rng) for _ in range(m)])
    se = draws.std(axis=0, ddof=1) / math.sqrt(m)
    assert np.all(np.abs(draws.mean(axis=0) - pi) < 3 * se)


def _check_sample(pop, pi, s, trace):
    assert s.n == round(pi.sum())
    for t in trace:
        assert np.all(t >= 0) and np.all(t <= 1)
        assert math.fsum(t) == pytest.approx(pi.sum(), abs=1e-9)
    assert np.all(s.indicator[pi == 1] == 1)
    assert np.all(s.indicator[pi == 0] == 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2**32 - 1), st.booleans())
def test_sample_properties(N, seed, equal):
    rng = np.random.default_rng(seed)
    pop = Population(rng.uniform(size=(N, 2)))
    n = int(rng.integers(1, N))
    pi = np.full(N, n / N) if equal else inclusion_probabilities(rng.uniform(0.1, 3, size=N), n)
    trace = []
    s = wave_sample(pop, pi=pi, seed=seed, trace=trace)
    _check_sample(pop, pi, s, trace)
    assert s.info["steps"] <= N


@pytest.mark.parametrize("metric", [
    MetricSpec("tore", grid_dims=(6, 6)),
    MetricSpec("shifted-tore", grid_dims=(6, 6)),
    MetricSpec("shifted-tore", grid_dims=(6, 6), shift=(0.01, -0.02)),
])
def test_sample_on_grid_metrics(metric):
    pop = assign_equal_pi(generate_grid(6, 6), 4)
    trace = []
    s = wave_sample(pop, metric, seed=2, trace=trace)
    _check_sample(pop, pop.pi, s, trace)
    assert "shift" in s.info["metric"] or metric.kind == "tore2"


def test_svd_solver_gives_valid_samples(csr_small):
    s = wave_sample(csr_small, seed=4, opts=WaveOptions(solver="svd"))
    assert s.n == 6


def test_reproducible(csr_small):
    a = wave_sample(csr_small, seed=11)
    b = wave_sample(csr_small, seed=11)
    assert np.array_equal(a.indicator, b.indicator)


def test_non_integer_total_rounds_to_neighbour_size():
    pop = Population(np.random.default_rng(0).uniform(size=(12, 2)))
    sizes = {wave_sample(pop, pi=np.full(12, 0.3), seed=s).n for s in range(30)}
    assert sizes <= {3, 4}


def test_max_steps(csr_small):
    with pytest.raises(SamplingError, match="no convergence"):
        wave_sample(csr_small, seed=0, opts=WaveOptions(max_steps=1))


def test_invalid_pi(grid3):
    with pytest.raises(ValueError):
        wave_sample(grid3, pi=np.full(9, 1.5))
    with pytest.raises(ValueError):
        wave_sample(grid3)


def test_inclusion_rates_small_population():
    pop = generate_csr(20, 5, fixed_count=True)
    pi = inclusion_probabilities(np.linspace(1, 3, 20), 5)
    m = 3000
    counts = np.zeros(20)
    for s in range(m):
        counts += wave_sample(pop, pi=pi, seed=s).indicator
    se = np.sqrt(pi * (1 - pi) / m)
    assert np.all(np.abs(counts / m - pi) < 4 * se)
