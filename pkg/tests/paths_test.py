import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from varlab.errors import ConfigurationError, DomainError
from varlab.paths import (
    Path, Seed, TimeGrid, heat_kernel, heat_kernel_deriv, simulate_brownian, simulate_two_sided,
)


def test_same_seed_same_path():
    """Test that a path is a pure function of (root, stream, substream)"""
    grid = TimeGrid(0.0, 1.0, 256)
    first = simulate_brownian(grid, Seed(7, 3))
    second = simulate_brownian(grid, Seed(7, 3))
    assert np.array_equal(first.values, second.values)
    assert not np.array_equal(first.values, simulate_brownian(grid, Seed(7, 4)).values)
    assert not np.array_equal(first.values, simulate_brownian(grid, Seed(7, 3), substream=1).values)


def test_path_starts_at_zero_and_is_read_only():
    path = simulate_brownian(TimeGrid(0.0, 2.0, 64), Seed(1))
    assert path.values.shape == (65,)
    assert path.values[0] == 0.0
    with pytest.raises(ValueError):
        path.values[1] = 5.0


def test_increments_are_standard_gaussian():
    """Test the scaled increments for mean, variance, skewness and kurtosis"""
    n = 2**17
    grid = TimeGrid(0.0, 1.0, n)
    scaled = simulate_brownian(grid, Seed(11)).increments / math.sqrt(grid.dt)
    assert abs(np.mean(scaled)) < 5.0 / math.sqrt(n)
    assert abs(np.var(scaled) - 1.0) < 5.0 * math.sqrt(2.0 / n)
    assert abs(stats.skew(scaled)) < 5.0 * math.sqrt(6.0 / n)
    assert abs(stats.kurtosis(scaled)) < 5.0 * math.sqrt(24.0 / n)


def test_substreams_are_uncorrelated():
    n = 2**15
    grid = TimeGrid(0.0, 1.0, n)
    seed = Seed(5, 2)
    driver = simulate_brownian(grid, seed, substream=0).increments
    noise = simulate_brownian(grid, seed, substream=1).increments
    assert abs(np.corrcoef(driver, noise)[0, 1]) < 5.0 / math.sqrt(n)


def test_study_roots_differ():
    seed = Seed(20100913)
    assert seed.for_study(1) == seed.for_study(1)
    assert seed.for_study(1).root != seed.for_study(2).root


@pytest.mark.parametrize("root, stream", [(-1, 0), (0, -1), (2**64, 0)])
def test_seed_out_of_range(root, stream):
    with pytest.raises(ConfigurationError):
        Seed(root, stream)


@pytest.mark.parametrize("start, end, n", [(0.0, 1.0, 0), (1.0, 1.0, 4), (2.0, 1.0, 4), (0.0, 1.0, 2.5)])
def test_invalid_time_grid(start, end, n):
    with pytest.raises(ConfigurationError):
        TimeGrid(start, end, n)


def test_grid_points_are_not_accumulated():
    grid = TimeGrid(0.0, 1.0, 1024)
    assert grid.points[-1] == 1.0
    assert grid.index_of(0.5) == 512
    with pytest.raises(ConfigurationError):
        grid.index_of(0.5 / 1024)


def test_stride_of_nested_partition():
    grid = TimeGrid(0.0, 1.0, 64)
    assert grid.stride_of(TimeGrid(0.0, 1.0, 8)) == (0, 8)
    assert grid.stride_of(TimeGrid(0.5, 1.0, 4)) == (32, 8)
    with pytest.raises(ConfigurationError):
        grid.stride_of(TimeGrid(0.0, 1.0, 48))
    with pytest.raises(ConfigurationError):
        grid.stride_of(TimeGrid(0.0, 2.0, 8))


def test_sample_on_coarse_partition():
    grid = TimeGrid(0.0, 1.0, 16)
    path = Path(grid, np.arange(17.0))
    assert np.array_equal(path.sample(TimeGrid(0.0, 1.0, 4)), [0.0, 4.0, 8.0, 12.0, 16.0])


def test_path_shape_mismatch():
    with pytest.raises(ConfigurationError):
        Path(TimeGrid(0.0, 1.0, 4), np.zeros(4))


def test_two_sided_branches():
    noise = simulate_two_sided(2.0, 0.01, Seed(3))
    assert noise.extent >= 2.0
    assert noise.positive.grid == noise.negative.grid
    assert noise.positive.values[0] == noise.negative.values[0] == 0.0
    # independent sub-streams
    assert not np.array_equal(noise.positive.values, noise.negative.values)
    with pytest.raises(ConfigurationError):
        simulate_two_sided(0.0, 0.01, Seed(3))


@pytest.mark.parametrize("eps", [1e-3, 0.1, 1.0])
def test_heat_kernel_has_unit_mass(eps):
    reach = 12.0 * math.sqrt(eps)
    mass, _ = integrate.quad(heat_kernel, -reach, reach, args=(eps,), points=[0.0], epsabs=1e-13)
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_heat_kernel_derivative_matches_difference_quotient():
    x, eps, h = 0.3, 0.2, 1e-6
    numeric = (heat_kernel(x + h, eps) - heat_kernel(x - h, eps)) / (2.0 * h)
    assert heat_kernel_deriv(x, eps) == pytest.approx(numeric, rel=1e-6)


@pytest.mark.parametrize("eps", [0.0, -1.0])
def test_heat_kernel_rejects_bandwidth(eps):
    with pytest.raises(DomainError):
        heat_kernel(0.0, eps)
    with pytest.raises(DomainError):
        heat_kernel_deriv(0.0, eps)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-10.0, 10.0), eps=st.floats(1e-4, 10.0))
def test_heat_kernel_parity(x, eps):
    """p is even and p' is odd, exactly"""
    assert heat_kernel(-x, eps) == heat_kernel(x, eps)
    assert heat_kernel_deriv(-x, eps) == -heat_kernel_deriv(x, eps)
