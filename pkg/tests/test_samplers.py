import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate, stats

from hardedge.errors import DomainError, NormalizationError, RejectionExhaustedError, SeriesRegimeError
from hardedge.schemas import PathSample, RngSpec, SampleMeta
from hardedge.services import samplers
from hardedge.services.kernels import load_kernel
from hardedge.services.samplers import (
    bessel_euler_step,
    inverse_cdf_sample,
    make_time_grid,
    sample_bessel_marginal_exact,
    sample_bessel_path,
    sample_conditioned_exact,
    sample_conditioned_rejection,
    sample_limit_sde,
    stationary_histogram,
)


def test_make_time_grid():
    np.testing.assert_allclose(make_time_grid(1.0, 0.25), [0.0, 0.25, 0.5, 0.75, 1.0])
    grid = make_time_grid(1.0, 0.3)
    assert grid[0] == 0.0 and grid[-1] == 1.0 and np.all(np.diff(grid) <= 0.3 + 1e-12)
    with pytest.raises(DomainError):
        make_time_grid(1.0, 0.0)


def test_euler_step_is_reflected():
    y = np.array([0.01, 0.5])
    out = bessel_euler_step(y, np.array([1e-3, 1e-3]), np.array([-10.0, 0.0]), 2.0)
    assert np.all(out >= 0.0)
    assert out[1] == pytest.approx(0.5 + 0.5 * 1e-3 / 0.5)


def test_limit_sampler_stays_inside_and_is_reproducible(kernel2):
    times = make_time_grid(0.2, 0.05)
    first = sample_limit_sde(0.5, times, kernel2, RngSpec(seed=7), n_paths=20_000, workers=1)
    second = sample_limit_sde(0.5, times, kernel2, RngSpec(seed=7), n_paths=20_000, workers=3)
    assert first.values.shape == (20_000, times.size)
    assert np.all((first.values > 0.0) & (first.values < 1.0))
    np.testing.assert_array_equal(first.values, second.values)
    assert first.meta.horizon is None
    other = sample_limit_sde(0.5, times, kernel2, RngSpec(seed=8), n_paths=100)
    assert not np.array_equal(first.values[:100], other.values)


def test_limit_sampler_rejects_coarse_step(kernel2):
    with pytest.raises(DomainError):
        sample_limit_sde(0.5, make_time_grid(1.0, 0.1), kernel2, RngSpec(), step=0.01)
    with pytest.raises(DomainError):
        sample_limit_sde(1.0, make_time_grid(1.0, 0.1), kernel2, RngSpec())


def test_free_sampler_warns_on_coarse_step(kernel2):
    sample = sample_bessel_path(0.5, make_time_grid(1.0, 0.05), kernel2, RngSpec(), n_paths=3)
    assert sample.meta.warnings
    assert np.all(sample.values >= 0.0)


def test_exact_free_marginal_second_moment(kernel3):
    x0, t = 0.5, 0.4
    draws = sample_bessel_marginal_exact(x0, t, 50_000, kernel3, RngSpec(seed=3))
    squares = draws**2
    stderr = squares.std() / math.sqrt(squares.size)
    assert abs(squares.mean() - (x0 * x0 + 3.0 * t)) < 4.0 * stderr


def test_exact_conditioned_sampler_paths(kernel2):
    times = make_time_grid(0.5, 0.1)
    sample = sample_conditioned_exact(0.5, times, 2.0, kernel2, RngSpec(seed=11), n_paths=500, cdf_points=513)
    assert sample.values.shape == (500, 6)
    assert np.all((sample.values > 0.0) & (sample.values < 1.0))
    assert sample.meta.horizon == 2.0
    again = sample_conditioned_exact(0.5, times, 2.0, kernel2, RngSpec(seed=11), n_paths=500, cdf_points=513)
    np.testing.assert_array_equal(sample.values, again.values)


def test_exact_sampler_rejects_short_remaining_time(kernel2):
    times = make_time_grid(0.5, 0.1)
    with pytest.raises(SeriesRegimeError):
        sample_conditioned_exact(0.5, times, 0.5005, kernel2, RngSpec(), n_paths=2)
    with pytest.raises(DomainError):
        sample_conditioned_exact(0.5, times, 0.4, kernel2, RngSpec(), n_paths=2)


@pytest.mark.slow
def test_exact_sampler_marginal_matches_limit_density(kernel3):
    times = make_time_grid(0.5, 0.25)
    sample = sample_conditioned_exact(0.5, times, math.inf, kernel3, RngSpec(seed=5), n_paths=20_000)
    grid = np.linspace(0.0, 1.0, 2001)
    cdf = np.cumsum(kernel3.limit_density(0.5, grid, 0.5)) * (grid[1] - grid[0])
    result = stats.kstest(sample.marginal(), lambda v: np.interp(v, grid, cdf / cdf[-1]))
    assert result.pvalue > 0.01


@pytest.mark.slow
def test_rejection_acceptance_rate_tracks_survival(kernel2):
    times = make_time_grid(0.5, 0.25)
    sample = sample_conditioned_rejection(0.5, times, 0.5, kernel2, RngSpec(seed=9), n_paths=5_000)
    rate = sample.meta.acceptance_rate
    survival = float(kernel2.survival(0.5, 0.5))
    stderr = math.sqrt(survival * (1.0 - survival) / sample.meta.attempts)
    assert abs(rate - survival) < 3.0 * stderr
    assert np.all(sample.values <= 1.0)


@pytest.mark.slow
def test_rejection_exhaustion_carries_rate(kernel2):
    times = make_time_grid(1.0, 0.5)
    with pytest.raises(RejectionExhaustedError) as info:
        sample_conditioned_rejection(0.5, times, 3.0, kernel2, RngSpec(), n_paths=1_000, max_attempts=8192)
    assert info.value.context["acceptance_rate"] < 0.01


def test_inverse_cdf_sample_uniform_and_end_points():
    grid = np.linspace(0.0, 1.0, 101)
    u = np.array([0.0, 0.1, 0.5, 0.9, 1.0])
    np.testing.assert_allclose(inverse_cdf_sample(grid, np.ones_like(grid), u), u, atol=1e-12)


def test_inverse_cdf_sample_maps_zero_to_support_start():
    grid = np.linspace(0.0, 2.0, 201)
    density = np.where(grid >= 1.0, 1.0, 0.0)
    density = density / integrate.trapezoid(density, grid)
    assert inverse_cdf_sample(grid, density, 0.0) == pytest.approx(0.99, abs=1e-12)


def test_inverse_cdf_sample_rejects_unnormalized_density():
    grid = np.linspace(0.0, 1.0, 11)
    with pytest.raises(NormalizationError):
        inverse_cdf_sample(grid, 2.0 * np.ones_like(grid), np.array([0.5]))
    with pytest.raises(NormalizationError):
        inverse_cdf_sample(grid, np.where(grid < 0.5, -1.0, 3.0), np.array([0.5]))


def test_stationary_histogram_shape(kernel2):
    samples = stationary_histogram(kernel2, RngSpec(seed=1), n_paths=10, horizon=2.0, burn_in=1.0, spacing=0.5)
    assert samples.shape == (30,)
    assert np.all((samples > 0.0) & (samples < 1.0))


def test_path_sample_validation_and_csv():
    meta = SampleMeta(sampler="limit", d=2.0, seed=1)
    with pytest.raises(ValidationError):
        PathSample(times=np.array([0.0, 1.0]), values=np.array([[0.5, 1.5]]), meta=meta)
    with pytest.raises(ValidationError):
        PathSample(times=np.array([0.1, 1.0]), values=np.array([[0.5, 0.5]]), meta=meta)
    sample = PathSample(times=np.array([0.0, 0.5]), values=np.array([[0.5, 0.25]]), meta=meta)
    assert sample.to_path_csv() == "t,value\n0,0.5\n0.5,0.25\n"
    assert sample.to_marginal_csv() == "sample_index,value\n0,0.25\n# t = 0.5\n"
    with pytest.raises(ValueError):
        sample.values[0, 0] = 0.1


@pytest.mark.parametrize("x0", [1e-6, 1.0 - 1e-6])
def test_limit_sampler_starts_next_to_either_wall(kernel2, x0):
    times = make_time_grid(0.1, 0.05)
    sample = sample_limit_sde(x0, times, kernel2, RngSpec(seed=2), n_paths=200)
    assert np.all((sample.values > 0.0) & (sample.values < 1.0))
    # the singular drift pushes paths away from the wall they start at
    assert abs(np.median(sample.marginal()) - x0) > 0.05


@pytest.mark.parametrize("seed", range(5))
def test_limit_sampler_long_paths_do_not_stall(kernel2, seed):
    sample = sample_limit_sde(0.5, make_time_grid(2.0, 0.5), kernel2, RngSpec(seed=seed), n_paths=10)
    assert np.all((sample.values > 0.0) & (sample.values < 1.0))


@pytest.mark.slow
def test_limit_sampler_many_paths_stay_inside(kernel2):
    sample = sample_limit_sde(0.5, make_time_grid(0.5, 0.25), kernel2, RngSpec(seed=21), n_paths=100_000)
    assert np.all((sample.values > 0.0) & (sample.values < 1.0))
    grid = np.linspace(0.0, 1.0, 4001)
    cdf = integrate.cumulative_trapezoid(kernel2.limit_density(0.5, grid, 0.5), grid, initial=0.0)
    assert stats.kstest(sample.marginal(), lambda v: np.interp(v, grid, cdf / cdf[-1])).pvalue > 0.01


def test_exact_step_inverts_cdf_between_grid_points(kernel3):
    table = samplers._StepCDF(kernel3, 0.5, math.inf, 33)
    u = np.linspace(0.05, 0.95, 19)
    drawn = table.sample(np.full(u.size, 0.5), u)
    grid = np.linspace(0.0, 1.0, 20001)
    cdf = integrate.cumulative_trapezoid(kernel3.limit_density(0.5, grid, 0.5), grid, initial=0.0)
    expected = np.interp(u, cdf / cdf[-1], grid)
    np.testing.assert_allclose(drawn, expected, atol=1e-5)


@pytest.mark.slow
def test_rejection_partial_run_is_flagged(kernel2):
    times = make_time_grid(1.0, 0.5)
    sample = sample_conditioned_rejection(
        0.5, times, 1.5, kernel2, RngSpec(seed=4), n_paths=1_000, max_attempts=8192, allow_partial=True
    )
    assert not sample.meta.accepted
    assert 0 < sample.values.shape[0] < 1_000
    assert sample.meta.attempts == 8192
    assert any("accepted" in warning for warning in sample.meta.warnings)


def test_complete_samples_are_flagged_accepted(kernel2):
    sample = sample_limit_sde(0.5, make_time_grid(0.1, 0.05), kernel2, RngSpec(), n_paths=2)
    assert sample.meta.accepted


def _sine_squared_cdf(y):
    return y - np.sin(2.0 * math.pi * y) / (2.0 * math.pi)


def test_inverse_cdf_sample_recovers_sine_squared_quantiles():
    grid = np.linspace(0.0, 1.0, 2001)
    density = 2.0 * np.sin(math.pi * grid) ** 2
    assert inverse_cdf_sample(grid, density, 0.5) == pytest.approx(0.5, abs=1e-9)
    u = np.linspace(0.01, 0.99, 99)
    np.testing.assert_allclose(_sine_squared_cdf(inverse_cdf_sample(grid, density, u)), u, atol=1e-5)


@pytest.mark.slow
def test_inverse_cdf_sample_pushes_uniforms_forward():
    grid = np.linspace(0.0, 1.0, 2001)
    density = 2.0 * np.sin(math.pi * grid) ** 2
    draws = inverse_cdf_sample(grid, density, np.random.default_rng(17).random(100_000))
    assert stats.kstest(draws, _sine_squared_cdf).pvalue > 0.01


@pytest.mark.slow
def test_free_sampler_ks_shrinks_with_step():
    # at d = 10 the drift is stiff away from the origin, where substeps are not refined
    kernel = load_kernel(10.0)
    x0, t = 1.0, 0.5
    grid = np.linspace(0.0, x0 + 10.0 * math.sqrt(t), 8001)
    cdf = integrate.cumulative_trapezoid(kernel.free_density(x0, grid, t), grid, initial=0.0)
    distances = []
    for step in (0.1, 0.02, 0.004):
        sample = sample_bessel_path(x0, np.array([0.0, t]), kernel, RngSpec(seed=13), n_paths=200_000, step=step)
        distances.append(stats.kstest(sample.marginal(), lambda v: np.interp(v, grid, cdf / cdf[-1])).statistic)
    assert distances[0] > distances[1] > distances[2]
