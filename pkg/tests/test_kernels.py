import math

import numpy as np
import pytest

from hardedge.errors import DomainError, SeriesRegimeError, TruncationError
from hardedge.services.kernels import load_kernel
from hardedge.utils.quadrature import gauss_legendre_panels


def test_load_kernel_is_cached(kernel2):
    assert load_kernel(2.0) is kernel2
    assert len(kernel2.table) == kernel2.config.max_terms + 1


def test_truncation_index_grows_as_t_shrinks(kernel2):
    small, large = kernel2.truncation_index(0.001), kernel2.truncation_index(1.0)
    assert small > large >= 1
    assert kernel2.truncation_index(math.inf) == 1


def test_truncation_error_past_max_terms():
    kernel = load_kernel(2.0, 1e-13, 3, 64)
    with pytest.raises(TruncationError):
        kernel.truncation_index(0.001)


def test_series_regime_below_t_min(kernel2):
    with pytest.raises(SeriesRegimeError):
        kernel2.limit_density(0.5, 0.5, 1e-4)


def test_killed_density_matches_sine_closed_form(kernel3, sine_kernel):
    x = np.linspace(0.1, 0.9, 9)[:, None]
    y = np.linspace(0.1, 0.9, 9)[None, :]
    for t in (0.1, 0.5):
        expected = y / x * sine_kernel(x, y, t)
        np.testing.assert_allclose(kernel3.killed_density(x, y, t), expected, rtol=0, atol=1e-10)


def test_killed_density_rejects_boundary(kernel2):
    with pytest.raises(DomainError):
        kernel2.killed_density(0.0, 0.5, 0.5)


def test_limit_density_is_normalized_including_end_points(kernel2):
    nodes, weights = gauss_legendre_panels(kernel2.config.quad_points)
    xs = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    for t in (0.1, 1.0, 5.0):
        mass = kernel2.limit_density_matrix(xs, nodes, t) @ weights
        np.testing.assert_allclose(mass, 1.0, atol=1e-8)


def test_limit_density_tends_to_stationary(kernel2):
    y = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(kernel2.limit_density(0.3, y, 20.0), kernel2.stationary_density(y), atol=1e-12)
    np.testing.assert_allclose(kernel2.limit_density(0.3, y, math.inf), kernel2.stationary_density(y))


def test_limit_density_matrix_agrees_with_pointwise(kernel2):
    xs = np.array([0.0, 0.4, 1.0])
    ys = np.linspace(0.05, 0.95, 7)
    matrix = kernel2.limit_density_matrix(xs, ys, 0.3)
    pointwise = kernel2.limit_density(xs[:, None], ys[None, :], 0.3)
    np.testing.assert_allclose(matrix, pointwise, rtol=1e-12, atol=1e-14)


def test_eigenfunction_ratio_is_continuous_at_end_points(kernel3):
    ratio = kernel3.eigenfunction_ratio(np.array([0.0, 1e-7, 1.0 - 1e-9, 1.0]), 4)
    np.testing.assert_allclose(ratio[:, 0], np.sqrt(np.arange(1, 5)), rtol=1e-12)
    np.testing.assert_allclose(ratio[:, 0], ratio[:, 1], rtol=1e-9)
    np.testing.assert_allclose(ratio[:, 2], ratio[:, 3], rtol=1e-6)


def test_survival_closed_form_and_limits(kernel3):
    x = np.linspace(0.1, 0.9, 9)
    k = np.arange(1, 201, dtype=float)[:, None]
    t = 0.2
    expected = 2.0 / (math.pi * x) * np.sum(
        (-1.0) ** (k + 1) / k * np.sin(k * math.pi * x) * np.exp(-0.5 * (k * math.pi) ** 2 * t), axis=0
    )
    np.testing.assert_allclose(kernel3.survival(x, t), expected, atol=1e-12)
    assert kernel3.survival(0.5, 0.0) == 1.0
    assert kernel3.survival(0.5, 2.0) < kernel3.survival(0.5, 1.0) < 1.0


def test_log_survival_does_not_underflow(kernel2):
    value = kernel2.log_survival(0.5, 1000.0)
    assert math.isfinite(value)
    h1 = kernel2.eigenfunctions(np.array(0.5), 1)[0]
    expected = math.log(kernel2.survival_weight[0] * h1) - kernel2.lam1 * 1000.0
    assert value == pytest.approx(expected, rel=1e-12)
    assert kernel2.survival(0.5, 1000.0) == 0.0


def test_conditioned_density_limits(kernel2):
    y = np.linspace(0.05, 0.95, 19)
    np.testing.assert_allclose(kernel2.conditioned_density(0.5, y, 0.5, math.inf), kernel2.limit_density(0.5, y, 0.5))
    nodes, weights = gauss_legendre_panels(kernel2.config.quad_points)
    mass = np.dot(weights, kernel2.conditioned_density(0.5, nodes, 0.5, 2.0))
    assert mass == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(DomainError):
        kernel2.conditioned_density(0.5, y, 0.5, 0.5)


def test_conditioning_gap_matches_direct_difference(kernel2):
    y = np.linspace(0.05, 0.95, 19)
    direct = np.asarray(kernel2.conditioned_density(0.4, y, 0.5, 1.0)) - np.asarray(kernel2.limit_density(0.4, y, 0.5))
    np.testing.assert_allclose(kernel2.conditioning_gap(0.4, y, 0.5, 1.0), direct, atol=1e-10)


def test_conditioning_gap_decays_at_spectral_gap_rate(kernel3):
    y = np.linspace(0.05, 0.95, 19)
    gaps = [float(np.max(np.abs(kernel3.conditioning_gap(0.5, y, 0.5, n)))) for n in (3.0, 4.0)]
    assert gaps[1] / gaps[0] == pytest.approx(math.exp(-1.5 * math.pi**2), rel=1e-3)


def test_free_density_closed_form_d3(kernel3):
    x, t = 0.4, 0.3
    y = np.linspace(0.0, 3.0, 31)

    def gauss(u):
        return np.exp(-u * u / (2 * t)) / math.sqrt(2 * math.pi * t)

    np.testing.assert_allclose(kernel3.free_density(x, y, t), y / x * (gauss(y - x) - gauss(y + x)), atol=1e-13)


def test_free_density_large_argument_stays_finite(kernel2):
    assert math.isfinite(kernel2.free_density(0.9, 0.9, 1e-4))


def test_stationary_and_drift_closed_forms(kernel3):
    y = np.linspace(0.0, 1.0, 21)
    np.testing.assert_allclose(kernel3.stationary_density(y), 2.0 * np.sin(math.pi * y) ** 2, atol=1e-13)
    x = np.linspace(0.05, 0.95, 19)
    np.testing.assert_allclose(kernel3.limit_drift(x), math.pi / np.tan(math.pi * x), rtol=1e-11, atol=1e-11)
    with pytest.raises(DomainError):
        kernel3.limit_drift(1.0)


def test_generators_agree(kernel2):
    x = np.linspace(0.05, 0.95, 19)

    def f(v):
        return np.cos(math.pi * v)

    def df(v):
        return -math.pi * np.sin(math.pi * v)

    def d2f(v):
        return -(math.pi**2) * np.cos(math.pi * v)

    drift = kernel2.limit_generator(f, df, d2f, x)
    doob = kernel2.doob_generator(f, df, d2f, x)
    np.testing.assert_allclose(drift, doob, rtol=1e-10, atol=1e-10)


def test_semigroup_preserves_constants_and_stationary_mean(kernel2):
    x = np.array([0.0, 0.5, 1.0])
    np.testing.assert_allclose(kernel2.semigroup_apply(np.ones_like, x, 0.7), 1.0, atol=1e-9)
    assert kernel2.semigroup_apply(np.ones_like, 0.5, 0.7) == pytest.approx(1.0, abs=1e-9)


def test_density_table_rows_and_normalization(kernel2):
    rows, normalization = kernel2.density_table("killed", 0.5, 11, 0.5)
    assert len(rows) == 11
    assert all(0.0 < row[1] < 1.0 and row[4] == "killed" for row in rows)
    assert normalization == pytest.approx(kernel2.survival(0.5, 0.5), abs=1e-9)

    rows, normalization = kernel2.density_table("limit", 0.0, 5, 1.0)
    assert [row[1] for row in rows] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert normalization == pytest.approx(1.0, abs=1e-8)

    rows, normalization = kernel2.density_table("free", 0.5, 50, 0.1)
    assert normalization == pytest.approx(1.0, abs=1e-8)


def test_density_dispatch_requires_horizon(kernel2):
    with pytest.raises(DomainError):
        kernel2.density("conditioned", 0.5, 0.5, 0.5)


@pytest.mark.parametrize("d", [2.0, 3.0, 5.0])
def test_killed_density_has_reversible_core(d):
    kernel = load_kernel(d)
    alpha = kernel.alpha
    x = np.linspace(0.05, 0.95, 10)[:, None]
    y = np.linspace(0.05, 0.95, 10)[None, :]
    for t in (0.05, 0.5, 2.0):
        forward = np.asarray(kernel.killed_density(x, y, t)) * x**alpha / y ** (alpha + 1.0)
        backward = np.asarray(kernel.killed_density(y.T, x.T, t)).T * y**alpha / x ** (alpha + 1.0)
        scale = max(1.0, float(np.max(np.abs(forward))))
        np.testing.assert_allclose(forward, backward, rtol=0, atol=1e-10 * scale)
