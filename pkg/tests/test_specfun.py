import math

import numpy as np
import pytest
from scipy import integrate, special

from hardedge.errors import DomainError, ZeroBracketError
from hardedge.schemas import BesselParams, KernelConfig, ZeroTable
from hardedge.services.specfun import (
    bessel_i,
    bessel_i_scaled_ratio,
    bessel_j,
    bessel_j_derivative,
    bessel_j_series,
    bessel_log_derivative,
    certify_zero_table,
    compute_zeros,
    eigenfunction_h,
    eigenfunction_norm_sq,
    fourier_bessel_coefficients,
    fourier_bessel_series,
    free_generator,
    load_zero_table,
    mcmahon_zero,
)
from hardedge.utils.quadrature import gauss_legendre_panels


def test_half_order_matches_sine_closed_form():
    x = np.linspace(0.05, 30.0, 200)
    expected = np.sqrt(2.0 / (math.pi * x)) * np.sin(x)
    np.testing.assert_allclose(bessel_j(0.5, x), expected, rtol=0, atol=1e-13)


def test_series_agrees_with_scipy_below_switch():
    x = np.linspace(0.0, 2.0, 41)
    for alpha in (0.0, 0.5, 3.0, 17.5):
        np.testing.assert_allclose(bessel_j_series(alpha, x), special.jv(alpha, x), rtol=1e-13, atol=1e-300)


def test_bessel_j_rejects_out_of_range_input():
    with pytest.raises(DomainError):
        bessel_j(0.0, -1.0)
    with pytest.raises(DomainError):
        bessel_j(51.0, 1.0)
    with pytest.raises(DomainError):
        bessel_j(0.0, 2e8)


def test_derivative_limits_at_origin():
    assert bessel_j_derivative(0.0, 0.0) == 0.0
    assert bessel_j_derivative(1.0, 0.0) == 0.5
    assert bessel_j_derivative(2.5, 0.0) == 0.0
    assert math.isinf(bessel_j_derivative(0.5, 0.0))


def test_log_derivative_matches_ratio_of_scipy_values():
    z = np.array([0.01, 0.5, 1.9, 2.1, 7.0])
    for alpha in (0.0, 0.5, 4.0):
        expected = special.jvp(alpha, z, 1) / special.jv(alpha, z)
        np.testing.assert_allclose(bessel_log_derivative(alpha, z), expected, rtol=1e-10)


def test_log_derivative_survives_high_order_small_argument():
    value = bessel_log_derivative(50.0, 1e-3)
    # J_50'/J_50 ~ 50/z for tiny z
    assert value == pytest.approx(50.0 / 1e-3, rel=1e-6)


def test_bessel_i_and_scaled_ratio():
    assert bessel_i(0.5, 1.0) == pytest.approx(math.sqrt(2.0 / math.pi) * math.sinh(1.0))
    with pytest.raises(DomainError):
        bessel_i(0.0, 800.0)
    x, y, t = 0.3, 0.4, 0.5
    expected = x**-1.5 * special.iv(1.5, x * y / t) * math.exp(-x * y / t)
    assert bessel_i_scaled_ratio(1.5, x, y, t) == pytest.approx(expected, rel=1e-12)


def test_zeros_of_half_order_are_multiples_of_pi():
    table = compute_zeros(0.5, 50)
    np.testing.assert_allclose(table.array, math.pi * np.arange(1, 51), rtol=0, atol=1e-12)
    for zero, (lo, hi) in zip(table.zeros, table.brackets):
        assert lo <= zero <= hi
        assert special.jv(0.5, lo) * special.jv(0.5, hi) <= 0.0


def test_first_zero_of_order_zero():
    assert compute_zeros(0.0, 1).j(1) == pytest.approx(2.404825557695773, abs=1e-12)


def test_high_order_zeros_are_spaced_and_vanish():
    table = compute_zeros(50.0, 30)
    gaps = np.diff(table.array)
    assert np.all(gaps > math.pi / 2) and np.all(gaps < 2 * math.pi)
    np.testing.assert_allclose(special.jv(50.0, table.array), 0.0, atol=1e-12)


def test_mcmahon_is_accurate_for_large_index():
    table = compute_zeros(1.0, 200)
    assert mcmahon_zero(1.0, 200) == pytest.approx(table.j(200), abs=1e-6)


def test_zero_table_csv_golden_file(tmp_path):
    table = compute_zeros(0.0, 5)
    path = tmp_path / "zeros.csv"
    path.write_text(table.to_csv(), encoding="utf-8")
    text = path.read_text(encoding="utf-8")
    assert text.splitlines()[0] == "k,j_k,bracket_lo,bracket_hi"
    assert text.splitlines()[-2:] == ["# alpha = 0", "# tol = 9.9999999999999998e-13"]
    assert load_zero_table(path) == table


def test_certify_rejects_bracket_without_sign_change():
    table = compute_zeros(0.0, 2)
    shifted = ZeroTable(
        alpha=0.0,
        zeros=(table.zeros[0] + 1e-9, table.zeros[1]),
        brackets=((table.zeros[0] + 0.5e-9, table.zeros[0] + 1.5e-9), table.brackets[1]),
        tol=1e-9,
    )
    with pytest.raises(ZeroBracketError) as info:
        certify_zero_table(shifted)
    assert info.value.context["index"] == 1


def test_zero_table_validation_rejects_wide_brackets():
    with pytest.raises(ValueError):
        ZeroTable(alpha=0.0, zeros=(2.4,), brackets=((2.0, 3.0),), tol=1e-12)


def test_eigenfunction_end_values():
    params = BesselParams(d=4.0)
    table = compute_zeros(params.alpha, 3)
    j2 = table.j(2)
    assert eigenfunction_h(2, 0.0, params, table) == pytest.approx(j2 / 2.0, rel=1e-14)
    assert eigenfunction_h(2, 1.0, params, table) == 0.0
    assert eigenfunction_norm_sq(2, params, table) == pytest.approx(0.5 * special.jv(2.0, j2) ** 2)


def test_free_generator_kills_eigenfunctions():
    params = BesselParams(d=3.0)
    j = math.pi

    def h(x):
        return np.sin(j * x) / x

    def dh(x):
        return j * np.cos(j * x) / x - np.sin(j * x) / x**2

    def d2h(x):
        return -j * j * np.sin(j * x) / x - 2 * j * np.cos(j * x) / x**2 + 2 * np.sin(j * x) / x**3

    x = np.linspace(0.1, 0.9, 9)
    np.testing.assert_allclose(free_generator(h, dh, d2h, x, params), -0.5 * j * j * h(x), atol=1e-10)
    with pytest.raises(DomainError):
        free_generator(h, dh, d2h, 0.0, params)


def test_fourier_bessel_unit_vector_and_reconstruction():
    params = BesselParams(d=2.0)
    table = compute_zeros(0.0, 60)
    config = KernelConfig()
    coeffs = fourier_bessel_coefficients(lambda y: special.jv(0.0, table.j(2) * y), params, table, 4, config)
    np.testing.assert_allclose(coeffs, [0.0, 1.0, 0.0, 0.0], atol=1e-10)

    def bump(y):
        return 1.0 - y * y

    coeffs = fourier_bessel_coefficients(bump, params, table, 60, config)
    x = np.linspace(0.1, 0.9, 9)
    np.testing.assert_allclose(fourier_bessel_series(coeffs, x, params, table), bump(x), atol=2e-3)


def test_fourier_bessel_rejects_bad_input():
    params = BesselParams(d=2.0)
    table = compute_zeros(0.0, 3)
    with pytest.raises(DomainError):
        fourier_bessel_coefficients(np.ones_like, params, table, 4, KernelConfig())
    with pytest.raises(DomainError):
        fourier_bessel_coefficients(lambda y: 1.0 / (y - y), params, table, 2, KernelConfig())


def test_integrability_check_separates_singularities():
    params = BesselParams(d=2.0)
    table = compute_zeros(0.0, 10)
    config = KernelConfig()
    # sqrt(x) / x is integrable; sqrt(x) / x^2 is not
    coeffs = fourier_bessel_coefficients(lambda y: 1.0 / y, params, table, 3, config)
    assert np.all(np.isfinite(coeffs))
    with pytest.raises(DomainError, match="not integrable"):
        fourier_bessel_coefficients(lambda y: y**-2.0, params, table, 3, config)


@pytest.mark.parametrize("d", [2.0, 3.0, 7.0])
def test_bessel_modes_are_orthogonal_under_x_dx(d):
    params = BesselParams(d=d)
    table = compute_zeros(params.alpha, 8)
    nodes, weights = gauss_legendre_panels(64)
    modes = special.jv(params.alpha, table.array[:, None] * nodes[None, :])
    gram = (modes * nodes * weights) @ modes.T
    expected = np.diag([eigenfunction_norm_sq(i, params, table) for i in range(1, 9)])
    np.testing.assert_allclose(gram, expected, rtol=0, atol=1e-8)


def test_norm_of_first_order_zero_mode_by_quadrature():
    params = BesselParams(d=2.0)
    table = compute_zeros(0.0, 1)
    j1 = table.j(1)
    value, _ = integrate.quad(lambda x: special.jv(0.0, j1 * x) ** 2 * x, 0.0, 1.0, epsabs=1e-14)
    assert eigenfunction_norm_sq(1, params, table) == pytest.approx(value, rel=1e-10)
    assert eigenfunction_norm_sq(1, params, table) == pytest.approx(0.5 * 0.5191474972894669**2, rel=1e-12)
