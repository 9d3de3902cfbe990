"""Bessel functions of the first kind, their zeros and the eigenfunctions h_i."""

import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from hardedge.config import BESSEL_I_X_MAX, BESSEL_X_MAX, DEFAULT_ZERO_TOL, MAX_ALPHA, SERIES_SWITCH
from hardedge.deps import optimize, special
from hardedge.errors import DomainError, ZeroBracketError, ZeroTableError
from hardedge.schemas import BesselParams, KernelConfig, ZeroTable
from hardedge.utils.quadrature import gauss_legendre_panels

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SCAN_STEP = 0.25
MIN_SPACING = math.pi / 2.0
MAX_SPACING = 2.0 * math.pi
INTEGRABILITY_REFINEMENT = 4
INTEGRABILITY_GROWTH = 0.25


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= MAX_ALPHA:
        raise DomainError(f"Bessel order {alpha} outside the supported range [0, {MAX_ALPHA}]", alpha=alpha)


def _check_argument(x: np.ndarray, limit: float = BESSEL_X_MAX) -> None:
    if np.any(np.isnan(x)) or np.any(x < 0.0):
        raise DomainError("Bessel argument must be nonnegative")
    if np.any(x > limit):
        raise DomainError(f"Bessel argument above the overflow threshold {limit:g}", limit=limit)


def _reduced_series(alpha: float, z: np.ndarray, sign: float = -1.0, terms: Optional[int] = None) -> np.ndarray:
    """Sum of sign^k (z/2)^(2k) / (k! Gamma(k + alpha + 1)).

    With sign=-1 this is J_alpha(z) / (z/2)^alpha; with sign=+1 it is the
    matching quantity for I_alpha.
    """

    z = np.asarray(z, dtype=float)
    if terms is None:
        z_max = float(np.max(z)) if z.size else 0.0
        terms = int(max(20, 2.0 * z_max + 25))
    k = np.arange(terms, dtype=float)
    coeffs = np.exp(-special.gammaln(k + 1.0) - special.gammaln(k + alpha + 1.0))
    coeffs *= sign ** np.arange(terms)
    w = (0.5 * z) ** 2
    total = np.zeros_like(z)
    for c in coeffs[::-1]:
        total = total * w + c
    return total


def bessel_j_series(alpha: float, x: ArrayLike, terms: Optional[int] = None) -> ArrayLike:
    """Evaluate J_alpha(x) directly from its power series.

    Args:
        alpha: Order in [0, MAX_ALPHA].
        x: Nonnegative argument(s).
        terms: Number of series terms (sized from max(x) by default).

    Returns:
        J_alpha(x) with the shape of ``x``.
    """

    _check_alpha(alpha)
    x_arr = np.asarray(x, dtype=float)
    _check_argument(x_arr)
    value = np.power(0.5 * x_arr, alpha) * _reduced_series(alpha, x_arr, terms=terms)
    return value[()] if value.ndim == 0 else value


def bessel_j(alpha: float, x: ArrayLike) -> ArrayLike:
    """Evaluate J_alpha(x).

    Arguments up to SERIES_SWITCH use the power series; larger arguments use
    scipy.special.jv.

    Raises:
        DomainError: Negative argument, argument above BESSEL_X_MAX, or
            unsupported order.
    """

    _check_alpha(alpha)
    x_arr = np.asarray(x, dtype=float)
    _check_argument(x_arr)
    value = special.jv(alpha, x_arr)
    small = x_arr <= SERIES_SWITCH
    if np.any(small):
        value = np.where(small, np.power(0.5 * x_arr, alpha) * _reduced_series(alpha, np.where(small, x_arr, 0.0)), value)
    return value[()] if value.ndim == 0 else value


def bessel_j_derivative(alpha: float, x: ArrayLike) -> ArrayLike:
    """Evaluate J_alpha'(x) = (J_{alpha-1}(x) - J_{alpha+1}(x)) / 2.

    At x = 0 the one-sided limit is returned: 0 for alpha = 0 or alpha > 1,
    1/2 for alpha = 1 and +inf for 0 < alpha < 1.
    """

    _check_alpha(alpha)
    x_arr = np.asarray(x, dtype=float)
    _check_argument(x_arr)
    value = special.jvp(alpha, x_arr, 1)
    at_zero = x_arr == 0.0
    if np.any(at_zero):
        if alpha == 0.0 or alpha > 1.0:
            limit = 0.0
        elif alpha == 1.0:
            limit = 0.5
        else:
            limit = math.inf
        value = np.where(at_zero, limit, value)
    return value[()] if np.ndim(value) == 0 else value


def bessel_log_derivative(alpha: float, z: ArrayLike) -> ArrayLike:
    """Evaluate J_alpha'(z) / J_alpha(z) = alpha / z - J_{alpha+1}(z) / J_alpha(z) for z > 0.

    The ratio J_{alpha+1} / J_alpha is taken from the power series for small z,
    where both functions would underflow at large order.
    """

    _check_alpha(alpha)
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0.0):
        raise DomainError("log-derivative needs a positive argument")
    _check_argument(z_arr)
    small = z_arr <= SERIES_SWITCH
    z_small = np.where(small, z_arr, 1.0)
    ratio_small = 0.5 * z_small * _reduced_series(alpha + 1.0, z_small) / _reduced_series(alpha, z_small)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_large = special.jv(alpha + 1.0, z_arr) / special.jv(alpha, z_arr)
    value = alpha / z_arr - np.where(small, ratio_small, ratio_large)
    return value[()] if value.ndim == 0 else value


def bessel_i(alpha: float, x: ArrayLike) -> ArrayLike:
    """Evaluate the modified Bessel function I_alpha(x).

    Raises:
        DomainError: Argument above BESSEL_I_X_MAX, where I_alpha overflows.
    """

    _check_alpha(alpha)
    x_arr = np.asarray(x, dtype=float)
    _check_argument(x_arr, BESSEL_I_X_MAX)
    value = special.iv(alpha, x_arr)
    return value[()] if np.ndim(value) == 0 else value


def bessel_i_scaled_ratio(alpha: float, x: ArrayLike, y: ArrayLike, t: float) -> ArrayLike:
    """Return x^(-alpha) * I_alpha(xy/t) * exp(-xy/t) without overflow.

    Small arguments go through the power series so that x^(-alpha) never meets
    an underflowed I_alpha.
    """

    x_arr, y_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    z = x_arr * y_arr / t
    small = z <= SERIES_SWITCH
    z_small = np.where(small, z, 0.0)
    series = np.power(0.5 * y_arr / t, alpha) * _reduced_series(alpha, z_small, sign=1.0) * np.exp(-z_small)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        direct = np.power(x_arr, -alpha) * special.ive(alpha, z)
    return np.where(small, series, direct)


def mcmahon_zero(alpha: float, k: ArrayLike) -> ArrayLike:
    """McMahon estimate of the k-th positive zero of J_alpha.

    Accurate for k much larger than alpha; overestimates low zeros of high
    orders, which is the safe direction for sizing scans.
    """

    beta = (np.asarray(k, dtype=float) + 0.5 * alpha - 0.25) * math.pi
    return beta - (4.0 * alpha * alpha - 1.0) / (8.0 * beta)


def _sign(alpha: float, x: float) -> float:
    return math.copysign(1.0, float(special.jv(alpha, x)))


def _bisect_bracket(alpha: float, lo: float, hi: float, width: float) -> tuple:
    f_lo = _sign(alpha, lo)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _sign(alpha, mid) == f_lo:
            lo = mid
        else:
            hi = mid
    return lo, hi


def _scan_brackets(alpha: float, count: int) -> np.ndarray:
    start = max(alpha, 1.0)
    stop = float(mcmahon_zero(alpha, count)) + math.pi
    while True:
        grid = np.arange(start, stop + SCAN_STEP, SCAN_STEP)
        values = special.jv(alpha, grid)
        idx = np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0.0)
        if idx.size >= count:
            idx = idx[:count]
            return np.column_stack((grid[idx], grid[idx + 1]))
        stop += count * math.pi


@lru_cache(maxsize=32)
def compute_zeros(alpha: float, count: int, tol: float = DEFAULT_ZERO_TOL) -> ZeroTable:
    """Compute the first ``count`` positive zeros of J_alpha.

    Zeros are bracketed by a sign-change scan, refined with Brent's method and
    then certified: J_alpha must change sign across [r - tol, r + tol]. When it
    does not, the coarse bracket is bisected down to width 2*tol instead.

    Args:
        alpha: Order in [0, MAX_ALPHA].
        count: Number of zeros, at least 1.
        tol: Absolute accuracy of every zero.

    Returns:
        Immutable certified ZeroTable.

    Raises:
        ZeroBracketError: A zero could not be certified (carries its index).
        ZeroTableError: Successive zeros violate the spacing tripwire.
    """

    _check_alpha(alpha)
    if count < 1 or tol <= 0.0:
        raise DomainError("count must be >= 1 and tol > 0", count=count, tol=tol)
    coarse = _scan_brackets(alpha, count)
    zeros = []
    brackets = []
    for k, (lo, hi) in enumerate(coarse, start=1):
        root = optimize.brentq(lambda z: special.jv(alpha, z), lo, hi, xtol=0.5 * tol)
        a, b = root - tol, root + tol
        if _sign(alpha, a) == _sign(alpha, b):
            a, b = _bisect_bracket(alpha, lo, hi, 2.0 * tol)
            root = 0.5 * (a + b)
            if _sign(alpha, a) == _sign(alpha, b):
                raise ZeroBracketError(f"Could not certify zero {k} of J_{alpha:g}", index=k, alpha=alpha)
        zeros.append(root)
        brackets.append((a, b))

    gaps = np.diff(zeros)
    bad = np.flatnonzero((gaps <= MIN_SPACING) | (gaps >= MAX_SPACING))
    if bad.size:
        k = int(bad[0]) + 1
        raise ZeroTableError(
            f"Zero spacing j_{k + 1} - j_{k} = {gaps[bad[0]]:.6g} outside (pi/2, 2*pi)",
            index=k,
            alpha=alpha,
        )
    logger.debug("Certified %d zeros of J_%g up to %.6g", count, alpha, zeros[-1])
    return ZeroTable(alpha=alpha, zeros=tuple(zeros), brackets=tuple(brackets), tol=tol)


def certify_zero_table(table: ZeroTable) -> ZeroTable:
    """Check that J_alpha changes sign across every stored bracket.

    Raises:
        ZeroBracketError: First bracket without a sign change.
    """

    for k, (lo, hi) in enumerate(table.brackets, start=1):
        if _sign(table.alpha, lo) == _sign(table.alpha, hi):
            raise ZeroBracketError(f"Bracket {k} of J_{table.alpha:g} has no sign change", index=k)
    return table


def load_zero_table(path: Path) -> ZeroTable:
    """Read a zero table CSV written by ZeroTable.to_csv and re-certify it."""

    table = ZeroTable.from_csv(path.read_text(encoding="utf-8"))
    return certify_zero_table(table)


def eigenfunction_values(alpha: float, zeros: np.ndarray, x: ArrayLike) -> np.ndarray:
    """Evaluate h_i(x) = x^(-alpha) J_alpha(j_i x) for every zero at once.

    Args:
        alpha: Order.
        zeros: Zeros j_i, shape (K,).
        x: Points in [0, 1].

    Returns:
        Array of shape (K,) + shape(x). Uses the reduced series where
        j_i x <= SERIES_SWITCH (this covers x = 0) and is exactly 0 at x = 1.
    """

    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0.0) or np.any(x_arr > 1.0):
        raise DomainError("eigenfunctions are defined on [0, 1]")
    j = np.asarray(zeros, dtype=float).reshape((-1,) + (1,) * x_arr.ndim)
    z = j * x_arr
    small = z <= SERIES_SWITCH
    z_small = np.where(small, z, 0.0)
    series = np.power(0.5 * j, alpha) * _reduced_series(alpha, z_small)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.power(np.where(small, 1.0, x_arr), -alpha) * special.jv(alpha, z)
    values = np.where(small, series, direct)
    return np.where(x_arr == 1.0, 0.0, values)


def eigenfunction_h(i: int, x: ArrayLike, params: BesselParams, table: ZeroTable) -> ArrayLike:
    """Return h_i(x) = x^(-alpha) J_alpha(j_i x) on [0, 1].

    At x = 0 this is (j_i / 2)^alpha / Gamma(alpha + 1); at x = 1 it is 0.

    Raises:
        IndexError: i outside 1..len(table).
        DomainError: x outside [0, 1].
    """

    j = table.j(i)
    value = eigenfunction_values(params.alpha, np.array([j]), x)[0]
    return value[()] if np.ndim(value) == 0 else value


def eigenfunction_at_zero(alpha: float, zeros: np.ndarray) -> np.ndarray:
    """Removable-singularity values h_i(0) = (j_i / 2)^alpha / Gamma(alpha + 1)."""

    return np.exp(alpha * np.log(0.5 * np.asarray(zeros, dtype=float)) - special.gammaln(alpha + 1.0))


def eigenfunction_norm_sq(i: int, params: BesselParams, table: ZeroTable) -> float:
    """Return J_{alpha+1}(j_i)^2 / 2, the squared norm of J_alpha(j_i x) under x dx."""

    j = table.j(i)
    return 0.5 * float(special.jv(params.alpha + 1.0, j)) ** 2


def free_generator(
    f: Callable[[np.ndarray], np.ndarray],
    df: Callable[[np.ndarray], np.ndarray],
    d2f: Callable[[np.ndarray], np.ndarray],
    x: ArrayLike,
    params: BesselParams,
) -> np.ndarray:
    """Apply the Bessel generator L0 f = f''/2 + (d - 1)/(2x) f' at x > 0."""

    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0.0):
        raise DomainError("the Bessel generator is evaluated at x > 0")
    return 0.5 * d2f(x_arr) + 0.5 * (params.d - 1.0) / x_arr * df(x_arr)


def _coefficient_panels(table: ZeroTable, count: int, config: KernelConfig) -> int:
    # at most about one radian of the fastest mode per panel
    return max(config.quad_points, int(math.ceil(table.zeros[count - 1] / 2.0)))


def _check_integrable(f: Callable[[np.ndarray], np.ndarray], panels: int) -> np.ndarray:
    """Values of f on the ``panels`` rule after checking that sqrt(x) f(x) is integrable.

    A non-integrable end-point singularity shows up as growth of
    int sqrt(x) |f(x)| dx when the panels are refined fourfold.
    """

    nodes, weights = gauss_legendre_panels(panels)
    fine_nodes, fine_weights = gauss_legendre_panels(INTEGRABILITY_REFINEMENT * panels)
    values = np.asarray(f(nodes), dtype=float)
    fine_values = np.asarray(f(fine_nodes), dtype=float)
    if not np.all(np.isfinite(values)) or not np.all(np.isfinite(fine_values)):
        raise DomainError("f is not finite inside (0, 1)")
    coarse = float(np.dot(weights, np.sqrt(nodes) * np.abs(values)))
    fine = float(np.dot(fine_weights, np.sqrt(fine_nodes) * np.abs(fine_values)))
    if fine > (1.0 + INTEGRABILITY_GROWTH) * coarse:
        raise DomainError(
            "sqrt(x) f(x) is not integrable on (0, 1)",
            integral=coarse,
            refined_integral=fine,
        )
    return values


def fourier_bessel_coefficients(
    f: Callable[[np.ndarray], np.ndarray],
    params: BesselParams,
    table: ZeroTable,
    count: int,
    config: KernelConfig,
) -> np.ndarray:
    """Fourier-Bessel coefficients c_i = 2 int_0^1 f(y) J_alpha(j_i y) y dy / J_{alpha+1}(j_i)^2.

    Args:
        f: Vectorized function on (0, 1).
        params: Process parameters (alpha).
        table: Zero table with at least ``count`` zeros.
        count: Number of coefficients.
        config: Quadrature settings; the panel count grows with j_count.

    Raises:
        DomainError: ``count`` exceeds the table, f is not finite inside
            (0, 1), or sqrt(x) f(x) is not numerically integrable.
    """

    if not 1 <= count <= len(table):
        raise DomainError(f"need 1 <= count <= {len(table)}", count=count)
    panels = _coefficient_panels(table, count, config)
    values = _check_integrable(f, panels)
    nodes, weights = gauss_legendre_panels(panels)
    j = table.array[:count]
    modes = special.jv(params.alpha, j[:, None] * nodes[None, :])
    norms = special.jv(params.alpha + 1.0, j) ** 2
    return 2.0 * (modes * (values * nodes)[None, :]) @ weights / norms


def fourier_bessel_series(coefficients: np.ndarray, x: ArrayLike, params: BesselParams, table: ZeroTable) -> ArrayLike:
    """Evaluate sum_i c_i J_alpha(j_i x)."""

    coefficients = np.asarray(coefficients, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    j = table.array[: coefficients.size].reshape((-1,) + (1,) * x_arr.ndim)
    value = np.tensordot(coefficients, special.jv(params.alpha, j * x_arr), axes=(0, 0))
    return value[()] if np.ndim(value) == 0 else value
