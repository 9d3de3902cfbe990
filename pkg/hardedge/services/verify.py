"""Named, tolerance-bearing numerical checks producing VerificationReports."""

import logging
import math
import time
from decimal import Decimal, localcontext
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from hardedge.config import (
    DEFAULT_SEED,
    DEFAULT_ZERO_TOL,
    KS_SIGNIFICANCE,
    MIN_STATISTICAL_SAMPLES,
)
from hardedge.deps import integrate, special, stats
from hardedge.errors import DomainError, QuadratureError
from hardedge.schemas import KernelConfig, RngSpec, SamplerName, SuiteName, TestFunction, VerificationReport
from hardedge.services.kernels import SpectralKernel, load_kernel
from hardedge.services.samplers import (
    make_time_grid,
    sample_bessel_path,
    sample_conditioned_exact,
    sample_conditioned_rejection,
    sample_limit_sde,
    stationary_histogram,
)
from hardedge.services.specfun import (
    compute_zeros,
    fourier_bessel_coefficients,
    fourier_bessel_series,
)
from hardedge.utils.quadrature import gauss_legendre_panels

logger = logging.getLogger(__name__)

GENERATOR_TIMES = (0.004, 0.003, 0.002, 0.0015, 0.001)
HALVING_BAND = (2.0 / 1.5, 2.0 * 1.5)
HALVING_FLOOR = 1e-9
CK_PAIRS = ((0.2, 0.3), (0.5, 0.5), (1.0, 2.0))
FOURIER_BESSEL_ORDERS = (10, 25, 50, 100, 200)
FD_STEP = 1e-3
CDF_GRID_POINTS = 4097
JOINT_BINS = 4
JOINT_REPRESENTATIVES = 32
MONOTONE_SLACK = 1e-12
STATIONARY_T = 5.0


# --- helpers -------------------------------------------------------------


def _kernel(d: float, config: Optional[KernelConfig]) -> SpectralKernel:
    config = config or KernelConfig()
    return load_kernel(d, config.tail_tol, config.max_terms, config.quad_points)


def _report(name: str, params: dict, residual: float, tol: float, detail: Optional[str] = None) -> VerificationReport:
    status = "passed" if residual <= tol else "failed"
    return VerificationReport(name=name, params=params, residual=float(residual), tol=float(tol), status=status, detail=detail)


def _combined(name: str, params: dict, parts: Dict[str, Tuple[float, float]], note: str = "") -> VerificationReport:
    """Report several sub-checks as one: residual is the largest error/tol ratio, tol is 1."""

    ratios = {key: (err / tol if tol > 0 else (0.0 if err <= 0 else math.inf)) for key, (err, tol) in parts.items()}
    detail = "; ".join(f"{key}: {err:.3g} (tol {tol:.3g})" for key, (err, tol) in parts.items())
    if note:
        detail = f"{detail}; {note}"
    return _report(name, params, max(ratios.values()), 1.0, detail)


def _five_point_first(func: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    return (-func(x + 2 * h) + 8 * func(x + h) - 8 * func(x - h) + func(x - 2 * h)) / (12 * h)


def _five_point_second(func: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    return (-func(x + 2 * h) + 16 * func(x + h) - 30 * func(x) + 16 * func(x - h) - func(x - 2 * h)) / (12 * h * h)


def default_test_functions() -> List[TestFunction]:
    """Test functions used by the generator checks.

    Each is a smooth function of cos(pi x), hence even about 0 and about 1:
    every odd derivative vanishes at both walls. An odd power of the distance
    to a wall would be mapped by L down to 1/distance, and (Q_t f - f)/t would
    pick up half-integer powers of t that polynomial extrapolation cannot remove.
    """

    pi = math.pi
    return [
        TestFunction(name="one", f=np.ones_like, df=np.zeros_like, d2f=np.zeros_like),
        TestFunction(
            name="cos_pi",
            f=lambda x: np.cos(pi * x),
            df=lambda x: -pi * np.sin(pi * x),
            d2f=lambda x: -pi * pi * np.cos(pi * x),
        ),
        TestFunction(
            name="exp_cos_pi",
            f=lambda x: np.exp(np.cos(pi * x)),
            df=lambda x: -pi * np.sin(pi * x) * np.exp(np.cos(pi * x)),
            d2f=lambda x: pi * pi * (np.sin(pi * x) ** 2 - np.cos(pi * x)) * np.exp(np.cos(pi * x)),
        ),
        TestFunction(
            name="cos_2pi",
            f=lambda x: np.cos(2 * pi * x),
            df=lambda x: -2 * pi * np.sin(2 * pi * x),
            d2f=lambda x: -4 * pi * pi * np.cos(2 * pi * x),
        ),
    ]


def _sine_kernel(x: np.ndarray, y: np.ndarray, t: float, terms: int = 200) -> np.ndarray:
    """Dirichlet heat kernel of Brownian motion on (0, 1)."""

    k = np.arange(1, terms + 1, dtype=float).reshape((-1,) + (1,) * np.ndim(x))
    return 2.0 * np.sum(np.sin(k * math.pi * x) * np.sin(k * math.pi * y) * np.exp(-0.5 * (k * math.pi) ** 2 * t), axis=0)


def taboo_density(x: np.ndarray, y: np.ndarray, t: float, terms: int = 200) -> np.ndarray:
    """Closed-form transition density of Brownian motion tabooed in (0, 1), x in [0, 1].

    Q_t(x, y) = 2 sin(pi y) sum_k (sin(k pi x) / sin(pi x)) sin(k pi y) exp(-(k^2 - 1) pi^2 t / 2),
    with sin(k pi x) / sin(pi x) extended by k at x = 0 and (-1)^(k+1) k at x = 1.
    """

    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    k = np.arange(1, terms + 1, dtype=float).reshape((-1,) + (1,) * x.ndim)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.sin(k * math.pi * x) / np.sin(math.pi * x)
    ratio = np.where(x == 0.0, k, ratio)
    ratio = np.where(x == 1.0, k * (-1.0) ** (k + 1.0), ratio)
    decay = np.exp(-0.5 * (k * k - 1.0) * math.pi**2 * t)
    return 2.0 * np.sin(math.pi * y) * np.sum(ratio * np.sin(k * math.pi * y) * decay, axis=0)


def _series_sign(order: int, z: Decimal) -> int:
    """Sign of J_order(z) from its power series in 60-digit decimal arithmetic."""

    with localcontext() as ctx:
        ctx.prec = 60
        half = z / 2
        term = half**order / math.factorial(order)
        total, last, k = term, None, 0
        w = half * half
        while total != last:
            last = total
            k += 1
            term = -term * w / (k * (k + order))
            total += term
        return (total > 0) - (total < 0)


def series_zero(order: int, lo: float, hi: float, width: float = 1e-13) -> float:
    """Bisect the power series of J_order (integer order) for its zero in [lo, hi]."""

    a, b = Decimal(lo), Decimal(hi)
    sign_a = _series_sign(order, a)
    if sign_a == _series_sign(order, b):
        raise DomainError("series oracle interval has no sign change", lo=lo, hi=hi)
    while b - a > Decimal(width):
        mid = (a + b) / 2
        if _series_sign(order, mid) == sign_a:
            a = mid
        else:
            b = mid
    return float((a + b) / 2)


def _cdf_table(density: Callable[[np.ndarray], np.ndarray], lo: float, hi: float) -> Tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(lo, hi, CDF_GRID_POINTS)
    cdf = integrate.cumulative_trapezoid(np.asarray(density(grid), dtype=float), grid, initial=0.0)
    return grid, cdf / cdf[-1]


def _ks_one_sample(samples: np.ndarray, grid: np.ndarray, cdf: np.ndarray, significance: float = KS_SIGNIFICANCE) -> Tuple[float, float]:
    result = stats.kstest(samples, lambda v: np.interp(v, grid, cdf))
    return float(result.statistic), float(stats.kstwo.ppf(1.0 - significance, samples.size))


def _ks_two_sample(first: np.ndarray, second: np.ndarray) -> Tuple[float, float]:
    result = stats.ks_2samp(first, second)
    n, m = first.size, second.size
    return float(result.statistic), float(stats.kstwobign.ppf(1.0 - KS_SIGNIFICANCE) * math.sqrt((n + m) / (n * m)))


def _statistical(report: VerificationReport, count: int) -> VerificationReport:
    if count >= MIN_STATISTICAL_SAMPLES:
        return report
    logger.warning("%s uses %d samples, below %d; marked underpowered", report.name, count, MIN_STATISTICAL_SAMPLES)
    return report.model_copy(update={"status": "underpowered"})


# --- specfun checks --------------------------------------------------------


def check_zeros(d: float, count: Optional[int] = None) -> VerificationReport:
    """Certified zeros against independent oracles.

    alpha = 1/2 is compared with k pi (k <= 50, tol 1e-12); integer orders with
    a decimal power-series bisection (k <= 10, tol 1e-10); other orders with the
    Newton step |J/J'| at each zero.
    """

    alpha = (d - 2.0) / 2.0
    if alpha == 0.5:
        count = count or 50
        table = compute_zeros(alpha, count, DEFAULT_ZERO_TOL)
        residual = float(np.max(np.abs(table.array - math.pi * np.arange(1, count + 1))))
        return _report("zeros", {"d": d, "count": count, "oracle": "k*pi"}, residual, 1e-12)
    count = count or 10
    table = compute_zeros(alpha, count, DEFAULT_ZERO_TOL)
    if float(alpha).is_integer():
        oracle = [series_zero(int(alpha), z - 0.1, z + 0.1) for z in table.zeros]
        residual = float(np.max(np.abs(table.array - np.array(oracle))))
        return _report("zeros", {"d": d, "count": count, "oracle": "series"}, residual, 1e-10)
    newton = np.abs(special.jv(alpha, table.array) / special.jvp(alpha, table.array, 1))
    return _report("zeros", {"d": d, "count": count, "oracle": "newton"}, float(np.max(newton)), table.tol)


def check_bessel_ode(d: float, count: int = 5, config: Optional[KernelConfig] = None) -> VerificationReport:
    """Bessel ODE residual of J_alpha(z) near each zero scale, and L0 h_i = -(j_i^2/2) h_i."""

    kernel = _kernel(d, config)
    alpha = kernel.alpha
    x = np.linspace(0.1, 0.9, 9)
    ode = 0.0
    eigen = 0.0
    for i in range(count):
        j = float(kernel.zeros[i])
        z = j * np.append(x, 1.0)

        def bessel(v: np.ndarray) -> np.ndarray:
            return special.jv(alpha, v)

        d1 = _five_point_first(bessel, z, FD_STEP)
        d2 = _five_point_second(bessel, z, FD_STEP)
        ode = max(ode, float(np.max(np.abs(d2 + d1 / z + (1.0 - alpha * alpha / (z * z)) * bessel(z)))))

        def h(v: np.ndarray, j: float = j) -> np.ndarray:
            return v ** (-alpha) * special.jv(alpha, j * v)

        lam = 0.5 * j * j
        lhs = 0.5 * _five_point_second(h, x, FD_STEP) + (alpha + 0.5) / x * _five_point_first(h, x, FD_STEP)
        scale = lam * float(np.max(np.abs(h(x))))
        eigen = max(eigen, float(np.max(np.abs(lhs + lam * h(x)))) / scale)
    parts = {"bessel_ode": (ode, 1e-8), "eigenfunction": (eigen, 1e-8)}
    return _combined("bessel_ode", {"d": d, "count": count, "fd_step": FD_STEP}, parts)


def check_fourier_bessel(
    d: float,
    f: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    orders: Sequence[int] = FOURIER_BESSEL_ORDERS,
    sup_tol: float = 1e-2,
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """Fourier-Bessel expansion of ``f`` along ``orders``, plus fixed identities.

    ``f`` (default x^alpha) must have a non-increasing mean-square error along
    ``orders`` and a sup error on [0.25, 0.75] of at most ``sup_tol`` at the
    largest order. The fixed identities are unit vectors for J_alpha(j_i x),
    the closed form for x^alpha (1 - x^2), and the stationary density rebuilt
    from its one-term expansion against the kernel at large t.

    Raises:
        DomainError: sqrt(x) f(x) is not integrable, or an order exceeds the
            zero table.
    """

    kernel = _kernel(d, config)
    config = kernel.config
    alpha, params, table = kernel.alpha, kernel.params, kernel.table
    zeros = kernel.zeros

    def power(y: np.ndarray) -> np.ndarray:
        return y**alpha

    f = f or power
    top = max(orders)
    full = fourier_bessel_coefficients(f, params, table, top, config)

    unit = 0.0
    for i in (1, 2):
        coeffs = fourier_bessel_coefficients(lambda y, i=i: special.jv(alpha, zeros[i - 1] * y), params, table, 5, config)
        target = np.zeros(5)
        target[i - 1] = 1.0
        unit = max(unit, float(np.max(np.abs(coeffs - target))))

    count = 50
    coeffs = fourier_bessel_coefficients(lambda y: y**alpha * (1.0 - y * y), params, table, count, config)
    j = zeros[:count]
    closed = 4.0 * special.jv(alpha + 2.0, j) / (j * j * kernel.norm_sq[:count])
    closed_err = float(np.max(np.abs(coeffs - closed)))

    # pi(y) / (2y) = J_alpha(j_1 y)^2 / J_{alpha+1}(j_1)^2; expand one factor
    ys = np.linspace(0.0, 1.0, 41)
    one_mode = fourier_bessel_coefficients(lambda y: special.jv(alpha, zeros[0] * y) / kernel.norm_sq[0], params, table, 5, config)
    rebuilt = 2.0 * ys * special.jv(alpha, zeros[0] * ys) * fourier_bessel_series(one_mode, ys, params, table)
    late = max(STATIONARY_T, 60.0 / float(zeros[1] ** 2 - zeros[0] ** 2))
    stationary = float(np.max(np.abs(rebuilt - np.asarray(kernel.limit_density(0.5, ys, late)))))

    nodes, weights = gauss_legendre_panels(max(config.quad_points, int(math.ceil(zeros[top - 1] / 2.0))))
    target_nodes = np.asarray(f(nodes), dtype=float)
    errors = []
    for order in sorted(orders):
        partial = fourier_bessel_series(full[:order], nodes, params, table)
        errors.append(float(np.dot(weights, (target_nodes - partial) ** 2 * nodes)))
    increase = max([0.0] + [later - earlier for earlier, later in zip(errors, errors[1:])])
    interior = np.linspace(0.25, 0.75, 101)
    sup = float(np.max(np.abs(np.asarray(f(interior)) - fourier_bessel_series(full, interior, params, table))))
    parts = {
        "unit_vectors": (unit, 1e-10),
        "closed_form": (closed_err, 1e-10),
        "stationary": (stationary, 1e-10),
        "mean_square_monotone": (increase, MONOTONE_SLACK),
        "sup_error": (sup, sup_tol),
    }
    name = "fourier_bessel" if f is power else f"fourier_bessel[{getattr(f, '__name__', 'f')}]"
    return _combined(name, {"d": d, "orders": list(orders), "t_stationary": late}, parts)


# --- kernel checks -----------------------------------------------------------


def check_eigenrelation(
    d: float,
    i_max: int = 5,
    t_list: Sequence[float] = (0.1, 0.5, 1.0, 2.0),
    tol: float = 1e-7,
    oracle: bool = False,
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """int_0^1 h_i(y) R_t(x, y) dy = exp(-j_i^2 t / 2) h_i(x) on a 21-point interior grid.

    With ``oracle`` (d = 3 only) the right side uses the closed form
    h_i(x) = sqrt(2) sin(i pi x) / (pi sqrt(i) x). The integral is evaluated
    with quad_points and with twice as many panels; the finer value is used.

    Raises:
        QuadratureError: the two quadratures differ by more than ``tol``.
    """

    kernel = _kernel(d, config)
    if oracle and d != 3:
        raise DomainError("the trigonometric oracle exists for d = 3 only", d=d)
    x = np.linspace(0.0, 1.0, 23)[1:-1]
    if oracle:
        i = np.arange(1, i_max + 1, dtype=float)[:, None]
        h_x = math.sqrt(2.0) * np.sin(i * math.pi * x) / (math.pi * np.sqrt(i) * x)
        lam = 0.5 * (i[:, 0] * math.pi) ** 2
    else:
        h_x = kernel.eigenfunctions(x, i_max)
        lam = kernel.lam[:i_max]

    def integrals(panels: int) -> np.ndarray:
        nodes, weights = gauss_legendre_panels(panels)
        h_nodes = kernel.eigenfunctions(nodes, i_max)
        return np.array(
            [np.asarray(kernel.killed_density(x[:, None], nodes[None, :], t)) @ (h_nodes * weights).T for t in t_list]
        )

    panels = kernel.config.quad_points
    coarse, fine = integrals(panels), integrals(2 * panels)
    gap = float(np.max(np.abs(fine - coarse)))
    if gap > tol:
        raise QuadratureError(
            f"eigenrelation quadrature did not converge: {panels} and {2 * panels} panels differ by {gap:.3g}",
            panels=panels,
            gap=gap,
        )
    rhs = np.array([(np.exp(-lam * t)[:, None] * h_x).T for t in t_list])
    residual = float(np.max(np.abs(fine - rhs)))
    params = {"d": d, "i_max": i_max, "t": list(t_list), "x_points": x.size, "oracle": oracle, "panels": 2 * panels}
    return _report("eigenrelation", params, residual, tol, f"quadrature gap {gap:.3g}")


def check_normalization(
    d: float,
    x_list: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
    t_list: Sequence[float] = (0.1, 1.0, 5.0),
    tol: float = 1e-8,
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """|int_0^1 Q_t(x, y) dy - 1| including the boundary points x = 0 and x = 1."""

    kernel = _kernel(d, config)
    x = np.asarray(x_list, dtype=float)
    residual = max(
        float(np.max(np.abs(np.asarray(kernel.semigroup_apply(np.ones_like, x, t)) - 1.0))) for t in t_list
    )
    return _report("normalization", {"d": d, "x": list(x_list), "t": list(t_list)}, residual, tol)


def check_chapman_kolmogorov(
    d: float,
    t: float,
    s: float,
    tol: float = 1e-6,
    oracle: bool = False,
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """sup |int Q_t(x, z) Q_s(z, y) dz - Q_{t+s}(x, y)| with x on a grid including 0 and 1.

    With ``oracle`` (d = 3 only) Q_{t+s} comes from the tabooed Brownian motion
    closed form instead of the kernel.
    """

    if min(t, s) < (config or KernelConfig()).t_min:
        raise DomainError("Chapman-Kolmogorov is only checked for t, s >= t_min", t=t, s=s)
    kernel = _kernel(d, config)
    if oracle and d != 3:
        raise DomainError("the trigonometric oracle exists for d = 3 only", d=d)
    xs = np.linspace(0.0, 1.0, 11)
    ys = np.linspace(0.0, 1.0, 11)
    nodes, weights = gauss_legendre_panels(kernel.config.quad_points)
    left = kernel.limit_density_matrix(xs, nodes, t) @ (weights[:, None] * kernel.limit_density_matrix(nodes, ys, s))
    right = taboo_density(xs[:, None], ys[None, :], t + s) if oracle else kernel.limit_density_matrix(xs, ys, t + s)
    residual = float(np.max(np.abs(left - right)))
    return _report("chapman_kolmogorov", {"d": d, "t": t, "s": s, "grid": xs.size, "oracle": oracle}, residual, tol)


def check_closed_forms(tol: float = 1e-10, config: Optional[KernelConfig] = None) -> VerificationReport:
    """Every d = 3 kernel quantity against its trigonometric closed form (t >= 0.1)."""

    kernel = _kernel(3.0, config)
    pi = math.pi
    x = np.linspace(0.1, 0.9, 9)
    y = np.linspace(0.1, 0.9, 9)
    xx, yy = x[:, None], y[None, :]
    errors: Dict[str, float] = {}

    def record(key: str, value: np.ndarray, expected: np.ndarray) -> None:
        errors[key] = max(errors.get(key, 0.0), float(np.max(np.abs(np.asarray(value) - expected))))

    for t in (0.1, 0.5, 1.0):
        dirichlet = _sine_kernel(xx, yy, t)
        record("killed", kernel.killed_density(xx, yy, t), yy / xx * dirichlet)
        record("limit", kernel.limit_density(xx, yy, t), taboo_density(xx, yy, t))
        record("limit_boundary", kernel.limit_density(np.array([[0.0], [1.0]]), yy, t), taboo_density(np.array([[0.0], [1.0]]), yy, t))
        k = np.arange(1, 201, dtype=float)[:, None]
        survival = (2.0 / (pi * x)) * np.sum((-1.0) ** (k + 1) / k * np.sin(k * pi * x) * np.exp(-0.5 * (k * pi) ** 2 * t), axis=0)
        record("survival", kernel.survival(x, t), survival)
        gauss = lambda u: np.exp(-u * u / (2.0 * t)) / math.sqrt(2.0 * pi * t)  # noqa: E731
        record("free", kernel.free_density(xx, yy, t), yy / xx * (gauss(yy - xx) - gauss(yy + xx)))
    record("drift", kernel.limit_drift(x), pi / np.tan(pi * x))
    grid = np.linspace(0.0, 1.0, 21)
    record("stationary", kernel.stationary_density(grid), 2.0 * np.sin(pi * grid) ** 2)
    residual = max(errors.values())
    detail = "; ".join(f"{key}: {value:.3g}" for key, value in errors.items())
    return _report("closed_forms", {"d": 3.0, "t": [0.1, 0.5, 1.0], "grid": x.size}, residual, tol, detail)


def check_stationarity(
    d: float,
    t_list: Sequence[float] = (0.5, 2.0),
    tol: float = 1e-8,
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """|int pi(x) Q_t(x, y) dx - pi(y)| on a 41-point y-grid, plus int pi = 1."""

    kernel = _kernel(d, config)
    nodes, weights = gauss_legendre_panels(kernel.config.quad_points)
    ys = np.linspace(0.0, 1.0, 41)
    pi_nodes = np.asarray(kernel.stationary_density(nodes))
    pi_ys = np.asarray(kernel.stationary_density(ys))
    residual = abs(float(np.dot(weights, pi_nodes)) - 1.0)
    for t in t_list:
        pushed = (weights * pi_nodes) @ kernel.limit_density_matrix(nodes, ys, t)
        residual = max(residual, float(np.max(np.abs(pushed - pi_ys))))
    return _report("stationarity", {"d": d, "t": list(t_list), "y_points": ys.size}, residual, tol)


def check_generator(
    d: float,
    f: TestFunction,
    t_sequence: Sequence[float] = GENERATOR_TIMES,
    tol: float = 1e-4,
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """(Q_t f - f)/t extrapolated to t = 0 matches L f = f''/2 + b f' on [0.05, 0.95].

    The extrapolation is the polynomial through all (t, (Q_t f - f)/t) pairs
    evaluated at 0. The single-t residual must also roughly halve with t on
    each pair (t, t/2) in the sequence, unless both residuals are already at
    round-off level.
    """

    kernel = _kernel(d, config)
    times = np.asarray(t_sequence, dtype=float)
    if np.any(times < kernel.config.t_min) or np.any(times > 0.1):
        raise DomainError("generator times must lie in [t_min, 0.1]", t=list(t_sequence))
    x = np.linspace(0.05, 0.95, 19)
    fx = f.f(x)
    exact = np.asarray(kernel.limit_generator(f.f, f.df, f.d2f, x))
    quotients = np.array([(np.asarray(kernel.semigroup_apply(f.f, x, t)) - fx) / t for t in times])
    residuals = np.max(np.abs(quotients - exact), axis=1)
    lagrange = np.array([np.prod([tj / (tj - tk) for tj in times if tj != tk]) for tk in times])
    extrapolated = lagrange @ quotients
    error = np.abs(extrapolated - exact)
    worst = int(np.argmax(error))

    by_time = dict(zip(times.tolist(), residuals.tolist()))
    band = 0.0
    for t in times:
        half = t / 2.0
        match = [s for s in by_time if math.isclose(s, half, rel_tol=1e-12)]
        if not match:
            continue
        coarse, fine = by_time[float(t)], by_time[match[0]]
        if coarse <= HALVING_FLOOR and fine <= HALVING_FLOOR:
            continue
        ratio = coarse / fine if fine > 0 else math.inf
        band = max(band, HALVING_BAND[0] - ratio, ratio - HALVING_BAND[1])
    parts = {"extrapolated": (float(error[worst]), tol), "halving_ratio": (max(band, 0.0), MONOTONE_SLACK)}
    note = f"worst x = {x[worst]:.3f}; single-t residuals " + ", ".join(f"{r:.3g}" for r in residuals)
    return _combined(f"generator[{f.name}]", {"d": d, "t": times.tolist(), "x_points": x.size}, parts, note)


def check_doob_transform(
    d: float,
    f: TestFunction,
    tol: float = 1e-8,
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """L f through the drift agrees with h_1^(-1) (L0 + j_1^2/2)(h_1 f)."""

    kernel = _kernel(d, config)
    x = np.linspace(0.02, 0.98, 49)
    drift_route = np.asarray(kernel.limit_generator(f.f, f.df, f.d2f, x))
    doob_route = np.asarray(kernel.doob_generator(f.f, f.df, f.d2f, x))
    scale = max(1.0, float(np.max(np.abs(drift_route))))
    residual = float(np.max(np.abs(drift_route - doob_route))) / scale
    return _report(f"doob_transform[{f.name}]", {"d": d, "x_points": x.size}, residual, tol)


def check_feller(
    d: float,
    f: Optional[TestFunction] = None,
    t_list: Sequence[float] = (0.1, 0.03, 0.01, 0.003, 0.001),
    tol: float = 1e-8,
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """Q_t is positive, contractive and conservative, and Q_t f -> f as t decreases."""

    kernel = _kernel(d, config)
    f = f or default_test_functions()[1]
    xs = np.linspace(0.0, 1.0, 21)
    nodes, weights = gauss_legendre_panels(kernel.config.quad_points)
    f_nodes = f.f(nodes)
    sup_f = float(np.max(np.abs(f_nodes)))
    negative = contraction = mass = 0.0
    distances = []
    for t in sorted(t_list, reverse=True):
        q = kernel.limit_density_matrix(xs, nodes, t)
        negative = max(negative, -float(np.min(q)))
        qf = q @ (weights * f_nodes)
        contraction = max(contraction, float(np.max(np.abs(qf))) - sup_f)
        mass = max(mass, float(np.max(np.abs(q @ weights - 1.0))))
        distances.append(float(np.max(np.abs(qf - f.f(xs)))))
    growth = max([0.0] + [later - earlier for earlier, later in zip(distances, distances[1:])])
    parts = {
        "positivity": (max(negative, 0.0), tol),
        "contraction": (max(contraction, 0.0), tol),
        "conservative": (mass, tol),
        "strong_continuity": (growth, MONOTONE_SLACK),
    }
    return _combined(f"feller[{f.name}]", {"d": d, "t": sorted(t_list, reverse=True), "x_points": xs.size}, parts)


def check_convergence_rate(
    d: float,
    x0: float = 0.5,
    t: float = 0.5,
    n_list: Sequence[float] = (1.0, 2.0, 3.0, 4.0, 5.0),
    tol: float = 0.1,
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """sup_y |density of X_t^(n) - Q_t| decays like exp(-(j_2^2 - j_1^2) n / 2).

    The fitted slope of log D(n) against n must match the target within a
    relative ``tol``, and D must decrease along ``n_list``.
    """

    kernel = _kernel(d, config)
    ys = np.linspace(0.0, 1.0, 103)[1:-1]
    gaps = np.array([float(np.max(np.abs(np.asarray(kernel.conditioning_gap(x0, ys, t, n))))) for n in n_list])
    if np.any(gaps <= 0.0):
        raise DomainError("conditioning gap vanished; cannot fit a decay rate", gaps=gaps.tolist())
    slope = float(np.polyfit(np.asarray(n_list, dtype=float), np.log(gaps), 1)[0])
    target = -float(kernel.lam[1] - kernel.lam[0])
    growth = max([0.0] + [float(later / earlier - 1.0) for earlier, later in zip(gaps, gaps[1:])])
    parts = {"slope": (abs(slope / target - 1.0), tol), "decreasing": (max(growth, 0.0), MONOTONE_SLACK)}
    note = f"slope {slope:.6g} vs target {target:.6g}; D(n) = " + ", ".join(f"{g:.3e}" for g in gaps)
    return _combined("convergence_rate", {"d": d, "x0": x0, "t": t, "n": list(n_list)}, parts, note)


def check_markov_factorization(
    d: float,
    x0: float = 0.5,
    t1: float = 0.3,
    t2: float = 0.6,
    n_list: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """Two-time law of X^(n): the Bayes formula equals the product of one-step kernels,
    and the product approaches Q_t1 Q_(t2-t1) as n grows."""

    kernel = _kernel(d, config)
    grid = np.linspace(0.0, 1.0, 13)[1:-1]
    y1, y2 = grid[:, None], grid[None, :]
    dt = t2 - t1
    limit = np.asarray(kernel.limit_density(x0, grid, t1))[:, None] * np.asarray(kernel.limit_density(y1, y2, dt))
    factor_err = 0.0
    gaps = []
    for n in n_list:
        bayes = (
            np.asarray(kernel.killed_density(x0, grid, t1))[:, None]
            * np.asarray(kernel.killed_density(y1, y2, dt))
            * np.exp(np.asarray(kernel.log_survival(y2, n - t2)) - float(kernel.log_survival(x0, n)))
        )
        product = np.asarray(kernel.conditioned_density(x0, grid, t1, n))[:, None] * np.asarray(
            kernel.conditioned_density(y1, y2, dt, n - t1)
        )
        factor_err = max(factor_err, float(np.max(np.abs(bayes - product))) / float(np.max(np.abs(bayes))))
        gaps.append(float(np.max(np.abs(product - limit))))
    growth = max([0.0] + [later - earlier for earlier, later in zip(gaps, gaps[1:])])
    parts = {"factorization": (factor_err, 1e-10), "markov_limit": (growth, MONOTONE_SLACK)}
    note = "sup |joint - Q Q| = " + ", ".join(f"{g:.3e}" for g in gaps)
    return _combined("markov_factorization", {"d": d, "x0": x0, "t1": t1, "t2": t2, "n": list(n_list)}, parts, note)


# --- Monte Carlo checks ----------------------------------------------------------


def _joint_check(
    first: np.ndarray,
    second: np.ndarray,
    transition: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> Tuple[float, float]:
    """Worst KS statistic (and its Bonferroni threshold) of X_t2 given X_t1 within quantile bins."""

    edges = np.quantile(first, np.linspace(0.0, 1.0, JOINT_BINS + 1))
    ys = np.linspace(0.0, 1.0, CDF_GRID_POINTS)
    worst = (0.0, 1.0)
    for b in range(JOINT_BINS):
        upper = first <= edges[b + 1] if b == JOINT_BINS - 1 else first < edges[b + 1]
        inside = (first >= edges[b]) & upper
        members = first[inside]
        reps = np.quantile(members, (np.arange(JOINT_REPRESENTATIVES) + 0.5) / JOINT_REPRESENTATIVES)
        dens = np.asarray(transition(reps, ys))
        cdfs = integrate.cumulative_trapezoid(dens, ys, axis=1, initial=0.0)
        mixture = np.mean(cdfs / cdfs[:, -1:], axis=0)
        stat, threshold = _ks_one_sample(second[inside], ys, mixture, KS_SIGNIFICANCE / JOINT_BINS)
        if stat / threshold > worst[0] / worst[1]:
            worst = (stat, threshold)
    return worst


def check_montecarlo_marginals(
    d: float,
    sampler: SamplerName,
    count: int = 100_000,
    t: float = 1.0,
    n: float = math.inf,
    x0: float = 0.5,
    step: float = 1e-3,
    seed: int = DEFAULT_SEED,
    workers: int = 1,
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """One-sample KS of sampled marginals against the analytic density, at significance 0.01.

    ``free`` compares Euler-Maruyama marginals with free_density; ``limit`` the
    limit SDE with limit_density; ``exact`` the exact conditioned sampler with
    the conditioned density (limit_density for n = inf); ``rejection`` runs a
    two-sample KS against the exact sampler and compares the acceptance rate
    with P^x0(tau > n). Limit and exact runs also test the law of X_t given
    X_(t/2) within quantile bins of X_(t/2).
    """

    kernel = _kernel(d, config)
    spec = RngSpec(seed=seed, stream=0)
    params = {"d": d, "sampler": sampler, "count": count, "t": t, "n": None if math.isinf(n) else n, "x0": x0, "seed": seed}
    times = np.array([0.0, 0.5 * t, t])
    parts: Dict[str, Tuple[float, float]] = {}
    if sampler == "free":
        paths = sample_bessel_path(x0, times, kernel, spec, n_paths=count, step=step, workers=workers)
        hi = x0 + 10.0 * math.sqrt(t)
        grid, cdf = _cdf_table(lambda y: kernel.free_density(x0, y, t), 0.0, hi)
        parts["marginal_ks"] = _ks_one_sample(paths.marginal(t), grid, cdf)
    elif sampler == "limit":
        paths = sample_limit_sde(x0, times, kernel, spec, n_paths=count, step=min(step, 0.005), workers=workers)
        grid, cdf = _cdf_table(lambda y: kernel.limit_density(x0, y, t), 0.0, 1.0)
        parts["marginal_ks"] = _ks_one_sample(paths.marginal(t), grid, cdf)
        parts["joint_ks"] = _joint_check(
            paths.values[:, 1], paths.values[:, 2], lambda xs, ys: kernel.limit_density_matrix(xs, ys, 0.5 * t)
        )
    elif sampler == "exact":
        paths = sample_conditioned_exact(x0, times, n, kernel, spec, n_paths=count, workers=workers)
        grid, cdf = _cdf_table(lambda y: _padded(lambda v: kernel.conditioned_density(x0, v, t, n), y), 0.0, 1.0)
        parts["marginal_ks"] = _ks_one_sample(paths.marginal(t), grid, cdf)
        parts["joint_ks"] = _joint_check(
            paths.values[:, 1],
            paths.values[:, 2],
            lambda xs, ys: _padded(lambda v: kernel.conditioned_density(xs[:, None], v[None, :], 0.5 * t, n - 0.5 * t), ys),
        )
    elif sampler == "rejection":
        if n < t:
            raise DomainError("rejection cross-check needs n >= t", n=n, t=t)
        accepted = sample_conditioned_rejection(x0, times, n, kernel, spec, n_paths=count, step=step, workers=workers)
        exact = sample_conditioned_exact(x0, times, n, kernel, RngSpec(seed=seed, stream=1), n_paths=count, workers=workers)
        parts["two_sample_ks"] = _ks_two_sample(accepted.marginal(t), exact.marginal(t))
        survival = float(kernel.survival(x0, n))
        attempts = accepted.meta.attempts or 0
        rate = accepted.meta.acceptance_rate or 0.0
        parts["acceptance_rate"] = (abs(rate - survival), 3.0 * math.sqrt(survival * (1.0 - survival) / attempts))
    else:
        raise DomainError(f"unknown sampler {sampler!r}")
    return _statistical(_combined(f"montecarlo[{sampler}]", params, parts), count)


def _padded(density: Callable[[np.ndarray], np.ndarray], ys: np.ndarray) -> np.ndarray:
    """Evaluate a density defined on (0, 1) over a grid whose end points carry 0."""

    ys = np.asarray(ys, dtype=float)
    inner = (ys > 0.0) & (ys < 1.0)
    values = np.asarray(density(ys[inner]))
    out = np.zeros(values.shape[:-1] + ys.shape)
    out[..., inner] = values
    return out


def check_ergodic_histogram(
    d: float,
    n_paths: int = 1000,
    horizon: float = 10.0,
    burn_in: float = 1.0,
    spacing: float = 0.5,
    bins: int = 20,
    step: float = 0.002,
    seed: int = DEFAULT_SEED,
    workers: int = 1,
    config: Optional[KernelConfig] = None,
) -> VerificationReport:
    """Chi-squared test of time-averaged limit-SDE samples against the stationary density."""

    kernel = _kernel(d, config)
    samples = stationary_histogram(
        kernel, RngSpec(seed=seed, stream=2), n_paths=n_paths, horizon=horizon, burn_in=burn_in, spacing=spacing, step=step, workers=workers
    )
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(samples, bins=edges)
    probs = np.array(
        [float(np.dot(w, kernel.stationary_density(x))) for x, w in (gauss_legendre_panels(4, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))]
    )
    probs /= probs.sum()
    statistic = float(stats.chisquare(counts, probs * samples.size).statistic)
    tol = float(stats.chi2.ppf(1.0 - KS_SIGNIFICANCE, bins - 1))
    params = {"d": d, "paths": n_paths, "horizon": horizon, "burn_in": burn_in, "spacing": spacing, "bins": bins, "seed": seed}
    return _statistical(_report("ergodic_histogram", params, statistic, tol), int(samples.size))


# --- suites -------------------------------------------------------------------


Check = Tuple[str, Callable[[], VerificationReport]]


def _fast_checks(d: float, config: KernelConfig) -> List[Check]:
    checks: List[Check] = [
        ("zeros", lambda: check_zeros(d)),
        ("bessel_ode", lambda: check_bessel_ode(d, config=config)),
        ("fourier_bessel", lambda: check_fourier_bessel(d, config=config)),
        ("eigenrelation", lambda: check_eigenrelation(d, config=config)),
        ("normalization", lambda: check_normalization(d, config=config)),
    ]
    for t, s in CK_PAIRS:
        checks.append(("chapman_kolmogorov", lambda t=t, s=s: check_chapman_kolmogorov(d, t, s, config=config)))
    for f in default_test_functions():
        checks.append((f"generator[{f.name}]", lambda f=f: check_generator(d, f, config=config)))
        checks.append((f"doob_transform[{f.name}]", lambda f=f: check_doob_transform(d, f, config=config)))
    checks += [
        ("stationarity", lambda: check_stationarity(d, config=config)),
        ("feller", lambda: check_feller(d, config=config)),
        ("convergence_rate", lambda: check_convergence_rate(d, config=config)),
        ("markov_factorization", lambda: check_markov_factorization(d, config=config)),
    ]
    return checks


def _d3_oracle_checks(config: KernelConfig) -> List[Check]:
    return [
        ("zeros", lambda: check_zeros(3.0)),
        ("closed_forms", lambda: check_closed_forms(config=config)),
        ("eigenrelation", lambda: check_eigenrelation(3.0, tol=1e-10, oracle=True, config=config)),
        ("chapman_kolmogorov", lambda: check_chapman_kolmogorov(3.0, 0.5, 0.5, tol=1e-9, oracle=True, config=config)),
    ]


def _montecarlo_checks(d: float, seed: int, workers: int, config: KernelConfig) -> List[Check]:
    # rejection needs a horizon with survival well above 1e-2
    horizon = 0.5 if d >= 3.0 else 1.0
    return [
        ("montecarlo[free]", lambda: check_montecarlo_marginals(d, "free", seed=seed, workers=workers, config=config)),
        ("montecarlo[limit]", lambda: check_montecarlo_marginals(d, "limit", seed=seed, workers=workers, config=config)),
        ("montecarlo[exact]", lambda: check_montecarlo_marginals(d, "exact", n=4.0, seed=seed, workers=workers, config=config)),
        (
            "montecarlo[rejection]",
            lambda: check_montecarlo_marginals(
                d, "rejection", t=horizon, n=horizon, seed=seed, workers=workers, config=config
            ),
        ),
        ("ergodic_histogram", lambda: check_ergodic_histogram(d, seed=seed, workers=workers, config=config)),
    ]


def _run_check(name: str, check: Callable[[], VerificationReport], params: dict, timings: bool) -> VerificationReport:
    logger.info("Running check %s", name)
    started = time.perf_counter()
    try:
        report = check()
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error report
        logger.exception("Check %s raised", name)
        detail = getattr(exc, "detail", None) or f"{type(exc).__name__}: {exc}"
        report = VerificationReport(name=name, params=params, residual=math.nan, tol=math.nan, status="error", detail=detail)
    elapsed = time.perf_counter() - started
    logger.info("%s %s: residual %.3g (tol %.3g)", report.name, report.status, report.residual, report.tol)
    if timings:
        report = report.model_copy(update={"seconds": elapsed})
    return report


def run_suite(
    name: SuiteName,
    d: float = 2.0,
    seed: int = DEFAULT_SEED,
    workers: int = 1,
    timings: bool = False,
    config: Optional[KernelConfig] = None,
) -> List[VerificationReport]:
    """Run a named suite and collect its reports in a fixed order.

    Suites: ``none`` (empty), ``fast`` (deterministic checks at d),
    ``d3-oracle`` (closed-form comparisons at d = 3), ``montecarlo``
    (statistical checks at d) and ``full`` (all three).
    """

    config = config or KernelConfig()
    checks: List[Check] = []
    if name in ("fast", "full"):
        checks += _fast_checks(d, config)
    if name in ("d3-oracle", "full"):
        checks += _d3_oracle_checks(config)
    if name in ("montecarlo", "full"):
        checks += _montecarlo_checks(d, seed, workers, config)
    return [_run_check(check_name, check, {"d": d, "seed": seed}, timings) for check_name, check in checks]
