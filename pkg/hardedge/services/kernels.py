"""Spectral transition densities of the Bessel process killed at 1 and of its limit diffusion."""

import logging
import math
from functools import lru_cache
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from hardedge.config import (
    DEFAULT_MAX_TERMS,
    DEFAULT_QUAD_POINTS,
    DEFAULT_TAIL_TOL,
    DEFAULT_ZERO_TOL,
)
from hardedge.deps import special
from hardedge.errors import DomainError, SeriesRegimeError, TruncationError
from hardedge.schemas import BesselParams, DensityKind, KernelConfig, ZeroTable
from hardedge.services.specfun import (
    bessel_i_scaled_ratio,
    bessel_log_derivative,
    compute_zeros,
    eigenfunction_at_zero,
    eigenfunction_values,
    free_generator,
    mcmahon_zero,
)
from hardedge.utils.quadrature import gauss_legendre_panels

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]
Func = Callable[[np.ndarray], np.ndarray]

LOST_DIGITS_WARNING = 8.0
MIN_TAIL_TERMS = 6
FREE_SUPPORT_SIGMAS = 10.0


def _as_result(value: np.ndarray) -> ArrayLike:
    return value[()] if np.ndim(value) == 0 else value


class SpectralKernel:
    """Truncated Fourier-Bessel series for one dimension d.

    The kernel owns a certified zero table with max_terms + 1 entries together
    with the per-mode constants every series needs. Instances are immutable
    and safe to share across threads.

    Attributes:
        params: Process dimension and order.
        table: Certified zeros of J_alpha.
        config: Truncation and quadrature settings.
    """

    def __init__(self, params: BesselParams, table: ZeroTable, config: KernelConfig) -> None:
        if not math.isclose(table.alpha, params.alpha, rel_tol=0.0, abs_tol=1e-15):
            raise DomainError("zero table order does not match the process order", table_alpha=table.alpha)
        if len(table) < 2:
            raise DomainError("the kernel needs at least two zeros")
        self.params = params
        self.table = table
        self.config = config
        self.alpha = params.alpha
        self.zeros = table.array
        self.zeros.flags.writeable = False
        self.j1 = float(self.zeros[0])
        self.lam = 0.5 * self.zeros**2
        self.lam1 = float(self.lam[0])
        self.jp1 = special.jv(self.alpha + 1.0, self.zeros)
        self.norm_sq = self.jp1**2
        self.h0 = eigenfunction_at_zero(self.alpha, self.zeros)
        # continuous extension of h_i / h_1 at the end points
        self.ratio_at_zero = (self.zeros / self.j1) ** self.alpha
        self.ratio_at_one = self.zeros * self.jp1 / (self.j1 * self.jp1[0])
        self.survival_weight = 2.0 / (self.zeros * self.jp1)
        self._log_envelope_base = (
            math.log(2.0)
            + np.log(0.5 * math.pi * self.zeros)
            + self.alpha * np.log(0.5 * self.zeros)
            - special.gammaln(self.alpha + 1.0)
            + (self.alpha + 1.0) * np.log(self.zeros / self.j1)
        )

    def __repr__(self) -> str:
        return f"SpectralKernel(d={self.params.d:g}, terms={len(self.table)}, tail_tol={self.config.tail_tol:g})"

    # --- truncation -------------------------------------------------

    def _check_time(self, t: float) -> None:
        if not t >= self.config.t_min:
            raise SeriesRegimeError(
                f"t = {t:g} is below t_min = {self.config.t_min:g}; spectral series are not evaluated there",
                t=t,
                t_min=self.config.t_min,
            )

    def truncation_index(self, t: float) -> int:
        """Smallest K whose discarded tail bound is at most tail_tol.

        Each term k is bounded by a conservative envelope that decays like
        exp(-(j_k^2 - j_1^2) t / 2). Terms past the zero table are estimated
        with McMahon zeros and closed by a geometric remainder.

        Raises:
            SeriesRegimeError: t below t_min.
            TruncationError: the tail cannot be brought below tail_tol within
                max_terms terms.
        """

        self._check_time(t)
        if math.isinf(t):
            return 1
        log_env = self._log_envelope_base - (self.lam - self.lam1) * t
        # remainder beyond the table from the next two McMahon zeros
        n = len(self.zeros)
        extra = mcmahon_zero(self.alpha, np.array([n + 1.0, n + 2.0]))
        extra_env = (
            math.log(2.0)
            + np.log(0.5 * math.pi * extra)
            + self.alpha * np.log(0.5 * extra)
            - special.gammaln(self.alpha + 1.0)
            + (self.alpha + 1.0) * np.log(extra / self.j1)
            - (0.5 * extra**2 - self.lam1) * t
        )
        log_ratio = extra_env[1] - extra_env[0]
        remainder = extra_env[0] - math.log1p(-math.exp(log_ratio)) if log_ratio < 0.0 else math.inf
        # tail[K - 1] bounds the sum of terms K + 1, K + 2, ...
        suffix = np.logaddexp.accumulate(log_env[::-1])[::-1]
        tail = np.logaddexp(np.append(suffix[1:], -np.inf), remainder)
        log_tol = math.log(self.config.tail_tol)
        ok = np.flatnonzero(tail[: self.config.max_terms] <= log_tol)
        if ok.size == 0:
            raise TruncationError(
                f"series at t = {t:g} needs more than max_terms = {self.config.max_terms} terms",
                t=t,
                max_terms=self.config.max_terms,
            )
        k = int(ok[0]) + 1
        logger.debug("Truncation index K(%g) = %d", t, k)
        return k

    def series_terms(self, t: float, minimum: int = 1) -> int:
        """Number of modes used at time t, at least ``minimum`` and at most the table size."""

        return min(len(self.zeros), max(self.truncation_index(t), minimum))

    # --- building blocks --------------------------------------------

    def eigenfunctions(self, x: np.ndarray, count: int) -> np.ndarray:
        """h_i(x) for i <= count, evaluated once per distinct x."""

        x = np.asarray(x, dtype=float)
        unique, inverse = np.unique(x.ravel(), return_inverse=True)
        values = eigenfunction_values(self.alpha, self.zeros[:count], unique)
        return values[:, inverse].reshape((count,) + x.shape)

    def eigenfunction_ratio(self, x: ArrayLike, count: Optional[int] = None) -> np.ndarray:
        """h_i(x) / h_1(x) for i <= count, continuously extended to x = 0 and x = 1.

        Returns:
            Array of shape (count,) + shape(x).
        """

        count = len(self.zeros) if count is None else count
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr < 0.0) or np.any(x_arr > 1.0):
            raise DomainError("x must lie in [0, 1]")
        h = self.eigenfunctions(x_arr, count)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = h / h[0]
        shape = (count,) + (1,) * x_arr.ndim
        ratio = np.where(x_arr == 0.0, self.ratio_at_zero[:count].reshape(shape), ratio)
        return np.where(x_arr == 1.0, self.ratio_at_one[:count].reshape(shape), ratio)

    def _sum_modes(self, terms: np.ndarray, label: str) -> np.ndarray:
        total = terms.sum(axis=0)
        scale = float(np.max(np.abs(total), initial=0.0))
        magnitude = float(np.max(np.abs(terms).sum(axis=0), initial=0.0))
        worst = math.log10(magnitude / scale) if scale > 0.0 and magnitude > 0.0 else 0.0
        if worst > LOST_DIGITS_WARNING:
            logger.warning("%s: spectral sum lost %.1f digits to cancellation", label, worst)
        return total

    @staticmethod
    def _interior(name: str, values: np.ndarray) -> None:
        if np.any(values <= 0.0) or np.any(values >= 1.0):
            raise DomainError(f"{name} must lie strictly inside (0, 1)")

    @staticmethod
    def _closed(name: str, values: np.ndarray) -> None:
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise DomainError(f"{name} must lie in [0, 1]")

    # --- densities ----------------------------------------------------

    def killed_density(self, x: ArrayLike, y: ArrayLike, t: float) -> ArrayLike:
        """Density of P^x(Y_t in dy, tau > t) for the process killed at 1.

        R_t(x, y) = 2 y^(2 alpha + 1) sum_i h_i(x) h_i(y) exp(-j_i^2 t / 2) / J_{alpha+1}(j_i)^2.

        Raises:
            SeriesRegimeError: t below t_min.
            DomainError: x or y outside (0, 1).
        """

        x_arr, y_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        self._interior("x", x_arr)
        self._interior("y", y_arr)
        k = self.series_terms(t)
        weight = (np.exp(-self.lam[:k] * t) / self.norm_sq[:k]).reshape((k,) + (1,) * x_arr.ndim)
        terms = weight * self.eigenfunctions(x_arr, k) * self.eigenfunctions(y_arr, k)
        value = 2.0 * y_arr ** (2.0 * self.alpha + 1.0) * self._sum_modes(terms, "killed_density")
        return _as_result(value)

    def reduced_survival(self, x: np.ndarray, t: float, first: int = 0) -> np.ndarray:
        """exp(j_1^2 t / 2) * P^x(tau > t) on [0, 1], summed from mode index ``first``.

        t = inf keeps only the first mode; t = 0 returns 1 on [0, 1).
        """

        x = np.asarray(x, dtype=float)
        self._closed("x", x)

        if t == 0.0:
            if first:
                raise DomainError("the survival tail is not defined at t = 0")
            return np.where(x < 1.0, 1.0, 0.0)
        if math.isinf(t):
            if first:
                return np.zeros_like(x)
            return self.survival_weight[0] * self.eigenfunctions(x, 1)[0]
        k = self.series_terms(t, MIN_TAIL_TERMS if first else 1)
        weight = (self.survival_weight[first:k] * np.exp(-(self.lam[first:k] - self.lam1) * t)).reshape(
            (k - first,) + (1,) * x.ndim
        )
        return self._sum_modes(weight * self.eigenfunctions(x, k)[first:], "survival")

    def survival(self, x: ArrayLike, t: float) -> ArrayLike:
        """P^x(tau > t) = 2 sum_k h_k(x) exp(-j_k^2 t / 2) / (j_k J_{alpha+1}(j_k)); 1 at t = 0.

        Raises:
            SeriesRegimeError: 0 < t < t_min.
        """

        x_arr = np.asarray(x, dtype=float)
        self._interior("x", x_arr)
        if t < 0.0:
            raise DomainError("t must be nonnegative")
        if t == 0.0:
            return _as_result(np.ones_like(x_arr))
        return _as_result(self.reduced_survival(x_arr, t) * math.exp(-self.lam1 * t))

    def log_survival(self, x: ArrayLike, t: float) -> ArrayLike:
        """log P^x(tau > t), finite for every t (no underflow at large t)."""

        x_arr = np.asarray(x, dtype=float)
        self._interior("x", x_arr)
        if t == 0.0:
            return _as_result(np.zeros_like(x_arr))
        reduced = self.reduced_survival(x_arr, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = np.where(reduced > 0.0, np.log(np.where(reduced > 0.0, reduced, 1.0)), -np.inf)
        return _as_result(value - self.lam1 * t)

    def limit_density(self, x: ArrayLike, y: ArrayLike, t: float) -> ArrayLike:
        """Transition density Q_t(x, y) of the limit diffusion, x in [0, 1].

        Q_t(x, y) = 2 y J_alpha(j_1 y) sum_i (h_i(x)/h_1(x)) J_alpha(j_i y)
        exp(-(j_i^2 - j_1^2) t / 2) / J_{alpha+1}(j_i)^2, with the continuous
        extension of h_i / h_1 at x = 0 and x = 1.
        """

        x_arr, y_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        self._closed("x", x_arr)
        self._closed("y", y_arr)
        if math.isinf(t):
            return _as_result(self.stationary_density(y_arr) * np.ones_like(x_arr))
        k = self.series_terms(t)
        weight = (np.exp(-(self.lam[:k] - self.lam1) * t) / self.norm_sq[:k]).reshape((k,) + (1,) * x_arr.ndim)
        modes = special.jv(self.alpha, self.zeros[:k].reshape(weight.shape) * y_arr)
        terms = weight * self.eigenfunction_ratio(x_arr, k) * modes
        value = 2.0 * y_arr * modes[0] * self._sum_modes(terms, "limit_density")
        return _as_result(value)

    def limit_density_matrix(self, xs: np.ndarray, ys: np.ndarray, t: float) -> np.ndarray:
        """Q_t on the outer product grid xs x ys, shape (len(xs), len(ys))."""

        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        self._closed("x", xs)
        self._closed("y", ys)
        k = self.series_terms(t)
        weight = np.exp(-(self.lam[:k] - self.lam1) * t) / self.norm_sq[:k]
        ratio = self.eigenfunction_ratio(xs, k)
        modes = special.jv(self.alpha, self.zeros[:k, None] * ys[None, :])
        core = np.einsum("i,ix,iy->xy", weight, ratio, modes)
        return 2.0 * (ys * modes[0])[None, :] * core

    def conditioned_density(self, x: ArrayLike, y: ArrayLike, t: float, n: float) -> ArrayLike:
        """Density of X_t^(n), the process conditioned to survive up to n > t.

        R_t(x, y) P^y(tau > n - t) / P^x(tau > n), with the survival ratio formed
        in log space. n = inf gives limit_density.
        """

        if math.isinf(n):
            return self.limit_density(x, y, t)
        if not n > t:
            raise DomainError("the horizon n must exceed t", t=t, n=n)
        x_arr, y_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        killed = np.asarray(self.killed_density(x_arr, y_arr, t))
        log_ratio = np.asarray(self.log_survival(y_arr, n - t)) - np.asarray(self.log_survival(x_arr, n))
        return _as_result(killed * np.exp(log_ratio))

    def conditioning_gap(self, x: ArrayLike, y: ArrayLike, t: float, n: float) -> ArrayLike:
        """conditioned_density - limit_density, free of cancellation.

        With S(u, s) = c h_1(u) + T(u, s) the reduced survival split into its
        first mode and tail, the gap equals
        R_t e^(j_1^2 t/2) (h_1(x) T(y, n-t) - h_1(y) T(x, n)) / (h_1(x) S(x, n)).
        """

        x_arr, y_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        self._interior("x", x_arr)
        self._interior("y", y_arr)
        if math.isinf(n):
            return _as_result(np.zeros_like(x_arr))
        if not n > t:
            raise DomainError("the horizon n must exceed t", t=t, n=n)
        killed = np.asarray(self.killed_density(x_arr, y_arr, t)) * math.exp(self.lam1 * t)
        h1x = self.eigenfunctions(x_arr, 1)[0]
        h1y = self.eigenfunctions(y_arr, 1)[0]
        tail_y = self.reduced_survival(y_arr, n - t, first=1)
        tail_x = self.reduced_survival(x_arr, n, first=1)
        full_x = self.reduced_survival(x_arr, n)
        return _as_result(killed * (h1x * tail_y - h1y * tail_x) / (h1x * full_x))

    def free_density(self, x: ArrayLike, y: ArrayLike, t: float) -> ArrayLike:
        """Transition density of the unconstrained Bessel process.

        (y^(alpha+1) / (t x^alpha)) exp(-(x^2 + y^2) / (2t)) I_alpha(xy/t), computed
        with the exponentially scaled I_alpha.
        """

        x_arr, y_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if np.any(x_arr <= 0.0) or np.any(y_arr < 0.0) or not t > 0.0:
            raise DomainError("free_density needs x > 0, y >= 0 and t > 0")
        scaled = bessel_i_scaled_ratio(self.alpha, x_arr, y_arr, t)
        value = y_arr ** (self.alpha + 1.0) / t * np.exp(-((x_arr - y_arr) ** 2) / (2.0 * t)) * scaled
        return _as_result(value)

    def stationary_density(self, y: ArrayLike) -> ArrayLike:
        """pi(y) = 2 y J_alpha(j_1 y)^2 / J_{alpha+1}(j_1)^2 on [0, 1]."""

        y_arr = np.asarray(y, dtype=float)
        self._closed("y", y_arr)
        value = 2.0 * y_arr * special.jv(self.alpha, self.j1 * y_arr) ** 2 / self.norm_sq[0]
        return _as_result(value)

    # --- generator ----------------------------------------------------

    def limit_drift(self, x: ArrayLike) -> ArrayLike:
        """Drift b(x) = 1/(2x) + j_1 J_alpha'(j_1 x) / J_alpha(j_1 x) of the limit diffusion.

        Raises:
            DomainError: x outside (0, 1); the drift diverges at both ends.
        """

        x_arr = np.asarray(x, dtype=float)
        self._interior("x", x_arr)
        return _as_result(0.5 / x_arr + self.j1 * bessel_log_derivative(self.alpha, self.j1 * x_arr))

    def limit_generator(self, f: Func, df: Func, d2f: Func, x: ArrayLike) -> ArrayLike:
        """L f = f''/2 + b f' on (0, 1)."""

        x_arr = np.asarray(x, dtype=float)
        return _as_result(0.5 * d2f(x_arr) + self.limit_drift(x_arr) * df(x_arr))

    def doob_generator(self, f: Func, df: Func, d2f: Func, x: ArrayLike) -> ArrayLike:
        """h_1^(-1) (L0 + j_1^2/2)(h_1 f), expanded as L0 f + (h_1'/h_1) f'.

        Uses the product rule L0(h_1 f) = f L0 h_1 + h_1 L0 f + h_1' f' together
        with L0 h_1 = -(j_1^2/2) h_1; h_1' comes from J_alpha' directly.
        """

        x_arr = np.asarray(x, dtype=float)
        self._interior("x", x_arr)
        z = self.j1 * x_arr
        j_val = special.jv(self.alpha, z)
        h1 = x_arr ** (-self.alpha) * j_val
        dh1 = x_arr ** (-self.alpha) * (self.j1 * special.jvp(self.alpha, z, 1) - self.alpha / x_arr * j_val)
        return _as_result(free_generator(f, df, d2f, x_arr, self.params) + dh1 / h1 * df(x_arr))

    def semigroup_apply(self, f: Func, x: ArrayLike, t: float) -> ArrayLike:
        """(Q_t f)(x) = int_0^1 Q_t(x, y) f(y) dy by composite Gauss-Legendre quadrature."""

        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        nodes, weights = gauss_legendre_panels(self.config.quad_points)
        value = self.limit_density_matrix(x_arr, nodes, t) @ (weights * f(nodes))
        return _as_result(value.reshape(np.shape(x)))

    # --- tables ---------------------------------------------------------

    def density(self, kind: DensityKind, x: float, y: ArrayLike, t: float, n: Optional[float] = None) -> ArrayLike:
        """Dispatch to the density named by ``kind``."""

        if kind == "killed":
            return self.killed_density(x, y, t)
        if kind == "limit":
            return self.limit_density(x, y, t)
        if kind == "free":
            return self.free_density(x, y, t)
        if kind == "conditioned":
            if n is None:
                raise DomainError("the conditioned density needs a horizon n")
            return self.conditioned_density(x, y, t, n)
        if kind == "stationary":
            return self.stationary_density(y)
        raise DomainError(f"unknown density kind {kind!r}")

    def support(self, kind: DensityKind, x: float, t: float) -> Tuple[float, float]:
        """Interval on which ``kind`` is tabulated and normalized."""

        if kind == "free":
            return 0.0, x + FREE_SUPPORT_SIGMAS * math.sqrt(t)
        return 0.0, 1.0

    def density_table(
        self,
        kind: DensityKind,
        x: float,
        points: int,
        t: float,
        n: Optional[float] = None,
    ) -> Tuple[List[tuple], float]:
        """Tabulate ``kind`` on a uniform y-grid.

        Killed and conditioned densities are tabulated on the open interval
        (end points excluded); the others include both end points.

        Returns:
            (rows of (x, y, t, value, kind), integral of the density over its support)
        """

        lo, hi = self.support(kind, x, t)
        if kind in ("killed", "conditioned"):
            ys = np.linspace(lo, hi, points + 2)[1:-1]
        else:
            ys = np.linspace(lo, hi, points)
        values = np.asarray(self.density(kind, x, ys, t, n), dtype=float)
        nodes, weights = gauss_legendre_panels(self.config.quad_points, lo, hi)
        normalization = float(np.dot(weights, np.asarray(self.density(kind, x, nodes, t, n), dtype=float)))
        rows = [(float(x), float(y), float(t), float(v), kind) for y, v in zip(ys, values)]
        return rows, normalization


@lru_cache(maxsize=16)
def load_kernel(
    d: float,
    tail_tol: float = DEFAULT_TAIL_TOL,
    max_terms: int = DEFAULT_MAX_TERMS,
    quad_points: int = DEFAULT_QUAD_POINTS,
) -> SpectralKernel:
    """Build and cache a SpectralKernel for dimension d.

    Args:
        d: Process dimension (d >= 2).
        tail_tol: Series tail tolerance.
        max_terms: Series term cap; the zero table holds max_terms + 1 zeros.
        quad_points: Gauss-Legendre panels on [0, 1].

    Returns:
        Shared, immutable kernel.
    """

    params = BesselParams(d=d)
    config = KernelConfig(tail_tol=tail_tol, max_terms=max_terms, quad_points=quad_points)
    table = compute_zeros(params.alpha, max_terms + 1, DEFAULT_ZERO_TOL)
    logger.info("Loaded spectral kernel for d=%g with %d zeros", d, len(table))
    return SpectralKernel(params, table, config)
