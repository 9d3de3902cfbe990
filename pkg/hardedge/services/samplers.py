"""Samplers for the free Bessel process, the process conditioned to stay below 1 and the limit diffusion."""

import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from hardedge.config import (
    CHUNK_SIZE,
    COARSE_STEP,
    DEFAULT_CDF_POINTS,
    LIMIT_MAX_STEP,
    MIN_STEP,
)
from hardedge.deps import integrate, interpolate
from hardedge.errors import (
    DomainError,
    NormalizationError,
    RejectionExhaustedError,
    SamplerError,
)
from hardedge.schemas import PathSample, RngSpec, SampleMeta
from hardedge.services.kernels import SpectralKernel
from hardedge.utils.quadrature import gauss_legendre_panels
from hardedge.utils.rng import iter_chunks, run_chunked

logger = logging.getLogger(__name__)

# Euler substeps of the Bessel SDE shrink like kappa * Y^2 near the origin.
BESSEL_STEP_SCALE = 0.05
BESSEL_MIN_SUBSTEP = 1e-8
# Limit SDE taming: the drift may move a path at most this fraction of its distance to the boundary.
LIMIT_TAMING = 0.1
REJECTION_SUBSTEP = 1e-3
CDF_CELL_ORDER = 4
HERMITE_BISECTIONS = 40
NORMALIZATION_TOL = 1e-6


def make_time_grid(t_max: float, step: float) -> np.ndarray:
    """Uniform grid 0, step, ..., t_max; the last step absorbs rounding."""

    if not t_max > 0.0 or not step > 0.0:
        raise DomainError("t_max and step must be positive", t_max=t_max, step=step)
    count = max(1, int(round(t_max / step)))
    if abs(count * step - t_max) > 1e-9 * t_max:
        count = int(math.ceil(t_max / step))
    return np.linspace(0.0, t_max, count + 1)


def _check_grid(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or times[0] != 0.0 or np.any(np.diff(times) <= 0.0):
        raise DomainError("time grid must be 1-D, start at 0 and be strictly increasing")
    return times


def _step_warnings(step: float, limit: float = COARSE_STEP) -> List[str]:
    if step <= limit:
        return []
    message = f"Euler step {step:g} exceeds {limit:g}; marginals carry a visible discretization bias"
    logger.warning(message)
    return [message]


def bessel_euler_step(y: np.ndarray, h: np.ndarray, noise: np.ndarray, d: float) -> np.ndarray:
    """One reflected Euler-Maruyama step of dY = dB + (d - 1)/(2Y) dt."""

    return np.abs(y + 0.5 * (d - 1.0) / y * h + np.sqrt(h) * noise)


def _advance_bessel(
    y: np.ndarray,
    duration: float,
    h_max: float,
    d: float,
    rng: np.random.Generator,
    alive: Optional[np.ndarray] = None,
) -> None:
    """Advance every path in ``y`` by ``duration`` in place.

    When ``alive`` is given, paths that reach 1 (or cross it between substeps,
    judged by the Brownian-bridge maximum law) are marked dead and frozen.
    """

    remaining = np.full(y.size, duration)
    while True:
        active = remaining > 0.0
        if alive is not None:
            active &= alive
        idx = np.flatnonzero(active)
        if idx.size == 0:
            return
        ya = y[idx]
        h = np.minimum(remaining[idx], np.minimum(h_max, np.maximum(BESSEL_MIN_SUBSTEP, BESSEL_STEP_SCALE * ya * ya)))
        proposal = bessel_euler_step(ya, h, rng.standard_normal(idx.size), d)
        if alive is not None:
            crossed = proposal >= 1.0
            with np.errstate(over="ignore"):
                bridge = np.exp(-2.0 * (1.0 - ya) * np.maximum(1.0 - proposal, 0.0) / h)
            crossed |= rng.random(idx.size) < bridge
            alive[idx[crossed]] = False
        y[idx] = proposal
        remaining[idx] -= h


def _bessel_paths(
    x0: float,
    times: np.ndarray,
    h_max: float,
    d: float,
    rng: np.random.Generator,
    size: int,
    horizon: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Simulate ``size`` paths on ``times``; killing at 1 is active up to ``horizon``."""

    stops = list(times[1:])
    if horizon is not None and horizon > 0.0 and horizon not in stops:
        stops.append(horizon)
    stops = sorted(stops)
    values = np.empty((size, times.size))
    values[:, 0] = x0
    y = np.full(size, float(x0))
    alive = np.ones(size, dtype=bool) if horizon is not None else None
    column = {t: i for i, t in enumerate(times)}
    now = 0.0
    for stop in stops:
        killing = alive if horizon is not None and stop <= horizon else None
        _advance_bessel(y, stop - now, h_max, d, rng, killing)
        now = stop
        if stop in column:
            values[:, column[stop]] = y
    if alive is None:
        alive = np.ones(size, dtype=bool)
    return values, alive


def sample_bessel_path(
    x0: float,
    times: np.ndarray,
    kernel: SpectralKernel,
    rng: RngSpec,
    n_paths: int = 1,
    step: Optional[float] = None,
    workers: int = 1,
) -> PathSample:
    """Euler-Maruyama paths of the free Bessel process on ``times``.

    Each step is reflected (|Y|) and substeps shrink like kappa * Y^2 near the
    origin. Steps above COARSE_STEP attach a warning to the sample metadata.

    Args:
        x0: Start point, positive.
        times: Output grid starting at 0.
        kernel: Kernel of the dimension to simulate.
        rng: Seed and stream.
        n_paths: Number of paths.
        step: Largest Euler step (defaults to the largest grid spacing).
        workers: Threads used for chunks.
    """

    if not x0 > 0.0:
        raise DomainError("x0 must be positive", x0=x0)
    times = _check_grid(times)
    h_max = float(step) if step is not None else float(np.max(np.diff(times)))
    warnings = _step_warnings(h_max)
    d = kernel.params.d

    def work(gen: np.random.Generator, size: int) -> np.ndarray:
        return _bessel_paths(x0, times, h_max, d, gen, size)[0]

    values = np.concatenate(run_chunked(work, n_paths, rng, workers))
    meta = SampleMeta(sampler="free", d=d, seed=rng.seed, stream=rng.stream, step=h_max, warnings=warnings)
    return PathSample(times=times, values=values, meta=meta)


def sample_bessel_marginal_exact(
    x0: float,
    t: float,
    count: int,
    kernel: SpectralKernel,
    rng: RngSpec,
    workers: int = 1,
) -> np.ndarray:
    """Exact draws of Y_t from Y_0 = x0 through Y_t^2 = t * chi'^2_d(x0^2 / t)."""

    if not x0 > 0.0 or not t > 0.0:
        raise DomainError("x0 and t must be positive")
    d = kernel.params.d

    def work(gen: np.random.Generator, size: int) -> np.ndarray:
        return np.sqrt(t * gen.noncentral_chisquare(d, x0 * x0 / t, size))

    return np.concatenate(run_chunked(work, count, rng, workers))


def _reflect_limit(start: np.ndarray, proposal: np.ndarray) -> np.ndarray:
    """Reflect a proposal at the wall nearer to its start point.

    Near 0 the limit diffusion is a Bessel-d process and near 1 a Bessel-3
    process in 1 - x, so both walls reflect like the free sampler does at 0.
    """

    return np.where(start < 0.5, np.abs(proposal), 1.0 - np.abs(1.0 - proposal))


def _advance_limit(x: np.ndarray, duration: float, h_max: float, kernel: SpectralKernel, rng: np.random.Generator) -> None:
    """Tamed, reflected Euler-Maruyama for dX = dB + b(X) dt on (0, 1), in place.

    The step satisfies h |b(x)| <= LIMIT_TAMING * min(x, 1 - x) down to a floor
    of BESSEL_MIN_SUBSTEP; each proposal is reflected at the nearer wall.
    Proposals that still leave (0, 1) are retried with half the step.
    """

    remaining = np.full(x.size, duration)
    while True:
        idx = np.flatnonzero(remaining > 0.0)
        if idx.size == 0:
            return
        xa = x[idx]
        drift = np.asarray(kernel.limit_drift(xa))
        dist = np.minimum(xa, 1.0 - xa)
        with np.errstate(divide="ignore"):
            tamed = np.maximum(LIMIT_TAMING * dist / np.abs(drift), BESSEL_MIN_SUBSTEP)
        h = np.minimum(np.minimum(remaining[idx], h_max), tamed)
        new = np.empty_like(xa)
        pending = np.arange(idx.size)
        while pending.size:
            start = xa[pending]
            step = start + drift[pending] * h[pending] + np.sqrt(h[pending]) * rng.standard_normal(pending.size)
            proposal = _reflect_limit(start, step)
            inside = (proposal > 0.0) & (proposal < 1.0)
            new[pending[inside]] = proposal[inside]
            pending = pending[~inside]
            if pending.size:
                h[pending] *= 0.5
                if np.any(h[pending] < MIN_STEP):
                    raise SamplerError(
                        "limit SDE step fell below the minimum step near the boundary",
                        min_step=MIN_STEP,
                        x=float(xa[pending[0]]),
                    )
        x[idx] = new
        remaining[idx] -= h


def sample_limit_sde(
    x0: float,
    times: np.ndarray,
    kernel: SpectralKernel,
    rng: RngSpec,
    n_paths: int = 1,
    step: Optional[float] = None,
    workers: int = 1,
) -> PathSample:
    """Tamed, reflected Euler-Maruyama paths of the limit diffusion with drift limit_drift.

    Raises:
        DomainError: x0 outside (0, 1) or step above LIMIT_MAX_STEP.
        SamplerError: a reflected proposal still left (0, 1) after halving the step below MIN_STEP.
    """

    if not 0.0 < x0 < 1.0:
        raise DomainError("x0 must lie strictly inside (0, 1)", x0=x0)
    times = _check_grid(times)
    h_max = float(step) if step is not None else min(LIMIT_MAX_STEP, float(np.max(np.diff(times))))
    if h_max > LIMIT_MAX_STEP:
        raise DomainError(f"limit SDE step must be at most {LIMIT_MAX_STEP:g}", step=h_max)

    def work(gen: np.random.Generator, size: int) -> np.ndarray:
        values = np.empty((size, times.size))
        x = np.full(size, float(x0))
        values[:, 0] = x
        for i in range(1, times.size):
            _advance_limit(x, times[i] - times[i - 1], h_max, kernel, gen)
            values[:, i] = x
        return values

    values = np.concatenate(run_chunked(work, n_paths, rng, workers))
    meta = SampleMeta(sampler="limit", d=kernel.params.d, seed=rng.seed, stream=rng.stream, step=h_max)
    return PathSample(times=times, values=values, meta=meta)


class _StepCDF:
    """Spectral CDF of one conditioned step, tabulated on a uniform y-grid.

    For a step of length dt with m time left afterwards, the step density from x
    is proportional to sum_i a_i(x) 2 y^(2 alpha + 1) h_i(y) S(y, m) with
    a_i(x) = h_i(x) exp(-(j_i^2 - j_1^2) dt / 2) / J_{alpha+1}(j_i)^2, S the
    reduced survival (the h_1 weight when m = inf). B_i(y) holds the cumulative
    integral of the i-th summand and D_i(y) the summand itself, so each cell is
    inverted on the cubic Hermite interpolant of the CDF with exact end slopes.
    """

    def __init__(self, kernel: SpectralKernel, dt: float, remaining: float, points: int) -> None:
        self.kernel = kernel
        self.count = kernel.series_terms(dt)
        self.grid = np.linspace(0.0, 1.0, points)
        self.decay = np.exp(-(kernel.lam[: self.count] - kernel.lam1) * dt) / kernel.norm_sq[: self.count]
        nodes, weights = gauss_legendre_panels(points - 1, 0.0, 1.0, CDF_CELL_ORDER)
        self.cumulative = np.concatenate(
            (np.zeros((self.count, 1)), np.cumsum(self._modes(nodes, remaining, weights), axis=1)), axis=1
        )
        self.density = self._modes(self.grid, remaining)

    def _modes(self, y: np.ndarray, remaining: float, weights: Optional[np.ndarray] = None) -> np.ndarray:
        kernel = self.kernel
        modes = 2.0 * np.asarray(kernel.eigenfunctions(y, self.count)) * y ** (2.0 * kernel.alpha + 1.0)
        modes = modes * kernel.reduced_survival(y, remaining)
        if weights is None:
            return modes
        return (modes * weights).reshape(self.count, self.grid.size - 1, CDF_CELL_ORDER).sum(axis=2)

    def sample(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        coeffs = self.kernel.eigenfunctions(x, self.count) * self.decay[:, None]
        total = np.einsum("ip,i->p", coeffs, self.cumulative[:, -1])
        if np.any(~(total > 0.0)):
            bad = int(np.flatnonzero(~(total > 0.0))[0])
            raise SamplerError("conditioned step CDF has no positive mass", x=float(x[bad]), total=float(total[bad]))
        target = u * total
        lo = np.zeros(x.size, dtype=int)
        hi = np.full(x.size, self.grid.size - 1)
        while np.any(hi - lo > 1):
            mid = (lo + hi) // 2
            below = np.einsum("ip,ip->p", coeffs, self.cumulative[:, mid]) <= target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        width = self.grid[hi] - self.grid[lo]
        c_lo = np.einsum("ip,ip->p", coeffs, self.cumulative[:, lo])
        c_hi = np.einsum("ip,ip->p", coeffs, self.cumulative[:, hi])
        m_lo = width * np.maximum(np.einsum("ip,ip->p", coeffs, self.density[:, lo]), 0.0)
        m_hi = width * np.maximum(np.einsum("ip,ip->p", coeffs, self.density[:, hi]), 0.0)
        target = np.clip(target, c_lo, c_hi)
        left = np.zeros(x.size)
        right = np.ones(x.size)
        for _ in range(HERMITE_BISECTIONS):
            s = 0.5 * (left + right)
            s2 = s * s
            s3 = s2 * s
            value = (
                (2.0 * s3 - 3.0 * s2 + 1.0) * c_lo
                + (s3 - 2.0 * s2 + s) * m_lo
                + (3.0 * s2 - 2.0 * s3) * c_hi
                + (s3 - s2) * m_hi
            )
            below = value <= target
            left = np.where(below, s, left)
            right = np.where(below, right, s)
        y = self.grid[lo] + 0.5 * (left + right) * width
        return np.clip(y, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def sample_conditioned_exact(
    x0: float,
    times: np.ndarray,
    n: float,
    kernel: SpectralKernel,
    rng: RngSpec,
    n_paths: int = 1,
    cdf_points: int = DEFAULT_CDF_POINTS,
    workers: int = 1,
) -> PathSample:
    """Exact grid samples of the process conditioned to stay below 1 up to n.

    Each step is an inverse-CDF draw from the one-step conditioned kernel
    R_dt(x, y) P^y(tau > n - t - dt) / P^x(tau > n - t). n = inf samples the
    limit diffusion through the h_1-weighted kernel.

    Raises:
        DomainError: x0 outside (0, 1) or n before the last grid time.
        SeriesRegimeError: a grid step (or the time left after the grid) is
            below t_min.
        SamplerError: an inverse-CDF draw failed.
    """

    if not 0.0 < x0 < 1.0:
        raise DomainError("x0 must lie strictly inside (0, 1)", x0=x0)
    times = _check_grid(times)
    if n < times[-1]:
        raise DomainError("the horizon n must not precede the last grid time", n=n, t_max=float(times[-1]))
    steps: Dict[Tuple[float, float], _StepCDF] = {}
    plan = []
    for start, stop in zip(times[:-1], times[1:]):
        dt = float(stop - start)
        remaining = math.inf if math.isinf(n) else max(float(n - stop), 0.0)
        key = (dt, remaining)
        if key not in steps:
            steps[key] = _StepCDF(kernel, dt, remaining, cdf_points)
        plan.append(steps[key])
    logger.debug("Exact sampler built %d step tables for %d steps", len(steps), len(plan))

    def work(gen: np.random.Generator, size: int) -> np.ndarray:
        values = np.empty((size, times.size))
        x = np.full(size, float(x0))
        values[:, 0] = x
        for i, table in enumerate(plan, start=1):
            x = table.sample(x, gen.random(size))
            values[:, i] = x
        return values

    values = np.concatenate(run_chunked(work, n_paths, rng, workers))
    meta = SampleMeta(
        sampler="exact",
        d=kernel.params.d,
        seed=rng.seed,
        stream=rng.stream,
        step=float(np.max(np.diff(times))),
        horizon=n,
    )
    return PathSample(times=times, values=values, meta=meta)


def sample_conditioned_rejection(
    x0: float,
    times: np.ndarray,
    n: float,
    kernel: SpectralKernel,
    rng: RngSpec,
    n_paths: int = 1,
    max_attempts: int = 10**7,
    step: Optional[float] = None,
    workers: int = 1,
    allow_partial: bool = False,
) -> PathSample:
    """Free Bessel paths kept only when they stay below 1 up to time n.

    Paths run on substeps of at most ``step``; a substep from a to b survives
    with the Brownian-bridge probability 1 - exp(-2 (1 - a)(1 - b) / h).
    Attempts are drawn in fixed chunks and the first ``n_paths`` accepted paths
    in chunk order are kept. With ``allow_partial`` an exhausted run returns
    the paths it has, flagged ``meta.accepted = False``.

    Raises:
        RejectionExhaustedError: fewer than ``n_paths`` acceptances within
            ``max_attempts`` (carries the empirical acceptance rate), or no
            acceptance at all when ``allow_partial`` is set.
    """

    if not 0.0 < x0 < 1.0:
        raise DomainError("x0 must lie strictly inside (0, 1)", x0=x0)
    if n < 0.0:
        raise DomainError("the horizon n must be nonnegative", n=n)
    times = _check_grid(times)
    h_max = float(step) if step is not None else min(REJECTION_SUBSTEP, float(np.min(np.diff(times))))
    warnings = _step_warnings(h_max)
    d = kernel.params.d

    def work(gen: np.random.Generator, size: int) -> Tuple[np.ndarray, int]:
        values, alive = _bessel_paths(x0, times, h_max, d, gen, size, horizon=n)
        return values[alive], size

    accepted: List[np.ndarray] = []
    total = 0
    attempts = 0
    for values, size in iter_chunks(work, rng, workers, CHUNK_SIZE):
        accepted.append(values)
        total += values.shape[0]
        attempts += size
        if total >= n_paths or attempts >= max_attempts:
            break
    rate = total / attempts
    complete = total >= n_paths
    if not complete and (not allow_partial or total == 0):
        raise RejectionExhaustedError(
            f"only {total} of {n_paths} paths accepted in {attempts} attempts",
            acceptance_rate=rate,
            attempts=attempts,
            accepted=total,
        )
    if not complete:
        message = f"only {total} of {n_paths} paths accepted in {attempts} attempts"
        logger.warning(message)
        warnings.append(message)
    logger.debug("Rejection sampler accepted %d of %d attempts (rate %.4g)", total, attempts, rate)
    meta = SampleMeta(
        sampler="rejection",
        d=d,
        seed=rng.seed,
        stream=rng.stream,
        step=h_max,
        horizon=n,
        accepted=complete,
        acceptance_rate=rate,
        attempts=attempts,
        warnings=warnings,
    )
    return PathSample(times=times, values=np.concatenate(accepted)[:n_paths], meta=meta)


def inverse_cdf_sample(grid: np.ndarray, density: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Draw from a tabulated density by monotone interpolation of its inverse CDF.

    Args:
        grid: Increasing support points.
        density: Nonnegative density values on ``grid``.
        u: Uniform variates in [0, 1].

    Returns:
        F^(-1)(u); u = 0 and u = 1 map exactly to the ends of the support.

    Raises:
        NormalizationError: the density is negative somewhere or its
            trapezoidal integral differs from 1 by more than 1e-6.
    """

    grid = np.asarray(grid, dtype=float)
    density = np.asarray(density, dtype=float)
    if grid.ndim != 1 or grid.shape != density.shape or grid.size < 2 or np.any(np.diff(grid) <= 0.0):
        raise DomainError("grid must be increasing and match the density")
    if np.any(density < 0.0):
        raise NormalizationError("density has negative values")
    cdf = integrate.cumulative_trapezoid(density, grid, initial=0.0)
    if abs(cdf[-1] - 1.0) > NORMALIZATION_TOL:
        raise NormalizationError(f"density integrates to {cdf[-1]:.10g}, not 1", integral=float(cdf[-1]))
    cdf = cdf / cdf[-1]
    levels, first = np.unique(cdf, return_index=True)
    # the zero level maps to the start of the support, not to the grid start
    first[0] = int(np.flatnonzero(cdf <= levels[0])[-1])
    inverse = interpolate.PchipInterpolator(levels, grid[first])
    u_arr = np.asarray(u, dtype=float)
    x = np.clip(inverse(np.clip(u_arr, 0.0, 1.0)), grid[first[0]], grid[first[-1]])
    x = np.where(u_arr <= 0.0, grid[first[0]], x)
    x = np.where(u_arr >= 1.0, grid[first[-1]], x)
    return x[()] if np.ndim(x) == 0 else x


def stationary_histogram(
    kernel: SpectralKernel,
    rng: RngSpec,
    n_paths: int = 1000,
    horizon: float = 10.0,
    burn_in: float = 1.0,
    spacing: float = 0.5,
    step: float = LIMIT_MAX_STEP,
    workers: int = 1,
) -> np.ndarray:
    """Time-averaged limit-SDE samples taken every ``spacing`` after ``burn_in``."""

    times = make_time_grid(horizon, spacing)
    paths = sample_limit_sde(0.5, times, kernel, rng, n_paths=n_paths, step=step, workers=workers)
    keep = times >= burn_in
    return paths.values[:, keep].ravel()
