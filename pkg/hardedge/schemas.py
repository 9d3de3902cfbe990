"""Pydantic schemas for parameters, tables, samples, reports and CLI runs."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from hardedge.config import (
    DEFAULT_MAX_TERMS,
    DEFAULT_QUAD_POINTS,
    DEFAULT_SEED,
    DEFAULT_T_MIN,
    DEFAULT_TAIL_TOL,
    DEFAULT_WORKERS,
    MAX_ALPHA,
)
from hardedge.utils.text import format_float, parse_csv, render_csv

DensityKind = Literal["killed", "limit", "free", "conditioned", "stationary"]
SamplerName = Literal["free", "exact", "rejection", "limit"]
SuiteName = Literal["none", "fast", "d3-oracle", "montecarlo", "full"]
ReportStatus = Literal["passed", "failed", "underpowered", "error"]


class BesselParams(BaseModel):
    """Dimension of the Bessel process; the order is always derived from it.

    Attributes:
        d: Dimension, at least 2 and at most 2 + 2 * MAX_ALPHA.
    """

    model_config = ConfigDict(frozen=True)

    d: float = Field(..., ge=2.0, le=2.0 + 2.0 * MAX_ALPHA, description="Process dimension")

    @computed_field  # type: ignore[prop-decorator]
    @property
    def alpha(self) -> float:
        return (self.d - 2.0) / 2.0


class KernelConfig(BaseModel):
    """Truncation and quadrature settings shared by every spectral kernel.

    Attributes:
        tail_tol: Absolute bound on the discarded tail of each spectral series.
        max_terms: Hard cap on the number of series terms.
        quad_points: Number of Gauss-Legendre panels on [0, 1].
        t_min: Smallest time at which series are evaluated.
    """

    model_config = ConfigDict(frozen=True)

    tail_tol: float = Field(default=DEFAULT_TAIL_TOL, gt=0.0)
    max_terms: int = Field(default=DEFAULT_MAX_TERMS, ge=1)
    quad_points: int = Field(default=DEFAULT_QUAD_POINTS, ge=16)
    t_min: float = Field(default=DEFAULT_T_MIN, gt=0.0)


class ZeroTable(BaseModel):
    """Certified positive zeros of J_alpha with their sign-change brackets.

    Attributes:
        alpha: Bessel order.
        zeros: Increasing positive zeros j_1 < j_2 < ...
        brackets: Per-zero interval (lo, hi) across which J_alpha changes sign.
        tol: Guaranteed absolute accuracy of every zero.
    """

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., ge=0.0, le=MAX_ALPHA)
    zeros: Tuple[float, ...] = Field(..., min_length=1)
    brackets: Tuple[Tuple[float, float], ...]
    tol: float = Field(..., gt=0.0)

    @model_validator(mode="after")
    def _check_brackets(self) -> "ZeroTable":
        if len(self.brackets) != len(self.zeros):
            raise ValueError("brackets and zeros must have the same length")
        zeros = np.asarray(self.zeros)
        if zeros[0] <= 0.0 or np.any(np.diff(zeros) <= 0.0):
            raise ValueError("zeros must be positive and strictly increasing")
        slack = 4.0 * np.finfo(float).eps * float(zeros[-1])
        for k, (zero, (lo, hi)) in enumerate(zip(self.zeros, self.brackets), start=1):
            if not lo <= zero <= hi:
                raise ValueError(f"zero {k} lies outside its bracket")
            if hi - lo > 2.0 * self.tol + slack:
                raise ValueError(f"bracket {k} is wider than 2*tol")
        return self

    def __len__(self) -> int:
        return len(self.zeros)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.zeros, dtype=float)

    def j(self, i: int) -> float:
        """Return the i-th zero (1-based)."""

        if not 1 <= i <= len(self.zeros):
            raise IndexError(f"zero index {i} outside 1..{len(self.zeros)}")
        return self.zeros[i - 1]

    def to_csv(self) -> str:
        """Serialize as `k,j_k,bracket_lo,bracket_hi` rows with alpha and tol in the footer."""

        rows = [(k, zero, lo, hi) for k, (zero, (lo, hi)) in enumerate(zip(self.zeros, self.brackets), start=1)]
        footer = (f"alpha = {format_float(self.alpha)}", f"tol = {format_float(self.tol)}")
        return render_csv(("k", "j_k", "bracket_lo", "bracket_hi"), rows, footer)

    @classmethod
    def from_csv(cls, text: str) -> "ZeroTable":
        """Parse the output of to_csv. Sign certification is left to the caller."""

        meta = {}
        for line in text.splitlines():
            if line.startswith("#") and "=" in line:
                key, value = line.lstrip("# ").split("=", 1)
                meta[key.strip()] = float(value)
        if "alpha" not in meta or "tol" not in meta:
            raise ValueError("zero table CSV is missing the alpha/tol footer")
        rows = parse_csv(text)
        if [int(row["k"]) for row in rows] != list(range(1, len(rows) + 1)):
            raise ValueError("zero table rows must be numbered 1..K")
        return cls(
            alpha=meta["alpha"],
            zeros=tuple(float(row["j_k"]) for row in rows),
            brackets=tuple((float(row["bracket_lo"]), float(row["bracket_hi"])) for row in rows),
            tol=meta["tol"],
        )


class RngSpec(BaseModel):
    """Seed and stream identifying one reproducible random stream."""

    model_config = ConfigDict(frozen=True)

    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    stream: int = Field(default=0, ge=0)


class SampleMeta(BaseModel):
    """Provenance attached to every PathSample.

    Attributes:
        sampler: Sampler that produced the values.
        d: Process dimension.
        seed: RNG seed.
        stream: RNG stream (worker index).
        step: Largest internal Euler step, or the grid step for exact samplers.
        horizon: Conditioning horizon n (None for unconditioned, inf for the limit law).
        accepted: False when a rejection run was allowed to stop short of the requested count.
        acceptance_rate: Empirical acceptance rate of rejection sampling.
        attempts: Number of proposed paths for rejection sampling.
        warnings: Non-fatal diagnostics (for example coarse grids).
    """

    sampler: SamplerName
    d: float
    seed: int
    stream: int = 0
    step: Optional[float] = None
    horizon: Optional[float] = None
    accepted: bool = True
    acceptance_rate: Optional[float] = None
    attempts: Optional[int] = None
    warnings: List[str] = Field(default_factory=list)


class PathSample(BaseModel):
    """Time grid plus sampled values, one row per path.

    Attributes:
        times: Strictly increasing grid starting at 0.
        values: Array of shape (n_paths, len(times)); column 0 is the start point.
        meta: Provenance of the sample.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: np.ndarray
    values: np.ndarray
    meta: SampleMeta

    @model_validator(mode="after")
    def _check_shapes(self) -> "PathSample":
        times = np.asarray(self.times, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
            raise ValueError("times must be a 1-D grid starting at 0")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if values.shape[1] != times.size:
            raise ValueError("values must have one column per time")
        if np.any(values < 0.0):
            raise ValueError("process values must be nonnegative")
        bounded = np.ones(times.size, dtype=bool)
        if self.meta.sampler == "free":
            bounded[:] = False
        elif self.meta.sampler == "rejection" and self.meta.horizon is not None:
            bounded = times <= self.meta.horizon
        if np.any(values[:, bounded] > 1.0):
            raise ValueError("conditioned and limit samples must lie in [0, 1]")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        return self

    @property
    def n_paths(self) -> int:
        return int(self.values.shape[0])

    def marginal(self, t: Optional[float] = None) -> np.ndarray:
        """Return the values at time t (default: the last grid time)."""

        if t is None:
            return self.values[:, -1]
        idx = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[idx], t, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"time {t} is not on the sample grid")
        return self.values[:, idx]

    def to_path_csv(self) -> str:
        """Serialize as `t,value` rows; a leading `path` column is added for several paths."""

        if self.n_paths == 1:
            rows = [(float(t), float(v)) for t, v in zip(self.times, self.values[0])]
            return render_csv(("t", "value"), rows)
        rows = [
            (p, float(t), float(v))
            for p, path in enumerate(self.values)
            for t, v in zip(self.times, path)
        ]
        return render_csv(("path", "t", "value"), rows)

    def to_marginal_csv(self) -> str:
        """Serialize the values at the last grid time as `sample_index,value` rows."""

        footer = (f"t = {format_float(float(self.times[-1]))}",)
        rows = [(i, float(v)) for i, v in enumerate(self.marginal())]
        return render_csv(("sample_index", "value"), rows, footer)

    def sidecar(self, config: Dict[str, Any]) -> str:
        """JSON metadata: sampler provenance plus the effective run configuration."""

        payload = {"meta": json.loads(self.meta.model_dump_json()), "n_paths": self.n_paths, "config": config}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


class TestFunction(BaseModel):
    """Test function from the class {f in C^2[0,1] : f'(0) = f'(1) = 0}.

    Attributes:
        name: Label used in reports.
        f: Vectorized evaluator on [0, 1].
        df: First derivative.
        d2f: Second derivative.
    """

    __test__ = False  # keep pytest from collecting this class

    model_config = ConfigDict(frozen=True)

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]

    @model_validator(mode="after")
    def _check_class(self) -> "TestFunction":
        ends = np.asarray(self.df(np.array([0.0, 1.0])), dtype=float)
        if np.any(np.abs(ends) > 1e-12):
            raise ValueError(f"{self.name}: f'(0) and f'(1) must vanish")
        h = 1e-4
        x = np.linspace(0.05, 0.95, 19)

        def stencil(g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
            return (-g(x + 2 * h) + 8 * g(x + h) - 8 * g(x - h) + g(x - 2 * h)) / (12 * h)

        if np.max(np.abs(stencil(self.f) - self.df(x))) > 1e-6:
            raise ValueError(f"{self.name}: first derivative disagrees with finite differences")
        if np.max(np.abs(stencil(self.df) - self.d2f(x))) > 1e-6:
            raise ValueError(f"{self.name}: second derivative disagrees with finite differences")
        return self


class VerificationReport(BaseModel):
    """Outcome of one named verification check.

    Attributes:
        name: Check name.
        params: Parameter set (d, t, grid sizes, seeds).
        residual: Measured error (nan when the check errored).
        tol: Bound the residual is compared against.
        status: passed, failed, underpowered or error.
        seconds: Runtime, kept only when timings are requested.
        detail: Free-form diagnostics.
    """

    name: str
    params: Dict[str, Any] = Field(default_factory=dict)
    residual: float
    tol: float
    status: ReportStatus
    seconds: Optional[float] = None
    detail: Optional[str] = None

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tol)

    @model_validator(mode="after")
    def _check_status(self) -> "VerificationReport":
        if self.status == "passed" and not self.passed:
            raise ValueError("status 'passed' requires residual <= tol")
        if self.status == "failed" and self.passed:
            raise ValueError("status 'failed' requires residual > tol")
        return self

    @property
    def is_failure(self) -> bool:
        return self.status in ("failed", "error")


class RunConfig(BaseModel):
    """Effective configuration of one CLI command after merging all sources.

    Attributes:
        command: Subcommand being run.
        d: Process dimension.
        seed: RNG seed.
        out: Output path (stdout when omitted).
        tol: Series tail tolerance.
        max_terms: Series term cap.
        quad_points: Gauss-Legendre panels.
        workers: Worker threads for batch work.
        count: Number of zeros (zeros).
        kind: Density kind (density).
        x: Start point for densities.
        t: Time.
        n: Conditioning horizon.
        points: Grid points.
        sampler: Sampler id (sample).
        mode: Path or marginal output (sample).
        x0: Start point for samplers.
        t_max: Last grid time (sample).
        step: Grid step (sample).
        paths: Number of paths (sample).
        suite: Verification suite (verify).
        timings: Keep runtimes in reports.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Literal["zeros", "density", "sample", "verify"]
    d: float = Field(default=2.0, ge=2.0, le=2.0 + 2.0 * MAX_ALPHA)
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    out: Optional[Path] = None
    tol: float = Field(default=DEFAULT_TAIL_TOL, gt=0.0)
    max_terms: int = Field(default=DEFAULT_MAX_TERMS, ge=1)
    quad_points: int = Field(default=DEFAULT_QUAD_POINTS, ge=16)
    workers: int = Field(default=DEFAULT_WORKERS, ge=1)
    count: int = Field(default=10, ge=1)
    kind: DensityKind = "limit"
    x: float = Field(default=0.5, ge=0.0)
    t: float = Field(default=1.0, gt=0.0)
    n: Optional[float] = Field(default=None, ge=0.0)
    points: int = Field(default=101, ge=2)
    sampler: SamplerName = "limit"
    mode: Literal["path", "marginal"] = "path"
    x0: float = Field(default=0.5, gt=0.0)
    t_max: float = Field(default=1.0, gt=0.0)
    step: float = Field(default=0.01, gt=0.0)
    paths: int = Field(default=1, ge=1)
    suite: SuiteName = "fast"
    timings: bool = False

    @field_validator("out", mode="before")
    @classmethod
    def _blank_out(cls, value: Any) -> Any:
        return None if value in ("", "-") else value

    @model_validator(mode="after")
    def _check_command(self) -> "RunConfig":
        if self.command == "density":
            if self.t < DEFAULT_T_MIN and self.kind != "stationary":
                raise ValueError(f"t must be at least {DEFAULT_T_MIN} for spectral densities")
            if self.kind in ("killed", "conditioned") and not 0.0 < self.x < 1.0:
                raise ValueError("x must lie strictly inside (0, 1) for killed/conditioned")
            if self.kind == "limit" and self.x > 1.0:
                raise ValueError("x must lie in [0, 1] for the limit density")
            if self.kind == "free" and self.x <= 0.0:
                raise ValueError("x must be positive for the free density")
            if self.kind == "conditioned" and (self.n is None or self.n <= self.t):
                raise ValueError("n must be given and exceed t for the conditioned density")
        if self.command == "sample":
            if self.sampler != "free" and not 0.0 < self.x0 < 1.0:
                raise ValueError("x0 must lie strictly inside (0, 1) for conditioned/limit samplers")
            if self.step > self.t_max:
                raise ValueError("step must not exceed t_max")
            if self.sampler in ("exact", "rejection"):
                if self.n is None:
                    raise ValueError("n is required for the exact and rejection samplers")
                if self.n < self.t_max:
                    raise ValueError("n must be at least t_max")
                if self.sampler == "exact" and self.step < DEFAULT_T_MIN:
                    raise ValueError(f"step must be at least {DEFAULT_T_MIN} for the exact sampler")
        return self

    @property
    def params(self) -> BesselParams:
        return BesselParams(d=self.d)

    @property
    def kernel_config(self) -> KernelConfig:
        return KernelConfig(tail_tol=self.tol, max_terms=self.max_terms, quad_points=self.quad_points)
