"""Subcommand implementations; each takes a validated RunConfig and returns an exit code."""

import json
import logging
import sys
from typing import Callable, Dict, List, Optional

from hardedge.config import DEFAULT_CDF_POINTS, DEFAULT_ZERO_TOL
from hardedge.schemas import PathSample, RngSpec, RunConfig, VerificationReport
from hardedge.services.kernels import SpectralKernel, load_kernel
from hardedge.services.samplers import (
    make_time_grid,
    sample_bessel_path,
    sample_conditioned_exact,
    sample_conditioned_rejection,
    sample_limit_sde,
)
from hardedge.services.specfun import compute_zeros
from hardedge.services.verify import run_suite
from hardedge.utils.files import sidecar_path, write_text_atomic
from hardedge.utils.text import format_float, render_csv

logger = logging.getLogger(__name__)


def _kernel(config: RunConfig) -> SpectralKernel:
    return load_kernel(config.d, config.tol, config.max_terms, config.quad_points)


def _config_payload(config: RunConfig) -> Dict[str, object]:
    return json.loads(config.model_dump_json())


def _emit(config: RunConfig, text: str, sidecar: Optional[str] = None) -> None:
    """Write text to --out (plus its JSON sidecar) or to stdout."""

    if config.out is None:
        sys.stdout.write(text)
        return
    target = write_text_atomic(config.out, text)
    logger.info("Wrote %s", target)
    if sidecar is not None:
        write_text_atomic(sidecar_path(config.out), sidecar)


def _sidecar(config: RunConfig, **extra: object) -> str:
    return json.dumps({"config": _config_payload(config), **extra}, indent=2, sort_keys=True) + "\n"


def cmd_zeros(config: RunConfig) -> int:
    """Write the certified zero table of J_alpha for alpha = (d - 2)/2."""

    table = compute_zeros(config.params.alpha, config.count, DEFAULT_ZERO_TOL)
    _emit(config, table.to_csv(), _sidecar(config))
    return 0


def cmd_density(config: RunConfig) -> int:
    """Tabulate one density as `x,y,t,value,kind` rows with its integral in the footer."""

    kernel = _kernel(config)
    rows, normalization = kernel.density_table(config.kind, config.x, config.points, config.t, config.n)
    footer = [f"d = {format_float(config.d)}", f"normalization = {format_float(normalization)}"]
    if config.n is not None:
        footer.append(f"n = {format_float(config.n)}")
    text = render_csv(("x", "y", "t", "value", "kind"), rows, footer)
    _emit(config, text, _sidecar(config, normalization=normalization))
    return 0


def _draw(config: RunConfig, kernel: SpectralKernel) -> PathSample:
    times = make_time_grid(config.t_max, config.step)
    rng = RngSpec(seed=config.seed)
    samplers: Dict[str, Callable[[], PathSample]] = {
        "free": lambda: sample_bessel_path(config.x0, times, kernel, rng, config.paths, workers=config.workers),
        "limit": lambda: sample_limit_sde(config.x0, times, kernel, rng, config.paths, workers=config.workers),
        "exact": lambda: sample_conditioned_exact(
            config.x0, times, config.n, kernel, rng, config.paths, DEFAULT_CDF_POINTS, config.workers
        ),
        "rejection": lambda: sample_conditioned_rejection(
            config.x0, times, config.n, kernel, rng, config.paths, workers=config.workers
        ),
    }
    return samplers[config.sampler]()


def cmd_sample(config: RunConfig) -> int:
    """Run one sampler and write paths (`t,value`) or marginals (`sample_index,value`)."""

    sample = _draw(config, _kernel(config))
    for warning in sample.meta.warnings:
        logger.warning(warning)
    text = sample.to_path_csv() if config.mode == "path" else sample.to_marginal_csv()
    _emit(config, text, sample.sidecar(_config_payload(config)))
    return 0


def render_reports(reports: List[VerificationReport]) -> str:
    """Serialize reports as a JSON array of objects."""

    return json.dumps([json.loads(report.model_dump_json()) for report in reports], indent=2) + "\n"


def cmd_verify(config: RunConfig) -> int:
    """Run a verification suite; the exit code is 1 iff a check failed or errored."""

    reports = run_suite(
        config.suite,
        d=config.d,
        seed=config.seed,
        workers=config.workers,
        timings=config.timings,
        config=config.kernel_config,
    )
    _emit(config, render_reports(reports))
    failures = [report.name for report in reports if report.is_failure]
    if failures:
        logger.error("%d of %d checks failed: %s", len(failures), len(reports), ", ".join(failures))
        return 1
    return 0


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "zeros": cmd_zeros,
    "density": cmd_density,
    "sample": cmd_sample,
    "verify": cmd_verify,
}
