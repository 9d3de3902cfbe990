import importlib
from pathlib import Path

import pytest

import hardedge.config as config
from hardedge.errors import ConfigError, RejectionExhaustedError, SamplerError
from hardedge.utils import files


@pytest.fixture
def reload_config(monkeypatch):
    def _reload(**env):
        for key, value in env.items():
            monkeypatch.setenv(key, value)
        return importlib.reload(config)

    yield _reload
    monkeypatch.undo()
    importlib.reload(config)


def test_environment_overrides_defaults(reload_config, tmp_path):
    module = reload_config(
        HARDEDGE_MAX_TERMS="120",
        HARDEDGE_SEED="7",
        HARDEDGE_LOG_LEVEL="debug",
        HARDEDGE_OUTPUT_DIR=str(tmp_path),
    )
    assert module.DEFAULT_MAX_TERMS == 120
    assert module.DEFAULT_SEED == 7
    assert module.LOG_LEVEL == "DEBUG"
    assert module.OUTPUT_DIR == Path(tmp_path)


def test_defaults_without_environment(reload_config, monkeypatch):
    for key in ("HARDEDGE_TAIL_TOL", "HARDEDGE_T_MIN", "HARDEDGE_WORKERS"):
        monkeypatch.delenv(key, raising=False)
    module = reload_config()
    assert module.DEFAULT_TAIL_TOL == 1e-13
    assert module.DEFAULT_T_MIN == 1e-3
    assert module.DEFAULT_WORKERS == 1
    assert module.MAX_ALPHA == 50.0


def test_relative_output_is_anchored_at_output_dir(monkeypatch, tmp_path):
    monkeypatch.setattr(files, "OUTPUT_DIR", tmp_path)
    target = files.write_text_atomic(Path("runs") / "zeros.csv", "k\n")
    assert target == tmp_path / "runs" / "zeros.csv"
    assert files.sidecar_path(Path("runs") / "zeros.csv") == tmp_path / "runs" / "zeros.json"


def test_errors_carry_context_and_exit_codes():
    error = RejectionExhaustedError("too few accepted paths", acceptance_rate=0.001, attempts=8192)
    assert isinstance(error, SamplerError)
    assert error.exit_code == 5
    assert error.to_dict() == {
        "error": "RejectionExhaustedError",
        "detail": "too few accepted paths",
        "acceptance_rate": 0.001,
        "attempts": 8192,
    }
    assert ConfigError("bad").exit_code == 2
