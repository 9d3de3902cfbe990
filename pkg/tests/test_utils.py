import math

import numpy as np
import pytest

from hardedge.errors import ConfigError
from hardedge.schemas import RngSpec
from hardedge.utils.files import cleanup_files, sidecar_path, write_text_atomic
from hardedge.utils.quadrature import gauss_legendre_panels
from hardedge.utils.rng import chunk_bounds, iter_chunks, make_rng, run_chunked
from hardedge.utils.text import format_float, parse_config_file, parse_csv, render_csv


def test_format_float_round_trips():
    for value in (0.1, math.pi, 1e-300, 2.404825557695773):
        assert float(format_float(value)) == value
    assert format_float(math.nan) == "nan"
    assert format_float(-math.inf) == "-inf"
    assert format_float(1.0) == "1"


def test_render_and_parse_csv():
    text = render_csv(("a", "b"), [(1, 0.5), (2, "x")], ["note = 1"])
    assert text == "a,b\n1,0.5\n2,x\n# note = 1\n"
    assert parse_csv(text) == [{"a": "1", "b": "0.5"}, {"a": "2", "b": "x"}]


def test_parse_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\n\n--t-max = 2   # trailing\nseed=3\n", encoding="utf-8")
    assert parse_config_file(path) == {"t_max": "2", "seed": "3"}
    path.write_text("no equals sign\n", encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        parse_config_file(path)
    assert info.value.context["line"] == 1


def test_write_text_atomic_and_cleanup(tmp_path):
    target = tmp_path / "nested" / "out.csv"
    assert write_text_atomic(target, "a\nb\n") == target
    assert target.read_bytes() == b"a\nb\n"
    assert not list(target.parent.glob(".*.tmp"))
    assert sidecar_path(target) == target.with_suffix(".json")
    cleanup_files(target, None, tmp_path / "missing")
    assert not target.exists()


def test_gauss_legendre_panels_integrate_exactly():
    nodes, weights = gauss_legendre_panels(4, 0.0, 2.0)
    assert nodes.size == 32 and np.all(np.diff(nodes) > 0.0)
    assert weights.sum() == pytest.approx(2.0, abs=1e-14)
    assert np.dot(weights, nodes**15) == pytest.approx(2.0**16 / 16.0, rel=1e-13)
    assert np.dot(weights, np.sin(nodes)) == pytest.approx(1.0 - math.cos(2.0), abs=1e-14)
    assert gauss_legendre_panels(4, 0.0, 2.0)[0] is nodes
    with pytest.raises(ValueError):
        nodes[0] = 1.0


def test_chunk_bounds():
    assert chunk_bounds(10, 4) == [(0, 0, 4), (1, 4, 8), (2, 8, 10)]
    assert chunk_bounds(0, 4) == []


def test_make_rng_depends_only_on_seed_stream_chunk():
    spec = RngSpec(seed=42, stream=1)
    a = make_rng(spec, 3).random(4)
    b = make_rng(spec, 3).random(4)
    c = make_rng(spec, 4).random(4)
    d = make_rng(RngSpec(seed=42, stream=2), 3).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_run_chunked_is_independent_of_worker_count():
    spec = RngSpec(seed=9)

    def work(gen, size):
        return gen.standard_normal(size)

    serial = np.concatenate(run_chunked(work, 1000, spec, workers=1, chunk_size=128))
    threaded = np.concatenate(run_chunked(work, 1000, spec, workers=4, chunk_size=128))
    assert serial.size == 1000
    np.testing.assert_array_equal(serial, threaded)


def test_iter_chunks_yields_same_prefix_for_any_worker_count():
    spec = RngSpec(seed=5)

    def work(gen, size):
        return gen.random(size)

    def take(workers):
        out = []
        for chunk in iter_chunks(work, spec, workers, 16):
            out.append(chunk)
            if len(out) == 5:
                break
        return np.concatenate(out)

    np.testing.assert_array_equal(take(1), take(3))
