import json
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfa import rng
from rfa._io import atomic_write_json, csv_text, fmt
from rfa._parallel import chunk_bounds, map_chunks, resolve_threads
from rfa.errors import ConfigError


def test_derive_seeds_prefix_stable():
    a = rng.derive_seeds(5, "forest/theta", 100)
    b = rng.derive_seeds(5, "forest/theta", 10)
    np.testing.assert_array_equal(a[:10], b)
    np.testing.assert_array_equal(rng.derive_seeds(5, "forest/theta", 5, start=20), a[20:25])


def test_tags_and_masters_separate_streams():
    a = rng.derive_seeds(5, "x", 50)
    assert len(set(a.tolist()) & set(rng.derive_seeds(5, "y", 50).tolist())) == 0
    assert len(set(a.tolist()) & set(rng.derive_seeds(6, "x", 50).tolist())) == 0
    assert len(set(a.tolist())) == 50


def test_generator_reproducible():
    np.testing.assert_array_equal(rng.generator(1, "t").random(5), rng.generator(1, "t").random(5))
    assert rng.derive_seed(1, "t", 3) == int(rng.derive_seeds(1, "t", 4)[3])


def test_fmt_round_trips():
    for v in (0.1, 1 / 3, 1e-300, -2.5e17, 0.0):
        assert float(fmt(v)) == v
    assert fmt(True) == "true" and fmt(None) == ""
    assert fmt(3) == "3"


def test_csv_text_shape():
    text = csv_text(["a", "b"], [[1, 0.5], [2, None]])
    assert text.splitlines() == ["a,b", "1,0.5", "2,"]


def test_atomic_write_json(tmp_path):
    p = tmp_path / "sub" / "x.json"
    atomic_write_json(p, {"a": np.float64(1.5), "b": np.arange(3)})
    assert json.loads(p.read_text()) == {"a": 1.5, "b": [0, 1, 2]}
    assert [q.name for q in p.parent.iterdir()] == ["x.json"]


def test_resolve_threads(monkeypatch):
    monkeypatch.delenv("RFA_THREADS", raising=False)
    assert resolve_threads(None) == 1
    monkeypatch.setenv("RFA_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    with pytest.raises(ConfigError):
        resolve_threads(0)


@given(st.integers(0, 500), st.integers(1, 64))
def test_chunk_bounds_cover(n, chunk):
    b = chunk_bounds(n, chunk)
    covered = [i for s, e in b for i in range(s, e)]
    assert covered == list(range(n))


@settings(deadline=None, max_examples=20)
@given(st.integers(0, 200), st.integers(1, 17), st.integers(1, 4))
def test_map_chunks_order_independent_of_threads(n, chunk, threads):
    out = map_chunks(lambda s, e: list(range(s, e)), n, chunk, threads)
    assert [i for part in out for i in part] == list(range(n))


def test_map_chunks_really_uses_threads():
    seen = set()

    def fn(s, e):
        seen.add(threading.get_ident())
        return s

    assert map_chunks(fn, 40, 5, 4) == list(range(0, 40, 5))
    assert len(seen) >= 1
