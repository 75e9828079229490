"""The compiled kernels and the pure-Python fallback must agree bit for bit."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfa import _fallback as py
from rfa import rng

compiled = pytest.importorskip("rfa._kernels")

SEEDS = st.integers(0, 2**64 - 1)


def _same(a, b):
    if isinstance(a, tuple):
        assert len(a) == len(b)
        for x, y in zip(a, b):
            _same(x, y)
    else:
        a, b = np.asarray(a), np.asarray(b)
        assert a.dtype.kind == b.dtype.kind and a.shape == b.shape
        assert a.tobytes() == b.astype(a.dtype).tobytes()


def test_backend_names():
    assert compiled.BACKEND == "compiled" and py.BACKEND == "python"


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 8), SEEDS)
def test_build_uniform(d, k, seed):
    _same(compiled.build_uniform(d, k, seed), py.build_uniform(d, k, seed))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(3, 40), st.sampled_from([0.5, 0.8, 0.99]), st.sampled_from([float("nan"), 0.3, 0.5]),
       SEEDS, st.booleans())
def test_build_quantile(d, a_n, q, qn, seed, ties):
    X = np.random.default_rng(seed % 997).random((40, d))
    if ties:
        X = np.round(X * 4) / 4
    _same(compiled.build_quantile(X, a_n, q, qn, seed), py.build_quantile(X, a_n, q, qn, seed))


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.integers(0, 6), st.integers(0, 1000))
def test_uniform_predictions(d, k, seed):
    g = np.random.default_rng(seed)
    X, Y, Q = g.random((50, d)), g.normal(size=50), g.random((9, d))
    seeds = rng.derive_seeds(seed, "b", 7)
    _same(compiled.uniform_predictions(X, Y, k, seeds, Q), py.uniform_predictions(X, Y, k, seeds, Q))


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.integers(3, 50), st.integers(0, 1000))
def test_quantile_predictions(d, a_n, seed):
    g = np.random.default_rng(seed)
    X, Y, Q = g.random((50, d)), g.normal(size=50), g.random((9, d))
    seeds = rng.derive_seeds(seed, "b", 6)
    nan = float("nan")
    _same(compiled.quantile_predictions(X, Y, a_n, 0.8, nan, seeds, Q),
          py.quantile_predictions(X, Y, a_n, 0.8, nan, seeds, Q))


def test_apply_attach_leaf_values():
    g = np.random.default_rng(3)
    f, t, l, r = py.build_uniform(2, 5, 99)
    X, Q, Y = g.random((60, 2)), g.random((20, 2)), g.normal(size=60)
    _same(compiled.apply(f, t, l, r, Q), py.apply(f, t, l, r, Q))
    att = py.attach(f, t, l, r, X)
    _same(compiled.attach(f, t, l, r, X), att)
    _same(compiled.leaf_values(*att, Y), py.leaf_values(*att, Y))


@pytest.mark.parametrize("q_n", [0.0, 0.1, 0.5, 0.99, 0.5000000001])
@pytest.mark.parametrize("n", [3, 4, 7, 100])
def test_quantile_rank_level(q_n, n):
    assert compiled.quantile_rank(q_n, n) == py.quantile_rank(q_n, n)
    for u in (0.0, 0.3, 0.999):
        for fixed in (float("nan"), q_n):
            a = compiled.quantile_level(n, 0.8, fixed, u)
            b = py.quantile_level(n, 0.8, fixed, u)
            assert a == b


def test_neumaier_rows():
    block = np.random.default_rng(0).normal(size=(300, 5)) * 1e8
    s1, c1, s2, c2 = (np.zeros(5) for _ in range(4))
    compiled.neumaier_rows(block, s1, c1)
    py.neumaier_rows(block, s2, c2)
    _same(s1, s2)
    _same(c1, c2)


def test_fallback_forced_by_environment(tmp_path):
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "import rfa; print(rfa.BACKEND)"],
        env={"RFA_PURE_PYTHON": "1", "PATH": ""}, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
