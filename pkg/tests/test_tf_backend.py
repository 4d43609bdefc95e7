import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genlasso_path.backend_base import ConditioningWarning, NumericalFailure
from genlasso_path.generic_backend import GenericBackend
from genlasso_path.operators import TrendFilter, build_diff_operator
from genlasso_path.tf_backend import BandedSPDFactor, banded_gram, tf_solve, tf_step_quantities

from oracles import pinv_solve


def dense_gram(k, p, rows):
    D = build_diff_operator(k, p).toarray()[rows]
    return D @ D.T


def test_tf_solve_examples():
    np.testing.assert_allclose(tf_solve(0, np.arange(2), [1.0, 2.0]), [4 / 3, 5 / 3], atol=1e-14)
    np.testing.assert_allclose(tf_solve(0, np.array([0]), [1.0]), [0.5], atol=1e-15)
    for k in range(4):
        assert np.all(tf_solve(k, np.arange(10), np.zeros(10)) == 0)


def test_step_quantities_examples():
    spec = TrendFilter(0, 3)
    a, b = tf_step_quantities(np.array([0.0, 1, 3]), spec)
    np.testing.assert_allclose(a, [4 / 3, 5 / 3], atol=1e-14)
    np.testing.assert_array_equal(b, 0)
    a, b = tf_step_quantities(np.array([0.0, 1, 3]), spec, [1], [1])
    np.testing.assert_allclose(a, [0.5], atol=1e-15)
    np.testing.assert_allclose(b, [-0.5], atol=1e-15)
    a, _ = tf_step_quantities(np.zeros(8), TrendFilter(2, 8), [0, 3], [1, -1])
    assert np.all(a == 0)


@settings(max_examples=60, deadline=None)
@given(k=st.integers(0, 3), p=st.integers(5, 40), seed=st.integers(0, 2**32 - 1))
def test_banded_gram_matches_dense(k, p, seed):
    rng = np.random.default_rng(seed)
    m = p - k - 1
    rows = np.flatnonzero(rng.random(m) < 0.6)
    G = dense_gram(k, p, rows)
    # nothing outside the band of half-width k+1
    i, j = np.nonzero(G)
    assert np.all(np.abs(i - j) <= k + 1)
    ab = banded_gram(k, rows)
    assert ab.shape == (k + 2, rows.size)
    back = np.zeros_like(G)
    for u in range(min(k + 2, rows.size)):
        idx = np.arange(rows.size - u)
        back[idx + u, idx] = ab[u, : rows.size - u]
        back[idx, idx + u] = ab[u, : rows.size - u]
    np.testing.assert_array_equal(back, G)
    if rows.size:
        f = BandedSPDFactor(ab)
        assert f.bandwidth == 2 * k + 3
        L = f.lower()
        assert np.all(np.diag(L) > 0)
        assert np.abs(L @ L.T - G).max() <= 1e-10 * np.abs(G).max()


@settings(max_examples=60, deadline=None)
@given(k=st.integers(0, 3), p=st.integers(6, 60), seed=st.integers(0, 2**32 - 1))
def test_agrees_with_generic_backend(k, p, seed):
    rng = np.random.default_rng(seed)
    spec = TrendFilter(k, p)
    y = rng.standard_normal(p)
    B = np.flatnonzero(rng.random(spec.m) < 0.3)
    s = rng.choice([-1.0, 1.0], B.size)
    a, b = tf_step_quantities(y, spec, B, s)
    gb = GenericBackend(spec)
    gb.set_boundary(B)
    u = np.zeros(spec.m)
    u[B] = s
    scale = max(1.0, np.abs(a).max(initial=0))
    np.testing.assert_allclose(gb.solve(y), a, atol=1e-8 * scale)
    np.testing.assert_allclose(gb.solve(spec.matrix.T @ u), b, atol=1e-8 * max(1.0, np.abs(b).max(initial=0)))
    # and the normal-equation oracle
    Dm = spec.matrix.toarray()[gb.interior]
    np.testing.assert_allclose(pinv_solve(Dm.T, y), a, atol=1e-8 * scale)


def test_conditioning_warning():
    k, p = 3, 200
    with pytest.warns(ConditioningWarning, match="square"):
        BandedSPDFactor(banded_gram(k, np.arange(p - k - 1)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        BandedSPDFactor(banded_gram(0, np.arange(50)))


def test_failure_is_signalled():
    ab = np.array([[1.0, 1.0], [2.0, 0.0]])  # [[1,2],[2,1]] is indefinite
    with pytest.raises(NumericalFailure):
        BandedSPDFactor(ab)
    with pytest.warns(ConditioningWarning):
        f = BandedSPDFactor(ab, fallback="lu")
    np.testing.assert_allclose(f.solve(np.array([3.0, 3.0])), [1.0, 1.0])
