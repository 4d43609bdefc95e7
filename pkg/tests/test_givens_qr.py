import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genlasso_path.givens_qr import (
    GivensRotation,
    QRFactor,
    RankDeficientError,
    givens_for,
    qr_full,
    qr_rotated,
    solve_ls_basic,
    solve_ls_minnorm,
    solve_ls_unique,
    update_add_row,
    update_column,
    update_remove_row,
)
from oracles import pinv_solve, svd_rank


def low_rank(rng, m, n, k):
    if k == 0:
        return np.zeros((m, n))
    return rng.standard_normal((m, k)) @ rng.standard_normal((k, n))


def check_factor(f, A):
    scale = max(np.abs(A).max(initial=0.0), 1.0)
    assert np.abs(f.Q.T @ f.Q - np.eye(f.Q.shape[0])).max(initial=0.0) <= 1e-10 * max(f.Q.shape[0], 1)
    assert np.abs(f.matrix() - A).max(initial=0.0) <= 1e-9 * scale


# -- rotations --------------------------------------------------------------

@pytest.mark.parametrize(
    "a, b, c, s, d",
    [(3, 4, 0.6, -0.8, 5.0), (1, 0, 1.0, 0.0, 1.0), (0, 2, 0.0, -1.0, 2.0)],
)
def test_givens_for_examples(a, b, c, s, d):
    cc, ss = givens_for(a, b)
    assert cc == pytest.approx(c) and ss == pytest.approx(s)
    g = GivensRotation(0, 1, cc, ss)
    np.testing.assert_allclose(g.apply(np.array([a, b], float)), [d, 0.0], atol=1e-15)


def test_givens_for_rejects_zero():
    with pytest.raises(ValueError):
        givens_for(0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(-1e6, 1e6, allow_nan=False),
    st.floats(-1e6, 1e6, allow_nan=False),
    st.integers(2, 8),
    st.data(),
)
def test_rotation_is_unit_and_local(a, b, n, data):
    if a == 0 and b == 0:
        return
    c, s = givens_for(a, b)
    assert abs(c * c + s * s - 1) <= 1e-14
    i = data.draw(st.integers(0, n - 2))
    j = data.draw(st.integers(i + 1, n - 1))
    x = np.random.default_rng(n).standard_normal(n)
    y = GivensRotation(i, j, c, s).apply(x)
    others = [t for t in range(n) if t not in (i, j)]
    assert np.array_equal(x[others], y[others])


# -- full-rank QR -----------------------------------------------------------

def test_qr_full_examples():
    f = qr_full(np.eye(2))
    np.testing.assert_allclose(f.Q, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(f.R, np.eye(2), atol=1e-15)

    f = qr_full(np.array([[3.0], [4.0]]))
    assert abs(f.R[0, 0]) == pytest.approx(5.0)
    np.testing.assert_allclose(np.abs(f.Q[:, 0]), [0.6, 0.8])

    A = np.array([[-1.0, 1, 0], [0, -1, 1]]).T
    f = qr_full(A)
    np.testing.assert_allclose(np.abs(np.diag(f.R1)), [np.sqrt(2), np.sqrt(1.5)])
    check_factor(f, A)


def test_qr_full_flags_rank_deficiency():
    with pytest.raises(RankDeficientError):
        qr_full(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]))


@pytest.mark.parametrize(
    "A, b, x",
    [
        (np.eye(3), [1.0, -2.0, 5.0], [1.0, -2.0, 5.0]),
        ([[1.0], [1.0]], [1.0, 3.0], [2.0]),
        ([[1.0, 0], [0, 1], [1, 1]], [1.0, 1, 2], [1.0, 1]),
    ],
)
def test_solve_ls_unique_examples(A, b, x):
    f = qr_full(np.asarray(A, float))
    np.testing.assert_allclose(solve_ls_unique(f, np.asarray(b)), x, atol=1e-12)


# -- rotated QR and min-norm ------------------------------------------------

def test_qr_rotated_ranks():
    assert qr_rotated(np.zeros((3, 3))).k == 0
    D = np.array([[-1.0, 1, 0], [0, -1, 1]])
    assert qr_rotated(D).k == svd_rank(D) == 2
    assert qr_rotated(np.ones((2, 2))).k == 1


def test_solve_ls_minnorm_examples():
    x = solve_ls_minnorm(qr_rotated(np.array([[1.0, 1.0]])), np.array([2.0]))
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-14)
    x = solve_ls_minnorm(qr_rotated(np.zeros((3, 2))), np.ones(3))
    np.testing.assert_array_equal(x, np.zeros(2))


@pytest.mark.parametrize("transposed", [False, True])
def test_minnorm_matches_svd_on_rank4(transposed):
    rng = np.random.default_rng(7)
    A = low_rank(rng, 6, 9, 4)
    b = rng.standard_normal(6)
    f = qr_rotated(A, transposed=transposed)
    assert f.k == 4
    check_factor(f, A)
    np.testing.assert_allclose(solve_ls_minnorm(f, b), pinv_solve(A, b), atol=1e-9)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 10), st.integers(1, 10), st.integers(0, 10), st.integers(0, 2**31), st.booleans())
def test_rotated_factor_properties(m, n, k, seed, transposed):
    rng = np.random.default_rng(seed)
    k = min(k, m, n)
    A = low_rank(rng, m, n, k)
    f = qr_rotated(A, transposed=transposed)
    check_factor(f, A)
    assert f.k == svd_rank(A)
    if f.k:
        assert np.all(np.abs(np.diag(f.R1)) > f.tol)
    b = rng.standard_normal(m)
    x = solve_ls_minnorm(f, b)
    np.testing.assert_allclose(x, pinv_solve(A, b), atol=1e-9)
    # a basic solution fits equally well but is never shorter
    xb = solve_ls_basic(A, b)
    assert np.linalg.norm(x) <= np.linalg.norm(xb) * (1 + 1e-9) + 1e-9
    assert np.linalg.norm(A @ x - A @ xb) <= 1e-9 * max(np.linalg.norm(b), 1.0)


# -- row updates ------------------------------------------------------------

def test_add_row_examples():
    f = qr_rotated(np.zeros((0, 2)))
    update_add_row(f, np.array([1.0, 2.0]), 0)
    assert f.k == 1
    f = qr_rotated(np.zeros((0, 2)))
    update_add_row(f, np.zeros(2), 0)
    assert f.k == 0

    f = qr_rotated(np.array([[1.0, 0.0]]))
    update_add_row(f, np.array([0.0, 1.0]), 1)
    assert f.k == 2
    f = qr_rotated(np.array([[1.0, 0.0]]))
    update_add_row(f, np.array([2.0, 0.0]), 1)
    assert f.k == 1
    check_factor(f, np.array([[1.0, 0], [2, 0]]))


def test_remove_row_examples():
    f = qr_rotated(np.eye(2))
    update_remove_row(f, 1)
    assert f.k == 1
    check_factor(f, np.array([[1.0, 0.0]]))

    f = qr_rotated(np.array([[1.0, 0], [2, 0]]))
    update_remove_row(f, 0)
    assert f.k == 1
    check_factor(f, np.array([[2.0, 0.0]]))


def test_remove_each_row_matches_fresh():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((8, 5))
    b = rng.standard_normal(7)
    for i in range(8):
        f = qr_full(A)
        update_remove_row(f, i)
        Ai = np.delete(A, i, axis=0)
        check_factor(f, Ai)
        np.testing.assert_allclose(solve_ls_unique(f, b), solve_ls_unique(qr_full(Ai), b), atol=1e-10)
        g = qr_rotated(A)
        update_remove_row(g, i)
        np.testing.assert_allclose(solve_ls_minnorm(g, b), pinv_solve(Ai, b), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**31))
def test_row_update_sequences(n, k, seed):
    # rows drawn mostly from a fixed low-dimensional row space so the rank moves both ways
    rng = np.random.default_rng(seed)
    k = min(k, n)
    basis = rng.standard_normal((k, n))
    A = rng.standard_normal((3, k)) @ basis
    f = qr_rotated(A)
    for _ in range(50):
        if A.shape[0] and rng.random() < 0.5:
            i = int(rng.integers(A.shape[0]))
            A = np.delete(A, i, axis=0)
            update_remove_row(f, i)
        else:
            i = int(rng.integers(A.shape[0] + 1))
            w = rng.standard_normal(n) if rng.random() < 0.2 else rng.standard_normal(k) @ basis
            A = np.insert(A, i, w, axis=0)
            update_add_row(f, w, i)
        check_factor(f, A)
        assert f.k == svd_rank(A)
        if A.shape[0]:
            b = rng.standard_normal(A.shape[0])
            np.testing.assert_allclose(
                solve_ls_minnorm(f, b), solve_ls_minnorm(qr_rotated(A), b), atol=1e-9
            )


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31))
def test_full_rank_updates(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n + 2, n))
    f = qr_full(A)
    for _ in range(30):
        r = rng.random()
        m, n = A.shape
        if r < 0.25 and m > n:
            i = int(rng.integers(m))
            A = np.delete(A, i, axis=0)
            update_remove_row(f, i)
        elif r < 0.5:
            i = int(rng.integers(m + 1))
            w = rng.standard_normal(n)
            A = np.insert(A, i, w, axis=0)
            update_add_row(f, w, i)
        elif r < 0.75 and n > 1:
            j = int(rng.integers(n))
            A = np.delete(A, j, axis=1)
            update_column(f, "remove", index=j)
        elif n < m:
            j = int(rng.integers(n + 1))
            c = rng.standard_normal(m)
            A = np.insert(A, j, c, axis=1)
            update_column(f, "add", c, j)
        assert isinstance(f, QRFactor)
        check_factor(f, A)
        assert np.allclose(np.tril(f.R, -1), 0.0, atol=1e-12)
        b = rng.standard_normal(A.shape[0])
        np.testing.assert_allclose(solve_ls_unique(f, b), pinv_solve(A, b), atol=1e-8)


# -- column updates on a transposed factor ----------------------------------

def test_column_update_examples():
    f = qr_rotated(np.eye(2), transposed=True)
    update_column(f, "remove", index=0)
    check_factor(f, np.array([[0.0], [1.0]]))
    assert f.k == 1

    A = np.array([[1.0, 2.0], [0.0, 1.0], [1.0, 0.0]])
    f = qr_rotated(A, transposed=True)
    update_column(f, "add", A[:, 0], 2)
    assert f.k == 2


def test_twenty_column_updates_match_fresh():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((10, 12))
    f = qr_rotated(A, transposed=True)
    for t in range(20):
        if t % 2 == 0:
            j = int(rng.integers(A.shape[1]))
            A = np.delete(A, j, axis=1)
            update_column(f, "remove", index=j)
        else:
            j = int(rng.integers(A.shape[1] + 1))
            c = A[:, 0] + A[:, 1] if rng.random() < 0.5 else rng.standard_normal(10)
            A = np.insert(A, j, c, axis=1)
            update_column(f, "add", c, j)
    b = rng.standard_normal(10)
    check_factor(f, A)
    np.testing.assert_allclose(
        solve_ls_minnorm(f, b), solve_ls_minnorm(qr_rotated(A, transposed=True), b), atol=1e-9
    )


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**31))
def test_transposed_column_sequences(m, k, seed):
    rng = np.random.default_rng(seed)
    k = min(k, m)
    basis = rng.standard_normal((m, k))
    A = basis @ rng.standard_normal((k, 3))
    f = qr_rotated(A, transposed=True)
    for _ in range(50):
        if A.shape[1] and rng.random() < 0.5:
            j = int(rng.integers(A.shape[1]))
            A = np.delete(A, j, axis=1)
            update_column(f, "remove", index=j)
        else:
            j = int(rng.integers(A.shape[1] + 1))
            c = rng.standard_normal(m) if rng.random() < 0.2 else basis @ rng.standard_normal(k)
            A = np.insert(A, j, c, axis=1)
            update_column(f, "add", c, j)
        check_factor(f, A)
        assert f.k == svd_rank(A)
        b = rng.standard_normal(m)
        np.testing.assert_allclose(solve_ls_minnorm(f, b), pinv_solve(A, b), atol=1e-9)


def test_row_update_refuses_transposed_factor():
    f = qr_rotated(np.eye(2), transposed=True)
    with pytest.raises(TypeError):
        update_add_row(f, np.ones(2), 0)
