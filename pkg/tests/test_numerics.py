import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ndmultiplex.errors import ConvergenceError, ShapeError, ValidationError
from ndmultiplex.numerics import gram_determinant, linear_fit, nnls, sv_product


def svd_product(M):
    return float(np.prod(np.linalg.svd(np.asarray(M, float), compute_uv=False)))


def grid_nnls_objective(A, y, final_step=1e-3):
    """Brute-force min ||Ac - y|| over a nonnegative box, coarse-to-fine.

    The box bound follows from ||A c*|| <= 2 ||y||. Each level scans a
    21-point-per-axis grid around the incumbent and shrinks the step 5x.
    """
    A = np.asarray(A, float)
    y = np.asarray(y, float)
    n = A.shape[1]
    smin = np.linalg.svd(A, compute_uv=False).min()
    upper = 2 * np.linalg.norm(y) / smin + 1e-9
    step = upper / 20
    center = np.zeros(n)
    lo = np.zeros(n)
    hi = np.full(n, upper)
    best = None
    while True:
        axes = [np.clip(np.arange(lo[i], hi[i] + step / 2, step), 0, None) for i in range(n)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
        obj = np.linalg.norm(pts @ A.T - y, axis=1)
        k = int(np.argmin(obj))
        center, best = pts[k], obj[k]
        if step <= final_step:
            return best, center
        lo = np.maximum(center - 10 * step, 0)
        hi = center + 10 * step
        step /= 5


# ---------------------------------------------------------------- sv_product

def test_sv_product_identity():
    assert sv_product(np.eye(3)) == 1.0


def test_sv_product_rank_deficient_rows():
    assert sv_product([[1, 0, 0], [2, 0, 0]]) == 0.0


def test_sv_product_hand_computed():
    # M M^T = diag(2, 2) -> sqrt(4)
    assert sv_product([[1, 1], [1, -1]]) == pytest.approx(2.0, rel=1e-15)


def test_sv_product_rejects_tall():
    with pytest.raises(ShapeError):
        sv_product(np.ones((3, 2)))


def test_gram_determinant_is_square_of_metric():
    M = np.array([[1.0, 2, 0, 1], [0, 1, 3, 1], [2, 0, 1, 1]])
    assert gram_determinant(M) == pytest.approx(np.linalg.det(M @ M.T), rel=1e-12)
    assert sv_product(M) ** 2 == pytest.approx(gram_determinant(M), rel=1e-12)


def test_sv_product_non_finite():
    with pytest.raises(ValidationError):
        sv_product([[1.0, np.nan]])


@settings(max_examples=200, deadline=None)
@given(n=st.integers(3, 32), seed=st.integers(0, 2**32 - 1))
def test_sv_product_matches_svd(n, seed):
    M = np.random.default_rng(seed).random((3, n))
    assert sv_product(M) == pytest.approx(svd_product(M), rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(3, 20), seed=st.integers(0, 2**32 - 1),
       alpha=st.floats(-10, 10).filter(lambda a: abs(a) > 1e-3))
def test_sv_product_permutation_and_row_scaling(n, seed, alpha):
    rng = np.random.default_rng(seed)
    M = rng.random((3, n))
    base = sv_product(M)
    assert sv_product(M[:, rng.permutation(n)]) == pytest.approx(base, rel=1e-12)
    S = M.copy()
    S[1] *= alpha
    assert sv_product(S) == pytest.approx(abs(alpha) * base, rel=1e-12)


def test_sv_product_ill_conditioned_against_high_precision():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 50
    rng = np.random.default_rng(17)
    for _ in range(20):
        n = int(rng.integers(3, 33))
        r = rng.random((2, n))
        # nearly dependent third row: condition number around 1e6
        M = np.vstack([r, r[0] + r[1] + 1e-6 * rng.standard_normal(n)])
        G = mpmath.matrix(M.tolist()) * mpmath.matrix(M.T.tolist())
        ref = float(mpmath.sqrt(mpmath.det(G)))
        assert sv_product(M) == pytest.approx(ref, rel=1e-10)


def test_sv_product_zero_on_linear_combination():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = rng.integers(3, 33)
        r = rng.random((2, n))
        M = np.vstack([r, rng.random() * r[0] + rng.random() * r[1]])
        assert sv_product(M) == 0.0


# ---------------------------------------------------------------- nnls

def test_nnls_identity():
    np.testing.assert_allclose(nnls(np.eye(3), [1, 2, 3]), [1, 2, 3], atol=1e-15)


def test_nnls_clips_negative():
    np.testing.assert_array_equal(nnls(np.eye(2), [1, -1]), [1, 0])


def test_nnls_single_column_mean():
    # unconstrained optimum (0 + 2) / 2 = 1 is already feasible
    np.testing.assert_allclose(nnls([[1], [1]], [0, 2]), [1.0])


def test_nnls_zero_rhs():
    np.testing.assert_array_equal(nnls(np.ones((4, 3)), np.zeros(4)), np.zeros(3))


def test_nnls_validation():
    with pytest.raises(ValidationError):
        nnls(np.eye(2), [1, np.inf])
    with pytest.raises(ShapeError):
        nnls(np.eye(2), [1, 2, 3])


def test_nnls_iteration_cap_reports_best_iterate():
    A = np.eye(4)
    with pytest.raises(ConvergenceError) as info:
        nnls(A, [1, 2, 3, 4], max_iter=2)
    assert info.value.best is not None
    assert np.all(info.value.best >= 0)


def kkt_ok(A, y, c):
    g = A.T @ (A @ c - y)
    eps = 1e-8 * np.max(np.abs(A.T @ y))
    return (np.all(c >= 0) and np.all(np.abs(g[c > 0]) <= eps)
            and np.all(g[c == 0] >= -eps))


@settings(max_examples=300, deadline=None)
@given(m=st.integers(1, 8), n=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_nnls_kkt(m, n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    y = rng.standard_normal(m)
    assert kkt_ok(A, y, nnls(A, y))


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_nnls_returns_unconstrained_solution_when_feasible(n, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = Q @ np.diag(rng.uniform(1, 3, n))
    x = rng.uniform(0.1, 2, n)
    y = A @ x
    np.testing.assert_allclose(nnls(A, y), x, rtol=1e-8, atol=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_nnls_matches_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    while True:
        A = rng.standard_normal((4, 3))
        if np.linalg.cond(A) < 10:
            break
    y = rng.standard_normal(4)
    oracle, _ = grid_nnls_objective(A, y)
    c = nnls(A, y)
    assert np.linalg.norm(A @ c - y) <= oracle + 1e-3


def test_nnls_agrees_with_scipy():
    scipy_opt = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(11)
    for _ in range(200):
        m, n = rng.integers(1, 9, 2)
        A = rng.standard_normal((m, n))
        y = rng.standard_normal(m)
        ours = np.linalg.norm(A @ nnls(A, y) - y)
        # recompute from x: scipy's reported rnorm is not always consistent with it
        ref = np.linalg.norm(A @ scipy_opt.nnls(A, y)[0] - y)
        assert ours <= ref + 1e-9


# ---------------------------------------------------------------- linear_fit

def test_linear_fit_exact_line():
    x = np.arange(5.0)
    f = linear_fit(x, 2 * x + 1)
    assert f.slope == pytest.approx(2)
    assert f.intercept == pytest.approx(1)
    assert f.r_squared == 1.0


def test_linear_fit_constant_y():
    f = linear_fit([0, 1, 2, 3], [0.7] * 4)
    assert f.slope == 0.0
    assert f.intercept == pytest.approx(0.7)
    assert f.r_squared == 1.0


def test_linear_fit_symmetric_triple():
    f = linear_fit([0, 1, 2], [0, 1, 0])
    assert f.slope == pytest.approx(0, abs=1e-15)
    assert f.intercept == pytest.approx(1 / 3)
    assert f.r_squared == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("x,y", [([1, 1, 1], [0, 1, 2]), ([1], [1]), ([0, 1], [0, 1, 2])])
def test_linear_fit_degenerate(x, y):
    with pytest.raises(ValidationError):
        linear_fit(x, y)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(3, 40), elements=st.floats(-100, 100)),
       st.integers(0, 2**32 - 1))
def test_linear_fit_residuals_orthogonal(x, seed):
    if np.ptp(x) < 1e-3:
        return
    y = np.random.default_rng(seed).standard_normal(x.size) * 10 + 0.3 * x
    f = linear_fit(x, y)
    r = y - f.predict(x)
    scale = np.linalg.norm(r) * np.linalg.norm(x) + np.linalg.norm(y) * np.linalg.norm(x)
    assert abs(r.sum()) <= 1e-10 * (np.linalg.norm(r) * math.sqrt(x.size) + np.abs(y).sum())
    assert abs(r @ x) <= 1e-10 * scale
    assert 0.0 <= f.r_squared <= 1.0
