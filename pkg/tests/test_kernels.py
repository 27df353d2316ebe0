import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from visprune.kernels import NEG_INF, dtype_for, mask_from_allowed, masked_softmax, matmul

from oracles import matmul_loops, softmax_exp_sum


def test_matmul_identity():
    m = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(matmul(np.eye(3), m), m)


def test_matmul_scalar():
    assert matmul(np.array([[2.0]]), np.array([[3.0]]))[0, 0] == 6.0


def test_matmul_matches_triple_loop(np_rng):
    a = np_rng.standard_normal((4, 5))
    b = np_rng.standard_normal((5, 3))
    np.testing.assert_allclose(matmul(a, b), matmul_loops(a, b), rtol=0, atol=1e-12)


def test_matmul_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associative_with_identity(np_rng):
    a, b, c = (np_rng.standard_normal((8, 8)) for _ in range(3))
    np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-10)
    np.testing.assert_allclose(matmul(a, np.eye(8)), a, atol=1e-10)


def test_softmax_uniform_row():
    out = masked_softmax(np.zeros((1, 3)), np.zeros((1, 3)))
    np.testing.assert_allclose(out, [[1 / 3] * 3])


def test_softmax_masked_middle():
    out = masked_softmax(np.array([[5.0, 5.0, 5.0]]), np.array([[0.0, NEG_INF, 0.0]]))
    assert out[0, 1] == 0.0
    np.testing.assert_allclose(out, [[0.5, 0.0, 0.5]])


def test_softmax_matches_exp_sum(np_rng):
    scores = np_rng.standard_normal((6, 6)) * 3
    allowed = np_rng.random((6, 6)) < 0.6
    allowed[np.arange(6), np_rng.integers(0, 6, 6)] = True
    mask = mask_from_allowed(allowed)
    np.testing.assert_allclose(masked_softmax(scores, mask), softmax_exp_sum(scores, mask), rtol=0, atol=1e-10)


def test_softmax_fully_masked_row_rejected():
    mask = np.zeros((2, 2))
    mask[1] = NEG_INF
    with pytest.raises(ValueError, match="fully masked"):
        masked_softmax(np.zeros((2, 2)), mask)


def test_softmax_large_scores_no_overflow():
    out = masked_softmax(np.array([[1e4, -1e4, 1e4 - 1]]))
    assert np.all(np.isfinite(out))
    assert out.sum() == pytest.approx(1.0)


def test_single_precision_softmax():
    out = masked_softmax(np.zeros((2, 4), dtype=dtype_for("single")))
    assert out.dtype == np.float32


row_scores = hnp.arrays(np.float64, (5, 7), elements=st.floats(-1e4, 1e4))
row_allowed = hnp.arrays(np.bool_, (5, 7))


@settings(max_examples=200, deadline=None)
@given(row_scores, row_allowed, st.floats(-1e3, 1e3))
def test_softmax_rows_are_distributions_and_shift_invariant(scores, allowed, c):
    allowed[:, 0] = True
    mask = mask_from_allowed(allowed)
    out = masked_softmax(scores, mask)
    assert np.all(out[~allowed] == 0.0)
    assert np.all(out >= 0)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(masked_softmax(scores + c, mask), out, atol=1e-10)
