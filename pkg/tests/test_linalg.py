import numpy as np
import pytest
from hypothesis import given, strategies as st

from vmac.errors import FactorizationError
from vmac.linalg import cholesky, inverse, logdet, rank_one_accumulate

from conftest import det_cofactor


def test_logdet_identity_and_diag():
    assert logdet(np.eye(3)) == 0.0
    assert logdet(np.diag([2.0, 2.0])) == pytest.approx(2 * np.log(2), abs=1e-12)


def test_logdet_matches_cofactor_oracle():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    M = A.conj().T @ A + np.eye(4)
    oracle = np.log(np.real(det_cofactor(M)))
    assert logdet(M) == pytest.approx(oracle, abs=1e-10)


def test_logdet_batched():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((5, 3, 3))
    M = A @ np.swapaxes(A, -1, -2) + np.eye(3)
    got = logdet(M)
    assert got.shape == (5,)
    for k in range(5):
        assert got[k] == pytest.approx(np.log(det_cofactor(M[k])), abs=1e-10)


def test_cholesky_rejects_indefinite_with_pivot():
    M = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(FactorizationError) as exc:
        cholesky(M)
    assert exc.value.pivot == 1
    with pytest.raises(FactorizationError) as exc:
        logdet(np.diag([1.0, -1.0, 1.0]))
    assert exc.value.pivot == 1


def test_cholesky_batch_reports_index():
    M = np.stack([np.eye(2), np.array([[1.0, 0.0], [0.0, 0.0]])])
    with pytest.raises(FactorizationError) as exc:
        cholesky(M)
    assert exc.value.batch_index == 1


def test_cholesky_accepts_wide_dynamic_range():
    # diagonal spanning 20 decades is perfectly conditioned after scaling
    M = np.diag([1e-10, 1.0, 1e10])
    assert logdet(M) == pytest.approx(0.0, abs=1e-9)


def test_nonsquare_rejected():
    with pytest.raises(ValueError):
        logdet(np.ones((2, 3)))


def test_inverse_examples():
    assert np.allclose(inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]), atol=1e-15)
    assert np.allclose(inverse(np.eye(3)), np.eye(3))
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3))
    M = A @ A.T + np.eye(3)
    assert np.max(np.abs(M @ inverse(M) - np.eye(3))) < 1e-10


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_inverse_residual_property(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    M = A @ A.conj().T + 0.5 * np.eye(n)
    if np.linalg.cond(M) >= 1e8:
        return
    Mi = inverse(M)
    assert np.max(np.abs(M @ Mi - np.eye(n))) < 1e-10
    assert np.allclose(Mi, Mi.conj().T, atol=0)


def test_rank_one_examples():
    R = rank_one_accumulate([np.array([1.0, 0.0, 0.0])], [1.0])
    expect = np.zeros((3, 3))
    expect[0, 0] = 1
    assert np.array_equal(R, expect)
    assert np.array_equal(rank_one_accumulate([], [], dim=2), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        rank_one_accumulate([], [])


def test_rank_one_matches_entrywise_loop():
    rng = np.random.default_rng(11)
    v = [rng.standard_normal(3) + 1j * rng.standard_normal(3) for _ in range(2)]
    w = [0.7, 2.5]
    R = rank_one_accumulate(v, w)
    for a in range(3):
        for b in range(3):
            ref = sum(w[k] * v[k][a] * np.conj(v[k][b]) for k in range(2))
            assert R[a, b] == pytest.approx(ref, abs=1e-12)


def test_rank_one_errors():
    with pytest.raises(ValueError):
        rank_one_accumulate([np.ones(2), np.ones(3)], [1, 1])
    with pytest.raises(ValueError):
        rank_one_accumulate([np.ones(2)], [-1.0])
    with pytest.raises(ValueError):
        rank_one_accumulate(np.ones((2, 2)), [1.0])
