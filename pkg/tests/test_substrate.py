import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vstab.errors import BadParameter, NotHermitian, NotPSD, SingularOperator
from vstab.substrate import (
    OperatorMatrix,
    Tolerances,
    hermitian_apply,
    loewner_leq,
    opnorm,
    orthonormality_defect,
    psd_apply,
    psd_sqrt,
    range_basis,
    range_membership,
    symmetrize,
)


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    a = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return a @ a.conj().T


@pytest.mark.parametrize("kw", [{"psd_tol": 0}, {"rank_tol": -1}, {"rank_tol": 1.0}, {"eig_tol": 0.0}])
def test_tolerances_reject_bad_values(kw):
    with pytest.raises(BadParameter):
        Tolerances(**kw)


def test_operator_matrix_caches_inverse_quantities():
    V = OperatorMatrix.from_array([[0.5, 1.0], [0.0, 2.0]])
    assert V.dim == 2
    assert np.allclose(V.inv @ V.entries, np.eye(2))
    assert np.allclose(V.inv_adjoint, np.linalg.inv(V.entries.conj().T))
    assert np.allclose(V.gram, V.H @ V.entries)
    assert np.allclose(V.inv_gram, V.inv @ V.inv.conj().T)
    assert V.norm == pytest.approx(np.linalg.norm(V.entries, 2))
    assert np.allclose(V.dual().entries, V.inv_adjoint)


def test_operator_matrix_is_read_only():
    V = OperatorMatrix.from_array(np.eye(3))
    with pytest.raises(ValueError):
        V.entries[0, 0] = 2.0


@pytest.mark.parametrize("a", [[[1.0, 2.0], [2.0, 4.0]], np.zeros((3, 3)), [[1.0, 0.0], [0.0, 1e-14]]])
def test_singular_rejected(a):
    with pytest.raises(SingularOperator):
        OperatorMatrix.from_array(a)


@pytest.mark.parametrize("a", [np.ones(3), np.ones((2, 3)), [[np.nan, 0], [0, 1]]])
def test_malformed_rejected(a):
    with pytest.raises(BadParameter):
        OperatorMatrix.from_array(a)


def test_scalar_promoted_to_1x1():
    V = OperatorMatrix.from_array(2.0)
    assert V.dim == 1 and V.entries[0, 0] == 2.0


def test_symmetrize_checks_hermitian_defect():
    with pytest.raises(NotHermitian):
        symmetrize([[1.0, 1.0], [0.0, 1.0]])
    s = symmetrize([[1.0, 1j], [-1j, 2.0]])
    assert np.allclose(s, s.conj().T)


def test_psd_apply_clips_dust_and_rejects_negative():
    a = np.diag([1.0, -1e-14])
    assert np.allclose(psd_apply(a, np.sqrt), np.diag([1.0, 0.0]))
    with pytest.raises(NotPSD):
        psd_apply(np.diag([1.0, -0.1]), np.sqrt)


def test_psd_sqrt_squares_back(rng):
    a = random_psd(rng, 5)
    r = psd_sqrt(a)
    assert opnorm(r @ r - a) <= 1e-12 * opnorm(a)


def test_hermitian_apply_matches_eig():
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(hermitian_apply(a, np.exp), np.array([[np.e ** 3 + np.e, np.e ** 3 - np.e],
                                                             [np.e ** 3 - np.e, np.e ** 3 + np.e]]) / 2)


def test_loewner_leq_margin():
    holds, margin = loewner_leq(np.eye(2), 2 * np.eye(2))
    assert holds and margin == pytest.approx(1.0)
    holds, margin = loewner_leq(2 * np.eye(2), np.eye(2))
    assert not holds and margin == pytest.approx(-1.0)


@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_loewner_order_adding_psd(n, seed):
    rng = np.random.default_rng(seed)
    a = random_psd(rng, n)
    b = a + random_psd(rng, n, rank=1)
    assert loewner_leq(a, b)[0]


def test_range_basis_and_membership():
    y = np.diag([3.0, 0.0])
    w, basis, kern = range_basis(y)
    assert w.tolist() == [3.0]
    assert orthonormality_defect(basis) < 1e-15
    assert kern.shape == (2, 1)
    member, c = range_membership(y, [1.0, 0.0])
    assert member and c == pytest.approx(1.0 / 3.0)
    member, c = range_membership(y, [1.0, 1.0])
    assert not member and c == np.inf


def test_range_membership_rejects_zero_vector():
    with pytest.raises(BadParameter):
        range_membership(np.eye(2), [0.0, 0.0])
