import numpy as np
import pytest

from vstab.errors import (
    BadParameter,
    HorizonTooShort,
    InconsistentVerdict,
    NotOrthonormal,
    ZeroRange,
)
from vstab.limits import limits
from vstab.oracle import generate_test_operator
from vstab.subspaces import (
    VectorVerdict,
    check_chains,
    classify_vector,
    contraction_witness,
    limit_range,
    orbit_log_norms,
    r0_identity_check,
    surinvariance_defect,
    surinvariance_passes,
    telescoping_defect,
    trichotomy,
)
from vstab.substrate import opnorm

NONNORMAL = np.array([[0.5, 1.0], [0.0, 2.0]])
JORDAN = np.array([[1.0, 1.0], [0.0, 1.0]])


@pytest.fixture(scope="module")
def nonnormal_bundle():
    return limits(NONNORMAL)


@pytest.fixture(scope="module")
def jordan_bundle():
    return limits(JORDAN)


def test_limit_range_drops_decaying_directions():
    last = np.diag([1e-3, 1.0])
    prev = np.diag([2e-3, 1.0])
    w, B = limit_range(last, prev, ratio=0.5)
    assert len(w) == 1 and abs(B[1, 0]) == pytest.approx(1.0)
    w, B = limit_range(np.zeros((2, 2)), np.zeros((2, 2)), ratio=0.5)
    assert B.shape == (2, 0)


@pytest.mark.parametrize("V,ranks", [
    (np.eye(3), (0, 3, 0)),
    (np.diag([0.5, 1.0, 2.0]), (1, 1, 1)),
    (NONNORMAL, (1, 0, 1)),
    (JORDAN, (0, 2, 0)),
])
def test_trichotomy_ranks(V, ranks):
    tri = trichotomy(limits(V))
    assert tri.ranks == ranks and tri.dim == V.shape[0]
    B = np.hstack([tri.basis_lt, tri.basis_eq, tri.basis_gt])
    assert opnorm(B.conj().T @ B - np.eye(V.shape[0])) <= 1e-8


def test_greater_component_uses_left_eigenvectors(nonnormal_bundle):
    tri = trichotomy(nonnormal_bundle)
    # H_> is the eigenvector of V* for 2, i.e. the left eigenvector e2
    assert abs(tri.basis_gt[1, 0]) == pytest.approx(1.0, abs=1e-8)
    # the right eigenvector for 2 is not orthogonal to H_<, so it cannot span H_>
    w, R = np.linalg.eig(NONNORMAL)
    right = R[:, np.argmax(np.abs(w))]
    assert abs(np.vdot(tri.basis_lt[:, 0], right)) > 0.5


@pytest.mark.parametrize("seed", range(4))
def test_surinvariance_dichotomous(seed):
    V = generate_test_operator("dichotomous", 6, seed, gap=0.1)
    tri = trichotomy(limits(V))
    assert surinvariance_passes(V, tri.basis_lt, "V")
    assert surinvariance_passes(V, tri.basis_gt, "V_star_inv")
    assert surinvariance_defect(V, tri.basis_eq) == 0.0


def test_surinvariance_rejects_bad_input():
    with pytest.raises(NotOrthonormal):
        surinvariance_defect(np.eye(2), np.array([[1.0], [1.0]]))
    with pytest.raises(BadParameter):
        surinvariance_defect(np.eye(2), np.eye(2)[:, :1], mode="W")
    # a non-invariant subspace is detected
    assert surinvariance_defect(NONNORMAL, np.array([0.0, 1.0])) > 0.5


def test_orbit_log_norms():
    logs = orbit_log_norms(np.diag([0.5, 2.0]), np.array([0.0, 1.0]), 10)
    assert np.allclose(logs, np.arange(11) * np.log(2.0))


@pytest.mark.parametrize("x,expected", [
    (np.array([1.0, 0.0]), dict(l2_member=True, stab0=True, stab=True, finq=True, kerq0=True)),
    (np.array([0.0, 1.0]), dict(l2_member=False, stab0=False, stab=False, finq=False, kerq0=False)),
])
def test_classify_nonnormal(nonnormal_bundle, x, expected):
    v = classify_vector(NONNORMAL, x, nonnormal_bundle)
    for k, val in expected.items():
        assert getattr(v, k) is val, k


def test_classify_c_min(nonnormal_bundle):
    # e1 = Y0 (e1/3) with <e1/3, Y0 e1/3> = 1/3
    v = classify_vector(NONNORMAL, [1.0, 0.0], nonnormal_bundle)
    assert v.c_min == pytest.approx(1 / 3, rel=1e-5)
    assert v.growth_exponent == pytest.approx(0.5, rel=1e-6)


def test_classify_jordan(jordan_bundle):
    e1 = classify_vector(JORDAN, [1.0, 0.0], jordan_bundle)
    assert (e1.l2_member, e1.stab, e1.finq, e1.kerq0) == (False, True, True, True)
    e2 = classify_vector(JORDAN, [0.0, 1.0], jordan_bundle)
    assert (e2.stab, e2.stab0, e2.finq) == (False, False, False)


def test_classify_arguments(nonnormal_bundle):
    with pytest.raises(HorizonTooShort):
        classify_vector(NONNORMAL, [1.0, 0.0], nonnormal_bundle, horizon=8)
    with pytest.raises(BadParameter):
        classify_vector(NONNORMAL, [0.0, 0.0], nonnormal_bundle)
    with pytest.raises(BadParameter):
        classify_vector(NONNORMAL, [1.0, 0.0, 0.0], nonnormal_bundle)


def test_check_chains_raises_with_evidence():
    v = VectorVerdict(True, 1.0, False, True, True, True, 1.0, 64)
    with pytest.raises(InconsistentVerdict) as info:
        check_chains(v)
    assert "l2 => Stab0" in info.value.evidence["broken"]
    check_chains(VectorVerdict(None, np.inf, None, None, None, None, 1.0, 64))


@pytest.mark.parametrize("seed", range(3))
def test_contraction_witness(seed):
    V = generate_test_operator("dichotomous", 6, seed, gap=0.1)
    b = limits(V)
    tri = trichotomy(b)
    wit = contraction_witness(V, b.Y0, tri.basis_lt)
    assert wit.passed and wit.norm_W <= 1 + 1e-8
    assert telescoping_defect(V, wit) <= 1e-8


def test_telescoping_needs_adjoint_powers():
    # the identity holds for powers of W*, not of W
    V = generate_test_operator("dichotomous", 6, 0, gap=0.1)
    b = limits(V)
    wit = contraction_witness(V, b.Y0, trichotomy(b).basis_lt)
    assert telescoping_defect(V, wit, adjoint_powers=False) > 1e-3


def test_witness_zero_range():
    with pytest.raises(ZeroRange):
        contraction_witness(np.diag([2.0, 3.0]), np.zeros((2, 2)))


def test_r0_identity(nonnormal_bundle):
    chk = r0_identity_check(nonnormal_bundle, trichotomy(nonnormal_bundle))
    assert chk.passed and all(chk.chain_report.values())
