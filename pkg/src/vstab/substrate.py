"""Dense Hermitian primitives and Loewner-order predicates.

Everything downstream (the fixed-point solver, the limit extraction, the
subspace bookkeeping) is written in terms of the handful of functions here:
eigendecompositions of Hermitian matrices, functions of Hermitian matrices,
square roots of PSD matrices, signed Loewner comparisons and range tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BadParameter, NoConvergence, NotHermitian, NotPSD, SingularOperator


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds used for every comparison in the package.

    Parameters
    ----------
    eig_tol : float
        Allowed Hermitian defect / reconstruction residual, relative to the
        matrix norm.
    psd_tol : float
        Allowed negative eigenvalue in Loewner checks, relative to the
        scale of the operands (never below 1).
    rank_tol : float
        Relative eigenvalue cutoff below which a direction counts as kernel.
    singularity_floor : float
        Smallest admissible reciprocal condition number for an operator.
    """

    eig_tol: float = 1e-10
    psd_tol: float = 1e-9
    rank_tol: float = 1e-8
    singularity_floor: float = 1e-12

    def __post_init__(self):
        for name in ("eig_tol", "psd_tol", "rank_tol", "singularity_floor"):
            if not getattr(self, name) > 0:
                raise BadParameter(f"{name} must be strictly positive")
        if not self.rank_tol < 1:
            raise BadParameter("rank_tol must be < 1")


DEFAULT_TOL = Tolerances()


def opnorm(a) -> float:
    """Spectral norm (largest singular value)."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    if a.ndim == 1:
        return float(np.linalg.norm(a))
    return float(np.linalg.norm(a, 2))


def adjoint(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hermitian_part(a):
    return 0.5 * (a + adjoint(a))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """A square complex matrix certified invertible at construction."""

    entries: np.ndarray
    inv_cond_estimate: float
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False)

    @classmethod
    def from_array(cls, a, tol: Tolerances = DEFAULT_TOL) -> "OperatorMatrix":
        arr = np.array(a, dtype=np.complex128, copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise BadParameter(f"operator must be a nonempty square matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise BadParameter("operator entries must be finite")
        sv = np.linalg.svd(arr, compute_uv=False)
        rcond = float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
        if not rcond > tol.singularity_floor:
            raise SingularOperator(
                f"reciprocal condition {rcond:.3e} is below the singularity floor "
                f"{tol.singularity_floor:.1e}")
        arr.setflags(write=False)
        return cls(arr, rcond, tol)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def H(self):
        return adjoint(self.entries)

    @cached_property
    def inv(self):
        out = np.linalg.inv(self.entries)
        out.setflags(write=False)
        return out

    @cached_property
    def inv_adjoint(self):
        """(V*)^{-1}, the operator whose equation is dual to V's."""
        out = adjoint(self.inv).copy()
        out.setflags(write=False)
        return out

    @cached_property
    def gram(self):
        """V*V."""
        out = hermitian_part(self.H @ self.entries)
        out.setflags(write=False)
        return out

    @cached_property
    def inv_gram(self):
        """V^{-1}(V^{-1})*."""
        out = hermitian_part(self.inv @ adjoint(self.inv))
        out.setflags(write=False)
        return out

    @cached_property
    def norm(self) -> float:
        return opnorm(self.entries)

    @cached_property
    def inv_norm(self) -> float:
        return opnorm(self.inv)

    def dual(self) -> "OperatorMatrix":
        """The operator (V*)^{-1}."""
        return OperatorMatrix.from_array(self.inv_adjoint, self.tol)


def as_operator(v, tol: Tolerances = DEFAULT_TOL) -> OperatorMatrix:
    if isinstance(v, OperatorMatrix):
        return v
    return OperatorMatrix.from_array(v, tol)


def _check_square(a):
    a = np.asarray(a)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise BadParameter(f"expected a square matrix, got shape {a.shape}")
    return a


def symmetrize(a, tol: Tolerances = DEFAULT_TOL):
    """Return (A + A*)/2 after checking A is Hermitian within eig_tol.

    The defect is measured in the Frobenius norm, which is cheap and bounds
    the spectral norm from above.
    """
    a = _check_square(a)
    scale = np.linalg.norm(a)
    defect = np.linalg.norm(a - adjoint(a))
    if defect > tol.eig_tol * max(scale, np.finfo(float).tiny):
        if scale > 0 or defect > 0:
            raise NotHermitian(f"Hermitian defect {defect:.3e} exceeds {tol.eig_tol:.1e}*{scale:.3e}")
    return hermitian_part(a)


def hermitian_eig(a, tol: Tolerances = DEFAULT_TOL):
    """Eigendecomposition of a Hermitian matrix.

    Returns
    -------
    eigenvalues : ndarray
        Real, ascending.
    basis : ndarray
        Unitary matrix whose columns are the matching eigenvectors.
    """
    h = symmetrize(a, tol)
    try:
        w, u = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"Hermitian eigensolver failed: {exc}") from exc
    return w, u


def hermitian_apply(a, fn, tol: Tolerances = DEFAULT_TOL):
    """Evaluate fn(A) for Hermitian A through its eigendecomposition."""
    w, u = hermitian_eig(a, tol)
    return hermitian_part((u * fn(w)) @ adjoint(u))


def _psd_eigs(a, tol: Tolerances):
    w, u = hermitian_eig(a, tol)
    scale = max(abs(w[0]), abs(w[-1])) if w.size else 0.0
    if w.size and w[0] < -tol.psd_tol * scale:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} below -{tol.psd_tol:.1e}*{scale:.3e}")
    return np.clip(w, 0.0, None), u


def psd_apply(a, fn, tol: Tolerances = DEFAULT_TOL):
    """fn(A) for PSD A; negative rounding dust is clipped to zero first."""
    w, u = _psd_eigs(a, tol)
    return hermitian_part((u * fn(w)) @ adjoint(u))


def psd_sqrt(a, tol: Tolerances = DEFAULT_TOL):
    return psd_apply(a, np.sqrt, tol)


def lambda_min(a) -> float:
    return float(np.linalg.eigvalsh(hermitian_part(_check_square(a)))[0])


def lambda_max(a) -> float:
    return float(np.linalg.eigvalsh(hermitian_part(_check_square(a)))[-1])


def loewner_leq(a, b, tol: Tolerances = DEFAULT_TOL):
    """Test A <= B in the Loewner order.

    Returns
    -------
    holds : bool
    margin : float
        lambda_min(B - A); negative values quantify the violation.
    """
    a = symmetrize(a, tol)
    b = symmetrize(b, tol)
    margin = lambda_min(b - a)
    scale = max(opnorm(a), opnorm(b), 1.0)
    return bool(margin >= -tol.psd_tol * scale), margin


def range_basis(a, tol: Tolerances = DEFAULT_TOL, rank_tol=None):
    """Orthonormal basis of the numerical range of a PSD matrix.

    Eigenvalues at or below ``rank_tol * lambda_max`` count as zero.
    Returns (eigenvalues kept, basis columns, kernel basis columns).
    """
    rt = tol.rank_tol if rank_tol is None else rank_tol
    w, u = _psd_eigs(a, tol)
    top = w[-1] if w.size else 0.0
    keep = w > rt * top if top > 0 else np.zeros(w.shape, bool)
    return w[keep], u[:, keep], u[:, ~keep]


def range_membership(y, x, tol: Tolerances = DEFAULT_TOL, member_tol=None):
    """Decide whether x lies in Ran Y^{1/2} (finite-dimensional: Ran Y).

    ``x`` is split against the thresholded eigenspaces of ``Y``; x is a
    member when its kernel component is at most ``member_tol * ||x||``
    (default ``rank_tol``).  For members ``c_min = x* Y^+ x`` is the least
    c with x x* <= c Y.

    Returns
    -------
    member : bool
    c_min : float
        ``inf`` for non-members.
    """
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    nx = np.linalg.norm(x)
    if nx == 0:
        raise BadParameter("x must be nonzero")
    mt = tol.rank_tol if member_tol is None else member_tol
    w, basis, kern = range_basis(y, tol)
    x_ker = adjoint(kern) @ x if kern.size else np.zeros(0)
    if np.linalg.norm(x_ker) > mt * nx:
        return False, float("inf")
    coeff = adjoint(basis) @ x
    c_min = float(np.sum(np.abs(coeff) ** 2 / w)) if w.size else 0.0
    return True, c_min


def orthonormality_defect(b) -> float:
    b = np.asarray(b)
    if b.shape[1] == 0:
        return 0.0
    return opnorm(adjoint(b) @ b - np.eye(b.shape[1]))
