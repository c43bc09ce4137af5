"""Independent ground truth: closed forms for normal V, spectral projectors,
the unitary-similarity verdict, and seeded test-operator generators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import BadParameter, GapTooSmall, InsufficientSamples, NotNormal
from .limits import LimitBundle
from .substrate import (
    DEFAULT_TOL,
    OperatorMatrix,
    Tolerances,
    adjoint,
    as_operator,
    hermitian_eig,
    hermitian_part,
    opnorm,
)

GAP_FLOOR = 0.05
DIVERGENCE_FACTOR = 1e6


def _require_normal(V: OperatorMatrix):
    A = V.entries
    defect = opnorm(adjoint(A) @ A - A @ adjoint(A))
    if defect > 1e-10 * max(V.norm ** 2, 1.0):
        raise NotNormal(f"||V*V - VV*|| = {defect:.3e}")


def closed_form_eigs(a, t):
    """Scalar closed form of Q_t on the eigenvalue a of V*V.

    q = (-(1-a)/2 + sqrt(((1-a)/2)^2 + t^2 a)) / t, rewritten without
    cancellation when a < 1.
    """
    a = np.asarray(a, dtype=float)
    b = 0.5 * (1.0 - a)
    root = np.sqrt(b * b + t * t * a)
    return np.where(b > 0, t * a / (root + np.abs(b)), (root - b) / t)


def normal_closed_form(V, t, tol: Tolerances = DEFAULT_TOL):
    """Q_t for normal V, evaluated as a function of A = V*V."""
    if not (0 < t <= 1):
        raise BadParameter(f"t must lie in (0, 1], got {t}")
    V = as_operator(V, tol)
    _require_normal(V)
    w, u = hermitian_eig(V.gram, tol)
    return hermitian_part((u * closed_form_eigs(w, t)) @ adjoint(u))


def normal_limits(V, tol: Tolerances = DEFAULT_TOL):
    """(X0, Y0, R0) for normal V from the spectral split of V*V.

    Eigenvalues a of V*V with |a - 1| <= rank_tol form the unit block,
    where R0 takes the value 1/2.
    """
    V = as_operator(V, tol)
    _require_normal(V)
    a, u = hermitian_eig(V.gram, tol)
    unit = np.abs(a - 1.0) <= tol.rank_tol
    inside = (a < 1.0) & ~unit
    outside = (a > 1.0) & ~unit
    x = np.where(outside, a - 1.0, 0.0)
    y = np.where(inside, 1.0 / a - 1.0, 0.0)
    r = np.where(inside, 1.0, np.where(unit, 0.5, 0.0))

    def build(d):
        return hermitian_part((u * d) @ adjoint(u))

    return build(x), build(y), build(r)


@dataclass(frozen=True)
class SpectralSplit:
    """Orthoprojector onto the invariant subspace of |lambda| < 1."""

    P_in: np.ndarray
    gap: float
    dims: tuple  # (inside, on_circle, outside)
    basis: np.ndarray


def inside_spectral_projector(V, circle_tol: float = 1e-10,
                              tol: Tolerances = DEFAULT_TOL) -> SpectralSplit:
    """Ordered complex Schur form with the inside-disc eigenvalues leading."""
    V = as_operator(V, tol)
    T, Z, sdim = scipy.linalg.schur(V.entries, output="complex", sort="iuc")
    lam = np.diag(T)
    dist = np.abs(lam) - 1.0
    on = np.abs(dist) <= circle_tol
    B = Z[:, :sdim]
    P = hermitian_part(B @ adjoint(B))
    inside = int(np.sum((dist < 0) & ~on))
    outside = int(np.sum((dist > 0) & ~on))
    return SpectralSplit(P_in=P, gap=float(np.min(np.abs(dist))),
                         dims=(inside, int(np.sum(on)), outside), basis=B)


@dataclass(frozen=True)
class DichotomyResult:
    distance: float          # ||R0 - P_in||
    trace: tuple             # ||(I - R_t) P_in|| along the sweep
    trace_final: float
    trace_decreasing: bool
    passed: bool


def dichotomy_compare(bundle: LimitBundle, split: SpectralSplit, gap_floor: float = GAP_FLOOR,
                      distance_tol: float = 1e-4, trace_tol: float = 1e-4,
                      tail: int = 4) -> DichotomyResult:
    """Compare R0 with the inside-disc orthoprojector.

    The trace of ||(I - R_t) P_in|| must decrease to ``trace_tol``: the
    last ``tail`` entries up to its first value below ``trace_tol`` are
    non-increasing, and no later entry leaves that level again.  Below it
    the trace sits at the roundoff floor of R_t (about 1e-6 near
    t = 1e-8) and is not required to keep decreasing.  A trace that never
    reaches ``trace_tol`` is judged on its last ``tail`` entries.
    """
    if split.gap < gap_floor:
        raise GapTooSmall(f"spectral gap {split.gap:.3e} below floor {gap_floor}")
    n = split.P_in.shape[0]
    eye = np.eye(n)
    dist = opnorm(bundle.R0 - split.P_in)
    trace = tuple(opnorm((eye - s.R) @ split.P_in) for s in bundle.samples)
    below = [i for i, v in enumerate(trace) if v <= trace_tol]
    end = below[0] if below else len(trace) - 1
    approach = trace[max(0, end - tail + 1):end + 1]
    decreasing = (all(b <= a for a, b in zip(approach, approach[1:]))
                  and all(v <= trace_tol for v in trace[end + 1:]))
    final = trace[-1]
    ok = dist <= distance_tol and decreasing and final <= trace_tol
    return DichotomyResult(dist, trace, final, decreasing, bool(ok))


@dataclass(frozen=True)
class SimilarityVerdict:
    similar: bool | None
    M_est: float
    per_sample: tuple   # max(lambda_max(Q_t), 1/lambda_min(Q_t)) per sample
    growth: float       # max per-sample bound / first per-sample bound
    trend_power: float  # p in per-sample bound ~ t**(-p) over the last samples


def unitary_similarity_verdict(samples, stagnation: float = 1e-3,
                               divergence_factor: float = DIVERGENCE_FACTOR,
                               trend_window: int = 4, divergence_power: float = 0.25
                               ) -> SimilarityVerdict:
    """Tri-state verdict on similarity to a unitary from the Q_t bounds.

    ``similar`` is True when the per-sample bound has stopped growing over
    the last two samples (ratio <= 1 + stagnation).  It is False when the
    bound grew by more than ``divergence_factor`` across the sweep, or when
    it still grows like t**(-p) with p >= ``divergence_power`` over the
    last ``trend_window`` samples (a sweep that stops early on stagnating
    limits does not get to accumulate the full factor).  Otherwise None.
    """
    samples = list(getattr(samples, "samples", samples))
    if len(samples) < 3:
        raise InsufficientSamples("need at least 3 samples")
    ts = [s.t for s in samples]
    if max(ts) / min(ts) < 100:
        raise InsufficientSamples("samples must span at least two decades of t")
    per = []
    for s in samples:
        w = np.linalg.eigvalsh(s.Q)
        qinv_max = np.linalg.eigvalsh(s.Qinv)[-1]
        per.append(float(max(w[-1], qinv_max)))
    M = max(per)
    growth = max(per) / per[0]
    k = min(trend_window, len(per))
    lt = np.log(ts[-k:])
    lp = np.log(per[-k:])
    ltc = lt - lt.mean()
    power = float(-np.dot(ltc, lp - lp.mean()) / np.dot(ltc, ltc))
    if per[-1] <= per[-2] * (1.0 + stagnation):
        verdict = True
    elif growth > divergence_factor or power >= divergence_power:
        verdict = False
    else:
        verdict = None
    return SimilarityVerdict(verdict, M, tuple(per), growth, power)


# -- generators ---------------------------------------------------------------

KINDS = ("normal", "unitary_similar", "dichotomous", "jordan_unit", "random_invertible")


def _haar_unitary(rng, n):
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def _phases(rng, n):
    return np.exp(2j * np.pi * rng.random(n))


def _sample_moduli(rng, n, lo, hi, exclude):
    out = np.empty(n)
    for i in range(n):
        while True:
            m = np.exp(rng.uniform(np.log(lo), np.log(hi)))
            if exclude is None or not (exclude[0] < m < exclude[1]):
                out[i] = m
                break
    return out


def eigenbasis_condition(V) -> float:
    _, E = np.linalg.eig(np.asarray(V))
    E = E / np.linalg.norm(E, axis=0)
    return float(np.linalg.cond(E))


def generate_test_operator(kind: str, dim: int, seed: int = 0, tol: Tolerances = DEFAULT_TOL,
                           **params) -> OperatorMatrix:
    """Deterministic test operators.

    kinds and their parameters:

    ``normal``
        U diag(lambda) U*; ``moduli=(0.2, 5)``, ``exclude=(0.95, 1.05)``
        (moduli band to avoid, or None), ``unit_count=0`` planted
        eigenvalues of modulus exactly 1.
    ``unitary_similar``
        S U S^{-1} with U Haar unitary; ``cond=10`` is cond(S).
    ``dichotomous``
        Z T Z* with T upper triangular, |diag| outside [1-gap, 1+gap];
        ``gap=0.3``, ``moduli=(0.2, 3)``, ``offdiag=0.5`` scale of the
        strict upper part (halved until the eigenbasis condition is at
        most ``max_eig_cond=100``), ``rotate=True``.
    ``jordan_unit``
        Jordan blocks with unit-modulus eigenvalues; ``blocks=1``; with a
        single block the eigenvalue is 1.
    ``random_invertible``
        complex Gaussian / sqrt(2 dim) times ``scale=1``.
    """
    if kind not in KINDS:
        raise BadParameter(f"unknown kind {kind!r}; expected one of {KINDS}")
    if dim < 1:
        raise BadParameter("dim must be >= 1")
    rng = np.random.default_rng(seed)
    n = dim

    if kind == "normal":
        lo, hi = params.get("moduli", (0.2, 5.0))
        exclude = params.get("exclude", (0.95, 1.05))
        unit = int(params.get("unit_count", 0))
        if not 0 <= unit <= n:
            raise BadParameter("unit_count out of range")
        mods = np.concatenate([np.ones(unit), _sample_moduli(rng, n - unit, lo, hi, exclude)])
        U = _haar_unitary(rng, n)
        V = (U * (mods * _phases(rng, n))) @ adjoint(U)

    elif kind == "unitary_similar":
        cond = float(params.get("cond", 10.0))
        if cond < 1:
            raise BadParameter("cond must be >= 1")
        A = _haar_unitary(rng, n)
        B = _haar_unitary(rng, n)
        s = np.geomspace(1.0, cond, n) if n > 1 else np.ones(1)
        S = (A * s) @ B
        U = _haar_unitary(rng, n)
        V = S @ U @ np.linalg.inv(S)

    elif kind == "dichotomous":
        gap = float(params.get("gap", 0.3))
        lo, hi = params.get("moduli", (0.2, 3.0))
        scale = float(params.get("offdiag", 0.5))
        max_cond = float(params.get("max_eig_cond", 100.0))
        if not (0 < gap < 1 and lo < 1 - gap and hi > 1 + gap):
            raise BadParameter("moduli range must straddle the excluded annulus")
        inside = rng.random(n) < 0.5
        mods = np.where(inside, rng.uniform(lo, 1 - gap, n), rng.uniform(1 + gap, hi, n))
        lam = mods * _phases(rng, n)
        N = np.triu(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), 1) / np.sqrt(2)
        Z = _haar_unitary(rng, n) if params.get("rotate", True) else np.eye(n)
        for _ in range(60):
            T = np.diag(lam) + scale * N
            if n == 1 or eigenbasis_condition(T) <= max_cond:
                break
            scale *= 0.5
        V = Z @ T @ adjoint(Z)

    elif kind == "jordan_unit":
        blocks = int(params.get("blocks", 1))
        if not 1 <= blocks <= n:
            raise BadParameter("blocks must lie in [1, dim]")
        sizes = np.full(blocks, n // blocks)
        sizes[: n % blocks] += 1
        lam = np.ones(blocks, complex) if blocks == 1 else _phases(rng, blocks)
        V = np.zeros((n, n), complex)
        i = 0
        for sz, l in zip(sizes, lam):
            V[i:i + sz, i:i + sz] = l * np.eye(sz) + np.eye(sz, k=1)
            i += sz

    else:  # random_invertible
        scale = float(params.get("scale", 1.0))
        V = scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)

    return OperatorMatrix.from_array(V, tol)
