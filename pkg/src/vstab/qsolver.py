"""Fixed-t solver for Q = V*(Q + t)(I + tQ)^{-1} V and its derived operators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import BadParameter, BracketMismatch, NoConvergence
from .substrate import (
    DEFAULT_TOL,
    OperatorMatrix,
    Tolerances,
    adjoint,
    as_operator,
    hermitian_part,
    lambda_max,
    lambda_min,
    opnorm,
    psd_apply,
)

ACCELERATIONS = ("plain", "averaged")
STARTS = ("lower", "upper", "both")


@dataclass(frozen=True)
class SolveConfig:
    """Settings for a single solve at parameter ``t``.

    ``max_iter`` is additionally capped at ``ceil(iter_scale / t)``: the
    iteration contracts at a rate close to 1 - O(t) near unit-circle
    spectrum, so the budget has to grow as t shrinks, but not beyond
    ``max_iter``.

    ``acceleration="averaged"`` (the default) halves a step whose change
    grew over the previous one, which damps the oscillation that roundoff
    and complex-pair modes cause near convergence; ``"plain"`` iterates the
    map unmodified.
    """

    t: float = 1.0
    fp_tol: float = 1e-11
    max_iter: int = 100_000
    acceleration: str = "averaged"
    start: str = "lower"
    iter_scale: float = 1000.0
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        if not (0 < self.t <= 1):
            raise BadParameter(f"t must lie in (0, 1], got {self.t}")
        if not self.fp_tol > 0:
            raise BadParameter("fp_tol must be positive")
        if self.max_iter < 1:
            raise BadParameter("max_iter must be positive")
        if self.acceleration not in ACCELERATIONS:
            raise BadParameter(f"acceleration must be one of {ACCELERATIONS}")
        if self.start not in STARTS:
            raise BadParameter(f"start must be one of {STARTS}")

    @property
    def iteration_budget(self) -> int:
        return int(min(self.max_iter, math.ceil(self.iter_scale / self.t)))

    def at(self, t: float) -> "SolveConfig":
        return replace(self, t=t)


@dataclass(frozen=True, eq=False)
class QSample:
    """Solution of the t-equation together with its derived operators.

    Attributes
    ----------
    Q : the solution Q_t.
    Qinv : Q_t^{-1}, obtained by solving the dual equation for (V*)^{-1}.
    X, Y : t Q_t and t Q_t^{-1}.
    R : (I + Q_t)^{-1}.
    J : the gauge (I + Y)^{1/2} (I + X)^{-1/2}, symmetrized.
    residual : ||Q - Phi_t(Q)|| / ||Q|| in the spectral norm.
    bracket_gap : ||Q_upper - Q_lower|| / ||Q|| when both starts were run.
    """

    t: float
    Q: np.ndarray
    Qinv: np.ndarray
    residual: float
    dual_residual: float
    iterations: int
    dual_iterations: int
    X: np.ndarray
    Y: np.ndarray
    R: np.ndarray
    J: np.ndarray
    bracket_gap: float | None = None

    @property
    def q_eigs(self):
        return np.linalg.eigvalsh(self.Q)


def _check_t(t):
    if not (0 < t <= 1):
        raise BadParameter(f"t must lie in (0, 1], got {t}")


def mobius_psd(Q, t, tol: Tolerances = DEFAULT_TOL):
    """(Q + tI)(I + tQ)^{-1} as a function of the PSD matrix Q."""
    return psd_apply(Q, lambda q: (q + t) / (1.0 + t * q), tol)


def phi_map(V, Q, t, tol: Tolerances = DEFAULT_TOL):
    """Phi_t(Q) = V*(Q + tI)(I + tQ)^{-1}V, symmetrized."""
    _check_t(t)
    V = as_operator(V, tol)
    F = mobius_psd(np.asarray(Q, dtype=np.complex128), t, tol)
    return hermitian_part(V.H @ F @ V.entries)


def fixed_point_residual(V, Q, t, tol: Tolerances = DEFAULT_TOL) -> float:
    return opnorm(Q - phi_map(V, Q, t, tol)) / max(opnorm(Q), np.finfo(float).tiny)


def _iterate(M, Q0, cfg: SolveConfig, label: str):
    t = cfg.t
    Q, its, status, trace = kernels.congruence_iterate(
        M, Q0, 1.0, t, t, 1.0, cfg.fp_tol, cfg.iteration_budget,
        relative=True, rate_aware=True, averaged=cfg.acceleration == "averaged")
    if status != kernels.CONVERGED:
        what = "eigensolver failure" if status == kernels.EIG_FAILED else "iteration budget exhausted"
        last = float(trace[-1]) if trace.size else float("nan")
        raise NoConvergence(
            f"{label} solve at t={t:.3e}: {what} after {its} iterations (last change {last:.3e})",
            t=t, iterations=its, residual=last, trace=trace, partial=Q)
    return Q, its


def _gauge(X, Y, tol):
    up = psd_apply(Y, lambda y: np.sqrt(1.0 + y), tol)
    down = psd_apply(X, lambda x: 1.0 / np.sqrt(1.0 + x), tol)
    return hermitian_part(up @ down)


def solve_qt(V, cfg: SolveConfig, warm=None, warm_dual=None) -> QSample:
    """Solve the t-equation for V by fixed-point iteration.

    The lower start is t V*V, the upper start V*V / t; ``warm`` replaces
    the lower start (used along a decreasing t-sweep).  With
    ``cfg.start == "both"`` the two bracketing starts are run separately
    and their disagreement is reported as ``bracket_gap``.

    Q_t^{-1} is obtained from the equation for (V*)^{-1}, whose solution
    equals Q_t(V)^{-1}; this keeps Y_t = t Q_t^{-1} accurate when Q_t is
    badly conditioned (small t).

    Raises
    ------
    NoConvergence
        Iteration budget exhausted (the trace is attached).
    BracketMismatch
        Upper- and lower-start iterations disagree by more than 10 fp_tol.
    """
    V = as_operator(V, cfg.tol)
    t = cfg.t
    tol = cfg.tol
    lower = t * V.gram
    upper = V.gram / t

    gap = None
    if cfg.start == "upper":
        Q, its = _iterate(V.entries, upper if warm is None else warm, cfg, "upper-start")
    else:
        Q, its = _iterate(V.entries, lower if warm is None else warm, cfg, "lower-start")
        if cfg.start == "both":
            Qu, its_u = _iterate(V.entries, upper, cfg, "upper-start")
            gap = opnorm(Qu - Q) / opnorm(Q)
            its += its_u
            if gap > 10 * cfg.fp_tol:
                raise BracketMismatch(
                    f"upper/lower starts disagree by {gap:.3e} at t={t:.3e} "
                    f"(allowed {10 * cfg.fp_tol:.1e})")

    W = V.inv_adjoint
    dual_start = t * V.inv_gram if warm_dual is None else warm_dual
    Qd, its_d = _iterate(W, dual_start, cfg, "dual")

    residual = fixed_point_residual(V, Q, t, tol)
    dual_residual = opnorm(Qd - hermitian_part(adjoint(W) @ mobius_psd(Qd, t, tol) @ W)) / opnorm(Qd)

    X = t * Q
    Y = t * Qd
    R = psd_apply(Q, lambda q: 1.0 / (1.0 + q), tol)
    J = _gauge(X, Y, tol)
    return QSample(t=t, Q=Q, Qinv=Qd, residual=residual, dual_residual=dual_residual,
                   iterations=its, dual_iterations=its_d, X=X, Y=Y, R=R, J=J,
                   bracket_gap=gap)


@dataclass(frozen=True)
class BracketCertificate:
    """Loewner margins of the order bracket around Q_t and Q_t^{-1}."""

    q_lower: float      # lambda_min(Q - t V*V)
    q_upper: float      # lambda_min(V*V/t - Q)
    qinv_lower: float   # lambda_min(Q^{-1} - t V^{-1}V^{-1*})
    qinv_upper: float   # lambda_min(V^{-1}V^{-1*}/t - Q^{-1})
    threshold: float
    passed: bool

    @property
    def margins(self):
        return (self.q_lower, self.q_upper, self.qinv_lower, self.qinv_upper)


def verify_bracket(V, s: QSample, tol: Tolerances = DEFAULT_TOL) -> BracketCertificate:
    V = as_operator(V, tol)
    t = s.t
    m = (
        lambda_min(s.Q - t * V.gram),
        lambda_min(V.gram / t - s.Q),
        lambda_min(s.Qinv - t * V.inv_gram),
        lambda_min(V.inv_gram / t - s.Qinv),
    )
    threshold = -tol.psd_tol * V.norm ** 2
    return BracketCertificate(*m, threshold=threshold, passed=all(x >= threshold for x in m))


@dataclass(frozen=True)
class GaugeCheck:
    identity_residual: float
    lower: float
    upper: float
    bound_lower: float
    bound_upper: float
    passed: bool


def gauge_check(V, s: QSample, fp_tol: float = 1e-11,
                tol: Tolerances = DEFAULT_TOL) -> GaugeCheck:
    """Check (J V)* Q (J V) = Q and the spectral bounds on J."""
    V = as_operator(V, tol)
    JV = s.J @ V.entries
    ident = opnorm(adjoint(JV) @ s.Q @ JV - s.Q) / opnorm(s.Q)
    w = np.linalg.eigvalsh(s.J)
    lo, hi = float(w[0]), float(w[-1])
    b_lo = (1.0 + V.norm ** 2) ** -0.5
    b_hi = (1.0 + V.inv_norm ** 2) ** 0.5
    ok = (ident <= 100 * fp_tol and lo >= b_lo - tol.psd_tol and hi <= b_hi + tol.psd_tol)
    return GaugeCheck(ident, lo, hi, b_lo, b_hi, bool(ok))


def inverse_duality_check(V, t, cfg: SolveConfig | None = None) -> float:
    """||Q_t((V*)^{-1}) Q_t(V) - I|| from two independent solves."""
    cfg = (cfg or SolveConfig()).at(t)
    V = as_operator(V, cfg.tol)
    Qa, _ = _iterate(V.entries, t * V.gram, cfg, "primal")
    W = V.inv_adjoint
    Qb, _ = _iterate(W, t * V.inv_gram, cfg, "dual")
    return opnorm(Qb @ Qa - np.eye(V.dim))


@dataclass(frozen=True)
class SampleIdentities:
    """Algebraic identities every solved sample must satisfy.

    All entries are residual norms except ``r_min``/``r_max`` (spectrum of
    R) and ``q_floor_margin``/``z_margin`` (signed Loewner margins).
    """

    xy: float              # ||XY - t^2 I||
    yx: float              # ||YX - t^2 I||
    rx: float              # ||RX - t(I - R)||
    y_one_minus_r: float   # ||Y(I - R) - t(I + Q)^{-1}||
    r_min: float
    r_max: float
    q_floor_margin: float  # lambda_min(Q) - t lambda_min(V*V)
    z_margin: float        # lambda_min(V*(zQ + (1-z)I)V - Q), z = (1-t)/(1+t)


def sample_identities(V, s: QSample, tol: Tolerances = DEFAULT_TOL) -> SampleIdentities:
    V = as_operator(V, tol)
    t = s.t
    n = V.dim
    eye = np.eye(n)
    tr = t * s.R  # t (I + Q)^{-1}
    z = (1.0 - t) / (1.0 + t)
    rw = np.linalg.eigvalsh(s.R)
    return SampleIdentities(
        xy=opnorm(s.X @ s.Y - t * t * eye),
        yx=opnorm(s.Y @ s.X - t * t * eye),
        rx=opnorm(s.R @ s.X - t * (eye - s.R)),
        y_one_minus_r=opnorm(s.Y @ (eye - s.R) - tr),
        r_min=float(rw[0]),
        r_max=float(rw[-1]),
        q_floor_margin=lambda_min(s.Q) - t * lambda_min(V.gram),
        z_margin=lambda_min(V.H @ (z * s.Q + (1.0 - z) * eye) @ V.entries - s.Q),
    )
