"""Decreasing t-sweeps, the t -> 0 limit operators, and the Neumann oracles."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import BadParameter, InsufficientSamples, NeumannOverflow, NoConvergence
from .qsolver import QSample, SolveConfig, solve_qt, verify_bracket
from .substrate import (
    DEFAULT_TOL,
    Tolerances,
    adjoint,
    as_operator,
    hermitian_part,
    lambda_min,
    opnorm,
    psd_apply,
)


@dataclass(frozen=True)
class SweepConfig:
    """Geometric grid t_k = t_start * ratio**k, stopped at t_min.

    X_t and Y_t approach their limits like O(t^2) off the unit circle,
    while R_t only moves like O(t); it therefore gets its own, looser,
    stagnation tolerance.
    """

    t_start: float = 1.0
    ratio: float = 0.5
    t_min: float = 1e-8
    stagnation_tol: float = 1e-7
    r_stagnation_tol: float = 1e-6
    solve: SolveConfig = field(default_factory=SolveConfig)
    warm_start: bool = True
    workers: int = 1
    absolute_accuracy: bool = True
    precision_stop: bool = True
    floor_fraction: float = 0.5

    def __post_init__(self):
        if not (0 < self.t_min < self.t_start <= 1):
            raise BadParameter("need 0 < t_min < t_start <= 1")
        if not (0 < self.ratio < 1):
            raise BadParameter("ratio must lie in (0, 1)")
        if self.stagnation_tol <= 0 or self.r_stagnation_tol <= 0:
            raise BadParameter("stagnation tolerances must be positive")
        if not (0 < self.floor_fraction <= 1):
            raise BadParameter("floor_fraction must lie in (0, 1]")

    def grid(self):
        out = []
        t = self.t_start
        while t >= self.t_min:
            out.append(t)
            t *= self.ratio
        return out


@dataclass(frozen=True, eq=False)
class SweepResult:
    samples: tuple
    failure: NoConvergence | None
    stop_reason: str   # "stagnated", "t_min", "precision_floor" or "no_convergence"

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def _deltas(samples, attr):
    return [opnorm(getattr(b, attr) - getattr(a, attr)) for a, b in zip(samples, samples[1:])]


def _stagnated(deltas, tol):
    return len(deltas) >= 2 and deltas[-1] < tol and deltas[-2] < tol


def _below_precision_floor(V, s: QSample, cfg: SweepConfig) -> bool:
    """True when a bracket margin of ``s`` is under -floor_fraction * psd_tol * ||V||^2.

    A dense double-precision Q_t only resolves its small eigenvalues to
    about eps ||Q_t||, and ||Q_t|| grows like 1/t while the true bracket
    margins shrink like t.  Below some t, case-dependent, the computed
    margins turn negative through rounding alone; this measures it on the
    sample itself instead of predicting it.
    """
    cert = verify_bracket(V, s, cfg.solve.tol)
    return min(cert.margins) < cfg.floor_fraction * cert.threshold


def _sample_config(cfg: SweepConfig, t, prev, n):
    """Per-sample solve settings.

    The solver's tolerance is relative to ||X_t|| and ||Y_t||, while the
    monotonicity invariant compares successive samples to the absolute
    psd_tol.  With ``absolute_accuracy`` the tolerance is tightened so
    that fp_tol * max(||X||, ||Y||) of the previous (larger) sample stays
    below psd_tol / 10, but never below sixteen times the roundoff floor
    of the kernel's stopping rule.
    """
    solve = cfg.solve.at(t)
    if not cfg.absolute_accuracy or prev is None:
        return solve
    scale = max(opnorm(prev.X), opnorm(prev.Y), 1.0)
    floor = 16 * np.finfo(float).eps * n
    fp = max(min(solve.fp_tol, 0.1 * solve.tol.psd_tol / scale), floor)
    return replace(solve, fp_tol=fp) if fp < solve.fp_tol else solve


def sweep(V, cfg: SweepConfig | None = None) -> SweepResult:
    """Solve the t-equation along the decreasing grid of ``cfg``.

    Stops early once X_t, Y_t and R_t all stagnate.  A solve that fails to
    converge ends the sweep; the samples gathered so far are returned with
    the exception attached as ``failure``.  See :func:`_sample_config` for
    the per-sample tolerance.

    With ``precision_stop`` every new sample's order-bracket margins are
    checked; the first sample with a margin below
    ``-floor_fraction * psd_tol * ||V||^2`` is discarded and the sweep
    ends with reason ``"precision_floor"``: from there on double
    precision can no longer carry the bracket.
    """
    cfg = cfg or SweepConfig()
    V = as_operator(V, cfg.solve.tol)
    grid = cfg.grid()
    if cfg.workers > 1:
        return _sweep_parallel(V, cfg, grid)

    samples = []
    failure = None
    reason = "t_min"
    for t in grid:
        warm = warm_dual = None
        if cfg.warm_start and samples:
            warm, warm_dual = samples[-1].Q, samples[-1].Qinv
        try:
            prev = samples[-1] if samples else None
            s = solve_qt(V, _sample_config(cfg, t, prev, V.dim), warm=warm, warm_dual=warm_dual)
        except NoConvergence as exc:
            failure, reason = exc, "no_convergence"
            break
        if cfg.precision_stop and _below_precision_floor(V, s, cfg):
            reason = "precision_floor"
            break
        samples.append(s)
        if (len(samples) >= 3
                and _stagnated(_deltas(samples[-3:], "X"), cfg.stagnation_tol)
                and _stagnated(_deltas(samples[-3:], "Y"), cfg.stagnation_tol)
                and _stagnated(_deltas(samples[-3:], "R"), cfg.r_stagnation_tol)):
            reason = "stagnated"
            break
    return SweepResult(tuple(samples), failure, reason)


def _sweep_parallel(V, cfg, grid):
    # no warm starts and no previous sample to scale the tolerance by:
    # every grid point is solved from the lower bound at cfg.solve.fp_tol
    def one(t):
        try:
            return solve_qt(V, cfg.solve.at(t))
        except NoConvergence as exc:
            return exc

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(one, grid))
    samples = []
    for r in results:
        if isinstance(r, NoConvergence):
            return SweepResult(tuple(samples), r, "no_convergence")
        if cfg.precision_stop and _below_precision_floor(V, r, cfg):
            return SweepResult(tuple(samples), None, "precision_floor")
        samples.append(r)
    return SweepResult(tuple(samples), None, "t_min")


@dataclass(frozen=True, eq=False)
class LimitBundle:
    """Numerical X_0, Y_0, R_0 with convergence diagnostics.

    The limits are the smallest-t sample's X, Y, R.  A net counts as
    converged when its last two successive deltas are below tolerance.
    """

    samples: tuple
    X0: np.ndarray
    Y0: np.ndarray
    R0: np.ndarray
    x_converged: bool
    y_converged: bool
    r_converged: bool
    x_deltas: tuple
    y_deltas: tuple
    r_deltas: tuple
    monotone_x_margin: float
    monotone_y_margin: float
    ratio: float
    failure: NoConvergence | None = None
    stop_reason: str = "t_min"

    @property
    def converged(self) -> bool:
        return self.x_converged and self.y_converged and self.r_converged

    @property
    def ts(self):
        return np.array([s.t for s in self.samples])

    @property
    def xy_product(self) -> float:
        return opnorm(self.X0 @ self.Y0)

    @property
    def previous(self) -> QSample:
        return self.samples[-2]


def extract_limits(samples, cfg: SweepConfig | None = None) -> LimitBundle:
    cfg = cfg or SweepConfig()
    failure, reason = None, "t_min"
    if isinstance(samples, SweepResult):
        failure, reason = samples.failure, samples.stop_reason
        samples = samples.samples
    samples = tuple(samples)
    if len(samples) < 3:
        raise InsufficientSamples(f"need at least 3 samples, got {len(samples)}")
    ts = [s.t for s in samples]
    if any(b >= a for a, b in zip(ts, ts[1:])):
        raise BadParameter("samples must be ordered by decreasing t")

    dx, dy, dr = (_deltas(samples, a) for a in ("X", "Y", "R"))
    mx = min(lambda_min(a.X - b.X) for a, b in zip(samples, samples[1:]))
    my = min(lambda_min(a.Y - b.Y) for a, b in zip(samples, samples[1:]))
    last = samples[-1]
    ratio = samples[-1].t / samples[-2].t
    return LimitBundle(
        samples=samples, X0=last.X, Y0=last.Y, R0=last.R,
        x_converged=_stagnated(dx, cfg.stagnation_tol),
        y_converged=_stagnated(dy, cfg.stagnation_tol),
        r_converged=_stagnated(dr, cfg.r_stagnation_tol),
        x_deltas=tuple(dx[-2:]), y_deltas=tuple(dy[-2:]), r_deltas=tuple(dr[-2:]),
        monotone_x_margin=mx, monotone_y_margin=my, ratio=ratio,
        failure=failure, stop_reason=reason)


def limits(V, cfg: SweepConfig | None = None) -> LimitBundle:
    """sweep followed by extract_limits."""
    cfg = cfg or SweepConfig()
    return extract_limits(sweep(V, cfg), cfg)


def _neumann_recursive(M, n_max, tail_tol):
    # G_1 = M^H M and G_{n+1} = M^H G_n (I + G_n)^{-1} M is the inverse of
    # the n-th partial sum; the sum itself is never formed.
    G1 = hermitian_part(adjoint(M) @ M)
    if n_max == 1:
        return G1, 1
    G, its, status, _ = kernels.congruence_iterate(
        M, G1, 1.0, 0.0, 1.0, 1.0, tail_tol, n_max - 1,
        relative=False, rate_aware=False)
    return G, its + 1


def _neumann_direct(V, n_max, tail_tol, rank_tol):
    Vm = np.asarray(V)
    n = Vm.shape[0]
    P = np.eye(n, dtype=np.complex128)
    S = np.zeros((n, n), dtype=np.complex128)
    prev = None
    big = 1.0 / rank_tol ** 2
    for k in range(1, n_max + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            P = Vm @ P
            S = S + adjoint(P) @ P
        if not np.all(np.isfinite(S)):
            raise NeumannOverflow(f"partial sum overflowed at n={k}", n_reached=k)
        Sh = hermitian_part(S)
        if opnorm(Sh) > big:
            w, u = np.linalg.eigh(Sh)
            inv_w = np.where(w > big, 0.0, 1.0 / w)
            G = hermitian_part((u * inv_w) @ adjoint(u))
        else:
            G = hermitian_part(np.linalg.inv(Sh))
        if prev is not None and opnorm(G - prev) < tail_tol:
            return G, k
        prev = G
    return prev, n_max


def neumann_y0(V, n_max: int = 20_000, tail_tol: float = 1e-12, method: str = "recursive",
               full_output: bool = False, tol: Tolerances = DEFAULT_TOL):
    """Y_0 as the limit of (V*V + V*^2 V^2 + ... + V*^n V^n)^{-1}.

    ``method="recursive"`` propagates the inverse of the partial sum
    directly, which stays bounded and accurate even where the sum itself
    grows geometrically.  ``method="direct"`` forms the sum and inverts it,
    mapping directions beyond 1/rank_tol^2 to zero; it raises
    :class:`NeumannOverflow` if the sum leaves the float range first.

    Returns the matrix, or ``(matrix, n)`` with ``full_output``.
    """
    if n_max < 1:
        raise BadParameter("n_max must be >= 1")
    V = as_operator(V, tol)
    if method == "recursive":
        G, n = _neumann_recursive(V.inv_adjoint, n_max, tail_tol)
    elif method == "direct":
        G, n = _neumann_direct(V.entries, n_max, tail_tol, tol.rank_tol)
    else:
        raise BadParameter(f"unknown method {method!r}")
    G = psd_apply(G, lambda w: w, tol)
    return (G, n) if full_output else G


def neumann_x0(V, n_max: int = 20_000, tail_tol: float = 1e-12, method: str = "recursive",
               full_output: bool = False, tol: Tolerances = DEFAULT_TOL):
    """X_0 as the limit of ((V*V)^{-1} + ... + (V*^n V^n)^{-1})^{-1}.

    The summands are W*^k W^k with W = (V*)^{-1}, so this is neumann_y0
    applied to W.
    """
    V = as_operator(V, tol)
    return neumann_y0(V.inv_adjoint, n_max, tail_tol, method, full_output, tol)


def maximal_solution_residuals(V, bundle: LimitBundle, tol: Tolerances = DEFAULT_TOL):
    """Residuals of X = V* X(I+X)^{-1} V and V Y V* = Y(I+Y)^{-1} at the limits."""
    V = as_operator(V, tol)
    X0, Y0 = bundle.X0, bundle.Y0
    gx = psd_apply(X0, lambda x: x / (1.0 + x), tol)
    gy = psd_apply(Y0, lambda y: y / (1.0 + y), tol)
    rx = opnorm(X0 - V.H @ gx @ V.entries) / (1.0 + opnorm(X0))
    ry = opnorm(V.entries @ Y0 @ V.H - gy) / (1.0 + opnorm(Y0))
    return rx, ry
