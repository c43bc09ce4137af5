"""The orthogonal trichotomy H_< + H_= + H_>, surinvariance, per-vector
stability classification and the contraction witness on Ran Y0."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from .errors import (
    BadParameter,
    HorizonTooShort,
    InconsistentVerdict,
    NotOrthonormal,
    RankDeficit,
    ZeroRange,
)
from .limits import LimitBundle
from .substrate import (
    DEFAULT_TOL,
    Tolerances,
    adjoint,
    as_operator,
    hermitian_part,
    opnorm,
    orthonormality_defect,
    psd_sqrt,
    range_membership,
)


def limit_range(A_last, A_prev, ratio, tol: Tolerances = DEFAULT_TOL, decay_power=0.25):
    """Range of the limit of a monotone net from its last two samples.

    An eigenvalue counts as zero when it is below ``rank_tol * lambda_max``
    or when it is still shrinking at least like t**decay_power between the
    last two samples (their t-ratio being ``ratio``): a net converging to
    a nonzero value has stopped moving by then, one converging to zero has
    not.  Eigenvalues are matched in sorted order, which is valid because
    the nets are Loewner-monotone.

    Returns (kept eigenvalues, orthonormal basis of the kept eigenvectors).
    """
    w, u = np.linalg.eigh(hermitian_part(A_last))
    w_prev = np.linalg.eigvalsh(hermitian_part(A_prev))
    top = w[-1]
    if top <= 0:
        return w[:0], u[:, :0]
    keep = w > tol.rank_tol * top
    if A_prev is not None:
        shrink = ratio ** decay_power
        keep &= ~(w < shrink * w_prev)
    # vanishing directions sit at the bottom of the spectrum
    k = int(np.sum(keep))
    return w[len(w) - k:], u[:, len(w) - k:]


@dataclass(frozen=True, eq=False)
class Trichotomy:
    basis_lt: np.ndarray   # closure Ran Y0
    basis_eq: np.ndarray   # Ker X0 cap Ker Y0
    basis_gt: np.ndarray   # closure Ran X0
    ortho_defect: float
    converged: bool
    y_eigs: np.ndarray = field(repr=False)
    x_eigs: np.ndarray = field(repr=False)

    @property
    def ranks(self):
        return (self.basis_lt.shape[1], self.basis_eq.shape[1], self.basis_gt.shape[1])

    @property
    def dim(self):
        return self.basis_lt.shape[0]


def trichotomy(bundle: LimitBundle, tol: Tolerances = DEFAULT_TOL,
               ortho_limit: float = 1e-4) -> Trichotomy:
    """Split the space into closure(Ran Y0), Ker X0 cap Ker Y0, closure(Ran X0).

    Raises
    ------
    RankDeficit
        If the Y0 and X0 ranges overlap by more than ``ortho_limit``.
    """
    prev = bundle.previous
    wy, B_lt = limit_range(bundle.Y0, prev.Y, bundle.ratio, tol)
    wx, B_gt = limit_range(bundle.X0, prev.X, bundle.ratio, tol)
    n = bundle.X0.shape[0]
    ortho = opnorm(adjoint(B_lt) @ B_gt) if B_lt.shape[1] and B_gt.shape[1] else 0.0
    if ortho > ortho_limit:
        raise RankDeficit(f"Ran Y0 and Ran X0 are not orthogonal (overlap {ortho:.3e})")
    both = np.hstack([B_lt, B_gt])
    if both.shape[1]:
        B_eq = scipy.linalg.null_space(adjoint(both))
    else:
        B_eq = np.eye(n, dtype=np.complex128)
    if B_lt.shape[1] + B_eq.shape[1] + B_gt.shape[1] != n:
        raise RankDeficit("the three components do not fill the space")
    return Trichotomy(B_lt, B_eq, B_gt, ortho, bundle.x_converged and bundle.y_converged, wy, wx)


def surinvariance_defect(V, basis, mode: str = "V", tol: Tolerances = DEFAULT_TOL) -> float:
    """||(I - BB*) M B|| for M = V or (V*)^{-1}."""
    V = as_operator(V, tol)
    B = np.asarray(basis, dtype=np.complex128)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[1] == 0:
        return 0.0
    if orthonormality_defect(B) > 1e-8:
        raise NotOrthonormal("basis columns are not orthonormal")
    if mode == "V":
        M = V.entries
    elif mode == "V_star_inv":
        M = V.inv_adjoint
    else:
        raise BadParameter(f"mode must be 'V' or 'V_star_inv', got {mode!r}")
    MB = M @ B
    return opnorm(MB - B @ (adjoint(B) @ MB))


def surinvariance_passes(V, basis, mode="V", tol: Tolerances = DEFAULT_TOL, rel=1e-6) -> bool:
    V = as_operator(V, tol)
    M_norm = V.norm if mode == "V" else V.inv_norm
    return surinvariance_defect(V, basis, mode, tol) <= rel * M_norm


# -- vector classification ----------------------------------------------------

@dataclass(frozen=True)
class VectorVerdict:
    """Membership of one unit vector in the stability hierarchy.

    Booleans are tri-state: None means the finite evidence was
    inconclusive.  ``evidence`` carries the numbers each decision used.
    """

    l2_member: bool | None
    c_min: float
    stab0: bool | None
    stab: bool | None
    finq: bool | None
    kerq0: bool | None
    growth_exponent: float
    power_horizon: int
    evidence: dict = field(default_factory=dict, repr=False)

    def as_dict(self):
        return {
            "l2_member": self.l2_member, "c_min": self.c_min, "stab0": self.stab0,
            "stab": self.stab, "finq": self.finq, "kerq0": self.kerq0,
            "growth_exponent": self.growth_exponent, "power_horizon": self.power_horizon,
            "evidence": self.evidence,
        }


def orbit_log_norms(V, x, horizon):
    """log ||V^n x|| for n = 0..horizon, renormalizing at every step."""
    Vm = np.asarray(V)
    y = np.asarray(x, dtype=np.complex128).copy()
    out = np.empty(horizon + 1)
    acc = np.log(np.linalg.norm(y))
    out[0] = acc
    y /= np.linalg.norm(y)
    for k in range(1, horizon + 1):
        y = Vm @ y
        nrm = np.linalg.norm(y)
        acc += np.log(nrm)
        out[k] = acc
        y /= nrm
    return out


def _lsq_slope(xs, ys):
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    xc = xs - xs.mean()
    return float(np.dot(xc, ys - ys.mean()) / np.dot(xc, xc))


def orbit_trusted_horizon(V, logs, rel=1e-3):
    """Largest n for which ||V^n x|| is resolved above the rounding floor.

    A first-order bound on the forward error of the computed orbit is
    eps_n = u (||V^n|| + ||V|| sum_k ||V^(n-1-k)|| ||V^k x||) with
    u = dim * machine epsilon, all in units of ||x||.  A component of x
    (or of a rounding error) along an expanding direction eventually
    dominates a decaying orbit; past the returned n the computed norms
    describe that component rather than x.
    """
    Vm = np.asarray(V)
    n = Vm.shape[0]
    h = len(logs) - 1
    u = np.log(n * np.finfo(float).eps)
    # log ||V^m|| for m = 0..h, renormalized to stay in range
    pw = np.empty(h + 1)
    pw[0] = 0.0
    P = np.eye(n, dtype=np.complex128)
    acc = 0.0
    for m in range(1, h + 1):
        P = Vm @ P
        nrm = np.linalg.norm(P, 2)
        acc += np.log(nrm)
        pw[m] = acc
        P /= nrm
    lx = logs - logs[0]
    for m in range(1, h + 1):
        terms = np.concatenate(([pw[m]], pw[1] + pw[m - 1::-1][:m] + lx[:m]))
        err = u + scipy.special.logsumexp(terms)
        if err > np.log(rel) + lx[m]:
            return m - 1
    return h


def _orbit_decisions(logs, trusted=None, decide_log=np.log(100.0), flat_log=np.log(2.0),
                     power_tol=0.25, min_trusted=8):
    # decisions read the second half of the trusted part of the orbit; the
    # log change is extrapolated to the nominal horizon when it was cut short
    h = len(logs) - 1
    trusted = h if trusted is None else trusted
    if trusted < min_trusted:
        return None, None, float("nan"), float("nan"), float("nan")
    ns = np.arange(trusted // 2, trusted + 1)
    tail = logs[trusted // 2:trusted + 1]
    s = _lsq_slope(ns, tail)
    p = _lsq_slope(np.log(ns), tail)
    change = s * (h - h // 2)
    if change <= -decide_log:
        stab, stab0 = True, True
    elif change >= decide_log:
        stab, stab0 = False, False
    elif p >= 2 * power_tol and change >= flat_log / 2:
        stab, stab0 = False, False          # polynomial growth
    elif abs(change) <= flat_log and abs(p) <= power_tol:
        stab, stab0 = True, False           # bounded, not decaying
    else:
        stab, stab0 = None, None
    return stab, stab0, s, p, change


def _trace_decisions(ts, vals, qmax, n, window=4):
    # <x, Q_t x> below eps * ||Q_t|| * n is roundoff, not signal
    eps = np.finfo(float).eps
    valid = vals > 1e3 * eps * qmax * n
    ts, vals = ts[valid], vals[valid]
    ev = {"trace_t": ts.tolist(), "trace_q": vals.tolist()}
    if len(ts) < 3:
        return None, None, None, ev
    lt, lv = np.log(ts[-window:]), np.log(vals[-window:])
    p = _lsq_slope(lt, lv)                    # <x,Q_t x> ~ t**p
    ev["trace_power"] = p
    kerq0 = True if p >= 0.25 else (False if p <= 0.1 else None)
    finq = True if p >= -0.1 else (False if p <= -0.25 else None)
    slope_ratio = (vals[-1] / ts[-1]) / (vals[-2] / ts[-2])
    ev["slope_ratio"] = float(slope_ratio)
    bounded_slope = True if slope_ratio <= 1.15 else (False if slope_ratio >= 1.3 else None)
    return finq, kerq0, bounded_slope, ev


def classify_vector(V, x, bundle: LimitBundle, horizon: int = 256,
                    tol: Tolerances = DEFAULT_TOL, member_tol: float = 1e-6,
                    tri: Trichotomy | None = None) -> VectorVerdict:
    """Classify x against l2(V), Stab0(V), Stab(V), Fin Q and Ker Q0.

    * l2 membership: x in Ran Y0 (restricted to the limit range), cross
      checked against boundedness of <x, Q_t x>/t along the sweep.
    * Stab0 / Stab / growth exponent: trend of log ||V^n x|| over the
      second half of the horizon.
    * Fin Q / Ker Q0: power-law trend of <x, Q_t x> against t.

    Raises
    ------
    HorizonTooShort
        If ``horizon < 16``.
    InconsistentVerdict
        If the decisions violate l2 => Stab0 => Ker Q0 or Stab => Fin Q.
    """
    if horizon < 16:
        raise HorizonTooShort(f"horizon must be >= 16, got {horizon}")
    V = as_operator(V, tol)
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    if x.shape[0] != V.dim:
        raise BadParameter(f"vector has length {x.shape[0]}, operator has dim {V.dim}")
    nx = np.linalg.norm(x)
    if nx == 0:
        raise BadParameter("x must be nonzero")
    x = x / nx

    tri = tri or trichotomy(bundle, tol)
    B = tri.basis_lt
    if B.shape[1]:
        Y_eff = hermitian_part((B * tri.y_eigs) @ adjoint(B))
        in_range, c_min = range_membership(Y_eff, x, tol, member_tol=member_tol)
    else:
        in_range, c_min = False, float("inf")

    logs = orbit_log_norms(V.entries, x, horizon)
    trusted = orbit_trusted_horizon(V.entries, logs)
    stab, stab0, s, p, change = _orbit_decisions(logs, trusted)

    ts = bundle.ts
    vals = np.array([np.real(np.vdot(x, smp.Q @ x)) for smp in bundle.samples])
    qmax = np.array([np.linalg.eigvalsh(smp.Q)[-1] for smp in bundle.samples])
    finq, kerq0, bounded_slope, trace_ev = _trace_decisions(ts, vals, qmax, V.dim)

    if bounded_slope is None or bounded_slope == in_range:
        l2 = in_range
    else:
        l2 = None

    evidence = {
        "range_member": in_range, "slope_bounded": bounded_slope,
        "orbit_slope": s, "orbit_power": p, "orbit_tail_log_change": change,
        "orbit_trusted_horizon": trusted,
        "orbit_final_log_norm": float(logs[-1]), **trace_ev,
    }
    verdict = VectorVerdict(l2, c_min if l2 else float("inf"), stab0, stab, finq, kerq0,
                            float(np.exp(s)), horizon, evidence)
    check_chains(verdict)
    return verdict


def check_chains(v: VectorVerdict):
    """l2 => Stab0 => Ker Q0 and Stab => Fin Q, on definite decisions only."""
    broken = []
    if v.l2_member is True and v.stab0 is False:
        broken.append("l2 => Stab0")
    if v.stab0 is True and v.kerq0 is False:
        broken.append("Stab0 => Ker Q0")
    if v.l2_member is True and v.kerq0 is False:
        broken.append("l2 => Ker Q0")
    if v.stab is True and v.finq is False:
        broken.append("Stab => Fin Q")
    if v.stab0 is True and v.stab is False:
        broken.append("Stab0 => Stab")
    if broken:
        raise InconsistentVerdict("chain violation: " + ", ".join(broken),
                                  evidence={"verdict": v.as_dict(), "broken": broken})


# -- contraction witness ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ContractionWitness:
    """W Y0^{1/2} = Y0^{1/2} V* on Ran Y0, in an orthonormal basis B of it."""

    W: np.ndarray
    basis: np.ndarray
    S: np.ndarray          # B* Y0^{1/2} B
    norm_W: float
    lower_W: float         # smallest singular value
    wtw_defect: float      # ||W*W - (I + B*Y0 B)^{-1}||
    lower_bound: float     # 1 / (1 + ||Y0||)

    @property
    def passed(self) -> bool:
        return (self.norm_W <= 1 + 1e-8 and self.lower_W >= self.lower_bound - 1e-8
                and self.wtw_defect <= 1e-8)


def contraction_witness(V, Y0, basis=None, tol: Tolerances = DEFAULT_TOL) -> ContractionWitness:
    """Materialize the contraction W on Ran Y0.

    ``basis`` defaults to the rank_tol-thresholded range of Y0.

    Raises
    ------
    ZeroRange
        If Y0 is numerically zero.
    """
    V = as_operator(V, tol)
    Y0 = hermitian_part(np.asarray(Y0, dtype=np.complex128))
    if basis is None:
        w, u = np.linalg.eigh(Y0)
        keep = w > tol.rank_tol * max(w[-1], 0.0) if w[-1] > 0 else np.zeros(len(w), bool)
        basis = u[:, keep]
    B = np.asarray(basis)
    if B.shape[1] == 0:
        raise ZeroRange("Y0 has no numerical range; no witness")
    Yr = hermitian_part(adjoint(B) @ Y0 @ B)
    S = psd_sqrt(Yr, tol)
    W = S @ (adjoint(B) @ V.H @ B) @ np.linalg.inv(S)
    sv = np.linalg.svd(W, compute_uv=False)
    r = B.shape[1]
    target = np.linalg.inv(np.eye(r) + Yr)
    defect = opnorm(adjoint(W) @ W - target)
    return ContractionWitness(W, B, S, float(sv[0]), float(sv[-1]), defect,
                              1.0 / (1.0 + opnorm(Y0)))


def telescoping_defect(V, witness: ContractionWitness, N: int = 64,
                       adjoint_powers: bool = True, tol: Tolerances = DEFAULT_TOL) -> float:
    """Worst |sum_{n=2}^N ||V^n Y0^{1/2} x||^2 - (||A P x||^2 - ||A^N P x||^2)|.

    x runs over the witness basis and A = W* (``adjoint_powers=True``,
    the identity that follows from W*W = (I + Y0)^{-1}) or A = W.
    """
    V = as_operator(V, tol)
    B = witness.basis
    # Ran Y0 is V-invariant, so the orbit is propagated in the compressed
    # coordinates B*VB; iterating V itself would amplify the roundoff
    # component outside the range by the expanding part of V.
    Vr = adjoint(B) @ V.entries @ B
    A = adjoint(witness.W) if adjoint_powers else witness.W
    AN = np.linalg.matrix_power(A, N)
    worst = 0.0
    for j in range(B.shape[1]):
        c = adjoint(B) @ B[:, j]
        y = Vr @ (witness.S @ c)
        lhs = 0.0
        for _ in range(2, N + 1):
            y = Vr @ y
            lhs += float(np.real(np.vdot(y, y)))
        rhs = np.linalg.norm(A @ c) ** 2 - np.linalg.norm(AN @ c) ** 2
        worst = max(worst, abs(lhs - rhs))
    return worst


# -- R0 on the trichotomy -----------------------------------------------------

@dataclass(frozen=True)
class R0Check:
    """R0 on the trichotomy: identity on H_<, zero on H_>, Ran R0 in Ker X0."""

    defect_lt: float   # ||(I - R0) B_lt||
    defect_gt: float   # ||R0 B_gt||
    x0_r0: float       # ||X0 R0|| / (1 + ||X0||)
    limit_tol: float

    @property
    def chain_report(self):
        return {
            "lt_in_ker_I_minus_R0": self.defect_lt <= self.limit_tol,
            "gt_in_ker_R0": self.defect_gt <= self.limit_tol,
            "ran_R0_in_ker_X0": self.x0_r0 <= self.limit_tol,
        }

    @property
    def passed(self) -> bool:
        return all(self.chain_report.values())


def r0_identity_check(bundle: LimitBundle, tri: Trichotomy, limit_tol: float = 1e-6) -> R0Check:
    R0 = bundle.R0
    n = R0.shape[0]
    d_lt = opnorm((np.eye(n) - R0) @ tri.basis_lt) if tri.basis_lt.shape[1] else 0.0
    d_gt = opnorm(R0 @ tri.basis_gt) if tri.basis_gt.shape[1] else 0.0
    xr = opnorm(bundle.X0 @ R0) / (1.0 + opnorm(bundle.X0))
    return R0Check(d_lt, d_gt, xr, limit_tol)
