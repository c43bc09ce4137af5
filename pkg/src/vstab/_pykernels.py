"""Pure-numpy implementation of the congruence fixed-point kernel.

Mirrors ``_ckernels.pyx`` step for step; used when the compiled extension
is unavailable or ``VSTAB_KERNEL=python`` is set.
"""
import numpy as np

CONVERGED = 0
MAX_ITER = 1
EIG_FAILED = 2
RATE_WINDOW = 16


def _rate(trace, k):
    m = RATE_WINDOW
    if k >= 2 * m:
        logs = np.log(trace[k - 2 * m:k])
        rho = float(np.exp((logs[m:].sum() - logs[:m].sum()) / (m * m)))
        return rho, rho >= 1.0
    j = max(1, k - 4)
    ratios = trace[j:k] / trace[j - 1:k - 1] if k >= 2 else np.array([1.0])
    return float(ratios.max()), False


def congruence_iterate(M, Q0, a, b, c, d, tol, max_iter, relative=True,
                       rate_aware=True, averaged=False):
    """Iterate Q <- M^H h(Q) M with h(q) = (a q + b) / (c q + d).

    h is applied through the eigendecomposition of Q (negative eigenvalues
    clipped to 0) and must be nonnegative on [0, inf).  The step is formed
    as C^H C with C = diag(sqrt(h(w))) U^H M, so every iterate is PSD.

    Parameters
    ----------
    tol : float
        Stop once the step change drops below ``tol``.  The change is the
        Frobenius norm of Q_{k+1} - Q_k, divided by the spectral radius of
        Q_k when ``relative`` is set.
    rate_aware : bool
        Also require the geometric remainder estimate change*rho/(1-rho)
        to be below ``tol``, unless the change has stopped decreasing
        (roundoff plateau).  Dominant modes often come in complex pairs and
        the step-to-step ratio then oscillates, so rho compares the
        geometric means of the changes over the last two blocks of
        RATE_WINDOW steps.  Before 2*RATE_WINDOW steps are available, rho
        is the largest of the last four step ratios and no plateau is
        declared.  A relative change below 4 eps n is roundoff and
        always counts as converged.
    averaged : bool
        Replace Q_{k+1} by (Q_k + Q_{k+1})/2 whenever the change grows.

    Returns
    -------
    Q : ndarray
    iterations : int
    status : int
        0 converged, 1 iteration budget exhausted, 2 eigensolver failure.
    trace : ndarray
        Change recorded at every step.
    """
    M = np.asarray(M, dtype=np.complex128)
    Q = np.array(Q0, dtype=np.complex128, copy=True)
    Q = 0.5 * (Q + Q.conj().T)
    trace = np.empty(max_iter)
    prev = np.inf
    # relative changes below this are roundoff in an n x n Frobenius norm
    floor = 4.0 * np.finfo(float).eps * M.shape[0] if relative else 0.0
    status = MAX_ITER
    k = 0
    while k < max_iter:
        try:
            w, U = np.linalg.eigh(Q)
        except np.linalg.LinAlgError:
            status = EIG_FAILED
            break
        q = np.maximum(w, 0.0)
        s = np.sqrt((a * q + b) / (c * q + d))
        C = (U.conj().T @ M) * s[:, None]
        Qn = C.conj().T @ C
        Qn = 0.5 * (Qn + Qn.conj().T)
        scale = max(abs(w[0]), abs(w[-1]), np.finfo(float).tiny) if relative else 1.0
        change = float(np.linalg.norm(Qn - Q)) / scale
        if averaged and change > prev and change > tol:
            Qn = 0.5 * (Qn + Q)
        trace[k] = change
        k += 1
        Q = Qn
        if change <= tol:
            if not rate_aware or change <= floor:
                status = CONVERGED
                break
            rho, plateau = _rate(trace, k)
            if plateau or (rho < 1.0 and change * rho <= tol * (1.0 - rho)):
                status = CONVERGED
                break
        prev = change
    return Q, k, status, trace[:k].copy()
