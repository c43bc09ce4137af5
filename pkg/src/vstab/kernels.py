"""Backend selection for the fixed-point kernel.

The compiled extension is preferred; set ``VSTAB_KERNEL=python`` to force
the numpy fallback (the benchmark and the backend-parity tests do this).
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("VSTAB_KERNEL", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

CONVERGED = _pykernels.CONVERGED
MAX_ITER = _pykernels.MAX_ITER
EIG_FAILED = _pykernels.EIG_FAILED


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


def congruence_iterate(M, Q0, a, b, c, d, tol, max_iter, relative=True,
                       rate_aware=True, averaged=False):
    return _impl.congruence_iterate(M, Q0, float(a), float(b), float(c), float(d),
                                    float(tol), int(max_iter), relative,
                                    rate_aware, averaged)
