"""Select the trajectory kernel at import time.

The compiled extension is used when it imports; setting
``ENTFEEDBACK_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("ENTFEEDBACK_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _core
except ImportError:
    _core = None

HAVE_EXTENSION = _core is not None
DEFAULT = "compiled" if HAVE_EXTENSION else "python"


def _compiled_block(x0, A0, Ax, B, bvec, Kp, Km, scheme, bayesian, lam, k, dt,
                    dW, stride, instability_tol):
    dW = np.atleast_2d(np.ascontiguousarray(dW, dtype=float))
    n, n_steps = dW.shape
    n_rec = n_steps // stride + 1 + (1 if n_steps % stride else 0)
    states = np.full((n, n_rec, 16), np.nan)
    conc = np.full((n, n_rec), np.nan)
    current = np.full((n, n_rec), np.nan)
    control = np.full((n, n_rec), np.nan)
    status = np.zeros(n, dtype=np.int64)
    worst = np.ones(n)
    args = [np.ascontiguousarray(a, dtype=float) for a in (x0, A0, Ax, B, bvec, Kp, Km)]
    for i in range(n):
        status[i], worst[i] = _core.integrate(
            *args, int(scheme), bool(bayesian), float(lam), int(k), float(dt), dW[i],
            int(stride), states[i], conc[i], current[i], control[i],
            float(instability_tol),
        )
    return states, conc, current, control, status, worst


def get(name=None):
    """Return ``(name, integrate_block)`` for ``"compiled"`` or ``"python"``."""
    name = name or DEFAULT
    if name == "compiled":
        if not HAVE_EXTENSION:
            raise RuntimeError("compiled kernel not built; reinstall with Cython")
        return name, _compiled_block
    if name == "python":
        return name, _fallback.integrate_block
    raise ValueError(f"unknown backend {name!r}")


def kernel_concurrence(x):
    """Concurrence of one real16 state as the active backend computes it."""
    x = np.ascontiguousarray(x, dtype=float)
    if HAVE_EXTENSION:
        return _core.concurrence_psd_real16(x)
    c, m = _fallback.concurrence_psd_batch(x[None, :])
    return float(c[0]), float(m[0])
