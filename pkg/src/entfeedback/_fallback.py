"""Pure-numpy twin of the compiled kernel in ``_core.pyx``.

Trajectories of a block advance in lockstep as rows of an ``(n, 16)``
array.  Arithmetic follows the kernel step for step, so both backends
agree to rounding for the same Wiener increments.
"""
import numpy as np

from .algebra import from_real16

_Y = np.array(
    [[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=complex
)


def concurrence_psd_batch(x):
    """Concurrence of the positive part of each state; also min eigenvalues."""
    rho = from_real16(np.atleast_2d(x))
    evals, vecs = np.linalg.eigh(rho)
    w = vecs * np.sqrt(np.clip(evals, 0.0, None))[:, None, :]
    tau = np.swapaxes(w, -1, -2) @ _Y @ w
    sv = np.linalg.svd(tau, compute_uv=False)
    c = np.clip(2.0 * sv[:, 0] - sv.sum(axis=1), 0.0, None)
    return c, evals[:, 0]


def integrate_block(x0, A0, Ax, B, bvec, Kp, Km, scheme, bayesian, lam, k, dt,
                    dW, stride, instability_tol):
    dW = np.atleast_2d(dW)
    n, n_steps = dW.shape
    n_rec = n_steps // stride + 1 + (1 if n_steps % stride else 0)
    states = np.empty((n, n_rec, 16))
    conc = np.empty((n, n_rec))
    current = np.empty((n, n_rec))
    control = np.empty((n, n_rec))
    status = np.zeros(n, dtype=np.int64)
    worst = np.ones(n)

    x = np.repeat(np.asarray(x0, dtype=float)[None, :], n, axis=0)
    alive = np.ones(n, dtype=bool)
    sgn = np.ones(n)
    hist = np.empty((n, k))
    head = 0
    filled = 0
    i_acc = np.zeros(n)
    f_acc = np.zeros(n)
    window = 0
    rec = 0

    def fail(mask, step):
        newly = mask & alive
        status[newly] = step + 1
        alive[newly] = False

    for step in range(n_steps + 1):
        f = np.zeros(n)
        cnow = None
        if bayesian:
            cnow, me = concurrence_psd_batch(x)
            worst = np.where(alive, np.minimum(worst, me), worst)
            fail(me < -instability_tol, step)
            if filled == 0:
                cold = cnow
            elif filled < k:
                cold = hist[:, 0]
            else:
                cold = hist[:, head]
            delta = cnow - cold
            sgn = np.where(delta > 1e-12, 1.0, np.where(delta < -1e-12, -1.0, sgn))
            hist[:, head] = cnow
            head = (head + 1) % k
            filled = min(filled + 1, k)
            f = lam * sgn
        if step % stride == 0 or step == n_steps:
            if cnow is None:
                cnow, me = concurrence_psd_batch(x)
                worst = np.where(alive, np.minimum(worst, me), worst)
                fail(me < -instability_tol, step)
            keep = alive
            states[keep, rec] = x[keep]
            conc[keep, rec] = cnow[keep]
            if window == 0:
                current[keep, rec] = (x @ bvec)[keep]
                control[keep, rec] = f[keep]
            else:
                current[keep, rec] = (i_acc / window)[keep]
                control[keep, rec] = (f_acc / window)[keep]
            i_acc = np.zeros(n)
            f_acc = np.zeros(n)
            window = 0
            rec += 1
        if step == n_steps or not alive.any():
            break
        sig = x @ bvec
        dw = dW[:, step]
        if scheme == 0:
            drift = x @ A0.T
            diff = x @ B.T
            if bayesian:
                drift = drift + f[:, None] * (x @ Ax.T)
            x = x + drift * dt + (diff - sig[:, None] * x) * dw[:, None]
        else:
            dy = (sig * dt + dw)[:, None]
            pos = (f >= 0.0)[:, None]
            y = np.where(pos, x @ Kp[64:].T, x @ Km[64:].T)
            for p in range(3, -1, -1):
                blk = slice(16 * p, 16 * p + 16)
                y = np.where(pos, x @ Kp[blk].T, x @ Km[blk].T) + dy * y
            x = y
        trc = x[:, 0] + x[:, 1] + x[:, 2] + x[:, 3]
        bad = ~np.isfinite(trc) | (trc == 0.0)
        fail(bad, step)
        trc = np.where(bad, 1.0, trc)
        x = x / trc[:, None]
        i_acc = i_acc + sig + dw / dt
        f_acc = f_acc + f
        window += 1
    return states, conc, current, control, status, worst
