# cython: language_level=3
"""Compiled stochastic kernel for conditioned two-qubit states.

States travel as the real 16-vector of :func:`entfeedback.algebra.to_real16`.
All superoperators arrive pre-assembled from Python, so this file knows
nothing about the physics beyond "linear drift, nonlinear diffusion" for
Euler-Maruyama and "polynomial in the measurement record" for the Kraus
form.
"""
from libc.math cimport sqrt, fabs, isfinite
cimport cython

import numpy as np

# upper-triangle order shared with algebra._UPPER
cdef int UP_I[6]
cdef int UP_J[6]
UP_I[:] = [0, 0, 0, 1, 1, 2]
UP_J[:] = [1, 2, 3, 2, 3, 3]


cdef inline void unpack(const double* x, double* ar, double* ai) noexcept nogil:
    cdef int k, i, j
    for i in range(16):
        ar[i] = 0.0
        ai[i] = 0.0
    for i in range(4):
        ar[5 * i] = x[i]
    for k in range(6):
        i = UP_I[k]
        j = UP_J[k]
        ar[4 * i + j] = x[4 + 2 * k]
        ai[4 * i + j] = x[5 + 2 * k]
        ar[4 * j + i] = x[4 + 2 * k]
        ai[4 * j + i] = -x[5 + 2 * k]


cdef void herm_eig(double* ar, double* ai, double* vr, double* vi,
                   double* evals) noexcept nogil:
    """Cyclic Jacobi on a 4x4 Hermitian matrix stored row-major as (ar, ai).

    Destroys (ar, ai); eigenvectors are the columns of (vr, vi).
    """
    cdef int sweep, p, q, r
    cdef double off, diag, g, er, ei, tau, t, c, s
    cdef double xr, xi, yr, yi, ser, sei
    for r in range(16):
        vr[r] = 0.0
        vi[r] = 0.0
    for r in range(4):
        vr[5 * r] = 1.0
    for sweep in range(30):
        off = 0.0
        diag = 0.0
        for p in range(4):
            diag += ar[5 * p] * ar[5 * p]
            for q in range(p + 1, 4):
                off += ar[4 * p + q] * ar[4 * p + q] + ai[4 * p + q] * ai[4 * p + q]
        if off <= 1e-34 * diag or off < 1e-300:
            break
        for p in range(3):
            for q in range(p + 1, 4):
                g = sqrt(ar[4 * p + q] * ar[4 * p + q] + ai[4 * p + q] * ai[4 * p + q])
                if g < 1e-300:
                    continue
                er = ar[4 * p + q] / g
                ei = ai[4 * p + q] / g
                tau = (ar[5 * q] - ar[5 * p]) / (2.0 * g)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                ser = s * er
                sei = s * ei
                # columns: A <- A U with U_pp = U_qq = c, U_pq = s e, U_qp = -s conj(e)
                for r in range(4):
                    xr = ar[4 * r + p]
                    xi = ai[4 * r + p]
                    yr = ar[4 * r + q]
                    yi = ai[4 * r + q]
                    ar[4 * r + p] = c * xr - (ser * yr + sei * yi)
                    ai[4 * r + p] = c * xi - (ser * yi - sei * yr)
                    ar[4 * r + q] = (ser * xr - sei * xi) + c * yr
                    ai[4 * r + q] = (ser * xi + sei * xr) + c * yi
                    xr = vr[4 * r + p]
                    xi = vi[4 * r + p]
                    yr = vr[4 * r + q]
                    yi = vi[4 * r + q]
                    vr[4 * r + p] = c * xr - (ser * yr + sei * yi)
                    vi[4 * r + p] = c * xi - (ser * yi - sei * yr)
                    vr[4 * r + q] = (ser * xr - sei * xi) + c * yr
                    vi[4 * r + q] = (ser * xi + sei * xr) + c * yi
                # rows: A <- U^+ A
                for r in range(4):
                    xr = ar[4 * p + r]
                    xi = ai[4 * p + r]
                    yr = ar[4 * q + r]
                    yi = ai[4 * q + r]
                    ar[4 * p + r] = c * xr - (ser * yr - sei * yi)
                    ai[4 * p + r] = c * xi - (ser * yi + sei * yr)
                    ar[4 * q + r] = (ser * xr + sei * xi) + c * yr
                    ai[4 * q + r] = (ser * xi - sei * xr) + c * yi
                ar[4 * p + q] = 0.0
                ai[4 * p + q] = 0.0
                ar[4 * q + p] = 0.0
                ai[4 * q + p] = 0.0
                ai[5 * p] = 0.0
                ai[5 * q] = 0.0
    for p in range(4):
        evals[p] = ar[5 * p]


cdef void complex_svals(double* tr, double* ti, double* sv) noexcept nogil:
    """Singular values of a 4x4 complex matrix by one-sided Jacobi.

    Columns are orthogonalized in place; sv gets the column norms.
    """
    cdef int sweep, p, q, r, rotated
    cdef double al, be, gr, gi, g, er, ei, tau, t, c, s, ser, sei
    cdef double xr, xi, yr, yi
    for sweep in range(30):
        rotated = 0
        for p in range(3):
            for q in range(p + 1, 4):
                al = 0.0
                be = 0.0
                gr = 0.0
                gi = 0.0
                for r in range(4):
                    xr = tr[4 * r + p]
                    xi = ti[4 * r + p]
                    yr = tr[4 * r + q]
                    yi = ti[4 * r + q]
                    al += xr * xr + xi * xi
                    be += yr * yr + yi * yi
                    # conj(x) * y
                    gr += xr * yr + xi * yi
                    gi += xr * yi - xi * yr
                g = sqrt(gr * gr + gi * gi)
                if g <= 1e-15 * sqrt(al * be) or g < 1e-300:
                    continue
                rotated = 1
                er = gr / g
                ei = gi / g
                tau = (be - al) / (2.0 * g)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                ser = s * er
                sei = s * ei
                for r in range(4):
                    xr = tr[4 * r + p]
                    xi = ti[4 * r + p]
                    yr = tr[4 * r + q]
                    yi = ti[4 * r + q]
                    tr[4 * r + p] = c * xr - (ser * yr + sei * yi)
                    ti[4 * r + p] = c * xi - (ser * yi - sei * yr)
                    tr[4 * r + q] = (ser * xr - sei * xi) + c * yr
                    ti[4 * r + q] = (ser * xi + sei * xr) + c * yi
        if not rotated:
            break
    for p in range(4):
        al = 0.0
        for r in range(4):
            al += tr[4 * r + p] * tr[4 * r + p] + ti[4 * r + p] * ti[4 * r + p]
        sv[p] = sqrt(al)


cdef double concurrence_psd(const double* x, double* min_eig) noexcept nogil:
    """Concurrence of the positive part of the state encoded by x."""
    cdef double ar[16]
    cdef double ai[16]
    cdef double vr[16]
    cdef double vi[16]
    cdef double ev[4]
    cdef double wr[16]
    cdef double wi[16]
    cdef double ywr[16]
    cdef double ywi[16]
    cdef double tr[16]
    cdef double ti[16]
    cdef double sv[4]
    cdef double d, sgn, tot, top
    cdef int i, j, r
    unpack(x, ar, ai)
    herm_eig(ar, ai, vr, vi, ev)
    min_eig[0] = ev[0]
    for j in range(4):
        if ev[j] < min_eig[0]:
            min_eig[0] = ev[j]
        d = sqrt(ev[j]) if ev[j] > 0.0 else 0.0
        for r in range(4):
            wr[4 * r + j] = vr[4 * r + j] * d
            wi[4 * r + j] = vi[4 * r + j] * d
    # Y = sigma_y (x) sigma_y: rows (0,3) -> -(3,0), rows (1,2) -> (2,1)
    for j in range(4):
        ywr[j] = -wr[12 + j]
        ywi[j] = -wi[12 + j]
        ywr[4 + j] = wr[8 + j]
        ywi[4 + j] = wi[8 + j]
        ywr[8 + j] = wr[4 + j]
        ywi[8 + j] = wi[4 + j]
        ywr[12 + j] = -wr[j]
        ywi[12 + j] = -wi[j]
    # tau = W^T (Y W), no conjugation
    for i in range(4):
        for j in range(4):
            tr[4 * i + j] = 0.0
            ti[4 * i + j] = 0.0
            for r in range(4):
                tr[4 * i + j] += wr[4 * r + i] * ywr[4 * r + j] - wi[4 * r + i] * ywi[4 * r + j]
                ti[4 * i + j] += wr[4 * r + i] * ywi[4 * r + j] + wi[4 * r + i] * ywr[4 * r + j]
    complex_svals(tr, ti, sv)
    top = 0.0
    tot = 0.0
    for i in range(4):
        tot += sv[i]
        if sv[i] > top:
            top = sv[i]
    d = 2.0 * top - tot
    return d if d > 0.0 else 0.0


def concurrence_psd_real16(double[::1] x):
    """Kernel concurrence of one state; returns ``(C, min_eigenvalue)``."""
    cdef double m
    cdef double c = concurrence_psd(&x[0], &m)
    return c, m


cdef inline void matvec16(const double* A, const double* x, double* y) noexcept nogil:
    cdef int i, j
    cdef double acc
    for i in range(16):
        acc = 0.0
        for j in range(16):
            acc += A[16 * i + j] * x[j]
        y[i] = acc


@cython.boundscheck(False)
@cython.wraparound(False)
def integrate(double[::1] x0,
              double[:, ::1] A0,
              double[:, ::1] Ax,
              double[:, ::1] B,
              double[::1] bvec,
              double[:, ::1] Kp,
              double[:, ::1] Km,
              int scheme,
              bint bayesian,
              double lam,
              int k,
              double dt,
              const double[::1] dW,
              int stride,
              double[:, ::1] states_out,
              double[::1] conc_out,
              double[::1] current_out,
              double[::1] control_out,
              double instability_tol):
    """Advance one conditioned trajectory through ``len(dW)`` steps.

    ``scheme`` 0 is Euler-Maruyama.  ``scheme`` 1 is the Kraus form
    ``x <- sum_p dy^p K_p x`` followed by renormalization, where
    ``dy = (b.x) dt + dW`` and ``K_p`` is block ``p`` of the (80, 16) array
    ``Kp`` (control ``f >= 0``) or ``Km`` (``f < 0``).

    Records land at steps 0, stride, 2*stride, ... and at the final step.
    Returns ``(status, worst_min_eigenvalue)``; ``status`` is 0 on success
    and otherwise the 1-based step index at which the state went
    non-finite or its minimum eigenvalue fell below ``-instability_tol``.
    """
    cdef Py_ssize_t n_steps = dW.shape[0]
    cdef double x[16]
    cdef double drift[16]
    cdef double fx[16]
    cdef double diff[16]
    cdef double hist[4096]
    cdef double y[16]
    cdef double tmp[16]
    cdef double sig, trc, f, cnow, cold, delta, sgn, me, worst, i_acc, f_acc, dy
    cdef const double* K
    cdef int p
    cdef Py_ssize_t step, i, rec, head, filled, window
    cdef int status = 0
    if k < 1 or k > 4096:
        raise ValueError("controller window k must lie in [1, 4096]")
    for i in range(16):
        x[i] = x0[i]
    worst = 1.0
    sgn = 1.0
    head = 0
    filled = 0
    i_acc = 0.0
    f_acc = 0.0
    window = 0
    rec = 0
    with nogil:
        for step in range(n_steps + 1):
            f = 0.0
            cnow = -1.0
            if bayesian:
                cnow = concurrence_psd(x, &me)
                if me < worst:
                    worst = me
                if me < -instability_tol:
                    status = <int>step + 1
                    break
                if filled == 0:
                    cold = cnow
                elif filled < k:
                    cold = hist[0]
                else:
                    cold = hist[head]
                delta = cnow - cold
                if delta > 1e-12:
                    sgn = 1.0
                elif delta < -1e-12:
                    sgn = -1.0
                hist[head] = cnow
                head = (head + 1) % k
                if filled < k:
                    filled += 1
                f = lam * sgn
            if step % stride == 0 or step == n_steps:
                if cnow < 0.0:
                    cnow = concurrence_psd(x, &me)
                    if me < worst:
                        worst = me
                    if me < -instability_tol:
                        status = <int>step + 1
                        break
                for i in range(16):
                    states_out[rec, i] = x[i]
                conc_out[rec] = cnow
                if window == 0:
                    sig = 0.0
                    for i in range(16):
                        sig += bvec[i] * x[i]
                    current_out[rec] = sig
                    control_out[rec] = f
                else:
                    current_out[rec] = i_acc / window
                    control_out[rec] = f_acc / window
                i_acc = 0.0
                f_acc = 0.0
                window = 0
                rec += 1
            if step == n_steps:
                break
            sig = 0.0
            for i in range(16):
                sig += bvec[i] * x[i]
            if scheme == 0:
                matvec16(&A0[0, 0], x, drift)
                matvec16(&B[0, 0], x, diff)
                if f != 0.0:
                    matvec16(&Ax[0, 0], x, fx)
                    for i in range(16):
                        drift[i] += f * fx[i]
                for i in range(16):
                    x[i] = x[i] + drift[i] * dt + (diff[i] - sig * x[i]) * dW[step]
            else:
                K = &Kp[0, 0] if f >= 0.0 else &Km[0, 0]
                dy = sig * dt + dW[step]
                matvec16(K + 4 * 256, x, y)
                for p in range(3, -1, -1):
                    matvec16(K + p * 256, x, tmp)
                    for i in range(16):
                        y[i] = tmp[i] + dy * y[i]
                for i in range(16):
                    x[i] = y[i]
            trc = x[0] + x[1] + x[2] + x[3]
            if not isfinite(trc) or trc == 0.0:
                status = <int>step + 1
                break
            for i in range(16):
                x[i] = x[i] / trc
            i_acc += sig + dW[step] / dt
            f_acc += f
            window += 1
    return status, worst
