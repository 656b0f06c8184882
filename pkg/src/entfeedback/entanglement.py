"""Wootters concurrence of two-qubit states."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .algebra import OPS, check_density_matrix
from .master import Mode, analytic_stationary, symmetric_stationary

__all__ = [
    "ConcurrenceValue",
    "concurrence",
    "concurrence_psd",
    "concurrence_of_stationary",
    "spin_flip_operator",
]

_ROOT_CLIP = -1e-10
_ROUNDOFF = 1e-12


class ConcurrenceValue(NamedTuple):
    """Concurrence and the four square roots it is built from (descending)."""

    value: float
    eigenroots: np.ndarray


def spin_flip_operator(convention="pauli"):
    """Two-qubit spin flip used in the concurrence sandwich.

    ``"pauli"`` gives ``sigma_y (x) sigma_y``; ``"ladder"`` gives
    ``(s1 - s1^+)(s2 - s2^+)`` built from the lowering operators.  The two
    differ by an overall phase, which cancels in the sandwich.
    """
    if convention == "pauli":
        return OPS.pauli_y[0] @ OPS.pauli_y[1]
    if convention == "ladder":
        return (OPS.sigma1 - OPS.sigma1_dag) @ (OPS.sigma2 - OPS.sigma2_dag)
    raise ValueError(f"unknown convention {convention!r}")


def concurrence(rho, convention="pauli", on_negative="raise"):
    """Wootters concurrence of a two-qubit density matrix.

    Parameters
    ----------
    rho : (4, 4) array
        Density matrix.  Hermiticity and unit trace are enforced.
    convention : {"pauli", "ladder"}
        Spin-flip operator, see :func:`spin_flip_operator`.
    on_negative : {"raise", "warn", "ignore"}
        Handling of a minimum eigenvalue below ``-1e-8``.

    Returns
    -------
    ConcurrenceValue
        ``value = max(0, l1 - l2 - l3 - l4)`` where ``l_i`` are the square
        roots of the eigenvalue moduli of ``rho Y rho* Y``.  For positive
        semidefinite input they are computed as singular values of
        ``W^T Y W`` with ``rho = W W^+``.
    """
    rho = np.asarray(rho, dtype=complex)
    check_density_matrix(rho, on_negative=on_negative)
    Y = spin_flip_operator(convention)
    evals, vecs = np.linalg.eigh(rho)
    if evals[0] >= -_ROUNDOFF * max(1.0, evals[-1]):
        # With rho = W W^+ the roots are the singular values of W^T Y W.
        # Same numbers as the eigenvalue route, but without square roots of
        # roundoff-sized eigenvalues for rank-deficient states.
        W = vecs * np.sqrt(np.clip(evals, 0.0, None))
        roots = np.linalg.svd(W.T @ Y @ W, compute_uv=False)
    else:
        ev = np.linalg.eigvals(rho @ Y @ rho.conj() @ Y)
        mod = np.abs(np.where(ev.real > _ROOT_CLIP, ev, ev.real - _ROOT_CLIP))
        roots = np.sort(np.sqrt(mod))[::-1]
    value = max(0.0, roots[0] - roots[1] - roots[2] - roots[3])
    return ConcurrenceValue(float(min(value, 1.0)), roots)


def concurrence_psd(rho):
    """Concurrence of the positive part of a Hermitian, possibly indefinite, matrix.

    Negative eigenvalues are clipped to zero before evaluating
    ``max(0, 2 s_max - sum(s))`` with ``s`` the singular values of
    ``W^T Y W``, ``rho_+ = W W^+``.  On positive states this equals
    :func:`concurrence`.  The trajectory kernels use this form because
    Euler-Maruyama states leave the positive cone by O(sqrt(dt)).
    """
    rho = np.asarray(rho, dtype=complex)
    rho = 0.5 * (rho + rho.conj().T)
    evals, vecs = np.linalg.eigh(rho)
    W = vecs * np.sqrt(np.clip(evals, 0.0, None))
    tau = W.T @ spin_flip_operator() @ W
    s = np.linalg.svd(tau, compute_uv=False)
    return float(max(0.0, 2.0 * s[0] - s.sum()))


def concurrence_of_stationary(omega, lam=0.0, mode=Mode.NONE, R=2.0, quadrature=0.0):
    """Concurrence of the stationary state for conserved weight ``R``."""
    mode = Mode(mode)
    if quadrature == 0.0 or mode is Mode.NONE:
        st = analytic_stationary(omega, lam if mode is Mode.MARKOVIAN else 0.0, mode, R)
    else:
        st = symmetric_stationary(omega, lam, mode, R, quadrature)
    return concurrence(st.rho_inf).value
