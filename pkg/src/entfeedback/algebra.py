"""Two-qubit operator algebra and state parametrization.

Basis ordering
--------------
Every 4x4 matrix in this package is written in the computational basis

    index 0 = |11>,  1 = |10>,  2 = |01>,  3 = |00>

where ``|1>`` is the excited and ``|0>`` the ground state of a qubit.  This
is ``np.kron(q1, q2)`` with single-qubit basis order ``(|1>, |0>)``.  Most
toolkits order the single-qubit basis the other way round; feeding their
matrices in here silently transposes the 15x15 generators in
:mod:`entfeedback.master`.

State vector
------------
A density matrix is parametrized by 15 real numbers in the order

    A, B_R, B_I, C_R, C_I, D_R, D_I, E, F_R, F_I, G_R, G_I, H, I_R, I_I

with ``rho[0,0] = A``, ``rho[0,1] = B_R + i B_I``, ``rho[0,2] = C``,
``rho[0,3] = D``, ``rho[1,1] = E``, ``rho[1,2] = F``, ``rho[1,3] = G``,
``rho[2,2] = H``, ``rho[2,3] = I`` and ``rho[3,3] = 1 - A - E - H``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "OPS",
    "OperatorSet",
    "InvalidStateError",
    "PositivityWarning",
    "dissipator",
    "h_superoperator",
    "vectorize",
    "devectorize",
    "conserved_R",
    "check_density_matrix",
    "trace_distance",
    "ket_projector",
    "singlet",
    "random_density_matrix",
    "to_real16",
    "from_real16",
    "superop_real16",
]

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-10
POSITIVITY_ATOL = 1e-8


class InvalidStateError(ValueError):
    """A matrix violates the density-matrix contract."""


class PositivityWarning(RuntimeWarning):
    """Minimum eigenvalue dropped below the monitored tolerance."""


def _frozen(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OperatorSet:
    """Single-qubit and collective operators of the two-qubit register."""

    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma1_dag: np.ndarray
    sigma2_dag: np.ndarray
    pauli_x: tuple
    pauli_y: tuple
    pauli_z: tuple
    Sigma: np.ndarray
    Sigma_dag: np.ndarray
    Sigma_x: np.ndarray
    swap: np.ndarray
    conserved_op: np.ndarray
    identity: np.ndarray


def _build_ops() -> OperatorSet:
    lower = np.array([[0, 0], [1, 0]], dtype=complex)  # |1> -> |0>
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    eye2 = np.eye(2, dtype=complex)

    def on1(op):
        return np.kron(op, eye2)

    def on2(op):
        return np.kron(eye2, op)

    s1, s2 = on1(lower), on2(lower)
    Sigma = s1 + s2
    swap = np.eye(4, dtype=complex)[[0, 2, 1, 3]]
    return OperatorSet(
        sigma1=_frozen(s1),
        sigma2=_frozen(s2),
        sigma1_dag=_frozen(s1.conj().T),
        sigma2_dag=_frozen(s2.conj().T),
        pauli_x=(_frozen(on1(sx)), _frozen(on2(sx))),
        pauli_y=(_frozen(on1(sy)), _frozen(on2(sy))),
        pauli_z=(_frozen(on1(sz)), _frozen(on2(sz))),
        Sigma=_frozen(Sigma),
        Sigma_dag=_frozen(Sigma.conj().T),
        Sigma_x=_frozen(Sigma + Sigma.conj().T),
        swap=_frozen(swap),
        conserved_op=_frozen(np.eye(4) + swap),
        identity=_frozen(np.eye(4)),
    )


OPS = _build_ops()


def _check_op(L, rho):
    if np.shape(L) != (4, 4) or np.shape(rho) != (4, 4):
        raise ValueError(
            f"expected 4x4 operands, got {np.shape(L)} and {np.shape(rho)}"
        )


def dissipator(L, rho):
    """Lindblad dissipator ``L rho L^+ - (L^+ L rho + rho L^+ L) / 2``."""
    _check_op(L, rho)
    L = np.asarray(L)
    Ld = L.conj().T
    LdL = Ld @ L
    return L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)


def h_superoperator(L, rho):
    """Measurement backaction ``(L rho + rho L^+) - Tr(L rho + rho L^+) rho``."""
    _check_op(L, rho)
    L = np.asarray(L)
    x = L @ rho + rho @ L.conj().T
    return x - np.trace(x) * rho


_UPPER = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
# Positions of (A, E, H) and of the (re, im) pairs inside the 15-vector.
_DIAG_POS = {0: 0, 1: 7, 2: 12}
_OFF_POS = {(0, 1): 1, (0, 2): 3, (0, 3): 5, (1, 2): 8, (1, 3): 10, (2, 3): 13}


def vectorize(rho) -> np.ndarray:
    """Map a density matrix to its 15 real parameters."""
    rho = np.asarray(rho)
    v = np.empty(15)
    for i, k in _DIAG_POS.items():
        v[k] = rho[i, i].real
    for (i, j), k in _OFF_POS.items():
        v[k] = rho[i, j].real
        v[k + 1] = rho[i, j].imag
    return v


def devectorize(v) -> np.ndarray:
    """Inverse of :func:`vectorize`; ``rho[3,3]`` is fixed by unit trace."""
    v = np.asarray(v, dtype=float)
    if v.shape != (15,):
        raise ValueError(f"expected 15 parameters, got shape {v.shape}")
    rho = np.zeros((4, 4), dtype=complex)
    for i, k in _DIAG_POS.items():
        rho[i, i] = v[k]
    rho[3, 3] = 1.0 - v[0] - v[7] - v[12]
    for (i, j), k in _OFF_POS.items():
        rho[i, j] = v[k] + 1j * v[k + 1]
        rho[j, i] = v[k] - 1j * v[k + 1]
    return rho


def conserved_R(rho) -> float:
    """Exchange-symmetry weight ``Tr(rho (I + SWAP)) = 2 + 2 F_R - H - E``."""
    return float(np.real(np.trace(np.asarray(rho) @ OPS.conserved_op)))


def check_density_matrix(
    rho,
    *,
    hermitian_atol=HERMITIAN_ATOL,
    trace_atol=TRACE_ATOL,
    positivity_atol=POSITIVITY_ATOL,
    on_negative="raise",
):
    """Validate the density-matrix contract and return the minimum eigenvalue.

    ``on_negative`` is one of ``"raise"``, ``"warn"`` or ``"ignore"``; it
    only governs positivity.  Hermiticity and trace violations always raise.
    The state is never projected back onto the positive cone.
    """
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise InvalidStateError(f"expected a 4x4 matrix, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidStateError("matrix has non-finite entries")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > hermitian_atol:
        raise InvalidStateError(f"not Hermitian (max deviation {herm:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_atol:
        raise InvalidStateError(f"trace is {tr.real:.12g}, expected 1")
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    if min_eig < -positivity_atol:
        msg = f"minimum eigenvalue {min_eig:.3e} below -{positivity_atol:g}"
        if on_negative == "raise":
            raise InvalidStateError(msg)
        if on_negative == "warn":
            warnings.warn(msg, PositivityWarning, stacklevel=2)
    return min_eig


def trace_distance(rho1, rho2) -> float:
    """Half the trace norm of the (Hermitian) difference."""
    d = np.asarray(rho1) - np.asarray(rho2)
    d = 0.5 * (d + d.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(d))))


def ket_projector(label: str) -> np.ndarray:
    """Projector onto a computational basis state such as ``"10"``."""
    index = {"11": 0, "10": 1, "01": 2, "00": 3}[label]
    rho = np.zeros((4, 4), dtype=complex)
    rho[index, index] = 1.0
    return rho


def singlet() -> np.ndarray:
    """Projector onto ``(|10> - |01>)/sqrt(2)``, the dark fixed point."""
    rho = np.zeros((4, 4), dtype=complex)
    rho[1, 1] = rho[2, 2] = 0.5
    rho[1, 2] = rho[2, 1] = -0.5
    return rho


def random_density_matrix(rng, rank=4) -> np.ndarray:
    """Random state from a Ginibre ensemble of the given rank."""
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


# Real 16-parametrization of Hermitian 4x4 matrices used by the trajectory
# kernels: four diagonal entries, then (re, im) of each upper entry in
# _UPPER order.  Unlike the 15-vector it keeps the trace as a free
# coordinate, so renormalization is a single division.


def to_real16(rho) -> np.ndarray:
    rho = np.asarray(rho)
    x = np.empty(rho.shape[:-2] + (16,))
    for i in range(4):
        x[..., i] = rho[..., i, i].real
    for k, (i, j) in enumerate(_UPPER):
        x[..., 4 + 2 * k] = rho[..., i, j].real
        x[..., 5 + 2 * k] = rho[..., i, j].imag
    return x


def from_real16(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    rho = np.zeros(x.shape[:-1] + (4, 4), dtype=complex)
    for i in range(4):
        rho[..., i, i] = x[..., i]
    for k, (i, j) in enumerate(_UPPER):
        z = x[..., 4 + 2 * k] + 1j * x[..., 5 + 2 * k]
        rho[..., i, j] = z
        rho[..., j, i] = np.conj(z)
    return rho


def superop_real16(func) -> np.ndarray:
    """Real 16x16 matrix of a Hermiticity-preserving linear map.

    ``func`` takes and returns 4x4 matrices.  Linearity is assumed, so
    probing with the 16 unit directions is exact.
    """
    out = np.empty((16, 16))
    for k in range(16):
        e = np.zeros(16)
        e[k] = 1.0
        out[:, k] = to_real16(func(from_real16(e)))
    return out
