"""Deterministic master-equation machinery.

Right-hand sides, the hard-coded 15x15 affine generators, fixed-step
integration, degenerate steady states and the closed-form stationary
states, with and without Markovian current feedback.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .algebra import (
    OPS,
    InvalidStateError,
    conserved_R,
    devectorize,
    dissipator,
    ket_projector,
    singlet,
    vectorize,
)

__all__ = [
    "Mode",
    "AffineGenerator",
    "StationaryState",
    "MEPath",
    "IntegrationDivergedError",
    "AmbiguousSteadyStateError",
    "measured_operator",
    "me_rhs",
    "markovian_me_rhs",
    "rhs_for",
    "build_generator",
    "generator_from_rhs",
    "integrate_me",
    "steady_state",
    "analytic_stationary",
    "symmetric_stationary",
]


class Mode(str, enum.Enum):
    NONE = "none"
    MARKOVIAN = "markovian"
    BAYESIAN = "bayesian"


class IntegrationDivergedError(RuntimeError):
    def __init__(self, step, reason):
        super().__init__(f"integration diverged at step {step}: {reason}")
        self.step = step


class AmbiguousSteadyStateError(RuntimeError):
    def __init__(self, null_dim, reason):
        super().__init__(
            f"stationary state not determined (null space dimension {null_dim}): "
            f"{reason}"
        )
        self.null_dim = null_dim


def measured_operator(quadrature=0.0):
    """Collective operator whose homodyne quadrature is recorded.

    ``quadrature = 0`` measures ``Sigma + Sigma^+`` (the current signal is
    ``Tr(Sigma rho + rho Sigma^+)``); ``pi/2`` measures the conjugate
    quadrature via ``-i Sigma``.  Without feedback the phase is irrelevant.
    """
    if quadrature == 0.0:
        return OPS.Sigma
    return np.exp(-1j * quadrature) * OPS.Sigma


def _comm(a, b):
    return a @ b - b @ a


def me_rhs(rho, omega):
    """``-i omega [Sigma_x, rho] + D[Sigma] rho``."""
    return -1j * omega * _comm(OPS.Sigma_x, rho) + dissipator(OPS.Sigma, rho)


def markovian_me_rhs(rho, omega, lam, quadrature=0.0):
    """Ensemble master equation under current feedback ``lam * I(t) * Sigma_x``.

    With ``c`` the measured operator the generator is
    ``-i[omega Sigma_x + lam (c^+ Sigma_x + Sigma_x c) / 2, rho]
    + D[c - i lam Sigma_x] rho``.
    """
    c = measured_operator(quadrature)
    F = OPS.Sigma_x
    H = omega * F + 0.5 * lam * (c.conj().T @ F + F @ c)
    return -1j * _comm(H, rho) + dissipator(c - 1j * lam * F, rho)


def rhs_for(mode, omega, lam=0.0, quadrature=0.0):
    """Right-hand side ``rho -> d rho / dt`` for a deterministic mode."""
    mode = Mode(mode)
    if mode is Mode.NONE:
        return lambda rho: me_rhs(rho, omega)
    if mode is Mode.MARKOVIAN:
        return lambda rho: markovian_me_rhs(rho, omega, lam, quadrature)
    raise ValueError("Bayesian feedback has no averaged master equation")


@dataclass(frozen=True)
class AffineGenerator:
    """``dv/dt = M v - w`` on the 15 real state parameters."""

    M: np.ndarray
    w: np.ndarray
    omega: float
    lam: float
    mode: Mode
    quadrature: float = 0.0

    def rhs(self, v):
        return self.M @ v - self.w


def _no_feedback_matrix(o):
    h = 0.5
    return np.array([
        [-2, 0, -2*o, 0, -2*o, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
        [0, -3*h, 0, -h, 0, 0, -o, 0, 0, -o, 0, 0, 0, 0, 0],
        [o, 0, -3*h, 0, -h, o, 0, -o, -o, 0, 0, 0, 0, 0, 0],
        [0, -h, 0, -3*h, 0, 0, -o, 0, 0, o, 0, 0, 0, 0, 0],
        [o, 0, -h, 0, -3*h, o, 0, 0, -o, 0, 0, 0, -o, 0, 0],
        [0, 0, -o, 0, -o, -1, 0, 0, 0, 0, 0, o, 0, 0, o],
        [0, o, 0, o, 0, 0, -1, 0, 0, 0, -o, 0, 0, -o, 0],
        [1, 0, 2*o, 0, 0, 0, 0, -1, -1, 0, 0, -2*o, 0, 0, 0],
        [1, 0, o, 0, o, 0, 0, -h, -1, 0, 0, -o, -h, 0, -o],
        [0, o, 0, -o, 0, 0, 0, 0, 0, -1, o, 0, 0, -o, 0],
        [0, 1, 0, 1, 0, 0, o, 0, 0, -o, -h, 0, 0, -h, 0],
        [o, 0, 1, 0, 1, -o, 0, 2*o, o, 0, 0, -h, o, 0, -h],
        [1, 0, 0, 0, 2*o, 0, 0, 0, -1, 0, 0, 0, -1, 0, -2*o],
        [0, 1, 0, 1, 0, 0, o, 0, 0, o, -h, 0, 0, -h, 0],
        [o, 0, 1, 0, 1, -o, 0, o, o, 0, 0, -h, 2*o, 0, -h],
    ], dtype=float)


def _feedback_matrix(o, l):
    def A(n):
        return -l * l - n / 2

    def B(n):
        return -2 * l * l - n / 2

    def C(n):
        return -3 * l * l - n / 2

    h = 0.5
    # (B_I, B_I) is C(3) and (H, H) is C(2): both reduce to the no-feedback
    # entries -3/2 and -1 at lam = 0 and match the Jacobian of the RHS.
    M1 = [
        [2*A(2), 0, -2*o, 0, -2*o],
        [0, A(3), 0, -h, -2*l],
        [o, -2*l, C(3), 0, B(1)],
        [0, -h, -2*l, A(3), 0],
        [o, 0, B(1), -2*l, C(3)],
        [0, 0, -o, 0, -o],
        [2*l, o, 0, o, 0],
        [1, 0, 2*o, 0, 0],
        [1, 0, o, 0, o],
        [0, o, 0, -o, 0],
        [0, 1, 2*l, -A(2), 0],
        [o, 2*l, -B(2), 0, -A(2)],
        [1, 0, 0, 0, 2*o],
        [0, -A(2), 0, 1, 2*l],
        [o, 0, -A(2), 2*l, -B(2)],
    ]
    M2 = [
        [B(0), 0, -A(0), -B(0), 0],
        [0, -o, 0, 0, -o],
        [o, 0, -o, -o, 0],
        [0, -o, 0, 0, o],
        [o, 0, 0, -o, 0],
        [B(2), 2*l, -B(0), -B(0), 0],
        [-2*l, B(2), -l, -2*l, 0],
        [-B(0), -2*l, C(2), B(2), -2*l],
        [-B(0), -2*l, B(1), B(2), 0],
        [0, 0, l, 0, B(2)],
        [0, o, 0, 0, -o],
        [-o, 0, 2*o, o, 0],
        [-B(0), -2*l, A(0), B(2), 2*l],
        [0, o, 0, 0, o],
        [-o, 0, o, o, 0],
    ]
    M3 = [
        [0, 0, -A(0), 0, 0],
        [0, 0, 0, -A(0), 0],
        [0, -B(0), 0, 0, -A(0)],
        [-A(0), 0, 0, 0, 0],
        [0, -A(0), -o, 0, -B(0)],
        [0, o, -B(0), 0, o],
        [-o, 0, -l, -o, 0],
        [0, -2*o, A(0), 0, 0],
        [0, -o, B(1), 0, -o],
        [o, 0, -l, -o, 0],
        [A(1), 0, 0, -h, 0],
        [-2*l, C(1), o, -2*l, B(1)],
        [0, 0, C(2), 0, -2*o],
        [-h, 0, 0, A(1), 0],
        [-2*l, B(1), 2*o, -2*l, C(1)],
    ]
    return np.hstack([np.array(M1, float), np.array(M2, float), np.array(M3, float)])


def build_generator(omega, lam=0.0, mode=Mode.NONE, quadrature=0.0):
    """Hard-coded affine generator for the given drive and feedback.

    ``Mode.NONE`` ignores ``lam``.  For Markovian feedback on a quadrature
    other than 0 there is no tabulated form, and the generator is
    extracted from :func:`markovian_me_rhs` instead.
    """
    mode = Mode(mode)
    omega = float(omega)
    lam = float(lam)
    if not (np.isfinite(omega) and np.isfinite(lam)):
        raise ValueError("omega and lambda must be finite")
    if mode is Mode.NONE:
        w = np.zeros(15)
        w[11] = w[14] = omega
        return AffineGenerator(_no_feedback_matrix(omega), w, omega, 0.0, mode)
    if mode is Mode.MARKOVIAN:
        if quadrature != 0.0:
            M, w = generator_from_rhs(rhs_for(mode, omega, lam, quadrature))
            return AffineGenerator(M, w, omega, lam, mode, quadrature)
        l2 = lam * lam
        w = np.array(
            [0, 0, 0, 0, 0, l2, 0, -l2, -l2, 0, 0, omega, -l2, 0, omega], float
        )
        return AffineGenerator(_feedback_matrix(omega, lam), w, omega, lam, mode)
    raise ValueError("Bayesian feedback has no affine generator")


def generator_from_rhs(rhs, step=1e-3, base=None):
    """Central-difference Jacobian ``(M, w)`` of a superoperator RHS.

    ``rhs`` maps a density matrix to its time derivative.  The map is affine
    in the 15-vector, so the differences are exact up to rounding.
    """
    v0 = np.zeros(15) if base is None else np.asarray(base, float)

    def f(v):
        return vectorize(rhs(devectorize(v)))

    M = np.empty((15, 15))
    for k in range(15):
        e = np.zeros(15)
        e[k] = step
        M[:, k] = (f(v0 + e) - f(v0 - e)) / (2 * step)
    w = M @ v0 - f(v0)
    return M, w


class MEPath(NamedTuple):
    times: np.ndarray
    states: np.ndarray


def _affine_compose(a, b):
    """Map ``v -> P v - q`` applied after ``b``: returns ``a o b``."""
    Pa, qa = a
    Pb, qb = b
    return Pa @ Pb, Pa @ qb + qa


def _affine_power(step_map, n):
    result = (np.eye(15), np.zeros(15))
    base = step_map
    while n:
        if n & 1:
            result = _affine_compose(base, result)
        base = _affine_compose(base, base)
        n >>= 1
    return result


def integrate_me(rho0, gen, t_final, dt=1e-3, stride=100, r_tol=1e-8,
                 positivity_tol=1e-8):
    """Classical RK4 integration of ``dv/dt = M v - w`` at fixed step.

    For an affine system one RK4 step is itself an affine map
    ``v -> P v - q`` with ``P`` the 4th-order Taylor polynomial of
    ``exp(dt M)``; the path is produced by composing that map, which is
    the same recursion as stepping one ``dt`` at a time.

    States are emitted every ``stride`` steps and at ``t_final``.  Each
    emitted state is checked for positivity and for conservation of
    :func:`~entfeedback.algebra.conserved_R`.

    Raises
    ------
    IntegrationDivergedError
        With the step index of the first emitted state that fails a check.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_final < dt:
        raise ValueError("t_final must be at least dt")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n_steps = int(round(t_final / dt))
    hM = dt * gen.M
    eye = np.eye(15)
    P = eye.copy()
    term = eye.copy()
    phi = eye.copy()
    for k in range(1, 5):
        term = term @ hM / k
        P = P + term
        if k < 4:
            phi = phi + term / (k + 1)
    step_map = (P, dt * (phi @ gen.w))
    stride_map = _affine_power(step_map, stride)

    v = vectorize(rho0)
    R0 = conserved_R(rho0)
    marks = list(range(0, n_steps + 1, stride))
    if marks[-1] != n_steps:
        marks.append(n_steps)
    states = np.empty((len(marks), 4, 4), dtype=complex)
    last = 0
    for i, mark in enumerate(marks):
        gap = mark - last
        if gap == stride:
            Pm, qm = stride_map
        elif gap:
            Pm, qm = _affine_power(step_map, gap)
        if gap:
            v = Pm @ v - qm
        last = mark
        rho = devectorize(v)
        if not np.all(np.isfinite(v)):
            raise IntegrationDivergedError(mark, "non-finite state")
        min_eig = np.linalg.eigvalsh(rho)[0]
        if min_eig < -positivity_tol:
            raise IntegrationDivergedError(mark, f"minimum eigenvalue {min_eig:.3e}")
        drift = abs(conserved_R(rho) - R0)
        if drift > r_tol:
            raise IntegrationDivergedError(mark, f"R drifted by {drift:.3e}")
        states[i] = rho
    return MEPath(np.array(marks) * dt, states)


@dataclass(frozen=True)
class StationaryState:
    """``rho_inf = (R/2) rho_s + ((2 - R)/2) rho_a``."""

    rho_inf: np.ndarray
    rho_s: np.ndarray
    rho_a: np.ndarray
    R: float


# R = 2 + _R_ROW . v
_R_ROW = np.zeros(15)
_R_ROW[7] = -1.0
_R_ROW[8] = 2.0
_R_ROW[12] = -1.0


def _decompose(rho_inf, R, rho_s_fallback):
    rho_a = singlet()
    if R > 1e-12:
        rho_s = (2.0 / R) * (rho_inf - 0.5 * (2.0 - R) * rho_a)
    else:
        rho_s = rho_s_fallback()
    return StationaryState(rho_inf, rho_s, rho_a, R)


def _solve_stationary(gen, rho0, null_tol=1e-10):
    M, w = gen.M, gen.w
    U, s, Vt = np.linalg.svd(M)
    null = s < null_tol * s[0]
    null_dim = int(null.sum())
    R0 = conserved_R(rho0)
    if null_dim == 1:
        A = np.vstack([M, _R_ROW])
        b = np.append(w, R0 - 2.0)
        v, *_ = np.linalg.lstsq(A, b, rcond=None)
    elif null_dim > 1:
        # Several conserved quantities: the long-time limit is the spectral
        # projection of v0 onto the kernel along the left null vectors.
        eig = np.linalg.eigvals(M)
        osc = (np.abs(eig.real) < null_tol * s[0]) & (np.abs(eig.imag) > null_tol * s[0])
        if osc.any():
            raise AmbiguousSteadyStateError(null_dim, "undamped oscillating modes")
        right = Vt[null].T
        left = U[:, null]
        gram = left.T @ right
        if np.linalg.cond(gram) > 1e8:
            raise AmbiguousSteadyStateError(null_dim, "defective zero eigenvalue")
        v_part, *_ = np.linalg.lstsq(M, w, rcond=None)
        dv = vectorize(rho0) - v_part
        v = v_part + right @ np.linalg.solve(gram, left.T @ dv)
    else:
        raise AmbiguousSteadyStateError(0, "generator is not singular")
    resid = np.linalg.norm(M @ v - w)
    if resid > 1e-8 * max(1.0, np.linalg.norm(w)):
        raise AmbiguousSteadyStateError(null_dim, f"residual {resid:.3e}")
    return devectorize(v)


def steady_state(rho0, gen):
    """Long-time limit of the master equation started from ``rho0``.

    Solves ``M v = w`` with one extra row pinning the conserved weight R to
    its initial value.  When the generator has more than one null
    direction (undriven, undamped coherences, e.g. at omega = lambda = 0)
    the limit is taken as the spectral projection of ``rho0`` instead.
    """
    rho_inf = _solve_stationary(gen, rho0)
    rho_inf = 0.5 * (rho_inf + rho_inf.conj().T)
    R = conserved_R(rho_inf)
    return _decompose(
        rho_inf, R, lambda: _solve_stationary(gen, ket_projector("00"))
    )


def _rho_s_no_feedback(o):
    o2, o3, o4 = o * o, o ** 3, o ** 4
    c = o * (2 * o2 + 1)
    m = np.array([
        [4 * o4, -2j * o3, -2j * o3, -2 * o2],
        [2j * o3, 2 * o4 + o2, 2 * o4 + o2, -1j * c],
        [2j * o3, 2 * o4 + o2, 2 * o4 + o2, -1j * c],
        [-2 * o2, 1j * c, 1j * c, 4 * o4 + 2 * o2 + 1],
    ])
    return m / (12 * o4 + 4 * o2 + 1)


def _upsilon(o, l):
    """Stationary coefficients and denominator under Markovian feedback."""
    o2, l2 = o * o, l * l
    u1 = 2 * (32 * l2**6 + 82 * l2**5 + l2**4 * (72 * o2 + 65)
              + 24 * l2**3 * (4 * o2 + 1) + l2**2 * (48 * o2**2 + 81 * o2 + 4)
              + 2 * l2 * o2 * (19 * o2 + 9) + 8 * (o2**3 + o2**2))
    u2 = 2 * l * (2 * l2 + 1) * o * (16 * l2**2 + 5 * l2 + 4 * o2)
    u3 = -o * (32 * l2**4 + 90 * l2**3 + l2**2 * (40 * o2 + 57)
               + 10 * l2 * (3 * o2 + 1) + 8 * (o2**2 + o2))
    u4 = -(32 * l2**5 + 82 * l2**4 + 5 * l2**3 * (8 * o2 + 13)
           + 6 * l2**2 * (o2 + 4) + 4 * l2 * (2 * o2**2 + 6 * o2 + 1)
           + 8 * (o2**2 + o2))
    u5 = 4 * l * o2 * (16 * l2**2 + 5 * l2 + 4 * o2)
    u6 = 0.5 * (64 * l2**6 + 196 * l2**5 + 4 * l2**4 * (36 * o2 + 53)
                + l2**3 * (232 * o2 + 113) + 8 * l2**2 * (12 * o2**2 + 21 * o2 + 4)
                + l2 * (84 * o2**2 + 60 * o2 + 4) + 8 * (2 * o2**3 + 3 * o2**2 + o2))
    u7 = -o * (32 * l2**4 + 74 * l2**3 + l2**2 * (40 * o2 + 77)
               + l2 * (62 * o2 + 32) + 8 * o2**2 + 12 * o2 + 4)
    T = (192 * l2**6 + 652 * l2**5 + 16 * l2**4 * (27 * o2 + 52)
         + l2**3 * (776 * o2 + 551) + l2**2 * (288 * o2**2 + 716 * o2 + 209)
         + l2 * (268 * o2**2 + 234 * o2 + 44) + 48 * o2**3 + 64 * o2**2
         + 20 * o2 + 4)
    return (u1, u2, u3, u4, u5, u6, u7), T


def _rho_s_feedback(o, l):
    (u1, u2, u3, u4, u5, u6, u7), T = _upsilon(o, l)
    if T == 0:  # T >= 4 for real arguments
        raise ZeroDivisionError("stationary denominator vanished")
    b = u2 + 1j * u3
    d = u4 + 1j * u5
    m = np.array([
        [u1, b, b, d],
        [np.conj(b), u6, u6, 1j * u7],
        [np.conj(b), u6, u6, 1j * u7],
        [np.conj(d), -1j * u7, -1j * u7, T - u1 - 2 * u6],
    ])
    return m / T


def analytic_stationary(omega, lam=0.0, mode=Mode.NONE, R=2.0):
    """Closed-form stationary state for conserved weight ``R``."""
    mode = Mode(mode)
    if not 0.0 <= R <= 2.0:
        raise ValueError(f"R must lie in [0, 2], got {R}")
    if mode is Mode.NONE:
        if lam != 0.0:
            raise ValueError("no-feedback mode requires lambda = 0")
        rho_s = _rho_s_no_feedback(float(omega))
    elif mode is Mode.MARKOVIAN:
        rho_s = _rho_s_feedback(float(omega), float(lam))
    else:
        raise ValueError("Bayesian feedback has no closed-form stationary state")
    rho_a = singlet()
    rho_inf = 0.5 * R * rho_s + 0.5 * (2.0 - R) * rho_a
    return StationaryState(rho_inf, rho_s, rho_a, float(R))


def symmetric_stationary(omega, lam=0.0, mode=Mode.NONE, R=2.0, quadrature=0.0):
    """Closed form when one exists, otherwise the constrained linear solve.

    The solve is seeded with a state of the requested R built from
    ``|00>`` and the singlet, which carries no coherence between them.
    """
    mode = Mode(mode)
    if mode is Mode.NONE or quadrature == 0.0:
        return analytic_stationary(omega, lam if mode is Mode.MARKOVIAN else 0.0, mode, R)
    gen = build_generator(omega, lam, mode, quadrature)
    rho0 = 0.5 * R * ket_projector("00") + 0.5 * (2.0 - R) * singlet()
    return steady_state(rho0, gen)
