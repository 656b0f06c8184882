"""Stochastic master equation under homodyne detection.

Conditioned states follow the Euler-Maruyama scheme

    rho <- rho + drift(rho) dt + H[c] rho dW,   then  rho <- rho / Tr(rho)

with the homodyne current ``I dt = Tr(c rho + rho c^+) dt + dW``.  A
positivity-preserving alternative (``scheme="kraus"``) applies
``M rho M^+ / Tr`` with ``M = 1 - (iH + L^+L/2) dt + L dy + L^2 (dy^2 - dt)/2``
and ``dy = I dt``; it has the same first-order weak accuracy.  The
hot loop runs in the compiled kernel (or its numpy twin) on the real
16-parametrization; this module assembles the linear maps it needs,
draws the noise, and reduces ensembles.

Noise streams are ``Philox`` generators keyed by ``(master_seed, index)``,
so trajectory ``i`` is the same whichever worker runs it.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _backend
from .algebra import (
    OPS,
    check_density_matrix,
    from_real16,
    h_superoperator,
    superop_real16,
    to_real16,
)
from .feedback import BayesianFeedback, MarkovianFeedback, NoFeedback
from .master import markovian_me_rhs, me_rhs, measured_operator
from .entanglement import concurrence

__all__ = [
    "TrajectoryRecord",
    "EnsembleResult",
    "StepInstabilityError",
    "INSTABILITY_TOL",
    "trajectory_rng",
    "wiener_increment",
    "wiener_stream",
    "sme_step",
    "kraus_step",
    "KernelOps",
    "kernel_operators",
    "SCHEMES",
    "simulate_trajectory",
    "ensemble_average",
    "default_threads",
]

# Euler-Maruyama leaves the positive cone: at dt = 1e-4 and omega = 5
# minimum eigenvalues near -0.05 are routine and rare excursions reach
# -0.25 before recovering.  The ensemble mean is unaffected, so the guard
# only catches genuine divergence.  The minimum eigenvalue is checked at
# every step under Bayesian control (the concurrence needs the spectrum
# anyway) and at record times otherwise.
INSTABILITY_TOL = 1.0
CHUNK = 32
SCHEMES = {"em": 0, "kraus": 1}


class StepInstabilityError(RuntimeError):
    def __init__(self, step, min_eig=None, index=None):
        where = f" (trajectory {index})" if index is not None else ""
        detail = f", minimum eigenvalue {min_eig:.3e}" if min_eig is not None else ""
        super().__init__(
            f"stochastic step {step} unstable{where}{detail}; reduce dt"
        )
        self.step = step
        self.min_eig = min_eig
        self.index = index


def default_threads():
    env = os.environ.get("ENTFEEDBACK_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def trajectory_rng(master_seed, index=0):
    """Independent counter-based stream for trajectory ``index``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def wiener_increment(rng, dt):
    """One Gaussian increment with mean 0 and variance ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return float(rng.standard_normal()) * np.sqrt(dt)


def wiener_stream(rng, dt, n):
    """``n`` consecutive increments; equals ``n`` calls of :func:`wiener_increment`."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return rng.standard_normal(n) * np.sqrt(dt)


def sme_step(rho, omega, f, dt, dW, instability_tol=INSTABILITY_TOL,
             lam=0.0, markovian=False, quadrature=0.0):
    """One Euler-Maruyama step of the conditioned state.

    Parameters
    ----------
    rho : (4, 4) array
        Current conditioned state.
    omega, f : float
        Drive amplitude and state-based control ``f Sigma_x``.
    dt, dW : float
        Step and Wiener increment.
    lam, markovian, quadrature
        With ``markovian=True`` the current-feedback equation with strength
        ``lam`` is stepped instead (``f`` must be 0).

    Returns
    -------
    rho_new : (4, 4) array
        Renormalized, Hermitian-symmetrized state.
    current : float
        ``Tr(c rho + rho c^+) + dW / dt`` evaluated on the input state.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rho = np.asarray(rho, dtype=complex)
    c = measured_operator(quadrature)
    signal = float(np.trace(c @ rho + rho @ c.conj().T).real)
    F = OPS.Sigma_x
    if markovian:
        if f != 0.0:
            raise ValueError("state-based control and current feedback are exclusive")
        drift = markovian_me_rhs(rho, omega, lam, quadrature)
        diff = h_superoperator(c - 1j * lam * F, rho)
    else:
        drift = me_rhs(rho, omega) - 1j * f * (F @ rho - rho @ F)
        diff = h_superoperator(c, rho)
    new = rho + drift * dt + diff * dW
    tr = np.trace(new).real
    if not np.isfinite(tr) or tr == 0.0:
        raise StepInstabilityError(0)
    new = new / tr
    new = 0.5 * (new + new.conj().T)
    min_eig = float(np.linalg.eigvalsh(new)[0])
    if min_eig < -instability_tol:
        raise StepInstabilityError(0, min_eig)
    return new, signal + dW / dt


def _channel(omega, controller, f=0.0):
    """Hamiltonian and measured jump operator of the conditioned equation."""
    F = OPS.Sigma_x
    if isinstance(controller, MarkovianFeedback):
        lam, q = controller.lam, controller.quadrature
        c = measured_operator(q)
        H = omega * F + 0.5 * lam * (c.conj().T @ F + F @ c)
        return H, c - 1j * lam * F
    return (omega + f) * F, OPS.Sigma


def kraus_maps(H, L, dt):
    """Real16 blocks ``K_p`` with ``M rho M^+ = sum_p dy^p K_p rho``, stacked (80, 16)."""
    eye = np.eye(4)
    A = [eye - (1j * H + 0.5 * L.conj().T @ L) * dt - 0.5 * (L @ L) * dt, L, 0.5 * (L @ L)]
    blocks = []
    for p in range(5):
        pairs = [(a, p - a) for a in range(3) if 0 <= p - a <= 2]
        blocks.append(superop_real16(
            lambda r, pairs=pairs: sum(A[a] @ r @ A[b].conj().T for a, b in pairs)
        ))
    return np.vstack(blocks)


def kraus_step(rho, omega, f, dt, dW, lam=0.0, markovian=False, quadrature=0.0):
    """One positivity-preserving step ``M rho M^+ / Tr``; returns ``(rho, current)``."""
    ctl = MarkovianFeedback(lam, quadrature) if markovian else None
    H, L = _channel(omega, ctl, f)
    rho = np.asarray(rho, dtype=complex)
    signal = float(np.trace(L @ rho + rho @ L.conj().T).real)
    dy = signal * dt + dW
    M = (np.eye(4) - (1j * H + 0.5 * L.conj().T @ L) * dt + L * dy
         + 0.5 * (L @ L) * (dy * dy - dt))
    new = M @ rho @ M.conj().T
    new = new / np.trace(new).real
    return 0.5 * (new + new.conj().T), dy / dt


class KernelOps(NamedTuple):
    """Everything the kernels need besides the state and the noise."""

    A0: np.ndarray
    Ax: np.ndarray
    B: np.ndarray
    b: np.ndarray
    Kp: np.ndarray
    Km: np.ndarray
    scheme: int
    bayesian: bool
    lam: float
    k: int

    def call(self, block, x0, dt, dW, stride, tol):
        return block(x0, self.A0, self.Ax, self.B, self.b, self.Kp, self.Km,
                     self.scheme, self.bayesian, self.lam, self.k, dt, dW,
                     stride, tol)


def kernel_operators(omega, controller, scheme="em", dt=None):
    """Real 16x16 maps for the kernels.

    Euler-Maruyama uses ``x + (A0 + f Ax) x dt + (B x - (b.x) x) dW``; the
    Kraus form needs ``dt`` and uses the blocks ``Kp`` (control ``+|lam|``
    or none) and ``Km`` (control ``-|lam|``), picked by the sign of ``f``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {sorted(SCHEMES)}")
    F = OPS.Sigma_x
    Ax = superop_real16(lambda r: -1j * (F @ r - r @ F))
    if isinstance(controller, MarkovianFeedback):
        lam, q = controller.lam, controller.quadrature
        c = measured_operator(q)
        A0 = superop_real16(lambda r: markovian_me_rhs(r, omega, lam, q))
        L = c - 1j * lam * F
        B = superop_real16(lambda r: L @ r + r @ L.conj().T)
        bayesian, lam_b, k = False, 0.0, 1
    elif isinstance(controller, (NoFeedback, BayesianFeedback)):
        c = OPS.Sigma
        A0 = superop_real16(lambda r: me_rhs(r, omega))
        B = superop_real16(lambda r: c @ r + r @ c.conj().T)
        bayesian = isinstance(controller, BayesianFeedback)
        lam_b = controller.lam if bayesian else 0.0
        k = controller.k if bayesian else 1
    else:
        raise TypeError(f"unsupported controller {controller!r}")
    # Signal Tr(c rho + rho c^+) = trace of B x; the -i lam F part is traceless.
    b = B[:4].sum(axis=0)
    if scheme == "kraus":
        if dt is None:
            raise ValueError("the Kraus form needs dt")
        Kp = kraus_maps(*_channel(omega, controller, abs(lam_b)), dt)
        Km = kraus_maps(*_channel(omega, controller, -abs(lam_b)), dt)
    else:
        Kp = Km = np.zeros((80, 16))
    return KernelOps(A0, Ax, B, b, Kp, Km, SCHEMES[scheme], bayesian, float(lam_b), int(k))


def _validated_x0(rho0):
    rho0 = np.asarray(rho0, dtype=complex)
    check_density_matrix(rho0)
    return to_real16(rho0)


def _n_steps(dt, t_final):
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    return int(round(t_final / dt))


def _record_times(n_steps, stride, dt):
    marks = list(range(0, n_steps + 1, stride))
    if marks[-1] != n_steps:
        marks.append(n_steps)
    return np.array(marks) * dt


@dataclass(frozen=True)
class TrajectoryRecord:
    """One conditioned path sampled every ``stride`` steps and at ``t_final``.

    ``current`` and ``controller_output`` at a record time are averages
    over the preceding stride window (the instantaneous values at ``t=0``).
    ``dW`` holds every increment at full rate.
    """

    times: np.ndarray
    states: np.ndarray
    concurrence: np.ndarray
    current: np.ndarray
    controller_output: np.ndarray
    dW: np.ndarray
    seed: int
    index: int
    dt: float
    stride: int
    min_eigenvalue: float


@dataclass(frozen=True)
class EnsembleResult:
    """Trajectory averages on the record grid.

    ``standard_error`` bounds the Monte Carlo error of ``mean_state`` in
    trace distance: the square root of the summed coordinate variances of
    the mean, weighted as a Frobenius norm.  It is ``nan`` for one trajectory.
    """

    times: np.ndarray
    mean_state: np.ndarray
    mean_concurrence_of_mean: np.ndarray
    mean_of_concurrence: np.ndarray
    mean_current: np.ndarray
    mean_control: np.ndarray
    standard_error: np.ndarray
    n_trajectories: int
    master_seed: int
    dt: float
    min_eigenvalue: float
    backend: str


def simulate_trajectory(rho0, omega, controller, dt, t_final, seed, index=0,
                        stride=100, backend=None, instability_tol=INSTABILITY_TOL,
                        scheme="em"):
    """Integrate one conditioned trajectory.

    The noise is the stream of :func:`trajectory_rng` ``(seed, index)``, so
    the result equals member ``index`` of :func:`ensemble_average` with the
    same master seed.

    Raises
    ------
    StepInstabilityError
        The state went non-finite or below ``-instability_tol``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n_steps = _n_steps(dt, t_final)
    x0 = _validated_x0(rho0)
    ops = kernel_operators(float(omega), controller, scheme, dt)
    _, block = _backend.get(backend)
    dW = wiener_stream(trajectory_rng(seed, index), dt, n_steps)
    states, conc, cur, ctl, status, worst = ops.call(
        block, x0, dt, dW[None, :], stride, instability_tol
    )
    if status[0]:
        raise StepInstabilityError(int(status[0]), float(worst[0]), index)
    return TrajectoryRecord(
        times=_record_times(n_steps, stride, dt),
        states=from_real16(states[0]),
        concurrence=conc[0],
        current=cur[0],
        controller_output=ctl[0],
        dW=dW,
        seed=int(seed),
        index=int(index),
        dt=float(dt),
        stride=int(stride),
        min_eigenvalue=float(worst[0]),
    )


def _run_chunk(args):
    (start, stop, master_seed, dt, n_steps, stride, x0, ops, block, tol) = args
    dW = np.empty((stop - start, n_steps))
    for j, idx in enumerate(range(start, stop)):
        dW[j] = wiener_stream(trajectory_rng(master_seed, idx), dt, n_steps)
    states, conc, cur, ctl, status, worst = ops.call(block, x0, dt, dW, stride, tol)
    bad = np.flatnonzero(status)
    if bad.size:
        j = int(bad[0])
        raise StepInstabilityError(int(status[j]), float(worst[j]), start + j)
    return (
        states.sum(axis=0),
        (states ** 2).sum(axis=0),
        conc.sum(axis=0),
        cur.sum(axis=0),
        ctl.sum(axis=0),
        float(worst.min()),
    )


def ensemble_average(rho0, omega, controller, dt, t_final, n_traj, master_seed,
                     stride=100, threads=None, backend=None,
                     instability_tol=INSTABILITY_TOL, scheme="em"):
    """Average ``n_traj`` seeded trajectories.

    Trajectories run in fixed blocks of indices; block sums are reduced in
    index order, so the output does not depend on ``threads``.  Any
    unstable trajectory aborts the whole ensemble.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n_steps = _n_steps(dt, t_final)
    x0 = _validated_x0(rho0)
    ops = kernel_operators(float(omega), controller, scheme, dt)
    name, block = _backend.get(backend)
    threads = default_threads() if threads is None else max(1, int(threads))
    tasks = [
        (s, min(s + CHUNK, n_traj), master_seed, dt, n_steps, stride, x0, ops,
         block, instability_tol)
        for s in range(0, n_traj, CHUNK)
    ]
    if threads == 1 or len(tasks) == 1:
        parts = map(_run_chunk, tasks)
        parts = list(parts)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_run_chunk, tasks))

    s1, s2, sc, si, sf, worst = parts[0]
    s1, s2, sc, si, sf = s1.copy(), s2.copy(), sc.copy(), si.copy(), sf.copy()
    for p in parts[1:]:
        s1 += p[0]
        s2 += p[1]
        sc += p[2]
        si += p[3]
        sf += p[4]
        worst = min(worst, p[5])

    n = n_traj
    mean_x = s1 / n
    mean_state = from_real16(mean_x)
    if n > 1:
        var = np.clip((s2 - s1 * s1 / n) / (n - 1), 0.0, None)
        weight = np.ones(16)
        weight[4:] = 2.0
        stderr = np.sqrt((var * weight).sum(axis=1) / n)
    else:
        stderr = np.full(mean_x.shape[0], np.nan)
    c_mean = np.array(
        [concurrence(r, on_negative="ignore").value for r in mean_state]
    )
    return EnsembleResult(
        times=_record_times(n_steps, stride, dt),
        mean_state=mean_state,
        mean_concurrence_of_mean=c_mean,
        mean_of_concurrence=sc / n,
        mean_current=si / n,
        mean_control=sf / n,
        standard_error=stderr,
        n_trajectories=int(n),
        master_seed=int(master_seed),
        dt=float(dt),
        min_eigenvalue=float(worst),
        backend=name,
    )
