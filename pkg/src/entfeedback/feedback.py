"""Control laws: Markovian current feedback and the Bayesian sign controller."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .algebra import OPS, dissipator, h_superoperator
from .entanglement import concurrence_psd
from .master import Mode, measured_operator

__all__ = [
    "NoFeedback",
    "MarkovianFeedback",
    "BayesianFeedback",
    "BayesianControllerState",
    "bayesian_control",
    "markovian_trajectory_drift",
    "controller_from_mode",
    "TIE_ATOL",
]

TIE_ATOL = 1e-12


@dataclass(frozen=True)
class NoFeedback:
    mode = Mode.NONE


@dataclass(frozen=True)
class MarkovianFeedback:
    """Feedback Hamiltonian ``lam * I(t) * Sigma_x`` driven by the current."""

    lam: float
    quadrature: float = 0.0
    mode = Mode.MARKOVIAN


@dataclass(frozen=True)
class BayesianFeedback:
    """Drive ``f Sigma_x`` with ``f = lam * sgn(C(t) - C(t - k dt))``."""

    lam: float
    k: int = 1
    mode = Mode.BAYESIAN

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("controller window k must be a positive integer")


def controller_from_mode(mode, lam=0.0, k=1, quadrature=0.0):
    mode = Mode(mode)
    if mode is Mode.NONE:
        return NoFeedback()
    if mode is Mode.MARKOVIAN:
        return MarkovianFeedback(float(lam), float(quadrature))
    return BayesianFeedback(float(lam), int(k))


@dataclass(frozen=True)
class BayesianControllerState:
    """State of one trajectory's sign controller.

    ``history`` holds at most ``k`` past concurrences, oldest first.
    Before any change is seen the sign is +1; a change smaller than
    ``TIE_ATOL`` keeps the previous sign, so the output is always
    ``+lam`` or ``-lam``.
    """

    lam: float
    k: int = 1
    last_sign: int = 1
    last_concurrence: float = float("nan")
    history: tuple = field(default=())

    @classmethod
    def from_delta_t(cls, lam, delta_t, dt):
        return cls(lam, max(1, int(round(delta_t / dt))))


def bayesian_control(ctrl, rho):
    """Return ``(f, updated_state)`` for the conditioned state ``rho``.

    The comparison value is the concurrence ``k`` calls ago, or the oldest
    stored value while the buffer fills.
    """
    c = concurrence_psd(rho)
    old = ctrl.history[0] if ctrl.history else c
    delta = c - old
    sign = ctrl.last_sign
    if delta > TIE_ATOL:
        sign = 1
    elif delta < -TIE_ATOL:
        sign = -1
    history = (ctrl.history + (c,))[-ctrl.k:]
    new = replace(ctrl, last_sign=sign, last_concurrence=c, history=history)
    return ctrl.lam * sign, new


def markovian_trajectory_drift(rho, omega, lam, quadrature=0.0):
    """Drift and ``dW`` coefficient of the conditioned state under current feedback.

    With ``c`` the measured operator and ``F = Sigma_x``:
    drift = ``-i omega [F, rho] + D[c] rho - i lam [F, c rho + rho c^+]
    + lam^2 D[F] rho`` and diffusion = ``H[c - i lam F] rho``.
    """
    rho = np.asarray(rho, dtype=complex)
    c = measured_operator(quadrature)
    F = OPS.Sigma_x
    x = c @ rho + rho @ c.conj().T
    drift = (
        -1j * omega * (F @ rho - rho @ F)
        + dissipator(c, rho)
        - 1j * lam * (F @ x - x @ F)
        + lam * lam * dissipator(F, rho)
    )
    diffusion = h_superoperator(c - 1j * lam * F, rho)
    return drift, diffusion
