"""Parameter sweeps: stationary concurrence over (omega, lambda) and per-omega optima."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .algebra import check_density_matrix, conserved_R
from .entanglement import concurrence_of_stationary
from .feedback import BayesianFeedback
from .master import Mode
from .trajectories import INSTABILITY_TOL, StepInstabilityError, ensemble_average

__all__ = [
    "MCParams",
    "SweepResult",
    "NonStationaryWarning",
    "UnstableCellWarning",
    "sweep",
    "bayesian_cell",
    "argmax_smallest_abs",
]


class NonStationaryWarning(RuntimeWarning):
    """A Monte Carlo cell had not settled by ``t_final``."""


class UnstableCellWarning(RuntimeWarning):
    """A Monte Carlo cell was aborted because a trajectory diverged."""


@dataclass(frozen=True)
class MCParams:
    """Monte Carlo settings for Bayesian cells.

    ``lambda_grid`` passed to :func:`sweep` is the coarse stage; around
    each coarse optimum the grid is refined once at ``refine_step`` within
    one coarse spacing.  ``refine_step=None`` disables refinement.
    """

    dt: float = 1e-4
    t_final: float = 10.0
    n_traj: int = 1000
    master_seed: int = 0
    stride: int = 100
    k: int = 1
    refine_step: float | None = 0.05
    tail_fraction: float = 0.1
    threads: int | None = None
    backend: str | None = None
    scheme: str = "em"
    instability_tol: float = INSTABILITY_TOL


@dataclass(frozen=True)
class SweepResult:
    """Concurrence grid with per-omega maxima.

    Cells that were never evaluated (Bayesian refinement around another
    omega's optimum) hold ``nan``.  Cells that failed the stationarity test
    are marked in ``nonstationary``, cells whose ensemble diverged hold
    ``nan`` and are marked in ``unstable``; both are ignored by the maximum.
    """

    mode: Mode
    initial_state: np.ndarray
    omega_grid: np.ndarray
    lambda_grid: np.ndarray
    concurrence: np.ndarray
    c_hat: np.ndarray
    lambda_hat: np.ndarray
    statistical_error: np.ndarray | None = None
    nonstationary: np.ndarray | None = None
    unstable: np.ndarray | None = None
    quadrature: float = 0.0
    extra: dict = field(default_factory=dict)


def argmax_smallest_abs(values, lambdas):
    """Index of the maximum of ``values``; ties go to the smallest ``|lambda|``.

    ``nan`` entries are skipped.  Returns ``-1`` when every entry is ``nan``.
    """
    values = np.asarray(values, float)
    ok = np.isfinite(values)
    if not ok.any():
        return -1
    best = np.max(values[ok])
    cand = np.flatnonzero(ok & (values == best))
    lam = np.abs(np.asarray(lambdas, float)[cand])
    return int(cand[np.argmin(lam)])


def bayesian_cell(rho0, omega, lam, mc):
    """Stationary mean-state concurrence of one Bayesian ensemble.

    Returns ``(value, stderr, stationary, result)``.  ``value`` averages
    the mean-state concurrence over the last ``tail_fraction`` of the
    record; the cell counts as stationary when the two halves of that
    window differ by less than the final standard error.
    """
    res = ensemble_average(
        rho0, omega, BayesianFeedback(float(lam), mc.k), mc.dt, mc.t_final,
        mc.n_traj, mc.master_seed, stride=mc.stride, threads=mc.threads,
        backend=mc.backend, instability_tol=mc.instability_tol, scheme=mc.scheme,
    )
    c = res.mean_concurrence_of_mean
    t = res.times
    tail = c[t >= t[-1] * (1.0 - mc.tail_fraction) - 1e-12]
    half = len(tail) // 2
    se = float(res.standard_error[-1])
    if half == 0:
        stationary = False
    else:
        drift = abs(tail[:half].mean() - tail[-half:].mean())
        stationary = bool(drift < se) if np.isfinite(se) else False
    return float(tail.mean()), se, stationary, res


def _closed_form_grid(mode, R, omegas, lambdas, quadrature):
    grid = np.empty((len(omegas), len(lambdas)))
    for i, o in enumerate(omegas):
        for j, l in enumerate(lambdas):
            grid[i, j] = concurrence_of_stationary(o, l, mode, R, quadrature)
    return grid


def _refine(lambdas, best, step):
    spacing = np.min(np.diff(lambdas)) if len(lambdas) > 1 else step
    lo, hi = best - spacing, best + spacing
    n = int(round((hi - lo) / step))
    pts = lo + step * np.arange(n + 1)
    pts = pts[(pts >= lambdas.min() - 1e-12) & (pts <= lambdas.max() + 1e-12)]
    return np.round(pts, 12) + 0.0


def sweep(mode, initial_state, omega_grid, lambda_grid, mc_params=None,
          quadrature=0.0, progress=None):
    """Stationary concurrence on an (omega, lambda) grid.

    Parameters
    ----------
    mode : Mode or str
        ``none`` and ``markovian`` use the closed-form stationary state
        with ``R`` taken from ``initial_state``; ``bayesian`` runs an
        ensemble per cell.
    initial_state : (4, 4) array
    omega_grid, lambda_grid : sequences of float
        For ``none`` the lambda grid must be ``[0]``.
    mc_params : MCParams
        Required for, and only for, ``bayesian``.
    quadrature : float
        Measured quadrature phase for ``markovian``.
    progress : callable, optional
        Called as ``progress(omega, lam, value)`` after each Bayesian cell.
    """
    mode = Mode(mode)
    rho0 = np.asarray(initial_state, dtype=complex)
    check_density_matrix(rho0)
    omegas = np.asarray(omega_grid, float).ravel()
    lambdas = np.asarray(lambda_grid, float).ravel()
    if omegas.size == 0 or lambdas.size == 0:
        raise ValueError("omega and lambda grids must be nonempty")
    if (mc_params is not None) != (mode is Mode.BAYESIAN):
        raise ValueError("mc_params is required for bayesian mode and only there")
    if mode is Mode.NONE and np.any(lambdas != 0.0):
        raise ValueError("no-feedback sweeps take the lambda grid [0]")

    if mode is not Mode.BAYESIAN:
        R = min(max(conserved_R(rho0), 0.0), 2.0)
        grid = _closed_form_grid(mode, R, omegas, lambdas, quadrature)
        idx = [argmax_smallest_abs(row, lambdas) for row in grid]
        return SweepResult(
            mode=mode,
            initial_state=rho0,
            omega_grid=omegas,
            lambda_grid=lambdas,
            concurrence=grid,
            c_hat=grid[np.arange(len(omegas)), idx],
            lambda_hat=lambdas[idx],
            quadrature=float(quadrature),
        )

    mc = mc_params
    cells = {}

    def run(i, lam):
        key = (i, float(np.round(lam, 12)))
        if key not in cells:
            try:
                v, se, ok, _ = bayesian_cell(rho0, omegas[i], lam, mc)
            except StepInstabilityError as exc:
                warnings.warn(
                    f"cell omega={omegas[i]:g}, lambda={lam:g} aborted: {exc}",
                    UnstableCellWarning, stacklevel=3,
                )
                cells[key] = (np.nan, np.nan, False)
                if progress is not None:
                    progress(omegas[i], lam, np.nan)
                return cells[key]
            if not ok:
                warnings.warn(
                    f"cell omega={omegas[i]:g}, lambda={lam:g} not stationary by "
                    f"t={mc.t_final:g}; excluded from the optimum",
                    NonStationaryWarning, stacklevel=3,
                )
            cells[key] = (v, se, ok)
            if progress is not None:
                progress(omegas[i], lam, v)
        return cells[key]

    def best_of(i, lams):
        vals = [run(i, l) for l in lams]
        usable = np.array([v if ok else np.nan for v, _, ok in vals])
        j = argmax_smallest_abs(usable, lams)
        return None if j < 0 else lams[j]

    for i in range(len(omegas)):
        best = best_of(i, lambdas)
        if best is not None and mc.refine_step:
            best_of(i, _refine(lambdas, best, mc.refine_step))

    all_l = np.unique(np.array([k[1] for k in cells]))
    grid = np.full((len(omegas), len(all_l)), np.nan)
    err = np.full_like(grid, np.nan)
    flag = np.zeros(grid.shape, dtype=bool)
    bad = np.zeros(grid.shape, dtype=bool)
    col = {l: j for j, l in enumerate(all_l)}
    for (i, l), (v, se, ok) in cells.items():
        grid[i, col[l]] = v
        err[i, col[l]] = se
        bad[i, col[l]] = np.isnan(v)
        flag[i, col[l]] = not ok and not np.isnan(v)
    c_hat = np.full(len(omegas), np.nan)
    l_hat = np.full(len(omegas), np.nan)
    for i in range(len(omegas)):
        j = argmax_smallest_abs(np.where(flag[i] | bad[i], np.nan, grid[i]), all_l)
        if j >= 0:
            c_hat[i] = grid[i, j]
            l_hat[i] = all_l[j]
    return SweepResult(
        mode=mode,
        initial_state=rho0,
        omega_grid=omegas,
        lambda_grid=all_l,
        concurrence=grid,
        c_hat=c_hat,
        lambda_hat=l_hat,
        statistical_error=err,
        nonstationary=flag,
        unstable=bad,
    )
