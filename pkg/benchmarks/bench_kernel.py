"""Time the compiled trajectory kernel against the numpy fallback.

Both backends integrate the same block of trajectories with the same
noise; the script checks that they agree and prints microseconds per
trajectory step for each scheme and controller.

    python3 benchmarks/bench_kernel.py --n-traj 32 --steps 2000
"""
import argparse
import time

import numpy as np

from entfeedback import _backend
from entfeedback.algebra import ket_projector, to_real16
from entfeedback.feedback import BayesianFeedback, MarkovianFeedback, NoFeedback
from entfeedback.trajectories import kernel_operators, trajectory_rng, wiener_stream

CONTROLLERS = {
    "none": NoFeedback(),
    "markovian": MarkovianFeedback(-0.8),
    "bayesian": BayesianFeedback(1.0),
}


def run(backend, ops, x0, dt, dW, stride):
    _, block = _backend.get(backend)
    t0 = time.perf_counter()
    out = ops.call(block, x0, dt, dW, stride, 1e9)
    return time.perf_counter() - t0, out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-traj", type=int, default=32)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--omega", type=float, default=5.0)
    p.add_argument("--stride", type=int, default=100)
    args = p.parse_args()

    if not _backend.HAVE_EXTENSION:
        raise SystemExit("compiled kernel not built; nothing to compare")
    x0 = to_real16(ket_projector("10"))
    dW = np.stack([wiener_stream(trajectory_rng(0, i), args.dt, args.steps)
                   for i in range(args.n_traj)])
    n = args.n_traj * args.steps
    print(f"{args.n_traj} trajectories x {args.steps} steps, dt = {args.dt:g}")
    print(f"{'scheme':<7}{'control':<11}{'compiled us':>12}{'python us':>11}"
          f"{'speedup':>9}{'max diff':>10}")
    for scheme in ("em", "kraus"):
        for name, ctl in CONTROLLERS.items():
            ops = kernel_operators(args.omega, ctl, scheme, args.dt)
            tc, oc = run("compiled", ops, x0, args.dt, dW, args.stride)
            tp, op = run("python", ops, x0, args.dt, dW, args.stride)
            diff = np.nanmax(np.abs(oc[0] - op[0]))
            print(f"{scheme:<7}{name:<11}{1e6 * tc / n:>12.3f}{1e6 * tp / n:>11.3f}"
                  f"{tp / tc:>9.1f}{diff:>10.1e}")


if __name__ == "__main__":
    main()
