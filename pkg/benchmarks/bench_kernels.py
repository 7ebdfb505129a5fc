"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once untimed first so JIT compilation is excluded. The
two backends consume identical pick sequences, so their outputs are also
compared.
"""
import argparse
import time

import numpy as np

from emvs_bin import _jit
from emvs_bin.harness import replica_dataset
from emvs_bin.sdca import Loss, PenalizedProblem, SolverConfig, solve
from emvs_bin.ssvs import SsvsConfig, run_ssvs_probit


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--p", type=int, default=1000)
    args = ap.parse_args()
    if not _jit.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    x = rng.standard_normal((args.n, args.p))
    y = np.where(rng.random(args.n) < 0.5, 1.0, -1.0)
    pen = np.full(args.p, 0.7)
    cfg = SolverConfig(max_picks=5000, seed=1, gap_tolerance=0.0)
    d, _ = replica_dataset(0, n=args.n, p=args.p)
    ssvs_cfg = SsvsConfig(iterations=20, metropolis_steps_per_sweep=1000, seed=2)

    cases = {
        "prox-sdca logistic": lambda b: solve(PenalizedProblem(x, y, pen, Loss.LOGISTIC), cfg, backend=b).w,
        "sdca squared": lambda b: solve(PenalizedProblem(x, x[:, 0] + y, pen, Loss.SQUARED), cfg, backend=b).w,
        "ssvs 20 sweeps": lambda b: run_ssvs_probit(d, ssvs_cfg, backend=b).gamma_inclusion_freq,
    }
    print(f"n={args.n} p={args.p} repeat={args.repeat}")
    print(f"{'kernel':<22}{'numba s':>12}{'numpy s':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, run in cases.items():
        t_nb, out_nb = best_of(lambda: run("numba"), args.repeat)
        t_np, out_np = best_of(lambda: run("numpy"), args.repeat)
        diff = float(np.max(np.abs(out_nb - out_np)))
        print(f"{name:<22}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}{diff:>14.3g}")


if __name__ == "__main__":
    main()
