"""Compiled vs pure-Python attempt integrator.

Runs the same batch of attempts through both backends, checks the results
are bit-identical and reports wall-clock time per attempt.

    python benchmarks/bench_kernel.py --attempts 200
"""

import argparse
import time

import numpy as np

from perchsim import _kernel_py
from perchsim.core import catalog_perch
from perchsim.dynamics import SAMPLE_RATE, ApproachScenario, Disturbance, ImpactModel

try:
    from perchsim import _kernel
except ImportError:  # extension not built
    _kernel = None


def workload(n, seed, record):
    model = ImpactModel.default()
    rng = np.random.default_rng(seed)
    every = int(round(1.0 / (SAMPLE_RATE * 5e-5))) if record else 0
    jobs = []
    for _ in range(n):
        v = float(rng.uniform(0.2, 1.6))
        theta = float(rng.uniform(0.0, 12.0))
        sc = ApproachScenario(catalog_perch("wood-40", theta), impact_velocity=v)
        dist = Disturbance.draw(rng, 1.0, model.cal)
        jobs.append(model.params(sc, dist, stop_early=not record, every=every))
    rows = int(SAMPLE_RATE) + 2 if record else 0
    return jobs, rows


def run(integrate, jobs, rows):
    out = []
    t0 = time.perf_counter()
    for p in jobs:
        rec = np.zeros((rows, 5))
        out.append((integrate(p, rec), rec))
    return time.perf_counter() - t0, out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--attempts", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--record", action="store_true", help="record 250 Hz traces (full horizon)")
    args = ap.parse_args()

    jobs, rows = workload(args.attempts, args.seed, args.record)
    t_py, res_py = run(_kernel_py.integrate, jobs, rows)
    print(f"python : {t_py:8.3f} s  ({1e3 * t_py / len(jobs):7.3f} ms/attempt)")
    if _kernel is None:
        print("cython : extension not built")
        return
    t_cy, res_cy = run(_kernel.integrate, jobs, rows)
    identical = all(a == b and np.array_equal(ra, rb) for (a, ra), (b, rb) in zip(res_py, res_cy))
    print(f"cython : {t_cy:8.3f} s  ({1e3 * t_cy / len(jobs):7.3f} ms/attempt)")
    print(f"speedup: {t_py / t_cy:8.1f} x")
    print(f"bit-identical results: {identical}")


if __name__ == "__main__":
    main()
