"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is called once before timing so numba compilation is excluded.
"""
from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from subgeom import _accel


def _cases(rng):
    n = 200_000
    xs, ys = np.sort(rng.normal(size=n)), np.sort(rng.normal(1.0, 2.0, size=n))
    w = np.full(n, 1.0 / n)
    yield "quantile_sweep", (xs, w, ys, w), _accel.quantile_sweep_numba, _accel.quantile_sweep_numpy

    a, b = rng.normal(size=(500, 11, 1)), rng.normal(size=(500, 11, 1))
    yield "sup_cost 500x500x11", (a, b, 1.0), _accel.sup_cost_numba, _accel.sup_cost_numpy

    n_traj, n_hist, n_steps = 2000, 101, 2000
    path = np.zeros((n_traj, n_hist + n_steps))
    path[:, :n_hist] = 2.0
    noise = rng.normal(size=(n_traj, n_steps))
    tail = (n_hist - 1, n_steps, 0.01, 100, _accel.DRIFT_VK, 1.0, 0.5, 1.0, 0.5, 1.5, 1e6)

    def em(kernel):
        def run():
            kernel(path.copy(), noise, *tail)
        return run

    yield "em_delay 2000 paths x 2000 steps", (), em(_accel.em_delay_numba), em(_accel.em_delay_numpy)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':36s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, call_args, fast, slow in _cases(rng):
        fast(*call_args)  # compile
        slow(*call_args)
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat))
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat))
        rows.append({"kernel": name, "numba_s": t_fast, "numpy_s": t_slow, "speedup": t_slow / t_fast})
        print(f"{name:36s} {t_fast * 1e3:10.2f} {t_slow * 1e3:10.2f} {t_slow / t_fast:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
