"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints per-call times for the flow/gradient and Colebrook kernels at a few
array sizes, then the wall time of a full calibration on the bundled
three-cycle network with each backend swapped in.
"""
import argparse
import timeit
from contextlib import contextmanager

import numpy as np

import hydrocal.calibration.problem as problem_mod
import hydrocal.friction as friction_mod
from hydrocal import datasets
from hydrocal._backend import available_backends
from hydrocal.calibration import CalibrationOptions, CalibrationProblem, multistart_calibrate
from hydrocal.friction import PipeHydraulics
from hydrocal.network import FluidProperties
from hydrocal.steady_state import generate_measurement_sets


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.choice([0.04, 0.1, 0.3], size=n)
    hyd = [PipeHydraulics(ln, dd, None, FluidProperties()) for ln, dd in zip(rng.uniform(5, 500, n), d)]
    k = np.array([h.resistance for h in hyd])
    c = np.array([h.viscous_coefficient for h in hyd])
    eps = rng.uniform(0, 0.05, n) * d
    dh = rng.choice([-1.0, 1.0], n) * rng.uniform(0.01, 20.0, n)
    re = 10 ** rng.uniform(3.7, 7, n)
    return eps, dh, k, d, c, re


def _best(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


@contextmanager
def _using(kern):
    saved = friction_mod.kernels, problem_mod.kernels
    friction_mod.kernels = problem_mod.kernels = kern
    try:
        yield
    finally:
        friction_mod.kernels, problem_mod.kernels = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    names = sorted(backends)
    print("kernel timings (best of %d), microseconds per call" % args.repeat)
    print(f"{'kernel':<20}{'n':>8}" + "".join(f"{n:>12}" for n in names) + "     speedup")
    for n in (8, 24, 1_000, 100_000):
        eps, dh, k, d, c, re = _inputs(n)
        cases = {
            "flow_and_gradient": lambda kern: kern.flow_and_gradient(eps, dh, k, d, c, 1e-9),
            "turbulent_flow": lambda kern: kern.turbulent_flow(eps, dh, k, d, c, 1e-9),
            "colebrook_w": lambda kern: kern.colebrook_w(re, eps / d),
        }
        for label, call in cases.items():
            t = {nm: _best(lambda: call(backends[nm]), args.repeat) for nm in names}
            ratio = t["numpy"] / t["cython"] if "cython" in t else float("nan")
            print(f"{label:<20}{n:>8}" + "".join(f"{t[nm] * 1e6:>12.2f}" for nm in names)
                  + f"{ratio:>11.1f}x")

    net, sensors = datasets.three_cycle()
    problem = CalibrationProblem(net, sensors,
                                 generate_measurement_sets(net, datasets.three_cycle_loads(), sensors))
    opts = CalibrationOptions(seed=0, max_outer=7, outer_eps_f=0.0, outer_eps_x=0.0)
    print("\nfull calibration, three-cycle network, 7 launches")
    for nm in names:
        with _using(backends[nm]):
            t = _best(lambda: multistart_calibrate(problem, opts), max(1, args.repeat // 2))
            v = multistart_calibrate(problem, opts).merit
        print(f"  {nm:<8} {t * 1e3:8.1f} ms   final merit {v:.3e}")


if __name__ == "__main__":
    main()
