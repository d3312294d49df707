#!/usr/bin/env python3
"""Reference runs of pycma on the benchmark functions used by the CMA-ES tests.

Prints, per seed, the evaluations needed to reach the target and the best value
found within the evaluation budget. Used to pin the thresholds in tests/.
"""
import numpy as np
import cma


def sphere(x):
    return float(np.dot(x, x))


def rosenbrock(x):
    x = np.asarray(x)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def run(f, x0, sigma0, budget, target, seed):
    es = cma.CMAEvolutionStrategy(x0, sigma0, {
        "seed": seed, "verbose": -9, "maxfevals": budget,
        "ftarget": -np.inf, "tolfun": 0, "tolx": 0, "tolfunhist": 0,
        "tolstagnation": 10**9, "CMA_active": False})
    evals, best, hit = 0, np.inf, None
    while evals < budget:
        xs = es.ask()
        fs = [f(x) for x in xs]
        for v in fs:
            evals += 1
            best = min(best, v)
            if hit is None and best < target:
                hit = evals
        es.tell(xs, fs)
    return hit, best


if __name__ == "__main__":
    print("sphere n=10 sigma0=0.5 m0=ones budget=2000 target=1e-10")
    for s in range(1, 11):
        print("  seed", s, run(sphere, np.ones(10), 0.5, 2000, 1e-10, s))
    print("rosenbrock n=5 sigma0=0.5 m0=zeros budget=15000 target=1e-6")
    ok = 0
    for s in range(1, 11):
        hit, best = run(rosenbrock, np.zeros(5), 0.5, 15000, 1e-6, s)
        ok += hit is not None
        print("  seed", s, hit, best)
    print("rosenbrock successes:", ok, "/ 10")
