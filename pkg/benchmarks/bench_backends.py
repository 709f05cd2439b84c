"""Compare the compiled and pure-Python cascade kernels.

Times solve_cascade on a seeded batch of random problems and on the bundled
reach scenario, once per available backend.

    python benchmarks/bench_backends.py [--problems 500] [--repeats 3]
"""

import argparse
import time

import numpy as np

from sotbt.cascade import (CascadeProblem, LevelConstraint,
                           available_backends, solve_cascade)
from sotbt.scenario import load_bundled_scenario, run


def random_problems(count, n=7, seed=0):
    problems = []
    for k in range(count):
        rng = np.random.default_rng([seed, k])
        levels = []
        for p in range(int(rng.integers(2, 4))):
            m = int(rng.integers(1, 5))
            levels.append(LevelConstraint(
                level=p + 1,
                A=rng.uniform(-1.0, 1.0, size=(m, n)),
                b=rng.uniform(-1.0, 1.0, size=m)))
        problems.append(CascadeProblem(n=n, levels=levels))
    return problems


def bench_cascades(problems, backend, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        for problem in problems:
            solve_cascade(problem, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best / len(problems)


def bench_scenario(backend, repeats):
    scenario = load_bundled_scenario("fig4_reach")
    run(scenario, backend=backend)  # warm up
    best = np.inf
    for _ in range(repeats):
        result = run(scenario, backend=backend)
        best = min(best, result.summary["mean_step_wall_ms"])
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--problems", type=int, default=500)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = available_backends()
    problems = random_problems(args.problems)

    print(f"backends available: {', '.join(backends)}")
    print(f"{'backend':<10} {'cascade us/solve':>17} {'scenario ms/step':>17}")
    baseline = None
    for backend in backends:
        per_solve = bench_cascades(problems, backend, args.repeats)
        per_step = bench_scenario(backend, args.repeats)
        note = ""
        if baseline is None:
            baseline = per_solve
        else:
            note = f"  ({baseline / per_solve:.2f}x vs {backends[0]})"
        print(f"{backend:<10} {per_solve * 1e6:>17.1f} {per_step:>17.3f}"
              + note)


if __name__ == "__main__":
    main()
