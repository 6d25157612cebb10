"""Time the compiled coordinate-descent kernel against the pure-Python fallback.

Usage: python3 benchmarks/bench_lasso.py [--dims 20 100 400] [--repeat 5]
"""

import argparse
import statistics
import time

import numpy as np

from l1bandit.solvers import DesignState, available_backends, design_update, lasso_solve


def build_state(d: int, t: int, seed: int) -> DesignState:
    rng = np.random.default_rng(seed)
    beta = np.zeros(d)
    beta[rng.choice(d, size=min(5, d), replace=False)] = rng.uniform(0, 1, min(5, d))
    state = DesignState(d)
    for x in rng.standard_normal((t, d)):
        design_update(state, x, float(x @ beta + rng.standard_normal()))
    return state


def time_solve(state: DesignState, lam: float, backend: str, repeat: int) -> tuple[float, np.ndarray]:
    times, beta = [], None
    for _ in range(repeat):
        start = time.perf_counter()
        beta = lasso_solve(state, lam, backend=backend).beta_hat
        times.append(time.perf_counter() - start)
    return statistics.median(times), beta


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[20, 100, 400])
    ap.add_argument("--rounds", type=int, default=2000)
    ap.add_argument("--lam", type=float, default=0.05)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'d':>6} " + " ".join(f"{b:>12}" for b in backends) + f" {'speedup':>9} {'max |diff|':>11}")
    for d in args.dims:
        state = build_state(d, args.rounds, seed=d)
        results = {b: time_solve(state, args.lam, b, args.repeat) for b in backends}
        row = f"{d:>6} " + " ".join(f"{results[b][0] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            (t_c, b_c), (t_p, b_p) = results["compiled"], results["python"]
            row += f" {t_p / t_c:>8.1f}x {np.abs(b_c - b_p).max():>11.1e}"
        print(row)


if __name__ == "__main__":
    main()
