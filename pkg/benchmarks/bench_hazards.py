"""Compare the compiled and pure-Python hazard-sweep kernels.

Run:  python3 benchmarks/bench_hazards.py [n_accesses]
"""

import random
import sys
import time
from types import SimpleNamespace

from pucoord.sim import hazards


def synth_trace(n, seed=0):
    rng = random.Random(seed)
    t0s = sorted(rng.uniform(0, n / 4) for _ in range(n))
    recs = []
    for t in t0s:
        recs.append(SimpleNamespace(
            t0=t, t1=t + rng.uniform(0.5, 40.0),
            addr=rng.randrange(0, n) * 64,
            length=rng.randrange(1, 1024),
            rw=rng.choice("rrw"), pid=0, group="LD",
        ))
    return recs


def bench(backend, recs, repeat=3):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t = time.perf_counter()
        result = hazards.detect_hazards(recs, limit=1 << 30, backend=backend)
        best = min(best, time.perf_counter() - t)
    return best, len(result)


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
    recs = synth_trace(n)
    print(f"trace: {n} accesses (default backend: {hazards.BACKEND})")
    t_py, h_py = bench("python", recs)
    print(f"python    {t_py * 1e3:9.1f} ms   {h_py} hazards")
    if hazards.BACKEND == "compiled":
        t_c, h_c = bench("compiled", recs)
        print(f"compiled  {t_c * 1e3:9.1f} ms   {h_c} hazards")
        assert h_py == h_c, "backend mismatch"
        print(f"speedup   {t_py / t_c:9.1f}x")
    else:
        print("compiled kernel not built; skipping comparison")


if __name__ == "__main__":
    main()
