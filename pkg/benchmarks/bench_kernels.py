"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--arrivals 50000] [--json out.json]

Each kernel runs on the example1 preset at q=0.8 and the default step; the
best of ``--repeat`` wall-clock times is reported.
"""
import argparse
import json
import time

from dss_meanfield import _pykernels, meanfield, simulator
from dss_meanfield.config import example1

try:
    from dss_meanfield import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def use(mod):
    meanfield.kernels = mod
    simulator.kernels = mod


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--arrivals", type=int, default=50_000, help="simulated arrivals per run")
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args(argv)

    cfg = example1(0.8)
    sim = simulator.SimConfig(n=300, cfg=cfg, arrivals=args.arrivals, replications=1, seed=1)
    jobs = {
        "solve_dde": lambda: meanfield.solve_dde(cfg),
        "solve_ide": lambda: meanfield.solve_ide(cfg),
        "simulate": lambda: simulator.run(sim, keep_samples=False),
    }
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled kernels not built; timing the fallback only")

    results = {}
    for bname, mod in backends.items():
        use(mod)
        results[bname] = {name: best_of(fn, args.repeat) for name, fn in jobs.items()}

    print(f"{'kernel':<10}" + "".join(f"{b:>12}" for b in results) + ("     speedup" if len(results) > 1 else ""))
    for name in jobs:
        row = f"{name:<10}" + "".join(f"{results[b][name]:11.3f}s" for b in results)
        if len(results) > 1:
            row += f"{results['python'][name] / results['cython'][name]:11.1f}x"
        print(row)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"arrivals": args.arrivals, "seconds": results}, fh, indent=2)


if __name__ == "__main__":
    main()
