"""Compare the compiled and pure-Python mesh evaluators.

    python3 benchmarks/bench_kernels.py [--repeats 2000] [--iterations 2000]
"""
import argparse
import time

import numpy as np

from mesh_anneal import kernels
from mesh_anneal.annealer import AnnealConfig, optimize
from mesh_anneal.mesh import build_mesh


def per_call(fn, repeats):
    fn()
    t = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t) / repeats


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=2000)
    ap.add_argument("--iterations", type=int, default=2000)
    args = ap.parse_args()

    mesh = build_mesh("et", 8, 0.65)
    p = mesh.packed
    pack = (p.top, p.c, p.s, p.pidx, p.side, mesh.n_modes)
    target = np.eye(8)[5]
    phases = np.random.default_rng(0).uniform(0, 2 * np.pi, mesh.n_phases)
    backends = {"python": kernels.PyMeshEvaluator(*pack)}
    if kernels.BACKEND == "cython":
        backends["cython"] = kernels.MeshEvaluator(*pack)
    else:
        print("compiled extension unavailable; timing the fallback only")

    cfg = AnnealConfig(iterations=args.iterations, dims=mesh.n_phases)
    times = {}
    print(f"{'backend':<8}{'eval_us':>10}{'anneal_s':>10}")
    for name, ev in backends.items():
        t_eval = per_call(lambda: ev.infidelity(phases, 0, target), args.repeats)
        t0 = time.perf_counter()
        optimize(lambda x: ev.infidelity(x, 0, target), cfg)
        t_run = time.perf_counter() - t0
        times[name] = (t_eval, t_run)
        print(f"{name:<8}{1e6 * t_eval:>10.2f}{t_run:>10.3f}")
    if len(times) == 2:
        ev_ratio = times["python"][0] / times["cython"][0]
        run_ratio = times["python"][1] / times["cython"][1]
        print(f"speedup: {ev_ratio:.1f}x per evaluation, {run_ratio:.1f}x per anneal "
              f"({args.iterations} iterations)")


if __name__ == "__main__":
    main()
