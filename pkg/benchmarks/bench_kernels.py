"""Compare the numba kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

The script re-runs itself in two subprocesses, one with
``DGFRAC_DISABLE_NUMBA=1``, because the flag is read at import time.  Each
worker times every kernel (best of ``repeat`` after one warm-up call, so JIT
compilation is excluded) and reports a checksum; the parent prints a table
and confirms both paths agree.
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np


def _cases():
    from dgfrac.femspace import BoundaryData
    from dgfrac.kernels import box_qp, clip_segment_triangles, covered_lengths, union_labels
    from dgfrac.mesh import MeshParams, PolygonalDomain, build_regular
    from dgfrac.minimizer import MinimizeOptions, brute_force_oracle, incremental_minimize

    rng = np.random.default_rng(0)
    sq = PolygonalDomain.unit_square()
    R16 = build_regular(sq, MeshParams(1 / 16))
    R4 = build_regular(sq, MeshParams(1 / 4))
    R1 = build_regular(sq, MeshParams(1.0))

    n = 3 * 4 * R16.n_triangles
    pa = rng.integers(0, n, n // 2)
    pb = rng.integers(0, n, n // 2)

    edges = R16.edge_rows
    k = 40
    y = rng.choice(np.arange(1, 16) / 16, k)
    x0 = rng.uniform(0, 0.5, k)
    gamma = np.c_[x0, y, x0 + rng.uniform(0.1, 0.5, k), y]

    tris = R16.points[R16.triangles]
    p, q = np.array([0.03, 0.11]), np.array([0.97, 0.83])

    M = rng.normal(size=(80, 80))
    H = M @ M.T + 80 * np.eye(80)
    f = 50 * rng.normal(size=80)
    lo, hi = -np.ones(80), np.ones(80)

    g1 = BoundaryData(R1, rng.uniform(-1.5, 1.5, R1.n_points))
    grid = (0.25, 0.5, 0.75)
    g4 = BoundaryData.from_function(R4, lambda x, y: 2 * y)

    return {
        "union_labels": lambda: union_labels(n, pa, pb)[0].sum(),
        "covered_lengths": lambda: covered_lengths(edges, gamma, 1e-12).sum(),
        "clip_segment_triangles": lambda: sum(a.sum() for a in clip_segment_triangles(p, q, tris, 1e-12)),
        "box_qp": lambda: box_qp(H, f, lo, hi).sum(),
        "oracle (enumerate_bulk)": lambda: brute_force_oracle(
            R1, 0.25, grid, g1, opts=MinimizeOptions(t_grid=grid)
        ).energy.total,
        "local search eps=1/4": lambda: incremental_minimize(
            R4, 0.25, g4, opts=MinimizeOptions(restarts=2)
        ).energy.total,
    }


def worker(repeat: int) -> dict:
    from dgfrac.kernels import USING_NUMBA

    out = {"numba": USING_NUMBA, "cases": {}}
    for name, fn in _cases().items():
        value = float(fn())  # warm-up (and JIT compile)
        number = 1
        while timeit.timeit(fn, number=number) < 0.05 and number < 10_000:
            number *= 4
        best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
        out["cases"][name] = {"seconds": best, "checksum": value}
    return out


def _spawn(disable: bool, repeat: int) -> dict:
    env = dict(os.environ)
    if disable:
        env["DGFRAC_DISABLE_NUMBA"] = "1"
    else:
        env.pop("DGFRAC_DISABLE_NUMBA", None)
    proc = subprocess.run(
        [sys.executable, __file__, "--worker", "--repeat", str(repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    ap.add_argument("--json", default=None, help="also write the results here")
    args = ap.parse_args(argv)
    if args.worker:
        print(json.dumps(worker(args.repeat)))
        return 0

    jit = _spawn(False, args.repeat)
    ref = _spawn(True, args.repeat)
    if not jit["numba"]:
        print("warning: numba unavailable; both columns use the fallback")
    print(f"{'kernel':<26}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}  agree")
    ok = True
    for name, a in jit["cases"].items():
        b = ref["cases"][name]
        agree = bool(np.isclose(a["checksum"], b["checksum"], rtol=1e-9, atol=1e-9))
        ok &= agree
        print(
            f"{name:<26}{1e3 * a['seconds']:>12.3f}{1e3 * b['seconds']:>12.3f}"
            f"{b['seconds'] / a['seconds']:>9.1f}x  {'yes' if agree else 'NO'}"
        )
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": jit, "fallback": ref}, fh, indent=1)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
