"""Time the numba kernels against their numpy twins and check they agree.

    python benchmarks/bench_kernels.py [--max-exp 7] [--repeat 3]

The first numba call compiles (cached on disk afterwards); it is excluded
from the timings by a warm-up call.
"""

import argparse
import time

import numpy as np

from skelmax import _kernels
from skelmax.grid import ScalarField, abs_prefix, seven_q0, unit_q0
from skelmax.maxop import _centers, radius_steps
from skelmax.skeleton import face_codes, skeleton_union_boxes


def best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_sup(e, k, repeat):
    d = 2.0 ** -e
    rng = np.random.default_rng(e)
    f = ScalarField(seven_q0(2, d), rng.random(seven_q0(2, d).extent))
    table = abs_prefix(f)
    _, centers = _centers(table, unit_q0(2, d))
    radii = radius_steps(d, 1.0, 2.0)
    codes = face_codes(2, k).astype(np.int64)
    args = (table.flat, table.strides, centers, radii, codes, 1, table.mean)
    _kernels.sup_min_face_numba(*args)
    t_nb, (v_nb, a_nb) = best_of(lambda: _kernels.sup_min_face_numba(*args), repeat)
    t_np, (v_np, a_np) = best_of(lambda: _kernels.sup_min_face_numpy(*args), repeat)
    same = np.allclose(v_nb, v_np, rtol=0, atol=1e-12) and np.array_equal(a_nb, a_np)
    return t_np, t_nb, same


def bench_anneal(e, steps, repeat):
    d = 2.0 ** -e
    M = 2 ** e
    n, k = 2, 1
    q0 = unit_q0(n, d)
    off = np.array(q0.offset_in(seven_q0(n, d)))
    grids = np.meshgrid(*[np.arange(x) for x in q0.extent], indexing="ij")
    centers = np.stack([g.reshape(-1) for g in grids], axis=1) + off
    rng = np.random.default_rng(0)
    prop_i = rng.integers(0, centers.shape[0], steps)
    prop_R = rng.integers(M, 2 * M + 1, steps)
    u = rng.random(steps)
    temps = np.full(steps, 2.0)
    codes = face_codes(n, k).astype(np.int64)

    lo, hi = skeleton_union_boxes(centers, np.full(centers.shape[0], M), n, k, 1)
    counts0 = _kernels.stamp_boxes_bulk(seven_q0(n, d).extent, lo, hi, dtype=np.int32)

    def go(fn):
        counts = counts0.copy()
        st = np.full(centers.shape[0], M, dtype=np.int64)
        res = fn(counts, centers, st, codes, 1, prop_i, prop_R, u, temps)
        return res, counts, st

    go(_kernels.anneal_numba)
    t_nb, (r_nb, c_nb, s_nb) = best_of(lambda: go(_kernels.anneal_numba), repeat)
    t_np, (r_np, c_np, s_np) = best_of(lambda: go(_kernels.anneal_numpy), repeat)
    same = r_nb == r_np and np.array_equal(c_nb, c_np) and np.array_equal(s_nb, s_np)
    return t_np, t_nb, same


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-exp", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'kernel':<22}{'delta':>10}{'numpy s':>12}{'numba s':>12}{'speedup':>10}  agree")
    for e in range(4, args.max_exp + 1):
        for k in (0, 1):
            t_np, t_nb, same = bench_sup(e, k, args.repeat)
            print(f"{'sup_min_face k=' + str(k):<22}{'2^-' + str(e):>10}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}  {same}")
    for e in (4, 5):
        t_np, t_nb, same = bench_anneal(e, 2000, args.repeat)
        print(f"{'anneal 2000 moves':<22}{'2^-' + str(e):>10}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}  {same}")


if __name__ == "__main__":
    main()
