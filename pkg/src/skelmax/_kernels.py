"""Hot loops: numba versions plus pure-numpy fallbacks.

Set ``SKELMAX_NUMBA=0`` in the environment before import to force the numpy
path. Both paths take the same arguments and are checked against each other
in the test suite and in ``benchmarks/bench_kernels.py``.

Index conventions shared by all kernels
---------------------------------------
``P`` is a flattened inclusive prefix-sum table with a zero halo, so the sum
of cells ``[lo, hi)`` (per axis) is the signed sum of ``P`` at the 2^n corners.
``pstr`` holds its element strides. Face codes are int8 rows with 0 on free
axes and the sign (+1/-1) on fixed axes. A face of the skeleton centered at
cell ``c`` with radius ``R`` cells and half-width ``w`` cells covers
``[c - R - w, c + R + w)`` on free axes and ``[c + s*R - w, c + s*R + w)`` on
fixed ones.
"""

import os

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the bundled TBB is often too old; workqueue is always available
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SKELMAX_NUMBA", "1").lower() not in ("0", "false", "no", "off")


def backend():
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# sup over radii of min over faces of the face-box average

def sup_min_face_numpy(P, pstr, centers, radii, codes, w, mean):
    m, n = centers.shape
    best = np.full(m, -np.inf)
    arg = np.full(m, -1, dtype=np.int64)
    free = codes == 0
    ncorner = 1 << n
    for R in radii:
        R = int(R)
        worst = np.full(m, np.inf)
        for code, fr in zip(codes, free):
            off_lo = np.where(fr, -R - w, code * R - w).astype(np.int64)
            off_hi = np.where(fr, R + w, code * R + w).astype(np.int64)
            cnt = float(np.prod(off_hi - off_lo))
            lo = centers + off_lo
            hi = centers + off_hi
            tot = np.zeros(m)
            for corner in range(ncorner):
                idx = np.zeros(m, dtype=np.int64)
                neg = 0
                for a in range(n):
                    if (corner >> a) & 1:
                        idx += hi[:, a] * pstr[a]
                    else:
                        idx += lo[:, a] * pstr[a]
                        neg += 1
                if neg & 1:
                    tot -= P[idx]
                else:
                    tot += P[idx]
            np.minimum(worst, tot / cnt + mean, out=worst)
        upd = worst > best
        best[upd] = worst[upd]
        arg[upd] = R
    return best, arg


if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _sup_min_face_nb(P, pstr, centers, radii, codes, w, mean, best, arg):
        m, n = centers.shape
        nf = codes.shape[0]
        ncorner = 1 << n
        for ci in prange(m):
            lo = np.empty(n, np.int64)
            hi = np.empty(n, np.int64)
            b = -np.inf
            bR = -1
            for ri in range(radii.shape[0]):
                R = radii[ri]
                worst = np.inf
                for f in range(nf):
                    cnt = 1
                    for a in range(n):
                        s = codes[f, a]
                        if s == 0:
                            lo[a] = centers[ci, a] - R - w
                            hi[a] = centers[ci, a] + R + w
                        else:
                            mid = centers[ci, a] + s * R
                            lo[a] = mid - w
                            hi[a] = mid + w
                        cnt *= hi[a] - lo[a]
                    tot = 0.0
                    for corner in range(ncorner):
                        idx = 0
                        neg = 0
                        for a in range(n):
                            if (corner >> a) & 1:
                                idx += hi[a] * pstr[a]
                            else:
                                idx += lo[a] * pstr[a]
                                neg += 1
                        if neg & 1:
                            tot -= P[idx]
                        else:
                            tot += P[idx]
                    avg = tot / cnt + mean
                    if avg < worst:
                        worst = avg
                if worst > b:
                    b = worst
                    bR = R
            best[ci] = b
            arg[ci] = bR

    def sup_min_face_numba(P, pstr, centers, radii, codes, w, mean):
        m = centers.shape[0]
        best = np.empty(m)
        arg = np.empty(m, dtype=np.int64)
        _sup_min_face_nb(
            P, np.ascontiguousarray(pstr, dtype=np.int64),
            np.ascontiguousarray(centers, dtype=np.int64),
            np.ascontiguousarray(radii, dtype=np.int64),
            np.ascontiguousarray(codes, dtype=np.int64),
            np.int64(w), float(mean), best, arg,
        )
        return best, arg


def sup_min_face(P, pstr, centers, radii, codes, w, mean):
    """Return ``(best, argR)`` per center; ties keep the smallest radius."""
    if USE_NUMBA:
        return sup_min_face_numba(P, pstr, centers, radii, codes, w, mean)
    return sup_min_face_numpy(P, pstr, centers, radii, codes, w, mean)


# ---------------------------------------------------------------------------
# reference-counted box stamping (used by the witness search)

def stamp_box_numpy(counts, lo, hi, sign):
    """Add ``sign`` to every cell of the box; return the change in occupied cells."""
    sl = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
    view = counts[sl]
    if sign > 0:
        born = int(np.count_nonzero(view == 0))
        view += 1
        return born
    view -= 1
    return -int(np.count_nonzero(view == 0))


if HAVE_NUMBA:

    @njit(cache=True)
    def _stamp_box_nb(flat, cstr, lo, hi, sign):
        n = lo.shape[0]
        pos = lo.copy()
        change = 0
        while True:
            idx = 0
            for a in range(n):
                idx += pos[a] * cstr[a]
            v = flat[idx]
            if sign > 0:
                if v == 0:
                    change += 1
                flat[idx] = v + 1
            else:
                if v == 1:
                    change -= 1
                flat[idx] = v - 1
            a = n - 1
            while a >= 0:
                pos[a] += 1
                if pos[a] < hi[a]:
                    break
                pos[a] = lo[a]
                a -= 1
            if a < 0:
                break
        return change

    def stamp_box_numba(counts, lo, hi, sign):
        if np.any(np.asarray(hi) <= np.asarray(lo)):
            return 0
        cstr = np.array(counts.strides, dtype=np.int64) // counts.itemsize
        return int(_stamp_box_nb(
            counts.reshape(-1), cstr,
            np.asarray(lo, dtype=np.int64), np.asarray(hi, dtype=np.int64), int(sign),
        ))


def stamp_box(counts, lo, hi, sign):
    if USE_NUMBA:
        return stamp_box_numba(counts, lo, hi, sign)
    return stamp_box_numpy(counts, lo, hi, sign)


def stamp_boxes_bulk(shape, lo, hi, weights=None, dtype=float):
    """Rasterize many boxes at once with an n-d difference array.

    Returns per-cell sums of ``weights`` (default 1) over the boxes covering
    each cell. O(B * 2^n + cells).
    """
    n = len(shape)
    lo = np.asarray(lo, dtype=np.int64).reshape(-1, n)
    hi = np.asarray(hi, dtype=np.int64).reshape(-1, n)
    if weights is None:
        weights = np.ones(lo.shape[0], dtype=dtype)
    weights = np.asarray(weights, dtype=dtype)
    diff = np.zeros(tuple(s + 1 for s in shape), dtype=dtype)
    for corner in range(1 << n):
        idx = []
        neg = 0
        for a in range(n):
            if (corner >> a) & 1:
                idx.append(hi[:, a])
                neg += 1
            else:
                idx.append(lo[:, a])
        np.add.at(diff, tuple(idx), -weights if neg & 1 else weights)
    for a in range(n):
        np.cumsum(diff, axis=a, out=diff)
    return diff[tuple(slice(0, s) for s in shape)]


# ---------------------------------------------------------------------------
# Metropolis re-stamping of one skeleton per step (witness annealing)
#
# Proposals (center index, new radius, uniform draw, temperature) are drawn by
# the caller, so both backends follow the same trajectory for a given seed.

def _restamp_numpy(counts, center, R, codes, w, sign):
    change = 0
    for code in codes:
        free = code == 0
        lo = np.where(free, center - R - w, center + code * R - w)
        hi = np.where(free, center + R + w, center + code * R + w)
        change += stamp_box_numpy(counts, lo, hi, sign)
    return change


def anneal_numpy(counts, centers, steps, codes, w, prop_i, prop_R, u, temps):
    occupied_change = 0
    accepted = 0
    for j in range(prop_i.shape[0]):
        i = prop_i[j]
        old, new = steps[i], prop_R[j]
        if old == new:
            continue
        d = _restamp_numpy(counts, centers[i], old, codes, w, -1)
        d += _restamp_numpy(counts, centers[i], new, codes, w, 1)
        if d <= 0 or u[j] < np.exp(-d / temps[j]):
            steps[i] = new
            occupied_change += d
            accepted += 1
        else:
            _restamp_numpy(counts, centers[i], new, codes, w, -1)
            _restamp_numpy(counts, centers[i], old, codes, w, 1)
    return occupied_change, accepted


if HAVE_NUMBA:

    @njit(cache=True)
    def _restamp_nb(flat, cstr, center, R, codes, w, sign, lo, hi):
        n = center.shape[0]
        change = 0
        for f in range(codes.shape[0]):
            for a in range(n):
                s = codes[f, a]
                if s == 0:
                    lo[a] = center[a] - R - w
                    hi[a] = center[a] + R + w
                else:
                    lo[a] = center[a] + s * R - w
                    hi[a] = center[a] + s * R + w
            change += _stamp_box_nb(flat, cstr, lo, hi, sign)
        return change

    @njit(cache=True)
    def _anneal_nb(flat, cstr, centers, steps, codes, w, prop_i, prop_R, u, temps):
        n = centers.shape[1]
        lo = np.empty(n, np.int64)
        hi = np.empty(n, np.int64)
        occupied_change = 0
        accepted = 0
        for j in range(prop_i.shape[0]):
            i = prop_i[j]
            old = steps[i]
            new = prop_R[j]
            if old == new:
                continue
            c = centers[i]
            d = _restamp_nb(flat, cstr, c, old, codes, w, -1, lo, hi)
            d += _restamp_nb(flat, cstr, c, new, codes, w, 1, lo, hi)
            if d <= 0 or u[j] < np.exp(-d / temps[j]):
                steps[i] = new
                occupied_change += d
                accepted += 1
            else:
                _restamp_nb(flat, cstr, c, new, codes, w, -1, lo, hi)
                _restamp_nb(flat, cstr, c, old, codes, w, 1, lo, hi)
        return occupied_change, accepted

    def anneal_numba(counts, centers, steps, codes, w, prop_i, prop_R, u, temps):
        cstr = np.array(counts.strides, dtype=np.int64) // counts.itemsize
        d, acc = _anneal_nb(counts.reshape(-1), cstr, centers, steps, codes, np.int64(w),
                            prop_i, prop_R, u, temps)
        return int(d), int(acc)


def anneal(counts, centers, steps, codes, w, prop_i, prop_R, u, temps):
    """Run the proposals in order, mutating ``counts`` and ``steps`` in place.

    Returns ``(change in occupied cells, accepted moves)``. ``counts`` must be a
    C-contiguous signed integer array.
    """
    centers = np.ascontiguousarray(centers, dtype=np.int64)
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    prop_i = np.ascontiguousarray(prop_i, dtype=np.int64)
    prop_R = np.ascontiguousarray(prop_R, dtype=np.int64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    temps = np.ascontiguousarray(temps, dtype=np.float64)
    if USE_NUMBA:
        return anneal_numba(counts, centers, steps, codes, w, prop_i, prop_R, u, temps)
    return anneal_numpy(counts, centers, steps, codes, w, prop_i, prop_R, u, temps)
