"""Plane bookkeeping for k-faces, greedy one-face-per-skeleton selection, and
brute-force checks of the plane-count lower bound behind it.

Coordinates are keyed exactly: centers and radii must be integer multiples of
``delta/2`` (this covers both lattice points and cell centers of a
``delta``-grid), and plane offsets are stored as integers in those units.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import HypothesisViolated, SkelmaxError
from .skeleton import FaceId, enumerate_faces, face_codes

_TOL = 1e-9


def selection_exponent(n, k):
    """``(n-k)(2n-1)/(2n^2)``: the plane-count growth exponent."""
    return (n - k) * (2 * n - 1) / (2 * n * n)


def _half_units(values, delta):
    v = np.asarray(values, dtype=float) * (2.0 / delta)
    q = np.round(v)
    if np.any(np.abs(v - q) > _TOL * np.maximum(1.0, np.abs(v))):
        raise SkelmaxError("off-grid", f"coordinates {np.asarray(values).tolist()} are not multiples of delta/2")
    return q.astype(np.int64)


@dataclass(frozen=True, order=True)
class PlaneKey:
    """Identity of an affine coordinate k-plane: its normal axes and their offsets."""

    normal: tuple
    offset: tuple  # integer multiples of delta/2
    delta: float = field(default=1.0, compare=False)

    def offset_values(self):
        return tuple(o * self.delta / 2 for o in self.offset)

    def token(self):
        axes = ",".join(str(a + 1) for a in self.normal)
        z = ",".join(repr(v) for v in self.offset_values())
        return f"J={axes};z={z}"


def plane_of_face(s, face, delta):
    """The plane containing ``face`` of skeleton ``s``: ``x_J + sigma r`` on the normal axes."""
    c2 = _half_units(s.center, delta)
    r2 = int(_half_units([s.r], delta)[0])
    J = face.fixed
    off = tuple(int(c2[a] + sg * r2) for a, sg in zip(J, face.sigma))
    return PlaneKey(J, off, delta)


@dataclass
class Stage:
    remaining: int
    active_planes: int
    plane: PlaneKey
    assigned: int


@dataclass
class SelectionCertificate:
    u: int
    n: int
    k: int
    per_plane_counts: dict
    stages: list
    tail_size: int

    @property
    def face_count(self):
        return math.comb(self.n, self.k) * 2 ** (self.n - self.k)

    @property
    def exponent(self):
        return selection_exponent(self.n, self.k)

    @property
    def tail_bound(self):
        return self.u ** (1 - self.exponent)

    @property
    def max_per_plane(self):
        return max(self.per_plane_counts.values()) if self.per_plane_counts else 0

    def problems(self):
        """Violated certificate invariants, as readable strings (empty if sound)."""
        out = []
        N = self.face_count
        for i, st in enumerate(self.stages):
            if st.assigned * st.active_planes > st.remaining * N:
                out.append(f"stage {i}: {st.assigned} > {st.remaining}*{N}/{st.active_planes}")
        if self.tail_size > self.tail_bound + _TOL:
            out.append(f"tail {self.tail_size} > u^(1-e) = {self.tail_bound:.6g}")
        if sum(st.assigned for st in self.stages) + self.tail_size != self.u:
            out.append("stage and tail counts do not add up to u")
        if sum(self.per_plane_counts.values()) != self.u:
            out.append("per-plane counts do not add up to u")
        return out

    def to_json(self):
        return {
            "u": self.u, "n": self.n, "k": self.k,
            "exponent": self.exponent,
            "tail_size": self.tail_size,
            "tail_bound": self.tail_bound,
            "max_per_plane": self.max_per_plane,
            "per_plane_counts": {p.token(): c for p, c in sorted(self.per_plane_counts.items())},
            "stages": [
                {"remaining": s.remaining, "active_planes": s.active_planes,
                 "plane": s.plane.token(), "assigned": s.assigned}
                for s in self.stages
            ],
            "problems": self.problems(),
        }


def _plane_ids(c2, r2, n, k):
    """Per (skeleton, face) plane ids ranked in PlaneKey order, and the unique key rows."""
    codes = face_codes(n, k).astype(np.int64)
    faces = enumerate_faces((n, k))
    u = c2.shape[0]
    classes = sorted({f.fixed for f in faces})
    class_rank = {J: i for i, J in enumerate(classes)}
    rows = np.empty((u, len(faces), 1 + (n - k)), dtype=np.int64)
    for fi, (f, code) in enumerate(zip(faces, codes)):
        J = list(f.fixed)
        rows[:, fi, 0] = class_rank[f.fixed]
        rows[:, fi, 1:] = c2[:, J] + code[J][None, :] * r2[:, None]
    keys, inv = np.unique(rows.reshape(-1, rows.shape[-1]), axis=0, return_inverse=True)
    return inv.reshape(u, len(faces)), keys, classes


def greedy_select_indices(c2, r2, n, k, delta=1.0):
    """Greedy selection on integer (delta/2-unit) data; returns ``(face_index, certificate)``.

    While more than ``u^(1-e)`` skeletons remain, take the plane met by the
    fewest remaining skeletons (ties: smallest PlaneKey) and give each of those
    skeletons its face in that plane. Leftovers get the canonical first face.
    """
    c2 = np.asarray(c2, dtype=np.int64).reshape(-1, n)
    r2 = np.asarray(r2, dtype=np.int64).reshape(-1)
    u = c2.shape[0]
    if u == 0:
        raise SkelmaxError("empty-input", "no skeletons given")
    if (r2 <= 0).any():
        raise SkelmaxError("invalid-radius", "radii must be positive")
    ids, keys, classes = _plane_ids(c2, r2, n, k)
    nplanes = keys.shape[0]

    def key_of(j):
        row = keys[j]
        return PlaneKey(classes[row[0]], tuple(int(v) for v in row[1:]), delta)

    count = np.bincount(ids.reshape(-1), minlength=nplanes).astype(np.int64)
    order = np.argsort(ids.reshape(-1), kind="stable")
    starts = np.concatenate([[0], np.cumsum(np.bincount(ids.reshape(-1), minlength=nplanes))])
    members = order // ids.shape[1]

    heap = [(int(count[j]), j) for j in range(nplanes)]
    heapq.heapify(heap)
    alive = np.ones(u, dtype=bool)
    chosen = np.full(u, -1, dtype=np.int64)
    active = nplanes
    remaining = u
    threshold = u ** (1 - selection_exponent(n, k))
    stages = []
    while remaining > threshold:
        cnt, j = heapq.heappop(heap)
        if cnt != count[j] or cnt == 0:
            continue
        mem = members[starts[j]:starts[j + 1]]
        mem = mem[alive[mem]]
        stages.append(Stage(remaining, active, key_of(j), int(mem.size)))
        for i in mem:
            chosen[i] = int(np.flatnonzero(ids[i] == j)[0])
            alive[i] = False
            for jj in ids[i]:
                count[jj] -= 1
                if count[jj] == 0:
                    active -= 1
                else:
                    heapq.heappush(heap, (int(count[jj]), int(jj)))
        remaining -= int(mem.size)
    tail = np.flatnonzero(alive)
    chosen[tail] = 0
    plane_of_choice = ids[np.arange(u), chosen]
    per = np.bincount(plane_of_choice, minlength=nplanes)
    per_plane = {key_of(j): int(per[j]) for j in np.flatnonzero(per)}
    cert = SelectionCertificate(u, n, k, per_plane, stages, int(tail.size))
    return chosen, cert


def greedy_select(skeletons, k, delta):
    """Choose one k-face per skeleton; returns ``(faces, certificate)``."""
    skeletons = list(skeletons)
    if not skeletons:
        raise SkelmaxError("empty-input", "no skeletons given")
    n = skeletons[0].n
    c2 = _half_units([s.center for s in skeletons], delta).reshape(-1, n)
    r2 = _half_units([s.r for s in skeletons], delta)
    idx, cert = greedy_select_indices(c2, r2, n, k, delta)
    table = enumerate_faces((n, k))
    return [table[i] for i in idx], cert


def plane_class_partition(phi):
    """Group centers (flat indices) by the free-axis set of their chosen face."""
    faces = enumerate_faces((phi.n, phi.k))
    classes = {}
    flat = phi.index.reshape(-1)
    for J in sorted({f.free for f in faces}):
        members = [i for i, f in enumerate(faces) if f.free == J]
        classes[J] = np.flatnonzero(np.isin(flat, members))
    return classes


# ---------------------------------------------------------------------------
# the plane-count lower bound: |A| >= c |X|^(l(2n-1)/(2n^2))

def main_lemma_exponent(n, ell):
    return ell * (2 * n - 1) / (2 * n * n)


def _frac_vec(v):
    return tuple(Fraction(x) for x in v)


def _offsets(x, r, n, ell):
    for I in itertools.combinations(range(n), ell):
        for sigma in itertools.product((-1, 1), repeat=ell):
            yield tuple(x[i] + r * s for i, s in zip(I, sigma))


def admissible_radius(x, A, ell):
    """A radius ``r > 0`` with ``x_I + r sigma in A`` for all ``I, sigma``, or None."""
    n = len(x)
    I0 = tuple(range(ell))
    for a in sorted(A):
        r = a[0] - x[I0[0]]
        if r <= 0 or any(a[j] - x[I0[j]] != r for j in range(ell)):
            continue
        if all(p in A for p in _offsets(x, r, n, ell)):
            return r
    return None


def main_lemma_ratio(A, X, ell):
    """``|A| / |X|^(l(2n-1)/(2n^2))`` after checking that every x has a skeleton radius in A."""
    A = {_frac_vec(a) for a in A}
    X = [_frac_vec(x) for x in X]
    if not X:
        raise SkelmaxError("empty-input", "X is empty")
    n = len(X[0])
    if not (1 <= ell <= n):
        raise SkelmaxError("invalid-face-dim", f"ell={ell} outside 1..{n}")
    for x in X:
        if admissible_radius(x, A, ell) is None:
            raise HypothesisViolated(tuple(float(v) for v in x))
    return len(A) / len({x for x in X}) ** main_lemma_exponent(n, ell)


def main_lemma_offsets(X, radii, ell):
    """The smallest admissible A for centers X with the given radii."""
    out = set()
    for x, r in zip(X, radii):
        out.update(_offsets(_frac_vec(x), Fraction(r), len(x), ell))
    return out


@dataclass
class MainLemmaRow:
    u: int
    min_size: int
    min_ratio: float
    X: tuple
    radii: tuple


def brute_force_main_lemma(n=2, ell=1, max_x=6, radius_domain=(1, 2, 3, 4), grid_side=3):
    """Exhaustive minimum of ``|A'| / u^e`` over center sets ``X`` (subsets of the
    ``grid_side^n`` integer grid, sizes 1..max_x) and all radius assignments
    from ``radius_domain``. Returns one :class:`MainLemmaRow` per size."""
    pts = list(itertools.product(range(grid_side), repeat=n))
    combos = list(itertools.combinations(range(n), ell))
    signs = np.array(list(itertools.product((-1, 1), repeat=ell)), dtype=np.int64)
    dom = np.asarray(radius_domain, dtype=np.int64)
    span = int(2 * (grid_side + dom.max()) + 1)
    shift = int(dom.max())
    e = main_lemma_exponent(n, ell)
    rows = []
    for u in range(1, max_x + 1):
        assign = np.array(list(itertools.product(range(dom.size), repeat=u)), dtype=np.int64)
        rad = dom[assign]  # (a, u)
        best = None
        for Xi in itertools.combinations(range(len(pts)), u):
            X = np.array([pts[i] for i in Xi], dtype=np.int64)
            codes = []
            for I in combos:
                for sg in signs:
                    # encode the ell-vector x_I + r*sigma as one integer
                    code = np.zeros(rad.shape, dtype=np.int64)
                    for j, axis in enumerate(I):
                        code = code * span + (X[None, :, axis] + rad * sg[j] + shift)
                    codes.append(code)
            allc = np.sort(np.concatenate(codes, axis=1), axis=1)
            sizes = 1 + np.count_nonzero(np.diff(allc, axis=1), axis=1)
            a = int(np.argmin(sizes))
            if best is None or sizes[a] < best[0]:
                best = (int(sizes[a]), tuple(map(tuple, X.tolist())), tuple(int(v) for v in rad[a]))
        rows.append(MainLemmaRow(u, best[0], best[0] / u ** e, best[1], best[2]))
    return rows
