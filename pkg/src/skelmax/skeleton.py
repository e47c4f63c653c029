"""k-faces of axis-parallel n-cubes and their sup-norm delta-neighborhoods."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import SkelmaxError
from .grid import Box


def face_count(n, k):
    return math.comb(n, k) * 2 ** (n - k)


@dataclass(frozen=True)
class SkeletonConfig:
    n: int
    k: int

    def __post_init__(self):
        if not (0 <= self.k < self.n):
            raise SkelmaxError("invalid-face-dim", f"k={self.k} must satisfy 0 <= k < n={self.n}")

    @property
    def face_count(self):
        return face_count(self.n, self.k)


@dataclass(frozen=True, order=True)
class FaceId:
    """A k-face: ``free`` holds the free axes (0-based), ``sigma`` one sign per fixed axis."""

    free: tuple
    sigma: tuple

    @property
    def fixed(self):
        n = len(self.free) + len(self.sigma)
        return tuple(a for a in range(n) if a not in self.free)

    def code(self):
        """Per-axis int code: 0 on free axes, the sign on fixed axes."""
        n = len(self.free) + len(self.sigma)
        out = [0] * n
        for a, s in zip(self.fixed, self.sigma):
            out[a] = s
        return tuple(out)

    def token(self):
        """Serialize as ``I=1,3;s=+-`` (1-based axes)."""
        axes = ",".join(str(a + 1) for a in self.free)
        signs = "".join("+" if s > 0 else "-" for s in self.sigma)
        return f"I={axes};s={signs}"

    @classmethod
    def parse(cls, token):
        try:
            left, right = token.strip().split(";")
            axes = left.split("=", 1)[1]
            signs = right.split("=", 1)[1]
        except (ValueError, IndexError):
            raise SkelmaxError("bad-face-token", repr(token)) from None
        free = tuple(int(a) - 1 for a in axes.split(",") if a)
        sigma = tuple(1 if c == "+" else -1 for c in signs)
        return cls(free, sigma)


@lru_cache(maxsize=None)
def _faces(n, k):
    out = []
    for free in itertools.combinations(range(n), k):
        for sigma in itertools.product((-1, 1), repeat=n - k):
            out.append(FaceId(free, sigma))
    return tuple(out)


def enumerate_faces(cfg):
    """All ``C(n,k) 2^(n-k)`` faces: free-axis sets in lexicographic order, then signs
    as a binary counter with -1 before +1 and the last fixed axis fastest."""
    if not isinstance(cfg, SkeletonConfig):
        cfg = SkeletonConfig(*cfg)
    return list(_faces(cfg.n, cfg.k))


@lru_cache(maxsize=None)
def face_codes(n, k):
    """Stacked :meth:`FaceId.code` rows for the canonical face order, int8 ``(N, n)``."""
    SkeletonConfig(n, k)
    codes = np.array([f.code() for f in _faces(n, k)], dtype=np.int8)
    codes.setflags(write=False)
    return codes


@dataclass(frozen=True)
class Skeleton:
    center: tuple
    r: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.r > 0:
            raise SkelmaxError("invalid-radius", f"r={self.r!r}")

    @property
    def n(self):
        return len(self.center)


def face_neighborhood(s, face, delta):
    """The delta-neighborhood (sup norm) of one face: an axis-aligned box."""
    if not delta > 0:
        raise SkelmaxError("invalid-delta", f"delta={delta!r}")
    x = np.array(s.center)
    lo = np.empty_like(x)
    hi = np.empty_like(x)
    for a in range(s.n):
        if a in face.free:
            lo[a] = x[a] - s.r - delta
            hi[a] = x[a] + s.r + delta
    for a, sg in zip(face.fixed, face.sigma):
        lo[a] = x[a] + sg * s.r - delta
        hi[a] = x[a] + sg * s.r + delta
    return Box(lo, hi)


class FaceMeasure(NamedTuple):
    exact: float
    closed_form: float
    upper_bound: float


def face_nbhd_measure(s, face, delta):
    """Exact measure ``(2r+2d)^k (2d)^(n-k)`` alongside the closed form
    ``2^n (r^k d^(n-k) + d^n)`` and its bound ``2^(n+1) r^k d^(n-k)``.

    The closed form matches the exact value only for k = 1: for k = 0 it is
    twice the vertex box measure ``(2d)^n``, and for k >= 2 it misses the
    cross terms of the product.
    """
    n, k, r = s.n, len(face.free), s.r
    exact = (2 * r + 2 * delta) ** k * (2 * delta) ** (n - k)
    closed = 2 ** n * (r ** k * delta ** (n - k) + delta ** n)
    bound = 2 ** (n + 1) * r ** k * delta ** (n - k)
    return FaceMeasure(exact, closed, bound)


def face_index_box(center_idx, R, code, w):
    """Integer cell box ``[lo, hi)`` of a face on the cell grid (see ``_kernels``)."""
    c = np.asarray(center_idx, dtype=np.int64)
    code = np.asarray(code, dtype=np.int64)
    free = code == 0
    lo = np.where(free, c - R - w, c + code * R - w)
    hi = np.where(free, c + R + w, c + code * R + w)
    return lo, hi


def skeleton_union_boxes(centers_idx, radii, n, k, w):
    """All face boxes of a family, ``(m*N, n)`` lo/hi arrays, center-major order."""
    codes = face_codes(n, k).astype(np.int64)
    centers_idx = np.asarray(centers_idx, dtype=np.int64).reshape(-1, n)
    R = np.asarray(radii, dtype=np.int64).reshape(-1, 1, 1)
    free = (codes == 0)[None]
    c = centers_idx[:, None, :]
    lo = np.where(free, c - R - w, c + codes[None] * R - w)
    hi = np.where(free, c + R + w, c + codes[None] * R + w)
    return lo.reshape(-1, n), hi.reshape(-1, n)


# ---------------------------------------------------------------------------
# skeleton list CSV: columns x_1..x_n,r

def write_skeletons(path, skeletons):
    skeletons = list(skeletons)
    n = skeletons[0].n if skeletons else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([f"x_{i + 1}" for i in range(n)] + ["r"])
        for s in skeletons:
            wr.writerow([repr(c) for c in s.center] + [repr(s.r)])


def read_skeletons(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SkelmaxError("bad-skeleton-file", f"{path} is empty")
    head = [h.strip() for h in rows[0]]
    if head[-1] != "r" or any(h != f"x_{i + 1}" for i, h in enumerate(head[:-1])):
        raise SkelmaxError("bad-skeleton-file", f"unexpected header {head}")
    out = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise SkelmaxError("bad-skeleton-file", f"line {line_no}: {row}") from None
        out.append(Skeleton(tuple(vals[:-1]), vals[-1]))
    return out
