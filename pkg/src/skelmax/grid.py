"""Dense scalar fields on axis-aligned grids, prefix-sum box queries, L^p norms.

Coordinates: a :class:`GridSpec` with spacing ``delta`` and origin ``o`` has
cell ``j`` (per axis) spanning ``[o + j*delta, o + (j+1)*delta)`` with center
``o + (j + 1/2)*delta``. A cell belongs to a box iff its center lies in the
half-open box ``[lo, hi)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SkelmaxError

MAX_DIM = 4
_TOL = 1e-9


def _as_int_multiple(value, unit, what):
    q = value / unit
    k = round(q)
    if abs(q - k) > _TOL * max(1.0, abs(q)):
        raise SkelmaxError("off-grid", f"{what}={value!r} is not a multiple of {unit!r}")
    return int(k)


@dataclass(frozen=True)
class GridSpec:
    n: int
    delta: float
    origin: tuple
    extent: tuple

    def __post_init__(self):
        if not (1 <= self.n <= MAX_DIM):
            raise SkelmaxError("invalid-dimension", f"n={self.n} outside 1..{MAX_DIM}")
        if not self.delta > 0:
            raise SkelmaxError("invalid-delta", f"delta={self.delta!r}")
        inv = 1.0 / self.delta
        if abs(inv - round(inv)) > _TOL * inv:
            raise SkelmaxError("invalid-delta", f"1/delta={inv!r} is not an integer")
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "extent", tuple(int(e) for e in self.extent))
        if len(self.origin) != self.n or len(self.extent) != self.n:
            raise SkelmaxError("shape-mismatch", "origin/extent length must equal n")
        if any(e <= 0 for e in self.extent):
            raise SkelmaxError("shape-mismatch", f"extent={self.extent}")
        for o in self.origin:
            _as_int_multiple(o, self.delta, "origin")

    # -- constructors ------------------------------------------------------
    @classmethod
    def cube(cls, n, delta, lo, side):
        """Grid covering ``[lo, lo + side)^n``; ``side/delta`` must be integral."""
        cells = _as_int_multiple(side, delta, "side")
        return cls(n, delta, (lo,) * n, (cells,) * n)

    # -- derived quantities ------------------------------------------------
    @property
    def shape(self):
        return self.extent

    @property
    def size(self):
        return math.prod(self.extent)

    @property
    def inv_delta(self):
        return int(round(1.0 / self.delta))

    @property
    def origin_index(self):
        """Origin as integer multiples of ``delta``."""
        return tuple(int(round(o / self.delta)) for o in self.origin)

    @property
    def cell_volume(self):
        return self.delta ** self.n

    def bounds(self):
        lo = np.array(self.origin)
        return Box(lo, lo + np.array(self.extent) * self.delta)

    def centers(self):
        """Cell-center coordinates, shape ``extent + (n,)``."""
        axes = [self.origin[a] + (np.arange(e) + 0.5) * self.delta for a, e in enumerate(self.extent)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def offset_in(self, other):
        """Index of this grid's cell 0 inside ``other`` (same spacing, aligned)."""
        if other.n != self.n or abs(other.delta - self.delta) > _TOL * self.delta:
            raise SkelmaxError("grid-mismatch", "grids differ in n or delta")
        return tuple(a - b for a, b in zip(self.origin_index, other.origin_index))

    def cell_range(self, box):
        """Unclipped half-open integer index range of cells whose centers lie in ``box``."""
        lo = np.ceil((np.asarray(box.lo, float) - np.array(self.origin)) / self.delta - 0.5 - _TOL)
        hi = np.ceil((np.asarray(box.hi, float) - np.array(self.origin)) / self.delta - 0.5 - _TOL)
        return lo.astype(np.int64), hi.astype(np.int64)

    def to_header(self):
        return {"n": self.n, "delta": self.delta, "origin": list(self.origin),
                "extent": list(self.extent), "dtype": "f64"}


def seven_q0(n, delta):
    """The experiment domain: the cube of side 7 concentric with ``[0,1)^n``."""
    return GridSpec.cube(n, delta, -3.0, 7.0)


def unit_q0(n, delta):
    """The grid of ``Q_0 = [0,1)^n``; its cell centers are the evaluation points."""
    return GridSpec.cube(n, delta, 0.0, 1.0)


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise SkelmaxError("shape-mismatch", "lo and hi differ in length")
        if not np.all(lo < hi):
            raise SkelmaxError("empty-box", f"lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self):
        return self.lo.shape[0]

    @property
    def measure(self):
        return float(np.prod(self.hi - self.lo))

    def intersect(self, other):
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(hi <= lo):
            return None
        return Box(lo, hi)

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class ScalarField:
    """Piecewise-constant function on the cells of a :class:`GridSpec`."""

    def __init__(self, spec, values):
        values = np.asarray(values, dtype=np.float64)
        if values.size != spec.size:
            raise SkelmaxError("shape-mismatch", f"{values.size} values for {spec.size} cells")
        values = values.reshape(spec.extent)
        if not np.all(np.isfinite(values)):
            raise SkelmaxError("non-finite", "field contains NaN or inf")
        self.spec = spec
        self.values = values

    @classmethod
    def constant(cls, spec, c=1.0):
        return cls(spec, np.full(spec.extent, float(c)))

    @classmethod
    def zeros(cls, spec):
        return cls.constant(spec, 0.0)

    def with_values(self, values):
        return ScalarField(self.spec, values)

    def __repr__(self):
        return f"ScalarField({self.spec}, min={self.values.min():g}, max={self.values.max():g})"


class PrefixSumTable:
    """Inclusive prefix sums with a zero halo along every axis.

    Non-integral fields are mean-centered before accumulation so that the
    magnitude of the running sums grows like the fluctuation rather than the
    total; integral fields (indicators, counts) are accumulated as-is, which
    keeps their box sums exact.
    """

    def __init__(self, spec, sums, mean):
        self.spec = spec
        self.sums = sums
        self.flat = sums.reshape(-1)
        self.mean = float(mean)
        self.strides = np.array(sums.strides, dtype=np.int64) // sums.itemsize

    def index_sum(self, lo, hi):
        """Sum of cells ``[lo, hi)`` given as in-range integer index vectors."""
        n = self.spec.n
        tot = 0.0
        for corner in range(1 << n):
            idx = 0
            neg = 0
            for a in range(n):
                if (corner >> a) & 1:
                    idx += int(hi[a]) * self.strides[a]
                else:
                    idx += int(lo[a]) * self.strides[a]
                    neg += 1
            tot += -self.flat[idx] if neg & 1 else self.flat[idx]
        count = math.prod(int(h) - int(l) for l, h in zip(lo, hi))
        return tot + self.mean * count

    def clipped_range(self, box):
        lo, hi = self.spec.cell_range(box)
        ext = np.array(self.spec.extent)
        lo_c = np.clip(lo, 0, ext)
        hi_c = np.clip(hi, 0, ext)
        dom = self.spec.bounds()
        if np.any(np.asarray(box.hi) <= dom.lo) or np.any(np.asarray(box.lo) >= dom.hi):
            raise SkelmaxError("empty-query", f"{box} lies outside the domain")
        return lo_c, hi_c


def build_prefix(field):
    """Build the prefix-sum table of ``field`` (answers box sums in 2^n lookups)."""
    v = field.values
    integral = np.array_equal(v, np.round(v)) and float(np.abs(v).sum()) < 2.0 ** 52
    mean = 0.0 if integral else float(v.mean())
    sums = np.zeros(tuple(e + 1 for e in field.spec.extent))
    inner = sums[tuple(slice(1, None) for _ in range(field.spec.n))]
    inner[...] = v - mean if mean else v
    for a in range(field.spec.n):
        np.cumsum(inner, axis=a, out=inner)
    return PrefixSumTable(field.spec, sums, mean)


def abs_prefix(field):
    """Prefix table of ``|f|``: the input every operator average is taken over."""
    return build_prefix(field.with_values(np.abs(field.values)))


def box_sum(table, box):
    """Sum of the cells whose centers lie in ``box``, clipped to the domain."""
    lo, hi = table.clipped_range(box)
    if np.any(hi <= lo):
        return 0.0
    return table.index_sum(lo, hi)


def box_average(table, box):
    """Mean of the field over the cells of ``box``.

    Normalized by the measure of the contributing cells, which equals the
    box measure whenever the box is grid-aligned.
    """
    lo, hi = table.clipped_range(box)
    count = int(np.prod(hi - lo)) if np.all(hi > lo) else 0
    if count == 0:
        raise SkelmaxError("empty-query", f"{box} contains no cell centers")
    return table.index_sum(lo, hi) / count


def lp_norm(field, p, region=None):
    """Discrete L^p norm ``(delta^n * sum |f|^p)^(1/p)`` over the cells in ``region``."""
    p = float(p)
    if not p >= 1:
        raise SkelmaxError("invalid-exponent", f"p={p!r} < 1")
    v = field.values
    if region is not None:
        lo, hi = field.spec.cell_range(region)
        ext = np.array(field.spec.extent)
        lo, hi = np.clip(lo, 0, ext), np.clip(hi, 0, ext)
        v = v[tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))]
    if v.size == 0:
        return 0.0
    a = np.abs(v)
    if math.isinf(p):
        return float(a.max())
    if p == 1:
        return float(field.spec.cell_volume * a.sum())
    top = a.max()
    if top == 0:
        return 0.0
    # scale by the max to keep large p from overflowing
    return float(top * (field.spec.cell_volume * np.sum((a / top) ** p)) ** (1.0 / p))


# ---------------------------------------------------------------------------
# field file: one line of JSON header, then little-endian float64, last axis fastest

def write_field(path, field):
    header = json.dumps(field.spec.to_header(), separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"))


def read_field(path):
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise SkelmaxError("bad-field-file", f"{path}: missing header line")
    try:
        head = json.loads(raw[:nl].decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise SkelmaxError("bad-field-file", f"{path}: {exc}") from None
    if head.get("dtype", "f64") != "f64":
        raise SkelmaxError("bad-field-file", f"unsupported dtype {head.get('dtype')!r}")
    spec = GridSpec(head["n"], head["delta"], tuple(head["origin"]), tuple(head["extent"]))
    body = raw[nl + 1:]
    if len(body) != 8 * spec.size:
        raise SkelmaxError("bad-field-file", f"{path}: expected {8 * spec.size} bytes, got {len(body)}")
    return ScalarField(spec, np.frombuffer(body, dtype="<f8").reshape(spec.extent).copy())
