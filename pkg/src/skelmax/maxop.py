"""The k-skeleton maximal operators.

All variants take the sup over radii on the grid ``delta * Z`` of the minimum,
over the N faces, of the average of ``|f|`` on each face's neighborhood. They
differ only in the radius range:

* restricted   ``r in [1, 2]``
* dyadic       ``r in [2^t, 2^(t+1)]``
* unrestricted ``r in (width, 2]``

The linearized operator replaces the sup/min by a single prescribed face per
center. Operators are evaluated at the cell centers of a region grid (by
default ``Q_0 = [0,1)^n``) and read ``|f|`` through a prefix table whose
domain must contain every face box (``7 Q_0`` suffices for ``Q_0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from .errors import DominationError, SkelmaxError
from .grid import GridSpec, ScalarField, abs_prefix, box_average, build_prefix, unit_q0
from .skeleton import Skeleton, enumerate_faces, face_codes, face_index_box, face_neighborhood

_TOL = 1e-9


@dataclass
class RadiusFunction:
    """One radius per center of ``spec``, stored as integer multiples of ``spec.delta``."""

    spec: GridSpec
    steps: np.ndarray
    lo: float = 1.0
    hi: float = 2.0

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.int64).reshape(self.spec.extent)
        d = self.spec.delta
        if self.steps.size and (self.steps.min() * d < self.lo - _TOL or self.steps.max() * d > self.hi + _TOL):
            raise SkelmaxError("radius-out-of-range", f"radii must lie in [{self.lo}, {self.hi}]")

    @classmethod
    def from_values(cls, spec, values, lo=1.0, hi=2.0):
        v = np.asarray(values, dtype=float) / spec.delta
        steps = np.round(v)
        if np.any(np.abs(v - steps) > _TOL * np.maximum(1.0, np.abs(v))):
            raise SkelmaxError("off-grid", "radii are not multiples of delta")
        return cls(spec, steps.astype(np.int64), lo, hi)

    @classmethod
    def constant(cls, spec, r):
        return cls.from_values(spec, np.full(spec.extent, float(r)))

    @property
    def values(self):
        return self.steps * self.spec.delta


@dataclass
class FaceAssignment:
    """One face (index into the canonical face order) per center."""

    n: int
    k: int
    index: np.ndarray

    def __post_init__(self):
        self.index = np.asarray(self.index, dtype=np.int64)
        N = face_codes(self.n, self.k).shape[0]
        if self.index.size and (self.index.min() < 0 or self.index.max() >= N):
            raise SkelmaxError("invalid-face", "face index out of range")

    def faces(self):
        table = enumerate_faces((self.n, self.k))
        return [table[i] for i in self.index.reshape(-1)]

    def codes(self):
        return face_codes(self.n, self.k)[self.index.reshape(-1)]


@dataclass
class OperatorResult:
    field: ScalarField
    argmax_radii: np.ndarray | None = None
    meta: dict = dc_field(default_factory=dict)


# ---------------------------------------------------------------------------
# helpers

def _width_steps(table, delta):
    if delta is None:
        return 1
    q = delta / table.spec.delta
    w = round(q)
    if w < 1 or abs(q - w) > _TOL * q:
        raise SkelmaxError("off-grid", f"width {delta!r} is not a positive multiple of the grid spacing")
    return int(w)


def _centers(table, region):
    if region is None:
        region = unit_q0(table.spec.n, table.spec.delta)
    off = np.array(region.offset_in(table.spec), dtype=np.int64)
    grids = np.meshgrid(*[np.arange(e) for e in region.extent], indexing="ij")
    idx = np.stack([g.reshape(-1) for g in grids], axis=1) + off
    return region, idx


def _check_reach(table, centers, rmax, w):
    reach = rmax + w
    ext = np.array(table.spec.extent)
    if centers.size and ((centers.min(axis=0) - reach < 0).any() or (centers.max(axis=0) + reach > ext).any()):
        raise SkelmaxError("domain-too-small", "a face box escapes the table domain")


def radius_steps(delta, lo, hi, lo_open=False):
    """Integer radii ``R`` with ``R*delta`` in ``[lo, hi]`` (or ``(lo, hi]``)."""
    inv = 1.0 / delta
    a = math.ceil(lo * inv - _TOL)
    if lo_open and abs(a * delta - lo) <= _TOL * max(1.0, lo):
        a += 1
    b = math.floor(hi * inv + _TOL)
    if b < a:
        raise SkelmaxError("empty-radius-range", f"no multiple of {delta} in [{lo}, {hi}]")
    return np.arange(a, b + 1, dtype=np.int64)


def evaluate_radii(table, k, radii, delta=None, region=None):
    """Sup over the given integer radii of the min-face average, at every center."""
    n = table.spec.n
    w = _width_steps(table, delta)
    region, centers = _centers(table, region)
    radii = np.asarray(radii, dtype=np.int64)
    _check_reach(table, centers, int(radii.max()), w)
    best, arg = _kernels.sup_min_face(
        table.flat, table.strides, centers, radii, face_codes(n, k).astype(np.int64), w, table.mean
    )
    field = ScalarField(region, best.reshape(region.extent))
    return OperatorResult(field, (arg * table.spec.delta).reshape(region.extent),
                          {"k": k, "width": w * table.spec.delta})


def _as_table(source):
    return abs_prefix(source) if isinstance(source, ScalarField) else source


# ---------------------------------------------------------------------------
# single-skeleton queries (real-coordinate geometry, no kernels)

def min_face_average(table, s, k, delta=None):
    """Minimum over the faces of ``s`` of the average of the table's field.

    Pass a table built from ``|f|`` (see :func:`skelmax.grid.abs_prefix`).
    """
    delta = table.spec.delta if delta is None else delta
    dom = table.spec.bounds()
    worst = math.inf
    for face in enumerate_faces((s.n, k)):
        box = face_neighborhood(s, face, delta)
        if np.any(box.lo < dom.lo - _TOL) or np.any(box.hi > dom.hi + _TOL):
            raise SkelmaxError("domain-too-small", f"face {face.token()} box {box} escapes the domain")
        worst = min(worst, box_average(table, box))
    return worst


def restricted_max(table, x, k, delta=None, lo=1.0, hi=2.0):
    """``(value, argmax r)`` of the sup over ``r in [lo, hi] ∩ delta Z``; ties pick the smaller r."""
    steps = radius_steps(table.spec.delta, lo, hi)
    best, best_r = -math.inf, None
    for R in steps:
        r = R * table.spec.delta
        v = min_face_average(table, Skeleton(tuple(x), r), k, delta)
        if v > best:
            best, best_r = v, r
    return best, best_r


# ---------------------------------------------------------------------------
# whole-field evaluators

def evaluate_restricted(source, k, delta=None, region=None):
    table = _as_table(source)
    return evaluate_radii(table, k, radius_steps(table.spec.delta, 1.0, 2.0), delta, region)


def evaluate_dyadic(source, k, t, delta=None, region=None):
    table = _as_table(source)
    res = evaluate_radii(table, k, radius_steps(table.spec.delta, 2.0 ** t, 2.0 ** (t + 1)), delta, region)
    res.meta["t"] = t
    return res


def evaluate_unrestricted(source, k, delta=None, region=None):
    table = _as_table(source)
    width = table.spec.delta * _width_steps(table, delta)
    return evaluate_radii(table, k, radius_steps(table.spec.delta, width, 2.0, lo_open=True), delta, region)


def dyadic_levels(delta):
    """Scales ``t`` whose blocks ``[2^t, 2^(t+1)] ∩ delta Z`` tile ``(delta, 2] ∩ delta Z``."""
    t0 = math.floor(math.log2(delta) + _TOL)
    return list(range(t0 + 1 if 2.0 ** t0 >= delta * (1 - _TOL) else t0, 1))


def face_averages(table, centers, steps, codes, w):
    """Average over one face box per center (vectorized corner sums)."""
    n = table.spec.n
    centers = np.asarray(centers, dtype=np.int64).reshape(-1, n)
    steps = np.asarray(steps, dtype=np.int64).reshape(-1, 1)
    codes = np.asarray(codes, dtype=np.int64).reshape(-1, n)
    free = codes == 0
    lo = np.where(free, centers - steps - w, centers + codes * steps - w)
    hi = np.where(free, centers + steps + w, centers + codes * steps + w)
    ext = np.array(table.spec.extent)
    if (lo < 0).any() or (hi > ext).any():
        raise SkelmaxError("domain-too-small", "a face box escapes the table domain")
    tot = np.zeros(centers.shape[0])
    for corner in range(1 << n):
        idx = np.zeros(centers.shape[0], dtype=np.int64)
        neg = 0
        for a in range(n):
            if (corner >> a) & 1:
                idx += hi[:, a] * table.strides[a]
            else:
                idx += lo[:, a] * table.strides[a]
                neg += 1
        if neg & 1:
            tot -= table.flat[idx]
        else:
            tot += table.flat[idx]
    cnt = np.prod(hi - lo, axis=1).astype(float)
    return tot / cnt + table.mean


def evaluate_linearized(source, rho, phi, delta=None):
    """Single-face average per center: linear in the field.

    ``source`` may be a field (signed values are used as-is) or a prefix table.
    """
    table = build_prefix(source) if isinstance(source, ScalarField) else source
    w = _width_steps(table, delta)
    region, centers = _centers(table, rho.spec)
    vals = face_averages(table, centers, rho.steps.reshape(-1), phi.codes(), w)
    return OperatorResult(ScalarField(region, vals.reshape(region.extent)), rho.values.copy(),
                          {"k": phi.k, "width": w * table.spec.delta})


# ---------------------------------------------------------------------------
# discretization / domination

def snap_radius(r, delta, lo=1.0, hi=2.0):
    """Closest point of ``[lo, hi] ∩ delta Z`` to ``r``; on a tie the left one."""
    grid = radius_steps(delta, lo, hi) * delta
    d = np.abs(grid - r)
    return float(grid[int(np.flatnonzero(d <= d.min() + _TOL * delta)[0])])


@dataclass
class DominationReport:
    lhs: np.ndarray
    rhs: np.ndarray
    constant: float
    eps: float

    @property
    def violations(self):
        return int(np.count_nonzero(self.lhs > self.rhs + self.eps))

    @property
    def min_slack(self):
        return float(np.min(self.rhs + self.eps - self.lhs))


def build_dominating_rho(source, k, delta=None, eps=1e-9, region=None, phi=None, strict=True):
    """Linearize the restricted operator at ``delta`` by a radius function.

    For each center take the maximizing radius of the operator at width
    ``2*delta``, snap it to ``[1,2] ∩ delta Z`` (leftmost on ties), choose one
    face per skeleton with the greedy plane selection, and verify
    ``M f <= 3^(n-k) * Mlin f + eps`` at width ``3*delta`` on every center.

    Returns ``(rho, phi, report)``; raises :class:`DominationError` on the first
    violating center when ``strict``.
    """
    from .selection import greedy_select_indices

    table = _as_table(source)
    n = table.spec.n
    d = table.spec.delta * _width_steps(table, delta)
    lhs = evaluate_restricted(table, k, d, region)
    wide = evaluate_restricted(table, k, 2 * d, region)
    snapped = np.vectorize(lambda r: snap_radius(r, table.spec.delta))(wide.argmax_radii)
    rho = RadiusFunction.from_values(lhs.field.spec, snapped)
    if phi is None:
        _, centers = _centers(table, rho.spec)
        idx, _ = greedy_select_indices(2 * centers + 1, 2 * rho.steps.reshape(-1), n, k)
        phi = FaceAssignment(n, k, idx)
    lin = evaluate_linearized(table, rho, phi, 3 * d)
    const = 3.0 ** (n - k)
    report = DominationReport(lhs.field.values, const * lin.field.values, const, eps)
    if strict:
        bad = np.argwhere(report.lhs > report.rhs + eps)
        if bad.size:
            i = tuple(int(v) for v in bad[0])
            raise DominationError(i, float(report.lhs[i]), float(report.rhs[i]))
    return rho, phi, report


# ---------------------------------------------------------------------------
# naive reference evaluator: direct slice sums, no prefix tables

def naive_min_face(values, center_idx, R, k, w):
    n = values.ndim
    worst = math.inf
    for code in face_codes(n, k):
        lo, hi = face_index_box(center_idx, R, code, w)
        if (lo < 0).any() or (hi > np.array(values.shape)).any():
            raise SkelmaxError("domain-too-small", "face box escapes the domain")
        block = values[tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))]
        worst = min(worst, float(block.sum()) / block.size)
    return worst


def naive_sup(field, k, radii, delta=None, region=None, sample=None):
    """Nested-loop evaluation of the sup/min operator at region centers.

    ``sample`` optionally restricts to a subset of flat center indices; the
    result is then a 1-d array in that order.
    """
    spec = field.spec
    w = 1 if delta is None else int(round(delta / spec.delta))
    region = unit_q0(spec.n, spec.delta) if region is None else region
    off = np.array(region.offset_in(spec))
    a = np.abs(field.values)
    flat_ids = range(region.size) if sample is None else sample
    out = np.empty(len(flat_ids))
    for j, fid in enumerate(flat_ids):
        c = np.array(np.unravel_index(int(fid), region.extent)) + off
        out[j] = max(naive_min_face(a, c, int(R), k, w) for R in radii)
    return out if sample is not None else out.reshape(region.extent)


def naive_restricted(field, k, delta=None, region=None, sample=None):
    return naive_sup(field, k, radius_steps(field.spec.delta, 1.0, 2.0), delta, region, sample)


def index_skeleton(spec, center_idx, R):
    """Real-coordinate :class:`Skeleton` for a cell index and radius step on ``spec``."""
    c = np.array(spec.origin) + (np.asarray(center_idx) + 0.5) * spec.delta
    return Skeleton(tuple(c), R * spec.delta)


# ---------------------------------------------------------------------------
# dyadic rescaling

def rescale_field(field, t):
    """The same cell values on a grid scaled by ``2^(-t)``: ``g(2^(-t) y) = f(y)``."""
    s = 2.0 ** (-t)
    spec = field.spec
    big = GridSpec(spec.n, spec.delta * s, tuple(o * s for o in spec.origin), spec.extent)
    return ScalarField(big, field.values)


def rescaling_pair(field, k, t):
    """``(M_{delta,t} f on Q_0, M_{2^(-t) delta} g on 2^(-t) Q_0)`` as flat arrays.

    ``field`` lives on the 7Q_0 grid; the second operator is the restricted one
    applied to :func:`rescale_field` at its own spacing. Both are evaluated at
    matching cell centers.
    """
    spec = field.spec
    lhs = evaluate_dyadic(field, k, t)
    g = rescale_field(field, t)
    s = 2.0 ** (-t)
    region = GridSpec(spec.n, g.spec.delta, (0.0,) * spec.n, unit_q0(spec.n, spec.delta).extent)
    if abs(region.extent[0] * g.spec.delta - s) > _TOL * s:
        raise SkelmaxError("off-grid", "scaled region does not match 2^(-t) Q_0")
    rhs = evaluate_restricted(g, k, region=region)
    return lhs.field.values.reshape(-1), rhs.field.values.reshape(-1)
