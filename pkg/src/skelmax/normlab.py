"""Operator-norm scans across delta, log-log fits, and two numerical inequality checks.

Norm ratios are ``||M f||_{L^p(Q_0)} / ||f||_{L^p(7 Q_0)}`` with ``f`` living on
the 7Q_0 grid and ``M f`` evaluated at the cell centers of Q_0.

The duality check and the intersection check work with one coordinate plane
class at a time: the centers whose assigned face is parallel to a fixed
coordinate k-plane.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from .errors import SkelmaxError
from .grid import ScalarField, abs_prefix, build_prefix, lp_norm, seven_q0, unit_q0
from .maxop import (
    FaceAssignment,
    RadiusFunction,
    evaluate_restricted,
    evaluate_unrestricted,
    face_averages,
    naive_sup,
    radius_steps,
)
from .selection import greedy_select_indices, selection_exponent
from .skeleton import face_codes, skeleton_union_boxes

VARIANTS = ("restricted", "unrestricted")
CANDIDATE_CLASSES = ("witness", "dilation", "skeleton", "random", "bump", "constant", "neighborhood")


@dataclass(frozen=True)
class ExponentConfig:
    p: float
    m: int = 2

    def __post_init__(self):
        if not (self.p >= 1) or math.isinf(self.p):
            raise SkelmaxError("invalid-exponent", f"p={self.p!r} must lie in [1, inf)")
        if int(self.m) != self.m or self.m < 2:
            raise SkelmaxError("invalid-exponent", f"m={self.m!r} must be an integer >= 2")

    @property
    def q(self):
        return math.inf if self.p == 1 else self.p / (self.p - 1)

    @property
    def m_prime(self):
        return self.m / (self.m - 1)


# ---------------------------------------------------------------------------
# fitting

def fit_exponent(series):
    """OLS of ``log value`` on ``log delta``: returns ``(slope, intercept, R^2)``."""
    series = list(series)
    if len(series) < 3:
        raise SkelmaxError("insufficient-scales", f"{len(series)} points given, need >= 3")
    d = np.array([s[0] for s in series], dtype=float)
    v = np.array([s[1] for s in series], dtype=float)
    if np.any(d <= 0) or np.any(v <= 0):
        raise SkelmaxError("nonpositive-value", "fit needs positive deltas and values")
    x, y = np.log(d), np.log(v)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return float(slope), float(intercept), r2


# ---------------------------------------------------------------------------
# candidates

def _q0_indicator_nbhd(n, delta, pad):
    """Indicator of ``[-pad, 1+pad)^n`` on the 7Q_0 grid."""
    spec = seven_q0(n, delta)
    M = spec.inv_delta
    w = int(round(pad / delta))
    v = np.zeros(spec.extent)
    v[tuple(slice(3 * M - w, 4 * M + w) for _ in range(n))] = 1.0
    return ScalarField(spec, v)


def _skeleton_indicator(n, k, delta, r=1.5):
    spec = seven_q0(n, delta)
    M = spec.inv_delta
    center = np.full((1, n), 3 * M + M // 2, dtype=np.int64)
    lo, hi = skeleton_union_boxes(center, [int(round(r * M))], n, k, 1)
    counts = _kernels.stamp_boxes_bulk(spec.extent, lo, hi, dtype=np.int32)
    return ScalarField(spec, (counts > 0).astype(float))


def _bump(n, delta):
    spec = seven_q0(n, delta)
    x = (spec.centers() - 0.5) / 3.0
    r2 = np.sum(x * x, axis=-1)
    v = np.where(r2 < 1.0, np.exp(-1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)
    return ScalarField(spec, v)


def candidate_pool(n, k, delta, classes=("witness", "dilation", "skeleton", "random", "bump", "constant"),
                   seed=0, trials=2, witnesses=None, strategy="coordinate-align", restarts=4):
    """Seeded list of ``(candidate id, class, field)`` on the 7Q_0 grid.

    Witness indicators come from ``witnesses`` when given (a list of
    :class:`~skelmax.extremal.WitnessReport` at this delta), otherwise from a
    fresh search.
    """
    from .extremal import rasterize_union, search_radius_function

    bad = [c for c in classes if c not in CANDIDATE_CLASSES]
    if bad:
        raise SkelmaxError("invalid-candidate", f"unknown candidate classes {bad}")
    spec = seven_q0(n, delta)
    rng = np.random.default_rng(np.random.SeedSequence([seed, spec.inv_delta]))
    out = []
    if "witness" in classes or "dilation" in classes:
        if witnesses is None:
            witnesses = [search_radius_function(n, k, delta, strategy, seed, restarts)]
        for j, w in enumerate(witnesses):
            if "witness" in classes:
                out.append((f"witness-{j}", "witness", rasterize_union(w.rho, k).to_field()))
            if "dilation" in classes:
                out.append((f"dilation-{j}", "dilation", rasterize_union(w.rho, k, 2 * delta).to_field()))
    if "skeleton" in classes:
        out.append(("skeleton", "skeleton", _skeleton_indicator(n, k, delta)))
    if "random" in classes:
        for j in range(trials):
            out.append((f"random-{j}", "random", ScalarField(spec, rng.random(spec.extent))))
    if "bump" in classes:
        out.append(("bump", "bump", _bump(n, delta)))
    if "constant" in classes:
        out.append(("constant", "constant", ScalarField.constant(spec, 1.0)))
    if "neighborhood" in classes:
        out.append(("neighborhood", "neighborhood", _q0_indicator_nbhd(n, delta, delta)))
    return out


# ---------------------------------------------------------------------------
# norm scans

@dataclass
class ScanRow:
    delta: float
    candidate: str
    ratio: float
    candidate_class: str
    certified: bool


@dataclass
class ScanResult:
    n: int
    k: int
    p: float
    variant: str
    rows: list = dc_field(default_factory=list)

    def best_per_delta(self):
        best = {}
        for r in self.rows:
            if r.delta not in best or r.ratio > best[r.delta].ratio:
                best[r.delta] = r
        return [best[d] for d in sorted(best, reverse=True)]

    def fit(self):
        return fit_exponent([(r.delta, r.ratio) for r in self.best_per_delta()])

    @property
    def theory_slope(self):
        return -(self.n - self.k) / (2 * self.n * self.p)

    def to_json(self):
        slope, intercept, r2 = self.fit() if len({r.delta for r in self.rows}) >= 3 else (None, None, None)
        return {
            "n": self.n, "k": self.k, "p": self.p, "variant": self.variant,
            "theory_slope": self.theory_slope,
            "slope": slope, "intercept": intercept, "r2": r2,
            "best": [{"delta": r.delta, "candidate": r.candidate, "ratio": r.ratio} for r in self.best_per_delta()],
        }


def _evaluate(table, k, variant):
    if variant == "restricted":
        return evaluate_restricted(table, k)
    if variant == "unrestricted":
        return evaluate_unrestricted(table, k)
    raise SkelmaxError("invalid-variant", f"{variant!r} not in {VARIANTS}")


def norm_ratio(f, k, p, variant="restricted", certify=0, seed=0):
    """``(ratio, certified)``; ``certify`` centers are re-evaluated with the naive evaluator."""
    den = lp_norm(f, p)
    if den == 0:
        return None, False
    res = _evaluate(abs_prefix(f), k, variant)
    num = lp_norm(res.field, p)
    ok = True
    if certify:
        d = f.spec.delta
        radii = (radius_steps(d, 1.0, 2.0) if variant == "restricted"
                 else radius_steps(d, d, 2.0, lo_open=True))
        rng = np.random.default_rng(seed)
        sample = rng.choice(res.field.spec.size, size=min(certify, res.field.spec.size), replace=False)
        ref = naive_sup(f, k, radii, sample=sample)
        got = res.field.values.reshape(-1)[sample]
        ok = bool(np.allclose(got, ref, rtol=1e-9, atol=1e-12))
    return num / den, ok


def estimate_norm_lower(n, k, delta, p, candidates, variant="restricted", certify=4, seed=0):
    """One :class:`ScanRow` per candidate with nonzero norm."""
    rows = []
    for cid, cls, f in candidates:
        ratio, ok = norm_ratio(f, k, p, variant, certify, seed)
        if ratio is None:
            warnings.warn(f"candidate {cid} has zero norm; skipped", stacklevel=2)
            continue
        rows.append(ScanRow(float(delta), cid, float(ratio), cls, ok))
    return rows


def norm_scan(n, k, p, deltas, variant="restricted", classes=("witness", "dilation", "skeleton", "random", "bump", "constant"),
              seed=0, trials=2, strategy="coordinate-align", restarts=4, witnesses=None, certify=4):
    """Scan ``deltas``; ``witnesses`` may map delta to a list of precomputed reports."""
    result = ScanResult(n, k, float(p), variant)
    for d in deltas:
        pool = candidate_pool(n, k, d, classes, seed, trials,
                              None if witnesses is None else witnesses.get(d), strategy, restarts)
        result.rows.extend(estimate_norm_lower(n, k, d, p, pool, variant, certify, seed))
    return result


@dataclass
class UpperBoundReport:
    scan: ScanResult
    constants: dict

    @property
    def spread(self):
        v = list(self.constants.values())
        return max(v) / min(v)

    @property
    def passed(self):
        slope = self.scan.fit()[0]
        return self.spread <= 3.0 and -slope <= -self.scan.theory_slope + 0.05

    def to_json(self):
        out = self.scan.to_json()
        out.update({"c_star": {repr(d): c for d, c in sorted(self.constants.items(), reverse=True)},
                    "spread": self.spread, "status": "PASS" if self.passed else "FAIL"})
        return out


def upper_bound_scan(n, k, p, deltas, trials=4, seed=0, variant="restricted", witnesses=None,
                     strategy="coordinate-align", restarts=4):
    """``C*(delta) = max ratio * delta^((n-k)/(2np))``; passes when bounded within a factor 3."""
    classes = ("witness", "dilation", "skeleton", "random", "bump", "constant")
    if variant == "unrestricted":
        classes = classes + ("neighborhood",)
    scan = norm_scan(n, k, p, deltas, variant, classes, seed, trials, strategy, restarts, witnesses)
    expo = (n - k) / (2 * n * p)
    consts = {r.delta: r.ratio * r.delta ** expo for r in scan.best_per_delta()}
    return UpperBoundReport(scan, consts)


# ---------------------------------------------------------------------------
# duality (one plane class, 1 < p < inf)

@dataclass
class WeightVector:
    t: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        if np.any(self.t < 0) or not np.all(np.isfinite(self.t)):
            raise SkelmaxError("invalid-weights", "weights must be finite and nonnegative")

    def normalization(self, n, k, delta, q):
        """``delta^(n - k q) * sum t^q``, which must not exceed 1."""
        return float(delta ** (n - k * q) * np.sum(self.t ** q))

    @classmethod
    def uniform(cls, u, n, k, delta, q):
        """All weights equal, on the normalization boundary."""
        return cls(np.full(u, (delta ** (k * q - n) / u) ** (1.0 / q)))


def class_members(phi, free_axes):
    codes = face_codes(phi.n, phi.k)
    want = tuple(sorted(free_axes))
    keys = [tuple(np.flatnonzero(c == 0)) for c in codes]
    ok = np.array([keys[i] == want for i in range(codes.shape[0])])
    return np.flatnonzero(ok[phi.index.reshape(-1)])


def weighted_faces_norm(spec, centers, steps, codes, weights, q, w=1):
    """``|| sum_i t_i 1_{face box i} ||_{L^q}`` over the grid ``spec``."""
    n = spec.n
    codes = np.asarray(codes, dtype=np.int64).reshape(-1, n)
    steps = np.asarray(steps, dtype=np.int64).reshape(-1, 1)
    free = codes == 0
    lo = np.where(free, centers - steps - w, centers + codes * steps - w)
    hi = np.where(free, centers + steps + w, centers + codes * steps + w)
    g = _kernels.stamp_boxes_bulk(spec.extent, lo, hi, weights)
    return lp_norm(ScalarField(spec, np.maximum(g, 0.0)), q)


@dataclass
class DualityReport:
    lhs: float
    K: float
    K_given: float
    K_dual: float
    f_norm: float
    u: int
    normalization: float
    tol: float = 1.01

    @property
    def margin(self):
        return self.tol * self.K * self.f_norm - self.lhs

    @property
    def passed(self):
        return self.lhs <= self.tol * self.K * self.f_norm

    def to_json(self):
        return {"lhs": self.lhs, "K": self.K, "K_given": self.K_given, "K_dual": self.K_dual,
                "f_norm": self.f_norm, "u": self.u, "normalization": self.normalization,
                "margin": self.margin, "status": "PASS" if self.passed else "FAIL"}


def duality_check(f, rho, phi, free_axes, weights, p, delta=None):
    """Both sides of the linearized duality bound on one plane class.

    ``lhs = ||Mlin f||_{L^p}`` over the cells of the class. ``K`` is the larger
    of ``||sum t_i 1_{l_i}||_q`` for the given weights and for the weights that
    attain the dual maximum for this ``f`` (those are normalized by
    construction). Passing requires ``lhs <= 1.01 K ||f||_{L^p(7 Q_0)}``.
    """
    cfg = ExponentConfig(p)
    if cfg.p == 1:
        raise SkelmaxError("invalid-exponent", "the duality check needs p > 1")
    q = cfg.q
    spec = f.spec
    n, k = spec.n, phi.k
    d = spec.delta if delta is None else delta
    w = int(round(d / spec.delta))
    members = class_members(phi, free_axes)
    u = members.size
    weights = weights if isinstance(weights, WeightVector) else WeightVector(weights)
    if weights.t.size != u:
        raise SkelmaxError("shape-mismatch", f"{weights.t.size} weights for {u} faces")
    norm = weights.normalization(n, k, d, q)
    if norm > 1 + 1e-9:
        raise SkelmaxError("weights-unnormalized", f"delta^(n-kq) sum t^q = {norm:.6g} > 1")

    f_norm = lp_norm(f, p)
    if u == 0:
        return DualityReport(0.0, 0.0, 0.0, 0.0, f_norm, 0, norm)
    from .extremal import _center_index

    centers = _center_index(rho.spec)[members]
    steps = rho.steps.reshape(-1)[members]
    codes = face_codes(n, k)[phi.index.reshape(-1)[members]]
    table = build_prefix(f)
    vals = np.abs(face_averages(table, centers, steps, codes, w))
    lhs = float((spec.cell_volume * np.sum(vals ** p)) ** (1.0 / p))

    a = vals * spec.cell_volume ** (1.0 / p)
    a_norm = float(np.sum(a ** p) ** (1.0 / p))
    b = (a / a_norm) ** (p - 1) if a_norm > 0 else np.zeros_like(a)
    t_dual = d ** (n / p - (n - k)) * b
    K_given = weighted_faces_norm(spec, centers, steps, codes, weights.t, q, w)
    K_dual = weighted_faces_norm(spec, centers, steps, codes, t_dual, q, w)
    return DualityReport(lhs, max(K_given, K_dual), K_given, K_dual, f_norm, int(u), norm)


# ---------------------------------------------------------------------------
# intersection counting (one plane class, m = 2 or 3)

@dataclass
class IntersectionReport:
    I: float
    holder_rhs: float
    c_star: float
    max_tuples: int
    tuple_bound: float
    u: int
    m: int
    delta: float
    normalization: float

    @property
    def holder_ok(self):
        return self.I <= self.holder_rhs * (1 + 1e-12) + 1e-300

    def to_json(self):
        return {"I": self.I, "holder_rhs": self.holder_rhs, "holder_ok": self.holder_ok,
                "c_star": self.c_star, "max_tuples": self.max_tuples, "tuple_bound": self.tuple_bound,
                "u": self.u, "m": self.m, "delta": self.delta, "normalization": self.normalization}


def face_boxes(centers, steps, codes, w=1):
    centers = np.asarray(centers, dtype=np.int64)
    codes = np.asarray(codes, dtype=np.int64).reshape(-1, centers.shape[1])
    steps = np.asarray(steps, dtype=np.int64).reshape(-1, 1)
    free = codes == 0
    lo = np.where(free, centers - steps - w, centers + codes * steps - w)
    hi = np.where(free, centers + steps + w, centers + codes * steps + w)
    return lo, hi


def _overlap(lo_a, hi_a, lo_b, hi_b):
    return np.clip(np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b), 0, None)


def intersection_bound_check(centers, steps, codes, weights, delta, m, k):
    """Exact ``I`` from box-overlap products, the Hoelder bound, and tuple counts.

    Faces are given in cell units of a grid with spacing ``delta`` (width one
    cell). All faces must share their free axes.
    """
    if m not in (2, 3):
        raise SkelmaxError("invalid-exponent", f"m={m} must be 2 or 3")
    codes = np.asarray(codes, dtype=np.int64)
    free = codes == 0
    if codes.shape[0] and not np.all(free == free[0]):
        raise SkelmaxError("mixed-plane-class", "faces are not parallel to one coordinate plane")
    n = codes.shape[1]
    t = np.asarray(weights.t if isinstance(weights, WeightVector) else weights, dtype=float)
    u = t.size
    norm = float(delta ** (n - m * k) * np.sum(t ** m))
    if norm > 1 + 1e-9:
        raise SkelmaxError("weights-unnormalized", f"delta^(n-mk) sum t^m = {norm:.6g} > 1")
    lo, hi = face_boxes(centers, steps, codes)
    cell = delta ** n
    if m == 2:
        ov = np.prod(_overlap(lo[:, None], hi[:, None], lo[None], hi[None]), axis=-1).astype(float)
        L = ov * cell
        I = float(t @ L @ t)
        per_i1 = L.sum(axis=1)
        tuples = np.count_nonzero(ov, axis=1)
    else:
        I = 0.0
        per_i1 = np.zeros(u)
        tuples = np.zeros(u, dtype=np.int64)
        for i in range(u):
            lo_i = np.maximum(lo[i][None], lo)
            hi_i = np.minimum(hi[i][None], hi)
            ov = np.prod(_overlap(lo_i[:, None], hi_i[:, None], lo[None], hi[None]), axis=-1).astype(float)
            L = ov * cell
            I += t[i] * float(t @ L @ t)
            per_i1[i] = L.sum()
            tuples[i] = np.count_nonzero(ov)
    rhs = float(np.sum(t ** m * per_i1))
    scale = delta ** ((k - n) * (m - 1) / (2 * n))
    c_star = (I / scale) ** (1.0 / m) if I > 0 else 0.0
    bound = u ** ((m - 1) * (1 - selection_exponent(n, k)))
    return IntersectionReport(I, rhs, c_star, int(tuples.max()) if u else 0, float(bound),
                              int(u), m, float(delta), norm)


def rasterized_I(centers, steps, codes, weights, spec, m):
    """``|| sum t_i 1_{l_i} ||_m^m`` by rasterization on ``spec`` (cross-check for ``I``)."""
    lo, hi = face_boxes(centers, steps, codes)
    g = _kernels.stamp_boxes_bulk(spec.extent, lo, hi, np.asarray(weights, dtype=float))
    return float(spec.cell_volume * np.sum(np.maximum(g, 0.0) ** m))


def intersection_family(n, k, delta, u_max=200, seed=0, free_axes=None):
    """A selected-face family inside one plane class.

    Radii are uniform random on ``[1, 2] ∩ delta Z`` for every Q_0 center,
    faces are chosen with the greedy plane selection, and the family is the
    contiguous block of at most ``u_max`` class members around the median plane
    offset (sorted by offset, then center order). Returns
    ``(centers, steps, codes)`` in 7Q_0 cell units.
    """
    from .extremal import _center_index

    spec = unit_q0(n, delta)
    rng = np.random.default_rng(np.random.SeedSequence([seed, spec.inv_delta]))
    centers = _center_index(spec)
    M = spec.inv_delta
    steps = rng.integers(M, 2 * M + 1, centers.shape[0])
    idx, _ = greedy_select_indices(2 * centers + 1, 2 * steps, n, k, delta)
    phi = FaceAssignment(n, k, idx)
    codes_all = face_codes(n, k).astype(np.int64)
    if free_axes is None:
        free_axes = tuple(range(k))
    members = class_members(phi, free_axes)
    codes = codes_all[phi.index[members]]
    c, s = centers[members], steps[members]
    fixed = codes != 0
    # sort by the full fixed-coordinate tuple so coplanar faces sit together
    keys = [tuple(np.where(fixed[i], c[i] + codes[i] * s[i], 0)) for i in range(len(members))]
    order = sorted(range(len(members)), key=lambda i: (keys[i], i))
    mid = len(order) // 2
    start = max(0, min(mid - u_max // 2, len(order) - u_max))
    pick = np.array(order[start:start + u_max], dtype=np.int64)
    return c[pick], s[pick], codes[pick]
