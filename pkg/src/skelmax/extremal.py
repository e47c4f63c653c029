"""Small unions of skeleton neighborhoods: rasterization, seeded search, box dimension.

A radius function ``rho`` on the centers of ``Q_0`` puts one skeleton around
every center; the union of all their face boxes (width ``delta``) is the
witness set. Its indicator ``f`` has ``M f = 1`` on ``Q_0`` while
``||f||_p = |union|^(1/p)``, so a small union certifies a large operator norm.

The search works on the cell grid of ``7 Q_0``. With ``M = 1/delta`` a center
sits at cell ``c`` in ``[3M, 4M)^n`` and a face with sign ``s`` on a fixed axis
``a`` occupies the two cell rows ``c_a + s*R - 1`` and ``c_a + s*R``. Unions
shrink when many skeletons reuse the same rows, which is what the
``coordinate-align`` strategy aims for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from .errors import SkelmaxError
from .grid import GridSpec, ScalarField, build_prefix, seven_q0, unit_q0
from .maxop import RadiusFunction, face_averages
from .skeleton import face_codes, skeleton_union_boxes

STRATEGIES = ("random-restart", "coordinate-align", "anneal")


# ---------------------------------------------------------------------------
# occupancy

@dataclass
class OccupancyGrid:
    spec: GridSpec
    bits: np.ndarray

    @property
    def measure(self):
        return int(np.count_nonzero(self.bits)) * self.spec.cell_volume

    def to_field(self):
        return ScalarField(self.spec, self.bits.astype(np.float64))


def _width_steps(delta, width):
    if width is None:
        return 1
    w = round(width / delta)
    if w < 1 or abs(width / delta - w) > 1e-9 * w:
        raise SkelmaxError("off-grid", f"width {width!r} is not a positive multiple of {delta!r}")
    return int(w)


def _center_index(region):
    """Cell indices in the 7Q_0 grid of the centers of ``region``, flat C order."""
    off = np.array(region.offset_in(seven_q0(region.n, region.delta)), dtype=np.int64)
    grids = np.meshgrid(*[np.arange(e) for e in region.extent], indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1) + off


def union_counts(centers, steps, n, k, shape, w=1):
    """Per-cell count of face boxes covering each cell (int32)."""
    lo, hi = skeleton_union_boxes(centers, steps, n, k, w)
    ext = np.array(shape)
    if (lo < 0).any() or (hi > ext).any():
        raise SkelmaxError("domain-too-small", "a face box escapes 7Q_0")
    return _kernels.stamp_boxes_bulk(shape, lo, hi, dtype=np.int32)


def rasterize_union(rho, k, width=None):
    """Occupancy of the union of all face boxes of ``rho``'s skeletons on the 7Q_0 grid."""
    d = rho.spec.delta
    n = rho.spec.n
    big = seven_q0(n, d)
    centers = _center_index(rho.spec)
    counts = union_counts(centers, rho.steps.reshape(-1), n, k, big.extent, _width_steps(d, width))
    return OccupancyGrid(big, counts > 0)


def refined_union_measure(rho, k, factor=4, width=None):
    """Union measure recomputed on a grid ``factor`` times finer.

    Every box ``[lo, hi)`` in coarse cell units becomes ``[f*lo + f/2, f*hi + f/2)``
    in fine units, because a coarse cell center sits half a coarse cell into
    the cell. ``factor`` must be even.
    """
    if factor < 2 or factor % 2:
        raise SkelmaxError("invalid-factor", f"refinement factor {factor} must be even and >= 2")
    d = rho.spec.delta
    n = rho.spec.n
    centers = _center_index(rho.spec)
    lo, hi = skeleton_union_boxes(centers, rho.steps.reshape(-1), n, k, _width_steps(d, width))
    shape = tuple(e * factor for e in seven_q0(n, d).extent)
    half = factor // 2
    counts = _kernels.stamp_boxes_bulk(shape, lo * factor + half, hi * factor + half, dtype=np.int32)
    return int(np.count_nonzero(counts)) * (d / factor) ** n


# ---------------------------------------------------------------------------
# reports

@dataclass
class WitnessReport:
    rho: RadiusFunction
    k: int
    union_measure: float
    delta: float
    strategy: str
    seed: int
    trials: list = dc_field(default_factory=list)

    def norm_lower_bound(self, p):
        """``||M f||_p / ||f||_p`` for the union indicator: every center is covered."""
        return self.union_measure ** (-1.0 / float(p))

    def occupancy(self, width=None):
        return rasterize_union(self.rho, self.k, width)

    def to_json(self, ps=(1, 2)):
        return {
            "n": self.rho.spec.n,
            "k": self.k,
            "delta": self.delta,
            "strategy": self.strategy,
            "seed": self.seed,
            "union_measure": self.union_measure,
            "norm_lower_bound": {str(p): self.norm_lower_bound(p) for p in ps},
            "radius_min": float(self.rho.values.min()),
            "radius_max": float(self.rho.values.max()),
            "trials": self.trials,
        }


# ---------------------------------------------------------------------------
# search

def _measure_of(centers, steps, n, k, shape, cell):
    return int(np.count_nonzero(union_counts(centers, steps, n, k, shape))) * cell


def _random_rows(rng, length, density, block):
    """Alternating on/off runs with geometric lengths; mean on-run ``block``."""
    rows = np.zeros(length, dtype=bool)
    off_mean = block * (1.0 - density) / density
    pos = 0
    on = bool(rng.random() < density)
    while pos < length:
        mean = block if on else off_mean
        run = int(rng.geometric(1.0 / max(mean, 1.0)))
        rows[pos:pos + run] = on
        pos += run
        on = not on
    return rows


def _scores(free_line, centers, radii):
    """Number of the ``2n`` face offsets ``c_a +- R`` that hit free lines, shape ``(m, len(radii))``."""
    m, n = centers.shape
    out = np.zeros((m, radii.size), dtype=np.int16)
    for a in range(n):
        c = centers[:, a:a + 1]
        out += free_line[c - radii[None, :]]
        out += free_line[c + radii[None, :]]
    return out


def align_radii(rng, centers, M, band, density, block, length):
    """Pick radii in ``[M, M+band]`` that put face rows on a sparse random row set.

    Rows are sampled as runs; a line position ``v`` is free when rows ``v-1``
    and ``v`` are both on. Each center takes the smallest radius maximizing the
    number of free face lines. Centers that miss some lines are then visited
    in order, switching their missing rows on so later centers can reuse them.
    """
    m, n = centers.shape
    rows = _random_rows(rng, length, density, block)
    radii = np.arange(M, M + band + 1, dtype=np.int64)
    free = np.zeros(length + 1, dtype=np.int8)
    free[1:length] = rows[:-1] & rows[1:]
    steps = np.empty(m, dtype=np.int64)
    full = np.zeros(m, dtype=bool)
    chunk = max(1, 4_000_000 // radii.size)
    for s in range(0, m, chunk):
        sc = _scores(free, centers[s:s + chunk], radii)
        best = sc.argmax(axis=1)
        steps[s:s + chunk] = radii[best]
        full[s:s + chunk] = sc[np.arange(best.size), best] == 2 * n
    for i in np.flatnonzero(~full):
        sc = _scores(free, centers[i:i + 1], radii)[0]
        R = int(radii[int(sc.argmax())])
        steps[i] = R
        for a in range(n):
            for v in (centers[i, a] - R, centers[i, a] + R):
                if not free[v]:
                    rows[v - 1] = rows[v] = True
                    lo, hi = max(v - 1, 1), min(v + 2, length)
                    free[lo:hi] = rows[lo - 1:hi - 1] & rows[lo:hi]
    return steps


def align_schedule(M):
    """Parameter cycle ``(band, row density, run length)`` for alignment restarts."""
    out = []
    for frac, density, block in ((1 / 16, 0.4, 3.0), (1 / 32, 0.55, 3.0), (1 / 16, 0.55, 6.0),
                                 (1 / 8, 0.4, 1.5), (1 / 64, 0.55, 3.0), (1 / 16, 0.7, 1.5),
                                 (1 / 8, 0.55, 3.0), (1 / 32, 0.7, 3.0)):
        out.append((max(1, round(frac * M)), density, block))
    return out


def _anneal_from(rng, counts, centers, steps, n, k, M, steps_total, t0, t1):
    lo = int(max(M, steps.min() - max(1, M // 32)))
    hi = int(min(2 * M, steps.max() + max(1, M // 32)))
    prop_i = rng.integers(0, centers.shape[0], steps_total)
    prop_R = rng.integers(lo, hi + 1, steps_total)
    u = rng.random(steps_total)
    temps = t0 * (t1 / t0) ** (np.arange(steps_total) / max(1, steps_total - 1))
    codes = face_codes(n, k).astype(np.int64)
    return _kernels.anneal(counts, centers, steps, codes, 1, prop_i, prop_R, u, temps)


def search_radius_function(n, k, delta, strategy="coordinate-align", seed=0, restarts=8,
                           anneal_steps=None):
    """Seeded search for a radius function with a small union.

    ``random-restart`` samples radii uniformly in ``[1, 2]``;
    ``coordinate-align`` runs :func:`align_radii` over a parameter cycle;
    ``anneal`` refines the best aligned result with Metropolis moves that
    re-stamp one skeleton at a time. The constant radius 1 is always a
    candidate, so the result never loses to it.
    """
    if strategy not in STRATEGIES:
        raise SkelmaxError("invalid-strategy", f"{strategy!r} not in {STRATEGIES}")
    big = seven_q0(n, delta)
    spec = unit_q0(n, delta)
    M = spec.inv_delta
    cell = delta ** n
    centers = _center_index(spec)
    shape = big.extent

    best_steps = np.full(centers.shape[0], M, dtype=np.int64)
    best = _measure_of(centers, best_steps, n, k, shape, cell)
    trials = [{"kind": "constant", "measure": best}]

    root = np.random.SeedSequence(seed)
    children = root.spawn(restarts)
    if strategy == "random-restart":
        for r, child in enumerate(children):
            rng = np.random.default_rng(child)
            steps = rng.integers(M, 2 * M + 1, centers.shape[0])
            meas = _measure_of(centers, steps, n, k, shape, cell)
            trials.append({"kind": "random", "restart": r, "measure": meas})
            if meas < best:
                best, best_steps = meas, steps
    else:
        schedule = align_schedule(M)
        for r, child in enumerate(children):
            rng = np.random.default_rng(child)
            band, density, block = schedule[r % len(schedule)]
            steps = align_radii(rng, centers, M, band, density, block, shape[0])
            meas = _measure_of(centers, steps, n, k, shape, cell)
            trials.append({"kind": "align", "restart": r, "band": band, "density": density,
                           "block": block, "measure": meas})
            if meas < best:
                best, best_steps = meas, steps
        if strategy == "anneal":
            rng = np.random.default_rng(root.spawn(1)[0])
            steps = best_steps.copy()
            counts = np.ascontiguousarray(union_counts(centers, steps, n, k, shape))
            total = anneal_steps if anneal_steps is not None else 4 * centers.shape[0]
            change, accepted = _anneal_from(rng, counts, centers, steps, n, k, M, total,
                                            t0=4.0, t1=0.05)
            meas = int(np.count_nonzero(counts)) * cell
            trials.append({"kind": "anneal", "steps": int(total), "accepted": accepted,
                           "measure": meas})
            if meas < best:
                best, best_steps = meas, steps

    rho = RadiusFunction(spec, best_steps.reshape(spec.extent))
    return WitnessReport(rho, k, float(best), float(delta), strategy, int(seed), trials)


# ---------------------------------------------------------------------------
# dimension and the neighborhood chain

def box_dim_estimate(measures, n):
    """``n`` minus the log-log slope of neighborhood measure against ``delta``."""
    measures = list(measures)
    if len(measures) < 3:
        raise SkelmaxError("insufficient-scales", f"{len(measures)} scales given, need >= 3")
    from .normlab import fit_exponent

    slope, _, _ = fit_exponent(measures)
    return n - slope


def chain_constant(report):
    """Implied constant ``C`` in ``|A_delta| <= C delta^((k-n)/(2n)) |B_{2 delta}|`` for ``A = Q_0``.

    Also checks the covering step: for every cell center ``x`` within
    ``delta`` of ``Q_0`` the skeleton at ``x`` with the radius of the nearest
    ``Q_0`` center has every face box inside ``B_{2 delta}``. Returns
    ``(C, min covering average)``; the second number must be 1.
    """
    rho, k = report.rho, report.k
    n, d = rho.spec.n, rho.spec.delta
    M = rho.spec.inv_delta
    occ = rasterize_union(rho, k, 2 * d)
    table = build_prefix(occ.to_field())
    ring = GridSpec.cube(n, d, -d, 1 + 2 * d)
    xs = _center_index(ring)
    nearest = np.clip(xs - 3 * M, 0, M - 1)
    steps = rho.steps[tuple(nearest.T)]
    cover = np.inf
    for code in face_codes(n, k):
        cover = min(cover, float(face_averages(table, xs, steps, code[None, :], 1).min()))
    a_measure = (1 + 2 * d) ** n
    C = a_measure / (d ** ((k - n) / (2 * n)) * occ.measure)
    return C, cover
