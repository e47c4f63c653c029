import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skelmax.cli import verify_duality
from skelmax.errors import SkelmaxError
from skelmax.extremal import _center_index
from skelmax.grid import ScalarField, seven_q0, unit_q0
from skelmax.maxop import FaceAssignment, RadiusFunction
from skelmax.normlab import (
    ExponentConfig, WeightVector, candidate_pool, duality_check, estimate_norm_lower,
    face_boxes, fit_exponent, intersection_bound_check, intersection_family, norm_ratio,
    norm_scan, rasterized_I, upper_bound_scan,
)
from skelmax.skeleton import face_codes

DELTAS = [2.0 ** -j for j in range(4, 9)]


# -- fitting ---------------------------------------------------------------------

def test_fit_exact_power_law():
    slope, intercept, r2 = fit_exponent([(d, 3.0 * d ** -0.25) for d in DELTAS])
    assert slope == pytest.approx(-0.25, abs=1e-12)
    assert intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert r2 == pytest.approx(1.0)


def test_fit_constant():
    slope, _, r2 = fit_exponent([(d, 2.0) for d in DELTAS])
    assert slope == pytest.approx(0.0, abs=1e-12)
    assert r2 == 1.0


@given(st.integers(0, 2 ** 32 - 1), st.floats(-1.0, 1.0))
def test_fit_noise(seed, beta):
    rng = np.random.default_rng(seed)
    noise = rng.uniform(0.99, 1.01, len(DELTAS))
    slope, _, _ = fit_exponent([(d, d ** beta * e) for d, e in zip(DELTAS, noise)])
    assert abs(slope - beta) <= 0.02


@given(st.floats(1e-6, 1e6), st.integers(0, 2 ** 32 - 1))
def test_fit_scale_invariant(lam, seed):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.5, 2.0, len(DELTAS))
    a = fit_exponent(list(zip(DELTAS, vals)))
    b = fit_exponent(list(zip(DELTAS, lam * vals)))
    assert b[0] == pytest.approx(a[0], abs=1e-12)
    assert b[1] == pytest.approx(a[1] + math.log(lam), abs=1e-9)


def test_fit_errors():
    with pytest.raises(SkelmaxError) as e:
        fit_exponent([(0.5, 1.0), (0.25, 2.0)])
    assert e.value.code == "insufficient-scales"
    with pytest.raises(SkelmaxError) as e:
        fit_exponent([(0.5, 1.0), (0.25, -2.0), (0.125, 1.0)])
    assert e.value.code == "nonpositive-value"


@given(st.floats(1.0, 100.0), st.integers(2, 12))
def test_exponent_config(p, m):
    c = ExponentConfig(p, m)
    if p > 1:
        assert 1 / p + 1 / c.q == pytest.approx(1.0)
    assert 1 < c.m_prime <= 2


def test_exponent_config_errors():
    assert ExponentConfig(1.0).q == math.inf
    for bad in (dict(p=0.5), dict(p=math.inf), dict(p=2.0, m=1), dict(p=2.0, m=2.5)):
        with pytest.raises(SkelmaxError):
            ExponentConfig(**bad)


# -- norm ratios -----------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2])
def test_constant_ratio(n):
    f = ScalarField.constant(seven_q0(n, 1 / 16), 1.0)
    ratio, ok = norm_ratio(f, 0, 1, certify=4)
    assert ok
    assert ratio == pytest.approx(7.0 ** -n)


def test_restricted_below_unrestricted():
    for _, _, f in candidate_pool(2, 1, 1 / 16, trials=2, restarts=2):
        r, _ = norm_ratio(f, 1, 1.0)
        u, _ = norm_ratio(f, 1, 1.0, "unrestricted")
        assert r <= u + 1e-12


def test_zero_norm_candidate_skipped():
    zero = ScalarField.zeros(seven_q0(2, 1 / 8))
    one = ScalarField.constant(seven_q0(2, 1 / 8), 1.0)
    with pytest.warns(UserWarning, match="zero norm"):
        rows = estimate_norm_lower(2, 1, 1 / 8, 1.0, [("z", "random", zero), ("c", "constant", one)])
    assert [r.candidate for r in rows] == ["c"]


def test_candidate_pool_classes():
    pool = candidate_pool(2, 1, 1 / 16, classes=("skeleton", "bump", "neighborhood", "random"), trials=3)
    assert [c for c, _, _ in pool] == ["skeleton", "random-0", "random-1", "random-2", "bump", "neighborhood"]
    with pytest.raises(SkelmaxError):
        candidate_pool(2, 1, 1 / 16, classes=("nonsense",))


def test_small_scan_respects_ceiling():
    scan = norm_scan(2, 1, 1.0, DELTAS[:3], trials=1, restarts=2)
    best = scan.best_per_delta()
    assert [r.delta for r in best] == DELTAS[:3]
    assert all(r.certified for r in scan.rows)
    slope = scan.fit()[0]
    assert abs(slope) <= abs(scan.theory_slope) + 0.05
    js = scan.to_json()
    assert js["theory_slope"] == -0.25


def test_k0_p2_slope_ceiling():
    rep = upper_bound_scan(2, 0, 2.0, DELTAS[:4], trials=1, restarts=2)
    slope = rep.scan.fit()[0]
    assert rep.scan.theory_slope == pytest.approx(-0.25)
    assert -slope <= 0.25 + 0.05


# -- duality ---------------------------------------------------------------------

def _one_face_setup(p, delta=1 / 32):
    n, k = 2, 1
    q0 = unit_q0(n, delta)
    M = q0.inv_delta
    rho = RadiusFunction(q0, np.full(q0.extent, M + 5))
    idx = np.full(q0.size, 2)  # free axis 1
    idx[0] = 1  # one face with free axis 0
    phi = FaceAssignment(n, k, idx)
    spec = seven_q0(n, delta)
    c = _center_index(q0)[0]
    lo, hi = face_boxes(c[None], [M + 5], face_codes(n, k)[1][None])
    v = np.zeros(spec.extent)
    v[lo[0, 0]:hi[0, 0], lo[0, 1]:hi[0, 1]] = 1.0
    return ScalarField(spec, v), rho, phi, (M + 5) * delta


@pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
def test_duality_single_face_closed_form(p):
    d = 1 / 32
    n, k = 2, 1
    f, rho, phi, r = _one_face_setup(p, d)
    q = p / (p - 1)
    t = d ** (k - n / q)  # on the normalization boundary
    rep = duality_check(f, rho, phi, (0,), [t], p)
    meas = 2 ** n * (r * d + d ** 2)  # exact for edges
    assert rep.u == 1
    assert rep.normalization == pytest.approx(1.0)
    assert rep.lhs == pytest.approx(d ** (n / p), rel=1e-12)
    assert rep.f_norm == pytest.approx(meas ** (1 / p), rel=1e-12)
    assert rep.K_given == pytest.approx(t * meas ** (1 / q), rel=1e-12)
    assert rep.K_dual == pytest.approx(rep.K_given, rel=1e-12)
    assert rep.passed


def test_duality_zero_field():
    _, rho, phi, _ = _one_face_setup(2.0)
    zero = ScalarField.zeros(seven_q0(2, 1 / 32))
    rep = duality_check(zero, rho, phi, (0,), [1.0], 2.0)
    assert rep.lhs == 0.0 and rep.passed


def test_duality_errors():
    f, rho, phi, _ = _one_face_setup(2.0)
    with pytest.raises(SkelmaxError) as e:
        duality_check(f, rho, phi, (0,), [1e6], 2.0)
    assert e.value.code == "weights-unnormalized"
    with pytest.raises(SkelmaxError) as e:
        duality_check(f, rho, phi, (0,), [1.0], 1.0)
    assert e.value.code == "invalid-exponent"
    with pytest.raises(SkelmaxError) as e:
        duality_check(f, rho, phi, (0,), [1.0, 1.0], 2.0)
    assert e.value.code == "shape-mismatch"
    with pytest.raises(SkelmaxError):
        WeightVector([-1.0])


def test_duality_random_trials():
    res = verify_duality(trials=8, seed=3)
    assert res["status"] == "PASS"
    assert all(r["lhs"] <= 1.01 * r["K"] * r["f_norm"] for r in res["rows"])


def test_uniform_weights_on_boundary():
    w = WeightVector.uniform(17, 2, 1, 1 / 32, 3.0)
    assert w.normalization(2, 1, 1 / 32, 3.0) == pytest.approx(1.0)


# -- intersections ---------------------------------------------------------------

def _boundary_weights(u, n, k, d, m, scale=1.0):
    return WeightVector.uniform(u, n, k, d, m).t * scale


def test_disjoint_faces_give_zero():
    d = 1 / 16
    codes = face_codes(2, 1)[[0, 0]]
    centers = np.array([[56, 56], [56, 56]])
    steps = np.array([16, 30])  # bottom edges at different heights
    t = _boundary_weights(2, 2, 1, d, 2)
    rep = intersection_bound_check(centers, steps, codes, t, d, 2, 1)
    # only the diagonal terms survive
    meas = np.array([4 * (s * d * d + d * d) for s in steps])
    assert rep.I == pytest.approx(float(np.sum(t ** 2 * meas)), rel=1e-12)
    assert rep.max_tuples == 1


@pytest.mark.parametrize("m", [2, 3])
def test_identical_faces_closed_form(m):
    d = 1 / 16
    n, k = 2, 1
    R = 20
    meas = 2 ** n * (R * d * d + d ** n)
    codes = face_codes(n, k)[[1]]
    t = _boundary_weights(1, n, k, d, m)
    one = intersection_bound_check(np.array([[56, 56]]), [R], codes, t, d, m, k)
    assert one.I == pytest.approx(t[0] ** m * meas, rel=1e-12)
    t2 = _boundary_weights(2, n, k, d, m)
    two = intersection_bound_check(np.array([[56, 56]] * 2), [R, R], codes.repeat(2, 0), t2, d, m, k)
    assert two.I == pytest.approx((2 * t2[0]) ** m * meas, rel=1e-12)


def test_intersection_errors():
    d = 1 / 16
    codes = face_codes(2, 1)[[0, 2]]  # free axes 0 and 1
    with pytest.raises(SkelmaxError) as e:
        intersection_bound_check(np.array([[56, 56]] * 2), [20, 20], codes, [0.1, 0.1], d, 2, 1)
    assert e.value.code == "mixed-plane-class"
    with pytest.raises(SkelmaxError) as e:
        intersection_bound_check(np.array([[56, 56]]), [20], codes[:1], [1e3], d, 2, 1)
    assert e.value.code == "weights-unnormalized"
    with pytest.raises(SkelmaxError):
        intersection_bound_check(np.array([[56, 56]]), [20], codes[:1], [0.1], d, 4, 1)


@pytest.mark.parametrize("m", [2, 3])
@pytest.mark.parametrize("nk", [(2, 1), (2, 0), (3, 1)])
def test_holder_and_raster_cross_check(m, nk):
    n, k = nk
    d = 1 / 16 if n == 2 else 1 / 8
    c, s, codes = intersection_family(n, k, d, u_max=60, seed=1)
    t = np.random.default_rng(0).random(len(s))
    t = WeightVector(t / WeightVector(t).normalization(n, k, d, m) ** (1 / m)).t
    rep = intersection_bound_check(c, s, codes, t, d, m, k)
    assert rep.holder_ok
    assert rep.I == pytest.approx(rasterized_I(c, s, codes, t, seven_q0(n, d), m), rel=1e-9)
    assert rep.max_tuples <= rep.u ** (m - 1)


def test_intersection_family_is_one_class():
    c, s, codes = intersection_family(2, 1, 1 / 32, u_max=200, seed=0)
    assert len(s) == 200
    assert np.all((codes == 0) == (codes[0] == 0))
    assert np.all((s >= 32) & (s <= 64))
