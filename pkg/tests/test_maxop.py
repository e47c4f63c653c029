import numpy as np
import pytest
from hypothesis import given, strategies as st

from skelmax import _kernels
from skelmax.errors import DominationError, SkelmaxError
from skelmax.extremal import rasterize_union
from skelmax.grid import GridSpec, ScalarField, abs_prefix, seven_q0, unit_q0
from skelmax.maxop import (
    FaceAssignment, RadiusFunction, build_dominating_rho, dyadic_levels, evaluate_dyadic,
    evaluate_linearized, evaluate_restricted, evaluate_unrestricted,
    index_skeleton, min_face_average, naive_restricted, radius_steps,
    rescaling_pair, restricted_max, snap_radius,
)
from skelmax.skeleton import Skeleton, enumerate_faces, face_codes, face_neighborhood

D = 1 / 8


def rand_field(seed, n=2, delta=D, power=1):
    rng = np.random.default_rng(seed)
    spec = seven_q0(n, delta)
    return ScalarField(spec, rng.random(spec.extent) ** power)


def op(f, k, variant):
    if variant == "restricted":
        return evaluate_restricted(f, k).field.values
    if variant == "unrestricted":
        return evaluate_unrestricted(f, k).field.values
    return evaluate_dyadic(f, k, -1).field.values


# -- single-skeleton queries ---------------------------------------------------

def test_min_face_average_constant():
    t = abs_prefix(ScalarField.constant(seven_q0(2, D), 2.0))
    assert min_face_average(t, Skeleton((0.5, 0.5), 1.25), 1) == pytest.approx(2.0)


def test_min_face_sees_empty_edge():
    spec = seven_q0(2, D)
    s = Skeleton((0.5625, 0.5625), 1.0)
    box = face_neighborhood(s, enumerate_faces((2, 1))[0], D)
    lo, hi = spec.cell_range(box)
    v = np.zeros(spec.extent)
    v[lo[0]:hi[0], lo[1]:hi[1]] = 1.0
    t = abs_prefix(ScalarField(spec, v))
    assert min_face_average(t, s, 1) == 0.0


def test_min_face_matches_per_face_scan():
    f = rand_field(3)
    t = abs_prefix(f)
    s = Skeleton((0.3125, 0.8125), 1.375)
    c = f.spec.centers()
    want = np.inf
    for face in enumerate_faces((2, 1)):
        b = face_neighborhood(s, face, D)
        inside = np.all((c >= b.lo) & (c < b.hi), axis=-1)
        want = min(want, f.values[inside].mean())
    assert min_face_average(t, s, 1) == pytest.approx(want, rel=1e-12)


def test_restricted_max_finds_skeleton_radius():
    spec = seven_q0(2, D)
    x = (0.4375, 0.5625)
    s = Skeleton(x, 1.5)
    v = np.zeros(spec.extent)
    for face in enumerate_faces((2, 1)):
        lo, hi = spec.cell_range(face_neighborhood(s, face, D))
        v[lo[0]:hi[0], lo[1]:hi[1]] = 1.0
    val, r = restricted_max(abs_prefix(ScalarField(spec, v)), x, 1)
    assert val >= 1 - 1e-12
    assert r == 1.5


def test_restricted_max_far_support_is_zero():
    spec = seven_q0(2, D)
    v = np.zeros(spec.extent)
    v[:2, :2] = 5.0  # the corner of 7Q_0, more than 2 + delta away from Q_0
    val, _ = restricted_max(abs_prefix(ScalarField(spec, v)), (0.5625, 0.5625), 1)
    assert val == 0.0


def test_restricted_max_ties_pick_smallest():
    t = abs_prefix(ScalarField.constant(seven_q0(2, D), 1.0))
    assert restricted_max(t, (0.0625, 0.0625), 0) == (1.0, 1.0)


def test_domain_too_small():
    spec = GridSpec.cube(2, D, -1.0, 3.0)
    t = abs_prefix(ScalarField.constant(spec, 1.0))
    with pytest.raises(SkelmaxError) as e:
        evaluate_restricted(t, 1)
    assert e.value.code == "domain-too-small"
    with pytest.raises(SkelmaxError):
        min_face_average(t, Skeleton((0.5, 0.5), 2.0), 1)


# -- whole-field evaluators against oracles -----------------------------------

@pytest.mark.parametrize("k", [0, 1])
def test_restricted_matches_naive(k):
    for seed in range(3):
        f = rand_field(seed)
        got = evaluate_restricted(f, k).field.values
        assert np.allclose(got, naive_restricted(f, k), rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("n,k,delta", [(1, 0, 1 / 8), (3, 1, 1 / 4), (3, 2, 1 / 4), (3, 0, 1 / 4)])
def test_restricted_matches_naive_other_dims(n, k, delta):
    f = rand_field(7, n, delta)
    got = evaluate_restricted(f, k).field.values
    assert np.allclose(got, naive_restricted(f, k), rtol=1e-9, atol=1e-12)


def test_restricted_matches_real_geometry_route():
    """Cell-index kernel versus real-coordinate boxes with the center rule."""
    f = rand_field(11)
    res = evaluate_restricted(f, 1)
    t = abs_prefix(f)
    region = unit_q0(2, D)
    off = np.array(region.offset_in(f.spec))
    for flat in (0, 9, 27, 63):
        idx = np.unravel_index(flat, region.extent)
        x = index_skeleton(f.spec, np.array(idx) + off, 1).center
        val, r = restricted_max(t, x, 1)
        assert val == pytest.approx(res.field.values[idx], rel=1e-12)
        assert r == res.argmax_radii[idx]


def test_wider_width_matches_naive():
    f = rand_field(5)
    got = evaluate_restricted(f, 1, delta=3 * D).field.values
    assert np.allclose(got, naive_restricted(f, 1, delta=3 * D), rtol=1e-9)


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("k", [0, 1])
def test_numba_matches_numpy(k):
    f = rand_field(13, 2, 1 / 16)
    t = abs_prefix(f)
    centers = np.argwhere(np.ones(unit_q0(2, 1 / 16).extent)) + 48
    radii = radius_steps(1 / 16, 1.0, 2.0)
    codes = face_codes(2, k).astype(np.int64)
    a = _kernels.sup_min_face_numpy(t.flat, t.strides, centers, radii, codes, 1, t.mean)
    b = _kernels.sup_min_face_numba(t.flat, t.strides, centers, radii, codes, 1, t.mean)
    assert np.allclose(a[0], b[0], rtol=1e-12, atol=1e-14)
    assert np.array_equal(a[1], b[1])


def test_constant_and_zero():
    spec = seven_q0(2, D)
    for variant in ("restricted", "unrestricted", "dyadic"):
        assert np.allclose(op(ScalarField.constant(spec, 1.0), 1, variant), 1.0)
        assert np.all(op(ScalarField.zeros(spec), 1, variant) == 0.0)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["restricted", "unrestricted", "dyadic"]),
       st.integers(0, 1))
def test_monotone(seed, variant, k):
    rng = np.random.default_rng(seed)
    f = rand_field(seed)
    g = f.with_values(f.values + rng.random(f.spec.extent))
    assert np.all(op(f, k, variant) <= op(g, k, variant) + 1e-12)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 50), st.sampled_from(["restricted", "unrestricted"]))
def test_homogeneous_and_sup_bounded(seed, lam, variant):
    f = rand_field(seed)
    base = op(f, 1, variant)
    scaled = op(f.with_values(lam * f.values), 1, variant)
    assert np.allclose(scaled, lam * base, rtol=1e-9, atol=1e-9)
    assert np.all(base <= f.values.max() + 1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_uses_absolute_value(seed):
    f = rand_field(seed)
    rng = np.random.default_rng(seed + 1)
    signed = f.with_values(f.values * rng.choice([-1.0, 1.0], f.spec.extent))
    assert np.array_equal(op(f, 1, "restricted"), op(signed, 1, "restricted"))


@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 1))
def test_unrestricted_is_max_of_dyadic(seed, k):
    f = rand_field(seed, power=3)
    t = abs_prefix(f)
    blocks = np.max([evaluate_dyadic(t, k, s).field.values for s in dyadic_levels(D)], axis=0)
    un = evaluate_unrestricted(t, k).field.values
    assert np.array_equal(un, blocks)
    assert np.all(evaluate_restricted(t, k).field.values <= un)


def test_dyadic_levels_cover_radii():
    for delta in (1 / 4, 1 / 8, 1 / 32):
        got = set()
        for t in dyadic_levels(delta):
            got |= set(radius_steps(delta, 2.0 ** t, 2.0 ** (t + 1)).tolist())
        assert got == set(radius_steps(delta, delta, 2.0, lo_open=True).tolist())


def test_dyadic_zero_is_restricted():
    f = rand_field(21)
    assert np.array_equal(evaluate_dyadic(f, 1, 0).field.values, evaluate_restricted(f, 1).field.values)


def test_rescaling_identity():
    f = rand_field(2, delta=1 / 32)
    for t in (-3, -2, -1):
        a, b = rescaling_pair(f, 1, t)
        assert np.max(np.abs(a - b)) <= 1e-9


def test_rescaling_field_geometry():
    from skelmax.maxop import rescale_field

    f = rand_field(0)
    g = rescale_field(f, -2)
    assert g.spec.delta == 4 * D
    assert g.spec.origin == (-12.0, -12.0)
    assert np.array_equal(g.values, f.values)


# -- linearized operator ---------------------------------------------------------

def _rho_phi(seed, delta=D):
    rng = np.random.default_rng(seed)
    q0 = unit_q0(2, delta)
    M = q0.inv_delta
    rho = RadiusFunction(q0, rng.integers(M, 2 * M + 1, q0.extent))
    phi = FaceAssignment(2, 1, rng.integers(0, 4, q0.size))
    return rho, phi


@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linearized_is_linear(seed, a, b):
    rho, phi = _rho_phi(seed)
    rng = np.random.default_rng(seed)
    spec = seven_q0(2, D)
    f = ScalarField(spec, rng.normal(size=spec.extent))
    g = ScalarField(spec, rng.normal(size=spec.extent))
    lhs = evaluate_linearized(f.with_values(a * f.values + b * g.values), rho, phi).field.values
    rhs = a * evaluate_linearized(f, rho, phi).field.values + b * evaluate_linearized(g, rho, phi).field.values
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_linearized_bounds():
    rho, phi = _rho_phi(4)
    spec = seven_q0(2, D)
    assert np.allclose(evaluate_linearized(ScalarField.constant(spec, 1.0), rho, phi).field.values, 1.0)
    f = rand_field(4)
    lin = evaluate_linearized(f, rho, phi).field.values
    t = abs_prefix(f)
    region = unit_q0(2, D)
    off = np.array(region.offset_in(spec))
    for flat in range(region.size):
        idx = np.unravel_index(flat, region.extent)
        s = index_skeleton(spec, np.array(idx) + off, int(rho.steps[idx]))
        assert lin[idx] >= min_face_average(t, s, 1) - 1e-12


def test_radius_function_validation():
    q0 = unit_q0(2, D)
    with pytest.raises(SkelmaxError) as e:
        RadiusFunction.constant(q0, 2.5)
    assert e.value.code == "radius-out-of-range"
    with pytest.raises(SkelmaxError) as e:
        RadiusFunction.from_values(q0, np.full(q0.extent, 1.01))
    assert e.value.code == "off-grid"
    with pytest.raises(SkelmaxError):
        FaceAssignment(2, 1, [0, 4])


# -- domination ------------------------------------------------------------------

def test_snap_radius():
    assert snap_radius(1.3, 0.25) == 1.25
    assert snap_radius(1.375, 0.25) == 1.25  # tie: leftmost
    assert snap_radius(0.2, 0.25) == 1.0
    assert snap_radius(7.0, 0.25) == 2.0


def test_domination_constant():
    f = ScalarField.constant(seven_q0(2, 1 / 16), 1.0)
    _, _, rep = build_dominating_rho(f, 1)
    assert rep.violations == 0
    assert np.allclose(rep.lhs, 1.0) and np.allclose(rep.rhs, 3.0)


@pytest.mark.parametrize("seed", range(3))
def test_domination_random(seed):
    f = rand_field(seed, delta=1 / 16, power=4)
    rho, phi, rep = build_dominating_rho(f, 1)
    assert rep.violations == 0
    assert rho.values.min() >= 1.0 and rho.values.max() <= 2.0


def test_domination_on_union_indicator():
    rho, _ = _rho_phi(9, 1 / 16)
    f = rasterize_union(rho, 1).to_field()
    _, _, rep = build_dominating_rho(f, 1)
    assert rep.violations == 0


def test_domination_error_carries_center():
    f = ScalarField.constant(seven_q0(2, 1 / 16), 1.0)
    with pytest.raises(DominationError) as e:
        build_dominating_rho(f, 1, eps=-5.0)
    assert e.value.center == (0, 0)
    _, _, rep = build_dominating_rho(f, 1, eps=-5.0, strict=False)
    assert rep.violations == 256


# -- non-sublinearity ------------------------------------------------------------

def frozen_pair():
    """Edges of one skeleton split between f (vertical) and g (horizontal).

    Center index (27, 28) in the 7Q_0 grid at delta = 1/8, radius 12 cells:
    each of f and g alone misses two edges, their sum covers all four.
    """
    spec = seven_q0(2, 1 / 8)
    f = np.zeros(spec.extent)
    h = np.zeros(spec.extent)
    f[14:16, 15:41] = 1.0
    f[38:40, 15:41] = 1.0
    h[14:40, 15:17] = 1.0
    h[14:40, 39:41] = 1.0
    g = np.clip(h - f, 0.0, 1.0)
    return ScalarField(spec, f), ScalarField(spec, g)


def test_not_sublinear_frozen():
    f, g = frozen_pair()
    x = (3, 4)
    s = evaluate_restricted(f.with_values(f.values + g.values), 1).field.values[x]
    a = evaluate_restricted(f, 1).field.values[x]
    b = evaluate_restricted(g, 1).field.values[x]
    assert s == 1.0
    assert a == pytest.approx(2 / 13, abs=1e-15)
    assert b == pytest.approx(1 / 24, abs=1e-15)
    assert s - (a + b) >= 0.01
    flat = np.ravel_multi_index(x, (8, 8))
    naive = [naive_restricted(v, 1, sample=[flat])[0] for v in (f.with_values(f.values + g.values), f, g)]
    assert naive == pytest.approx([s, a, b], abs=1e-15)
