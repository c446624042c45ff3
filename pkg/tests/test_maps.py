import numpy as np
import pytest

from orbitweld.geometry import det2, torus_distance
from orbitweld.maps import (
    LinearAutomorphism,
    PendulumMap,
    StandardMap,
    cat_map,
    map_from_spec,
)

ALL_MAPS = [
    StandardMap(0.0),
    StandardMap(0.1),
    StandardMap(0.8),
    cat_map(),
    LinearAutomorphism([[1, 0], [0, 1]]),
    PendulumMap(1.0, 64, h_cos=[0.3]),
]


def fd_tangent(f, p, h=1e-6):
    """Oracle: central finite differences of apply, wrap-aware."""
    cols = []
    for e in (np.array([h, 0.0]), np.array([0.0, h])):
        dp = f.displacement(f.apply(p - e), f.apply(p + e))
        cols.append(dp / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.mark.parametrize("f", ALL_MAPS, ids=lambda f: type(f).__name__ + str(id(f) % 97))
def test_unit_determinant_everywhere(f):
    rng = np.random.default_rng(23)
    pts = rng.random((10_000, 2))
    if f.surface == "cylinder":
        pts[:, 1] = rng.uniform(-2, 2, size=10_000)
    dets = det2(f.tangent(pts))
    assert np.max(np.abs(dets - 1.0)) <= 1e-9


@pytest.mark.parametrize("f", ALL_MAPS, ids=lambda f: type(f).__name__ + str(id(f) % 97))
def test_tangent_matches_finite_differences(f):
    rng = np.random.default_rng(29)
    for _ in range(50):
        p = rng.random(2)
        if f.surface == "cylinder":
            p[1] = rng.uniform(-1.5, 1.5)
        assert np.allclose(f.tangent(p), fd_tangent(f, p), atol=1e-6)


@pytest.mark.parametrize("f", ALL_MAPS, ids=lambda f: type(f).__name__ + str(id(f) % 97))
def test_apply_inverse_round_trip(f):
    rng = np.random.default_rng(31)
    pts = rng.random((500, 2))
    if f.surface == "cylinder":
        pts[:, 1] = rng.uniform(-2, 2, size=500)
    back = f.inverse(f.apply(pts))
    err = f.distance(pts, back)
    assert np.max(err) <= 1e-9


class TestStandardMap:
    def test_zero_coupling_is_a_shear(self):
        f = StandardMap(0.0)
        rng = np.random.default_rng(37)
        p = rng.random((100, 2))
        img = f.apply(p)
        assert np.allclose(img[:, 0], np.mod(p[:, 0] + p[:, 1], 1.0))
        assert np.allclose(img[:, 1], p[:, 1])

    def test_fixed_points_at_a_01(self):
        # fixed point equations: y + a sin(2 pi (x+y)) = y and x + y = x mod 1
        # force y = 0 and sin(2 pi x) = 0, so x in {0, 1/2}
        f = StandardMap(0.1)
        for p in [(0.0, 0.0), (0.5, 0.0)]:
            assert torus_distance(f.apply(p), p) <= 1e-15

    def test_tangent_formula(self):
        f = StandardMap(0.1)
        p = np.array([0.2, 0.3])
        c = 2 * np.pi * 0.1 * np.cos(2 * np.pi * 0.5)
        expected = np.array([[1.0, 1.0], [c, 1.0 + c]])
        assert np.allclose(f.tangent(p), expected, atol=1e-15)
        assert det2(f.tangent(p)) == pytest.approx(1.0, abs=1e-15)

    def test_lift_commutes_with_wrap(self):
        f = StandardMap(0.8)
        rng = np.random.default_rng(41)
        u = rng.uniform(-3, 3, size=(100, 2))
        assert np.allclose(
            np.mod(f.lift(u), 1.0), f.apply(np.mod(u, 1.0)), atol=1e-12
        )


class TestLinearAutomorphism:
    def test_identity_fixes_everything(self):
        f = LinearAutomorphism([[1, 0], [0, 1]])
        rng = np.random.default_rng(43)
        p = rng.random((50, 2))
        assert np.allclose(f.apply(p), p)

    def test_cat_map_fixes_origin(self):
        assert np.allclose(cat_map().apply((0.0, 0.0)), (0.0, 0.0))

    def test_cat_map_on_half_half(self):
        # [[2,1],[1,1]] @ (1/2, 1/2) = (3/2, 1) = (1/2, 0) mod 1
        assert np.allclose(cat_map().apply((0.5, 0.5)), (0.5, 0.0))

    def test_rejects_non_unimodular(self):
        with pytest.raises(ValueError):
            LinearAutomorphism([[2, 0], [0, 1]])
        with pytest.raises(ValueError):
            LinearAutomorphism([[1.5, 0], [0, 1]])

    def test_constant_tangent(self):
        f = cat_map()
        assert np.allclose(f.tangent((0.3, 0.7)), [[2, 1], [1, 1]])


class TestPendulum:
    def test_tiny_time_is_near_identity(self):
        f = PendulumMap(1e-9, 4)
        p = np.array([0.3, 0.7])
        assert np.allclose(f.apply(p), p, atol=1e-8)

    def test_unstable_equilibrium_fixed(self):
        # at theta = 1/2 the force -sin(2 pi theta) vanishes; the equilibrium
        # is a saddle, so roundoff in sin(pi) grows like exp(sqrt(2 pi) t) and
        # the iteration count must stay small for longer periods
        for period, iters in ((0.5, 10), (1.0, 5), (3.0, 1)):
            f = PendulumMap(period, 64)
            p = np.array([0.5, 0.0])
            q = p
            for _ in range(iters):
                q = f.apply(q)
            assert f.distance(p, q) <= 1e-10

    def test_composed_determinant_tight(self):
        f = PendulumMap(1.0, 64, h_cos=[0.4])
        rng = np.random.default_rng(47)
        pts = np.stack([rng.random(10_000), rng.uniform(-2, 2, 10_000)], axis=-1)
        dets = det2(f.tangent(pts))
        assert np.max(np.abs(dets - 1.0)) <= 1e-12

    def test_per_step_determinant_exact_symbolically(self):
        # single kick-drift pair in exact arithmetic
        sympy = pytest.importorskip("sympy")
        dt, g = sympy.symbols("dt g")
        kick = sympy.Matrix([[1, 0], [dt * g, 1]])
        drift = sympy.Matrix([[1, dt], [0, 1]])
        assert sympy.simplify((drift * kick).det()) == 1


class TestMapFromSpec:
    def test_standard(self):
        f = map_from_spec({"map": "standard", "a": 0.8})
        assert isinstance(f, StandardMap) and f.a == 0.8

    def test_linear(self):
        f = map_from_spec({"map": "linear", "matrix": [[2, 1], [1, 1]]})
        assert isinstance(f, LinearAutomorphism)

    def test_pendulum(self):
        f = map_from_spec(
            {"map": "pendulum", "T": 1.0, "steps": 64, "h_cos": [0.3], "h_sin": []}
        )
        assert isinstance(f, PendulumMap) and f.steps == 64

    def test_round_trip(self):
        for f in ALL_MAPS:
            g = map_from_spec(f.to_spec())
            p = np.array([0.37, 0.21])
            assert np.allclose(f.apply(p), g.apply(p))

    def test_unknown_rejected(self):
        with pytest.raises(ValueError):
            map_from_spec({"map": "henon"})
        with pytest.raises(ValueError):
            map_from_spec("standard")
