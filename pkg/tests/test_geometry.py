import numpy as np
import pytest

from orbitweld.geometry import (
    Chart,
    ChartDomainError,
    chart_at,
    det2,
    displacement,
    spectral_norm2,
    torus_distance,
    wrap,
)


def brute_force_torus_distance(p, q):
    """Oracle: enumerate all nine integer translates explicitly."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    best = np.inf
    for mx in (-1, 0, 1):
        for my in (-1, 0, 1):
            best = min(best, float(np.linalg.norm(q + [mx, my] - p)))
    return best


def test_distance_identity():
    assert torus_distance((0.1, 0.1), (0.1, 0.1)) == 0.0


def test_distance_wraparound():
    assert torus_distance((0.05, 0.0), (0.95, 0.0)) == pytest.approx(0.1, abs=1e-15)


def test_distance_antipodal_matches_translate_enumeration():
    expected = brute_force_torus_distance((0.25, 0.25), (0.75, 0.75))
    assert expected == pytest.approx(np.sqrt(2) / 2, abs=1e-15)
    assert torus_distance((0.25, 0.25), (0.75, 0.75)) == pytest.approx(expected, abs=1e-15)


def test_distance_agrees_with_oracle_on_random_pairs():
    rng = np.random.default_rng(7)
    pts = rng.random((500, 2, 2))
    for p, q in pts:
        assert torus_distance(p, q) == pytest.approx(
            brute_force_torus_distance(p, q), abs=1e-14
        )


def test_distance_symmetric_and_bounded():
    rng = np.random.default_rng(11)
    p = rng.random((10_000, 2))
    q = rng.random((10_000, 2))
    d1 = torus_distance(p, q)
    d2 = torus_distance(q, p)
    assert np.allclose(d1, d2, atol=1e-15)
    assert np.all(d1 <= np.sqrt(2) / 2 + 1e-15)


def test_triangle_inequality_on_random_triples():
    rng = np.random.default_rng(13)
    p, q, r = rng.random((3, 10_000, 2))
    dpr = torus_distance(p, r)
    dpq = torus_distance(p, q)
    dqr = torus_distance(q, r)
    assert np.all(dpr <= dpq + dqr + 1e-12)


def test_wrap_is_canonical():
    rng = np.random.default_rng(3)
    p = rng.uniform(-5, 5, size=(1000, 2))
    w = wrap(p)
    assert np.all(w >= 0.0) and np.all(w < 1.0)
    # wrapping changes nothing modulo Z^2
    assert np.allclose(np.mod(w - p, 1.0), 0.0, atol=1e-12)


def test_displacement_is_shortest_representative():
    rng = np.random.default_rng(5)
    p = rng.random((2000, 2))
    q = rng.random((2000, 2))
    d = displacement(p, q)
    assert np.all(d >= -0.5) and np.all(d < 0.5)
    assert np.allclose(np.linalg.norm(d, axis=-1), torus_distance(p, q), atol=1e-15)


class TestChart:
    def test_base_maps_to_origin(self):
        c = chart_at((0.0, 0.0), 0.1)
        assert np.allclose(c.to_chart((0.0, 0.0)), (0.0, 0.0))

    def test_round_trip_on_random_points(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            base = rng.random(2)
            c = chart_at(base, 0.2)
            for _ in range(100):
                u = rng.uniform(-0.14, 0.14, size=2)
                p = c.from_chart(u)
                assert np.allclose(c.to_chart(p), u, atol=1e-12)
                assert np.allclose(c.from_chart(c.to_chart(p)), p, atol=1e-12)

    def test_point_outside_domain_rejected(self):
        c = chart_at((0.5, 0.5), 0.1)
        with pytest.raises(ChartDomainError):
            c.to_chart((0.9, 0.9))

    def test_radius_too_large_rejected(self):
        with pytest.raises(ChartDomainError):
            Chart((0.0, 0.0), 0.3)


def test_mat2_helpers():
    rng = np.random.default_rng(19)
    for _ in range(100):
        m = rng.normal(size=(2, 2))
        assert det2(m) == pytest.approx(np.linalg.det(m), rel=1e-12, abs=1e-12)
        assert spectral_norm2(m) == pytest.approx(
            np.linalg.svd(m, compute_uv=False)[0], rel=1e-10, abs=1e-12
        )
