import numpy as np
import pytest
from scipy import sparse

from orbitweld.chains import (
    PseudoOrbit,
    PseudoOrbitError,
    RealizationError,
    RecurrenceError,
    build_graph,
    chain_classes,
    find_recurrent_near,
    jump_distance_field,
    realize_pseudo_orbit,
)
from orbitweld.geometry import torus_distance
from orbitweld.maps import LinearAutomorphism, StandardMap, cat_map


class TestPseudoOrbit:
    def test_genuine_orbit_has_no_jumps(self):
        f = StandardMap(0.8)
        po = PseudoOrbit.from_points(f, f.orbit((0.2, 0.3), 20), epsilon=1e-3)
        assert po.jumps == []
        assert po.validate(f)

    def test_jump_detection(self):
        f = StandardMap(0.8)
        pts = f.orbit((0.2, 0.3), 10)
        pts[5] = pts[5] + 5e-4  # tamper with one point
        po = PseudoOrbit.from_points(f, pts, epsilon=0.01)
        assert 4 in po.jumps and 5 in po.jumps  # the tampered point breaks two steps
        assert po.validate(f)

    def test_oversized_jump_rejected(self):
        f = StandardMap(0.8)
        pts = f.orbit((0.2, 0.3), 5)
        pts[2] = pts[2] + 0.1
        with pytest.raises(PseudoOrbitError):
            PseudoOrbit.from_points(f, pts, epsilon=1e-3)

    def test_json_round_trip(self):
        f = StandardMap(0.5)
        pts = f.orbit((0.4, 0.1), 8)
        po = PseudoOrbit.from_points(f, pts, epsilon=1e-3)
        po2 = PseudoOrbit.from_json(po.to_json(), f)
        assert np.allclose(po2.points, po.points)
        assert po2.jumps == po.jumps

    def test_csv_rows_flag_jumps(self):
        f = StandardMap(0.8)
        pts = f.orbit((0.2, 0.3), 6)
        pts[3] = pts[3] + 4e-4
        po = PseudoOrbit.from_points(f, pts, epsilon=0.01)
        rows = po.csv_rows()
        flags = [r[3] for r in rows]
        assert flags[3] == 1  # point 3 is not the image of point 2
        assert flags[0] == 0


class TestBuildGraph:
    def test_identity_map_local_successors(self):
        f = LinearAutomorphism([[1, 0], [0, 1]])
        m = 8
        eps = 0.5 / m
        g = build_graph(f, m, eps, samples=2, seed=1)
        radius_cells = (eps + np.sqrt(2) / (2 * m)) * m
        for c in range(g.n_cells):
            succ = g.successors(c)
            assert c in succ
            # successors stay within the dilation window of the cell
            ci, cj = divmod(c, m)
            for s in succ:
                si, sj = divmod(int(s), m)
                di = min(abs(si - ci), m - abs(si - ci))
                dj = min(abs(sj - cj), m - abs(sj - cj))
                assert np.hypot(di, dj) <= radius_cells + 1.5

    def test_complete_graph_for_huge_epsilon(self):
        f = StandardMap(0.3)
        g = build_graph(f, 4, 1.0, samples=1, seed=0)
        assert g.n_edges == g.n_cells ** 2

    def test_deterministic_given_seed(self):
        f = StandardMap(0.5)
        g1 = build_graph(f, 16, 0.05, samples=2, seed=7)
        g2 = build_graph(f, 16, 0.05, samples=2, seed=7)
        assert (g1.edges != g2.edges).nnz == 0

    def test_dilation_monotone_in_epsilon(self):
        f = StandardMap(0.5)
        g_small = build_graph(f, 16, 0.02, samples=2, seed=3)
        g_big = build_graph(f, 16, 0.05, samples=2, seed=3)
        # every small-epsilon edge is present at the larger epsilon
        diff = g_small.edges.astype(int) - g_big.edges.astype(int)
        assert diff.max() <= 0

    def test_cat_map_strongly_connected(self):
        g = build_graph(cat_map(), 64, 2.0 / 64, samples=2, seed=0)
        labels = chain_classes(g)
        assert len(np.unique(labels)) == 1


class TestChainClasses:
    def brute_force_classes(self, g):
        n = g.n_cells
        reach = g.edges.toarray().astype(bool) | np.eye(n, dtype=bool)
        for _ in range(int(np.ceil(np.log2(n))) + 1):
            reach = reach @ reach
        mutual = reach & reach.T
        labels = -np.ones(n, dtype=int)
        nxt = 0
        for i in range(n):
            if labels[i] < 0:
                labels[mutual[i]] = nxt
                nxt += 1
        return labels

    @pytest.mark.parametrize("seed", range(4))
    def test_partition_matches_transitive_closure(self, seed):
        rng = np.random.default_rng(seed)
        f = StandardMap(rng.uniform(0.0, 1.0))
        m = rng.integers(4, 13)
        eps = rng.uniform(0.3, 3.0) / m
        g = build_graph(f, int(m), float(eps), samples=1, seed=int(seed))
        got = chain_classes(g)
        want = self.brute_force_classes(g)
        # same partition up to relabeling
        mapping = {}
        for a, b in zip(got, want):
            assert mapping.setdefault(a, b) == b
        assert len(set(mapping.values())) == len(mapping)

    def test_complete_graph_single_class(self):
        f = StandardMap(0.3)
        g = build_graph(f, 4, 1.0, samples=1, seed=0)
        assert len(np.unique(chain_classes(g))) == 1


class TestRealize:
    def test_two_point_genuine_orbit(self):
        f = StandardMap(0.5)
        p = np.array([0.21, 0.37])
        q = f.apply(p)
        g = build_graph(f, 32, 0.05, samples=2, seed=0)
        po = realize_pseudo_orbit(f, p, q, 0.05, g)
        assert po.jumps == []
        assert np.allclose(po.points[0], p)
        assert np.allclose(po.points[-1], q)
        assert len(po) == 2

    def test_trivial_same_point(self):
        # q very near f(p) region: choose q = p, must still route
        f = StandardMap(0.5)
        p = np.array([0.21, 0.37])
        g = build_graph(f, 32, 0.05, samples=2, seed=0)
        po = realize_pseudo_orbit(f, p, p, 0.05, g)
        assert np.allclose(po.points[-1], p)
        po.validate(f)

    def test_random_pairs_validate_jump_by_jump(self):
        f = StandardMap(0.5)
        g = build_graph(f, 64, 0.02, samples=2, seed=0)
        rng = np.random.default_rng(5)
        for _ in range(5):
            p = rng.random(2)
            q = rng.random(2)
            po = realize_pseudo_orbit(f, p, q, 0.02, g)
            assert po.validate(f)
            res = po.residuals(f)
            assert np.all(res < 0.02)
            assert np.allclose(po.points[0], p) and np.allclose(po.points[-1], q)

    def test_unreachable_names_chain_classes(self):
        # identity map with small epsilon cannot cross the torus
        f = LinearAutomorphism([[1, 0], [0, 1]])
        g = build_graph(f, 16, 0.01, samples=1, seed=0)
        with pytest.raises(RealizationError) as exc:
            realize_pseudo_orbit(f, (0.1, 0.1), (0.7, 0.7), 0.01, g)
        assert "chain class" in str(exc.value)


class TestRecurrence:
    def test_fixed_point_returns_immediately(self):
        f = StandardMap(0.1)
        x, ell = find_recurrent_near(f, (0.0, 0.0), 0.01, 100)
        assert ell == 1
        assert np.allclose(x, (0.0, 0.0))

    def test_cat_map_rational_point_periodic(self):
        # (0.2, 0.4) has period 2 under the cat map; exact return
        f = cat_map()
        x, ell = find_recurrent_near(f, (0.2, 0.4), 1e-9, 10)
        assert ell == 2
        assert torus_distance(f.iterate(x, ell), x) < 1e-9

    def test_standard_map_generic_return(self):
        f = StandardMap(0.8)
        rng = np.random.default_rng(11)
        x0 = rng.random(2)
        x, ell = find_recurrent_near(f, x0, 0.01, 100_000)
        assert torus_distance(x, x0) <= 0.01
        assert torus_distance(f.iterate(x, ell), x) < 0.01

    def test_failure_reports_best_candidate(self):
        # an irrational shear never returns this tightly this fast
        f = StandardMap(0.0)
        with pytest.raises(RecurrenceError) as exc:
            find_recurrent_near(f, (0.1, 1 / np.sqrt(2)), 1e-12, 50)
        assert exc.value.best_distance is not None


def test_jump_distance_field_zero_at_target():
    f = StandardMap(0.5)
    g = build_graph(f, 16, 0.05, samples=2, seed=0)
    dist = jump_distance_field(g, 37)
    assert dist[37] == 0.0
    assert np.all((dist >= 0) | ~np.isfinite(dist))
