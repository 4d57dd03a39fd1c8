import json

import numpy as np
import pytest

from linregions.arrangement import (
    SearchOptions,
    brute_force_enumerate,
    enumerate_layer,
    general_position_count,
)
from linregions.lp import TAU_INTERIOR, Box
from linregions.network import Activation, Layer, Network, activation_pattern


def random_instance(D, K, seed, central=False):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((K, D))
    b = np.zeros(K) if central else rng.standard_normal(K)
    return W, b


class TestGeneralPositionCount:
    def test_known_values(self):
        assert general_position_count(16, 2) == 137
        assert general_position_count(3, 2) == 7
        assert general_position_count(12, 2) == 79
        assert general_position_count(12, 2, central=True) == 24
        assert general_position_count(16, 2, central=True) == 32

    def test_single_hyperplane(self):
        for D in (1, 2, 5):
            assert general_position_count(1, D) == 2

    def test_low_rank_saturates(self):
        # K <= D: every sign pattern is realizable
        for K in range(0, 5):
            assert general_position_count(K, 5) == 2**K

    def test_preconditions(self):
        with pytest.raises(ValueError):
            general_position_count(-1, 2)
        with pytest.raises(ValueError):
            general_position_count(3, 0)
        with pytest.raises(ValueError):
            general_position_count(0, 2, central=True)


class TestEnumerateLayer:
    def test_single_hyperplane_two_regions(self):
        p = enumerate_layer(np.array([[1.0, 0.0]]), np.array([0.0]), Box(None, 2))
        assert p.stats.region_count == 2
        assert p.pattern_keys() == ["+", "-"]

    def test_three_generic_lines_seven_regions(self):
        W, b = random_instance(2, 3, seed=42)
        p = enumerate_layer(W, b, Box(1e3, 2))
        assert p.stats.region_count == 7

    def test_central_sixteen_lines(self):
        W, _ = random_instance(2, 16, seed=7)
        p = enumerate_layer(W, np.zeros(16), Box(1e3, 2))
        assert p.stats.region_count == 32

    def test_zero_row_rejected(self):
        W = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(ValueError, match="zero weight row"):
            enumerate_layer(W, np.zeros(2), Box(1e3, 2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            enumerate_layer(np.ones((2, 3)), np.zeros(2), Box(1e3, 2))

    def test_regions_sorted_and_distinct(self):
        W, b = random_instance(3, 8, seed=5)
        p = enumerate_layer(W, b, Box(1e3, 3))
        keys = p.pattern_keys()
        assert keys == sorted(keys)
        assert len(set(keys)) == len(keys)

    def test_region_interior_satisfies_constraints(self):
        W, b = random_instance(3, 7, seed=11)
        p = enumerate_layer(W, b, Box(1e3, 3))
        for r in p.regions:
            assert r.constraints.slacks(r.interior).min() >= TAU_INTERIOR
            assert r.margin > TAU_INTERIOR

    def test_pattern_consistent_with_interior(self):
        W, b = random_instance(2, 9, seed=13)
        p = enumerate_layer(W, b, Box(1e3, 2))
        net = Network([Layer(W, b, Activation("relu"))], 2)
        for r in p.regions:
            pat = activation_pattern(net, r.interior)
            assert np.array_equal(pat.per_layer[0].signs, r.pattern.per_layer[0].signs)

    def test_telemetry_invariants(self):
        W, b = random_instance(4, 10, seed=3)
        p = enumerate_layer(W, b, Box(1e3, 4))
        st = p.stats
        assert st.region_count == len(p.regions)
        assert st.tree_nodes >= st.region_count
        assert st.lp_calls <= 2 * st.tree_nodes

    def test_coverage_of_uniform_samples(self):
        # every sampled activation pattern must belong to an enumerated region
        W, b = random_instance(2, 8, seed=21)
        hw = 10.0
        p = enumerate_layer(W, b, Box(hw, 2))
        known = {r.pattern.per_layer[0].signs.tobytes() for r in p.regions}
        rng = np.random.default_rng(0)
        xs = rng.uniform(-hw, hw, size=(10_000, 2))
        signs = np.where(xs @ W.T + b >= 0, 1, -1).astype(np.int8)
        for row in signs:
            assert row.tobytes() in known

    def test_disjointness(self):
        W, b = random_instance(3, 9, seed=2)
        p = enumerate_layer(W, b, Box(1e3, 3))
        seen = set()
        for r in p.regions:
            key = np.where(W @ r.interior + b >= 0, 1, -1).astype(np.int8).tobytes()
            assert key not in seen
            seen.add(key)

    def test_unbounded_box(self):
        W, b = random_instance(2, 5, seed=9)
        p_unb = enumerate_layer(W, b, Box(None, 2))
        assert p_unb.stats.region_count == general_position_count(5, 2)

    def test_count_only_mode(self):
        W, b = random_instance(2, 6, seed=1)
        full = enumerate_layer(W, b, Box(1e3, 2))
        counted = enumerate_layer(W, b, Box(1e3, 2), SearchOptions(count_only=True))
        assert counted.regions == []
        assert counted.stats.region_count == full.stats.region_count
        assert counted.stats.lp_calls == full.stats.lp_calls


class TestBruteForceOracle:
    @pytest.mark.parametrize("seed", range(12))
    def test_equivalence_random(self, seed):
        rng = np.random.default_rng(seed)
        D = int(rng.integers(2, 7))
        K = int(rng.integers(3, 13))
        W, b = random_instance(D, K, seed=seed * 7 + 1)
        box = Box(1e3, D)
        fast = enumerate_layer(W, b, box)
        slow = brute_force_enumerate(W, b, box)
        assert fast.pattern_set() == slow.pattern_set()

    def test_equivalence_central(self):
        W, _ = random_instance(3, 8, seed=77)
        box = Box(1e3, 3)
        fast = enumerate_layer(W, np.zeros(8), box)
        slow = brute_force_enumerate(W, np.zeros(8), box)
        assert fast.pattern_set() == slow.pattern_set()

    def test_search_redundancy_implies_true_redundancy(self):
        # a unit skipped during the search can never be a facet of the final
        # region, while an added row may or may not remain one
        W, b = random_instance(2, 8, seed=31)
        box = Box(1e3, 2)
        fast = {r.pattern.key(): r for r in enumerate_layer(W, b, box).regions}
        slow = {r.pattern.key(): r for r in brute_force_enumerate(W, b, box).regions}
        for key, r_fast in fast.items():
            mask_fast = r_fast.pattern.per_layer[0].redundant
            mask_slow = slow[key].pattern.per_layer[0].redundant
            assert np.all(~mask_fast | mask_slow)

    def test_margins_agree_between_routes(self):
        W, b = random_instance(3, 7, seed=19)
        box = Box(1e3, 3)
        fast = {r.pattern.key(): r.margin for r in enumerate_layer(W, b, box).regions}
        slow = {r.pattern.key(): r.margin for r in brute_force_enumerate(W, b, box).regions}
        assert fast.keys() == slow.keys()
        for key in fast:
            assert fast[key] == pytest.approx(slow[key], abs=1e-7)

    def test_guard_limit(self):
        with pytest.raises(ValueError, match="guarded"):
            brute_force_enumerate(np.ones((21, 2)), np.zeros(21), Box(1.0, 2))

    def test_identical_on_single_hyperplane(self):
        W = np.array([[1.0, 0.0]])
        b = np.zeros(1)
        fast = enumerate_layer(W, b, Box(None, 2))
        slow = brute_force_enumerate(W, b, Box(None, 2))
        assert fast.pattern_keys() == slow.pattern_keys() == ["+", "-"]


class TestCountLaws:
    @pytest.mark.parametrize("D,K", [(2, 8), (3, 8), (4, 8), (2, 12)])
    def test_affine_unbounded(self, D, K):
        for seed in range(3):
            W, b = random_instance(D, K, seed=seed + 50)
            p = enumerate_layer(W, b, Box(None, D), SearchOptions(count_only=True))
            assert p.stats.region_count == general_position_count(K, D)

    @pytest.mark.parametrize("D,K", [(2, 8), (3, 8), (4, 8)])
    def test_central_unbounded(self, D, K):
        for seed in range(3):
            W, _ = random_instance(D, K, seed=seed + 90)
            p = enumerate_layer(W, np.zeros(K), Box(None, D), SearchOptions(count_only=True))
            assert p.stats.region_count == general_position_count(K, D, central=True)


class TestParallel:
    def test_worker_count_does_not_change_output(self):
        W, b = random_instance(3, 12, seed=4)
        box = Box(1e3, 3)
        p1 = enumerate_layer(W, b, box, SearchOptions(workers=1))
        p2 = enumerate_layer(W, b, box, SearchOptions(workers=2))
        assert p1.to_json() == p2.to_json()
        assert p1.to_csv() == p2.to_csv()

    def test_worker_stats_schedule_independent(self):
        W, b = random_instance(2, 10, seed=6)
        box = Box(1e3, 2)
        p1 = enumerate_layer(W, b, box, SearchOptions(workers=1))
        p2 = enumerate_layer(W, b, box, SearchOptions(workers=2))
        assert p1.stats.lp_calls == p2.stats.lp_calls
        assert p1.stats.tree_nodes == p2.stats.tree_nodes


class TestSerialization:
    def test_json_shape(self):
        W, b = random_instance(2, 4, seed=8)
        p = enumerate_layer(W, b, Box(1e3, 2))
        doc = json.loads(p.to_json())
        assert set(doc) == {"regions", "stats"}
        assert doc["stats"]["region_count"] == p.stats.region_count
        first = doc["regions"][0]
        assert set(first) == {"pattern", "redundant", "interior", "margin"}
        assert len(first["interior"]) == 2
        assert set(first["pattern"]) <= {"+", "-"}
        assert set(first["redundant"]) <= {"0", "1"}

    def test_csv_shape(self):
        W, b = random_instance(3, 4, seed=8)
        p = enumerate_layer(W, b, Box(1e3, 3))
        lines = p.to_csv().strip().split("\n")
        assert lines[0] == "pattern,redundant,margin,x0,x1,x2"
        assert len(lines) == 1 + p.stats.region_count
