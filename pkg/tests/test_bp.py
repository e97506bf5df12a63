import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from nocd.bp import (
    MIN_EDGE_DOT,
    AffiliationMatrix,
    PairBatch,
    batch_loss_gradient,
    edge_probability,
    full_balanced_loss,
    full_loss_gradient,
    generate_bp_graph,
    loss_gradient_wrt_f,
    sample_pair_batch,
    stochastic_balanced_loss,
)
from nocd.graph import SparseGraph


def naive_balanced_loss(f, g):
    """All-pairs double loop; independent of the cached implementation."""
    edge_sum, non_sum, m, mbar = 0.0, 0.0, 0, 0
    for u in range(g.num_nodes):
        for v in range(u + 1, g.num_nodes):
            d = float(f[u] @ f[v])
            if g.has_edge(u, v):
                edge_sum += -np.log(-np.expm1(-max(d, MIN_EDGE_DOT)))
                m += 1
            else:
                non_sum += d
                mbar += 1
    return edge_sum / m + non_sum / mbar


def random_graph(n, rng, density=0.15):
    total = n * (n - 1) // 2
    k = max(1, int(density * total))
    us = rng.integers(0, n, size=3 * k)
    vs = rng.integers(0, n, size=3 * k)
    keep = us != vs
    g = SparseGraph.from_edges(n, us[keep][:k], vs[keep][:k])
    assert g.num_edges < total
    return g


class TestEdgeProbability:
    def test_zero_dot(self):
        assert edge_probability([0.0, 0.0], [1.0, 2.0]) == 0.0

    def test_log_two(self):
        fu = [np.sqrt(np.log(2.0))]
        assert edge_probability(fu, fu) == pytest.approx(0.5, rel=1e-12)

    def test_hand_value(self):
        assert edge_probability([1.0, 1.0], [2.0, 0.0]) == pytest.approx(
            1 - np.exp(-2.0), abs=1e-5
        )

    @given(
        dots=st.lists(st.floats(0.0, 40.0), min_size=1, max_size=6),
        bump=st.floats(1e-6, 5.0),
        index=st.integers(0, 5),
    )
    @settings(max_examples=60, deadline=None)
    def test_bounds_and_monotonicity(self, dots, bump, index):
        fu = np.sqrt(np.asarray(dots))
        fv = fu.copy()
        p = edge_probability(fu, fv)
        assert 0.0 <= p < 1.0
        fv2 = fv.copy()
        fv2[index % fv2.size] += bump
        assert edge_probability(fu, fv2) >= p


class TestFullBalancedLoss:
    def test_zero_affiliations_hit_clamp(self):
        g = SparseGraph.from_edges(3, [0, 1], [1, 2])
        f = np.zeros((3, 2))
        expected = -np.log(-np.expm1(-MIN_EDGE_DOT))
        assert full_balanced_loss(f, g) == pytest.approx(expected, rel=1e-12)

    def test_path_graph_hand_value(self):
        g = SparseGraph.from_edges(3, [0, 1], [1, 2])
        f = np.ones((3, 1))
        expected = -np.log(-np.expm1(-1.0)) + 1.0
        assert full_balanced_loss(f, g) == pytest.approx(expected, rel=1e-12)
        assert full_balanced_loss(f, g) == pytest.approx(0.45868 + 1.0, abs=1e-5)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(8)
        for n in (10, 40, 120):
            g = random_graph(n, rng)
            f = rng.random((n, 3))
            got = full_balanced_loss(f, g)
            want = naive_balanced_loss(f, g)
            assert got == pytest.approx(want, rel=1e-10)

    def test_accepts_affiliation_matrix(self):
        g = SparseGraph.from_edges(3, [0, 1], [1, 2])
        f = AffiliationMatrix(np.ones((3, 1)))
        assert full_balanced_loss(f, g) == full_balanced_loss(np.ones((3, 1)), g)

    def test_complete_graph_is_error(self):
        g = SparseGraph.from_edges(3, [0, 0, 1], [1, 2, 2])
        with pytest.raises(ValueError, match="complete"):
            full_balanced_loss(np.ones((3, 1)), g)

    def test_empty_graph_is_error(self):
        g = SparseGraph.from_edges(3, [], [], allow_empty=True)
        with pytest.raises(ValueError, match="no edges"):
            full_balanced_loss(np.ones((3, 1)), g)

    def test_shape_mismatch_is_error(self):
        g = SparseGraph.from_edges(3, [0, 1], [1, 2])
        with pytest.raises(ValueError):
            full_balanced_loss(np.ones((4, 1)), g)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_caching_identity_property(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 30))
        g = random_graph(n, rng, density=0.3)
        f = rng.random((n, int(rng.integers(1, 4))))
        assert full_balanced_loss(f, g) == pytest.approx(naive_balanced_loss(f, g), rel=1e-10)


class TestStochasticLoss:
    def test_full_coverage_batch_equals_full_loss(self):
        rng = np.random.default_rng(3)
        g = random_graph(12, rng, density=0.3)
        f = rng.random((12, 2))
        eu, ev = g.edge_arrays()
        non_u, non_v = [], []
        for u in range(12):
            for v in range(u + 1, 12):
                if not g.has_edge(u, v):
                    non_u.append(u)
                    non_v.append(v)
        # equal per-pair weight needs every edge and non-edge exactly once
        # and the class counts matched via the normalizing constant
        m = g.num_edges
        mbar = len(non_u)
        edge_part = PairBatch(eu, ev, np.empty(0, np.int64), np.empty(0, np.int64), m)
        non_part = PairBatch(
            np.empty(0, np.int64), np.empty(0, np.int64),
            np.asarray(non_u), np.asarray(non_v), mbar,
        )
        total = stochastic_balanced_loss(f, edge_part) + stochastic_balanced_loss(f, non_part)
        assert total == pytest.approx(full_balanced_loss(f, g), rel=1e-12)

    def test_hand_value_single_pairs(self):
        f = np.array([
            [np.sqrt(np.log(2.0)), 0.0],
            [np.sqrt(np.log(2.0)), 0.0],
            [np.sqrt(0.3), 0.0],
            [np.sqrt(0.3), 0.0],
        ])
        batch = PairBatch(
            np.array([0], dtype=np.int64), np.array([1], dtype=np.int64),
            np.array([2], dtype=np.int64), np.array([3], dtype=np.int64), 1,
        )
        expected = -np.log(0.5) + 0.3
        assert stochastic_balanced_loss(f, batch) == pytest.approx(expected, rel=1e-12)
        assert stochastic_balanced_loss(f, batch) == pytest.approx(0.99315, abs=1e-5)

    def test_empty_batch_is_error(self):
        empty = np.empty(0, dtype=np.int64)
        with pytest.raises(ValueError):
            stochastic_balanced_loss(np.ones((3, 1)), PairBatch(empty, empty, empty, empty, 0))

    def test_estimator_unbiased(self):
        rng = np.random.default_rng(17)
        g = random_graph(50, rng, density=0.12)
        f = rng.random((50, 3))
        full = full_balanced_loss(f, g)
        est = np.mean(
            [stochastic_balanced_loss(f, sample_pair_batch(g, 64, rng)) for _ in range(4000)]
        )
        assert abs(est - full) / full < 0.01


class TestSamplePairBatch:
    def test_single_missing_edge_forces_non_edge(self):
        us = [0, 0, 1, 1, 2]
        vs = [1, 2, 2, 3, 3]  # complete on 4 nodes minus (0,3)
        g = SparseGraph.from_edges(4, us, vs)
        batch = sample_pair_batch(g, 5, np.random.default_rng(0))
        assert np.all(batch.non_u == 0)
        assert np.all(batch.non_v == 3)

    def test_zero_size_gives_empty_batch(self):
        g = SparseGraph.from_edges(3, [0], [1])
        batch = sample_pair_batch(g, 0, np.random.default_rng(0))
        assert batch.batch_size == 0
        assert batch.edge_u.size == 0
        assert batch.non_u.size == 0

    def test_deterministic_given_seed(self):
        rng1 = np.random.default_rng(5)
        rng2 = np.random.default_rng(5)
        g = SparseGraph.from_edges(10, range(9), range(1, 10))
        b1 = sample_pair_batch(g, 32, rng1)
        b2 = sample_pair_batch(g, 32, rng2)
        for name in ("edge_u", "edge_v", "non_u", "non_v"):
            assert np.array_equal(getattr(b1, name), getattr(b2, name))

    def test_edges_uniform_chi_square(self):
        # 10-edge star: draws should be uniform over edges
        g = SparseGraph.from_edges(11, [0] * 10, range(1, 11))
        rng = np.random.default_rng(123)
        batch = sample_pair_batch(g, 100_000, rng)
        keys = batch.edge_u * 11 + batch.edge_v
        _, counts = np.unique(keys, return_counts=True)
        assert counts.size == 10
        _, p = scipy.stats.chisquare(counts)
        assert p > 0.001

    def test_non_edges_valid_and_canonical(self):
        rng = np.random.default_rng(9)
        g = random_graph(20, rng, density=0.3)
        batch = sample_pair_batch(g, 500, rng)
        assert np.all(batch.non_u < batch.non_v)
        assert not g.contains_pairs(batch.non_u, batch.non_v).any()

    def test_complete_graph_is_error(self):
        g = SparseGraph.from_edges(3, [0, 0, 1], [1, 2, 2])
        with pytest.raises(ValueError):
            sample_pair_batch(g, 4, np.random.default_rng(0))


class TestGradients:
    def finite_difference(self, loss_fn, f, h=1e-6):
        num = np.zeros_like(f)
        for i in range(f.shape[0]):
            for j in range(f.shape[1]):
                fp = f.copy()
                fp[i, j] += h
                fm = f.copy()
                fm[i, j] -= h
                num[i, j] = (loss_fn(fp) - loss_fn(fm)) / (2 * h)
        return num

    def test_full_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(21)
        g = random_graph(20, rng, density=0.2)
        f = rng.random((20, 3)) + 0.05
        analytic = full_loss_gradient(f, g)
        numeric = self.finite_difference(lambda q: full_balanced_loss(q, g), f)
        denom = np.maximum(np.abs(numeric), 1e-8)
        assert np.max(np.abs(analytic - numeric) / denom) < 1e-4

    def test_batch_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(22)
        g = random_graph(15, rng, density=0.25)
        f = rng.random((15, 3)) + 0.05
        batch = sample_pair_batch(g, 40, rng)
        analytic = batch_loss_gradient(f, batch)
        numeric = self.finite_difference(lambda q: stochastic_balanced_loss(q, batch), f)
        denom = np.maximum(np.abs(numeric), 1e-8)
        assert np.max(np.abs(analytic - numeric) / denom) < 1e-4

    def test_non_edge_only_batch(self):
        f = np.arange(8, dtype=np.float64).reshape(4, 2) + 1.0
        empty = np.empty(0, dtype=np.int64)
        batch = PairBatch(empty, empty, np.array([0, 0], dtype=np.int64),
                          np.array([2, 3], dtype=np.int64), 2)
        grad = batch_loss_gradient(f, batch)
        assert np.allclose(grad[0], (f[2] + f[3]) / 2)
        assert np.allclose(grad[2], f[0] / 2)
        assert np.allclose(grad[1], 0.0)

    def test_symmetric_nodes_get_equal_gradient_rows(self):
        # complete bipartite K_{2,2} with identical rows everywhere
        g = SparseGraph.from_edges(4, [0, 0, 1, 1], [2, 3, 2, 3])
        f = np.full((4, 2), 0.7)
        grad = full_loss_gradient(f, g)
        assert np.allclose(grad[0], grad[1], atol=1e-12)
        assert np.allclose(grad[2], grad[3], atol=1e-12)

    def test_dispatch_wrapper(self):
        rng = np.random.default_rng(1)
        g = random_graph(10, rng, density=0.3)
        f = rng.random((10, 2))
        assert np.array_equal(loss_gradient_wrt_f(f, g), full_loss_gradient(f, g))
        batch = sample_pair_batch(g, 8, rng)
        assert np.array_equal(loss_gradient_wrt_f(f, batch), batch_loss_gradient(f, batch))
        with pytest.raises(TypeError):
            loss_gradient_wrt_f(f, "neither")

    def test_monotone_loss_terms(self):
        # raising an edge dot lowers its term; raising a non-edge dot raises
        g = SparseGraph.from_edges(3, [0, 1], [1, 2])
        base = np.array([[1.0], [1.0], [1.0]])
        bumped_edge = base.copy()
        bumped_edge[0, 0] = 1.5  # raises <F_0, F_1> (edge), also raises (0,2) non-edge
        grad = full_loss_gradient(base, g)
        # gradient wrt F_0 along edge direction is negative before non-edge term
        edge_coef = -np.exp(-1.0) / (1 - np.exp(-1.0)) / g.num_edges
        assert grad[0, 0] == pytest.approx(edge_coef * 1.0 + 1.0 / 1.0 * 1.0, rel=1e-10)


class TestGenerateBpGraph:
    def test_zero_affiliations_empty_graph(self):
        g = generate_bp_graph(np.zeros((5, 2)), np.random.default_rng(0))
        assert g.num_edges == 0
        assert g.num_nodes == 5

    def test_huge_dots_complete_graph(self):
        f = np.full((6, 1), 8.0)  # dot = 64 => p ~ 1
        g = generate_bp_graph(f, np.random.default_rng(0))
        assert g.num_edges == 6 * 5 // 2

    def test_deterministic_given_seed(self):
        f = np.random.default_rng(1).random((30, 2))
        g1 = generate_bp_graph(f, np.random.default_rng(7))
        g2 = generate_bp_graph(f, np.random.default_rng(7))
        assert g1 == g2

    def test_planted_two_block_density(self):
        # within-block dot = ln 4 -> edge probability 0.75, across 0
        strength = np.sqrt(np.log(4.0))
        f = np.zeros((40, 2))
        f[:20, 0] = strength
        f[20:, 1] = strength
        rng = np.random.default_rng(11)
        within, across, trials = 0, 0, 60
        for _ in range(trials):
            g = generate_bp_graph(f, rng)
            eu, ev = g.edge_arrays()
            same = (eu < 20) == (ev < 20)
            within += int(same.sum())
            across += int((~same).sum())
        pairs_within = 2 * (20 * 19 // 2) * trials
        assert across == 0
        assert within / pairs_within == pytest.approx(0.75, abs=0.01)
