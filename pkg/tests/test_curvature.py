import numpy as np
import pytest

from dualbfgs import curvature as cv
from dualbfgs import dual_core as dc
from dualbfgs.topology import neighborhood_index, neighborhood_slice_map, regular_cycle

from conftest import random_instance


def random_spd(dim, rng, floor):
    """Symmetric matrix with smallest eigenvalue at least floor."""
    Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    eig = rng.uniform(floor, floor + 5.0, size=dim)
    return (Q * eig) @ Q.T


def evolved_states(graph, p, prob, gamma, Gamma, steps, seed):
    """Per-node curvature states after a few random dual moves."""
    rng = np.random.default_rng(seed)
    states = [cv.NeighborhoodCurvature.initial(graph, i, p, gamma, Gamma)
              for i in range(graph.n)]
    sels = [neighborhood_slice_map(graph, s.idx, p) for s in states]
    lam = np.zeros(graph.m * p)
    g = dc.dual_gradient(graph, dc.all_maximizers(prob, graph, lam))
    for _ in range(steps):
        lam_new = lam + 0.1 * rng.normal(size=lam.shape)
        g_new = dc.dual_gradient(graph, dc.all_maximizers(prob, graph, lam_new))
        for i, state in enumerate(states):
            sel = sels[i]
            pair = cv.neighborhood_variations(state.D, lam[sel], lam_new[sel],
                                              g[sel], g_new[sel], gamma)
            cv.dbfgs_update(state, pair)
        lam, g = lam_new, g_new
    return states, lam, g


class TestCentralizedVariations:
    def test_zero_move(self):
        v, r = cv.centralized_variations(np.ones(3), np.ones(3),
                                         np.zeros(3), np.array([1.0, 0, 0]), 0.5)
        assert np.all(v == 0)
        assert np.array_equal(r, np.array([1.0, 0, 0]))

    def test_gamma_zero_reduces_to_gradient_variation(self):
        v, r = cv.centralized_variations(np.zeros(2), np.array([1.0, 0]),
                                         np.zeros(2), np.array([2.0, 0]), 0.0)
        assert np.array_equal(r, np.array([2.0, 0]))

    def test_substitution(self):
        v, r = cv.centralized_variations(np.zeros(2), np.array([1.0, 0]),
                                         np.zeros(2), np.array([2.0, 0]), 0.5)
        assert np.array_equal(v, np.array([1.0, 0]))
        assert np.array_equal(r, np.array([1.5, 0]))


class TestRegularizedBfgs:
    def test_identity_case(self):
        gamma = 0.01
        v = np.array([1.0, 2.0, -1.0])
        B = cv.regularized_bfgs_update(np.eye(3), v, v.copy(), gamma)
        assert np.allclose(B, (1 + gamma) * np.eye(3))
        assert np.allclose(B @ v, v + gamma * v)

    def test_secant_identity_random(self):
        rng = np.random.default_rng(0)
        gamma = 1e-2
        for _ in range(200):
            dim = int(rng.integers(2, 7))
            B = random_spd(dim, rng, gamma)
            v = rng.normal(size=dim)
            r = rng.normal(size=dim)
            if float(r @ v) <= cv.curvature_threshold(r, v):
                continue
            B2 = cv.regularized_bfgs_update(B, v, r, gamma)
            target = r + gamma * v
            assert np.linalg.norm(B2 @ v - target) <= 1e-10 * (1 + np.linalg.norm(target))

    def test_spectral_floor(self):
        rng = np.random.default_rng(1)
        gamma = 0.05
        for _ in range(100):
            B = random_spd(4, rng, gamma)
            v, r = rng.normal(size=4), rng.normal(size=4)
            if float(r @ v) <= cv.curvature_threshold(r, v):
                continue
            B2 = cv.regularized_bfgs_update(B, v, r, gamma)
            assert np.linalg.eigvalsh(B2)[0] >= gamma * (1 - 1e-10)

    def test_rejects_bad_curvature(self):
        with pytest.raises(cv.CurvatureError):
            cv.regularized_bfgs_update(np.eye(2), np.array([1.0, 0]),
                                       np.array([-1.0, 0]), 0.01)


class TestNeighborhoodVariations:
    def test_uniform_degree_scaling(self):
        g = regular_cycle(6, 2)
        idx = neighborhood_index(g, 0)
        from dualbfgs.topology import normalization_matrix
        D = normalization_matrix(g, idx, 1)
        dlam = np.arange(1.0, idx.M_i + 1)
        pair = cv.neighborhood_variations(D, np.zeros(idx.M_i), dlam,
                                          np.zeros(idx.M_i), np.ones(idx.M_i), 0.0)
        assert np.allclose(pair.v_tilde, dlam / 3.0)

    def test_zero_move_flags_skip(self):
        D = np.full(4, 0.5)
        pair = cv.neighborhood_variations(D, np.ones(4), np.ones(4),
                                          np.zeros(4), np.ones(4), 0.01)
        assert np.all(pair.v_tilde == 0)
        assert not pair.curvature_ok

    def test_p3_middle_node_normalization(self, p3_graph):
        state = cv.NeighborhoodCurvature.initial(p3_graph, 1, 1, 0.01, 0.001)
        assert np.allclose(state.D, [1 / 3, 1 / 3, 1 / 2, 1 / 2])


class TestDbfgsUpdate:
    def test_skip_path(self, p3_graph):
        state = cv.NeighborhoodCurvature.initial(p3_graph, 1, 1, 0.01, 0.001)
        before = state.B.copy()
        pair = cv.VariationPair(v_tilde=np.zeros(4), r_tilde=np.ones(4),
                                curvature_ok=False)
        cv.dbfgs_update(state, pair)
        assert np.array_equal(state.B, before)
        assert state.skip_count == 1

    def test_local_secant_and_floor(self):
        g = regular_cycle(6, 2)
        prob = random_instance(6, 2, seed=2)
        gamma = 1e-2
        rng = np.random.default_rng(3)
        state = cv.NeighborhoodCurvature.initial(g, 0, 2, gamma, 1e-3)
        sel = neighborhood_slice_map(g, state.idx, 2)
        lam = np.zeros(g.m * 2)
        grad = dc.dual_gradient(g, dc.all_maximizers(prob, g, lam))
        for _ in range(50):
            lam_new = lam + 0.2 * rng.normal(size=lam.shape)
            g_new = dc.dual_gradient(g, dc.all_maximizers(prob, g, lam_new))
            pair = cv.neighborhood_variations(state.D, lam[sel], lam_new[sel],
                                              grad[sel], g_new[sel], gamma)
            skips = state.skip_count
            cv.dbfgs_update(state, pair)
            if state.skip_count == skips:  # update actually happened
                dg = g_new[sel] - grad[sel]
                assert np.linalg.norm(state.B @ pair.v_tilde - dg) \
                    <= 1e-8 * (1 + np.linalg.norm(dg))
            assert np.linalg.eigvalsh(state.B)[0] >= gamma * (1 - 1e-10)
            lam, grad = lam_new, g_new


class TestDescentDirection:
    def test_zero_gradient(self, p3_graph):
        state = cv.NeighborhoodCurvature.initial(p3_graph, 1, 1, 0.01, 0.001)
        assert np.all(cv.descent_direction(state, np.zeros(4)) == 0)

    def test_identity_unregularized(self, p3_graph):
        state = cv.NeighborhoodCurvature.initial(p3_graph, 1, 1, 0.01, 0.0)
        g = np.array([1.0, -2.0, 0.5, 3.0])
        assert np.allclose(cv.descent_direction(state, g), -g)

    def test_strict_descent(self):
        g = regular_cycle(6, 2)
        prob = random_instance(6, 1, seed=4)
        Gamma = 1e-3
        states, _, _ = evolved_states(g, 1, prob, 1e-2, Gamma, 10, seed=5)
        rng = np.random.default_rng(6)
        for state in states:
            gn = rng.normal(size=state.idx.M_i)
            e = cv.descent_direction(state, gn)
            bound = -Gamma * float(np.min(state.D)) * float(gn @ gn)
            assert float(e @ gn) <= bound + 1e-12


class TestSplitAssemble:
    def test_partition_reconstructs(self, p3_graph):
        idx = neighborhood_index(p3_graph, 1)
        e = np.arange(4.0)
        blocks = cv.split_direction(p3_graph, idx, 1, e)
        assert [len(blocks[j]) for j in idx.block_order] == [2, 1, 1]
        assert np.array_equal(np.concatenate([blocks[j] for j in idx.block_order]), e)

    def test_assemble_sums_contributions(self):
        own = np.array([1.0, 2.0])
        d = cv.assemble_direction(own, [np.array([0.5, 0.0]), np.array([0.0, -1.0])])
        assert np.array_equal(d, np.array([1.5, 1.0]))
        assert np.array_equal(own, np.array([1.0, 2.0]))  # input not mutated


class TestGlobalOracle:
    def test_distributed_equals_global(self):
        g = regular_cycle(6, 2)
        p = 2
        prob = random_instance(6, p, seed=7)
        states, _, grad = evolved_states(g, p, prob, 1e-2, 1e-3, 8, seed=8)
        sels = [neighborhood_slice_map(g, s.idx, p) for s in states]
        pieces = [cv.split_direction(g, states[i].idx, p,
                                     cv.descent_direction(states[i], grad[sels[i]]))
                  for i in range(g.n)]
        d = np.zeros(g.m * p)
        for i in range(g.n):
            d[dc.node_slice(g, p, i)] = cv.assemble_direction(
                pieces[i][i], [pieces[j][i] for j in g.neighbors[i]])
        oracle = cv.global_direction_oracle(g, p, states, grad)
        assert np.linalg.norm(d - oracle) <= 1e-10 * (1 + np.linalg.norm(oracle))

    def test_lemma_sandwich_small_instance(self):
        g = regular_cycle(5, 2)
        gamma, Gamma = 1e-2, 1e-3
        prob = random_instance(5, 1, seed=9)
        states, _, _ = evolved_states(g, 1, prob, gamma, Gamma, 10, seed=10)
        H = cv.assemble_global_matrix(g, 1, states)
        eig = np.linalg.eigvalsh(H)
        assert eig[0] >= Gamma - 1e-8
        assert eig[-1] <= Gamma + g.n / gamma + 1e-8

    def test_initial_diagonal_blocks_sum_to_identity_scale(self):
        # at B = I the assembled matrix is (overlap count) + Gamma on the
        # diagonal structure; just check the Gamma * D pieces sum exactly
        g = regular_cycle(6, 2)
        Gamma = 0.25
        states = [cv.NeighborhoodCurvature.initial(g, i, 1, 1e-2, Gamma)
                  for i in range(g.n)]
        H = cv.assemble_global_matrix(g, 1, states)
        H_no_gamma = cv.assemble_global_matrix(
            g, 1, [cv.NeighborhoodCurvature(B=s.B, gamma=s.gamma, Gamma=0.0,
                                            idx=s.idx, D=s.D) for s in states])
        assert np.allclose(H - H_no_gamma, Gamma * np.eye(g.m))


class TestStepsizeBound:
    def test_benchmark_arithmetic(self):
        val = cv.max_stable_stepsize(0.1, 50, 1e-2, 1e-3)
        assert np.isclose(val, 1e-3 * 0.1 / (50 * 5000.001 ** 2))
        assert val == pytest.approx(8.0e-14, rel=1e-3)

    def test_monotone_in_Gamma(self):
        vals = [cv.max_stable_stepsize(0.1, 50, 1e-2, G)
                for G in (1e-4, 1e-3, 1e-2)]
        assert vals[0] < vals[1] < vals[2]

    def test_single_node_degenerate(self):
        gamma, Gamma, mu = 0.5, 0.25, 2.0
        delta = Gamma + 1.0 / gamma
        assert cv.max_stable_stepsize(mu, 1, gamma, Gamma) == Gamma * mu / delta ** 2
