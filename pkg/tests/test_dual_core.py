import numpy as np
import pytest

from dualbfgs import dual_core as dc
from dualbfgs.problem import ProblemError, aggregate_value, exact_optimum
from dualbfgs.topology import regular_cycle

from conftest import random_instance


def fd_gradient(prob, graph, lam, u, delta):
    hp = dc.dual_value(prob, graph, lam + delta * u)
    hm = dc.dual_value(prob, graph, lam - delta * u)
    return (hp - hm) / (2 * delta)


class TestCoefficient:
    def test_zero_multipliers(self, p3_problem, p3_graph):
        assert np.array_equal(
            dc.multiplier_coefficient(p3_graph, 1, np.zeros(4), 0), np.zeros(1))

    def test_single_neighbor_difference(self, p3_graph):
        lam = np.zeros(4)
        lam[dc.edge_slice(p3_graph, 1, 0, 1)] = 2.0
        lam[dc.edge_slice(p3_graph, 1, 1, 0)] = 0.5
        assert dc.multiplier_coefficient(p3_graph, 1, lam, 0) == np.array([1.5])

    def test_antisymmetric_multipliers(self):
        g = regular_cycle(5, 2)
        v = 0.7
        lam = np.zeros(g.m)
        for (i, j) in g.directed_edges:
            lam[dc.edge_slice(g, 1, i, j)] = v if i < j else -v
        for i in range(g.n):
            c = dc.multiplier_coefficient(g, 1, lam, i)
            expected = sum(2 * v if i < j else -2 * v for j in g.neighbors[i])
            assert np.isclose(c[0], expected)


class TestMaximizers:
    def test_p3_at_zero(self, p3_problem, p3_graph):
        x = dc.all_maximizers(p3_problem, p3_graph, np.zeros(4))
        assert np.array_equal(x, np.array([[-1.0], [0.0], [1.0]]))

    def test_locality(self):
        g = regular_cycle(6, 2)
        prob = random_instance(6, 2, seed=0)
        rng = np.random.default_rng(1)
        lam = rng.normal(size=g.m * 2)
        x0 = dc.local_maximizer(prob, g, lam, 0)
        lam2 = lam.copy()
        lam2[dc.edge_slice(g, 2, 3, 4)] += 5.0  # far from node 0's neighborhood
        assert np.array_equal(dc.local_maximizer(prob, g, lam2, 0), x0)


class TestGradient:
    def test_p3_at_zero(self, p3_problem, p3_graph):
        x = dc.all_maximizers(p3_problem, p3_graph, np.zeros(4))
        g = dc.dual_gradient(p3_graph, x)
        # edge order (0,1), (1,0), (1,2), (2,1)
        assert np.array_equal(g, np.array([-1.0, 1.0, -1.0, 1.0]))

    def test_consensus_gives_zero(self):
        g = regular_cycle(7, 2)
        x = np.tile(np.array([2.0, -3.0]), (7, 1))
        assert np.all(dc.dual_gradient(g, x) == 0)

    def test_antisymmetry(self):
        g = regular_cycle(6, 4)
        x = np.random.default_rng(2).normal(size=(6, 3))
        grad = dc.dual_gradient(g, x)
        for (i, j) in g.directed_edges:
            assert np.array_equal(grad[dc.edge_slice(g, 3, i, j)],
                                  -grad[dc.edge_slice(g, 3, j, i)])


class TestDualValue:
    def test_p3_at_zero(self, p3_problem, p3_graph):
        assert dc.dual_value(p3_problem, p3_graph, np.zeros(4)) == 1.0

    def test_weak_duality(self):
        g = regular_cycle(6, 2)
        prob = random_instance(6, 2, seed=3)
        f_star = aggregate_value(prob, exact_optimum(prob))
        rng = np.random.default_rng(4)
        for _ in range(50):
            lam = rng.normal(size=g.m * 2)
            assert dc.dual_value(prob, g, lam) >= f_star - 1e-10

    def test_convex_along_segments(self):
        g = regular_cycle(5, 2)
        prob = random_instance(5, 1, seed=5)
        rng = np.random.default_rng(6)
        for _ in range(30):
            la, lb = rng.normal(size=g.m), rng.normal(size=g.m)
            theta = rng.uniform()
            mid = dc.dual_value(prob, g, theta * la + (1 - theta) * lb)
            assert mid <= (theta * dc.dual_value(prob, g, la)
                           + (1 - theta) * dc.dual_value(prob, g, lb) + 1e-10)

    def test_gradient_matches_finite_differences(self):
        g = regular_cycle(6, 2)
        prob = random_instance(6, 2, seed=7)
        rng = np.random.default_rng(8)
        for _ in range(30):
            lam = rng.normal(size=g.m * 2)
            u = rng.normal(size=g.m * 2)
            u /= np.linalg.norm(u)
            delta = 1e-6 * (1 + np.linalg.norm(lam))
            fd = fd_gradient(prob, g, lam, u, delta)
            exact = float(u @ dc.dual_gradient(g, dc.all_maximizers(prob, g, lam)))
            assert abs(fd - exact) <= 1e-5 * (1 + abs(exact))


class TestHessianOracle:
    def test_matches_fd_jacobian(self):
        g = regular_cycle(5, 2)
        prob = random_instance(5, 1, seed=9)
        lam = np.random.default_rng(10).normal(size=g.m)
        H = dc.dual_hessian_oracle(prob, g, lam)
        delta = 1e-6
        for k in range(g.m):
            e = np.zeros(g.m)
            e[k] = delta
            gp = dc.dual_gradient(g, dc.all_maximizers(prob, g, lam + e))
            gm = dc.dual_gradient(g, dc.all_maximizers(prob, g, lam - e))
            col = (gp - gm) / (2 * delta)
            assert np.allclose(col, H[:, k], rtol=1e-6, atol=1e-6)

    def test_psd_and_spectral_bound(self):
        g = regular_cycle(6, 2)
        prob = random_instance(6, 2, seed=11)
        H = dc.dual_hessian_oracle(prob, g, np.zeros(g.m * 2))
        eig = np.linalg.eigvalsh(H)
        assert eig[0] >= -1e-10
        assert eig[-1] <= dc.lipschitz_bound(prob, g) + 1e-10

    def test_symmetric_shift_in_null_space(self, p3_problem, p3_graph):
        H = dc.dual_hessian_oracle(p3_problem, p3_graph, np.zeros(4))
        direction = np.zeros(4)
        direction[dc.edge_slice(p3_graph, 1, 0, 1)] = 1.0
        direction[dc.edge_slice(p3_graph, 1, 1, 0)] = 1.0
        assert np.allclose(H @ direction, 0.0)

    def test_rejects_non_quadratic(self, p3_graph):
        from dualbfgs.problem import NodeObjective, ProblemInstance

        class Weird(NodeObjective):
            strong_concavity_mu = 1.0

        prob = ProblemInstance(p=1, objectives=(Weird(), Weird(), Weird()), mu=1.0)
        with pytest.raises(ProblemError):
            dc.dual_hessian_oracle(prob, p3_graph, np.zeros(4))


class TestLipschitz:
    def test_arithmetic(self, p3_problem, p3_graph):
        assert dc.lipschitz_bound(p3_problem, p3_graph) == 12.0

    def test_benchmark_value(self):
        g = regular_cycle(50, 4)
        prob = random_instance(50, 4, seed=12, a_lo=0.1, a_hi=0.1)
        assert np.isclose(dc.lipschitz_bound(prob, g), 2000.0)

    def test_gradient_is_lipschitz(self):
        g = regular_cycle(6, 2)
        prob = random_instance(6, 2, seed=13)
        L = dc.lipschitz_bound(prob, g)
        rng = np.random.default_rng(14)
        for _ in range(100):
            l1, l2 = rng.normal(size=g.m * 2), rng.normal(size=g.m * 2)
            g1 = dc.dual_gradient(g, dc.all_maximizers(prob, g, l1))
            g2 = dc.dual_gradient(g, dc.all_maximizers(prob, g, l2))
            assert np.linalg.norm(g1 - g2) <= L * np.linalg.norm(l1 - l2) + 1e-12
