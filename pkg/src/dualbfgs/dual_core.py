"""Dual decomposition: Lagrangian maximizers, dual value, gradients.

A global dual vector is a flat array of length m * p, stacked per the
edge ordering of :mod:`dualbfgs.topology`.  The dual gradient component
for directed edge (i, j) is the constraint slack x_i - x_j, which makes
the dual function convex and its minimization equivalent to the primal
consensus problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import ProblemInstance, _require_quadratic
from .topology import Graph, incidence_operator


@dataclass
class DualState:
    """Snapshot of a dual iterate: multipliers, primal maximizers, gradient."""

    lam: np.ndarray  # (m * p,)
    x: np.ndarray    # (n, p)
    g: np.ndarray    # (m * p,)


def edge_slice(g: Graph, p: int, i: int, j: int) -> slice:
    """Slice of the global dual vector holding the multiplier of edge (i, j)."""
    k = g.edge_index[(i, j)]
    return slice(k * p, (k + 1) * p)


def node_slice(g: Graph, p: int, i: int) -> slice:
    """Slice of the global dual vector holding node i's full block."""
    start = g.node_edge_offset[i] * p
    return slice(start, start + g.m_i[i] * p)


def multiplier_coefficient(g: Graph, p: int, lam: np.ndarray, i: int) -> np.ndarray:
    """c_i = sum over neighbors j of (lambda_ij - lambda_ji)."""
    c = np.zeros(p)
    for j in g.neighbors[i]:
        c += lam[edge_slice(g, p, i, j)]
        c -= lam[edge_slice(g, p, j, i)]
    return c


def local_maximizer(prob: ProblemInstance, g: Graph, lam: np.ndarray, i: int) -> np.ndarray:
    """Node i's Lagrangian maximizer at the current multipliers."""
    c = multiplier_coefficient(g, prob.p, lam, i)
    return prob.objectives[i].maximizer(c)


def all_maximizers(prob: ProblemInstance, g: Graph, lam: np.ndarray) -> np.ndarray:
    """Stack of all local maximizers, shape (n, p)."""
    return np.stack([local_maximizer(prob, g, lam, i) for i in range(g.n)])


def dual_gradient(g: Graph, x: np.ndarray) -> np.ndarray:
    """Constraint slack x_i - x_j per directed edge, stacked globally."""
    p = x.shape[1]
    out = np.empty(g.m * p)
    for k, (i, j) in enumerate(g.directed_edges):
        out[k * p:(k + 1) * p] = x[i] - x[j]
    return out


def dual_value(prob: ProblemInstance, g: Graph, lam: np.ndarray) -> float:
    """Dual function h: Lagrangian evaluated at its per-node maximizers."""
    x = all_maximizers(prob, g, lam)
    val = sum(prob.objectives[i].value(x[i]) for i in range(g.n))
    slack = dual_gradient(g, x)
    return float(val + lam @ slack)


def evaluate(prob: ProblemInstance, g: Graph, lam: np.ndarray) -> DualState:
    """Consistent DualState (maximizers and gradient) at lam."""
    x = all_maximizers(prob, g, lam)
    return DualState(lam=lam.copy(), x=x, g=dual_gradient(g, x))


def dual_hessian_oracle(prob: ProblemInstance, g: Graph, lam: np.ndarray) -> np.ndarray:
    """Closed-form dual Hessian A H_f^-1 A' for quadratic objectives.

    Independent of lam for the quadratic family; kept in the signature so
    the oracle matches the finite-difference Jacobian of the gradient at
    any iterate.
    """
    _require_quadratic(prob)
    p = prob.p
    A = incidence_operator(g, p)
    inv_diag = np.concatenate([1.0 / o.a for o in prob.objectives])
    return A @ (inv_diag[:, None] * A.T)


def lipschitz_bound(prob: ProblemInstance, g: Graph) -> float:
    """Lipschitz constant 4n/mu of the dual gradient."""
    return 4.0 * g.n / prob.mu
