"""Regularized BFGS curvature, centralized and neighborhood variants.

The centralized update keeps a dense curvature matrix over the full dual
vector and serves as the reference/oracle path.  The decentralized
variant keeps one dense matrix per node over that node's neighborhood
dual block, with a normalization that makes the per-node matrices sum to
a global approximation satisfying the secant condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .topology import (
    Graph,
    NeighborhoodIndex,
    neighborhood_index,
    neighborhood_slice_map,
    normalization_matrix,
)


class CurvatureError(RuntimeError):
    """Curvature condition violated; callers fall back to the skip rule."""


def curvature_threshold(r: np.ndarray, v: np.ndarray) -> float:
    # strict positivity is numerically fragile; scale with the vectors
    return 1e-10 * (1.0 + np.linalg.norm(r) * np.linalg.norm(v))


def centralized_variations(lam_old, lam_new, g_old, g_new, gamma: float):
    """Variable variation v and modified gradient variation r_tilde."""
    v = lam_new - lam_old
    r_tilde = g_new - g_old - gamma * v
    return v, r_tilde


def regularized_bfgs_update(B: np.ndarray, v: np.ndarray, r_tilde: np.ndarray,
                            gamma: float) -> np.ndarray:
    """One regularized BFGS step; the result satisfies B' v = r_tilde + gamma v.

    Raises CurvatureError when either inner product guarding the rank-one
    terms is not safely positive.
    """
    rv = float(r_tilde @ v)
    if rv <= curvature_threshold(r_tilde, v):
        raise CurvatureError(f"curvature condition violated: r'v = {rv:.3e}")
    Bv = B @ v
    vBv = float(v @ Bv)
    if vBv <= curvature_threshold(Bv, v):
        raise CurvatureError(f"degenerate quadratic form: v'Bv = {vBv:.3e}")
    return B + np.outer(r_tilde, r_tilde) / rv - np.outer(Bv, Bv) / vBv \
        + gamma * np.eye(len(v))


@dataclass
class VariationPair:
    """Neighborhood variations and the guarded curvature flag."""

    v_tilde: np.ndarray
    r_tilde: np.ndarray
    curvature_ok: bool


def neighborhood_variations(D: np.ndarray, lam_nbhd_old, lam_nbhd_new,
                            g_nbhd_old, g_nbhd_new, gamma: float) -> VariationPair:
    """Normalized neighborhood variable/gradient variations.

    D is the diagonal of the neighborhood normalization map.
    """
    v_tilde = D * (lam_nbhd_new - lam_nbhd_old)
    r_tilde = g_nbhd_new - g_nbhd_old - gamma * v_tilde
    ok = float(r_tilde @ v_tilde) > curvature_threshold(r_tilde, v_tilde)
    return VariationPair(v_tilde=v_tilde, r_tilde=r_tilde, curvature_ok=ok)


@dataclass
class NeighborhoodCurvature:
    """Per-node curvature state over the neighborhood dual block."""

    B: np.ndarray
    gamma: float
    Gamma: float
    idx: NeighborhoodIndex
    D: np.ndarray  # diagonal of the normalization map
    skip_count: int = 0

    @staticmethod
    def initial(g: Graph, i: int, p: int, gamma: float, Gamma: float,
                scale: float = 1.0) -> "NeighborhoodCurvature":
        """Identity initialization (optionally scale * I)."""
        idx = neighborhood_index(g, i)
        D = normalization_matrix(g, idx, p)
        B = scale * np.eye(idx.M_i * p)
        return NeighborhoodCurvature(B=B, gamma=gamma, Gamma=Gamma, idx=idx, D=D)


def dbfgs_update(state: NeighborhoodCurvature, pair: VariationPair) -> NeighborhoodCurvature:
    """Apply the neighborhood BFGS update in place, skipping on bad curvature."""
    if not pair.curvature_ok:
        state.skip_count += 1
        return state
    try:
        state.B = regularized_bfgs_update(state.B, pair.v_tilde, pair.r_tilde, state.gamma)
    except CurvatureError:
        state.skip_count += 1
    return state


def descent_direction(state: NeighborhoodCurvature, g_nbhd: np.ndarray) -> np.ndarray:
    """e = -(B^-1 + Gamma * D) g_nbhd via one symmetric solve."""
    try:
        c, low = scipy.linalg.cho_factor(state.B, lower=True, check_finite=False)
        solved = scipy.linalg.cho_solve((c, low), g_nbhd, check_finite=False)
    except scipy.linalg.LinAlgError as exc:  # spectral floor invariant violated
        raise CurvatureError(f"curvature matrix not positive definite: {exc}") from exc
    return -(solved + state.Gamma * state.D * g_nbhd)


def split_direction(g: Graph, idx: NeighborhoodIndex, p: int,
                    e: np.ndarray) -> dict[int, np.ndarray]:
    """Partition a neighborhood direction into per-node blocks."""
    out = {}
    for j, off in zip(idx.block_order, idx.offsets):
        out[j] = e[off * p:(off + g.m_i[j]) * p]
    return out


def assemble_direction(own_block: np.ndarray, received) -> np.ndarray:
    """d_i = e^i_i plus the contributions received from neighbors."""
    d = own_block.copy()
    for piece in received:
        d += piece
    return d


def global_direction_oracle(g: Graph, p: int, states, g_global: np.ndarray) -> np.ndarray:
    """Centralized assembly of the global descent direction (test oracle).

    Embeds each node's B^-1 + Gamma * D into its block-sparse position,
    sums, and applies the result to the global gradient.  The normalized
    diagonal pieces sum to Gamma times the identity.
    """
    H = assemble_global_matrix(g, p, states)
    return -H @ g_global


def assemble_global_matrix(g: Graph, p: int, states) -> np.ndarray:
    """Sum of embedded per-node inverse-curvature blocks, i.e. H + Gamma*I."""
    mp = g.m * p
    H = np.zeros((mp, mp))
    for state in states:
        sel = neighborhood_slice_map(g, state.idx, p)
        local = np.linalg.inv(state.B) + state.Gamma * np.diag(state.D)
        H[np.ix_(sel, sel)] += local
    return H


def max_stable_stepsize(mu: float, n: int, gamma: float, Gamma: float) -> float:
    """Sufficient constant stepsize Gamma * mu / (n * Delta^2), Delta = Gamma + n/gamma."""
    delta = Gamma + n / gamma
    return Gamma * mu / (n * delta ** 2)
