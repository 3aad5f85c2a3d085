"""Synchronous engine: decentralized quasi-Newton and dual descent.

The engine advances a global clock; within a round every per-node
computation reads only the previous round's snapshot, which is what the
barrier semantics of a synchronized network would provide.  Exchange
accounting counts rounds (4 per quasi-Newton iteration, 2 per dual
descent iteration) and per-edge messages.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import curvature as cv
from . import dual_core as dc
from .problem import ProblemInstance, exact_optimum
from .topology import Graph, neighborhood_index, neighborhood_slice_map


METHODS = ("dbfgs", "dual_descent")

TRACE_COLUMNS = ("t", "h", "grad_norm", "err", "comm_rounds", "comm_msgs", "skips")


class DivergenceError(RuntimeError):
    """Non-finite iterate detected; usually the stepsize is too large."""

    def __init__(self, t: int):
        super().__init__(f"non-finite values at iteration {t}; stepsize too large?")
        self.t = t


@dataclass(frozen=True)
class SyncRunConfig:
    method: str = "dbfgs"
    stepsize: float = 0.01
    max_iters: int = 500
    gamma: float = 1e-2
    Gamma: float = 1e-3
    seed: int = 0
    threshold: float | None = None
    b_init_scale: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.stepsize <= 0:
            raise ValueError("stepsize must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class IterationRecord:
    t: int
    h: float
    grad_norm: float
    err: float
    comm_rounds: int
    comm_msgs: int
    skips: int


@dataclass
class SyncWorld:
    """Mutable simulation state shared by the iteration functions."""

    prob: ProblemInstance
    graph: Graph
    config: SyncRunConfig
    lam: np.ndarray
    x: np.ndarray
    g: np.ndarray
    curvatures: list = field(default_factory=list)
    nbhd_sel: list = field(default_factory=list)
    comm_rounds: int = 0
    comm_msgs: int = 0

    @property
    def skips(self) -> int:
        return sum(s.skip_count for s in self.curvatures)


def init_world(prob: ProblemInstance, graph: Graph, config: SyncRunConfig) -> SyncWorld:
    """World at lambda = 0 with consistent maximizers and gradients."""
    p = prob.p
    lam = np.zeros(graph.m * p)
    state = dc.evaluate(prob, graph, lam)
    world = SyncWorld(prob=prob, graph=graph, config=config,
                      lam=lam, x=state.x, g=state.g)
    if config.method == "dbfgs":
        for i in range(graph.n):
            world.curvatures.append(cv.NeighborhoodCurvature.initial(
                graph, i, p, config.gamma, config.Gamma, scale=config.b_init_scale))
            world.nbhd_sel.append(neighborhood_slice_map(
                graph, world.curvatures[i].idx, p))
    return world


def dbfgs_iteration(world: SyncWorld) -> None:
    """One synchronous quasi-Newton iteration (four exchange rounds)."""
    g0, graph, p = world.g, world.graph, world.prob.p
    lam_old = world.lam.copy()
    eps = world.config.stepsize

    # per-node descent components, then exchange round 1 (components)
    pieces = []
    for i in range(graph.n):
        e = cv.descent_direction(world.curvatures[i], g0[world.nbhd_sel[i]])
        pieces.append(cv.split_direction(graph, world.curvatures[i].idx, p, e))
    for i in range(graph.n):
        d_i = cv.assemble_direction(pieces[i][i],
                                    [pieces[j][i] for j in graph.neighbors[i]])
        world.lam[dc.node_slice(graph, p, i)] += eps * d_i
    # rounds 2-4: multipliers, primal recovery, gradients
    world.x = dc.all_maximizers(world.prob, graph, world.lam)
    g1 = dc.dual_gradient(graph, world.x)

    for i in range(graph.n):
        sel = world.nbhd_sel[i]
        pair = cv.neighborhood_variations(
            world.curvatures[i].D, lam_old[sel], world.lam[sel],
            g0[sel], g1[sel], world.config.gamma)
        cv.dbfgs_update(world.curvatures[i], pair)
    world.g = g1
    world.comm_rounds += 4
    world.comm_msgs += 4 * graph.m


def dual_descent_iteration(world: SyncWorld) -> None:
    """One dual gradient descent iteration (two exchange rounds)."""
    world.lam = world.lam - world.config.stepsize * world.g
    world.x = dc.all_maximizers(world.prob, world.graph, world.lam)
    world.g = dc.dual_gradient(world.graph, world.x)
    world.comm_rounds += 2
    world.comm_msgs += 2 * world.graph.m


def run(config: SyncRunConfig, prob: ProblemInstance, graph: Graph,
        x_star: np.ndarray | None = None) -> list[IterationRecord]:
    """Run the configured method, recording one row per iteration.

    Deterministic given (config, prob, graph).  Stops early once the
    normalized primal error drops below config.threshold, if set.
    """
    if x_star is None:
        x_star = exact_optimum(prob)
    x_star_sq = float(x_star @ x_star)
    if x_star_sq == 0.0:
        raise ValueError("exact optimum is zero; normalized error undefined")

    world = init_world(prob, graph, config)
    step = dbfgs_iteration if config.method == "dbfgs" else dual_descent_iteration
    trace: list[IterationRecord] = []
    for t in range(1, config.max_iters + 1):
        step(world)
        if not (np.all(np.isfinite(world.lam)) and np.all(np.isfinite(world.g))):
            raise DivergenceError(t)
        err = float(np.mean(np.sum((world.x - x_star) ** 2, axis=1)) / x_star_sq)
        h = dc.dual_value(prob, graph, world.lam)
        if not np.isfinite(h):
            raise DivergenceError(t)
        trace.append(IterationRecord(
            t=t, h=h, grad_norm=float(np.linalg.norm(world.g)), err=err,
            comm_rounds=world.comm_rounds, comm_msgs=world.comm_msgs,
            skips=world.skips))
        if config.threshold is not None and err <= config.threshold:
            break
    return trace


def trace_to_csv(trace, columns=TRACE_COLUMNS) -> str:
    """Render a trace as CSV with full double precision."""
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for rec in trace:
        cells = []
        for col in columns:
            val = getattr(rec, col)
            cells.append(f"{val:.17g}" if isinstance(val, float) else str(val))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()
