"""Asynchronous engine: availability schedules, mailboxes, stale views.

Nodes are simulated on a single deterministic global tick line.  A node
active at tick t first reads every bundle sent to it while it was busy,
applies every descent component it has accumulated, refreshes its own
variables against its (possibly stale) neighbor views, and sends a
fresh bundle to each neighbor.  A bundle sent at tick s becomes
readable at the recipient's first availability strictly after s, so at
an active tick t the view of neighbor j has vintage pi_j(t); that is
never staler than the composed vintage pi_j(pi_i(t)) of the schedule
bookkeeping, hence the bounded-staleness window enforced on the
schedule carries over to the engine's views.

Bundles carry the sender's dual block, gradient block, primal variable
and the descent component addressed to the recipient.  The primal
variable is included because a node cannot reconstruct a neighbor's
Lagrangian maximizer from dual views alone (that would require the
multipliers of the neighbor's own neighbors).
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field

import numpy as np

from . import curvature as cv
from . import dual_core as dc
from .engine_sync import DivergenceError, METHODS
from .problem import ProblemInstance, exact_optimum
from .topology import Graph


ASYNC_TRACE_COLUMNS = ("t", "h", "grad_norm", "err", "comm_rounds", "comm_msgs",
                       "skips", "delivered_msgs", "max_staleness")


class ScheduleError(ValueError):
    """Raised for schedule parameters that cannot honor the staleness bound."""


class StalenessViolation(AssertionError):
    """A node's view of a neighbor fell outside the bounded-staleness window."""


@dataclass(frozen=True)
class Schedule:
    """Per-node availability ticks with a bounded-staleness guarantee."""

    n: int
    horizon: int
    mu_d: float
    sigma_d: float
    B_bound: int
    seed: int
    ticks: tuple[tuple[int, ...], ...]

    def is_active(self, i: int, t: int) -> bool:
        k = bisect.bisect_left(self.ticks[i], t)
        return k < len(self.ticks[i]) and self.ticks[i][k] == t

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "mu_d": self.mu_d,
                           "sigma_d": self.sigma_d, "B_bound": self.B_bound,
                           "horizon": self.horizon})


def build_schedule(n: int, horizon: int, mu_d: float = 3.0, sigma_d: float = 1.0,
                   B_bound: int = 12, seed: int = 0) -> Schedule:
    """Gaussian-drift availability schedule starting at tick 0.

    Successive gaps are max(1, round(mu_d + sigma_d * N(0,1))), clamped so
    that the composed view vintage always stays within the B_bound
    staleness window.  The window constrains two consecutive gaps, so the
    per-gap clamp is (B_bound - 1) // 2; B_bound must be at least 3.
    """
    if mu_d < 1:
        raise ScheduleError("mean gap must be >= 1")
    if B_bound < 3:
        raise ScheduleError("staleness bound must be >= 3 (two gaps of at least 1)")
    gap_cap = max(1, (B_bound - 1) // 2)
    rng = np.random.default_rng(seed)
    ticks = []
    for _ in range(n):
        t = 0
        own = [0]
        while True:
            gap = int(max(1, round(mu_d + sigma_d * rng.standard_normal())))
            gap = min(gap, gap_cap)
            t += gap
            if t > horizon:
                break
            own.append(t)
        ticks.append(tuple(own))
    return Schedule(n=n, horizon=horizon, mu_d=mu_d, sigma_d=sigma_d,
                    B_bound=B_bound, seed=seed, ticks=tuple(ticks))


def sync_degenerate_schedule(n: int, horizon: int, B_bound: int = 3) -> Schedule:
    """Every node available at every tick (gap 1); degenerates to lock-step."""
    ticks = tuple(tuple(range(horizon + 1)) for _ in range(n))
    return Schedule(n=n, horizon=horizon, mu_d=1.0, sigma_d=0.0,
                    B_bound=B_bound, seed=0, ticks=ticks)


def pi(schedule: Schedule, i: int, t: int) -> int:
    """Most recent availability of node i strictly before t (0 if none)."""
    k = bisect.bisect_left(schedule.ticks[i], t)
    return schedule.ticks[i][k - 1] if k > 0 else 0


def pi_neighbor(schedule: Schedule, i: int, j: int, t: int) -> int:
    """Vintage of node i's view of neighbor j at tick t."""
    return pi(schedule, j, pi(schedule, i, t))


@dataclass(frozen=True)
class AsyncRunConfig:
    method: str = "dbfgs"
    stepsize: float = 0.007
    gamma: float = 1e-2
    Gamma: float = 1e-3
    horizon: int = 3000
    threshold: float | None = None
    b_init_scale: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.stepsize <= 0:
            raise ValueError("stepsize must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass
class AsyncRecord:
    t: int
    h: float
    grad_norm: float
    err: float
    comm_rounds: int
    comm_msgs: int
    skips: int
    delivered_msgs: int
    max_staleness: int


@dataclass
class _Bundle:
    stamp: int
    sender: int
    lam: np.ndarray
    grad: np.ndarray
    x: np.ndarray
    e_piece: np.ndarray


@dataclass
class _NodeState:
    lam: np.ndarray            # own dual block, (m_i * p,)
    x: np.ndarray              # own primal, (p,)
    grad: np.ndarray           # own gradient block, (m_i * p,)
    lam_view: dict             # neighbor id -> dual block view
    grad_view: dict
    x_view: dict
    view_stamp: dict
    pending_e: np.ndarray      # own descent component awaiting application
    received_e: np.ndarray     # sum of neighbor components awaiting application
    inflight: list = field(default_factory=list)  # bundles not yet read
    curv: cv.NeighborhoodCurvature | None = None
    snap_lam: np.ndarray | None = None  # neighborhood snapshot at last activity
    snap_grad: np.ndarray | None = None


class AsyncWorld:
    """Deterministic event-timeline simulation of the asynchronous methods."""

    def __init__(self, config: AsyncRunConfig, prob: ProblemInstance,
                 graph: Graph, schedule: Schedule):
        if schedule.n != graph.n:
            raise ValueError("schedule and graph disagree on node count")
        self.config = config
        self.prob = prob
        self.graph = graph
        self.schedule = schedule
        self.sent = 0
        self.delivered = 0
        self.max_staleness_seen = 0
        p = prob.p

        # consistent global initialization at lambda = 0
        lam0 = np.zeros(graph.m * p)
        state0 = dc.evaluate(prob, graph, lam0)
        self.nodes: list[_NodeState] = []
        for i in range(graph.n):
            sl = dc.node_slice(graph, p, i)
            node = _NodeState(
                lam=lam0[sl].copy(), x=state0.x[i].copy(), grad=state0.g[sl].copy(),
                lam_view={}, grad_view={}, x_view={}, view_stamp={},
                pending_e=np.zeros(graph.m_i[i] * p),
                received_e=np.zeros(graph.m_i[i] * p))
            for j in graph.neighbors[i]:
                sj = dc.node_slice(graph, p, j)
                node.lam_view[j] = lam0[sj].copy()
                node.grad_view[j] = state0.g[sj].copy()
                node.x_view[j] = state0.x[j].copy()
                node.view_stamp[j] = 0
            self.nodes.append(node)

        if config.method == "dbfgs":
            # initial curvature, snapshots and descent components; the
            # initial neighborhood data counts as setup, not an exchange
            for i in range(graph.n):
                node = self.nodes[i]
                node.curv = cv.NeighborhoodCurvature.initial(
                    graph, i, p, config.gamma, config.Gamma,
                    scale=config.b_init_scale)
                lam_nbhd, g_nbhd = self._nbhd_vectors(i)
                node.snap_lam, node.snap_grad = lam_nbhd, g_nbhd
                e = cv.descent_direction(node.curv, g_nbhd)
                pieces = cv.split_direction(graph, node.curv.idx, p, e)
                node.pending_e = pieces[i]
                for j in graph.neighbors[i]:
                    self.nodes[j].received_e += pieces[j]

    def _nbhd_vectors(self, i: int):
        node = self.nodes[i]
        lam_parts = [node.lam] + [node.lam_view[j] for j in self.graph.neighbors[i]]
        g_parts = [node.grad] + [node.grad_view[j] for j in self.graph.neighbors[i]]
        return np.concatenate(lam_parts), np.concatenate(g_parts)

    def global_lam(self) -> np.ndarray:
        return np.concatenate([node.lam for node in self.nodes])

    @property
    def skips(self) -> int:
        if self.config.method != "dbfgs":
            return 0
        return sum(node.curv.skip_count for node in self.nodes)

    def tick(self, t: int) -> None:
        """Advance the world through global tick t.

        All reads happen before any send of the same tick, so a bundle
        sent at t is never readable at t even when its recipient is
        also active (the strictly-after delivery rule).
        """
        active = [i for i in range(self.graph.n) if self.schedule.is_active(i, t)]
        for i in active:
            self._read(i, t)
        for i in active:
            self._update(i, t)

    def _read(self, i: int, t: int) -> None:
        node = self.nodes[i]
        arriving = [b for b in node.inflight if b.stamp < t]
        node.inflight = [b for b in node.inflight if b.stamp >= t]
        for b in sorted(arriving, key=lambda b: (b.stamp, b.sender)):
            node.lam_view[b.sender] = b.lam
            node.grad_view[b.sender] = b.grad
            node.x_view[b.sender] = b.x
            node.view_stamp[b.sender] = b.stamp
            node.received_e += b.e_piece
            self.delivered += 1
        window_lo = max(0, t - self.schedule.B_bound + 1)
        for j in self.graph.neighbors[i]:
            stamp = node.view_stamp[j]
            if not (window_lo <= stamp <= t):
                raise StalenessViolation(
                    f"node {i} view of {j} at tick {t} has vintage {stamp}, "
                    f"window [{window_lo}, {t}]")
            self.max_staleness_seen = max(self.max_staleness_seen, t - stamp)

    def _update(self, i: int, t: int) -> None:
        node, graph, p = self.nodes[i], self.graph, self.prob.p
        eps = self.config.stepsize
        if self.config.method == "dbfgs":
            d = node.pending_e + node.received_e
            node.lam = node.lam + eps * d
            node.received_e = np.zeros_like(node.received_e)
        else:
            node.lam = node.lam - eps * node.grad
        # recover the primal and refresh the gradient against current views
        c = np.zeros(p)
        for k, j in enumerate(graph.neighbors[i]):
            c += node.lam[k * p:(k + 1) * p]
            pos_ji = graph.neighbors[j].index(i)
            c -= node.lam_view[j][pos_ji * p:(pos_ji + 1) * p]
        node.x = self.prob.objectives[i].maximizer(c)
        for k, j in enumerate(graph.neighbors[i]):
            node.grad[k * p:(k + 1) * p] = node.x - node.x_view[j]
        if not (np.all(np.isfinite(node.lam)) and np.all(np.isfinite(node.grad))):
            raise DivergenceError(t)

        e_pieces = None
        if self.config.method == "dbfgs":
            lam_nbhd, g_nbhd = self._nbhd_vectors(i)
            pair = cv.neighborhood_variations(
                node.curv.D, node.snap_lam, lam_nbhd,
                node.snap_grad, g_nbhd, self.config.gamma)
            cv.dbfgs_update(node.curv, pair)
            node.snap_lam, node.snap_grad = lam_nbhd, g_nbhd
            e = cv.descent_direction(node.curv, g_nbhd)
            e_pieces = cv.split_direction(graph, node.curv.idx, p, e)
            node.pending_e = e_pieces[i]
        for j in graph.neighbors[i]:
            piece = e_pieces[j] if e_pieces is not None \
                else np.zeros(graph.m_i[j] * p)
            self.nodes[j].inflight.append(_Bundle(
                stamp=t, sender=i, lam=node.lam.copy(), grad=node.grad.copy(),
                x=node.x.copy(), e_piece=piece))
            self.sent += 1


def run_async(config: AsyncRunConfig, prob: ProblemInstance, graph: Graph,
              schedule: Schedule, x_star: np.ndarray | None = None
              ) -> list[AsyncRecord]:
    """Run the asynchronous method, recording omniscient metrics per tick.

    The observer recomputes maximizers and gradients from the
    concatenation of every node's own dual block; it never feeds
    information back into the simulation.
    """
    if x_star is None:
        x_star = exact_optimum(prob)
    x_star_sq = float(x_star @ x_star)
    if x_star_sq == 0.0:
        raise ValueError("exact optimum is zero; normalized error undefined")

    world = AsyncWorld(config, prob, graph, schedule)
    trace: list[AsyncRecord] = []
    for t in range(config.horizon + 1):
        world.tick(t)
        lam = world.global_lam()
        x = dc.all_maximizers(prob, graph, lam)
        g = dc.dual_gradient(graph, x)
        h = dc.dual_value(prob, graph, lam)
        if not np.isfinite(h):
            raise DivergenceError(t)
        err = float(np.mean(np.sum((x - x_star) ** 2, axis=1)) / x_star_sq)
        trace.append(AsyncRecord(
            t=t, h=h, grad_norm=float(np.linalg.norm(g)), err=err,
            comm_rounds=t, comm_msgs=world.sent, skips=world.skips,
            delivered_msgs=world.delivered,
            max_staleness=world.max_staleness_seen))
        if config.threshold is not None and err <= config.threshold:
            break
    return trace
