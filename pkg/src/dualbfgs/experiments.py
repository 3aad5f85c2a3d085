"""Metrics, convergence detection and multi-trial drivers.

Each trial redraws the full problem instance from its seed, runs every
requested method on it, and reduces the results into per-trial summary
rows plus exchange-count histograms.  Trials that never reach the
convergence threshold are recorded as non-converged, never dropped.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from . import engine_async as ea
from . import engine_sync as es
from . import dual_core as dc
from .problem import ProblemInstance, aggregate_value, exact_optimum, generate_quadratic
from .topology import Graph


SUMMARY_COLUMNS = ("seed", "method", "converged", "iters", "exchanges",
                   "final_err", "skips")


def normalized_error(x: np.ndarray, x_star: np.ndarray) -> float:
    """Mean squared per-node distance to the optimum, relative to its norm."""
    x_star_sq = float(x_star @ x_star)
    if x_star_sq == 0.0:
        raise ValueError("optimum is zero; normalized error undefined "
                         "(regenerate the instance)")
    return float(np.mean(np.sum((np.atleast_2d(x) - x_star) ** 2, axis=1)) / x_star_sq)


def convergence_time(errors, threshold: float) -> int | None:
    """Index of the first error at or below threshold, None if never."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    for t, e in enumerate(errors):
        if e <= threshold:
            return t
    return None


@dataclass(frozen=True)
class TrialSummary:
    seed: int
    method: str
    converged: bool
    iters: int
    exchanges: int
    final_err: float
    skips: int


@dataclass(frozen=True)
class TrialConfig:
    """Base configuration shared by every trial of a batch."""

    n: int = 50
    p: int = 4
    condition: str = "1e2"
    gamma: float = 1e-2
    Gamma: float = 1e-3
    stepsizes: tuple = (("dbfgs", 0.01), ("dual_descent", 0.002))
    delta: float = 1e-2          # convergence threshold on the normalized error
    max_iters: int = 20000
    mode: str = "sync"           # "sync" or "async"
    mu_d: float = 3.0
    sigma_d: float = 1.0
    B_bound: int = 12


def run_single(base: TrialConfig, graph: Graph, seed: int):
    """One trial: fresh instance, one run per method.  Returns summaries."""
    prob = generate_quadratic(base.n, base.p, seed=seed, condition=base.condition)
    x_star = exact_optimum(prob)
    rows = []
    for method, eps in base.stepsizes:
        if base.mode == "sync":
            cfg = es.SyncRunConfig(method=method, stepsize=eps,
                                   max_iters=base.max_iters, gamma=base.gamma,
                                   Gamma=base.Gamma, threshold=base.delta)
            try:
                trace = es.run(cfg, prob, graph, x_star=x_star)
            except es.DivergenceError:
                rows.append(TrialSummary(seed, method, False, base.max_iters,
                                         0, float("inf"), 0))
                continue
            last = trace[-1]
            exchanges = last.comm_rounds
        else:
            schedule = ea.build_schedule(base.n, base.max_iters, mu_d=base.mu_d,
                                         sigma_d=base.sigma_d,
                                         B_bound=base.B_bound, seed=seed)
            cfg = ea.AsyncRunConfig(method=method, stepsize=eps,
                                    horizon=base.max_iters, gamma=base.gamma,
                                    Gamma=base.Gamma, threshold=base.delta)
            try:
                trace = ea.run_async(cfg, prob, graph, schedule, x_star=x_star)
            except es.DivergenceError:
                rows.append(TrialSummary(seed, method, False, base.max_iters,
                                         0, float("inf"), 0))
                continue
            last = trace[-1]
            exchanges = last.delivered_msgs
        converged = last.err <= base.delta
        rows.append(TrialSummary(seed=seed, method=method, converged=converged,
                                 iters=last.t, exchanges=exchanges,
                                 final_err=last.err, skips=last.skips))
    return rows


def run_trials(base: TrialConfig, graph: Graph, seeds,
               bin_width: int | None = None):
    """Independent trials over a seed list.

    Returns (summaries, histograms) where histograms maps method name to
    the exchange-count histogram of its converged trials.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    summaries = []
    for seed in seeds:
        summaries.extend(run_single(base, graph, seed))
    histograms = {}
    for method, _ in base.stepsizes:
        vals = [s.exchanges for s in summaries
                if s.method == method and s.converged]
        histograms[method] = make_histogram(vals, bin_width)
    return summaries, histograms


def make_histogram(values, bin_width: int | None = None) -> dict:
    """Fixed-width histogram as a JSON-friendly dict."""
    values = sorted(values)
    if not values:
        return {"bin_width": bin_width or 0, "bins": []}
    if bin_width is None:
        span = max(values[-1] - values[0], 1)
        bin_width = max(1, int(np.ceil(span / 20)))
    lo0 = (values[0] // bin_width) * bin_width
    bins = []
    lo = lo0
    while lo <= values[-1]:
        hi = lo + bin_width
        count = sum(1 for v in values if lo <= v < hi)
        if count:
            bins.append({"lo": int(lo), "hi": int(hi), "count": count})
        lo = hi
    return {"bin_width": int(bin_width), "bins": bins}


def summaries_to_csv(summaries) -> str:
    buf = io.StringIO()
    buf.write(",".join(SUMMARY_COLUMNS) + "\n")
    for s in summaries:
        buf.write(f"{s.seed},{s.method},{int(s.converged)},{s.iters},"
                  f"{s.exchanges},{s.final_err:.17g},{s.skips}\n")
    return buf.getvalue()


def histogram_to_json(hist: dict) -> str:
    return json.dumps(hist, indent=2)


def median_exchanges(summaries, method: str) -> float:
    vals = [s.exchanges for s in summaries if s.method == method and s.converged]
    if not vals:
        return float("inf")
    return float(np.median(vals))


def duality_gap_check(prob: ProblemInstance, graph: Graph, lam_samples,
                      slack: float = 1e-8) -> dict:
    """Check (mu/2) ||x(lam) - x*||^2 <= h(lam) - h(lam*) on each sample.

    h(lam*) is taken as the optimal aggregate value via the zero duality
    gap of the strongly concave problem.
    """
    x_star = exact_optimum(prob)
    h_star = aggregate_value(prob, x_star)
    x_star_stack = np.tile(x_star, (graph.n, 1))
    worst = -np.inf
    violations = 0
    for lam in lam_samples:
        x = dc.all_maximizers(prob, graph, lam)
        lhs = 0.5 * prob.mu * float(np.sum((x - x_star_stack) ** 2))
        rhs = dc.dual_value(prob, graph, lam) - h_star
        gap = lhs - rhs
        worst = max(worst, gap)
        if gap > slack:
            violations += 1
    return {"samples": len(list(lam_samples)) or None,
            "max_violation": worst, "violations": violations}
