"""Command-line front end: configure, run, compare, and export experiments.

Exit codes: 0 success, 1 configuration error, 2 numerical divergence,
3 I/O error.  A JSON config file can supply any option; explicit flags
override the file.  The env var DUALBFGS_OUTPUT_ROOT sets the base
directory that relative --out paths are resolved against.
"""

from __future__ import annotations

import json
import os
import platform
import re
import sys
from pathlib import Path

import click
import numpy as np
import scipy

from . import __version__
from . import engine_async as ea
from . import engine_sync as es
from . import experiments as ex
from . import report
from .problem import exact_optimum, generate_quadratic, to_json as problem_to_json
from .topology import TopologyError, regular_cycle

METHOD_ALIASES = {"dbfgs": "dbfgs", "dd": "dual_descent", "dual_descent": "dual_descent"}

# Benchmark defaults: per-method stepsizes quoted for each engine mode.
DEFAULT_STEPSIZES = {
    "sync": {"dbfgs": 0.01, "dual_descent": 0.002},
    "async": {"dbfgs": 0.007, "dual_descent": 0.001},
}

EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_IO = 3


class ConfigError(click.ClickException):
    exit_code = EXIT_CONFIG


def _fail_io(exc: OSError) -> None:
    click.echo(f"error: I/O failure: {exc}", err=True)
    sys.exit(EXIT_IO)


def _parse_graph(spec: str, n: int):
    m = re.fullmatch(r"cycle(\d+)", spec)
    if not m:
        raise ConfigError(f"--graph: unsupported graph spec {spec!r} "
                          "(expected e.g. 'cycle4')")
    degree = int(m.group(1))
    try:
        return regular_cycle(n, degree)
    except (TopologyError, ValueError) as exc:
        raise ConfigError(f"--graph/--n: {exc}") from exc


def _resolve_method(name: str) -> str:
    try:
        return METHOD_ALIASES[name]
    except KeyError:
        raise ConfigError(f"--method: unknown method {name!r} "
                          f"(choose from {sorted(METHOD_ALIASES)})") from None


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"--config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--config: invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"--config: top level of {path} must be an object")
    return data


def _merge(ctx: click.Context, file_cfg: dict) -> dict:
    """Resolve each option: explicit flag > config file > click default."""
    resolved = {}
    for key, value in ctx.params.items():
        if key == "config":
            continue
        source = ctx.get_parameter_source(key)
        if (source == click.core.ParameterSource.COMMANDLINE
                or key not in file_cfg):
            resolved[key] = value
        else:
            resolved[key] = file_cfg[key]
    return resolved


def _out_dir(out: str | None, default_name: str) -> Path:
    root = Path(os.environ.get("DUALBFGS_OUTPUT_ROOT", "."))
    path = Path(out) if out is not None else Path(default_name)
    if not path.is_absolute():
        path = root / path
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _fail_io(exc)
    return path


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        _fail_io(exc)


def _manifest(command: str, resolved: dict, seeds, extra: dict | None = None) -> str:
    doc = {
        "command": command,
        "config": {k: v for k, v in sorted(resolved.items()) if k != "out"},
        "seeds": list(seeds),
        "versions": {
            "dualbfgs": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True)


def _build_problem(resolved: dict, seed: int):
    try:
        prob = generate_quadratic(resolved["n"], resolved["p"], seed=seed,
                                  condition=resolved["condition"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return prob


def _run_one(method: str, eps: float, resolved: dict, prob, graph, x_star,
             seed: int):
    """Run one method on one instance; returns (trace, mode)."""
    if resolved["use_async"]:
        schedule = ea.build_schedule(
            graph.n, resolved["iters"], mu_d=resolved["mu_d"],
            sigma_d=resolved["sigma_d"], B_bound=resolved["staleness_bound"],
            seed=seed)
        cfg = ea.AsyncRunConfig(method=method, stepsize=eps,
                                horizon=resolved["iters"],
                                gamma=resolved["gamma"], Gamma=resolved["Gamma"],
                                threshold=resolved["threshold"])
        return ea.run_async(cfg, prob, graph, schedule, x_star=x_star)
    cfg = es.SyncRunConfig(method=method, stepsize=eps,
                           max_iters=resolved["iters"], gamma=resolved["gamma"],
                           Gamma=resolved["Gamma"], seed=seed,
                           threshold=resolved["threshold"])
    return es.run(cfg, prob, graph, x_star=x_star)


def _common_options(fn):
    opts = [
        click.option("--config", type=click.Path(), default=None,
                     help="JSON config file; flags override its values."),
        click.option("--n", type=int, default=50, show_default=True),
        click.option("--p", type=int, default=4, show_default=True),
        click.option("--graph", "graph_spec", default="cycle4", show_default=True,
                     help="Graph spec, e.g. cycle4 for a 4-regular cycle."),
        click.option("--condition", type=click.Choice(["1e2", "1e0"]),
                     default="1e2", show_default=True),
        click.option("--gamma", type=float, default=1e-2, show_default=True),
        click.option("--Gamma", "Gamma", type=float, default=1e-3,
                     show_default=True),
        click.option("--iters", type=int, default=500, show_default=True,
                     help="Max iterations (sync) or tick horizon (async)."),
        click.option("--threshold", type=float, default=None,
                     help="Stop early once normalized error drops below this."),
        click.option("--async/--sync", "use_async", default=False,
                     help="Use the asynchronous engine."),
        click.option("--mu-d", type=float, default=3.0, show_default=True,
                     help="Mean availability gap (async)."),
        click.option("--sigma-d", type=float, default=1.0, show_default=True,
                     help="Availability gap std dev (async)."),
        click.option("--staleness-bound", type=int, default=12,
                     show_default=True, help="Partial-asynchrony bound B."),
        click.option("--out", "-o", default=None,
                     help="Output directory (default: named after command)."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(version=__version__)
def main():
    """Decentralized dual-domain consensus optimization simulator."""


@main.command("run")
@_common_options
@click.option("--method", default=None, help="dbfgs or dd.")
@click.option("--eps", type=float, default=None, help="Stepsize (required).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def cmd_run(ctx, **_kwargs):
    """Run a single method once; write trace CSV, manifest, and figure."""
    resolved = _merge(ctx, _load_config_file(ctx.params["config"]))
    if resolved["method"] is None:
        raise ConfigError("--method is required (dbfgs or dd)")
    if resolved["eps"] is None:
        raise ConfigError("--eps is required")
    method = _resolve_method(resolved["method"])
    resolved["method"] = method
    seed = resolved["seed"]

    graph = _parse_graph(resolved["graph_spec"], resolved["n"])
    prob = _build_problem(resolved, seed)
    x_star = exact_optimum(prob)
    try:
        trace = _run_one(method, resolved["eps"], resolved, prob, graph,
                         x_star, seed)
    except (es.DivergenceError, ea.StalenessViolation) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DIVERGED)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    out = _out_dir(resolved["out"], "run-out")
    columns = ea.ASYNC_TRACE_COLUMNS if resolved["use_async"] else es.TRACE_COLUMNS
    _write_text(out / "trace.csv", es.trace_to_csv(trace, columns=columns))
    _write_text(out / "manifest.json", _manifest("run", resolved, [seed]))
    _write_text(out / "problem.json", problem_to_json(prob, seed))
    try:
        report.convergence_figure({method: trace}, out / "convergence.png",
                                  xlabel="tick t" if resolved["use_async"]
                                  else "iteration t")
    except OSError as exc:
        _fail_io(exc)
    last = trace[-1]
    click.echo(f"{method}: t={last.t} err={last.err:.3e} "
               f"grad_norm={last.grad_norm:.3e} skips={last.skips}")
    click.echo(f"wrote {out}/trace.csv, manifest.json, problem.json, "
               "convergence.png")


def _parse_method_eps(methods_opt, eps_opt, use_async: bool):
    """Turn --methods/--eps lists into [(method, stepsize)] with defaults."""
    names = [m.strip() for m in methods_opt.split(",") if m.strip()]
    if len(names) < 2:
        raise ConfigError("--methods: need at least two comma-separated methods")
    methods = [_resolve_method(m) for m in names]
    mode = "async" if use_async else "sync"
    if eps_opt:
        parts = [float(x) for x in eps_opt.split(",")]
        if len(parts) != len(methods):
            raise ConfigError("--eps: need one stepsize per method")
        return list(zip(methods, parts))
    return [(m, DEFAULT_STEPSIZES[mode][m]) for m in methods]


@main.command("compare")
@_common_options
@click.option("--methods", "methods_opt", default="dbfgs,dd", show_default=True,
              help="Comma-separated method list.")
@click.option("--eps", "eps_opt", default=None,
              help="Comma-separated stepsizes, one per method "
                   "(default: benchmark values per mode).")
@click.option("--delta", type=float, default=1e-2, show_default=True,
              help="Exchange-count threshold on normalized error.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def cmd_compare(ctx, **_kwargs):
    """Run several methods on one instance; write a side-by-side table."""
    resolved = _merge(ctx, _load_config_file(ctx.params["config"]))
    pairs = _parse_method_eps(resolved["methods_opt"], resolved["eps_opt"],
                              resolved["use_async"])
    seed = resolved["seed"]
    graph = _parse_graph(resolved["graph_spec"], resolved["n"])
    prob = _build_problem(resolved, seed)
    x_star = exact_optimum(prob)

    rows = []
    traces = {}
    for k, (method, eps) in enumerate(pairs):
        label = f"{method}#{k}" if method in traces else method
        try:
            trace = _run_one(method, eps, resolved, prob, graph, x_star, seed)
        except (es.DivergenceError, ea.StalenessViolation) as exc:
            click.echo(f"error: {method}: {exc}", err=True)
            sys.exit(EXIT_DIVERGED)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        traces[label] = trace
        errs = [rec.err for rec in trace]
        tconv = ex.convergence_time(errs, resolved["delta"])
        if resolved["use_async"]:
            exchanges = trace[tconv].delivered_msgs if tconv is not None else None
        else:
            exchanges = trace[tconv].comm_rounds if tconv is not None else None
        rows.append((label, eps, trace[-1].err,
                     exchanges if exchanges is not None else "n/a",
                     trace[-1].skips))

    out = _out_dir(resolved["out"], "compare-out")
    lines = ["method,eps,final_err,exchanges_to_delta,skips"]
    for label, eps, err, exch, skips in rows:
        lines.append(f"{label},{eps:.17g},{err:.17g},{exch},{skips}")
    _write_text(out / "compare.csv", "\n".join(lines) + "\n")
    _write_text(out / "manifest.json", _manifest("compare", resolved, [seed]))
    try:
        report.convergence_figure(traces, out / "convergence.png",
                                  xlabel="tick t" if resolved["use_async"]
                                  else "iteration t")
    except OSError as exc:
        _fail_io(exc)

    widths = (14, 10, 12, 20, 6)
    header = ("method", "eps", "final_err", "exchanges_to_delta", "skips")
    click.echo("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for label, eps, err, exch, skips in rows:
        cells = (label, f"{eps:g}", f"{err:.3e}", str(exch), str(skips))
        click.echo("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    click.echo(f"wrote {out}/compare.csv, manifest.json, convergence.png")


@main.command("trials")
@_common_options
@click.option("--methods", "methods_opt", default="dbfgs,dd", show_default=True)
@click.option("--eps", "eps_opt", default=None,
              help="Comma-separated stepsizes, one per method.")
@click.option("--delta", type=float, default=1e-2, show_default=True)
@click.option("--seeds", "seeds_opt", default="0:10", show_default=True,
              help="Seed list: 'a:b' range or comma-separated integers.")
@click.option("--bin-width", type=int, default=None,
              help="Histogram bin width (default: auto).")
@click.pass_context
def cmd_trials(ctx, **_kwargs):
    """Independent trials over seeds; write summary CSV + histogram JSON."""
    resolved = _merge(ctx, _load_config_file(ctx.params["config"]))
    seeds = _parse_seeds(resolved["seeds_opt"])
    mode = "async" if resolved["use_async"] else "sync"
    names = [m.strip() for m in resolved["methods_opt"].split(",") if m.strip()]
    if not names:
        raise ConfigError("--methods: need at least one method")
    methods = [_resolve_method(m) for m in names]
    if resolved["eps_opt"]:
        parts = [float(x) for x in resolved["eps_opt"].split(",")]
        if len(parts) != len(methods):
            raise ConfigError("--eps: need one stepsize per method")
        stepsizes = tuple(zip(methods, parts))
    else:
        stepsizes = tuple((m, DEFAULT_STEPSIZES[mode][m]) for m in methods)

    graph = _parse_graph(resolved["graph_spec"], resolved["n"])
    try:
        base = ex.TrialConfig(
            n=resolved["n"], p=resolved["p"], condition=resolved["condition"],
            gamma=resolved["gamma"], Gamma=resolved["Gamma"],
            stepsizes=stepsizes, delta=resolved["delta"],
            max_iters=resolved["iters"], mode=mode, mu_d=resolved["mu_d"],
            sigma_d=resolved["sigma_d"], B_bound=resolved["staleness_bound"])
        summaries, histograms = ex.run_trials(base, graph, seeds,
                                              bin_width=resolved["bin_width"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    out = _out_dir(resolved["out"], "trials-out")
    _write_text(out / "summary.csv", ex.summaries_to_csv(summaries))
    _write_text(out / "histograms.json",
                json.dumps(histograms, indent=2, sort_keys=True))
    _write_text(out / "manifest.json", _manifest("trials", resolved, seeds))
    try:
        report.histogram_figure(histograms, out / "histograms.png")
    except OSError as exc:
        _fail_io(exc)
    for method in dict(stepsizes):
        med = ex.median_exchanges(summaries, method)
        n_conv = sum(1 for s in summaries if s.method == method and s.converged)
        click.echo(f"{method}: {n_conv}/{len(seeds)} converged, "
                   f"median exchanges {med:g}")
    click.echo(f"wrote {out}/summary.csv, histograms.json, manifest.json, "
               "histograms.png")


def _parse_seeds(spec) -> list[int]:
    if isinstance(spec, list):
        return [int(s) for s in spec]
    spec = str(spec)
    m = re.fullmatch(r"(-?\d+):(-?\d+)", spec)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi <= lo:
            raise ConfigError(f"--seeds: empty range {spec!r}")
        return list(range(lo, hi))
    try:
        return [int(s) for s in spec.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds: cannot parse {spec!r}") from None


if __name__ == "__main__":
    main()
