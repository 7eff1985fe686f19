"""``netwatch`` command-line interface.

Every command reads a TOML run config, applies command-line overrides,
echoes the fully resolved config (stdout and ``resolved_config.toml``) and
writes its artifacts into the output directory.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calib import CalibResult, CalibrationSetup, acf, calibrate_ucl, ced_study, default_jobs, phase1_summary, write_ucl_table
from .charts import ChartConfig, ChartKind, monitor
from .config import RunConfig
from .errors import ConfigError, NetwatchError, NumericalError, UndefinedAcf
from .graph import GraphSeries, NodeRegistry, read_edge_list, write_edge_list
from .simgen import generate_series, stationary_distribution
from .stats import descriptive
from .tergm import Estimator, estimate_series, gof_summary, mple_fit

log = logging.getLogger("netwatch")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("generate", "fit", "calibrate", "monitor", "evaluate-ced", "gof")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, default=_json_default) + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _plots(cfg: RunConfig):
    if not cfg.run.plot:
        return None
    from . import plotting

    return plotting


def _load_series(cfg: RunConfig, out: Path) -> tuple[GraphSeries, dict]:
    """Series from ``io.input`` or, without input, a freshly generated one."""
    if cfg.io.input:
        registry = None
        if cfg.io.node_map:
            registry = NodeRegistry.load(cfg.io.node_map) if Path(cfg.io.node_map).exists() else NodeRegistry()
        series = read_edge_list(cfg.io.input, registry)
        NodeRegistry(series.node_ids).save(out / "nodes.json")
        meta = {"source": str(cfg.io.input), "dropped_self_loops": series.dropped_self_loops}
    else:
        if cfg.generator.length < 1:
            raise ConfigError("generator.length must be >= 1")
        gen = cfg.gen_config()
        anomaly = cfg.anomaly_spec()
        series = generate_series(gen, cfg.generator.length, anomaly, np.random.default_rng(gen.seed))
        meta = {"source": "generated", "anomaly": anomaly.name if anomaly else None}
    meta.update({"length": len(series), "n_nodes": series.n_nodes, "start": series.start})
    return series, meta


def _estimates(cfg: RunConfig, series: GraphSeries, stride: int | None = None):
    pipe = cfg.pipeline_obj()
    return estimate_series(series, pipe.terms, pipe.z, pipe.v, pipe.kind, stride or cfg.pipeline.stride)


def _write_estimates(path: Path, estimates, names, series: GraphSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "label", *names])
        for e in estimates:
            w.writerow([e.t, series.label(e.t), *[repr(float(x)) for x in e.values]])


def _setup(cfg: RunConfig) -> CalibrationSetup:
    c = cfg.calibration
    if c.replications < 2:
        raise ConfigError("calibration.replications must be >= 2")
    return CalibrationSetup(cfg.gen_config(), cfg.pipeline_obj(), cfg.resolve_seed(), c.phase1_series, c.phase1_length, cfg.run.jobs)


# commands


def cmd_generate(cfg: RunConfig, out: Path) -> int:
    if cfg.generator.length < 1:
        raise ConfigError("generator.length must be >= 1")
    series, meta = _load_series(RunConfig.from_dict({**cfg.to_dict(), "io": {}}), out)
    write_edge_list(series, out / "series.csv")
    edges = [g.n_edges for g in series]
    gen = cfg.gen_config()
    n = gen.n_nodes
    try:
        pi = stationary_distribution(gen.m)
        expected = pi[1] * n * (n - 1)
    except NumericalError:
        pi, expected = None, None
    mean_edges = float(np.mean(edges))
    summary = {
        **meta,
        "seed": gen.seed,
        "edge_counts": edges,
        "mean_edges": mean_edges,
        "stationary": list(pi) if pi else None,
        "expected_edges": expected,
        "relative_error": abs(mean_edges - expected) / expected if expected else None,
    }
    _write_json(out / "summary.json", summary)
    print(f"wrote {len(series)} graphs to {out / 'series.csv'}; mean edges {mean_edges:.1f}" + (f" (stationary {expected:.1f})" if expected else ""))
    plots = _plots(cfg)
    if plots:
        plots.series_lines(list(series.times), np.array(edges)[:, None], ["edges"], out / "edges.png", "edge count", hline=expected)
    return EXIT_OK


def cmd_fit(cfg: RunConfig, out: Path) -> int:
    series, meta = _load_series(cfg, out)
    terms = cfg.term_set()
    estimates = _estimates(cfg, series)
    _write_estimates(out / "estimates.csv", estimates, terms.names, series)
    with open(out / "descriptive.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "label", "density", "reciprocity", "transitivity", "flags"])
        for t, g in zip(series.times, series):
            d = descriptive(g)
            w.writerow([t, series.label(t), repr(d.density), repr(d.reciprocity), repr(d.transitivity), ";".join(d.flags)])
    values = np.array([e.values for e in estimates])
    max_lag = min(20, len(estimates) - 1)
    acfs = {}
    for k, name in enumerate(terms.names):
        try:
            acfs[name] = acf(values[:, k], max_lag).tolist()
        except (UndefinedAcf, ValueError) as exc:
            acfs[name] = None
            log.warning("no ACF for %s: %s", name, exc)
    result = {**meta, "estimator": cfg.pipeline.estimator, "z": cfg.pipeline.z, "v": cfg.pipeline.v, "stride": cfg.pipeline.stride,
              "n_estimates": len(estimates), "mean": values.mean(axis=0).tolist(), "acf": acfs}
    if Estimator(cfg.pipeline.estimator) is Estimator.THETA:
        pooled = mple_fit(series, terms, cfg.pipeline.v)
        result["pooled_fit"] = {"theta": pooled.theta.tolist(), "iterations": pooled.iterations, "pooled_dyads": pooled.pooled_dyads, "loglik": pooled.loglik}
    _write_json(out / "fit.json", result)
    print(f"{len(estimates)} {cfg.pipeline.estimator} estimates written to {out / 'estimates.csv'}")
    plots = _plots(cfg)
    if plots:
        plots.series_lines([e.t for e in estimates], values, terms.names, out / "estimates.png", f"{cfg.pipeline.estimator} estimates (z={cfg.pipeline.z})")
        shown = {k: np.array(v) for k, v in acfs.items() if v is not None}
        if shown:
            plots.acf_panels(shown, out / "acf.png", len(estimates), f"stride {cfg.pipeline.stride}")
    return EXIT_OK


def _grid(cfg: RunConfig) -> list[float]:
    return cfg.chart_grid() if cfg.chart.grid else [cfg.chart.param]


def cmd_calibrate(cfg: RunConfig, out: Path) -> int:
    setup = _setup(cfg)
    c = cfg.calibration
    results = []
    for arl0 in c.arl0:
        for param in _grid(cfg):
            chart = cfg.chart_config(param)
            res = calibrate_ucl(chart, setup, float(arl0), c.replications, c.tolerance, c.horizon)
            results.append(res)
            print(f"{chart.label} ARL0={float(arl0):g}: ucl={res.ucl:.4f} arl={res.arl_hat:.2f} (se {res.arl_se:.2f})")
    _write_json(out / "calibration.json", {
        "phase1": setup.phase1.to_dict(),
        "pipeline": setup.pipeline.to_dict(),
        "results": [r.to_dict() for r in results],
    })
    write_ucl_table(results, out / "ucl_table.csv")
    return EXIT_OK


def _ucl_from_file(path, kind: str, param: float, arl0: float | None) -> CalibResult:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    matches = [CalibResult.from_dict(r) for r in data["results"] if r["chart"]["kind"] == kind and math.isclose(r["chart"]["param"], param)]
    if arl0 is not None:
        matches = [r for r in matches if math.isclose(r.arl0_target, arl0)] or matches
    if not matches:
        raise ConfigError(f"{path} has no calibrated UCL for {kind} with parameter {param:g}")
    return matches[0]


def _chart_ucl(cfg: RunConfig, chart: ChartConfig) -> float:
    if cfg.chart.ucl is not None:
        return cfg.chart.ucl
    if cfg.chart.ucl_file:
        arl0 = float(cfg.calibration.arl0[0]) if cfg.calibration.arl0 else None
        return _ucl_from_file(cfg.chart.ucl_file, chart.kind.value, chart.param, arl0).ucl
    raise ConfigError("set chart.ucl or chart.ucl_file")


def cmd_monitor(cfg: RunConfig, out: Path) -> int:
    series, meta = _load_series(cfg, out)
    terms = cfg.term_set()
    chart = cfg.chart_config()
    ucl = _chart_ucl(cfg, chart)
    estimates = _estimates(cfg, series, stride=1)
    first, last = estimates[0].t, estimates[-1].t
    m = cfg.monitor
    p1_start = first if m.phase1_start is None else m.phase1_start
    p1_end = (first + last) // 2 if m.phase1_end is None else m.phase1_end
    mon_start = p1_end + 1 if m.monitor_start is None else m.monitor_start
    if not first <= p1_start <= p1_end <= last:
        raise ConfigError(f"Phase-I span [{p1_start}, {p1_end}] must lie within the estimate times [{first}, {last}]")
    if mon_start <= p1_end and not m.allow_overlap:
        raise ConfigError(f"monitoring start {mon_start} overlaps Phase I ending at {p1_end}; set monitor.allow_overlap = true to override")
    summary = phase1_summary([e for e in estimates if p1_start <= e.t <= p1_end])
    target = summary.target()
    trace = monitor(chart, target, estimates, ucl, terms.names)
    if series.labels is not None:
        trace.labels = {t: series.label(t) for t in series.times}
    trace.write_csv(out / "trace.csv")
    _write_estimates(out / "estimates.csv", estimates, terms.names, series)
    phase2 = [r for r in trace.records if r.t >= mon_start]
    phase1 = [r for r in trace.records if p1_start <= r.t <= p1_end]
    runs, cur = [], []
    for r in phase2:
        if r.signal:
            cur.append(r.t)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    longest = max(runs, key=len) if runs else []
    run_meta = {
        **meta,
        "chart": {"kind": chart.kind.value, "param": chart.param, "reset_on_signal": chart.reset_on_signal},
        "ucl": ucl,
        "terms": list(terms.names),
        "phase1": {"start": p1_start, "end": p1_end, **summary.to_dict()},
        "monitor_start": mon_start,
        "n_estimates": len(estimates),
        "phase1_signals": sum(r.signal for r in phase1),
        "phase2_signals": sum(r.signal for r in phase2),
        "phase2_steps": len(phase2),
        "first_phase2_signal": next((r.t for r in phase2 if r.signal), None),
        "longest_signal_run": {"start": longest[0], "length": len(longest)} if longest else None,
        "signal_times": trace.signal_times,
    }
    _write_json(out / "run.json", run_meta)
    print(f"{chart.label} ucl={ucl:.4f}: {run_meta['phase1_signals']} Phase-I and {run_meta['phase2_signals']} Phase-II signals over {len(phase2)} monitored steps")
    plots = _plots(cfg)
    if plots:
        plots.chart_trace(trace, out / "trace.png", f"{chart.label}, ucl {ucl:.2f}", phase2_start=mon_start)
    return EXIT_OK


def cmd_evaluate_ced(cfg: RunConfig, out: Path) -> int:
    setup = _setup(cfg)
    kind = ChartKind(cfg.chart.type.lower())
    arl0 = float(cfg.calibration.arl0[0])
    charts: dict[ChartConfig, float] = {}
    calibrated = []
    for param in _grid(cfg):
        chart = ChartConfig(kind, param)
        if cfg.chart.ucl_file:
            res = _ucl_from_file(cfg.chart.ucl_file, kind.value, param, arl0)
            setup.use_target(_target_from(res))
        elif cfg.chart.ucl is not None and len(_grid(cfg)) == 1:
            charts[chart] = cfg.chart.ucl
            continue
        else:
            c = cfg.calibration
            res = calibrate_ucl(chart, setup, arl0, c.replications, c.tolerance, c.horizon)
            calibrated.append(res)
        charts[chart] = res.ucl
    cases = [cfg.anomaly_spec(name) for name in cfg.ced.cases]
    tau = cfg.anomaly.tau
    table = ced_study(charts, setup, cases, cfg.ced.replications, cfg.ced.horizon, tau)
    rows, curves = [], {}
    for case, by_chart in table.items():
        curves[case] = {}
        for chart, res in by_chart.items():
            rows.append([case, chart.kind.value, f"{chart.param:g}", charts[chart], res.ced, res.se, res.valid_runs, res.discarded_false_alarm_runs, res.censored])
            curves[case][chart.param] = res.ced
            print(f"{case:>5} {chart.label}: CED {res.ced:.2f} (se {res.se:.2f}, {res.valid_runs} valid, {res.discarded_false_alarm_runs} discarded)")
    with open(out / "ced.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "chart", "param", "ucl", "ced", "se", "valid_runs", "discarded_false_alarm_runs", "censored"])
        w.writerows(rows)
    _write_json(out / "ced.json", {
        "arl0": arl0,
        "tau": tau,
        "pipeline": setup.pipeline.to_dict(),
        "ucls": {f"{c.param:g}": u for c, u in charts.items()},
        "calibration": [r.to_dict() for r in calibrated],
        "cases": {case: {f"{c.param:g}": r.to_dict() for c, r in by_chart.items()} for case, by_chart in table.items()},
    })
    plots = _plots(cfg)
    if plots:
        plots.ced_curves(curves, out / "ced.png", "k" if kind is ChartKind.MCUSUM else "lambda", arl0)
    return EXIT_OK


def _target_from(res: CalibResult):
    from .charts import ChartTarget

    return ChartTarget.from_dict(res.target)


def cmd_gof(cfg: RunConfig, out: Path) -> int:
    series, meta = _load_series(cfg, out)
    terms = cfg.term_set()
    g = cfg.gof
    start = series.start if g.window_start is None else g.window_start
    end = series.end if g.window_end is None else g.window_end
    try:
        window = series.window(start, end)
    except IndexError as exc:
        raise ConfigError(f"[gof] {exc}") from None
    fit = mple_fit(window, terms, cfg.pipeline.v)
    rng = np.random.default_rng(cfg.resolve_seed())
    report = gof_summary(fit, terms, window, g.n_sims, rng, cfg.pipeline.v, g.sweeps)
    (out / "gof.txt").write_text(report.to_text(), encoding="utf-8")
    _write_json(out / "gof.json", {**meta, "window": [start, end], "theta": fit.theta.tolist(), "terms": list(terms.names), **report.to_dict()})
    print(f"GoF over {report.transitions} transitions x {g.n_sims} draws: {report.coverage():.0%} of bins have the observed median inside [q1, q3]")
    plots = _plots(cfg)
    if plots:
        plots.gof_boxes(report, out / "gof.png")
    return EXIT_OK


HANDLERS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "calibrate": cmd_calibrate,
    "monitor": cmd_monitor,
    "evaluate-ced": cmd_evaluate_ced,
    "gof": cmd_gof,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netwatch", description="Monitor directed network time series with TERGM-based control charts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="TOML run config")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config value (repeatable)")
    parser.add_argument("--seed", type=int, help="global seed (falls back to run.seed, then $NETWATCH_SEED, then 0)")
    parser.add_argument("--jobs", type=int, help="worker processes for replications (default: all CPUs)")
    parser.add_argument("--input", help="edge-list file t,src,dst")
    parser.add_argument("--output-dir", help="directory for all outputs")
    parser.add_argument("--plot", dest="plot", action="store_true", default=None, help="render PNG figures (default)")
    parser.add_argument("--no-plot", dest="plot", action="store_false")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for text in args.overrides:
        cfg.apply_override(text)
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.jobs is not None:
        cfg.run.jobs = args.jobs
    if args.input is not None:
        cfg.io.input = args.input
    if args.output_dir is not None:
        cfg.run.output_dir = args.output_dir
    if args.plot is not None:
        cfg.run.plot = args.plot
    cfg.resolve_seed()
    if cfg.run.jobs is None:
        cfg.run.jobs = default_jobs()
    if cfg.run.jobs < 1:
        raise ConfigError("run.jobs must be >= 1")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = cfg.output_dir()
        out.mkdir(parents=True, exist_ok=True)
        echo = cfg.to_toml()
        (out / "resolved_config.toml").write_text(echo, encoding="utf-8")
        print(f"# resolved config ({args.command})\n{echo}", end="")
        return HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NetwatchError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
