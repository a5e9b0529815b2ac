"""Command-line front end: ``naqbc run | sweep | crossval | plot | validate-config``.

Output layout (flat, one directory per invocation)::

    config.ini               canonical configuration used
    steplog_<run_id>.csv     one per trial
    burdens.csv              annotation burden per (problem, method, gamma, seed)
    summary_<problem>.csv    sweep only: eta statistics per (method, gamma)
    eta_<problem>.csv        sweep only: raw eta values
    eta_vs_gamma_<problem>.svg
    crossval.csv / crossval.svg
    manifest.json            config, seeds, timestamps, trial status, checksums
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional

from .config import OUTPUT_ROOT_ENV, RunConfig, parse_seeds
from .exceptions import ConfigurationError, UnsupportedOracleError
from .harness import run_trial
from .manifest import atomic_write_text, read_manifest, utc_now, write_manifest
from .metrics import EfficiencyTable, annotation_burden, cross_validate, gamma_sweep_summary
from .oracles import make_test_set
from .plotting import PLOT_KINDS, emit_plot

EXIT_OK, EXIT_FAILED_TRIALS, EXIT_USAGE = 0, 1, 2


def _trial_job(job):
    ini, method, gamma, seed, out_dir = job
    cfg = RunConfig.from_ini(ini)
    problem = cfg.build_problem()
    settings = cfg.trial_settings()
    test_set = make_test_set(problem, settings.test_seed)
    run_id_gamma = "-" if gamma is None else str(gamma)
    log_name = f"steplog_{problem.name}_{method}_g{run_id_gamma}_s{seed}.csv"
    run = run_trial(problem, method, gamma, seed, cfg.budget_steps, settings, test_set,
                    log_path=os.path.join(out_dir, log_name))
    return {
        "run_id": run.run_id, "problem": problem.name, "method": method, "gamma": gamma,
        "seed": seed, "status": run.status, "burden": annotation_burden(run),
        "steps": len(run.step_log), "failed_step": run.failed_step, "error": run.error,
        "seconds": round(sum(r.wall_time for r in run.step_log), 3), "log": log_name,
    }


def _execute(cfg: RunConfig, jobs, out_dir) -> List[dict]:
    ini = cfg.to_ini()
    payload = [(ini, m, g, s, out_dir) for m, g, s in jobs]
    if cfg.workers > 1 and len(payload) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_trial_job, payload))
    else:
        results = [_trial_job(p) for p in payload]
    for r in results:
        burden = "not reached" if r["burden"] is None else r["burden"]
        print(f"{r['run_id']}: {r['status']} burden={burden}", file=sys.stderr)
    return results


def _table_of(results) -> EfficiencyTable:
    table = EfficiencyTable()
    for r in results:
        table.add(r["problem"], r["method"], r["gamma"], r["seed"], r["burden"])
    return table


def _finish(cfg, out_dir, results, extra_files, started, command) -> int:
    table = _table_of(results)
    atomic_write_text(os.path.join(out_dir, "burdens.csv"), table.to_csv())
    files = ["config.ini", "burdens.csv"] + [r["log"] for r in results] + list(extra_files)
    write_manifest(out_dir, cfg.to_ini(), cfg.seeds, results, files, started, command=command)
    failed = [r["run_id"] for r in results if r["status"] == "failed"]
    if failed:
        print("failed trials: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAILED_TRIALS
    return EXIT_OK


def _load_config(args) -> RunConfig:
    if getattr(args, "manifest", None):
        cfg = RunConfig.from_ini(read_manifest(args.manifest)["config"])
    elif getattr(args, "config", None):
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig()
    updates = {}
    for key in ("problem", "method", "gamma", "budget_steps", "workers", "output_dir"):
        v = getattr(args, key, None)
        if v is not None:
            updates[key] = v
    if getattr(args, "seeds", None):
        updates["seeds"] = parse_seeds(args.seeds)
    if getattr(args, "gammas", None):
        updates["gammas"] = tuple(int(g) for g in args.gammas.split(","))
    if getattr(args, "methods", None):
        updates["sweep_methods"] = tuple(args.methods.split(","))
    cfg = cfg.with_updates(**updates)
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if overrides:
        merged = RunConfig.from_ini(cfg.to_ini())
        cfg = RunConfig.from_mapping({**_as_mapping(merged), **overrides})
    return cfg


def _as_mapping(cfg: RunConfig) -> dict:
    import configparser

    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(cfg.to_ini())
    return {k: v for s in cp.sections() for k, v in cp.items(s)}


def _prepare_out(cfg: RunConfig) -> str:
    out_dir = cfg.resolved_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "config.ini"), cfg.to_ini())
    return out_dir


def cmd_run(args) -> int:
    cfg = _load_config(args)
    cfg.validate("run")
    started = utc_now()
    out_dir = _prepare_out(cfg)
    results = _execute(cfg, [(cfg.method, cfg.gamma, s) for s in cfg.seeds], out_dir)
    return _finish(cfg, out_dir, results, [], started, "run")


def sweep_jobs(cfg: RunConfig) -> list:
    """Random baseline per seed, then every (method, gamma, seed) cell."""
    jobs = [("random", None, s) for s in cfg.seeds]
    for m in cfg.sweep_methods:
        gammas = [None] if m == "na_qbc" else list(cfg.gammas)
        jobs += [(m, g, s) for g in gammas for s in cfg.seeds]
    return jobs


def _eta_rows(table: EfficiencyTable, problem: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "gamma", "eta"])
    for m in table.methods(problem):
        if m == "random":
            continue
        gammas = table.gammas(problem, m) or [None]
        for g in gammas:
            for v in table.eta(problem, m, g).values:
                w.writerow([m, "/" if g is None else g, repr(v)])
    return buf.getvalue()


def _eta_series(summary) -> dict:
    series = {}
    for (m, g), s in summary.cells.items():
        if s.defined:
            series.setdefault(m, {})[g] = s.mean
    return series


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    problem = cfg.validate("sweep")
    started = utc_now()
    out_dir = _prepare_out(cfg)
    results = _execute(cfg, sweep_jobs(cfg), out_dir)
    table = _table_of(results)
    summary = gamma_sweep_summary(table, problem.name, cfg.gamma_statistic)
    extra = [f"summary_{problem.name}.csv", f"eta_{problem.name}.csv"]
    atomic_write_text(os.path.join(out_dir, extra[0]), summary.to_csv())
    atomic_write_text(os.path.join(out_dir, extra[1]), _eta_rows(table, problem.name))
    series = _eta_series(summary)
    if series:
        svg = f"eta_vs_gamma_{problem.name}.svg"
        emit_plot("eta_vs_gamma", series, os.path.join(out_dir, svg), title=problem.name)
        extra.append(svg)
    for cell in summary.empty_cells:
        print(f"no defined eta for method={cell[0]} gamma={cell[1]}", file=sys.stderr)
    return _finish(cfg, out_dir, results, extra, started, "sweep")


def _read_tables(paths) -> EfficiencyTable:
    table = EfficiencyTable()
    for p in paths:
        path = os.path.join(p, "burdens.csv") if os.path.isdir(p) else p
        with open(path) as fh:
            table.merge(EfficiencyTable.from_csv(fh.read()))
    return table


def crossval_box_values(result) -> dict:
    values = {}
    for m, cells in result.matrix.items():
        if cells:
            values[m] = list(cells.values())
    for m, per_target in result.eta_cv.items():
        if m not in result.matrix or not result.matrix[m]:
            if per_target:
                values[m] = list(per_target.values())
    return values


def cmd_crossval(args) -> int:
    table = _read_tables(args.inputs)
    problems = table.problems()
    if len(problems) < 2:
        print("crossval needs sweeps for at least two problems", file=sys.stderr)
        return EXIT_USAGE
    result = cross_validate(table, problems, args.statistic)
    out_dir = args.output_dir or os.environ.get(OUTPUT_ROOT_ENV, "naqbc_output")
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "crossval.csv"), result.to_csv())
    values = crossval_box_values(result)
    if values:
        emit_plot("crossval_box", values, os.path.join(out_dir, "crossval.svg"))
    for m, src, tgt in result.skipped:
        print(f"skipped {m}: {src} -> {tgt} (missing cell)", file=sys.stderr)
    return EXIT_OK


def _read_steplog(path):
    sizes, mses = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            sizes.append(int(row["train_size"]))
            mses.append(float(row["test_mse"]))
    return sizes, mses


def cmd_plot(args) -> int:
    if args.kind == "mse_vs_trainsize":
        series = {os.path.splitext(os.path.basename(p))[0]: _read_steplog(p) for p in args.inputs}
        emit_plot(args.kind, series, args.output, smooth=args.smooth, e_star=args.e_star)
    else:
        table = _read_tables(args.inputs)
        if args.kind == "eta_vs_gamma":
            problem = args.problem or (table.problems() or [None])[0]
            if problem is None:
                print("no burdens found", file=sys.stderr)
                return EXIT_USAGE
            emit_plot(args.kind, _eta_series(gamma_sweep_summary(table, problem)), args.output,
                      title=problem)
        else:
            problems = table.problems()
            if len(problems) < 2:
                print("crossval_box needs at least two problems", file=sys.stderr)
                return EXIT_USAGE
            emit_plot(args.kind, crossval_box_values(cross_validate(table, problems)), args.output)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = RunConfig.load(args.config)
    cfg.validate(args.mode)
    print("configuration OK")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="naqbc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--manifest", help="rerun the configuration stored in a manifest")
        p.add_argument("--problem")
        p.add_argument("--seeds", help="e.g. 0..4 or 1,3,5")
        p.add_argument("--budget-steps", dest="budget_steps", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--output-dir", dest="output_dir",
                       help=f"defaults to ${OUTPUT_ROOT_ENV} or ./naqbc_output")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any configuration key; repeatable")

    p = sub.add_parser("run", help="run trials of one method")
    common(p)
    p.add_argument("--method")
    p.add_argument("--gamma", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="random baseline plus a method x gamma x seed grid")
    common(p)
    p.add_argument("--methods", help="comma-separated; default: all pool methods and na_qbc")
    p.add_argument("--gammas", help="comma-separated pool ratios")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("crossval", help="cross-problem transfer of the best pool ratio")
    p.add_argument("inputs", nargs="+", help="sweep directories or burdens.csv files")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--statistic", choices=("mean", "median"), default="mean")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("plot", help="emit an SVG figure")
    p.add_argument("--kind", choices=PLOT_KINDS, required=True)
    p.add_argument("inputs", nargs="+", help="step logs or burdens.csv files")
    p.add_argument("--output", required=True)
    p.add_argument("--smooth", action="store_true", help="EMA smoothing (factor 0.3)")
    p.add_argument("--e-star", dest="e_star", type=float)
    p.add_argument("--problem")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("validate-config", help="check a configuration file and exit")
    p.add_argument("config")
    p.add_argument("--mode", choices=("run", "sweep"), default="run")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, UnsupportedOracleError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
