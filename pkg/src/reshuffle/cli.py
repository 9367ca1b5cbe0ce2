"""Command line entry point: ``reshuffle run|compare|suite|fit|oracle``."""
from __future__ import annotations

import csv
import json
import logging
import sys

import click
import numpy as np

from . import defaults as D
from .averaging import suffix_start
from .birr import birr_run
from .engine import DivergenceError, RunConfig, StepsizeSchedule, run
from .harness import compare_methods, default_window, validation_suite
from .oracles import oracle_report
from .problems import FIXTURES, load_problem, problem_from_dict
from .rates import fit_rate


def _problem_arg(value):
    if isinstance(value, dict):
        return problem_from_dict(value)
    return load_problem(value)


def _emit(doc, out):
    text = json.dumps(doc, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Incremental-gradient experiments on finite-sum convex problems."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help='JSON with "method","R","s","q","K","seed","log_stride","problem".')
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Write the trajectory CSV here.")
def run_cmd(config_path, csv_path):
    """Run one configuration and print a JSON summary."""
    with open(config_path) as fh:
        doc = json.load(fh)
    if "problem" not in doc:
        raise click.UsageError('config needs a "problem" entry (file path, fixture name or problem object)')
    problem = _problem_arg(doc["problem"])
    cfg = RunConfig.from_dict(doc)
    try:
        if cfg.method == "BIRR":
            res = birr_run(problem, cfg)
            traj = res.trajectory
            extra = {"bhat_norm": {cfg.K: res.bhat_norm}, "output_dist": {cfg.K: res.output_dist}}
            summary = {"output": res.output.tolist(), "output_dist": res.output_dist,
                       "suffix_dist": res.suffix_dist, "bhat_norm": res.bhat_norm, "output_f_gap": res.output_gap}
        else:
            traj = run(problem, cfg, extra_log=[suffix_start(cfg.q, cfg.K)] if cfg.K > 0 else [])
            extra, summary = None, {}
    except DivergenceError as exc:
        raise click.ClickException(str(exc)) from exc
    if csv_path:
        traj.to_csv(csv_path, extra=extra)
    summary = {"method": cfg.method, "K": cfg.K, "x_K": traj.final.tolist(), "dist_K": float(traj.dist[-1]),
               "f_gap_K": float(traj.f_gap[-1]), **summary}
    if cfg.K > 0:
        summary["suffix_average_dist"] = float(np.linalg.norm(traj.suffix_average(cfg.q, cfg.K) - problem.optimum))
    _emit(summary, None)


@main.command()
@click.option("--problem", required=True, help="Problem JSON file or fixture name.")
@click.option("--methods", default="rr,sgd,ig,birr", show_default=True)
@click.option("--seeds", default=len(D.SEEDS), show_default=True, type=click.IntRange(1))
@click.option("--K", "K", default=D.K_FINAL, show_default=True, type=click.IntRange(2))
@click.option("--R", "R", default=D.R, show_default=True, type=float)
@click.option("--s", "s", default=D.S, show_default=True, type=float)
@click.option("--q", "q", default=D.SEPARATION_Q, show_default=True, type=float)
@click.option("--kmin", type=int, help="Fit window start (default min(1000, K/100)).")
@click.option("--out", type=click.Path(dir_okay=False), help="Report JSON path (stdout if omitted).")
@click.option("--csv-dir", type=click.Path(file_okay=False), help="Per-seed trajectories and per-method figure CSVs.")
def compare(problem, methods, seeds, K, R, s, q, kmin, out, csv_dir):
    """Compare methods over seeds 0..N-1 with a common schedule."""
    prob = load_problem(problem)
    base = RunConfig("RR", StepsizeSchedule(R, s), q=q, K=K, log_stride=max(1, K // 100))
    window = (kmin, K) if kmin else default_window(K)
    names = [m.strip() for m in methods.split(",") if m.strip()]
    report = compare_methods(prob, base, names, list(range(seeds)), window=window, csv_dir=csv_dir)
    _emit(report.to_dict(), out)


@main.command()
@click.option("--out", type=click.Path(dir_okay=False), help="Report JSON path (stdout if omitted).")
@click.option("--problems", default=",".join(FIXTURES), show_default=True,
              help="Comma-separated fixture names or problem files; empty for none.")
@click.option("--seeds", default=len(D.SEEDS), show_default=True, type=click.IntRange(1))
@click.option("--K", "K", default=D.K_FINAL, show_default=True, type=click.IntRange(2))
@click.option("--strict", is_flag=True, help="Exit with status 1 if any check fails.")
def suite(out, problems, seeds, K, strict):
    """Evaluate every validation check and write one JSON verdict document."""
    names = [p.strip() for p in problems.split(",") if p.strip()]
    probs = {name: load_problem(name) for name in names}
    report = validation_suite(probs, seeds=list(range(seeds)), K=K)
    _emit(report.to_dict(), out)
    for name, c in report.checks.items():
        click.echo(f"{'PASS' if c.passed else 'FAIL'} {name}", err=True)
    if strict and not report.passed:
        sys.exit(1)


@main.command()
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--column", default="f_gap", show_default=True)
@click.option("--kmin", type=float, help="Window start (default: first row).")
@click.option("--kmax", type=float, help="Window end (default: last row).")
def fit(csv_path, column, kmin, kmax):
    """Fit log(column) = a + slope * log(k) on a trajectory CSV."""
    ks, ys = [], []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if column not in (reader.fieldnames or []):
            raise click.UsageError(f"column {column!r} not in {reader.fieldnames}")
        for row in reader:
            if row[column] == "" or int(row["k"]) == 0:
                continue
            ks.append(float(row["k"]))
            ys.append(float(row[column]))
    if not ks:
        raise click.ClickException(f"no usable rows for column {column!r}")
    window = (kmin if kmin is not None else min(ks), kmax if kmax is not None else max(ks))
    try:
        result = fit_rate(ks, ys, window)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    _emit(result.to_dict(), None)


@main.command()
@click.option("--problem", required=True, help="Problem JSON file or fixture name (m <= 5).")
def oracle(problem):
    """Print mu*, M_Gamma and v(sigma) for every order."""
    try:
        _emit(oracle_report(load_problem(problem)), None)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc


if __name__ == "__main__":
    main()
