"""Command-line pipeline: audit scores, scenario simulation, CEM-vs-KNN
comparison, and plot data export. Every run writes a provenance JSON
sufficient to reproduce it."""
from __future__ import annotations

import json
import os
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import __version__
from .data import Schema, load_csv, split, positive_rate
from .group_metrics import parity_report
from .cem import CoarseningSpec, repeated_cem
from .knn import KIND_DELTA_PRIME, score_all_knn
from .scenario import (INJECTION_GRID, ScenarioConfig, add_correlated_variable,
                       inject_discrimination, remove_discrimination)
from .tree import TreeParams, fit_tree
from .evaluation import DEFAULT_THRESHOLDS, compare_cem_knn, qq_data, scatter_pairs


def _out_dir(out):
    out = os.environ.get("CEMAUDIT_OUT", out)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(data, schema_path, sep=","):
    schema = Schema.from_json(schema_path)
    return load_csv(data, schema, sep=sep), schema


def _provenance(path, command, params):
    record = {"tool": "cemaudit", "version": __version__,
              "command": command, "params": params}
    with open(path / "provenance.json", "w") as fh:
        json.dump(record, fh, indent=2)


def _merge_config(ctx_config, **flags):
    """Flag value wins when given; otherwise the config file value; otherwise
    the declared default (already baked into the flag)."""
    merged = dict(ctx_config)
    for name, value in flags.items():
        if value is not None:
            merged[name] = value
    return merged


@click.group()
@click.option("--config", type=click.Path(exists=True), default=None,
              help="JSON config file; flags override its values.")
@click.pass_context
def main(ctx, config):
    """Individual discrimination auditing via sequential CEM and Gower k-NN."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = {}
    if config:
        with open(config) as fh:
            ctx.obj["config"] = json.load(fh)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True)
@click.option("--seed", type=int, default=None)
@click.option("--k", type=int, default=None, help="neighbour count (default 32)")
@click.option("--reps", type=int, default=None, help="CEM repetitions (default 100)")
@click.option("--bins", type=int, default=None,
              help="equal-width bin count per numeric variable (default Sturges)")
@click.pass_context
def audit(ctx, data, schema_path, out, seed, k, reps, bins):
    """Compute CEM and KNN discrimination scores plus a parity report."""
    cfg = _merge_config(ctx.obj["config"], seed=seed, k=k, reps=reps, bins=bins)
    seed = int(cfg.get("seed", 0))
    k = int(cfg.get("k", 32))
    reps = int(cfg.get("reps", 100))
    bins = cfg.get("bins")
    ds, schema = _load(data, schema_path)
    if not schema.features:
        raise click.UsageError("schema declares no feature attributes")
    path = _out_dir(out)
    spec = CoarseningSpec(default_bins=bins)

    cem = repeated_cem(ds, spec, repetitions=reps, seed=seed)
    cem.to_csv(path / "cem_scores.csv")
    cem.save_metadata(path / "cem_metadata.json")

    knn = score_all_knn(ds, k=k, kind=KIND_DELTA_PRIME)
    knn.to_csv(path / "knn_scores.csv")
    knn.save_metadata(path / "knn_metadata.json")

    parity_report(ds).to_json(path / "parity.json")
    _provenance(path, "audit", {
        "data": str(data), "schema": str(schema_path), "seed": seed,
        "k": k, "reps": reps, "bins": bins, "n": ds.n,
        "positive_rate": positive_rate(ds),
    })
    click.echo(f"audit written to {path}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True)
@click.option("--strategy", required=True,
              type=click.Choice(["a", "b", "c", "d", "inject", "add-z"]))
@click.option("--seed", type=int, default=0)
@click.option("--v1", type=float, default=0.0)
@click.option("--v2", type=float, default=0.0)
@click.option("--rho", type=float, default=0.5)
@click.option("--quantile-window", default="0.25,0.75",
              help="probability window for strategy c")
def simulate(data, schema_path, out, strategy, seed, v1, v2, rho, quantile_window):
    """Produce a bias-removed, bias-injected, or Z-augmented dataset."""
    ds, _ = _load(data, schema_path)
    path = _out_dir(out)
    window = tuple(float(x) for x in quantile_window.split(","))
    counts_changed = None
    if strategy == "add-z":
        result = add_correlated_variable(ds, rho, seed)
    else:
        prune_mode = "none" if strategy == "b" else "cv"
        tree = fit_tree(ds, TreeParams(prune_mode=prune_mode, seed=seed))
        if strategy == "inject":
            result = inject_discrimination(ds, v1, v2, tree, seed)
            counts_changed = int((result.y != ds.y).sum())
        else:
            result = remove_discrimination(ds, strategy, tree, seed, window)
            changed = (result.y != ds.y).sum() + (result.s != ds.s).sum()
            counts_changed = int(changed)
    result.to_csv(path / "scenario.csv")
    cfg = ScenarioConfig(
        kind="add_z" if strategy == "add-z" else
             ("inject" if strategy == "inject" else f"remove_{strategy}"),
        v1=v1, v2=v2, quantile_window=window, rho=rho, seed=seed)
    _provenance(path, "simulate", {
        "data": str(data), "schema": str(schema_path),
        "scenario": cfg.to_dict(), "counts_changed": counts_changed,
    })
    click.echo(f"scenario written to {path}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True)
@click.option("--seed", type=int, default=None)
@click.option("--k", type=int, default=None)
@click.option("--reps", type=int, default=None, help="CEM repetitions per scoring run")
@click.option("--workers", type=int, default=None)
@click.option("--train-fraction", type=float, default=None)
@click.option("--qd-list", default=None, help="comma list of repair percentiles")
@click.option("--scenario-reps", type=int, default=None)
@click.option("--svg", is_flag=True, help="also render ratio panels as SVG")
@click.pass_context
def compare(ctx, data, schema_path, out, seed, k, reps, workers,
            train_fraction, qd_list, scenario_reps, svg):
    """Run the injection/repair grid and report CEM/KNN rate ratios."""
    cfg = _merge_config(ctx.obj["config"], seed=seed, k=k, reps=reps,
                        workers=workers, train_fraction=train_fraction,
                        qd_list=qd_list, scenario_reps=scenario_reps)
    seed = int(cfg.get("seed", 0))
    k = int(cfg.get("k", 32))
    reps = int(cfg.get("reps", 100))
    workers = int(cfg.get("workers", 1))
    train_fraction = float(cfg.get("train_fraction", 2 / 3))
    scenario_reps = int(cfg.get("scenario_reps", 20))
    qd_raw = cfg.get("qd_list")
    thresholds = (tuple(float(x) for x in str(qd_raw).split(","))
                  if qd_raw else DEFAULT_THRESHOLDS)

    ds, _ = _load(data, schema_path)
    pair = split(ds, train_fraction, seed)
    report = compare_cem_knn(pair, INJECTION_GRID, thresholds,
                             m_scenarios=scenario_reps, seed=seed, k=k,
                             cem_reps=reps, workers=workers)
    path = _out_dir(out)
    report.to_csv(path / "report.csv")
    report.to_json(path / "report.json")
    if svg:
        from .plots import ratio_panels
        ratio_panels(report, path / "ratios.svg")
    _provenance(path, "compare", {
        "data": str(data), "schema": str(schema_path), "seed": seed,
        "k": k, "reps": reps, "workers": workers,
        "train_fraction": train_fraction,
        "thresholds": list(thresholds), "scenario_reps": scenario_reps,
    })
    click.echo(f"report written to {path}")


@main.command("plot-data")
@click.option("--scores-a", required=True, type=click.Path(exists=True),
              help="score CSV (unit, score[, defined])")
@click.option("--scores-b", required=True, type=click.Path(exists=True))
@click.option("--out", required=True)
@click.option("--grid-size", type=int, default=100)
@click.option("--svg", is_flag=True)
def plot_data(scores_a, scores_b, out, grid_size, svg):
    """Export QQ and scatter comparison data for two score vectors."""
    a = pd.read_csv(scores_a)["score"].to_numpy(float)
    b = pd.read_csv(scores_b)["score"].to_numpy(float)
    path = _out_dir(out)
    qq = qq_data(a, b, grid_size)
    qq.to_frame().to_csv(path / "qq.csv", index=False)
    if len(a) == len(b):
        sc = scatter_pairs(a, b)
        sc.to_frame().to_csv(path / "scatter.csv", index=False)
    else:
        sc = None
    if svg:
        from .plots import qq_panel, scatter_panel
        qq_panel(qq, path / "qq.svg")
        if sc is not None:
            scatter_panel(sc, path / "scatter.svg")
    _provenance(path, "plot-data", {
        "scores_a": str(scores_a), "scores_b": str(scores_b),
        "grid_size": grid_size,
    })
    click.echo(f"plot data written to {path}")


if __name__ == "__main__":
    main()
