"""
Command-line interface: preprocess a log, run the experiment pipeline,
emit plot-ready report tables and suggest a truncation length.
"""

import json
import logging
import os
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
import typer

from stabilis import __version__
from stabilis.errors import StabilisError
from stabilis.event_log import (
    LabelingRule,
    LogSchema,
    apply_labeling,
    derive_features,
    filter_incomplete_cases,
    read_csv_log,
    read_prepared_log,
    write_csv_log,
)
from stabilis.experiment import (
    RunSettings,
    figure_frames,
    preprocess,
    report_frames,
    resolve_truncation,
    run_approach,
    save_approach,
)
from stabilis.utils import apply_overrides, normalize_run_config
from stabilis.validator import count_errors, validate_run_config

app = typer.Typer(help="Accuracy and temporal stability of outcome-oriented predictive process monitoring.")

PREPARED_FILE = 'prepared.csv'
STATS_FILE = 'dataset_stats.csv'
REPORT_FILE = 'report.csv'
SUMMARY_FILE = 'summary.csv'
MANIFEST_FILE = 'manifest.json'
FIGURES_DIR = 'figures'


@app.callback()
def main(
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Logging level (default: $STABILIS_LOG_LEVEL or WARNING)"),
):
    level = (log_level or os.environ.get('STABILIS_LOG_LEVEL') or 'WARNING').upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        force=True,
    )


def _print_summary(title: str, lines: Dict[str, Any], error_counts: Optional[Dict[str, int]] = None):
    """Print human-readable summary to stdout."""
    typer.echo(f"\n{'=' * 60}")
    typer.echo(title)
    typer.echo(f"{'=' * 60}")
    for key, value in lines.items():
        typer.echo(f"{key}: {value}")
    if error_counts:
        typer.echo("\nTop 3 error types:")
        for error_type, count in sorted(error_counts.items(), key=lambda x: x[1], reverse=True)[:3]:
            typer.echo(f"  {error_type}: {count}")
    typer.echo(f"{'=' * 60}\n")


def _load_config(config_path: Optional[str], overrides: Dict[str, Any], command: str) -> Dict[str, Any]:
    raw: Dict[str, Any] = {}
    if config_path:
        path = Path(config_path)
        if not path.exists():
            typer.echo(f"Error: Config file '{config_path}' does not exist", err=True)
            raise typer.Exit(code=1)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                raw = json.load(f)
        except json.JSONDecodeError as e:
            typer.echo(f"Error: Invalid JSON in '{config_path}': {e}", err=True)
            raise typer.Exit(code=1)
        if not isinstance(raw, dict):
            typer.echo("Error: Config JSON must be an object", err=True)
            raise typer.Exit(code=1)

    config = apply_overrides(normalize_run_config(raw), overrides)
    result = validate_run_config(config, command, check_paths=command in ('prep', 'suggest-truncation'))
    if not result['is_valid']:
        _print_summary("Invalid configuration", {'Errors': len(result['errors'])}, count_errors(result['errors']))
        typer.echo(f"Configuration rejected: {', '.join(result['errors'])}", err=True)
        raise typer.Exit(code=1)
    return config


def _fail(e: Exception):
    typer.echo(f"Error: {e}", err=True)
    raise typer.Exit(code=1)


def _write_json(path: Path, data: Any):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, ensure_ascii=False, default=str)


@app.command()
def prep(
    config: str = typer.Option(..., "--config", help="Run config JSON file"),
    output_dir: Optional[str] = typer.Option(None, "--output-dir", help="Directory for prepared outputs"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Top-level random seed"),
):
    """
    Derive features, label, truncate and fill a raw CSV log; write the
    prepared log and the dataset statistics table.
    """
    cfg = _load_config(config, {'output_dir': output_dir, 'seed': seed}, 'prep')
    out = Path(cfg['output_dir'])
    try:
        schema = LogSchema.from_dict(cfg['schema'])
        rule = LabelingRule.from_dict(cfg['labeling'])
        log = read_csv_log(cfg['log_path'], schema)
        prepared, stats = preprocess(log, rule, RunSettings.from_config(cfg))
    except StabilisError as e:
        _fail(e)

    write_csv_log(prepared, out / PREPARED_FILE)
    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([stats.as_row()]).to_csv(out / STATS_FILE, index=False)
    _print_summary("Dataset statistics", stats.as_row())
    typer.echo(f"Prepared log written to: {out / PREPARED_FILE}")


@app.command()
def run(
    config: str = typer.Option(..., "--config", help="Run config JSON file"),
    approach: Optional[str] = typer.Option(None, "--approach", help="Approach name(s), comma-separated"),
    strategy: Optional[str] = typer.Option(None, "--strategy", help="auc_1run, auc_5run or combined_5run"),
    alpha_grid: Optional[str] = typer.Option(None, "--alpha-grid", help="Smoothing alphas, comma-separated"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Top-level random seed"),
    jobs: Optional[int] = typer.Option(None, "--jobs", help="Worker threads for the search"),
    rare_level_unit: Optional[str] = typer.Option(None, "--rare-level-unit", help="case or event"),
    output_dir: Optional[str] = typer.Option(None, "--output-dir", help="Directory holding prepared.csv"),
    long_cases_only: bool = typer.Option(False, "--long-cases-only", help="Add a report slice restricted to long cases"),
):
    """
    Search, train, calibrate and evaluate each requested approach on the
    prepared log.
    """
    overrides = {
        'approaches': approach,
        'strategy': strategy,
        'alpha_grid': alpha_grid,
        'seed': seed,
        'jobs': jobs,
        'rare_level_unit': rare_level_unit,
        'output_dir': output_dir,
        'long_cases_only': True if long_cases_only else None,
    }
    cfg = _load_config(config, overrides, 'run')
    out = Path(cfg['output_dir'])
    settings = RunSettings.from_config(cfg)

    manifest: Dict[str, Any] = {
        'version': __version__,
        'seed': settings.seed,
        'strategy': settings.strategy,
        'alpha_grid': list(settings.alpha_grid),
        'status': 'running',
        'approaches': [],
    }
    if not (out / PREPARED_FILE).exists():
        typer.echo(f"Error: '{out / PREPARED_FILE}' not found; run `prep` first", err=True)
        raise typer.Exit(code=1)
    try:
        prepared = read_prepared_log(out / PREPARED_FILE, LogSchema.from_dict(cfg['schema']))
    except StabilisError as e:
        _fail(e)

    results = []
    for name in cfg['approaches']:
        fragment: Dict[str, Any] = {}
        manifest['approaches'].append(fragment)
        typer.echo(f"Running {name}...")
        try:
            result = run_approach(prepared, name, settings, fragment)
        except StabilisError as e:
            fragment['failed'] = str(e)
            manifest['status'] = 'failed'
            _write_json(out / MANIFEST_FILE, manifest)
            _fail(e)
        save_approach(result.trained, out / 'models' / f"{name}.json")
        results.append(result)

    report, summary = report_frames(results)
    report.to_csv(out / REPORT_FILE, index=False)
    summary.to_csv(out / SUMMARY_FILE, index=False)
    manifest['status'] = 'complete'
    _write_json(out / MANIFEST_FILE, manifest)

    raw = summary[(summary['alpha'] == 'none') & (summary['slice'] == 'all')]
    _print_summary("Run summary", {
        row['approach']: f"AUC {row['overall_auc']:.4f}, TS {row['temporal_stability']:.4f}"
        for _, row in raw.iterrows()
    })
    typer.echo(f"Reports written to: {out}")


@app.command()
def report(
    output_dir: Optional[str] = typer.Option(None, "--output-dir", help="Directory holding report.csv and summary.csv"),
    config: Optional[str] = typer.Option(None, "--config", help="Run config JSON file"),
):
    """
    Turn run reports into plot-ready tables: AUC vs prefix length, TS vs
    alpha, AUC vs alpha and TS vs AUC.
    """
    cfg = _load_config(config, {'output_dir': output_dir}, 'report')
    out = Path(cfg['output_dir'])
    paths = [out / REPORT_FILE, out / SUMMARY_FILE]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        typer.echo(f"Error: No reports found ({', '.join(missing)}); run `run` first", err=True)
        raise typer.Exit(code=1)

    report_table = pd.read_csv(paths[0], dtype={'alpha': str})
    summary_table = pd.read_csv(paths[1], dtype={'alpha': str})
    if summary_table.empty:
        typer.echo(f"Error: '{paths[1]}' holds no rows", err=True)
        raise typer.Exit(code=1)

    written: List[str] = []
    for name, frame in figure_frames(report_table, summary_table).items():
        path = out / FIGURES_DIR / f"{name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        written.append(str(path))
    _print_summary("Figure tables", {'Files': len(written)})
    for path in written:
        typer.echo(path)


@app.command("suggest-truncation")
def suggest_truncation_cmd(
    config: str = typer.Option(..., "--config", help="Run config JSON file"),
):
    """
    Print the length by which 90% of minority-class cases in the temporal
    training part have completed.
    """
    cfg = _load_config(config, {}, 'suggest-truncation')
    settings = RunSettings.from_config(cfg)
    try:
        schema = LogSchema.from_dict(cfg['schema'])
        log = read_csv_log(cfg['log_path'], schema)
        log = filter_incomplete_cases(derive_features(log), settings.end_activities)
        labeled = apply_labeling(log, LabelingRule.from_dict(cfg['labeling']))
        length = resolve_truncation(labeled, replace(settings, truncation='auto'))
    except StabilisError as e:
        _fail(e)
    typer.echo(str(length))


if __name__ == "__main__":
    app()
