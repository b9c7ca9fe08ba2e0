import json

import pandas as pd
from typer.testing import CliRunner

from stabilis import synthetic
from stabilis.cli import app

from conftest import SMALL_SPACE

runner = CliRunner()


def _setup(tmp_path, drop=None, **extra):
    frame, schema, _ = synthetic.signal_frame(n_cases=80, min_len=4, max_len=6, signal_event=2, seed=5)
    if drop:
        frame = frame.drop(columns=[drop])
    log_path = tmp_path / 'events.csv'
    frame.to_csv(log_path, index=False)
    config = {
        'log': str(log_path),
        'output': str(tmp_path / 'out'),
        'schema': schema.to_dict(),
        'labeling': {'kind': 'external_column', 'attribute': 'outcome', 'values': ['pos']},
        'approaches': ['RF_agg'],
        'alpha_grid': [0.5, 0.9],
        'n_iter': 1,
        'interrun_runs': 0,
        'search_space': SMALL_SPACE,
    }
    config.update(extra)
    config_path = tmp_path / 'config.json'
    config_path.write_text(json.dumps(config), encoding='utf-8')
    return config_path, tmp_path / 'out'


def test_prep_run_report(tmp_path):
    config_path, out = _setup(tmp_path)

    result = runner.invoke(app, ['prep', '--config', str(config_path)])
    assert result.exit_code == 0, result.output
    stats = pd.read_csv(out / 'dataset_stats.csv')
    assert list(stats.columns) == ['# traces', 'pos class ratio', 'med length', 'max length', 'trunc length', '# events']
    assert stats['# traces'][0] == 80

    result = runner.invoke(app, ['run', '--config', str(config_path), '--seed', '3'])
    assert result.exit_code == 0, result.output
    manifest = json.loads((out / 'manifest.json').read_text(encoding='utf-8'))
    assert manifest['status'] == 'complete'
    assert manifest['seed'] == 3
    assert manifest['approaches'][0]['approach'] == 'RF_agg'
    assert (out / 'models' / 'RF_agg.json').exists()
    summary = pd.read_csv(out / 'summary.csv', dtype={'alpha': str})
    assert sorted(summary['alpha']) == ['0.5', '0.9', 'none']

    result = runner.invoke(app, ['report', '--output-dir', str(out)])
    assert result.exit_code == 0, result.output
    for name in ('auc_vs_prefix', 'ts_vs_alpha', 'auc_vs_alpha', 'ts_vs_auc'):
        assert (out / 'figures' / f"{name}.csv").exists()


def test_prep_is_repeatable(tmp_path):
    config_path, out = _setup(tmp_path)
    runner.invoke(app, ['prep', '--config', str(config_path)])
    first = (out / 'prepared.csv').read_bytes()
    runner.invoke(app, ['prep', '--config', str(config_path)])
    assert (out / 'prepared.csv').read_bytes() == first


def test_missing_timestamp_column(tmp_path):
    config_path, _ = _setup(tmp_path, drop='timestamp')
    result = runner.invoke(app, ['prep', '--config', str(config_path)])
    assert result.exit_code != 0
    assert 'timestamp' in result.output


def test_invalid_config_rejected(tmp_path):
    config_path, _ = _setup(tmp_path, strategy='best_guess')
    result = runner.invoke(app, ['prep', '--config', str(config_path)])
    assert result.exit_code == 1
    assert 'invalid_value:strategy' in result.output


def test_run_requires_prep(tmp_path):
    config_path, _ = _setup(tmp_path)
    result = runner.invoke(app, ['run', '--config', str(config_path)])
    assert result.exit_code == 1
    assert 'prep' in result.output


def test_report_without_reports(tmp_path):
    result = runner.invoke(app, ['report', '--output-dir', str(tmp_path / 'empty')])
    assert result.exit_code == 1


def test_suggest_truncation(tmp_path):
    config_path, _ = _setup(tmp_path)
    result = runner.invoke(app, ['suggest-truncation', '--config', str(config_path)])
    assert result.exit_code == 0, result.output
    assert 4 <= int(result.output.strip().splitlines()[-1]) <= 6
