"""
End-to-end runs on the full 2000-case signal log (outcome shows at event 5,
cases of 8-15 events). Each approach is trained once per module and shared
by the checks below.
"""

import numpy as np
import pytest

from stabilis import event_log, experiment, synthetic
from stabilis.experiment import APPROACHES

SIGNAL_EVENT = 5

SPACE = {
    'rf': {
        'n_estimators': {'kind': 'uniform_int', 'low': 40, 'high': 40},
        'max_features': {'kind': 'uniform', 'low': 0.3, 'high': 0.5},
    },
    'gbt': {
        'n_estimators': {'kind': 'uniform_int', 'low': 60, 'high': 60},
        'learning_rate': {'kind': 'uniform', 'low': 0.07, 'high': 0.07},
        'max_depth': {'kind': 'uniform_int', 'low': 3, 'high': 3},
        'subsample': {'kind': 'uniform', 'low': 0.8, 'high': 0.8},
        'colsample_bytree': {'kind': 'uniform', 'low': 0.8, 'high': 0.8},
    },
}

SETTINGS = experiment.RunSettings(
    n_iter=1,
    truncation='none',
    interrun_runs=0,
    alpha_grid=(0.5, 0.9),
    search_space=SPACE,
)

pytestmark = pytest.mark.slow


@pytest.fixture(scope='module')
def full_log():
    frame, schema, rule = synthetic.signal_frame(n_cases=2000, min_len=8, max_len=15, signal_event=SIGNAL_EVENT, noise=0.0, reading_shift=1.3)
    prepared, _ = experiment.preprocess(event_log.log_from_frame(frame, schema), rule, experiment.RunSettings(truncation='none'))
    return prepared


@pytest.fixture(scope='module')
def run_once(full_log):
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = experiment.run_approach(full_log, name, SETTINGS)
        return cache[name]

    return get


def _mean_auc(report, keep):
    return float(np.mean([value for length, value in report.auc_by_prefix_len.items() if keep(length)]))


@pytest.mark.parametrize('name', sorted(APPROACHES))
def test_accuracy_after_the_signal(run_once, name):
    raw = run_once(name).evaluation.reports[None]
    informed = _mean_auc(raw, lambda t: t >= SIGNAL_EVENT)
    blind = _mean_auc(raw, lambda t: t < SIGNAL_EVENT)
    assert informed >= 0.85
    assert informed - blind >= 0.2


def test_single_classifier_steadier_than_multiclassifier(run_once):
    single = run_once('XGB_agg').evaluation.reports[None]
    multi = run_once('XGB_idx_mul').evaluation.reports[None]
    assert single.temporal_stability > multi.temporal_stability


def test_smoothing_helps_multiclassifier(run_once):
    reports = run_once('XGB_idx_mul').evaluation.reports
    raw, smoothed = reports[None], reports[0.9]
    assert smoothed.temporal_stability - raw.temporal_stability >= 0.05
    assert raw.overall_auc - smoothed.overall_auc <= 0.05
