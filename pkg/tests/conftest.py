from datetime import datetime, timedelta

import pytest

from stabilis import event_log, experiment, synthetic
from stabilis.event_log import Event, EventLog, LogSchema, Trace

T0 = datetime(2024, 1, 1, 9, 0, 0)

PLAIN_SCHEMA = LogSchema(case_id='case', activity='activity', timestamp='timestamp')

# Keeps search runs small enough for the default test run.
SMALL_SPACE = {
    'rf': {'n_estimators': {'kind': 'uniform_int', 'low': 8, 'high': 12}},
    'gbt': {
        'n_estimators': {'kind': 'uniform_int', 'low': 10, 'high': 15},
        'max_depth': {'kind': 'uniform_int', 'low': 2, 'high': 3},
        'learning_rate': {'kind': 'uniform', 'low': 0.2, 'high': 0.3},
    },
}


def make_trace(case_id, n_events, outcome=None, start=T0, step_minutes=10):
    events = [
        Event(case_id, f"act_{i % 3}", start + timedelta(minutes=i * step_minutes), {}, i)
        for i in range(n_events)
    ]
    return Trace(case_id, events, {}, outcome)


def make_log(traces, schema=PLAIN_SCHEMA):
    return EventLog(traces=list(traces), schema=schema)


@pytest.fixture
def small_settings():
    return experiment.RunSettings(
        n_iter=2,
        truncation='none',
        interrun_runs=0,
        alpha_grid=(0.0, 0.5, 0.9),
        search_space=SMALL_SPACE,
    )


@pytest.fixture(scope='session')
def signal_log():
    """Prepared 200-case log whose outcome shows at event 4."""
    frame, schema, rule = synthetic.signal_frame(n_cases=200, min_len=6, max_len=10, signal_event=4, seed=7)
    prepared, _ = experiment.preprocess(
        event_log.log_from_frame(frame, schema), rule, experiment.RunSettings(truncation='none'),
    )
    return prepared
