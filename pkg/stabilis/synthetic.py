"""
Synthetic event log generators used in place of the public benchmark logs.
"""

from datetime import datetime, timedelta
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from stabilis.event_log import LabelingRule, LogSchema

BASE_TIME = datetime(2023, 1, 2, 8, 0, 0)


def _schedule(rng: np.random.Generator, n_cases: int, case_gap_minutes: int) -> List[datetime]:
    return [
        BASE_TIME + timedelta(minutes=i * case_gap_minutes, seconds=int(rng.integers(0, 600)))
        for i in range(n_cases)
    ]


def signal_frame(
    n_cases: int = 2000,
    min_len: int = 8,
    max_len: int = 15,
    signal_event: int = 5,
    noise: float = 0.05,
    seed: int = 22,
    reading_shift: Optional[float] = None,
) -> Tuple[pd.DataFrame, LogSchema, LabelingRule]:
    """
    Log whose outcome is revealed at event `signal_event`.

    Events before the signal carry no information about the outcome. By
    default the signal is the activity ('Check passed' / 'Check failed'),
    which agrees with the outcome except for a `noise` share of cases.

    With `reading_shift` the signal event is a plain 'Check' and the outcome
    shows through a numeric `reading` carried by that event and every later
    one: each case draws a level from N(+shift, 1) or N(-shift, 1) by its
    (noisy) signal, and each reading adds N(0, 1) noise to the level. The
    evidence keeps moving after the signal, so predictions do too. Readings
    come from their own random stream; the remaining columns match the
    default log for the same seed.

    Also carries a resource with rare levels, a sparsely present numeric
    amount and a case-level channel.

    Returns:
        (frame, schema, rule) ready for `log_from_frame` / `apply_labeling`.
    """
    rng = np.random.default_rng(seed)
    reading_rng = np.random.default_rng([seed, 1])
    starts = _schedule(rng, n_cases, case_gap_minutes=30)
    rows = []
    for i in range(n_cases):
        case_id = f"case_{i:05d}"
        outcome = int(rng.random() < 0.5)
        signal = outcome if rng.random() >= noise else 1 - outcome
        channel = str(rng.choice(['web', 'phone', 'branch']))
        length = int(rng.integers(min_len, max_len + 1))
        level = None
        if reading_shift is not None:
            level = reading_rng.normal(reading_shift if signal else -reading_shift, 1.0)
        ts = starts[i]
        for position in range(1, length + 1):
            if position < signal_event:
                activity = str(rng.choice(['Register', 'Review', 'Request info', 'Update']))
            elif position == signal_event:
                if level is not None:
                    activity = 'Check'
                else:
                    activity = 'Check passed' if signal else 'Check failed'
            else:
                activity = str(rng.choice(['Process', 'Notify', 'Archive']))
            if rng.random() < 0.01:
                resource = f"temp_{i}_{position}"
            else:
                resource = f"clerk_{int(rng.integers(0, 8))}"
            amount = f"{rng.normal(100.0, 20.0):.2f}" if rng.random() < 0.4 else ''
            row = {
                'case': case_id,
                'activity': activity,
                'timestamp': ts.isoformat(),
                'resource': resource,
                'amount': amount,
                'channel': channel,
                'outcome': 'pos' if outcome else 'neg',
            }
            if level is not None:
                row['reading'] = f"{level + reading_rng.normal(0.0, 1.0):.4f}" if position >= signal_event else ''
            rows.append(row)
            ts = ts + timedelta(seconds=int(rng.integers(60, 7200)))

    columns = {
        'resource': 'categorical',
        'amount': 'numeric',
        'channel': 'case_categorical',
        'outcome': 'label',
    }
    if reading_shift is not None:
        columns['reading'] = 'numeric'
    schema = LogSchema(case_id='case', activity='activity', timestamp='timestamp', columns=columns)
    rule = LabelingRule(kind='external_column', attribute='outcome', values=('pos',))
    return pd.DataFrame(rows), schema, rule


def _lengths_with_total(rng: np.random.Generator, n: int, total: int, low: int, high: int) -> np.ndarray:
    lengths = rng.integers(low, high + 1, size=n)
    diff = total - int(lengths.sum())
    step = 1 if diff > 0 else -1
    i = 0
    while diff != 0:
        j = i % n
        if step > 0 or lengths[j] > low:
            lengths[j] += step
            diff -= step
        i += 1
    return lengths


def production_like_frame(seed: int = 22) -> Tuple[pd.DataFrame, LogSchema, LabelingRule]:
    """
    Manufacturing-shaped log: 220 traces and 2275 events after labeling.

    Positive cases end with an operation whose rejected count becomes
    larger than zero; the rule cuts the trace right before it.
    """
    n_cases, n_events = 220, 2275
    rng = np.random.default_rng(seed)
    lengths = _lengths_with_total(rng, n_cases, n_events, low=2, high=18)
    starts = _schedule(rng, n_cases, case_gap_minutes=240)
    operations = ['Turning', 'Milling', 'Grinding', 'Lapping', 'Inspection', 'Packing']

    rows = []
    for i in range(n_cases):
        case_id = f"item_{i:04d}"
        positive = rng.random() < 0.53
        part = str(rng.choice(['bracket', 'shaft', 'housing']))
        ts = starts[i]
        steps = int(lengths[i]) + (1 if positive else 0)
        for position in range(steps):
            rejecting = positive and position == steps - 1
            rows.append({
                'case': case_id,
                'activity': str(rng.choice(operations)),
                'timestamp': ts.isoformat(),
                'worker': f"w{int(rng.integers(0, 12))}",
                'qty_completed': str(int(rng.integers(1, 50))),
                'rejected': str(int(rng.integers(1, 4))) if rejecting else ('0' if rng.random() < 0.8 else ''),
                'part': part,
            })
            ts = ts + timedelta(minutes=int(rng.integers(5, 180)))

    schema = LogSchema(
        case_id='case',
        activity='activity',
        timestamp='timestamp',
        columns={
            'worker': 'categorical',
            'qty_completed': 'numeric',
            'rejected': 'numeric',
            'part': 'case_categorical',
        },
    )
    rule = LabelingRule(kind='attribute_exists', attribute='rejected', greater_than=0.0, cut='before_match')
    return pd.DataFrame(rows), schema, rule
